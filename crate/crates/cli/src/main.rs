//! Command-line harness: scene generation, depth-frame fusion, scene
//! alignment, evaluation, runtime benchmarks, and a Procrustes solver
//! check.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanfit::correspondence::{ObjectCrop, TranslationMode};
use scanfit::eval::{
    align_scene, build_library_store, evaluate, run_bench, AlignOptions, AlignmentResult,
};
use scanfit::exec::ExecMode;
use scanfit::io::vxg;
use scanfit::procrustes::{rotation_gradient, solve_rotation, CorrespondenceSet};
use scanfit::retrieval::DescriptorStore;
use scanfit::synth::{
    default_library, generate_scene_with_frames, load_scene, read_manifest, save_scene,
    write_manifest, ManifestEntry, SceneRecord, SceneSpec, ShapeDef,
};
use scanfit::tsdf::{integrate_frame, tsdf_grid, CameraSpec, DepthFrame};

#[derive(Parser)]
#[command(
    name = "scanfit",
    version,
    about = "Scan-to-CAD alignment engine: synthetic scenes, TSDF fusion, Procrustes alignment, retrieval, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes with ground truth into a dataset directory.
    GenScenes(GenScenesArgs),
    /// Fuse depth frames (camera JSON + raw depth) into a TSDF volume.
    Fuse(FuseArgs),
    /// Align the objects of generated scenes and write results JSON.
    Align(AlignArgs),
    /// Score alignment results against ground truth.
    Eval(EvalArgs),
    /// Time the alignment math on reference scene sizes.
    Bench(BenchArgs),
    /// Solve one correspondence file and verify the rotation gradient.
    ProcrustesCheck(ProcrustesCheckArgs),
    /// Build a descriptor store from a shape library.
    BuildStore(BuildStoreArgs),
}

#[derive(Args)]
struct GenScenesArgs {
    /// Scene spec JSON; defaults apply for missing fields or the whole file.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Number of scenes (seeds seed, seed+1, ...).
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Base seed; overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the rendered depth frames of each scene.
    #[arg(long)]
    emit_frames: bool,
}

#[derive(Args)]
struct FuseArgs {
    /// Directory of frame_XXX.json (camera) + frame_XXX.depth (raw f32 LE).
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.03)]
    voxel_size: f64,
    #[arg(long, default_value_t = 0.15)]
    trunc: f64,
}

#[derive(Args)]
struct AlignArgs {
    /// A scene directory (gt.json) or a dataset directory (manifest.json).
    #[arg(long)]
    scene: PathBuf,
    /// Descriptor store directory.
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Retrieval pool: the scene's CAD set, the object's category, or the
    /// whole store.
    #[arg(long, default_value = "scene", value_parser = ["scene", "category", "none"])]
    pool: String,
    /// Translation source: masked-centroid matching or the detected center.
    #[arg(long, default_value = "centroid", value_parser = ["centroid", "center"])]
    translation: String,
    /// Force the sequential path.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    /// Ground-truth scene or dataset directory.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated subset of small,medium,large.
    #[arg(long, default_value = "small,medium,large")]
    sizes: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct ProcrustesCheckArgs {
    /// JSON file: {"p_cad": [[x,y,z],...], "p_scan": [...], "weights": [...]?}
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BuildStoreArgs {
    #[arg(long)]
    out: PathBuf,
    /// Shape library JSON (array of shape definitions); built-in when absent.
    #[arg(long)]
    library: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<scanfit::Error> for CliError {
    fn from(e: scanfit::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    return ExitCode::SUCCESS;
                }
                _ => 1,
            };
            eprint!("{e}");
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::GenScenes(a) => gen_scenes(a),
        Command::Fuse(a) => fuse(a),
        Command::Align(a) => align(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::ProcrustesCheck(a) => procrustes_check(a),
        Command::BuildStore(a) => build_store(a),
    }
}

fn gen_scenes(args: GenScenesArgs) -> CliResult {
    let mut spec: SceneSpec = match &args.spec {
        Some(path) => serde_json::from_reader(fs::File::open(path)?)?,
        None => SceneSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if args.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    fs::create_dir_all(&args.out)?;
    let base_seed = spec.seed;
    let mut entries = Vec::new();
    for i in 0..args.count {
        let mut s = spec.clone();
        s.seed = base_seed + i;
        let (gt, frames) = generate_scene_with_frames(&s)?;
        let dir_name = gt.scene_id.clone();
        let dir = args.out.join(&dir_name);
        save_scene(&gt, &dir)?;
        if args.emit_frames {
            write_frames(&dir.join("frames"), &frames)?;
        }
        println!(
            "{}: {} objects, scan {:?} voxels",
            gt.scene_id,
            gt.objects.len(),
            gt.scan.dims()
        );
        entries.push(ManifestEntry {
            scene_id: gt.scene_id,
            path: PathBuf::from(dir_name),
        });
    }
    write_manifest(&args.out, &entries)?;
    println!("wrote {} scene(s) to {}", entries.len(), args.out.display());
    Ok(())
}

fn write_frames(dir: &Path, frames: &[DepthFrame]) -> CliResult {
    fs::create_dir_all(dir)?;
    for (i, frame) in frames.iter().enumerate() {
        let stem = dir.join(format!("frame_{i:03}"));
        serde_json::to_writer_pretty(
            fs::File::create(stem.with_extension("json"))?,
            &frame.camera,
        )?;
        let mut w = std::io::BufWriter::new(fs::File::create(stem.with_extension("depth"))?);
        for d in &frame.depth {
            w.write_all(&d.to_le_bytes())?;
        }
        w.flush()?;
    }
    Ok(())
}

fn read_frames(dir: &Path) -> Result<Vec<DepthFrame>, CliError> {
    let mut stems: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(CliError::Data(format!(
            "no frame JSON files in {}",
            dir.display()
        )));
    }
    let mut frames = Vec::new();
    for json_path in stems {
        let camera: CameraSpec = serde_json::from_reader(fs::File::open(&json_path)?)?;
        let depth_path = json_path.with_extension("depth");
        let mut raw = Vec::new();
        fs::File::open(&depth_path)?.read_to_end(&mut raw)?;
        let expected = camera.width * camera.height * 4;
        if raw.len() != expected {
            return Err(CliError::Data(format!(
                "{}: {} bytes, expected {expected} for {}x{}",
                depth_path.display(),
                raw.len(),
                camera.width,
                camera.height
            )));
        }
        let depth: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        frames.push(DepthFrame::new(camera, depth)?);
    }
    Ok(frames)
}

fn fuse(args: FuseArgs) -> CliResult {
    if !(args.voxel_size > 0.0 && args.trunc > args.voxel_size) {
        return Err(CliError::Usage(
            "need voxel-size > 0 and trunc > voxel-size".into(),
        ));
    }
    let frames = read_frames(&args.frames)?;

    // Bounds from the unprojected depth samples, padded by the truncation.
    let mut lo = Vector3::from_element(f64::INFINITY);
    let mut hi = Vector3::from_element(f64::NEG_INFINITY);
    for frame in &frames {
        let cam = &frame.camera;
        let rot = cam.cam2world.rotation_matrix();
        for v in (0..cam.height).step_by(4) {
            for u in (0..cam.width).step_by(4) {
                let d = f64::from(frame.depth_at(u, v));
                if d <= 0.0 {
                    continue;
                }
                let p_cam = Vector3::new(
                    (u as f64 - cam.cx) / cam.fx * d,
                    (v as f64 - cam.cy) / cam.fy * d,
                    d,
                );
                let w = rot * p_cam + cam.cam2world.translation;
                lo = lo.inf(&w);
                hi = hi.sup(&w);
            }
        }
    }
    if !lo.x.is_finite() {
        return Err(CliError::Data("all depth frames are empty".into()));
    }
    let pad = args.trunc + args.voxel_size;
    lo -= Vector3::from_element(pad);
    hi += Vector3::from_element(pad);
    let mut dims = [0usize; 3];
    for k in 0..3 {
        dims[k] = (((hi[k] - lo[k]) / args.voxel_size) - 1e-9).ceil() as usize;
        if dims[k] > 1024 {
            return Err(CliError::Data(format!(
                "fused volume axis {k} needs {} voxels; raise --voxel-size",
                dims[k]
            )));
        }
    }
    let mut grid = tsdf_grid(
        dims,
        lo + Vector3::from_element(args.voxel_size / 2.0),
        args.voxel_size,
        args.trunc,
    )?;
    for frame in &frames {
        integrate_frame(&mut grid, frame, args.trunc)?;
    }
    vxg::write_grid(&args.out, &grid)?;
    let observed = grid.cells().iter().filter(|c| c.w > 0.0).count();
    println!(
        "fused {} frames into {:?} voxels ({} observed) -> {}",
        frames.len(),
        dims,
        observed,
        args.out.display()
    );
    Ok(())
}

fn scene_dirs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    if root.join("manifest.json").exists() {
        let manifest = read_manifest(root)?;
        Ok(manifest
            .scenes
            .iter()
            .map(|e| root.join(&e.path))
            .collect())
    } else if root.join("gt.json").exists() {
        Ok(vec![root.to_path_buf()])
    } else {
        Err(CliError::Data(format!(
            "{} holds neither manifest.json nor gt.json",
            root.display()
        )))
    }
}

fn align(args: AlignArgs) -> CliResult {
    let store = DescriptorStore::load(&args.store)?;
    let translation = match args.translation.as_str() {
        "centroid" => TranslationMode::CentroidMatch,
        _ => TranslationMode::DetectedCenter,
    };
    let exec = if args.serial {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };
    let mut results = Vec::new();
    for dir in scene_dirs(&args.scene)? {
        let gt = load_scene(&dir)?;
        let crops: Vec<ObjectCrop> = gt.objects.iter().map(|o| o.crop.clone()).collect();
        let mut opts = AlignOptions {
            exec,
            translation,
            ..AlignOptions::default()
        };
        match args.pool.as_str() {
            "scene" => opts.scene_pool = Some(gt.cad_pool()),
            "category" => {
                let pools: BTreeMap<String, Vec<String>> = gt
                    .objects
                    .iter()
                    .map(|o| {
                        (
                            o.object_id.clone(),
                            store
                                .entries()
                                .iter()
                                .filter(|e| e.category == o.category)
                                .map(|e| e.id.clone())
                                .collect(),
                        )
                    })
                    .collect();
                opts.object_pools = Some(pools);
            }
            _ => {}
        }
        let result = align_scene(&gt.scene_id, &crops, &store, &opts);
        let errors = result.objects.iter().filter(|o| o.error.is_some()).count();
        println!(
            "{}: {} objects aligned, {} errors, {:.1} ms",
            result.scene_id,
            result.objects.len() - errors,
            errors,
            result.total_ms
        );
        results.push(result);
    }
    serde_json::to_writer_pretty(fs::File::create(&args.out)?, &results)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult {
    let results: Vec<AlignmentResult> =
        serde_json::from_reader(fs::File::open(&args.results)?)?;
    let mut records = Vec::new();
    for dir in scene_dirs(&args.gt)? {
        let record: SceneRecord =
            serde_json::from_reader(fs::File::open(dir.join("gt.json"))?)?;
        records.push(record);
    }
    let report = evaluate(&results, &records)?;
    serde_json::to_writer_pretty(fs::File::create(&args.out)?, &report)?;
    if let Some(csv) = &args.csv {
        fs::write(csv, report.to_csv())?;
    }
    println!(
        "instance avg {:.2}% | class avg {:.2}% | {}/{} accepted | {} unmatched predictions",
        report.instance_avg_pct,
        report.class_avg_pct,
        report.accepted,
        report.total,
        report.unmatched_predictions
    );
    for (cat, acc) in &report.per_category {
        println!("  {cat}: {}/{} = {:.2}%", acc.accepted, acc.total, acc.accuracy_pct);
    }
    Ok(())
}

fn bench(args: BenchArgs) -> CliResult {
    let sizes: Vec<String> = args
        .sizes
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    for s in &sizes {
        if !["small", "medium", "large"].contains(&s.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown size '{s}' (choose from small, medium, large)"
            )));
        }
    }
    if sizes.is_empty() {
        return Err(CliError::Usage("--sizes must name at least one size".into()));
    }
    let rows = run_bench(&sizes, args.seed, &default_library())?;
    println!(
        "{:<8} {:>14} {:>8} {:>12} {:>14} {:>14} {:>12}",
        "size", "grid", "objects", "gen (ms)", "align 1T (ms)", "align NT (ms)", "ref (s)"
    );
    for r in &rows {
        println!(
            "{:<8} {:>14} {:>8} {:>12.1} {:>14.1} {:>14.1} {:>12.2}",
            r.size,
            format!("{}x{}x{}", r.grid_dims[0], r.grid_dims[1], r.grid_dims[2]),
            r.objects,
            r.scene_gen_ms,
            r.align_serial_ms,
            r.align_parallel_ms,
            r.reference_s,
        );
    }
    println!(
        "reference times are the original system's full-pipeline numbers on \
         different hardware (context, not a comparison)"
    );
    Ok(())
}

fn procrustes_check(args: ProcrustesCheckArgs) -> CliResult {
    #[derive(serde::Deserialize)]
    struct CorrFile {
        p_cad: Vec<[f64; 3]>,
        p_scan: Vec<[f64; 3]>,
        weights: Option<Vec<f64>>,
    }
    let file: CorrFile = serde_json::from_reader(fs::File::open(&args.input)?)?;
    let p_cad: Vec<Vector3<f64>> = file.p_cad.into_iter().map(Vector3::from).collect();
    let p_scan: Vec<Vector3<f64>> = file.p_scan.into_iter().map(Vector3::from).collect();
    let n = p_cad.len();
    let corr = match file.weights {
        Some(w) => CorrespondenceSet::new(p_cad, p_scan, w)?,
        None => CorrespondenceSet::with_uniform_weights(p_cad, p_scan)?,
    };
    let sol = solve_rotation(&corr)?;
    println!("points: {n}");
    println!("rotation:");
    for i in 0..3 {
        println!(
            "  [{:+.9} {:+.9} {:+.9}]",
            sol.rotation[(i, 0)],
            sol.rotation[(i, 1)],
            sol.rotation[(i, 2)]
        );
    }
    println!(
        "singular values: {:.6e} {:.6e} {:.6e}",
        sol.singular_values[0], sol.singular_values[1], sol.singular_values[2]
    );
    println!(
        "residual (weighted, centered): {:.6e}",
        scanfit::procrustes::centered_residual(&corr, &sol.rotation)
    );

    // Gradient check against central finite differences on L = <G, R>.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let g = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    match rotation_gradient(&corr, &g) {
        Err(e) => println!("gradient check: skipped ({e})"),
        Ok(grad) => {
            let h = 1e-5;
            let mut worst = 0.0f64;
            let loss = |cs: &CorrespondenceSet| -> f64 {
                (g.transpose() * solve_rotation(cs).unwrap().rotation).trace()
            };
            let eval_shifted = |side: usize, i: usize, k: usize, delta: f64| -> Result<f64, CliError> {
                let mut cad = corr.p_cad().to_vec();
                let mut scan = corr.p_scan().to_vec();
                if side == 0 {
                    cad[i][k] += delta;
                } else {
                    scan[i][k] += delta;
                }
                Ok(loss(&CorrespondenceSet::new(cad, scan, corr.weights().to_vec())?))
            };
            for i in 0..corr.len() {
                for k in 0..3 {
                    for side in 0..2 {
                        let analytic = if side == 0 {
                            grad.d_p_cad[i][k]
                        } else {
                            grad.d_p_scan[i][k]
                        };
                        let fd = (eval_shifted(side, i, k, h)? - eval_shifted(side, i, k, -h)?)
                            / (2.0 * h);
                        let scale = analytic.abs().max(fd.abs());
                        if scale > 1e-6 {
                            worst = worst.max((analytic - fd).abs() / scale);
                        }
                    }
                }
            }
            let ok = worst < 1e-4;
            println!(
                "gradient check: max relative error {worst:.3e} vs finite differences -> {}",
                if ok { "PASS" } else { "FAIL" }
            );
            if !ok {
                return Err(CliError::Data(
                    "gradient check failed against finite differences".into(),
                ));
            }
        }
    }
    Ok(())
}

fn build_store(args: BuildStoreArgs) -> CliResult {
    let library: Vec<ShapeDef> = match &args.library {
        Some(path) => serde_json::from_reader(fs::File::open(path)?)?,
        None => default_library(),
    };
    let store = build_library_store(&library)?;
    store.save(&args.out)?;
    println!(
        "store with {} descriptors ({}-d) -> {}",
        store.len(),
        store.dim(),
        args.out.display()
    );
    Ok(())
}
