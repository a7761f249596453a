//! Alignment acceptance criterion, the full-scene alignment pipeline with
//! retrieval and timing, accuracy reports, and runtime benchmarks.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::correspondence::{
    build_correspondences, masked_noc_values, resolve_scale, ObjectCrop, TranslationMode,
};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::Pose9Dof;
use crate::procrustes::solve_rotation;
use crate::retrieval::{df_from_points_with, geometric_descriptor, DescriptorStore};
use crate::symmetry::sym_rotation_error_deg;
use crate::synth::{SceneRecord, SceneSpec, ShapeDef};

/// Acceptance thresholds: translation within 20 cm, rotation within 20
/// degrees (symmetry-aware), every scale axis within 20 percent.
pub const TRANSLATION_THRESHOLD_M: f64 = 0.20;
pub const ROTATION_THRESHOLD_DEG: f64 = 20.0;
pub const SCALE_RATIO_THRESHOLD: f64 = 0.20;

/// Predictions match ground-truth objects by center distance within this
/// radius, greedily and one-to-one.
pub const MATCH_RADIUS_M: f64 = 0.5;

/// Reference wall-clock times (seconds) reported by the original system on
/// comparable scene sizes; printed for context only, never compared against.
pub const REFERENCE_RUNTIMES_S: [(&str, f64); 3] =
    [("small", 0.62), ("medium", 1.11), ("large", 2.60)];

/// A predicted or ground-truth alignment with its category label.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub category: String,
    pub pose: Pose9Dof,
}

/// The acceptance criterion: category match, translation within 20 cm,
/// symmetry-aware rotation within 20 degrees, and max per-axis scale ratio
/// error within 20 percent.
pub fn accept_alignment(
    pred: &Alignment,
    gt: &Alignment,
    symmetry: crate::symmetry::SymmetryClass,
) -> bool {
    if pred.category != gt.category {
        return false;
    }
    pose_within_thresholds(&pred.pose, &gt.pose, symmetry)
}

/// The geometric part of the criterion, without the category check.
pub fn pose_within_thresholds(
    pred: &Pose9Dof,
    gt: &Pose9Dof,
    symmetry: crate::symmetry::SymmetryClass,
) -> bool {
    let t_err = (pred.translation() - gt.translation()).norm();
    if t_err > TRANSLATION_THRESHOLD_M {
        return false;
    }
    let r_err = sym_rotation_error_deg(
        &pred.rotation_matrix(),
        &gt.rotation_matrix(),
        symmetry,
    );
    if r_err > ROTATION_THRESHOLD_DEG {
        return false;
    }
    let (ps, gs) = (pred.scale(), gt.scale());
    (0..3).all(|k| (ps[k] / gs[k] - 1.0).abs() <= SCALE_RATIO_THRESHOLD)
}

/// Options of the scene alignment pass.
#[derive(Debug, Clone)]
pub struct AlignOptions {
    pub exec: ExecMode,
    pub translation: TranslationMode,
    /// Restrict retrieval to these CAD ids (the per-scene pool protocol).
    pub scene_pool: Option<Vec<String>>,
    /// Per-object pools keyed by object id; takes precedence over the scene
    /// pool (used for category-restricted retrieval).
    pub object_pools: Option<BTreeMap<String, Vec<String>>>,
    /// Point budget when building the retrieval query distance field.
    pub retrieval_points: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            exec: ExecMode::Parallel,
            translation: TranslationMode::default(),
            scene_pool: None,
            object_pools: None,
            retrieval_points: 1024,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub correspondences_ms: f64,
    pub solve_ms: f64,
    pub retrieval_ms: f64,
}

/// Outcome for one object; failures carry the error text and leave the
/// other objects untouched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectAlignment {
    pub object_id: String,
    pub cad_id: Option<String>,
    pub category: Option<String>,
    pub pose: Option<Pose9Dof>,
    pub timings: StageTimings,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub scene_id: String,
    pub objects: Vec<ObjectAlignment>,
    pub total_ms: f64,
}

/// Aligns every crop of a scene: Procrustes rotation + scale + translation,
/// then nearest-neighbor CAD retrieval from the masked coordinates.
/// Deterministic; per-object failures are recorded, not fatal.
pub fn align_scene(
    scene_id: &str,
    crops: &[ObjectCrop],
    store: &DescriptorStore,
    opts: &AlignOptions,
) -> AlignmentResult {
    let start = Instant::now();
    let objects = exec::map_indexed(opts.exec, crops, |_, crop| align_one(crop, store, opts));
    AlignmentResult {
        scene_id: scene_id.to_string(),
        objects,
        total_ms: ms_since(start),
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn align_one(crop: &ObjectCrop, store: &DescriptorStore, opts: &AlignOptions) -> ObjectAlignment {
    let mut out = ObjectAlignment {
        object_id: crop.object_id.clone(),
        cad_id: None,
        category: None,
        pose: None,
        timings: StageTimings::default(),
        error: None,
    };

    let t0 = Instant::now();
    let solved = resolve_scale(crop).and_then(|scale| {
        let corr = build_correspondences(crop)?;
        out.timings.correspondences_ms = ms_since(t0);
        let t1 = Instant::now();
        let sol = solve_rotation(&corr)?;
        let t = match opts.translation {
            TranslationMode::CentroidMatch => {
                sol.centroid_scan - sol.rotation * sol.centroid_cad
            }
            TranslationMode::DetectedCenter => crop.center,
        };
        let pose = Pose9Dof::new(
            t,
            nalgebra::UnitQuaternion::from_matrix(&sol.rotation),
            scale,
        )?;
        out.timings.solve_ms = ms_since(t1);
        Ok(pose)
    });
    match solved {
        Ok(pose) => out.pose = Some(pose),
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    }

    let t2 = Instant::now();
    let retrieval = retrieve_for_crop(crop, store, opts);
    out.timings.retrieval_ms = ms_since(t2);
    match retrieval {
        Ok((cad_id, category)) => {
            out.cad_id = Some(cad_id);
            out.category = Some(category);
        }
        Err(e) => out.error = Some(format!("retrieval: {e}")),
    }
    out
}

fn retrieve_for_crop(
    crop: &ObjectCrop,
    store: &DescriptorStore,
    opts: &AlignOptions,
) -> Result<(String, String)> {
    let nocs = masked_noc_values(&crop.noc, &crop.mask);
    if nocs.is_empty() {
        return Err(Error::TooFewMasked(0));
    }
    let df = df_from_points_with(opts.exec, &nocs, opts.retrieval_points)?;
    let query = geometric_descriptor(&df)?;
    let pool: Option<&Vec<String>> = opts
        .object_pools
        .as_ref()
        .and_then(|m| m.get(&crop.object_id))
        .or(opts.scene_pool.as_ref());
    let hits = match pool {
        Some(ids) => store.nearest_filtered(&query, 1, |e| ids.iter().any(|i| *i == e.id))?,
        None => store.nearest(&query, 1)?,
    };
    let top = &hits[0];
    Ok((top.id.clone(), top.category.clone()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub accepted: usize,
    pub total: usize,
    pub accuracy_pct: f64,
}

/// Accuracy over ground-truth instances, per category and averaged both
/// ways (unweighted class average and instance average).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_category: BTreeMap<String, CategoryAccuracy>,
    pub class_avg_pct: f64,
    pub instance_avg_pct: f64,
    pub accepted: usize,
    pub total: usize,
    /// Predictions that matched no ground-truth object within the radius.
    pub unmatched_predictions: usize,
}

impl AccuracyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,accepted,total,accuracy_pct\n");
        for (cat, acc) in &self.per_category {
            s.push_str(&format!(
                "{cat},{},{},{:.2}\n",
                acc.accepted, acc.total, acc.accuracy_pct
            ));
        }
        s.push_str(&format!(
            "class_avg,,,{:.2}\ninstance_avg,{},{},{:.2}\n",
            self.class_avg_pct, self.accepted, self.total, self.instance_avg_pct
        ));
        s
    }
}

/// Scores alignment results against ground truth.
///
/// Scene sets must agree. Within a scene, predictions and ground-truth
/// objects are matched greedily by ascending center distance within
/// [`MATCH_RADIUS_M`], one-to-one; a matched pair counts as accepted when
/// it passes [`accept_alignment`]. Unmatched ground truth counts as failed;
/// unmatched predictions are reported separately.
pub fn evaluate(results: &[AlignmentResult], gt: &[SceneRecord]) -> Result<AccuracyReport> {
    if results.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} result scenes vs {} ground-truth scenes",
            results.len(),
            gt.len()
        )));
    }
    let mut gt_by_id: BTreeMap<&str, &SceneRecord> =
        gt.iter().map(|r| (r.scene_id.as_str(), r)).collect();

    let mut per_category: BTreeMap<String, CategoryAccuracy> = BTreeMap::new();
    let mut unmatched_predictions = 0usize;

    for result in results {
        let record = gt_by_id.remove(result.scene_id.as_str()).ok_or_else(|| {
            Error::DimensionMismatch(format!(
                "result scene {} missing from ground truth (or duplicated)",
                result.scene_id
            ))
        })?;
        for obj in &record.objects {
            per_category
                .entry(obj.category.clone())
                .or_insert(CategoryAccuracy {
                    accepted: 0,
                    total: 0,
                    accuracy_pct: 0.0,
                })
                .total += 1;
        }

        // All candidate pairs within the radius, closest first.
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (pi, pred) in result.objects.iter().enumerate() {
            let Some(pose) = &pred.pose else { continue };
            for (gi, g) in record.objects.iter().enumerate() {
                let d = (pose.translation() - Vector3::from(g.center)).norm();
                if d <= MATCH_RADIUS_M {
                    pairs.push((d, pi, gi));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
        });
        let mut pred_used = vec![false; result.objects.len()];
        let mut gt_used = vec![false; record.objects.len()];
        let mut matched = 0usize;
        for (_, pi, gi) in pairs {
            if pred_used[pi] || gt_used[gi] {
                continue;
            }
            pred_used[pi] = true;
            gt_used[gi] = true;
            matched += 1;
            let pred = &result.objects[pi];
            let g = &record.objects[gi];
            let accepted = match (&pred.pose, &pred.category) {
                (Some(pose), Some(category)) => accept_alignment(
                    &Alignment {
                        category: category.clone(),
                        pose: *pose,
                    },
                    &Alignment {
                        category: g.category.clone(),
                        pose: g.pose,
                    },
                    g.symmetry,
                ),
                _ => false,
            };
            if accepted {
                per_category.get_mut(&g.category).unwrap().accepted += 1;
            }
        }
        unmatched_predictions += result
            .objects
            .iter()
            .enumerate()
            .filter(|(i, o)| o.pose.is_some() && !pred_used[*i])
            .count();
        let _ = matched;
    }
    if !gt_by_id.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} ground-truth scenes have no results",
            gt_by_id.len()
        )));
    }

    let mut accepted = 0usize;
    let mut total = 0usize;
    let mut class_sum = 0.0;
    let mut class_count = 0usize;
    for acc in per_category.values_mut() {
        acc.accuracy_pct = if acc.total > 0 {
            100.0 * acc.accepted as f64 / acc.total as f64
        } else {
            0.0
        };
        accepted += acc.accepted;
        total += acc.total;
        if acc.total > 0 {
            class_sum += acc.accuracy_pct;
            class_count += 1;
        }
    }
    Ok(AccuracyReport {
        class_avg_pct: if class_count > 0 {
            class_sum / class_count as f64
        } else {
            0.0
        },
        instance_avg_pct: if total > 0 {
            100.0 * accepted as f64 / total as f64
        } else {
            0.0
        },
        per_category,
        accepted,
        total,
        unmatched_predictions,
    })
}

// --- Runtime benchmark -------------------------------------------------------

/// Scene presets mirroring the reference scene sizes: grid dimensions (x,
/// depth, height in the reference layout) and object counts.
pub fn bench_spec(size: &str, seed: u64) -> Result<SceneSpec> {
    // Reference dims are (x, horizontal y, vertical z); our grids are y-up,
    // so depth moves to z. Rooms are sized so the fused grid hits the dims
    // exactly (voxel 3 cm, truncation pad 15 cm per side).
    let (dims_ref, objects): ([usize; 3], usize) = match size {
        "small" => ([128, 96, 48], 7),
        "medium" => ([144, 128, 64], 16),
        "large" => ([256, 320, 64], 20),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown bench size '{other}' (small, medium, large)"
            )))
        }
    };
    let vs = 0.03;
    let trunc = 0.15;
    let room = [
        dims_ref[0] as f64 * vs - 2.0 * trunc,
        dims_ref[2] as f64 * vs - 2.0 * trunc,
        dims_ref[1] as f64 * vs - 2.0 * trunc,
    ];
    Ok(SceneSpec {
        seed,
        room_extents: room,
        objects_min: objects,
        objects_max: objects,
        scale_range: [0.4, 0.7],
        voxel_size: vs,
        trunc: Some(trunc),
        min_observed_voxels: 10,
        ..SceneSpec::default()
    })
}

/// Expected fused-grid dimensions for a bench preset (y-up layout).
pub fn bench_grid_dims(size: &str) -> Result<[usize; 3]> {
    Ok(match size {
        "small" => [128, 48, 96],
        "medium" => [144, 64, 128],
        "large" => [256, 64, 320],
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown bench size '{other}'"
            )))
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: String,
    pub grid_dims: [usize; 3],
    pub objects: usize,
    pub scene_gen_ms: f64,
    pub align_serial_ms: f64,
    pub align_parallel_ms: f64,
    /// Reference system total (seconds) on the same scene size, for context
    /// (includes network inference on different hardware; not comparable).
    pub reference_s: f64,
}

/// Generates each preset scene and times the alignment math (correspondence
/// assembly, Procrustes, retrieval) over its ground-truth crops, once
/// sequentially and once with the parallel path.
pub fn run_bench(sizes: &[String], seed: u64, library: &[ShapeDef]) -> Result<Vec<BenchRow>> {
    let store = build_library_store(library)?;
    let mut rows = Vec::new();
    for size in sizes {
        let spec = bench_spec(size, seed)?;
        let t0 = Instant::now();
        let gt = crate::synth::generate_scene(&spec)?;
        let scene_gen_ms = ms_since(t0);
        let crops: Vec<ObjectCrop> = gt.objects.iter().map(|o| o.crop.clone()).collect();

        let serial_opts = AlignOptions {
            exec: ExecMode::Sequential,
            ..AlignOptions::default()
        };
        let t1 = Instant::now();
        let serial = align_scene(&gt.scene_id, &crops, &store, &serial_opts);
        let align_serial_ms = ms_since(t1);

        let t2 = Instant::now();
        let parallel = align_scene(&gt.scene_id, &crops, &store, &AlignOptions::default());
        let align_parallel_ms = ms_since(t2);

        for r in serial.objects.iter().chain(parallel.objects.iter()) {
            if let Some(e) = &r.error {
                return Err(Error::InvalidParameter(format!(
                    "bench alignment failed on {}: {e}",
                    r.object_id
                )));
            }
        }

        let reference_s = REFERENCE_RUNTIMES_S
            .iter()
            .find(|(n, _)| n == size)
            .map(|(_, s)| *s)
            .unwrap_or(f64::NAN);
        rows.push(BenchRow {
            size: size.clone(),
            grid_dims: gt.scan.dims(),
            objects: gt.objects.len(),
            scene_gen_ms,
            align_serial_ms,
            align_parallel_ms,
            reference_s,
        });
    }
    Ok(rows)
}

/// Descriptor store over a shape library (one entry per definition, exact
/// distance fields).
pub fn build_library_store(library: &[ShapeDef]) -> Result<DescriptorStore> {
    let mut store = DescriptorStore::new(crate::retrieval::DESCRIPTOR_DIM);
    for def in library {
        let df = crate::tsdf::cad_unsigned_df(&def.shape, crate::retrieval::DF_DIMS)?;
        let desc = geometric_descriptor(&df)?;
        store.add(&def.id, &def.category, &desc)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_y_deg;
    use crate::symmetry::SymmetryClass;
    use crate::synth::{default_library, generate_scene, ObjectGtRecord};
    use approx::assert_abs_diff_eq;
    use nalgebra::UnitQuaternion;

    fn pose(t: [f64; 3], yaw_deg: f64, s: [f64; 3]) -> Pose9Dof {
        Pose9Dof::new(
            Vector3::from(t),
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw_deg.to_radians()),
            Vector3::from(s),
        )
        .unwrap()
    }

    fn chair(p: Pose9Dof) -> Alignment {
        Alignment {
            category: "chair".into(),
            pose: p,
        }
    }

    #[test]
    fn exact_prediction_is_accepted() {
        let gt = chair(pose([1.0, 0.5, -2.0], 30.0, [1.0, 1.2, 0.8]));
        assert!(accept_alignment(&gt.clone(), &gt, SymmetryClass::None));
    }

    #[test]
    fn translation_beyond_20cm_fails() {
        let gt = chair(pose([0.0, 0.0, 0.0], 0.0, [1.0, 1.0, 1.0]));
        let pred = chair(pose([0.25, 0.0, 0.0], 0.0, [1.0, 1.0, 1.0]));
        assert!(!accept_alignment(&pred, &gt, SymmetryClass::None));
        let ok = chair(pose([0.15, 0.0, 0.0], 0.0, [1.0, 1.0, 1.0]));
        assert!(accept_alignment(&ok, &gt, SymmetryClass::None));
    }

    #[test]
    fn quarter_turn_accepted_only_with_symmetry() {
        let gt = chair(pose([0.0, 0.0, 0.0], 0.0, [1.0, 1.0, 1.0]));
        let pred = chair(pose([0.0, 0.0, 0.0], 90.0, [1.0, 1.0, 1.0]));
        assert!(!accept_alignment(&pred, &gt, SymmetryClass::None));
        assert!(accept_alignment(&pred, &gt, SymmetryClass::FourFold));
    }

    #[test]
    fn category_mismatch_fails() {
        let gt = chair(pose([0.0, 0.0, 0.0], 0.0, [1.0, 1.0, 1.0]));
        let mut pred = gt.clone();
        pred.category = "table".into();
        assert!(!accept_alignment(&pred, &gt, SymmetryClass::None));
    }

    #[test]
    fn scale_uses_max_axis_ratio() {
        let gt = chair(pose([0.0, 0.0, 0.0], 0.0, [1.0, 1.0, 1.0]));
        let pred = chair(pose([0.0, 0.0, 0.0], 0.0, [1.0, 1.25, 1.0]));
        assert!(!accept_alignment(&pred, &gt, SymmetryClass::None));
        let pred = chair(pose([0.0, 0.0, 0.0], 0.0, [1.15, 0.85, 1.0]));
        assert!(accept_alignment(&pred, &gt, SymmetryClass::None));
    }

    #[test]
    fn acceptance_invariant_under_gt_symmetry_action() {
        let gt_pose = pose([0.3, 0.2, 0.1], 37.0, [1.0, 1.0, 1.0]);
        let pred = chair(pose([0.3, 0.2, 0.1], 37.0, [1.0, 1.0, 1.0]));
        for k in 0..4 {
            let rotated = gt_pose.rotation_matrix() * rotation_y_deg(90.0 * k as f64);
            let gt_rot = Pose9Dof::from_parts(
                gt_pose.translation(),
                rotated,
                gt_pose.scale(),
            )
            .unwrap();
            assert!(accept_alignment(
                &pred,
                &chair(gt_rot),
                SymmetryClass::FourFold
            ));
        }
    }

    fn record_with(objects: Vec<ObjectGtRecord>) -> SceneRecord {
        SceneRecord {
            scene_id: "s0".into(),
            seed: 0,
            voxel_size: 0.03,
            trunc: 0.15,
            objects,
        }
    }

    fn gt_obj(id: &str, category: &str, t: [f64; 3]) -> ObjectGtRecord {
        ObjectGtRecord {
            object_id: id.into(),
            cad_id: format!("cad_{id}"),
            category: category.into(),
            symmetry: SymmetryClass::None,
            pose: pose(t, 0.0, [1.0, 1.0, 1.0]),
            bbox: crate::geometry::ObbBox::new(
                Vector3::from(t),
                Vector3::from_element(1.0),
            )
            .unwrap(),
            center: t,
            masked_voxels: 500,
        }
    }

    fn pred_obj(id: &str, category: &str, t: [f64; 3]) -> ObjectAlignment {
        ObjectAlignment {
            object_id: id.into(),
            cad_id: Some(format!("cad_{id}")),
            category: Some(category.into()),
            pose: Some(pose(t, 0.0, [1.0, 1.0, 1.0])),
            timings: StageTimings::default(),
            error: None,
        }
    }

    #[test]
    fn evaluate_all_exact_is_100_percent() {
        let gt = vec![record_with(vec![
            gt_obj("a", "chair", [0.0, 0.0, 0.0]),
            gt_obj("b", "table", [3.0, 0.0, 0.0]),
        ])];
        let results = vec![AlignmentResult {
            scene_id: "s0".into(),
            objects: vec![
                pred_obj("a", "chair", [0.0, 0.0, 0.0]),
                pred_obj("b", "table", [3.0, 0.0, 0.0]),
            ],
            total_ms: 1.0,
        }];
        let report = evaluate(&results, &gt).unwrap();
        assert_abs_diff_eq!(report.instance_avg_pct, 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.class_avg_pct, 100.0, epsilon = 1e-12);
        assert_eq!(report.accepted, 2);
    }

    #[test]
    fn evaluate_half_perturbed_is_50_percent() {
        let gt = vec![record_with(vec![
            gt_obj("a", "chair", [0.0, 0.0, 0.0]),
            gt_obj("b", "chair", [3.0, 0.0, 0.0]),
            gt_obj("c", "chair", [6.0, 0.0, 0.0]),
            gt_obj("d", "chair", [9.0, 0.0, 0.0]),
        ])];
        let results = vec![AlignmentResult {
            scene_id: "s0".into(),
            objects: vec![
                pred_obj("a", "chair", [0.0, 0.0, 0.0]),
                pred_obj("b", "chair", [3.0, 0.0, 0.0]),
                // Translation off beyond the threshold but within match radius.
                pred_obj("c", "chair", [6.3, 0.0, 0.0]),
                pred_obj("d", "chair", [9.3, 0.0, 0.0]),
            ],
            total_ms: 1.0,
        }];
        let report = evaluate(&results, &gt).unwrap();
        assert_abs_diff_eq!(report.instance_avg_pct, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn class_and_instance_averages_differ() {
        // A: 2 of 2 accepted; B: 0 of 2 -> class avg 50, instance avg 50.
        // A: 2 of 2; B: 0 of 1 -> class avg 50, instance avg 66.7.
        let gt = vec![record_with(vec![
            gt_obj("a1", "a", [0.0, 0.0, 0.0]),
            gt_obj("a2", "a", [3.0, 0.0, 0.0]),
            gt_obj("b1", "b", [6.0, 0.0, 0.0]),
        ])];
        let results = vec![AlignmentResult {
            scene_id: "s0".into(),
            objects: vec![
                pred_obj("a1", "a", [0.0, 0.0, 0.0]),
                pred_obj("a2", "a", [3.0, 0.0, 0.0]),
                pred_obj("b1", "b", [6.4, 0.0, 0.0]), // matched, rejected
            ],
            total_ms: 1.0,
        }];
        let report = evaluate(&results, &gt).unwrap();
        assert_abs_diff_eq!(report.class_avg_pct, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.instance_avg_pct, 200.0 / 3.0, epsilon = 1e-9);
        let csv = report.to_csv();
        assert!(csv.contains("class_avg"));
    }

    #[test]
    fn evaluation_is_order_invariant() {
        let gt = vec![record_with(vec![
            gt_obj("a", "chair", [0.0, 0.0, 0.0]),
            gt_obj("b", "table", [3.0, 0.0, 0.0]),
        ])];
        let forward = vec![AlignmentResult {
            scene_id: "s0".into(),
            objects: vec![
                pred_obj("a", "chair", [0.0, 0.0, 0.0]),
                pred_obj("b", "table", [3.0, 0.0, 0.0]),
            ],
            total_ms: 1.0,
        }];
        let mut reversed = forward.clone();
        reversed[0].objects.reverse();
        let a = evaluate(&forward, &gt).unwrap();
        let b = evaluate(&reversed, &gt).unwrap();
        assert_eq!(a.accepted, b.accepted);
        assert_eq!(a.total, b.total);
    }

    #[test]
    fn mismatched_scene_sets_error() {
        let gt = vec![record_with(vec![gt_obj("a", "chair", [0.0, 0.0, 0.0])])];
        let results = vec![AlignmentResult {
            scene_id: "other".into(),
            objects: vec![],
            total_ms: 0.0,
        }];
        assert!(evaluate(&results, &gt).is_err());
    }

    #[test]
    fn scene_alignment_round_trips_on_ground_truth_crops() {
        let spec = SceneSpec {
            seed: 1234,
            room_extents: [4.0, 2.4, 4.0],
            objects_min: 4,
            objects_max: 6,
            scale_range: [0.5, 1.3],
            camera: crate::synth::OrbitSpec {
                frames: 12,
                width: 96,
                height: 72,
                ..Default::default()
            },
            ..SceneSpec::default()
        };
        let gt = generate_scene(&spec).unwrap();
        assert!(!gt.objects.is_empty());
        let store = build_library_store(&default_library()).unwrap();
        let crops: Vec<ObjectCrop> = gt.objects.iter().map(|o| o.crop.clone()).collect();
        // Category-filtered retrieval pools.
        let pools: BTreeMap<String, Vec<String>> = gt
            .objects
            .iter()
            .map(|o| {
                (
                    o.object_id.clone(),
                    default_library()
                        .iter()
                        .filter(|d| d.category == o.category)
                        .map(|d| d.id.clone())
                        .collect(),
                )
            })
            .collect();
        let opts = AlignOptions {
            object_pools: Some(pools),
            ..AlignOptions::default()
        };
        let result = align_scene(&gt.scene_id, &crops, &store, &opts);
        let report = evaluate(&[result], &[SceneRecord::from_gt(&gt)]).unwrap();
        assert_abs_diff_eq!(report.instance_avg_pct, 100.0, epsilon = 1e-9);
    }

    #[test]
    fn one_degenerate_crop_does_not_poison_the_scene() {
        let spec = SceneSpec {
            seed: 77,
            room_extents: [4.0, 2.4, 4.0],
            objects_min: 4,
            objects_max: 4,
            scale_range: [0.5, 1.0],
            camera: crate::synth::OrbitSpec {
                frames: 10,
                width: 96,
                height: 72,
                ..Default::default()
            },
            ..SceneSpec::default()
        };
        let gt = generate_scene(&spec).unwrap();
        let store = build_library_store(&default_library()).unwrap();
        let mut crops: Vec<ObjectCrop> = gt.objects.iter().map(|o| o.crop.clone()).collect();
        // Break one crop by zeroing its mask.
        for c in crops[0].mask.grid.cells_mut() {
            *c = 0.0;
        }
        let result = align_scene(&gt.scene_id, &crops, &store, &AlignOptions::default());
        assert!(result.objects[0].error.is_some());
        assert!(result.objects[0].pose.is_none());
        for obj in &result.objects[1..] {
            assert!(obj.error.is_none(), "spilled error: {:?}", obj.error);
            assert!(obj.pose.is_some());
        }
    }

    #[test]
    fn serial_and_parallel_alignment_agree() {
        let spec = SceneSpec {
            seed: 55,
            room_extents: [4.0, 2.4, 4.0],
            objects_min: 3,
            objects_max: 4,
            scale_range: [0.5, 1.0],
            camera: crate::synth::OrbitSpec {
                frames: 10,
                width: 96,
                height: 72,
                ..Default::default()
            },
            ..SceneSpec::default()
        };
        let gt = generate_scene(&spec).unwrap();
        let store = build_library_store(&default_library()).unwrap();
        let crops: Vec<ObjectCrop> = gt.objects.iter().map(|o| o.crop.clone()).collect();
        let par = align_scene(&gt.scene_id, &crops, &store, &AlignOptions::default());
        let ser = align_scene(
            &gt.scene_id,
            &crops,
            &store,
            &AlignOptions {
                exec: ExecMode::Sequential,
                ..AlignOptions::default()
            },
        );
        for (a, b) in par.objects.iter().zip(&ser.objects) {
            assert_eq!(a.cad_id, b.cad_id);
            let (pa, pb) = (a.pose.unwrap(), b.pose.unwrap());
            assert_eq!(pa.translation(), pb.translation());
            assert_eq!(pa.scale(), pb.scale());
        }
    }

    #[test]
    fn large_scene_stays_within_memory_budget() {
        let spec = bench_spec("large", 2).unwrap();
        let gt = generate_scene(&spec).unwrap();
        assert_eq!(gt.scan.dims(), [256, 64, 320]);
        // Scan volume plus all crop grids, far below the 4 GB ceiling.
        let mut bytes = gt.scan.len() * std::mem::size_of::<crate::tsdf::TsdfCell>();
        for o in &gt.objects {
            bytes += o.crop.noc.grid.len() * 12 + o.crop.mask.grid.len() * 4;
        }
        assert!(
            bytes < 4 * 1024 * 1024 * 1024usize,
            "scene uses {bytes} bytes"
        );
        assert!(gt.objects.len() >= 15, "placed {} of 20", gt.objects.len());
    }

    #[test]
    fn bench_specs_produce_reference_grid_dims() {
        for size in ["small", "medium", "large"] {
            let spec = bench_spec(size, 9).unwrap();
            let trunc = spec.trunc();
            let vs = spec.voxel_size;
            let expected = bench_grid_dims(size).unwrap();
            for k in 0..3 {
                let extent = spec.room_extents[k] + 2.0 * trunc;
                let dim = ((extent / vs) - 1e-9).ceil() as usize;
                assert_eq!(dim, expected[k], "axis {k} of {size}");
            }
        }
        assert!(bench_spec("giant", 0).is_err());
    }
}
