//! Object descriptors and exact nearest-neighbor CAD retrieval.
//!
//! The descriptor pools a 32^3 unsigned distance field into 8 channels over
//! a 4^3 block layout (8x4^3 = 512 values). It is a deterministic geometric
//! stand-in for a learned latent; the store is latent-agnostic, so vectors
//! from any source can be imported and queried the same way.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::VoxelGrid;

/// Descriptor dimensionality: 8 channels times 4^3 spatial cells.
pub const DESCRIPTOR_DIM: usize = 512;

/// Input resolution expected by [`geometric_descriptor`].
pub const DF_DIMS: [usize; 3] = [32, 32, 32];

/// Occupancy thresholds (distance bands) for the three occupancy channels.
const BAND_THRESHOLDS: [f64; 3] = [0.02, 0.05, 0.10];

/// A 512-dimensional object descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f32>,
}

impl Descriptor {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "descriptor values must be finite".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Euclidean distance, accumulated in f64.
    pub fn distance(&self, other: &Descriptor) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Pools a 32^3 unsigned DF into the 512-d descriptor.
///
/// Channels per 8^3 block: mean, min, mean central gradient along x/y/z, and
/// the fraction of voxels with distance below each of three bands. Values
/// are laid out channel-major: `value[c * 64 + block]` with blocks x-fastest.
pub fn geometric_descriptor(df: &VoxelGrid<f32>) -> Result<Descriptor> {
    if df.dims() != DF_DIMS {
        return Err(Error::DimensionMismatch(format!(
            "descriptor input must be {DF_DIMS:?}, got {:?}",
            df.dims()
        )));
    }
    let block = 8usize;
    let blocks = 4usize;
    let mut values = vec![0.0f32; DESCRIPTOR_DIM];
    for bz in 0..blocks {
        for by in 0..blocks {
            for bx in 0..blocks {
                let b = bx + blocks * (by + blocks * bz);
                let mut sum = 0.0f64;
                let mut min = f64::INFINITY;
                let mut grad = [0.0f64; 3];
                let mut bands = [0usize; 3];
                let mut count = 0usize;
                for lz in 0..block {
                    for ly in 0..block {
                        for lx in 0..block {
                            let idx = [bx * block + lx, by * block + ly, bz * block + lz];
                            let v = f64::from(*df.get(idx));
                            sum += v;
                            min = min.min(v);
                            for (k, g) in grad.iter_mut().enumerate() {
                                let mut lo = idx;
                                let mut hi = idx;
                                lo[k] = lo[k].saturating_sub(1);
                                hi[k] = (hi[k] + 1).min(DF_DIMS[k] - 1);
                                let span = (hi[k] - lo[k]) as f64;
                                if span > 0.0 {
                                    *g += (f64::from(*df.get(hi)) - f64::from(*df.get(lo))) / span;
                                }
                            }
                            for (t, hit) in BAND_THRESHOLDS.iter().zip(bands.iter_mut()) {
                                if v < *t {
                                    *hit += 1;
                                }
                            }
                            count += 1;
                        }
                    }
                }
                let n = count as f64;
                values[b] = (sum / n) as f32;
                values[64 + b] = min as f32;
                for k in 0..3 {
                    values[(2 + k) * 64 + b] = (grad[k] / n) as f32;
                }
                for k in 0..3 {
                    values[(5 + k) * 64 + b] = (bands[k] as f64 / n) as f32;
                }
            }
        }
    }
    Descriptor::new(values)
}

/// Builds a 32^3 unsigned distance field from a normalized-space point
/// cloud (distances to the nearest point). Points are deterministically
/// subsampled to `max_points` by striding when larger.
pub fn df_from_points(points: &[Vector3<f64>], max_points: usize) -> Result<VoxelGrid<f32>> {
    df_from_points_impl(ExecMode::Parallel, points, max_points)
}

/// Sequential twin of [`df_from_points`] with identical output.
pub fn df_from_points_serial(
    points: &[Vector3<f64>],
    max_points: usize,
) -> Result<VoxelGrid<f32>> {
    df_from_points_impl(ExecMode::Sequential, points, max_points)
}

/// Mode-selected variant for callers that thread an execution mode through.
pub fn df_from_points_with(
    mode: ExecMode,
    points: &[Vector3<f64>],
    max_points: usize,
) -> Result<VoxelGrid<f32>> {
    df_from_points_impl(mode, points, max_points)
}

fn df_from_points_impl(
    mode: ExecMode,
    points: &[Vector3<f64>],
    max_points: usize,
) -> Result<VoxelGrid<f32>> {
    if points.is_empty() {
        return Err(Error::EmptyShape);
    }
    if max_points == 0 {
        return Err(Error::InvalidParameter("max_points must be positive".into()));
    }
    let stride = points.len().div_ceil(max_points);
    let sampled: Vec<Vector3<f64>> = points.iter().step_by(stride).copied().collect();
    let voxel_size = 1.0 / DF_DIMS[0] as f64;
    let origin = Vector3::from_element(-0.5 + voxel_size / 2.0);
    let mut grid = VoxelGrid::filled(DF_DIMS, origin, voxel_size, 0.0f32)?;
    let slab = DF_DIMS[0] * DF_DIMS[1];
    exec::for_each_chunk_mut(mode, grid.cells_mut(), slab, |offset, cells| {
        let z = offset / slab;
        for (i, cell) in cells.iter_mut().enumerate() {
            let x = i % DF_DIMS[0];
            let y = i / DF_DIMS[0];
            let p = origin + voxel_size * Vector3::new(x as f64, y as f64, z as f64);
            let mut best = f64::INFINITY;
            for q in &sampled {
                best = best.min((p - q).norm_squared());
            }
            *cell = best.sqrt() as f32;
        }
    });
    Ok(grid)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreEntry {
    pub id: String,
    pub category: String,
}

/// Immutable descriptor store with exact brute-force nearest neighbors.
#[derive(Debug, Clone)]
pub struct DescriptorStore {
    dim: usize,
    entries: Vec<StoreEntry>,
    data: Vec<f32>,
}

/// One ranked retrieval result.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub category: String,
    pub distance: f64,
}

impl DescriptorStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn descriptor(&self, index: usize) -> Descriptor {
        Descriptor {
            values: self.data[index * self.dim..(index + 1) * self.dim].to_vec(),
        }
    }

    pub fn add(&mut self, id: &str, category: &str, descriptor: &Descriptor) -> Result<()> {
        if descriptor.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "descriptor has {} values, store expects {}",
                descriptor.len(),
                self.dim
            )));
        }
        if self.entries.iter().any(|e| e.id == id) {
            return Err(Error::InvalidParameter(format!("duplicate cad id {id}")));
        }
        self.entries.push(StoreEntry {
            id: id.to_string(),
            category: category.to_string(),
        });
        self.data.extend_from_slice(descriptor.values());
        Ok(())
    }

    /// The `k` nearest entries by Euclidean distance, ascending, with ties
    /// broken by lexicographic id. Exact brute force.
    pub fn nearest(&self, query: &Descriptor, k: usize) -> Result<Vec<Neighbor>> {
        self.nearest_filtered(query, k, |_| true)
    }

    /// As [`nearest`](Self::nearest) restricted to entries accepted by the
    /// filter (per-scene pools, category restriction).
    pub fn nearest_filtered(
        &self,
        query: &Descriptor,
        k: usize,
        filter: impl Fn(&StoreEntry) -> bool,
    ) -> Result<Vec<Neighbor>> {
        if self.is_empty() {
            return Err(Error::EmptyStore);
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "query has {} values, store expects {}",
                query.len(),
                self.dim
            )));
        }
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| filter(e))
            .map(|(i, _)| {
                let row = &self.data[i * self.dim..(i + 1) * self.dim];
                let d = row
                    .iter()
                    .zip(query.values())
                    .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (d, i)
            })
            .collect();
        if scored.is_empty() {
            return Err(Error::EmptyStore);
        }
        scored.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then_with(|| self.entries[a.1].id.cmp(&self.entries[b.1].id))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(d, i)| Neighbor {
                id: self.entries[i].id.clone(),
                category: self.entries[i].category.clone(),
                distance: d,
            })
            .collect())
    }

    /// Runs many queries, preserving order; parallel when enabled.
    pub fn nearest_batch(&self, queries: &[Descriptor], k: usize) -> Result<Vec<Vec<Neighbor>>> {
        exec::map_indexed(ExecMode::Parallel, queries, |_, q| self.nearest(q, k))
            .into_iter()
            .collect()
    }

    /// Writes `index.json` (dim + entries) and `descriptors.f32` (raw
    /// little-endian matrix, row per entry) into a directory.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let index = StoreIndex {
            dim: self.dim,
            entries: self.entries.clone(),
        };
        let f = fs::File::create(dir.join("index.json"))?;
        serde_json::to_writer_pretty(f, &index)?;
        let mut w = std::io::BufWriter::new(fs::File::create(dir.join("descriptors.f32"))?);
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index: StoreIndex = serde_json::from_reader(fs::File::open(dir.join("index.json"))?)?;
        let mut raw = Vec::new();
        fs::File::open(dir.join("descriptors.f32"))?.read_to_end(&mut raw)?;
        let expected = index.dim * index.entries.len() * 4;
        if raw.len() != expected {
            return Err(Error::Format(format!(
                "descriptor matrix has {} bytes, expected {expected}",
                raw.len()
            )));
        }
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self {
            dim: index.dim,
            entries: index.entries,
            data,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StoreIndex {
    dim: usize,
    entries: Vec<StoreEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::Shape;
    use crate::tsdf::cad_unsigned_df;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_descriptor<R: Rng>(rng: &mut R) -> Descriptor {
        Descriptor::new((0..DESCRIPTOR_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn descriptor_has_512_values_and_is_deterministic() {
        let df = cad_unsigned_df(&Shape::Sphere { radius: 0.4 }, DF_DIMS).unwrap();
        let a = geometric_descriptor(&df).unwrap();
        let b = geometric_descriptor(&df).unwrap();
        assert_eq!(a.len(), 512);
        assert_eq!(a, b);
        assert_eq!(a.distance(&b), 0.0);
    }

    #[test]
    fn descriptor_orders_shapes_sensibly() {
        // Sphere r=0.4 vs cube side 0.8 must be farther apart than two
        // nearby spheres (r=0.4 vs r=0.38).
        let sphere = geometric_descriptor(
            &cad_unsigned_df(&Shape::Sphere { radius: 0.4 }, DF_DIMS).unwrap(),
        )
        .unwrap();
        let sphere_close = geometric_descriptor(
            &cad_unsigned_df(&Shape::Sphere { radius: 0.38 }, DF_DIMS).unwrap(),
        )
        .unwrap();
        let cube = geometric_descriptor(
            &cad_unsigned_df(

                &Shape::Cuboid {
                    half_extents: [0.4, 0.4, 0.4],
                },
                DF_DIMS,
            )
            .unwrap(),
        )
        .unwrap();
        assert!(sphere.distance(&cube) > sphere.distance(&sphere_close));
    }

    #[test]
    fn wrong_input_dims_are_rejected() {
        let df = VoxelGrid::filled([16, 16, 16], Vector3::zeros(), 1.0 / 16.0, 0.0f32).unwrap();
        assert!(geometric_descriptor(&df).is_err());
    }

    #[test]
    fn exact_query_returns_distance_zero_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = DescriptorStore::new(DESCRIPTOR_DIM);
        let descs: Vec<Descriptor> = (0..20).map(|_| random_descriptor(&mut rng)).collect();
        for (i, d) in descs.iter().enumerate() {
            store.add(&format!("cad_{i:03}"), "cat", d).unwrap();
        }
        let hits = store.nearest(&descs[7], 3).unwrap();
        assert_eq!(hits[0].id, "cad_007");
        assert_eq!(hits[0].distance, 0.0);
    }

    #[test]
    fn full_ranking_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = DescriptorStore::new(DESCRIPTOR_DIM);
        let descs: Vec<Descriptor> = (0..50).map(|_| random_descriptor(&mut rng)).collect();
        for (i, d) in descs.iter().enumerate() {
            store.add(&format!("id_{i:03}"), "cat", d).unwrap();
        }
        let q = random_descriptor(&mut rng);
        let hits = store.nearest(&q, 50).unwrap();
        // Independent oracle: sort (distance, id) pairs computed naively.
        let mut oracle: Vec<(f64, String)> = descs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.distance(&q), format!("id_{i:03}")))
            .collect();
        oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        assert_eq!(hits.len(), 50);
        for (h, (d, id)) in hits.iter().zip(&oracle) {
            assert_eq!(&h.id, id);
            assert_eq!(h.distance, *d);
        }
    }

    #[test]
    fn ties_break_lexicographically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = DescriptorStore::new(DESCRIPTOR_DIM);
        let d = random_descriptor(&mut rng);
        store.add("zzz", "cat", &d).unwrap();
        store.add("aaa", "cat", &d).unwrap();
        store.add("mmm", "cat", &d).unwrap();
        let hits = store.nearest(&d, 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["aaa", "mmm", "zzz"]);
    }

    #[test]
    fn empty_store_and_bad_params_error() {
        let store = DescriptorStore::new(8);
        let q = Descriptor::new(vec![0.0; 8]).unwrap();
        assert!(matches!(store.nearest(&q, 1), Err(Error::EmptyStore)));
        let mut store = DescriptorStore::new(8);
        store.add("a", "cat", &q).unwrap();
        assert!(store.nearest(&q, 0).is_err());
        assert!(store.add("a", "cat", &q).is_err());
    }

    #[test]
    fn category_filter_restricts_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = DescriptorStore::new(DESCRIPTOR_DIM);
        for i in 0..10 {
            let cat = if i % 2 == 0 { "even" } else { "odd" };
            store
                .add(&format!("e{i}"), cat, &random_descriptor(&mut rng))
                .unwrap();
        }
        let q = random_descriptor(&mut rng);
        let hits = store
            .nearest_filtered(&q, 10, |e| e.category == "even")
            .unwrap();
        assert_eq!(hits.len(), 5);
        assert!(hits.iter().all(|h| h.category == "even"));
    }

    #[test]
    fn store_round_trips_through_files() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = DescriptorStore::new(DESCRIPTOR_DIM);
        for i in 0..7 {
            store
                .add(&format!("s{i}"), "cat", &random_descriptor(&mut rng))
                .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let back = DescriptorStore::load(dir.path()).unwrap();
        assert_eq!(back.len(), store.len());
        assert_eq!(back.dim(), store.dim());
        let q = random_descriptor(&mut rng);
        assert_eq!(store.nearest(&q, 7).unwrap(), back.nearest(&q, 7).unwrap());
    }

    #[test]
    fn point_cloud_df_is_zero_at_points() {
        let pts = vec![Vector3::new(0.25, 0.0, 0.0), Vector3::new(-0.25, 0.1, 0.3)];
        let df = df_from_points(&pts, 100).unwrap();
        for p in &pts {
            let idx = df.index_of(p).unwrap();
            // Within half a voxel diagonal of a sample point.
            assert!(f64::from(*df.get(idx)) <= df.voxel_size() * 0.9);
        }
        let serial = df_from_points_serial(&pts, 100).unwrap();
        assert_eq!(df.cells(), serial.cells());
    }
}
