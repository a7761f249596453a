//! VXG1: one canonical binary layout for voxel grids.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "VXG1"     4 bytes
//! cell type tag    u32    (1 = tsdf d+w, 2 = f32 scalar, 3 = f32 3-vector, 4 = u8)
//! dims             3 x u32
//! origin           3 x f32
//! voxel size       f32
//! cells            dims.x * dims.y * dims.z raw cells, x-fastest
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;

const MAGIC: &[u8; 4] = b"VXG1";

/// A cell type with a fixed VXG1 encoding.
pub trait GridCell: Copy + Send + Sync + 'static {
    const TYPE_TAG: u32;
    const CELL_BYTES: usize;

    fn write_le(&self, buf: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl GridCell for f32 {
    const TYPE_TAG: u32 = 2;
    const CELL_BYTES: usize = 4;

    fn write_le(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl GridCell for [f32; 3] {
    const TYPE_TAG: u32 = 3;
    const CELL_BYTES: usize = 12;

    fn write_le(&self, buf: &mut Vec<u8>) {
        for v in self {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut out = [0.0f32; 3];
        for (k, v) in out.iter_mut().enumerate() {
            *v = f32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
        }
        out
    }
}

impl GridCell for u8 {
    const TYPE_TAG: u32 = 4;
    const CELL_BYTES: usize = 1;

    fn write_le(&self, buf: &mut Vec<u8>) {
        buf.push(*self);
    }

    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

pub fn write_grid<C: GridCell>(path: &Path, grid: &VoxelGrid<C>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&C::TYPE_TAG.to_le_bytes())?;
    for d in grid.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let o = grid.origin();
    for k in 0..3 {
        w.write_all(&(o[k] as f32).to_le_bytes())?;
    }
    w.write_all(&(grid.voxel_size() as f32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(grid.len() * C::CELL_BYTES);
    for c in grid.cells() {
        c.write_le(&mut buf);
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_grid<C: GridCell>(path: &Path) -> Result<VoxelGrid<C>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 36];
    r.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic, not a VXG1 file",
            path.display()
        )));
    }
    let tag = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if tag != C::TYPE_TAG {
        return Err(Error::Format(format!(
            "{}: cell type tag {} does not match expected {}",
            path.display(),
            tag,
            C::TYPE_TAG
        )));
    }
    let mut dims = [0usize; 3];
    for k in 0..3 {
        dims[k] = u32::from_le_bytes(header[8 + 4 * k..12 + 4 * k].try_into().unwrap()) as usize;
    }
    let mut origin = Vector3::zeros();
    for k in 0..3 {
        origin[k] = f64::from(f32::from_le_bytes(
            header[20 + 4 * k..24 + 4 * k].try_into().unwrap(),
        ));
    }
    let voxel_size = f64::from(f32::from_le_bytes(header[32..36].try_into().unwrap()));

    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Format("grid dims overflow".into()))?;
    let mut raw = vec![0u8; count * C::CELL_BYTES];
    r.read_exact(&mut raw)?;
    let cells = raw.chunks_exact(C::CELL_BYTES).map(C::read_le).collect();
    VoxelGrid::from_cells(dims, origin, voxel_size, cells)
}
