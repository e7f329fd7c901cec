//! Voxel-based overlap volume between two watertight meshes.

use super::query::IndexedMesh;
use super::vec3::Vec3;
use crate::{par, Error, Result};

/// Default voxel edge length: 1 mm.
pub const DEFAULT_VOXEL_EDGE: f64 = 1e-3;

/// Default cap on the number of voxels scanned per overlap query.
pub const DEFAULT_VOXEL_CAP: usize = 20_000_000;

/// Occupancy grid over the intersection of two meshes' bounding boxes.
#[derive(Debug)]
pub struct VoxelOverlapGrid {
    pub origin: Vec3,
    pub edge: f64,
    pub dims: [usize; 3],
    /// Per-voxel flags: bit 0 = center inside mesh A, bit 1 = inside mesh B.
    pub occupancy: Vec<u8>,
}

impl VoxelOverlapGrid {
    /// Samples voxel centers over the AABB intersection of `a` and `b`.
    ///
    /// Errors when either mesh is not watertight or the grid would exceed
    /// `cap` voxels.
    pub fn build(a: &IndexedMesh, b: &IndexedMesh, edge: f64, cap: usize) -> Result<Self> {
        if edge <= 0.0 {
            return Err(Error::Config("voxel edge must be positive".into()));
        }
        if !a.mesh.is_watertight() || !b.mesh.is_watertight() {
            return Err(Error::Mesh(
                "overlap volume requires watertight meshes".into(),
            ));
        }
        let (alo, ahi) = a.mesh.aabb();
        let (blo, bhi) = b.mesh.aabb();
        let lo = alo.max_by_component(blo);
        let hi = ahi.min_by_component(bhi);
        if lo.x >= hi.x || lo.y >= hi.y || lo.z >= hi.z {
            return Ok(VoxelOverlapGrid {
                origin: lo,
                edge,
                dims: [0, 0, 0],
                occupancy: Vec::new(),
            });
        }
        let nx = ((hi.x - lo.x) / edge).ceil() as usize;
        let ny = ((hi.y - lo.y) / edge).ceil() as usize;
        let nz = ((hi.z - lo.z) / edge).ceil() as usize;
        let total = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::Config("voxel grid size overflows".into()))?;
        if total > cap {
            return Err(Error::Config(format!(
                "voxel grid of {total} voxels exceeds the cap of {cap}; \
                 use a coarser edge or raise the cap"
            )));
        }
        // Slice-parallel scan; each z-slice is filled independently and
        // concatenated in order, so the grid is deterministic.
        let slices = par::map_range(nz, |iz| {
            let mut slice = vec![0u8; nx * ny];
            for iy in 0..ny {
                for ix in 0..nx {
                    let p = Vec3::new(
                        lo.x + (ix as f64 + 0.5) * edge,
                        lo.y + (iy as f64 + 0.5) * edge,
                        lo.z + (iz as f64 + 0.5) * edge,
                    );
                    let mut f = 0u8;
                    if a.contains(p).expect("watertightness checked above") {
                        f |= 1;
                    }
                    if b.contains(p).expect("watertightness checked above") {
                        f |= 2;
                    }
                    slice[iy * nx + ix] = f;
                }
            }
            slice
        });
        let mut occupancy = Vec::with_capacity(total);
        for s in slices {
            occupancy.extend_from_slice(&s);
        }
        Ok(VoxelOverlapGrid {
            origin: lo,
            edge,
            dims: [nx, ny, nz],
            occupancy,
        })
    }

    pub fn overlap_voxels(&self) -> usize {
        self.occupancy.iter().filter(|&&f| f == 3).count()
    }

    /// Overlap volume in cubic millimeters.
    pub fn overlap_volume_mm3(&self) -> f64 {
        self.overlap_voxels() as f64 * (self.edge * 1e3).powi(3)
    }
}

/// Volume (mm^3) of the region shared by two watertight meshes, measured by
/// counting voxel centers inside both.
pub fn penetration_volume(
    a: &IndexedMesh,
    b: &IndexedMesh,
    edge: f64,
    cap: usize,
) -> Result<f64> {
    Ok(VoxelOverlapGrid::build(a, b, edge, cap)?.overlap_volume_mm3())
}
