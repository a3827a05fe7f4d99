//! Overlapped patch extraction and overlap-averaged reassembly.
//!
//! Offsets step by `stride` along each axis and the last patch is clamped to
//! end at the volume boundary, so every voxel is covered by at least one
//! patch and every patch has exactly the requested size.

use crate::error::{CoreError, Result};
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: [usize; 3],
    pub stride: [usize; 3],
    pub offsets: Vec<[usize; 3]>,
    pub source_dims: [usize; 3],
}

/// Offsets along one axis: 0, stride, 2*stride, ... with the final offset
/// clamped to `dim - size`.
pub fn axis_offsets(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    debug_assert!(size <= dim && stride > 0);
    let last = dim - size;
    let mut offs = Vec::new();
    let mut o = 0;
    loop {
        if o >= last {
            offs.push(last);
            break;
        }
        offs.push(o);
        o += stride;
    }
    offs
}

pub fn extract_patches(
    v: &Volume,
    size: [usize; 3],
    stride: [usize; 3],
) -> Result<(PatchGrid, Vec<Volume>)> {
    let dims = v.dims();
    for a in 0..3 {
        if size[a] == 0 || stride[a] == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "patch size and stride must be positive, got size {size:?} stride {stride:?}"
            )));
        }
        if size[a] > dims[a] {
            return Err(CoreError::InvalidArgument(format!(
                "patch size {size:?} exceeds volume dims {dims:?} on axis {a}"
            )));
        }
        if stride[a] > size[a] {
            return Err(CoreError::InvalidArgument(format!(
                "stride {stride:?} exceeds patch size {size:?} on axis {a}; coverage would have gaps"
            )));
        }
    }

    let ox = axis_offsets(dims[0], size[0], stride[0]);
    let oy = axis_offsets(dims[1], size[1], stride[1]);
    let oz = axis_offsets(dims[2], size[2], stride[2]);

    let mut offsets = Vec::with_capacity(ox.len() * oy.len() * oz.len());
    let mut patches = Vec::with_capacity(offsets.capacity());
    for &z0 in &oz {
        for &y0 in &oy {
            for &x0 in &ox {
                offsets.push([x0, y0, z0]);
                let mut voxels = Vec::with_capacity(size[0] * size[1] * size[2]);
                for z in 0..size[2] {
                    for y in 0..size[1] {
                        let row = v.index(x0, y0 + y, z0 + z);
                        voxels.extend_from_slice(&v.voxels()[row..row + size[0]]);
                    }
                }
                patches.push(Volume::new(size, v.spacing(), voxels)?);
            }
        }
    }

    Ok((
        PatchGrid {
            patch_size: size,
            stride,
            offsets,
            source_dims: dims,
        },
        patches,
    ))
}

/// Copy a single patch at the given offset.
pub fn crop_patch(v: &Volume, offset: [usize; 3], size: [usize; 3]) -> Result<Volume> {
    let dims = v.dims();
    for a in 0..3 {
        if offset[a] + size[a] > dims[a] {
            return Err(CoreError::InvalidArgument(format!(
                "patch at {offset:?} with size {size:?} exceeds dims {dims:?}"
            )));
        }
    }
    let mut voxels = Vec::with_capacity(size[0] * size[1] * size[2]);
    for z in 0..size[2] {
        for y in 0..size[1] {
            let row = v.index(offset[0], offset[1] + y, offset[2] + z);
            voxels.extend_from_slice(&v.voxels()[row..row + size[0]]);
        }
    }
    Volume::new(size, v.spacing(), voxels)
}

/// Inverse of `extract_patches`: overlapping voxels are averaged with
/// uniform weights.
pub fn assemble_patches(grid: &PatchGrid, patches: &[Volume]) -> Result<Volume> {
    if patches.len() != grid.offsets.len() {
        return Err(CoreError::DimMismatch(format!(
            "patch count {} does not match grid offsets {}",
            patches.len(),
            grid.offsets.len()
        )));
    }
    let size = grid.patch_size;
    let spacing = patches
        .first()
        .map(|p| p.spacing())
        .unwrap_or([1.0, 1.0, 1.0]);
    let mut sum = Volume::zeros(grid.source_dims, spacing);
    let mut count = vec![0u32; sum.len()];

    for (patch, &[x0, y0, z0]) in patches.iter().zip(&grid.offsets) {
        if patch.dims() != size {
            return Err(CoreError::DimMismatch(format!(
                "patch dims {:?} do not match grid patch size {:?}",
                patch.dims(),
                size
            )));
        }
        for z in 0..size[2] {
            for y in 0..size[1] {
                let dst = sum.index(x0, y0 + y, z0 + z);
                let src = patch.index(0, y, z);
                let prow = &patch.voxels()[src..src + size[0]];
                let srow = &mut sum.voxels_mut()[dst..dst + size[0]];
                for (s, p) in srow.iter_mut().zip(prow) {
                    *s += p;
                }
                for c in &mut count[dst..dst + size[0]] {
                    *c += 1;
                }
            }
        }
    }

    for (s, &c) in sum.voxels_mut().iter_mut().zip(&count) {
        debug_assert!(c > 0, "patch grid left a voxel uncovered");
        *s /= c as f64;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_volume(dims: [usize; 3], seed: u64) -> Volume {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = dims[0] * dims[1] * dims[2];
        Volume::new(dims, [1.0; 3], (0..n).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn whole_volume_single_patch() {
        let v = random_volume([4, 4, 4], 1);
        let (grid, patches) = extract_patches(&v, [4, 4, 4], [4, 4, 4]).unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!(grid.offsets, vec![[0, 0, 0]]);
        assert_eq!(patches[0].voxels(), v.voxels());
        let back = assemble_patches(&grid, &patches).unwrap();
        assert_eq!(back.voxels(), v.voxels());
    }

    #[test]
    fn dims6_size4_stride2_gives_8_patches() {
        let v = random_volume([6, 6, 6], 2);
        let (grid, patches) = extract_patches(&v, [4, 4, 4], [2, 2, 2]).unwrap();
        assert_eq!(axis_offsets(6, 4, 2), vec![0, 2]);
        assert_eq!(patches.len(), 8);
        assert_eq!(grid.offsets.len(), 8);
    }

    #[test]
    fn clamped_final_offset() {
        assert_eq!(axis_offsets(5, 4, 4), vec![0, 1]);
        assert_eq!(axis_offsets(48, 32, 16), vec![0, 16]);
        assert_eq!(axis_offsets(7, 4, 2), vec![0, 2, 3]);
    }

    #[test]
    fn round_trip_within_1e12() {
        let v = random_volume([6, 6, 6], 3);
        let (grid, patches) = extract_patches(&v, [4, 4, 4], [2, 2, 2]).unwrap();
        let back = assemble_patches(&grid, &patches).unwrap();
        for (a, b) in back.voxels().iter().zip(v.voxels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_overlapping_patches_average() {
        let a = Volume::filled([3, 3, 3], [1.0; 3], 1.0);
        let b = Volume::filled([3, 3, 3], [1.0; 3], 2.0);
        let grid = PatchGrid {
            patch_size: [3, 3, 3],
            stride: [3, 3, 3],
            offsets: vec![[0, 0, 0], [0, 0, 0]],
            source_dims: [3, 3, 3],
        };
        let merged = assemble_patches(&grid, &[a, b]).unwrap();
        assert!(merged.voxels().iter().all(|&v| (v - 1.5).abs() < 1e-15));
    }

    #[test]
    fn count_mismatch_rejected() {
        let v = random_volume([4, 4, 4], 4);
        let (grid, patches) = extract_patches(&v, [2, 2, 2], [2, 2, 2]).unwrap();
        assert!(assemble_patches(&grid, &patches[..3]).is_err());
    }

    #[test]
    fn oversize_patch_rejected() {
        let v = random_volume([4, 4, 4], 5);
        assert!(extract_patches(&v, [5, 4, 4], [1, 1, 1]).is_err());
    }
}
