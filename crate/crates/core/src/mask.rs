//! Binary masks, threshold + connected-component lung segmentation, and
//! morphological dilation.

use crate::error::{CoreError, Result};
use crate::volume::Volume;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    dims: [usize; 3],
    side: Option<Side>,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], data: Vec<bool>, side: Option<Side>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(CoreError::DimMismatch(format!(
                "mask data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, side, data })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            side: None,
            data: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn side(&self) -> Option<Side> {
        self.side
    }

    pub fn set_side(&mut self, side: Side) {
        self.side = Some(side);
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn voxel_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        if self.dims != other.dims {
            return Err(CoreError::DimMismatch("mask union".into()));
        }
        Ok(Mask {
            dims: self.dims,
            side: None,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    pub fn centroid(&self) -> Option<[f64; 3]> {
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    if self.get(x, y, z) {
                        sum[0] += x as f64;
                        sum[1] += y as f64;
                        sum[2] += z as f64;
                        n += 1;
                    }
                }
            }
        }
        if n == 0 {
            None
        } else {
            Some([sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64])
        }
    }

    /// Inclusive bounding box of set voxels, or None when empty.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    if self.get(x, y, z) {
                        any = true;
                        let p = [x, y, z];
                        for a in 0..3 {
                            lo[a] = lo[a].min(p[a]);
                            hi[a] = hi[a].max(p[a]);
                        }
                    }
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// View as a 0/1 volume for warping and overlap arithmetic.
    pub fn to_volume(&self, spacing: [f64; 3]) -> Volume {
        Volume::new(
            self.dims,
            spacing,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dims are consistent")
    }

    pub fn from_volume_threshold(v: &Volume, threshold: f64) -> Mask {
        Mask {
            dims: v.dims(),
            side: None,
            data: v.voxels().iter().map(|&x| x > threshold).collect(),
        }
    }
}

/// Morphological dilation with a discrete Euclidean ball.
pub fn dilate(m: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return m.clone();
    }
    let r = radius as i64;
    let r2 = r * r;
    let mut offsets = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy + dz * dz <= r2 {
                    offsets.push([dx, dy, dz]);
                }
            }
        }
    }
    let dims = m.dims();
    let mut out = Mask::empty(dims);
    out.side = m.side;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if !m.get(x, y, z) {
                    continue;
                }
                for &[dx, dy, dz] in &offsets {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    let nz = z as i64 + dz;
                    if nx >= 0
                        && ny >= 0
                        && nz >= 0
                        && (nx as usize) < dims[0]
                        && (ny as usize) < dims[1]
                        && (nz as usize) < dims[2]
                    {
                        out.set(nx as usize, ny as usize, nz as usize, true);
                    }
                }
            }
        }
    }
    out
}

/// Fractional lung coverage recovered from intensities: 0 in background,
/// 1 inside a lung, with the antialiased surface ramp preserved. `gate`
/// restricts the field to one side's neighborhood.
pub fn soft_region_field(v: &Volume, gate: &Mask, low: f64, high: f64) -> Volume {
    let scale = 1.0 / (high - low);
    let mut out = Volume::zeros(v.dims(), v.spacing());
    for ((o, &x), &g) in out
        .voxels_mut()
        .iter_mut()
        .zip(v.voxels())
        .zip(gate.data())
    {
        if g {
            *o = ((x - low) * scale).clamp(0.0, 1.0);
        }
    }
    out
}

/// Grayscale dilation: max over a discrete Euclidean ball, preserving the
/// soft boundary ramp.
pub fn gray_dilate(v: &Volume, radius: usize) -> Volume {
    if radius == 0 {
        return v.clone();
    }
    let r = radius as i64;
    let r2 = r * r;
    let mut offsets = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy + dz * dz <= r2 {
                    offsets.push([dx, dy, dz]);
                }
            }
        }
    }
    let dims = v.dims();
    let mut out = Volume::zeros(dims, v.spacing());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let val = v.get(x, y, z);
                if val <= 0.0 {
                    continue;
                }
                for &[dx, dy, dz] in &offsets {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    let nz = z as i64 + dz;
                    if nx >= 0
                        && ny >= 0
                        && nz >= 0
                        && (nx as usize) < dims[0]
                        && (ny as usize) < dims[1]
                        && (nz as usize) < dims[2]
                    {
                        let i = out.index(nx as usize, ny as usize, nz as usize);
                        let slot = &mut out.voxels_mut()[i];
                        if val > *slot {
                            *slot = val;
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SegmentationOptions {
    pub threshold: f64,
    pub min_component_voxels: usize,
}

impl Default for SegmentationOptions {
    fn default() -> Self {
        Self {
            threshold: 0.3,
            min_component_voxels: 150,
        }
    }
}

/// Threshold the normalized volume and return the two largest 6-connected
/// components as (left, right) masks, ordered by centroid x.
pub fn segment_lungs(v: &Volume, opts: &SegmentationOptions) -> Result<(Mask, Mask)> {
    let dims = v.dims();
    let n = v.len();
    let mut labels = vec![0u32; n];
    let mut sizes: Vec<usize> = vec![0]; // label 0 = background
    let mut stack = Vec::new();

    let above = |i: usize| v.voxels()[i] > opts.threshold;
    for start in 0..n {
        if labels[start] != 0 || !above(start) {
            continue;
        }
        let label = sizes.len() as u32;
        sizes.push(0);
        stack.push(start);
        labels[start] = label;
        while let Some(i) = stack.pop() {
            sizes[label as usize] += 1;
            let z = i / (dims[0] * dims[1]);
            let rem = i % (dims[0] * dims[1]);
            let y = rem / dims[0];
            let x = rem % dims[0];
            let mut try_push = |nx: i64, ny: i64, nz: i64| {
                if nx < 0 || ny < 0 || nz < 0 {
                    return;
                }
                let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
                if nx >= dims[0] || ny >= dims[1] || nz >= dims[2] {
                    return;
                }
                let j = (nz * dims[1] + ny) * dims[0] + nx;
                if labels[j] == 0 && above(j) {
                    labels[j] = label;
                    stack.push(j);
                }
            };
            try_push(x as i64 - 1, y as i64, z as i64);
            try_push(x as i64 + 1, y as i64, z as i64);
            try_push(x as i64, y as i64 - 1, z as i64);
            try_push(x as i64, y as i64 + 1, z as i64);
            try_push(x as i64, y as i64, z as i64 - 1);
            try_push(x as i64, y as i64, z as i64 + 1);
        }
    }

    let mut candidates: Vec<(u32, usize)> = sizes
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &s)| s >= opts.min_component_voxels)
        .map(|(l, &s)| (l as u32, s))
        .collect();
    candidates.sort_by(|a, b| b.1.cmp(&a.1));
    if candidates.len() < 2 {
        return Err(CoreError::Segmentation(format!(
            "found {} component(s) of at least {} voxels above threshold {}, need 2",
            candidates.len(),
            opts.min_component_voxels,
            opts.threshold
        )));
    }

    let make_mask = |label: u32| -> Mask {
        Mask {
            dims,
            side: None,
            data: labels.iter().map(|&l| l == label).collect(),
        }
    };
    let mut a = make_mask(candidates[0].0);
    let mut b = make_mask(candidates[1].0);
    let ca = a.centroid().expect("component is nonempty");
    let cb = b.centroid().expect("component is nonempty");
    if ca[0] > cb[0] {
        std::mem::swap(&mut a, &mut b);
    }
    a.set_side(Side::Left);
    b.set_side(Side::Right);
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blob_volume() -> Volume {
        let dims = [20, 10, 10];
        let mut v = Volume::zeros(dims, [1.0; 3]);
        for z in 3..7 {
            for y in 3..7 {
                for x in 2..6 {
                    v.set(x, y, z, 0.8);
                }
                for x in 12..17 {
                    v.set(x, y, z, 0.8);
                }
            }
        }
        v
    }

    #[test]
    fn segments_two_components_by_x() {
        let v = two_blob_volume();
        let opts = SegmentationOptions {
            threshold: 0.3,
            min_component_voxels: 10,
        };
        let (left, right) = segment_lungs(&v, &opts).unwrap();
        assert_eq!(left.side(), Some(Side::Left));
        assert_eq!(right.side(), Some(Side::Right));
        assert_eq!(left.voxel_count(), 4 * 4 * 4);
        assert_eq!(right.voxel_count(), 5 * 4 * 4);
        assert!(left.centroid().unwrap()[0] < right.centroid().unwrap()[0]);
    }

    #[test]
    fn mirrored_volume_swaps_sides() {
        let v = two_blob_volume();
        let dims = v.dims();
        let mut mirrored = Volume::zeros(dims, [1.0; 3]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    mirrored.set(dims[0] - 1 - x, y, z, v.get(x, y, z));
                }
            }
        }
        let opts = SegmentationOptions {
            threshold: 0.3,
            min_component_voxels: 10,
        };
        let (l1, r1) = segment_lungs(&v, &opts).unwrap();
        let (l2, r2) = segment_lungs(&mirrored, &opts).unwrap();
        // The big blob was on the right; after mirroring it is on the left.
        assert_eq!(l2.voxel_count(), r1.voxel_count());
        assert_eq!(r2.voxel_count(), l1.voxel_count());
    }

    #[test]
    fn empty_volume_is_rejected() {
        let v = Volume::zeros([8, 8, 8], [1.0; 3]);
        assert!(matches!(
            segment_lungs(&v, &SegmentationOptions::default()),
            Err(CoreError::Segmentation(_))
        ));
    }

    #[test]
    fn dilate_zero_is_identity() {
        let mut m = Mask::empty([5, 5, 5]);
        m.set(2, 2, 2, true);
        assert_eq!(dilate(&m, 0), m);
    }

    #[test]
    fn dilate_single_voxel_radius_one() {
        let mut m = Mask::empty([5, 5, 5]);
        m.set(2, 2, 2, true);
        let d = dilate(&m, 1);
        // Euclidean ball of radius 1 = center plus 6 face neighbors.
        assert_eq!(d.voxel_count(), 7);
        assert!(d.get(2, 2, 2) && d.get(1, 2, 2) && d.get(3, 2, 2));
        assert!(d.get(2, 1, 2) && d.get(2, 3, 2) && d.get(2, 2, 1) && d.get(2, 2, 3));
    }

    #[test]
    fn dilation_is_monotone() {
        let mut m = Mask::empty([9, 9, 9]);
        m.set(4, 4, 4, true);
        m.set(2, 3, 4, true);
        let d = dilate(&m, 2);
        assert!(m.is_subset_of(&d));
        let d3 = dilate(&m, 3);
        assert!(d.is_subset_of(&d3));
    }
}
