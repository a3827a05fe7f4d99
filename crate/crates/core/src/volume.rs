//! Dense 3D scalar volumes with physical spacing.
//!
//! Voxels are stored in x-fastest (row-major over `[z][y][x]`) order as f64.
//! The on-disk container quantizes to f32 (see `rvol`), so generators that
//! need byte-stable round trips emit f32-representable values.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    voxels: Vec<f64>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], voxels: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(CoreError::InvalidArgument(format!(
                "volume dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(CoreError::InvalidArgument(format!(
                "volume spacing must be positive and finite, got {spacing:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if voxels.len() != n {
            return Err(CoreError::DimMismatch(format!(
                "voxel count {} does not match dims {:?} (expected {})",
                voxels.len(),
                dims,
                n
            )));
        }
        Ok(Self {
            dims,
            spacing,
            voxels,
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        Self::new(dims, spacing, vec![0.0; dims[0] * dims[1] * dims[2]])
            .expect("zero volume construction")
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: f64) -> Self {
        Self::new(dims, spacing, vec![value; dims[0] * dims[1] * dims[2]])
            .expect("filled volume construction")
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [f64] {
        &mut self.voxels
    }

    pub fn into_voxels(self) -> Vec<f64> {
        self.voxels
    }

    /// Linear index of voxel (x, y, z); x varies fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let i = self.index(x, y, z);
        self.voxels[i] = value;
    }

    pub fn same_grid(&self, other: &Volume) -> bool {
        self.dims == other.dims
    }

    pub fn check_same_dims(&self, other: &Volume, context: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(CoreError::DimMismatch(format!(
                "{context}: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if let Some(i) = self.voxels.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(format!(
                "{context}: voxel {} is {}",
                i, self.voxels[i]
            )));
        }
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.voxels {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            voxels: self.voxels.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Volume, f: impl Fn(f64, f64) -> f64) -> Result<Volume> {
        self.check_same_dims(other, "zip_map")?;
        Ok(Volume {
            dims: self.dims,
            spacing: self.spacing,
            voxels: self
                .voxels
                .iter()
                .zip(&other.voxels)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Round every voxel to the nearest f32. Used by generators so volumes
    /// survive the f32 on-disk container bit-exactly.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.voxels {
            *v = *v as f32 as f64;
        }
    }

    /// Sample at a continuous voxel coordinate with trilinear interpolation
    /// and clamp-to-edge handling outside the grid.
    pub fn sample_trilinear(&self, x: f64, y: f64, z: f64) -> f64 {
        let [nx, ny, nz] = self.dims;
        let cx = x.clamp(0.0, (nx - 1) as f64);
        let cy = y.clamp(0.0, (ny - 1) as f64);
        let cz = z.clamp(0.0, (nz - 1) as f64);
        let x0 = cx.floor() as usize;
        let y0 = cy.floor() as usize;
        let z0 = cz.floor() as usize;
        let x1 = (x0 + 1).min(nx - 1);
        let y1 = (y0 + 1).min(ny - 1);
        let z1 = (z0 + 1).min(nz - 1);
        let fx = cx - x0 as f64;
        let fy = cy - y0 as f64;
        let fz = cz - z0 as f64;

        let v000 = self.get(x0, y0, z0);
        let v100 = self.get(x1, y0, z0);
        let v010 = self.get(x0, y1, z0);
        let v110 = self.get(x1, y1, z0);
        let v001 = self.get(x0, y0, z1);
        let v101 = self.get(x1, y0, z1);
        let v011 = self.get(x0, y1, z1);
        let v111 = self.get(x1, y1, z1);

        let c00 = v000 + fx * (v100 - v000);
        let c10 = v010 + fx * (v110 - v010);
        let c01 = v001 + fx * (v101 - v001);
        let c11 = v011 + fx * (v111 - v011);
        let c0 = c00 + fy * (c10 - c00);
        let c1 = c01 + fy * (c11 - c01);
        c0 + fz * (c1 - c0)
    }
}

/// Min-max normalization to [0, 1]. A constant volume maps to all zeros so
/// the degenerate range never divides by zero.
pub fn minmax_normalize(v: &Volume) -> Result<Volume> {
    v.check_finite("minmax_normalize input")?;
    let (lo, hi) = v.min_max();
    if hi == lo {
        return Ok(Volume::zeros(v.dims(), v.spacing()));
    }
    let scale = 1.0 / (hi - lo);
    Ok(v.map(|x| (x - lo) * scale))
}

/// Resample to a new voxel spacing with trilinear interpolation.
///
/// The grid is endpoint-aligned: output dims along each axis are
/// `round((n - 1) * spacing / target) + 1`, so resampling a {0,1} ramp from
/// spacing 2 to spacing 1 yields {0, 0.5, 1} and same-spacing resampling is
/// the identity.
pub fn resample_trilinear(v: &Volume, target_spacing: [f64; 3]) -> Result<Volume> {
    if target_spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(CoreError::InvalidArgument(format!(
            "target spacing must be positive, got {target_spacing:?}"
        )));
    }
    let dims = v.dims();
    let spacing = v.spacing();
    let mut out_dims = [0usize; 3];
    for a in 0..3 {
        let extent = (dims[a] - 1) as f64 * spacing[a];
        let n = (extent / target_spacing[a]).round() as i64 + 1;
        if n <= 0 {
            return Err(CoreError::InvalidArgument(format!(
                "resample would produce empty axis {a}"
            )));
        }
        out_dims[a] = n as usize;
    }
    let mut out = Volume::zeros(out_dims, target_spacing);
    let step = [
        target_spacing[0] / spacing[0],
        target_spacing[1] / spacing[1],
        target_spacing[2] / spacing[2],
    ];
    for z in 0..out_dims[2] {
        let sz = z as f64 * step[2];
        for y in 0..out_dims[1] {
            let sy = y as f64 * step[1];
            for x in 0..out_dims[0] {
                let sx = x as f64 * step[0];
                let val = v.sample_trilinear(sx, sy, sz);
                out.set(x, y, z, val);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_spreads_values() {
        let v = Volume::new([3, 1, 1], [1.0; 3], vec![2.0, 4.0, 6.0]).unwrap();
        let n = minmax_normalize(&v).unwrap();
        assert_eq!(n.voxels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_constant_is_zero() {
        let v = Volume::filled([2, 2, 2], [1.0; 3], 5.0);
        let n = minmax_normalize(&v).unwrap();
        assert!(n.voxels().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalize_identity_on_unit_range() {
        let v = Volume::new([4, 1, 1], [1.0; 3], vec![0.0, 1.0, 0.25, 0.75]).unwrap();
        let n = minmax_normalize(&v).unwrap();
        assert_eq!(n.voxels(), v.voxels());
    }

    #[test]
    fn normalize_idempotent() {
        let v = Volume::new([4, 1, 1], [1.0; 3], vec![3.0, -1.0, 0.5, 2.0]).unwrap();
        let once = minmax_normalize(&v).unwrap();
        let twice = minmax_normalize(&once).unwrap();
        for (a, b) in once.voxels().iter().zip(twice.voxels()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_rejects_nan() {
        let v = Volume::new([2, 1, 1], [1.0; 3], vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(
            minmax_normalize(&v),
            Err(CoreError::NonFinite(_))
        ));
    }

    #[test]
    fn resample_identity_same_spacing() {
        let v = Volume::new(
            [3, 2, 2],
            [1.0; 3],
            (0..12).map(|i| i as f64 * 0.1).collect(),
        )
        .unwrap();
        let r = resample_trilinear(&v, [1.0; 3]).unwrap();
        assert_eq!(r.dims(), v.dims());
        for (a, b) in r.voxels().iter().zip(v.voxels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_ramp_doubles() {
        // {0,1} at spacing 2 along x -> {0, 0.5, 1} at spacing 1.
        let v = Volume::new([2, 1, 1], [2.0, 1.0, 1.0], vec![0.0, 1.0]).unwrap();
        let r = resample_trilinear(&v, [1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.dims(), [3, 1, 1]);
        assert_eq!(r.voxels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn resample_constant_stays_constant() {
        let v = Volume::filled([4, 4, 4], [1.5, 2.0, 0.7], 0.3);
        let r = resample_trilinear(&v, [1.0; 3]).unwrap();
        assert!(r.voxels().iter().all(|&x| (x - 0.3).abs() < 1e-12));
        assert_eq!(r.spacing(), [1.0; 3]);
    }

    #[test]
    fn resample_rejects_nonpositive_spacing() {
        let v = Volume::filled([2, 2, 2], [1.0; 3], 0.0);
        assert!(resample_trilinear(&v, [0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn trilinear_clamps_at_edges() {
        let v = Volume::new([2, 1, 1], [1.0; 3], vec![1.0, 3.0]).unwrap();
        assert_eq!(v.sample_trilinear(-5.0, 0.0, 0.0), 1.0);
        assert_eq!(v.sample_trilinear(9.0, 0.0, 0.0), 3.0);
        assert!((v.sample_trilinear(0.5, 0.0, 0.0) - 2.0).abs() < 1e-12);
    }
}
