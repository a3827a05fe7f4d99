//! Affine transforms and mask-overlap registration.
//!
//! An `AffineParams` maps an output voxel coordinate x (about the volume
//! center c) to a source coordinate: src = L * (x - c) + t + c. Warping is
//! backward: each output voxel samples the source volume trilinearly at the
//! mapped coordinate with clamp-to-edge.
//!
//! Registration maximizes soft Dice overlap of the warped moving mask with
//! the fixed mask, initialized by centroid and principal-axes moment
//! matching and refined by coordinate descent with step halving.

use crate::error::{CoreError, Result};
use crate::mask::Mask;
use crate::volume::Volume;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub const MIN_DETERMINANT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub linear: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            linear: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 0.0],
        }
    }

    pub fn from_vec12(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(CoreError::InvalidArgument(format!(
                "affine parameter vector must have 12 entries, got {}",
                v.len()
            )));
        }
        Ok(Self {
            linear: [
                [v[0], v[1], v[2]],
                [v[3], v[4], v[5]],
                [v[6], v[7], v[8]],
            ],
            translation: [v[9], v[10], v[11]],
        })
    }

    pub fn to_vec12(&self) -> [f64; 12] {
        let l = &self.linear;
        [
            l[0][0],
            l[0][1],
            l[0][2],
            l[1][0],
            l[1][1],
            l[1][2],
            l[2][0],
            l[2][1],
            l[2][2],
            self.translation[0],
            self.translation[1],
            self.translation[2],
        ]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&[
            self.linear[0][0],
            self.linear[0][1],
            self.linear[0][2],
            self.linear[1][0],
            self.linear[1][1],
            self.linear[1][2],
            self.linear[2][0],
            self.linear[2][1],
            self.linear[2][2],
        ])
    }

    pub fn determinant(&self) -> f64 {
        self.matrix().determinant()
    }

    pub fn check_invertible(&self) -> Result<()> {
        if self.determinant().abs() <= MIN_DETERMINANT {
            return Err(CoreError::InvalidArgument(format!(
                "affine linear part is singular (det {})",
                self.determinant()
            )));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<AffineParams> {
        self.check_invertible()?;
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or_else(|| CoreError::InvalidArgument("affine not invertible".into()))?;
        let t = Vector3::new(
            self.translation[0],
            self.translation[1],
            self.translation[2],
        );
        let it = -(inv * t);
        Ok(AffineParams {
            linear: [
                [inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]],
                [inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]],
                [inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]],
            ],
            translation: [it[0], it[1], it[2]],
        })
    }

    /// Map an output-frame point to the source frame about `center`.
    #[inline]
    pub fn map_point(&self, p: [f64; 3], center: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
        let l = &self.linear;
        [
            l[0][0] * d[0] + l[0][1] * d[1] + l[0][2] * d[2] + self.translation[0] + center[0],
            l[1][0] * d[0] + l[1][1] * d[1] + l[1][2] * d[2] + self.translation[1] + center[1],
            l[2][0] * d[0] + l[2][1] * d[1] + l[2][2] * d[2] + self.translation[2] + center[2],
        ]
    }
}

pub fn volume_center(dims: [usize; 3]) -> [f64; 3] {
    [
        (dims[0] - 1) as f64 / 2.0,
        (dims[1] - 1) as f64 / 2.0,
        (dims[2] - 1) as f64 / 2.0,
    ]
}

/// Backward-warp a volume with trilinear sampling and clamp-to-edge.
pub fn apply_affine(v: &Volume, p: &AffineParams) -> Result<Volume> {
    p.check_invertible()?;
    let dims = v.dims();
    let center = volume_center(dims);
    let mut out = Volume::zeros(dims, v.spacing());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let src = p.map_point([x as f64, y as f64, z as f64], center);
                out.set(x, y, z, v.sample_trilinear(src[0], src[1], src[2]));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub params: AffineParams,
    pub dice_before: f64,
    pub dice_after: f64,
    /// Set when the achieved Dice stays below 0.5.
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RegistrationOptions {
    pub max_sweeps: usize,
    pub dice_tolerance: f64,
    pub linear_step: f64,
    pub translation_step: f64,
    pub min_step: f64,
}

impl Default for RegistrationOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            dice_tolerance: 1e-4,
            linear_step: 0.02,
            translation_step: 0.5,
            min_step: 1e-3,
        }
    }
}

struct DiceEvaluator {
    moving: Volume,
    fixed: Volume,
    fixed_sum: f64,
    bbox_lo: [usize; 3],
    bbox_hi: [usize; 3],
    center: [f64; 3],
}

fn support_box(v: &Volume) -> Option<([usize; 3], [usize; 3])> {
    let dims = v.dims();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if v.get(x, y, z) > 0.0 {
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

impl DiceEvaluator {
    fn new(moving: &Volume, fixed: &Volume) -> Result<Self> {
        if moving.dims() != fixed.dims() {
            return Err(CoreError::DimMismatch("registration masks".into()));
        }
        let (mlo, mhi) = support_box(moving)
            .ok_or_else(|| CoreError::Registration("moving mask is empty".into()))?;
        let (flo, fhi) = support_box(fixed)
            .ok_or_else(|| CoreError::Registration("fixed mask is empty".into()))?;
        let dims = fixed.dims();
        // Evaluate in a padded union box so warped support stays inside.
        let pad = 9usize;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            lo[a] = mlo[a].min(flo[a]).saturating_sub(pad);
            hi[a] = (mhi[a].max(fhi[a]) + pad).min(dims[a] - 1);
        }
        let fixed_sum = fixed.voxels().iter().sum();
        Ok(Self {
            moving: moving.clone(),
            fixed: fixed.clone(),
            fixed_sum,
            bbox_lo: lo,
            bbox_hi: hi,
            center: volume_center(dims),
        })
    }

    /// Soft Dice 2*sum(w*f) / (sum(w) + sum(f)) with w the trilinearly
    /// warped moving mask evaluated over the padded bounding box.
    fn dice(&self, p: &AffineParams) -> f64 {
        let mut inter = 0.0;
        let mut warped_sum = 0.0;
        for z in self.bbox_lo[2]..=self.bbox_hi[2] {
            for y in self.bbox_lo[1]..=self.bbox_hi[1] {
                for x in self.bbox_lo[0]..=self.bbox_hi[0] {
                    let src = p.map_point([x as f64, y as f64, z as f64], self.center);
                    let w = self.moving.sample_trilinear(src[0], src[1], src[2]);
                    if w > 0.0 {
                        warped_sum += w;
                        let f = self.fixed.get(x, y, z);
                        if f > 0.0 {
                            inter += w * f;
                        }
                    }
                }
            }
        }
        let denom = warped_sum + self.fixed_sum;
        if denom == 0.0 {
            0.0
        } else {
            2.0 * inter / denom
        }
    }
}

/// Centroid + principal-axes moment matching. Returns the backward-warp
/// params that approximately map the fixed frame onto the moving mask.
fn moment_init(moving: &Volume, fixed: &Volume) -> Option<AffineParams> {
    let (cm, covm) = field_moments(moving)?;
    let (cf, covf) = field_moments(fixed)?;

    let em = nalgebra::SymmetricEigen::new(covm);
    let ef = nalgebra::SymmetricEigen::new(covf);
    let (vm, lm) = sorted_axes(&em);
    let (mut vf, lf) = sorted_axes(&ef);

    // Align eigenvector signs so the implied rotation is near identity.
    for i in 0..3 {
        if vf.column(i).dot(&vm.column(i)) < 0.0 {
            let col = -vf.column(i).clone_owned();
            vf.set_column(i, &col);
        }
    }
    let mut scale = Matrix3::zeros();
    for i in 0..3 {
        let s = (lf[i].max(1e-9) / lm[i].max(1e-9)).sqrt();
        scale[(i, i)] = s;
    }
    // Forward map moving -> fixed; the warp uses its inverse.
    let forward = vf * scale * vm.transpose();
    let linear = forward.try_inverse()?;
    if linear.determinant().abs() <= MIN_DETERMINANT {
        return None;
    }
    let center = Vector3::from(volume_center(moving.dims()));
    let cm = Vector3::from(cm);
    let cf = Vector3::from(cf);
    let t = cm - center - linear * (cf - center);
    Some(AffineParams {
        linear: [
            [linear[(0, 0)], linear[(0, 1)], linear[(0, 2)]],
            [linear[(1, 0)], linear[(1, 1)], linear[(1, 2)]],
            [linear[(2, 0)], linear[(2, 1)], linear[(2, 2)]],
        ],
        translation: [t[0], t[1], t[2]],
    })
}

fn sorted_axes(eig: &nalgebra::SymmetricEigen<f64, nalgebra::U3>) -> (Matrix3<f64>, [f64; 3]) {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vecs = Matrix3::zeros();
    let mut vals = [0.0; 3];
    for (i, &o) in order.iter().enumerate() {
        vecs.set_column(i, &eig.eigenvectors.column(o).clone_owned());
        vals[i] = eig.eigenvalues[o];
    }
    (vecs, vals)
}

fn field_moments(v: &Volume) -> Option<([f64; 3], Matrix3<f64>)> {
    let dims = v.dims();
    let mut total = 0.0;
    let mut c = Vector3::zeros();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let w = v.get(x, y, z);
                if w > 0.0 {
                    total += w;
                    c += w * Vector3::new(x as f64, y as f64, z as f64);
                }
            }
        }
    }
    if total <= 0.0 {
        return None;
    }
    c /= total;
    let mut cov = Matrix3::zeros();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let w = v.get(x, y, z);
                if w > 0.0 {
                    let d = Vector3::new(x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]);
                    cov += w * d * d.transpose();
                }
            }
        }
    }
    Some(([c[0], c[1], c[2]], cov / total))
}

/// Register binary masks by maximizing soft Dice of the trilinearly warped
/// moving mask against the fixed mask.
pub fn affine_register(
    moving: &Mask,
    fixed: &Mask,
    opts: &RegistrationOptions,
) -> Result<RegistrationResult> {
    affine_register_fields(
        &moving.to_volume([1.0; 3]),
        &fixed.to_volume([1.0; 3]),
        opts,
    )
}

/// Field variant: the inputs may carry fractional (antialiased) boundary
/// values in [0, 1], which gives the overlap objective sub-voxel accuracy.
/// The accepted result never scores below the identity alignment, and the
/// sweep-to-sweep objective is monotone by construction.
pub fn affine_register_fields(
    moving: &Volume,
    fixed: &Volume,
    opts: &RegistrationOptions,
) -> Result<RegistrationResult> {
    let eval = DiceEvaluator::new(moving, fixed)?;
    let identity = AffineParams::identity();
    let dice_before = eval.dice(&identity);

    let mut best = identity;
    let mut best_dice = dice_before;
    if let Some(init) = moment_init(moving, fixed) {
        let d = eval.dice(&init);
        if d > best_dice {
            best = init;
            best_dice = d;
        }
    }

    let mut p = best.to_vec12();
    let mut steps = [0.0f64; 12];
    for (i, s) in steps.iter_mut().enumerate() {
        *s = if i < 9 {
            opts.linear_step
        } else {
            opts.translation_step
        };
    }

    for _sweep in 0..opts.max_sweeps {
        let sweep_start = best_dice;
        for i in 0..12 {
            if steps[i] < opts.min_step {
                continue;
            }
            let mut improved = false;
            for dir in [1.0, -1.0] {
                let mut candidate = p;
                candidate[i] += dir * steps[i];
                let params = AffineParams::from_vec12(&candidate)?;
                if params.determinant().abs() <= MIN_DETERMINANT {
                    continue;
                }
                let d = eval.dice(&params);
                if d > best_dice {
                    best_dice = d;
                    p = candidate;
                    best = params;
                    improved = true;
                    break;
                }
            }
            if !improved {
                steps[i] *= 0.5;
            }
        }
        let all_converged = steps.iter().all(|&s| s < opts.min_step);
        if best_dice - sweep_start < opts.dice_tolerance && all_converged {
            break;
        }
    }

    let warning = (best_dice < 0.5).then(|| format!("poor alignment: dice {best_dice:.3}"));
    Ok(RegistrationResult {
        params: best,
        dice_before,
        dice_after: best_dice,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Mask;

    fn ellipsoid_mask(dims: [usize; 3], c: [f64; 3], r: [f64; 3]) -> Mask {
        let mut m = Mask::empty(dims);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let q = ((x as f64 - c[0]) / r[0]).powi(2)
                        + ((y as f64 - c[1]) / r[1]).powi(2)
                        + ((z as f64 - c[2]) / r[2]).powi(2);
                    if q <= 1.0 {
                        m.set(x, y, z, true);
                    }
                }
            }
        }
        m
    }

    #[test]
    fn identity_warp_is_exact() {
        let dims = [10, 9, 8];
        let mut v = Volume::zeros(dims, [1.0; 3]);
        for (i, val) in v.voxels_mut().iter_mut().enumerate() {
            *val = (i % 17) as f64 * 0.05;
        }
        let w = apply_affine(&v, &AffineParams::identity()).unwrap();
        for (a, b) in w.voxels().iter().zip(v.voxels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn integer_translation_moves_spike_exactly() {
        let dims = [9, 9, 9];
        let mut v = Volume::zeros(dims, [1.0; 3]);
        v.set(3, 4, 5, 1.0);
        // Backward warp: output(x) = input(x + t), so t = (1, -1, 2) moves
        // the spike from (3,4,5) to (2,5,3).
        let p = AffineParams {
            linear: AffineParams::identity().linear,
            translation: [1.0, -1.0, 2.0],
        };
        let w = apply_affine(&v, &p).unwrap();
        assert_eq!(w.get(2, 5, 3), 1.0);
        assert_eq!(w.voxels().iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn inverse_composition_recovers_smooth_volume() {
        let dims = [16, 16, 16];
        let mut v = Volume::zeros(dims, [1.0; 3]);
        for z in 0..16 {
            for y in 0..16 {
                for x in 0..16 {
                    let val = ((x as f64) / 15.0 * std::f64::consts::PI).sin()
                        * ((y as f64) / 15.0 * 2.0).cos()
                        * (0.5 + 0.5 * (z as f64) / 15.0);
                    v.set(x, y, z, val);
                }
            }
        }
        let angle: f64 = 0.1;
        let p = AffineParams {
            linear: [
                [angle.cos(), -angle.sin(), 0.0],
                [angle.sin(), angle.cos(), 0.0],
                [0.0, 0.0, 1.02],
            ],
            translation: [0.7, -0.3, 0.2],
        };
        let inv = p.inverse().unwrap();
        let there = apply_affine(&v, &p).unwrap();
        let back = apply_affine(&there, &inv).unwrap();
        // Interior RMS error stays within interpolation tolerance.
        let mut sq = 0.0;
        let mut n = 0usize;
        for z in 3..13 {
            for y in 3..13 {
                for x in 3..13 {
                    let d = back.get(x, y, z) - v.get(x, y, z);
                    sq += d * d;
                    n += 1;
                }
            }
        }
        let rms = (sq / n as f64).sqrt();
        assert!(rms < 1e-2, "round-trip rms {rms}");
    }

    #[test]
    fn singular_linear_part_rejected() {
        let v = Volume::zeros([4, 4, 4], [1.0; 3]);
        let p = AffineParams {
            linear: [[0.0; 3]; 3],
            translation: [0.0; 3],
        };
        assert!(apply_affine(&v, &p).is_err());
    }

    #[test]
    fn register_identical_masks_yields_identity() {
        let m = ellipsoid_mask([32, 32, 32], [15.5, 15.5, 15.5], [8.0, 6.0, 5.0]);
        let r = affine_register(&m, &m, &RegistrationOptions::default()).unwrap();
        for (i, v) in r.params.to_vec12().iter().enumerate() {
            let expect = if i % 4 == 0 && i < 9 { 1.0 } else { 0.0 };
            let tol = if i < 9 { 1e-2 } else { 0.1 };
            assert!(
                (v - expect).abs() <= tol,
                "param {i} = {v}, expected about {expect}"
            );
        }
        assert!(r.dice_after >= r.dice_before);
    }

    #[test]
    fn register_recovers_translation() {
        let fixed = ellipsoid_mask([32, 32, 32], [18.5, 15.5, 15.5], [7.0, 6.0, 5.0]);
        let moving = ellipsoid_mask([32, 32, 32], [15.5, 15.5, 15.5], [7.0, 6.0, 5.0]);
        // fixed = moving translated by (3,0,0): aligning needs t ~ (-3,0,0)
        // in backward-warp convention.
        let r = affine_register(&moving, &fixed, &RegistrationOptions::default()).unwrap();
        assert!(
            (r.params.translation[0] + 3.0).abs() < 0.5,
            "tx = {}",
            r.params.translation[0]
        );
        assert!(r.params.translation[1].abs() < 0.5);
        assert!(r.params.translation[2].abs() < 0.5);
        assert!(r.dice_after > 0.97, "dice {}", r.dice_after);
        assert!(r.dice_after >= r.dice_before);
        assert!(r.warning.is_none());
    }

    #[test]
    fn inverse_round_trips_points() {
        let p = AffineParams {
            linear: [[1.02, 0.05, 0.0], [-0.04, 0.98, 0.01], [0.0, 0.02, 1.01]],
            translation: [2.0, -1.0, 0.5],
        };
        let inv = p.inverse().unwrap();
        let c = [10.0, 10.0, 10.0];
        let x = [3.0, 7.0, 12.0];
        let y = p.map_point(x, c);
        let back = inv.map_point(y, c);
        for a in 0..3 {
            assert!((back[a] - x[a]).abs() < 1e-10);
        }
    }
}
