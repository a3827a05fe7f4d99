//! PSNR and SSIM for volumes, plus masked variants used by evaluation.

use crate::error::{CoreError, Result};
use crate::volume::Volume;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio in dB. Identical volumes report +inf.
pub fn psnr(a: &Volume, b: &Volume, data_range: f64) -> Result<f64> {
    a.check_same_dims(b, "psnr")?;
    if !(data_range > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "psnr data_range must be positive, got {data_range}"
        )));
    }
    let mse = a
        .voxels()
        .iter()
        .zip(b.voxels())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok(mse_to_psnr(mse, data_range))
}

/// PSNR over mask voxels only (mask > 0.5).
pub fn psnr_masked(a: &Volume, b: &Volume, mask: &Volume, data_range: f64) -> Result<f64> {
    a.check_same_dims(b, "psnr_masked")?;
    a.check_same_dims(mask, "psnr_masked mask")?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((&x, &y), &m) in a.voxels().iter().zip(b.voxels()).zip(mask.voxels()) {
        if m > 0.5 {
            sum += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(CoreError::InvalidArgument(
            "psnr_masked: empty mask".into(),
        ));
    }
    Ok(mse_to_psnr(sum / n as f64, data_range))
}

fn mse_to_psnr(mse: f64, data_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (data_range * data_range / mse).log10()
    }
}

/// Mean local SSIM with an 11^3 Gaussian window (sigma 1.5) over the region
/// where the full window fits, with standard stabilizers for data range 1.
pub fn ssim(a: &Volume, b: &Volume) -> Result<f64> {
    let (map, _) = ssim_map(a, b)?;
    let n = map.len() as f64;
    Ok(map.voxels().iter().sum::<f64>() / n)
}

/// Mean SSIM over mask voxels (mask sampled at each valid window center).
pub fn ssim_masked(a: &Volume, b: &Volume, mask: &Volume) -> Result<f64> {
    a.check_same_dims(mask, "ssim_masked mask")?;
    let (map, origin) = ssim_map(a, b)?;
    let md = map.dims();
    let mut sum = 0.0;
    let mut n = 0usize;
    for z in 0..md[2] {
        for y in 0..md[1] {
            for x in 0..md[0] {
                if mask.get(x + origin, y + origin, z + origin) > 0.5 {
                    sum += map.get(x, y, z);
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(CoreError::InvalidArgument(
            "ssim_masked: mask empty within valid window region".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// Per-voxel SSIM over the valid (full-window) region. Returns the map and
/// the offset of its origin in the source volume, `(SSIM_WINDOW - 1) / 2`.
pub fn ssim_map(a: &Volume, b: &Volume) -> Result<(Volume, usize)> {
    a.check_same_dims(b, "ssim")?;
    let dims = a.dims();
    if dims.iter().any(|&d| d < SSIM_WINDOW) {
        return Err(CoreError::InvalidArgument(format!(
            "ssim needs dims of at least {SSIM_WINDOW} per axis, got {dims:?}"
        )));
    }
    let range = 1.0;
    let c1 = (SSIM_K1 * range) * (SSIM_K1 * range);
    let c2 = (SSIM_K2 * range) * (SSIM_K2 * range);
    let kernel = gaussian_kernel();

    let mu_a = windowed_mean(a, &kernel);
    let mu_b = windowed_mean(b, &kernel);
    let aa = windowed_mean(&a.zip_map(a, |x, y| x * y)?, &kernel);
    let bb = windowed_mean(&b.zip_map(b, |x, y| x * y)?, &kernel);
    let ab = windowed_mean(&a.zip_map(b, |x, y| x * y)?, &kernel);

    let n = mu_a.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let ma = mu_a.voxels()[i];
        let mb = mu_b.voxels()[i];
        let va = aa.voxels()[i] - ma * ma;
        let vb = bb.voxels()[i] - mb * mb;
        let cov = ab.voxels()[i] - ma * mb;
        let val = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        out.push(val);
    }
    let map = Volume::new(mu_a.dims(), a.spacing(), out)?;
    Ok((map, (SSIM_WINDOW - 1) / 2))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW - 1) as f64 / 2.0;
    let mut k = [0.0; SSIM_WINDOW];
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Gaussian-weighted local mean in valid mode, applied separably per axis.
fn windowed_mean(v: &Volume, kernel: &[f64; SSIM_WINDOW]) -> Volume {
    let x = convolve_axis(v, kernel, 0);
    let y = convolve_axis(&x, kernel, 1);
    convolve_axis(&y, kernel, 2)
}

fn convolve_axis(v: &Volume, kernel: &[f64; SSIM_WINDOW], axis: usize) -> Volume {
    let dims = v.dims();
    let mut out_dims = dims;
    out_dims[axis] = dims[axis] - SSIM_WINDOW + 1;
    let mut out = Volume::zeros(out_dims, v.spacing());
    for z in 0..out_dims[2] {
        for y in 0..out_dims[1] {
            for x in 0..out_dims[0] {
                let mut acc = 0.0;
                for (k, &w) in kernel.iter().enumerate() {
                    let (sx, sy, sz) = match axis {
                        0 => (x + k, y, z),
                        1 => (x, y + k, z),
                        _ => (x, y, z + k),
                    };
                    acc += w * v.get(sx, sy, sz);
                }
                out.set(x, y, z, acc);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn psnr_identical_is_infinite() {
        let a = Volume::filled([4, 4, 4], [1.0; 3], 0.3);
        assert!(psnr(&a, &a, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn psnr_constant_offset() {
        let a = Volume::filled([4, 4, 4], [1.0; 3], 0.0);
        let b = Volume::filled([4, 4, 4], [1.0; 3], 0.5);
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!((p - 6.020599913279624).abs() < 1e-9);
    }

    #[test]
    fn psnr_is_symmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = Volume::new([4, 4, 4], [1.0; 3], (0..64).map(|_| rng.gen()).collect()).unwrap();
        let b = Volume::new([4, 4, 4], [1.0; 3], (0..64).map(|_| rng.gen()).collect()).unwrap();
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn psnr_rejects_dim_mismatch() {
        let a = Volume::filled([4, 4, 4], [1.0; 3], 0.0);
        let b = Volume::filled([4, 4, 3], [1.0; 3], 0.0);
        assert!(psnr(&a, &b, 1.0).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 13 * 13 * 13;
        let a = Volume::new([13, 13, 13], [1.0; 3], (0..n).map(|_| rng.gen()).collect()).unwrap();
        let s = ssim(&a, &a).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "ssim(a,a) = {s}");
    }

    /// Independent oracle: direct per-window Gaussian-weighted evaluation.
    fn oracle_ssim(a: &Volume, b: &Volume) -> f64 {
        let kernel = gaussian_kernel();
        let dims = a.dims();
        let c1 = (SSIM_K1) * (SSIM_K1);
        let c2 = (SSIM_K2) * (SSIM_K2);
        let mut total = 0.0;
        let mut count = 0usize;
        for z0 in 0..=(dims[2] - SSIM_WINDOW) {
            for y0 in 0..=(dims[1] - SSIM_WINDOW) {
                for x0 in 0..=(dims[0] - SSIM_WINDOW) {
                    let (mut ma, mut mb, mut maa, mut mbb, mut mab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for kz in 0..SSIM_WINDOW {
                        for ky in 0..SSIM_WINDOW {
                            for kx in 0..SSIM_WINDOW {
                                let w = kernel[kx] * kernel[ky] * kernel[kz];
                                let va = a.get(x0 + kx, y0 + ky, z0 + kz);
                                let vb = b.get(x0 + kx, y0 + ky, z0 + kz);
                                ma += w * va;
                                mb += w * vb;
                                maa += w * va * va;
                                mbb += w * vb * vb;
                                mab += w * va * vb;
                            }
                        }
                    }
                    let va = maa - ma * ma;
                    let vb = mbb - mb * mb;
                    let cov = mab - ma * mb;
                    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_constant_offset_matches_oracle() {
        let a = Volume::filled([12, 12, 12], [1.0; 3], 0.25);
        let b = Volume::filled([12, 12, 12], [1.0; 3], 0.75);
        let s = ssim(&a, &b).unwrap();
        let expected = oracle_ssim(&a, &b);
        assert!((s - expected).abs() < 1e-10, "{s} vs oracle {expected}");
        // Closed form for constants: variance terms vanish.
        let c1 = 0.0001;
        let closed = (2.0 * 0.25 * 0.75 + c1) / (0.25 * 0.25 + 0.75 * 0.75 + c1);
        assert!((s - closed).abs() < 1e-10);
    }

    #[test]
    fn ssim_random_matches_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 13 * 12 * 11;
        let dims = [13, 12, 11];
        let a = Volume::new(dims, [1.0; 3], (0..n).map(|_| rng.gen()).collect()).unwrap();
        let b = Volume::new(dims, [1.0; 3], (0..n).map(|_| rng.gen()).collect()).unwrap();
        let s = ssim(&a, &b).unwrap();
        let expected = oracle_ssim(&a, &b);
        assert!((s - expected).abs() < 1e-10, "{s} vs oracle {expected}");
    }

    #[test]
    fn ssim_is_symmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let n = 11 * 11 * 11;
        let a = Volume::new([11; 3], [1.0; 3], (0..n).map(|_| rng.gen()).collect()).unwrap();
        let b = Volume::new([11; 3], [1.0; 3], (0..n).map(|_| rng.gen()).collect()).unwrap();
        let s1 = ssim(&a, &b).unwrap();
        let s2 = ssim(&b, &a).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_volumes() {
        let a = Volume::filled([8, 8, 8], [1.0; 3], 0.1);
        assert!(ssim(&a, &a).is_err());
    }
}
