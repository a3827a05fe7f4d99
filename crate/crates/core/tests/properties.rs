//! Property tests for the core invariants.

use ciresdiff_core::diffusion::posterior_coefficients;
use ciresdiff_core::metrics::psnr;
use ciresdiff_core::patch::{assemble_patches, extract_patches};
use ciresdiff_core::rvol::{load_volume, save_volume};
use ciresdiff_core::schedule::Schedule;
use ciresdiff_core::volume::{minmax_normalize, resample_trilinear, Volume};
use proptest::prelude::*;

fn volume_strategy(max_dim: usize) -> impl Strategy<Value = Volume> {
    (2usize..=max_dim, 2usize..=max_dim, 2usize..=max_dim).prop_flat_map(|(dx, dy, dz)| {
        let n = dx * dy * dz;
        proptest::collection::vec(-10.0f64..10.0, n)
            .prop_map(move |v| Volume::new([dx, dy, dz], [1.0; 3], v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn patch_round_trip_is_identity(
        v in volume_strategy(9),
        sx in 1usize..5, sy in 1usize..5, sz in 1usize..5,
        kx in 1usize..5, ky in 1usize..5, kz in 1usize..5,
    ) {
        let dims = v.dims();
        let size = [kx.min(dims[0]), ky.min(dims[1]), kz.min(dims[2])];
        let stride = [sx.min(size[0]), sy.min(size[1]), sz.min(size[2])];
        let (grid, patches) = extract_patches(&v, size, stride).unwrap();
        let back = assemble_patches(&grid, &patches).unwrap();
        for (a, b) in back.voxels().iter().zip(v.voxels()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn psnr_symmetry(v in volume_strategy(5), w in volume_strategy(5)) {
        if v.dims() == w.dims() {
            let ab = psnr(&v, &w, 20.0).unwrap();
            let ba = psnr(&w, &v, 20.0).unwrap();
            if ab.is_finite() {
                prop_assert!((ab - ba).abs() < 1e-12);
            } else {
                prop_assert!(ba.is_infinite());
            }
        }
    }

    #[test]
    fn normalize_is_idempotent_and_bounded(v in volume_strategy(5)) {
        let once = minmax_normalize(&v).unwrap();
        for &x in once.voxels() {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        let twice = minmax_normalize(&once).unwrap();
        for (a, b) in once.voxels().iter().zip(twice.voxels()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_same_spacing_is_identity(v in volume_strategy(6)) {
        let r = resample_trilinear(&v, v.spacing()).unwrap();
        prop_assert_eq!(r.dims(), v.dims());
        for (a, b) in r.voxels().iter().zip(v.voxels()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rvol_round_trip(v in volume_strategy(5), tag in 0u64..1_000_000) {
        // Quantize so the f32 container is lossless for this volume.
        let mut q = v.clone();
        q.quantize_f32();
        let path = std::env::temp_dir().join(format!("ciresdiff-prop-{tag}.rvol"));
        save_volume(&path, &q).unwrap();
        let loaded = load_volume(&path).unwrap();
        let _ = std::fs::remove_file(&path);
        prop_assert_eq!(loaded.dims(), q.dims());
        prop_assert_eq!(loaded.voxels(), q.voxels());
    }

    #[test]
    fn marginal_consistency_for_random_schedules(
        steps in 2usize..25,
        eta1 in 1e-4f64..0.01,
        noise in 0.2f64..3.0,
    ) {
        let s = Schedule::geometric(steps, eta1, 0.999, noise).unwrap();
        for t in 1..=steps {
            let (c_prev, c_hat, sigma) = posterior_coefficients(&s, t);
            let eta_t = s.eta(t);
            let eta_prev = s.eta(t - 1);
            prop_assert!((c_prev * eta_t - eta_prev).abs() <= 1e-12);
            prop_assert!((c_prev + c_hat - 1.0).abs() <= 1e-12);
            let var = c_prev * c_prev * noise * noise * eta_t + sigma * sigma;
            let expect = noise * noise * eta_prev;
            prop_assert!((var - expect).abs() <= 1e-10 * expect.max(1e-12));
        }
    }
}
