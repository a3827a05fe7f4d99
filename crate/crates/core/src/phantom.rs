//! Deterministic longitudinal lung phantoms with correlated function
//! records and progression labels.
//!
//! A phantom is two soft-edged ellipsoid lobes containing a handful of
//! brighter spherical lesions. The follow-up volume reuses the anatomy with
//! every lesion's radius and intensity scaled by a progression factor, is
//! rendered through a stored affine misalignment, and gets independent
//! noise. Function-record fields are monotone in lesion burden so the
//! serialized text genuinely carries progression information.

use crate::affine::{volume_center, AffineParams};
use crate::diffusion::standard_normal;
use crate::error::{CoreError, Result};
use crate::volume::Volume;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const BACKGROUND_INTENSITY: f64 = 0.05;
pub const LUNG_INTENSITY: f64 = 0.55;
/// Voxels above this belong to a lung (used by segmentation on phantoms).
pub const LUNG_THRESHOLD: f64 = 0.3;
/// Voxels above this belong to a lesion for burden measurements.
pub const LESION_THRESHOLD: f64 = 0.67;

/// Lesion-volume growth above this fraction labels a pair as progressed.
pub const PROGRESSION_GROWTH_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgressionLabel {
    Stable,
    Progressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl std::fmt::Display for Sex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sex::M => write!(f, "M"),
            Sex::F => write!(f, "F"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRecord {
    /// Liters.
    pub vital_capacity: f64,
    /// Liters per minute.
    pub peak_expiratory_flow: f64,
    /// Years.
    pub age: u32,
    pub sex: Sex,
    pub fibrosis_extent_pct: f64,
}

impl FunctionRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.vital_capacity > 0.0 && self.peak_expiratory_flow > 0.0 && self.age > 0) {
            return Err(CoreError::InvalidArgument(
                "function record numeric fields must be positive".into(),
            ));
        }
        if !(0.0..=100.0).contains(&self.fibrosis_extent_pct) {
            return Err(CoreError::InvalidArgument(format!(
                "fibrosis_extent_pct must be within [0, 100], got {}",
                self.fibrosis_extent_pct
            )));
        }
        Ok(())
    }
}

/// Canonical single-line text form, byte-stable across runs.
pub fn serialize_record(r: &FunctionRecord) -> String {
    format!(
        "VC={:.2}L PEF={:.0}L/min AGE={} SEX={} FIB={:.1}%",
        r.vital_capacity, r.peak_expiratory_flow, r.age, r.sex, r.fibrosis_extent_pct
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Lobe centers in voxel coordinates, left then right.
    pub lobe_centers: [[f64; 3]; 2],
    /// Lobe semi-axes in voxels, left then right.
    pub lobe_radii: [[f64; 3]; 2],
    /// Total lesion count, inclusive range.
    pub lesion_count_range: [usize; 2],
    /// Lesion radius in voxels, inclusive range.
    pub lesion_radius_range: [f64; 2],
    /// Intensity added on top of lung tissue for a factor-1 lesion.
    pub lesion_intensity_delta: f64,
    /// Factor range drawn for progressed samples (radius and intensity).
    pub progression_factor_range: [f64; 2],
    /// Factor range drawn for stable samples.
    pub stable_factor_range: [f64; 2],
    /// Standard deviation of additive Gaussian noise.
    pub noise_amplitude: f64,
    /// Misalignment draw bounds.
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    pub scale_range: [f64; 2],
    /// Width of the soft intensity transition at surfaces, in voxels.
    pub edge_softness: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            dims: [48, 48, 48],
            spacing: [1.0, 1.0, 1.0],
            lobe_centers: [[14.0, 24.0, 24.0], [34.0, 24.0, 24.0]],
            lobe_radii: [[6.5, 8.5, 10.5], [6.5, 8.5, 10.5]],
            lesion_count_range: [2, 4],
            lesion_radius_range: [1.6, 2.4],
            lesion_intensity_delta: 0.30,
            progression_factor_range: [1.12, 1.45],
            stable_factor_range: [0.90, 0.98],
            noise_amplitude: 0.03,
            max_rotation_deg: 6.0,
            max_translation: 3.0,
            scale_range: [0.97, 1.03],
            edge_softness: 1.2,
        }
    }
}

impl PhantomParams {
    /// Half-resolution variant for cheap training sweeps.
    pub fn desk_small() -> Self {
        Self {
            dims: [32, 32, 32],
            lobe_centers: [[9.5, 16.0, 16.0], [22.5, 16.0, 16.0]],
            lobe_radii: [[4.4, 5.8, 7.2], [4.4, 5.8, 7.2]],
            lesion_radius_range: [1.2, 1.8],
            max_translation: 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 8) {
            return Err(CoreError::InvalidArgument(
                "phantom dims must be at least 8 per axis".into(),
            ));
        }
        if self.lesion_count_range[0] > self.lesion_count_range[1] {
            return Err(CoreError::InvalidArgument(
                "lesion count range is inverted".into(),
            ));
        }
        if !(self.lesion_radius_range[0] > 0.0
            && self.lesion_radius_range[0] <= self.lesion_radius_range[1])
        {
            return Err(CoreError::InvalidArgument(
                "lesion radius range is invalid".into(),
            ));
        }
        if self.noise_amplitude < 0.0 {
            return Err(CoreError::InvalidArgument(
                "noise amplitude must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Ground truth kept alongside a sample for oracle-style tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    /// Hard analytic voxel counts of the two lobes in the initial frame.
    pub lobe_voxels: [usize; 2],
    pub lesions: Vec<Lesion>,
    pub progression_factor: f64,
    pub lesion_voxels_initial: usize,
    pub lesion_voxels_follow_up: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub initial: Volume,
    pub follow_up: Volume,
    pub record: FunctionRecord,
    pub label: ProgressionLabel,
    /// Affine applied to the raw follow-up anatomy (backward-warp params).
    pub misalignment: AffineParams,
    pub truth: PhantomTruth,
}

struct Anatomy {
    lobe_centers: [[f64; 3]; 2],
    lobe_radii: [[f64; 3]; 2],
    lesions: Vec<Lesion>,
    lesion_value_delta: f64,
    lesion_radius_factor: f64,
    edge_softness: f64,
}

impl Anatomy {
    /// Continuous intensity at a (possibly transformed) point.
    fn intensity(&self, p: [f64; 3]) -> f64 {
        let mut value = BACKGROUND_INTENSITY;
        for i in 0..2 {
            let cov = ellipsoid_coverage(
                p,
                self.lobe_centers[i],
                self.lobe_radii[i],
                self.edge_softness,
            );
            if cov > 0.0 {
                value = value.max(BACKGROUND_INTENSITY + (LUNG_INTENSITY - BACKGROUND_INTENSITY) * cov);
            }
        }
        for lesion in &self.lesions {
            let r = lesion.radius * self.lesion_radius_factor;
            let cov = ellipsoid_coverage(p, lesion.center, [r, r, r], self.edge_softness);
            if cov > 0.0 {
                value = value.max(LUNG_INTENSITY + self.lesion_value_delta * cov);
            }
        }
        value
    }

    fn render(&self, dims: [usize; 3], spacing: [f64; 3], transform: Option<&AffineParams>) -> Volume {
        let mut v = Volume::zeros(dims, spacing);
        let center = volume_center(dims);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let p = [x as f64, y as f64, z as f64];
                    let q = match transform {
                        Some(t) => t.map_point(p, center),
                        None => p,
                    };
                    v.set(x, y, z, self.intensity(q));
                }
            }
        }
        v
    }
}

/// Coverage in [0, 1]: 0 outside, 1 inside, with a linear ramp of the given
/// width across the surface. Crosses 0.5 exactly on the analytic surface.
fn ellipsoid_coverage(p: [f64; 3], c: [f64; 3], r: [f64; 3], softness: f64) -> f64 {
    let u = [
        (p[0] - c[0]) / r[0],
        (p[1] - c[1]) / r[1],
        (p[2] - c[2]) / r[2],
    ];
    let q = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    // Signed distance estimate (q - 1) / |grad q|.
    let grad = ((u[0] / r[0]).powi(2) + (u[1] / r[1]).powi(2) + (u[2] / r[2]).powi(2)).sqrt();
    let d = if grad > 1e-12 {
        (q - 1.0) * q / grad
    } else {
        -1.0
    };
    (0.5 - d / softness).clamp(0.0, 1.0)
}

fn hard_ellipsoid_count(dims: [usize; 3], c: [f64; 3], r: [f64; 3]) -> usize {
    let mut n = 0;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let q = ((x as f64 - c[0]) / r[0]).powi(2)
                    + ((y as f64 - c[1]) / r[1]).powi(2)
                    + ((z as f64 - c[2]) / r[2]).powi(2);
                if q <= 1.0 {
                    n += 1;
                }
            }
        }
    }
    n
}

fn count_above(v: &Volume, threshold: f64) -> usize {
    v.voxels().iter().filter(|&&x| x > threshold).count()
}

fn add_noise(v: &mut Volume, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    for x in v.voxels_mut() {
        *x = (*x + sigma * standard_normal(rng)).clamp(0.0, 1.0);
    }
}

fn draw_misalignment(params: &PhantomParams, rng: &mut ChaCha8Rng) -> AffineParams {
    let max_rot = params.max_rotation_deg.to_radians();
    let ax = rng.gen_range(-max_rot..=max_rot);
    let ay = rng.gen_range(-max_rot..=max_rot);
    let az = rng.gen_range(-max_rot..=max_rot);
    let s = rng.gen_range(params.scale_range[0]..=params.scale_range[1]);
    let rot = nalgebra::Rotation3::from_euler_angles(ax, ay, az);
    let m = rot.matrix() * s;
    let t = [
        rng.gen_range(-params.max_translation..=params.max_translation),
        rng.gen_range(-params.max_translation..=params.max_translation),
        rng.gen_range(-params.max_translation..=params.max_translation),
    ];
    AffineParams {
        linear: [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ],
        translation: t,
    }
}

/// Forced draw controls for edge-case tests: identity misalignment, exact
/// progression factor, or zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOverrides {
    pub progression_factor: Option<f64>,
    pub identity_misalignment: bool,
    pub zero_noise: bool,
}

pub fn generate_pair(params: &PhantomParams, seed: u64) -> Result<PairedSample> {
    generate_pair_with(params, seed, GenerateOverrides::default())
}

pub fn generate_pair_with(
    params: &PhantomParams,
    seed: u64,
    overrides: GenerateOverrides,
) -> Result<PairedSample> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = params.dims;

    // Demographics modulate lobe geometry so records and images share
    // recoverable information.
    let age: u32 = rng.gen_range(40..=80);
    let sex = if rng.gen_bool(0.5) { Sex::M } else { Sex::F };
    let sex_scale = match sex {
        Sex::M => 1.04,
        Sex::F => 0.96,
    };
    let age_scale = 1.0 - 0.0008 * (age as f64 - 60.0);
    let geom = sex_scale * age_scale;

    let mut lobe_radii = params.lobe_radii;
    for r in lobe_radii.iter_mut() {
        for v in r.iter_mut() {
            *v *= geom;
        }
    }
    let lobe_centers = params.lobe_centers;

    // Progression factor: the drawn range keeps the measured label away
    // from the 10% growth boundary unless the caller pins it.
    let wants_progressed = rng.gen_bool(0.5);
    let factor = overrides.progression_factor.unwrap_or_else(|| {
        if wants_progressed {
            rng.gen_range(params.progression_factor_range[0]..=params.progression_factor_range[1])
        } else {
            rng.gen_range(params.stable_factor_range[0]..=params.stable_factor_range[1])
        }
    });

    // Lesion placement: strictly inside a lobe with enough margin that the
    // fully grown lesion stays inside.
    let count = rng.gen_range(params.lesion_count_range[0]..=params.lesion_count_range[1]);
    let max_factor = factor.max(1.0).max(params.progression_factor_range[1]);
    let mut lesions = Vec::with_capacity(count);
    for i in 0..count {
        let lobe = i % 2;
        let mut placed = false;
        for _try in 0..64 {
            let radius =
                rng.gen_range(params.lesion_radius_range[0]..=params.lesion_radius_range[1]);
            // Half the soft ramp lies inside the nominal radius.
            let margin = radius * max_factor + 0.5 * params.edge_softness;
            let c = lobe_centers[lobe];
            let r = lobe_radii[lobe];
            let avail = [r[0] - margin, r[1] - margin, r[2] - margin];
            if avail.iter().any(|&a| a <= 0.0) {
                continue;
            }
            // Uniform direction, radius biased outward within the shrunken
            // ellipsoid.
            let dir = [
                standard_normal(&mut rng),
                standard_normal(&mut rng),
                standard_normal(&mut rng),
            ];
            let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            if norm < 1e-9 {
                continue;
            }
            let u: f64 = rng.gen::<f64>().cbrt();
            let center = [
                c[0] + dir[0] / norm * u * avail[0],
                c[1] + dir[1] / norm * u * avail[1],
                c[2] + dir[2] / norm * u * avail[2],
            ];
            // Keep lesions mostly separate so burden measurements scale
            // cleanly; mild touching at full growth is tolerable.
            let ok = lesions.iter().all(|l: &Lesion| {
                let d = ((center[0] - l.center[0]).powi(2)
                    + (center[1] - l.center[1]).powi(2)
                    + (center[2] - l.center[2]).powi(2))
                .sqrt();
                d > 0.75 * (radius + l.radius) * max_factor
            });
            if ok {
                lesions.push(Lesion { center, radius });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(CoreError::Phantom(format!(
                "could not place lesion {i} after bounded retries (seed {seed})"
            )));
        }
    }

    let misalignment = if overrides.identity_misalignment {
        // Burn the draws so downstream rng state stays comparable.
        let _ = draw_misalignment(params, &mut rng);
        AffineParams::identity()
    } else {
        draw_misalignment(params, &mut rng)
    };

    let initial_anatomy = Anatomy {
        lobe_centers,
        lobe_radii,
        lesions: lesions.clone(),
        lesion_value_delta: params.lesion_intensity_delta,
        lesion_radius_factor: 1.0,
        edge_softness: params.edge_softness,
    };
    let follow_anatomy = Anatomy {
        lobe_centers,
        lobe_radii,
        lesions: lesions.clone(),
        lesion_value_delta: params.lesion_intensity_delta * factor,
        lesion_radius_factor: factor,
        edge_softness: params.edge_softness,
    };

    let mut initial = initial_anatomy.render(dims, params.spacing, None);
    let transform = (!overrides.identity_misalignment).then_some(&misalignment);
    let mut follow_up = follow_anatomy.render(dims, params.spacing, transform);

    let noise = if overrides.zero_noise {
        0.0
    } else {
        params.noise_amplitude
    };
    add_noise(&mut initial, noise, &mut rng);
    add_noise(&mut follow_up, noise, &mut rng);
    initial.quantize_f32();
    follow_up.quantize_f32();

    // Burden measurements on the stored bytes, so the label-consistency
    // invariant holds exactly.
    let lesion_voxels_initial = count_above(&initial, LESION_THRESHOLD);
    let lesion_voxels_follow_up = count_above(&follow_up, LESION_THRESHOLD);
    let lung_voxels_initial = count_above(&initial, LUNG_THRESHOLD);
    let lung_voxels_follow_up = count_above(&follow_up, LUNG_THRESHOLD).max(1);

    let growth = if lesion_voxels_initial == 0 {
        0.0
    } else {
        lesion_voxels_follow_up as f64 / lesion_voxels_initial as f64 - 1.0
    };
    let label = if growth > PROGRESSION_GROWTH_THRESHOLD {
        ProgressionLabel::Progressed
    } else {
        ProgressionLabel::Stable
    };

    let frac_initial = lesion_voxels_initial as f64 / lung_voxels_initial.max(1) as f64;
    let frac_follow = lesion_voxels_follow_up as f64 / lung_voxels_follow_up as f64;

    let record = FunctionRecord {
        vital_capacity: (6.0 - 14.0 * frac_initial - 0.012 * (age as f64 - 60.0)
            + 0.05 * standard_normal(&mut rng))
        .max(0.5),
        peak_expiratory_flow: (520.0 - 900.0 * frac_initial
            + if sex == Sex::M { 30.0 } else { -30.0 }
            + 5.0 * standard_normal(&mut rng))
        .max(50.0),
        age,
        sex,
        fibrosis_extent_pct: (150.0 * frac_follow + 0.4 * standard_normal(&mut rng))
            .clamp(0.2, 95.0),
    };
    record.validate()?;

    let truth = PhantomTruth {
        lobe_voxels: [
            hard_ellipsoid_count(dims, lobe_centers[0], lobe_radii[0]),
            hard_ellipsoid_count(dims, lobe_centers[1], lobe_radii[1]),
        ],
        lesions,
        progression_factor: factor,
        lesion_voxels_initial,
        lesion_voxels_follow_up,
    };

    Ok(PairedSample {
        initial,
        follow_up,
        record,
        label,
        misalignment,
        truth,
    })
}

/// Recompute the progression label from a stored volume pair.
pub fn measure_label(initial: &Volume, follow_up: &Volume) -> ProgressionLabel {
    let li = count_above(initial, LESION_THRESHOLD);
    let lf = count_above(follow_up, LESION_THRESHOLD);
    let growth = if li == 0 {
        0.0
    } else {
        lf as f64 / li as f64 - 1.0
    };
    if growth > PROGRESSION_GROWTH_THRESHOLD {
        ProgressionLabel::Progressed
    } else {
        ProgressionLabel::Stable
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_serialization_matches_template() {
        let r = FunctionRecord {
            vital_capacity: 3.2,
            peak_expiratory_flow: 400.0,
            age: 60,
            sex: Sex::M,
            fibrosis_extent_pct: 12.5,
        };
        assert_eq!(
            serialize_record(&r),
            "VC=3.20L PEF=400L/min AGE=60 SEX=M FIB=12.5%"
        );
    }

    #[test]
    fn equal_records_serialize_identically() {
        let r = FunctionRecord {
            vital_capacity: 4.111,
            peak_expiratory_flow: 333.3,
            age: 55,
            sex: Sex::F,
            fibrosis_extent_pct: 7.77,
        };
        assert_eq!(serialize_record(&r), serialize_record(&r.clone()));
    }

    #[test]
    fn vc_difference_at_rendered_precision_changes_text() {
        let a = FunctionRecord {
            vital_capacity: 3.20,
            peak_expiratory_flow: 400.0,
            age: 60,
            sex: Sex::M,
            fibrosis_extent_pct: 12.5,
        };
        let mut b = a.clone();
        b.vital_capacity += 0.01;
        assert_ne!(serialize_record(&a), serialize_record(&b));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let params = PhantomParams::default();
        let a = generate_pair(&params, 123).unwrap();
        let b = generate_pair(&params, 123).unwrap();
        assert_eq!(a.initial.voxels(), b.initial.voxels());
        assert_eq!(a.follow_up.voxels(), b.follow_up.voxels());
        assert_eq!(a.record, b.record);
        assert_eq!(a.label, b.label);
        assert_eq!(a.misalignment, b.misalignment);
    }

    #[test]
    fn no_change_pair_is_bit_exact_and_stable() {
        let params = PhantomParams::default();
        let s = generate_pair_with(
            &params,
            7,
            GenerateOverrides {
                progression_factor: Some(1.0),
                identity_misalignment: true,
                zero_noise: true,
            },
        )
        .unwrap();
        assert_eq!(s.initial.voxels(), s.follow_up.voxels());
        assert_eq!(s.label, ProgressionLabel::Stable);
    }

    #[test]
    fn grown_lesions_scale_voxel_count_cubically() {
        let params = PhantomParams {
            lesion_count_range: [1, 1],
            lesion_radius_range: [2.6, 2.6],
            ..PhantomParams::default()
        };
        let s = generate_pair_with(
            &params,
            11,
            GenerateOverrides {
                progression_factor: Some(1.4),
                identity_misalignment: true,
                zero_noise: true,
            },
        )
        .unwrap();
        let ratio = s.truth.lesion_voxels_follow_up as f64 / s.truth.lesion_voxels_initial as f64;
        let expected = 1.4f64.powi(3);
        assert!(
            (ratio - expected).abs() / expected < 0.25,
            "voxel growth ratio {ratio}, expected about {expected}"
        );
        assert_eq!(s.label, ProgressionLabel::Progressed);
    }

    #[test]
    fn label_matches_recount_from_stored_volumes() {
        let params = PhantomParams::default();
        for seed in 0..20 {
            let s = generate_pair(&params, seed).unwrap();
            assert_eq!(
                measure_label(&s.initial, &s.follow_up),
                s.label,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn labels_are_roughly_balanced() {
        let params = PhantomParams::default();
        let n = 60;
        let progressed = (0..n)
            .filter(|&seed| {
                generate_pair(&params, seed).unwrap().label == ProgressionLabel::Progressed
            })
            .count();
        let frac = progressed as f64 / n as f64;
        assert!(
            (0.3..=0.7).contains(&frac),
            "progressed fraction {frac} out of range"
        );
    }

    #[test]
    fn fibrosis_correlates_with_lesion_fraction() {
        let params = PhantomParams::default();
        let mut fib = Vec::new();
        let mut frac = Vec::new();
        for seed in 100..220 {
            let s = generate_pair(&params, seed).unwrap();
            fib.push(s.record.fibrosis_extent_pct);
            let lung = s
                .follow_up
                .voxels()
                .iter()
                .filter(|&&v| v > LUNG_THRESHOLD)
                .count()
                .max(1);
            frac.push(s.truth.lesion_voxels_follow_up as f64 / lung as f64);
        }
        let r = pearson(&fib, &frac);
        assert!(r >= 0.8, "correlation {r}");
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn progression_factor_matches_label_direction() {
        let params = PhantomParams::default();
        for seed in 300..330 {
            let s = generate_pair(&params, seed).unwrap();
            match s.label {
                ProgressionLabel::Progressed => assert!(s.truth.progression_factor >= 1.0),
                ProgressionLabel::Stable => assert!(s.truth.progression_factor < 1.0),
            }
        }
    }

    #[test]
    fn volumes_stay_in_unit_range() {
        let params = PhantomParams::default();
        let s = generate_pair(&params, 9001).unwrap();
        for &v in s.initial.voxels().iter().chain(s.follow_up.voxels()) {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
