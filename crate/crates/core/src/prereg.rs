//! Pair pre-registration: segment both scans, dilate, register the initial
//! scan's left/right regions toward the follow-up's, merge, and zero
//! everything outside the merged region.

use crate::affine::{affine_register_fields, apply_affine, AffineParams, RegistrationOptions};
use crate::error::Result;
use crate::mask::{
    dilate, gray_dilate, segment_lungs, soft_region_field, Mask, SegmentationOptions,
};
use crate::volume::Volume;
use serde::{Deserialize, Serialize};

pub const DEFAULT_DILATION_RADIUS: usize = 3;

#[derive(Debug, Clone)]
pub struct PreregOptions {
    pub dilation_radius: usize,
    pub segmentation: SegmentationOptions,
    pub registration: RegistrationOptions,
    /// Intensity range mapped onto [0, 1] region coverage; the midpoint
    /// matches the segmentation threshold so the soft boundary and the
    /// binary masks agree.
    pub soft_low: f64,
    pub soft_high: f64,
}

impl Default for PreregOptions {
    fn default() -> Self {
        Self {
            dilation_radius: DEFAULT_DILATION_RADIUS,
            segmentation: SegmentationOptions::default(),
            registration: RegistrationOptions::default(),
            soft_low: 0.05,
            soft_high: 0.55,
        }
    }
}

/// Antialiased per-side region field, grayscale-dilated: the registration
/// target with sub-voxel boundary information.
pub fn soft_dilated_region(
    volume: &Volume,
    side: &Mask,
    opts: &PreregOptions,
) -> Volume {
    let gate = dilate(side, 2);
    let field = soft_region_field(volume, &gate, opts.soft_low, opts.soft_high);
    gray_dilate(&field, opts.dilation_radius)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SideReport {
    pub params: AffineParams,
    pub dice_before: f64,
    pub dice_after: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreregReport {
    pub left: SideReport,
    pub right: SideReport,
}

pub struct PreregResult {
    pub aligned_initial: Volume,
    pub aligned_follow_up: Volume,
    /// Union of the follow-up's dilated lung regions; metrics and training
    /// stay inside it.
    pub merged_mask: Mask,
    pub report: PreregReport,
}

pub fn preregister_pair(
    initial: &Volume,
    follow_up: &Volume,
    opts: &PreregOptions,
) -> Result<PreregResult> {
    initial.check_same_dims(follow_up, "preregister_pair")?;

    let (init_left, init_right) = segment_lungs(initial, &opts.segmentation)?;
    let (fu_left, fu_right) = segment_lungs(follow_up, &opts.segmentation)?;

    let dl_init = dilate(&init_left, opts.dilation_radius);
    let dr_init = dilate(&init_right, opts.dilation_radius);
    let dl_fu = dilate(&fu_left, opts.dilation_radius);
    let dr_fu = dilate(&fu_right, opts.dilation_radius);

    // Register on antialiased region fields for sub-voxel alignment.
    let soft_l_init = soft_dilated_region(initial, &init_left, opts);
    let soft_r_init = soft_dilated_region(initial, &init_right, opts);
    let soft_l_fu = soft_dilated_region(follow_up, &fu_left, opts);
    let soft_r_fu = soft_dilated_region(follow_up, &fu_right, opts);
    let left = affine_register_fields(&soft_l_init, &soft_l_fu, &opts.registration)?;
    let right = affine_register_fields(&soft_r_init, &soft_r_fu, &opts.registration)?;

    let warped_left = apply_affine(&masked(initial, &dl_init), &left.params)?;
    let warped_right = apply_affine(&masked(initial, &dr_init), &right.params)?;

    let merged_mask = dl_fu.union(&dr_fu)?;

    let mut aligned_initial = Volume::zeros(initial.dims(), initial.spacing());
    {
        let out = aligned_initial.voxels_mut();
        for (i, ((&l, &r), &m)) in warped_left
            .voxels()
            .iter()
            .zip(warped_right.voxels())
            .zip(merged_mask.data())
            .enumerate()
        {
            if m {
                out[i] = l.max(r);
            }
        }
    }

    let mut aligned_follow_up = follow_up.clone();
    for (v, &m) in aligned_follow_up.voxels_mut().iter_mut().zip(merged_mask.data()) {
        if !m {
            *v = 0.0;
        }
    }

    Ok(PreregResult {
        aligned_initial,
        aligned_follow_up,
        merged_mask,
        report: PreregReport {
            left: SideReport {
                params: left.params,
                dice_before: left.dice_before,
                dice_after: left.dice_after,
                warning: left.warning,
            },
            right: SideReport {
                params: right.params,
                dice_before: right.dice_before,
                dice_after: right.dice_after,
                warning: right.warning,
            },
        },
    })
}

fn masked(v: &Volume, m: &Mask) -> Volume {
    let mut out = v.clone();
    for (val, &keep) in out.voxels_mut().iter_mut().zip(m.data()) {
        if !keep {
            *val = 0.0;
        }
    }
    out
}

/// Sum of squared differences inside a mask; used to check that alignment
/// actually brought the pair closer.
pub fn masked_ssd(a: &Volume, b: &Volume, mask: &Mask) -> f64 {
    a.voxels()
        .iter()
        .zip(b.voxels())
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|((&x, &y), _)| (x - y) * (x - y))
        .sum()
}
