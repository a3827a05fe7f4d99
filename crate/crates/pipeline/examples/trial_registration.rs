use ciresdiff_core::affine::{affine_register_fields, apply_affine};
use ciresdiff_core::mask::{segment_lungs, Mask, SegmentationOptions};
use ciresdiff_core::phantom::{generate_pair, PhantomParams};
use ciresdiff_core::prereg::{soft_dilated_region, PreregOptions};
use std::time::Instant;

fn iou(a: &Mask, b: &Mask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        if x && y { inter += 1; }
        if x || y { union += 1; }
    }
    inter as f64 / union as f64
}

fn main() {
    let params = PhantomParams::default();
    let seg = SegmentationOptions::default();
    let opts = PreregOptions::default();
    let mut ious = Vec::new();
    let t0 = Instant::now();
    for seed in 0..20u64 {
        let s = generate_pair(&params, seed).unwrap();
        let (il, ir) = segment_lungs(&s.initial, &seg).unwrap();
        let (fl, fr) = segment_lungs(&s.follow_up, &seg).unwrap();
        for (mi, mf) in [(il, fl), (ir, fr)] {
            let sm = soft_dilated_region(&s.initial, &mi, &opts);
            let sf = soft_dilated_region(&s.follow_up, &mf, &opts);
            let r = affine_register_fields(&sm, &sf, &opts.registration).unwrap();
            let warped = apply_affine(&sm, &r.params).unwrap();
            let wm = Mask::from_volume_threshold(&warped, 0.5);
            let fm = Mask::from_volume_threshold(&sf, 0.5);
            // Also at ground truth for the ceiling.
            let wtrue = apply_affine(&sm, &s.misalignment).unwrap();
            let wt = Mask::from_volume_threshold(&wtrue, 0.5);
            let v = iou(&wm, &fm);
            ious.push(v);
            println!("seed {seed}: recovered {v:.4} truth {:.4} (dice {:.4} -> {:.4})", iou(&wt, &fm), r.dice_before, r.dice_after);
        }
    }
    let mean = ious.iter().sum::<f64>() / ious.len() as f64;
    let min = ious.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("IoU mean {mean:.4} min {min:.4}  runtime {:.1}s", t0.elapsed().as_secs_f64());
}
