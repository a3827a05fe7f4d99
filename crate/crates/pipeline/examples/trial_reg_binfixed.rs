use ciresdiff_core::affine::{affine_register_fields, apply_affine};
use ciresdiff_core::mask::{segment_lungs, Mask, SegmentationOptions};
use ciresdiff_core::phantom::{generate_pair, PhantomParams};
use ciresdiff_core::prereg::{soft_dilated_region, PreregOptions};
use std::time::Instant;

fn iou(a: &Mask, b: &Mask) -> f64 {
    let (mut i, mut u) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) { if x&&y {i+=1;} if x||y {u+=1;} }
    i as f64 / u as f64
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
            let fm = Mask::from_volume_threshold(&sf, 0.5);
            let fixed_bin = fm.to_volume([1.0;3]);
            let r = affine_register_fields(&sm, &fixed_bin, &opts.registration).unwrap();
            let warped = apply_affine(&sm, &r.params).unwrap();
            let wm = Mask::from_volume_threshold(&warped, 0.5);
            ious.push(iou(&wm, &fm));
        }
    }
    let mean = ious.iter().sum::<f64>() / ious.len() as f64;
    let min = ious.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("bin-fixed IoU mean {mean:.4} min {min:.4}  runtime {:.1}s", t0.elapsed().as_secs_f64());
}
