use ciresdiff_core::affine::{affine_register_fields, apply_affine, AffineParams};
use ciresdiff_core::mask::{segment_lungs, Mask, SegmentationOptions};
use ciresdiff_core::phantom::{generate_pair, PhantomParams};
use ciresdiff_core::prereg::{soft_dilated_region, PreregOptions};
use ciresdiff_core::volume::Volume;

fn iou(a: &Mask, b: &Mask) -> f64 {
    let (mut i, mut u) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) { if x&&y {i+=1;} if x||y {u+=1;} }
    i as f64 / u as f64
}

fn soft_dice(w: &Volume, f: &Volume) -> f64 {
    let mut inter = 0.0; let mut sw = 0.0; let mut sf = 0.0;
    for (&a, &b) in w.voxels().iter().zip(f.voxels()) { inter += a*b; sw += a; sf += b; }
    2.0*inter/(sw+sf)
}

fn main() {
    let params = PhantomParams::default();
    let seg = SegmentationOptions::default();
    let opts = PreregOptions::default();
    for seed in [15u64, 19, 3] {
        let s = generate_pair(&params, seed).unwrap();
        let (il, _ir) = segment_lungs(&s.initial, &seg).unwrap();
        let (fl, _fr) = segment_lungs(&s.follow_up, &seg).unwrap();
        let sm = soft_dilated_region(&s.initial, &il, &opts);
        let sf = soft_dilated_region(&s.follow_up, &fl, &opts);
        let r = affine_register_fields(&sm, &sf, &opts.registration).unwrap();
        let fm = Mask::from_volume_threshold(&sf, 0.5);

        let w_rec = apply_affine(&sm, &r.params).unwrap();
        let w_true = apply_affine(&sm, &s.misalignment).unwrap();
        let dice_rec = soft_dice(&w_rec, &sf);
        let dice_true = soft_dice(&w_true, &sf);
        let iou_rec = iou(&Mask::from_volume_threshold(&w_rec, 0.5), &fm);
        let iou_true = iou(&Mask::from_volume_threshold(&w_true, 0.5), &fm);
        println!("seed {seed}: dice rec {dice_rec:.5} true {dice_true:.5}; iou rec {iou_rec:.4} true {iou_true:.4}");
        let pr = r.params.to_vec12();
        let pt = s.misalignment.to_vec12();
        let diff: Vec<String> = pr.iter().zip(&pt).map(|(a,b)| format!("{:+.3}", a-b)).collect();
        println!("  param err: {}", diff.join(" "));
        let _ = AffineParams::identity();
    }
}
