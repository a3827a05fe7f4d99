use ciresdiff_core::affine::{apply_affine};
use ciresdiff_core::mask::{dilate, segment_lungs, Mask, SegmentationOptions};
use ciresdiff_core::phantom::{generate_pair, PhantomParams};

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
    let opts = SegmentationOptions::default();
    let mut vals = Vec::new();
    for seed in 0..10u64 {
        let s = generate_pair(&params, seed).unwrap();
        let (il, ir) = segment_lungs(&s.initial, &opts).unwrap();
        let (fl, fr) = segment_lungs(&s.follow_up, &opts).unwrap();
        for (mi, mf) in [(il, fl), (ir, fr)] {
            let dm = dilate(&mi, 3);
            let df = dilate(&mf, 3);
            // IoU at the stored ground-truth transform.
            let warped = apply_affine(&dm.to_volume([1.0;3]), &s.misalignment).unwrap();
            let wm = Mask::from_volume_threshold(&warped, 0.5);
            vals.push(iou(&wm, &df));
            // Also undilated.
            let warped_u = apply_affine(&mi.to_volume([1.0;3]), &s.misalignment).unwrap();
            let wu = Mask::from_volume_threshold(&warped_u, 0.5);
            println!("seed {seed}: dilated {:.4} undilated {:.4}", vals.last().unwrap(), iou(&wu, &mf));
        }
    }
    println!("ceiling mean {:.4}", vals.iter().sum::<f64>() / vals.len() as f64);
}
