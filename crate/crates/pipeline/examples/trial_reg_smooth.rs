use ciresdiff_core::affine::{affine_register_fields, apply_affine};
use ciresdiff_core::mask::{segment_lungs, Mask, SegmentationOptions};
use ciresdiff_core::phantom::{generate_pair, PhantomParams};
use ciresdiff_core::prereg::{soft_dilated_region, PreregOptions};
use ciresdiff_core::volume::Volume;
use std::time::Instant;

fn box3(v: &Volume) -> Volume {
    let d = v.dims();
    let mut out = Volume::zeros(d, v.spacing());
    for z in 0..d[2] { for y in 0..d[1] { for x in 0..d[0] {
        let mut acc = 0.0; let mut n = 0.0;
        for dz in -1i64..=1 { for dy in -1i64..=1 { for dx in -1i64..=1 {
            let (nx, ny, nz) = (x as i64+dx, y as i64+dy, z as i64+dz);
            if nx>=0 && ny>=0 && nz>=0 && (nx as usize)<d[0] && (ny as usize)<d[1] && (nz as usize)<d[2] {
                acc += v.get(nx as usize, ny as usize, nz as usize); n += 1.0;
            }
        }}}
        out.set(x, y, z, acc/n);
    }}}
    out
}

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
            let r = affine_register_fields(&box3(&sm), &box3(&sf), &opts.registration).unwrap();
            let warped = apply_affine(&sm, &r.params).unwrap();
            let wm = Mask::from_volume_threshold(&warped, 0.5);
            let fm = Mask::from_volume_threshold(&sf, 0.5);
            ious.push(iou(&wm, &fm));
        }
    }
    let mean = ious.iter().sum::<f64>() / ious.len() as f64;
    let min = ious.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("smoothed-objective IoU mean {mean:.4} min {min:.4}  runtime {:.1}s", t0.elapsed().as_secs_f64());
}
