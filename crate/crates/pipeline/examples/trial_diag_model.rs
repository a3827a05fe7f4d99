use ciresdiff::config::{RunConfig, Variant};
use ciresdiff::evaluate::{masked_metrics, sample_volume};
use ciresdiff::runman::{active_split, run_pipeline, Stage};
use ciresdiff::runner::{prepare_eval_pairs, prepare_train_pairs};
use ciresdiff::stages::stage_seed;
use ciresdiff::train::train_denoiser;
use ciresdiff_core::dataset::derive_seed;
use ciresdiff_core::diffusion::{q_sample, standard_normal, DenoisePredictor};
use ciresdiff_core::patch::{assemble_patches, extract_patches};
use ciresdiff_core::volume::Volume;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.volume_dims = 32;
    cfg.n_samples = 40;
    cfg.train_count = 28;
    cfg.test_count = 12;
    cfg.patch_size = 16;
    cfg.patch_stride = 16;
    cfg.train_steps = 2400;
    cfg.batch_size = 2;
    cfg.out_dir = "/tmp/trial-diag".into();
    run_pipeline(&cfg, &[Stage::GenData, Stage::Register]).unwrap();
    let split = active_split(&cfg).unwrap();
    let pairs = prepare_train_pairs(&cfg, Variant::DmR, &split).unwrap();
    let (model, report) = train_denoiser(&cfg, Variant::DmR, &pairs, stage_seed(cfg.master_seed, "train")).unwrap();
    println!("train loss {:.5} -> {:.5}", report.initial_loss, report.final_loss);

    let eval_pairs = prepare_eval_pairs(&cfg, Variant::DmR, &split.test).unwrap();
    let sched = cfg.schedule().unwrap();
    let size = [cfg.patch_size; 3];
    let stride = [cfg.patch_stride; 3];

    let mut acc = vec![Vec::new(); 4]; // copy, oracle_t1, oneshot_T, chain
    for (pair, _) in &eval_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(99, pair.entry.id as u64));
        // oracle one-shot at t=1 (true x0 inside x_1)
        let (grid, ypatches) = extract_patches(&pair.initial, size, stride).unwrap();
        let (_, xpatches) = extract_patches(&pair.follow_up, size, stride).unwrap();
        let mut preds_t1 = Vec::new();
        let mut preds_tt = Vec::new();
        for (yp, xp) in ypatches.iter().zip(&xpatches) {
            let mut noise = Volume::zeros(size, yp.spacing());
            for v in noise.voxels_mut() { *v = standard_normal(&mut rng); }
            let x1 = q_sample(xp, yp, 1, &sched, &noise).unwrap();
            preds_t1.push(model.predict(&x1, yp, 1, None).unwrap().map(|v| v.clamp(0.0, 1.0)));
            // one-shot at t=T from y0 + k*eps
            let xt = yp.zip_map(&noise, |y, n| y + sched.noise_scale() * n).unwrap();
            preds_tt.push(model.predict(&xt, yp, sched.steps(), None).unwrap().map(|v| v.clamp(0.0, 1.0)));
        }
        let pred_t1 = assemble_patches(&grid, &preds_t1).unwrap();
        let pred_tt = assemble_patches(&grid, &preds_tt).unwrap();
        let chain = sample_volume(&model, Variant::DmR, &cfg, &pair.initial, None, derive_seed(7, pair.entry.id as u64)).unwrap();

        let (cp, _) = masked_metrics(&pair.initial, &pair.follow_up, &pair.mask).unwrap();
        let (p1, _) = masked_metrics(&pred_t1, &pair.follow_up, &pair.mask).unwrap();
        let (pt, _) = masked_metrics(&pred_tt, &pair.follow_up, &pair.mask).unwrap();
        let (pc, _) = masked_metrics(&chain, &pair.follow_up, &pair.mask).unwrap();
        acc[0].push(cp); acc[1].push(p1); acc[2].push(pt); acc[3].push(pc);
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    println!("copy          {:.2} dB", mean(&acc[0]));
    println!("oracle t=1    {:.2} dB", mean(&acc[1]));
    println!("one-shot t=T  {:.2} dB", mean(&acc[2]));
    println!("chain         {:.2} dB", mean(&acc[3]));
}
