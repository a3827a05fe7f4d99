use ciresdiff::config::{RunConfig, Variant};
use ciresdiff::evaluate::EvalOutputs;
use ciresdiff::runman::{active_split, run_pipeline, Stage};
use ciresdiff::runner::train_and_evaluate;
use ciresdiff::stages::stage_seed;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let preset = args.get(1).map(|s| s.as_str()).unwrap_or("small");
    let mut cfg = RunConfig::default();
    match preset {
        "small" => {
            cfg.volume_dims = 32;
            cfg.n_samples = 40;
            cfg.train_count = 28;
            cfg.test_count = 12;
            cfg.patch_size = 16;
            cfg.patch_stride = 16;
            cfg.train_steps = 600;
            cfg.batch_size = 2;
            cfg.out_dir = "/tmp/trial-e2e-small".into();
            cfg.noise_scale = 0.3;
        }
        "desk" => {
            cfg.train_steps = 900;
            cfg.batch_size = 1;
            cfg.out_dir = "/tmp/trial-e2e-desk".into();
        }
        _ => panic!("unknown preset"),
    }
    let t0 = Instant::now();
    run_pipeline(&cfg, &[Stage::GenData, Stage::Register]).unwrap();
    println!("data+register: {:.0}s", t0.elapsed().as_secs_f64());

    let split = active_split(&cfg).unwrap();
    let t1 = Instant::now();
    let (train_report, eval) = train_and_evaluate(
        &cfg,
        Variant::DmR,
        &split,
        stage_seed(cfg.master_seed, "train"),
        &EvalOutputs { samples_dir: None, eval_dir: None },
    )
    .unwrap();
    println!(
        "DM-R: loss {:.5} -> {:.5} over {} steps; train+eval {:.0}s",
        train_report.initial_loss, train_report.final_loss, train_report.steps,
        t1.elapsed().as_secs_f64()
    );
    println!(
        "PSNR {:.2} ± {:.2} dB vs copy {:.2} dB (gain {:+.2} dB); SSIM {:.4} vs copy {:.4}",
        eval.summary.psnr_mean,
        eval.summary.psnr_std,
        eval.summary.copy_psnr_mean,
        eval.summary.psnr_mean - eval.summary.copy_psnr_mean,
        eval.summary.ssim_mean,
        eval.summary.copy_ssim_mean
    );
    for r in &eval.rows {
        println!("  id {:2}: psnr {:.2} copy {:.2} ssim {:.4}", r.id, r.psnr, r.copy_psnr, r.ssim);
    }
}
