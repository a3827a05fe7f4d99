use ciresdiff::clip_stage::pretrain_stage;
use ciresdiff::config::RunConfig;
use ciresdiff::runman::{active_split, run_pipeline, Stage};
use std::time::Instant;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.volume_dims = 32;
    cfg.n_samples = 192;
    cfg.train_count = 160;
    cfg.test_count = 32;
    cfg.clip_holdout = 32;
    cfg.clip_epochs = 150;
    cfg.out_dir = "/tmp/trial-clip".into();
    let t0 = Instant::now();
    run_pipeline(&cfg, &[Stage::GenData]).unwrap();
    println!("gen: {:.0}s", t0.elapsed().as_secs_f64());
    let split = active_split(&cfg).unwrap();
    let t1 = Instant::now();
    let report = pretrain_stage(&cfg, &split).unwrap();
    println!(
        "clip: trained {} pairs, holdout {}, epochs {}, final loss {:.4}, {:.0}s",
        report.trained_on,
        report.holdout,
        report.report.epochs.len(),
        report.report.final_loss,
        t1.elapsed().as_secs_f64()
    );
    println!(
        "retrieval top1 {:?} cosine gap {:?}",
        report.report.retrieval_top1, report.report.cosine_gap
    );
    let improving = report
        .report
        .epochs
        .iter()
        .filter(|e| e.last_batch <= e.first_batch)
        .count();
    println!(
        "epochs with end<=start: {}/{}",
        improving,
        report.report.epochs.len()
    );
}
