//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 validation error, 3 missing upstream artifact,
//! 4 numeric failure.

use ciresdiff::config::RunConfig;
use ciresdiff::error::PipelineError;
use ciresdiff::runman::{run_pipeline, Stage};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ciresdiff",
    about = "Residual-diffusion synthesis of follow-up lung volumes from initial volumes, on synthetic phantom cohorts",
    version
)]
struct Cli {
    /// Run configuration file (key = value lines); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic longitudinal dataset.
    GenData,
    /// Align lung regions. With two RVOL paths, registers that single pair;
    /// otherwise registers the whole dataset.
    Register {
        /// Initial (moving) volume.
        initial: Option<PathBuf>,
        /// Follow-up (fixed) volume.
        follow_up: Option<PathBuf>,
        /// Output directory for pair mode.
        #[arg(long, default_value = "registered-pair")]
        out: PathBuf,
    },
    /// Contrastively pretrain the text and image encoders.
    PretrainClip,
    /// Train the configured variant's denoiser.
    Train,
    /// Generate follow-up predictions for the test split.
    Sample,
    /// Score stored predictions (masked PSNR/SSIM) and emit reports.
    Evaluate,
    /// Train and evaluate all four variants with shared seeds and splits.
    Ablate,
    /// Train the pair classifier and score real/noise/generated pairs.
    Diagnose,
    /// Run pipeline stages in dependency order (default: all).
    Run {
        /// Stage names to run (gen-data register pretrain-clip train sample
        /// evaluate ablate diagnose).
        stages: Vec<String>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, PipelineError> {
    let mut cfg = match path {
        Some(p) => RunConfig::parse_file(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env_path_overrides();
    Ok(cfg)
}

fn register_pair_mode(
    cfg: &RunConfig,
    initial: &PathBuf,
    follow_up: &PathBuf,
    out: &PathBuf,
) -> Result<(), PipelineError> {
    use ciresdiff_core::prereg::{preregister_pair, PreregOptions};
    use ciresdiff_core::rvol;
    let iv = rvol::load_volume(initial)?;
    let fv = rvol::load_volume(follow_up)?;
    let opts = PreregOptions {
        dilation_radius: cfg.dilation_radius,
        ..PreregOptions::default()
    };
    let result = preregister_pair(&iv, &fv, &opts)?;
    std::fs::create_dir_all(out)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(out, e)))?;
    let mut ai = result.aligned_initial;
    let mut af = result.aligned_follow_up;
    ai.quantize_f32();
    af.quantize_f32();
    rvol::save_volume(out.join("aligned_initial.rvol"), &ai)?;
    rvol::save_volume(out.join("aligned_followup.rvol"), &af)?;
    rvol::save_volume(out.join("merged_mask.rvol"), &result.merged_mask.to_volume(iv.spacing()))?;
    let json = serde_json::to_string_pretty(&result.report)
        .map_err(|e| PipelineError::Other(format!("report: {e}")))?;
    std::fs::write(out.join("registration.json"), json)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(out.join("registration.json"), e)))?;
    println!(
        "registered pair: left dice {:.4} -> {:.4}, right dice {:.4} -> {:.4}",
        result.report.left.dice_before,
        result.report.left.dice_after,
        result.report.right.dice_before,
        result.report.right.dice_after
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::GenData => {
            run_pipeline(&cfg, &[Stage::GenData]).map(report_outcome)?;
        }
        Command::Register {
            initial: Some(i),
            follow_up: Some(f),
            out,
        } => register_pair_mode(&cfg, &i, &f, &out)?,
        Command::Register {
            initial: None,
            follow_up: None,
            ..
        } => {
            run_pipeline(&cfg, &[Stage::Register]).map(report_outcome)?;
        }
        Command::Register { .. } => {
            return Err(PipelineError::Config(
                "register pair mode needs both INITIAL and FOLLOW_UP paths".into(),
            ));
        }
        Command::PretrainClip => {
            run_pipeline(&cfg, &[Stage::PretrainClip]).map(report_outcome)?;
        }
        Command::Train => {
            run_pipeline(&cfg, &[Stage::Train]).map(report_outcome)?;
        }
        Command::Sample => {
            run_pipeline(&cfg, &[Stage::Sample]).map(report_outcome)?;
        }
        Command::Evaluate => {
            run_pipeline(&cfg, &[Stage::Evaluate]).map(report_outcome)?;
        }
        Command::Ablate => {
            run_pipeline(&cfg, &[Stage::Ablate]).map(report_outcome)?;
        }
        Command::Diagnose => {
            run_pipeline(&cfg, &[Stage::Diagnose]).map(report_outcome)?;
        }
        Command::Run { stages } => {
            let stages = if stages.is_empty() {
                Stage::ALL.to_vec()
            } else {
                let mut parsed = Vec::with_capacity(stages.len());
                for s in &stages {
                    parsed.push(Stage::parse(s).ok_or_else(|| {
                        PipelineError::Config(format!(
                            "unknown stage {s:?}; expected one of gen-data, register, \
                             pretrain-clip, train, sample, evaluate, ablate, diagnose"
                        ))
                    })?);
                }
                parsed
            };
            run_pipeline(&cfg, &stages).map(report_outcome)?;
        }
    }
    Ok(())
}

fn report_outcome(outcome: ciresdiff::runman::PipelineOutcome) {
    for s in &outcome.executed {
        println!("ran {s}");
    }
    for s in &outcome.skipped {
        println!("skipped {s} (inputs unchanged)");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
