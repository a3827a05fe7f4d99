//! The four-variant ablation matrix: DM, DM-CIP, DM-R, DM-R-CIP trained and
//! evaluated with shared data, splits, and seeds.

use crate::config::{RunConfig, Variant};
use crate::error::{PipelineError, Result};
use crate::evaluate::{mean_std, EvalOutputs, EvalReport};
use crate::runner::train_and_evaluate;
use crate::split::Split;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub train_seed: u64,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub copy_psnr_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub variant: String,
    pub seeds: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Exactly one aggregate row per variant, in matrix order.
    pub table: Vec<VariantAggregate>,
    /// Test-split ids shared by every run.
    pub test_ids: Vec<usize>,
}

/// Train and evaluate all four variants for each training seed. Partial
/// rows are flushed to disk as they finish, so a late failure preserves
/// earlier results.
pub fn run_ablation(
    cfg: &RunConfig,
    split: &Split,
    train_seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<AblationReport> {
    if train_seeds.is_empty() {
        return Err(PipelineError::Other("ablation needs at least one seed".into()));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(dir, e)))?;
    }
    let mut rows: Vec<AblationRow> = Vec::new();
    let mut reports: Vec<(Variant, u64, EvalReport)> = Vec::new();
    for &seed in train_seeds {
        for variant in Variant::ALL {
            let result = train_and_evaluate(
                cfg,
                variant,
                split,
                seed,
                &EvalOutputs {
                    samples_dir: None,
                    eval_dir: None,
                },
            );
            match result {
                Ok((_, eval)) => {
                    rows.push(AblationRow {
                        variant: variant.tag().to_string(),
                        train_seed: seed,
                        psnr_mean: eval.summary.psnr_mean,
                        ssim_mean: eval.summary.ssim_mean,
                        copy_psnr_mean: eval.summary.copy_psnr_mean,
                    });
                    reports.push((variant, seed, eval));
                    if let Some(dir) = out_dir {
                        write_rows_csv(&dir.join("ablation_rows.csv"), &rows)?;
                    }
                }
                Err(e) => {
                    if let Some(dir) = out_dir {
                        let _ = write_rows_csv(&dir.join("ablation_rows.csv"), &rows);
                    }
                    return Err(PipelineError::Other(format!(
                        "ablation aborted at variant {} seed {seed}: {e} (partial rows preserved)",
                        variant.tag()
                    )));
                }
            }
        }
    }

    let mut table = Vec::with_capacity(4);
    for variant in Variant::ALL {
        let psnrs: Vec<f64> = rows
            .iter()
            .filter(|r| r.variant == variant.tag())
            .map(|r| r.psnr_mean)
            .collect();
        let ssims: Vec<f64> = rows
            .iter()
            .filter(|r| r.variant == variant.tag())
            .map(|r| r.ssim_mean)
            .collect();
        let (pm, ps) = mean_std(psnrs.iter().copied());
        let (sm, ss) = mean_std(ssims.iter().copied());
        table.push(VariantAggregate {
            variant: variant.tag().to_string(),
            seeds: psnrs.len(),
            psnr_mean: pm,
            psnr_std: ps,
            ssim_mean: sm,
            ssim_std: ss,
        });
    }
    let report = AblationReport {
        rows,
        table,
        test_ids: split.test.clone(),
    };
    if let Some(dir) = out_dir {
        write_table_csv(&dir.join("ablation.csv"), &report.table)?;
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| PipelineError::Other(format!("ablation report: {e}")))?;
        std::fs::write(dir.join("ablation.json"), json)
            .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(dir.join("ablation.json"), e)))?;
    }
    let _ = reports;
    Ok(report)
}

fn write_rows_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(path, e)))?;
    writeln!(f, "variant,train_seed,psnr_mean,ssim_mean,copy_psnr_mean")
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(path, e)))?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.variant, r.train_seed, r.psnr_mean, r.ssim_mean, r.copy_psnr_mean
        )
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(path, e)))?;
    }
    Ok(())
}

fn write_table_csv(path: &Path, table: &[VariantAggregate]) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(path, e)))?;
    writeln!(f, "variant,seeds,psnr_mean,psnr_std,ssim_mean,ssim_std")
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(path, e)))?;
    for r in table {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.variant, r.seeds, r.psnr_mean, r.psnr_std, r.ssim_mean, r.ssim_std
        )
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(path, e)))?;
    }
    Ok(())
}
