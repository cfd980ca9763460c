//! Grids over the missing ratio and the friend-network update frequency.

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiment::{run_experiment, Summary};
use crate::files::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub method: &'static str,
    pub ratio: f64,
    pub mae_x10_mean: f64,
    pub mae_x10_std: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub method: &'static str,
    pub reconstruct_every: usize,
    pub mae_x10_mean: f64,
    pub mae_x10_std: f64,
    /// Mean training wall-clock per trial.
    pub train_seconds: f64,
    /// Training time at the first listed frequency over this one.
    pub speedup: f64,
}

fn csv_rows<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// One full run per ratio in `<out>/ratio_<r>/`, plus `<out>/sweep_ratio.csv`
/// with one row per (method, ratio).
pub fn sweep_ratios(base: &ExperimentConfig, ratios: &[f64]) -> Result<Vec<RatioRow>> {
    let mut rows = Vec::new();
    for &ratio in ratios {
        let cfg = ExperimentConfig { ratio, out: base.out.join(format!("ratio_{ratio}")), ..base.clone() };
        let outcome = run_experiment(&cfg)?;
        for m in &outcome.report.methods {
            rows.push(RatioRow { method: m.method, ratio, mae_x10_mean: m.mae_x10.mean, mae_x10_std: m.mae_x10.std, trials: m.trials.len() });
        }
    }
    write_atomic(&base.out.join("sweep_ratio.csv"), &csv_rows(&rows))?;
    Ok(rows)
}

/// One full run per update frequency in `<out>/every_<k>/` (model modes only),
/// plus `<out>/sweep_frequency.csv` with error and training time per setting.
pub fn sweep_frequencies(base: &ExperimentConfig, every: &[usize]) -> Result<Vec<FrequencyRow>> {
    let mut rows: Vec<FrequencyRow> = Vec::new();
    for &k in every {
        let cfg = ExperimentConfig { reconstruct_every: k, baselines: Vec::new(), out: base.out.join(format!("every_{k}")), ..base.clone() };
        let outcome = run_experiment(&cfg)?;
        for method in cfg.methods() {
            let trials: Vec<_> = outcome.trials_of(method).collect();
            let secs = trials.iter().map(|t| t.seconds("train")).sum::<f64>() / trials.len() as f64;
            let s = Summary::of(&trials.iter().map(|t| t.mae.x10).collect::<Vec<_>>());
            let first = rows.iter().find(|r| r.method == method.name()).map_or(secs, |r| r.train_seconds);
            rows.push(FrequencyRow {
                method: method.name(),
                reconstruct_every: k,
                mae_x10_mean: s.mean,
                mae_x10_std: s.std,
                train_seconds: secs,
                speedup: first / secs,
            });
        }
    }
    write_atomic(&base.out.join("sweep_frequency.csv"), &csv_rows(&rows))?;
    Ok(rows)
}
