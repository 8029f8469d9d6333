use serde::{Deserialize, Serialize};
use specedge::sampler::{truncate_split, Centering};
use specedge::{EntryDistribution, Exec, SCHEMA_VERSION};

use super::converge::{summarize, sweep, RunRow, SizeSummary, Trend};
use super::{predict_if_limit, Prediction};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::OutputDir;

/// Truncation diagnostics of one sample, row of `negative_control_runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub config_hash: String,
    pub n: usize,
    pub seed: u64,
    pub statistic: f64,
    /// `N^{1/2 - eta}`
    pub threshold: f64,
    /// Entries of `A` above the threshold.
    pub gt_nonzeros: usize,
    /// `max |a_ij| / sqrt(N)`
    pub max_entry_scaled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeControlReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub distribution: EntryDistribution,
    pub eta: f64,
    pub prediction: Option<Prediction>,
    pub runs: Vec<RunRow>,
    pub truncation: Vec<TruncationRow>,
    pub summaries: Vec<SizeSummary>,
    pub trend: Trend,
    /// The entry law has an infinite fourth moment.
    pub expected_divergence: bool,
    /// Medians strictly increasing and the last one above the prediction by
    /// more than the configured relative excess.
    pub diverging: bool,
    /// Observation agrees with expectation.
    pub consistent: bool,
}

pub fn cmd_negative_control(cfg: &ExperimentConfig, exec: Exec) -> CliResult<NegativeControlReport> {
    let hash = cfg.hash();
    let eta = cfg.negative.eta;
    let prediction = predict_if_limit(cfg, exec)?;
    let centering = Centering::Analytic {
        distribution: cfg.distribution,
    };
    let results = sweep(cfg, exec, |n, a, s| {
        let split = truncate_split(a, eta, centering, Some(s))?;
        let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Ok((split.threshold, split.gt_nonzeros, amax / (n as f64).sqrt()))
    })?;
    let mut runs = Vec::with_capacity(results.len());
    let mut truncation = Vec::with_capacity(results.len());
    for (row, (threshold, gt_nonzeros, max_entry_scaled)) in results {
        truncation.push(TruncationRow {
            config_hash: hash.clone(),
            n: row.n,
            seed: row.seed,
            statistic: row.statistic,
            threshold,
            gt_nonzeros,
            max_entry_scaled,
        });
        runs.push(row);
    }
    let (summaries, trend) = summarize(&hash, &cfg.n_grid, &runs, prediction.as_ref());
    let last = summaries.last().expect("nonempty grid").median;
    let exceeds = prediction
        .as_ref()
        .is_none_or(|p| last > p.value * (1.0 + cfg.negative.excess));
    let diverging = trend.medians_increasing && exceeds;
    let expected_divergence = !cfg.distribution.has_finite_moment(4.0);
    Ok(NegativeControlReport {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        distribution: cfg.distribution,
        eta,
        prediction,
        runs,
        truncation,
        summaries,
        trend,
        expected_divergence,
        diverging,
        consistent: diverging == expected_divergence,
    })
}

impl NegativeControlReport {
    pub fn write(&self, out: &OutputDir) -> CliResult<()> {
        out.write_json("negative_control.json", self)?;
        out.write_csv("negative_control_runs.csv", &self.truncation)?;
        out.write_csv("negative_control_summary.csv", &self.summaries)?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let medians: Vec<String> = self
            .summaries
            .iter()
            .map(|s| format!("N={} median={:.4}", s.n, s.median))
            .collect();
        format!(
            "negative-control: {}; diverging={} expected={} consistent={}",
            medians.join(", "),
            self.diverging,
            self.expected_divergence,
            self.consistent
        )
    }
}
