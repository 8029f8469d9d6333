use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use specedge::checkers::{loglog_fit, LogLogFit};
use specedge::sampler::{sample_rect_from_variances, sample_from_variances};
use specedge::{EntryDistribution, Exec, ProfileSpec, VarianceMatrix, SCHEMA_VERSION};

use super::{method_name, norm_options, predict_if_limit, quantile, rescaled_norm, Prediction};
use crate::config::{ExperimentConfig, Mode};
use crate::error::CliResult;
use crate::output::OutputDir;

/// Samples with at most this many entries are drawn concurrently across
/// seeds; larger ones are processed one at a time to bound memory.
const FAN_OUT_MAX_ENTRIES: usize = 2048 * 2048;

/// One sample of the sweep, row of `converge_runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub config_hash: String,
    pub n: usize,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    /// `|A|_op / sqrt(N)` or `|A A^T|_op / N`.
    pub statistic: f64,
    pub norm_method: String,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

/// Per-size summary over seeds, row of `converge_summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub config_hash: String,
    pub n: usize,
    pub seeds: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
    pub predicted: Option<f64>,
    pub root_lower: Option<f64>,
    /// `|median - predicted|`
    pub gap: Option<f64>,
    pub relative_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    /// Log-log slope of the median against `N`.
    pub median_fit: Option<LogLogFit>,
    /// Log-log slope of the gap against `N`.
    pub gap_fit: Option<LogLogFit>,
    /// Medians strictly increasing along the grid.
    pub medians_increasing: bool,
    /// Grid steps on which the gap grew.
    pub gap_increases: Option<usize>,
    pub gap_nonincreasing: Option<bool>,
    /// At most one grid step on which the gap grew.
    pub gap_nonincreasing_with_slack: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub config_hash: String,
    pub mode: Mode,
    pub profile: ProfileSpec,
    pub distribution: EntryDistribution,
    pub prediction: Option<Prediction>,
    pub runs: Vec<RunRow>,
    pub summaries: Vec<SizeSummary>,
    pub trend: Trend,
}

/// Samples every `(N, seed)` pair, in that order, handing each matrix and its
/// variances to `extra` for additional diagnostics.
pub(crate) fn sweep<T, F>(cfg: &ExperimentConfig, exec: Exec, extra: F) -> CliResult<Vec<(RunRow, T)>>
where
    T: Send,
    F: Fn(usize, &DMatrix<f64>, &VarianceMatrix) -> CliResult<T> + Sync,
{
    let hash = cfg.hash();
    let mode = cfg.mode();
    let opts = norm_options(cfg, exec);
    let mut out = Vec::with_capacity(cfg.n_grid.len() * cfg.seeds.len());
    for &n in &cfg.n_grid {
        let s = cfg.profile.variance_matrix(n)?;
        let one = |seed: u64| -> CliResult<(RunRow, T)> {
            let a = match mode {
                Mode::Symmetric => sample_from_variances(&s, &cfg.distribution, seed, exec)?,
                Mode::Gram => sample_rect_from_variances(&s, &cfg.distribution, seed, exec)?,
            };
            let (statistic, r) = rescaled_norm(&a, mode, n, &opts)?;
            let row = RunRow {
                config_hash: hash.clone(),
                n,
                seed,
                rows: a.nrows(),
                cols: a.ncols(),
                statistic,
                norm_method: method_name(r.method).into(),
                iterations: r.iterations,
                converged: r.converged,
                residual: r.residual,
            };
            Ok((row, extra(n, &a, &s)?))
        };
        let outer = if s.rows() * s.cols() <= FAN_OUT_MAX_ENTRIES {
            exec
        } else {
            Exec::Sequential
        };
        for r in outer.map(&cfg.seeds, |&seed| one(seed)) {
            out.push(r?);
        }
    }
    Ok(out)
}

pub(crate) fn summarize(
    hash: &str,
    grid: &[usize],
    runs: &[RunRow],
    prediction: Option<&Prediction>,
) -> (Vec<SizeSummary>, Trend) {
    let summaries: Vec<SizeSummary> = grid
        .iter()
        .map(|&n| {
            let mut x: Vec<f64> = runs.iter().filter(|r| r.n == n).map(|r| r.statistic).collect();
            x.sort_by(f64::total_cmp);
            let median = quantile(&x, 0.5);
            let (q1, q3) = (quantile(&x, 0.25), quantile(&x, 0.75));
            let predicted = prediction.map(|p| p.value);
            let gap = predicted.map(|p| (median - p).abs());
            SizeSummary {
                config_hash: hash.to_string(),
                n,
                seeds: x.len(),
                median,
                q1,
                q3,
                iqr: q3 - q1,
                min: x[0],
                max: x[x.len() - 1],
                predicted,
                root_lower: prediction.map(|p| p.root_lower),
                gap,
                relative_gap: gap.zip(predicted).map(|(g, p)| if p > 0.0 { g / p } else { g }),
            }
        })
        .collect();
    let pts = |f: &dyn Fn(&SizeSummary) -> Option<f64>| -> Vec<(f64, f64)> {
        summaries
            .iter()
            .filter_map(|s| f(s).map(|v| (s.n as f64, v)))
            .collect()
    };
    let gaps: Option<Vec<f64>> = summaries.iter().map(|s| s.gap).collect();
    let gap_increases = gaps
        .as_ref()
        .map(|g| g.windows(2).filter(|w| w[1] > w[0]).count());
    let trend = Trend {
        median_fit: loglog_fit(&pts(&|s| Some(s.median))),
        gap_fit: loglog_fit(&pts(&|s| s.gap)),
        medians_increasing: summaries.windows(2).all(|w| w[1].median > w[0].median),
        gap_increases,
        gap_nonincreasing: gap_increases.map(|c| c == 0),
        gap_nonincreasing_with_slack: gap_increases.map(|c| c <= 1),
    };
    (summaries, trend)
}

pub fn cmd_converge(cfg: &ExperimentConfig, exec: Exec) -> CliResult<ExperimentResult> {
    let prediction = predict_if_limit(cfg, exec)?;
    let runs: Vec<RunRow> = sweep(cfg, exec, |_, _, _| Ok(()))?
        .into_iter()
        .map(|(r, ())| r)
        .collect();
    let hash = cfg.hash();
    let (summaries, trend) = summarize(&hash, &cfg.n_grid, &runs, prediction.as_ref());
    Ok(ExperimentResult {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        mode: cfg.mode(),
        profile: cfg.profile.clone(),
        distribution: cfg.distribution,
        prediction,
        runs,
        summaries,
        trend,
    })
}

impl ExperimentResult {
    pub fn write(&self, out: &OutputDir) -> CliResult<()> {
        out.write_json("converge.json", self)?;
        out.write_csv("converge_runs.csv", &self.runs)?;
        out.write_csv("converge_summary.csv", &self.summaries)?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::from("converge:");
        for m in &self.summaries {
            s.push_str(&format!(" N={} median={:.4}", m.n, m.median));
            if let Some(g) = m.gap {
                s.push_str(&format!(" gap={g:.4}"));
            }
            s.push(';');
        }
        if let Some(p) = &self.prediction {
            s.push_str(&format!(" predicted {:.4}", p.value));
        }
        s
    }

    pub fn median_at(&self, n: usize) -> Option<f64> {
        self.summaries.iter().find(|s| s.n == n).map(|s| s.median)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_wigner_sweep_is_reproducible() {
        let cfg = ExperimentConfig::from_json(r#"{"n_grid": [32, 64], "seeds": [1, 2, 3]}"#)
            .unwrap()
            .resolve(crate::config::Command::Converge)
            .unwrap();
        let a = cmd_converge(&cfg, Exec::Parallel).unwrap();
        let b = cmd_converge(&cfg, Exec::Sequential).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.runs.len(), 6);
        assert!(a.runs.iter().all(|r| r.config_hash == a.config_hash));
        for s in &a.summaries {
            assert!(s.median > 1.5 && s.median < 2.5, "{s:?}");
            assert!(s.q1 <= s.median && s.median <= s.q3);
        }
    }

    #[test]
    fn trend_counts_gap_increases() {
        let p = Prediction {
            mode: Mode::Symmetric,
            method: specedge::moments::EdgeMethod::Richardson,
            k: 12,
            square_edge: 2.0,
            value: 2.0,
            root_lower: 1.8,
            upper_bracket: 2.0,
            aspect: None,
            low_confidence: false,
        };
        let row = |n, statistic| RunRow {
            config_hash: "h".into(),
            n,
            seed: 0,
            rows: n,
            cols: n,
            statistic,
            norm_method: "dense".into(),
            iterations: 0,
            converged: true,
            residual: 0.0,
        };
        let runs = [row(10, 1.7), row(20, 1.8), row(40, 1.75), row(80, 1.95)];
        let (s, t) = summarize("h", &[10, 20, 40, 80], &runs, Some(&p));
        assert_eq!(s.len(), 4);
        assert_eq!(t.gap_increases, Some(1));
        assert_eq!(t.gap_nonincreasing, Some(false));
        assert_eq!(t.gap_nonincreasing_with_slack, Some(true));
        assert!(!t.medians_increasing);
    }
}
