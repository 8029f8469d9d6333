pub mod audit;
pub mod converge;
pub mod edge;
pub mod negative;
pub mod oracle;

use serde::{Deserialize, Serialize};
use specedge::moments::{moment_report, EdgeMethod, MomentOptions, MomentReport};
use specedge::spectra::{gram_norm_with, operator_norm_with, NormMethod, NormOptions, NormResult};
use specedge::{Exec, ProfileSpec};

use crate::config::{ExperimentConfig, Mode};
use crate::error::CliResult;

/// Predicted edge of the statistic a sweep measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mode: Mode,
    pub method: EdgeMethod,
    pub k: usize,
    /// Edge of the limit measure of the square (symmetrized) model.
    pub square_edge: f64,
    /// Headline prediction for the measured statistic.
    pub value: f64,
    /// Root lower bound on the same scale as `value`.
    pub root_lower: f64,
    /// `2 sqrt(V_0)` on the same scale as `value`.
    pub upper_bracket: f64,
    /// Aspect ratio `c` in gram mode.
    pub aspect: Option<f64>,
    pub low_confidence: bool,
}

impl Prediction {
    /// In gram mode the statistic is `|A A^T|_op / N = (1 + c) mu^2` where
    /// `mu` is the edge of the symmetrization.
    pub fn from_report(report: &MomentReport, mode: Mode, profile: &ProfileSpec) -> Self {
        let aspect = match mode {
            Mode::Gram => profile.aspect(),
            Mode::Symmetric => None,
        };
        let scale = |x: f64| match aspect {
            Some(c) => (1.0 + c) * x * x,
            None => x,
        };
        let e = &report.edge;
        Prediction {
            mode,
            method: e.method,
            k: e.k,
            square_edge: e.value,
            value: scale(e.value),
            root_lower: scale(e.root),
            upper_bracket: scale(e.upper_bracket),
            aspect,
            low_confidence: report.method.low_confidence,
        }
    }
}

pub(crate) fn moment_options(cfg: &ExperimentConfig, exec: Exec) -> MomentOptions {
    MomentOptions {
        k_max: cfg.moments.k,
        method: cfg.moments.method,
        route: cfg.moments.route,
        tree_cap: cfg.moments.tree_cap,
        exec,
    }
}

/// Moment report of the limit kernel together with the headline prediction.
pub(crate) fn predict(cfg: &ExperimentConfig, exec: Exec) -> CliResult<(MomentReport, Prediction)> {
    let g = cfg.profile.limit_graphon_with(cfg.moments.resolution)?;
    let report = moment_report(&g, &moment_options(cfg, exec))?;
    let prediction = Prediction::from_report(&report, cfg.mode(), &cfg.profile);
    Ok((report, prediction))
}

/// Prediction when the profile has a limit kernel; `None` for per-`N`
/// custom profiles.
pub(crate) fn predict_if_limit(cfg: &ExperimentConfig, exec: Exec) -> CliResult<Option<Prediction>> {
    match cfg.profile {
        ProfileSpec::Custom { .. } => Ok(None),
        _ => Ok(Some(predict(cfg, exec)?.1)),
    }
}

pub(crate) fn norm_options(cfg: &ExperimentConfig, exec: Exec) -> NormOptions {
    NormOptions {
        dense_max: cfg.norm.dense_max,
        exec,
        ..NormOptions::default()
    }
}

/// Rescaled statistic of one sample: `|A|_op / sqrt(N)` or `|A A^T|_op / N`.
pub(crate) fn rescaled_norm(
    a: &nalgebra::DMatrix<f64>,
    mode: Mode,
    n: usize,
    opts: &NormOptions,
) -> CliResult<(f64, NormResult)> {
    Ok(match mode {
        Mode::Symmetric => {
            let r = operator_norm_with(a, opts)?;
            (r.value / (n as f64).sqrt(), r)
        }
        Mode::Gram => {
            let r = gram_norm_with(a, opts)?;
            (r.value / n as f64, r)
        }
    })
}

pub(crate) fn method_name(m: NormMethod) -> &'static str {
    match m {
        NormMethod::Auto => "auto",
        NormMethod::Dense => "dense",
        NormMethod::Lanczos => "lanczos",
        NormMethod::Power => "power",
    }
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
