use serde::{Deserialize, Serialize};
use specedge::checkers::{
    check_doubling_with, check_l1_rate_against, check_lindeberg, check_max_to_zero,
    validate_partition_with, DoublingReport, L1RateReport, LindebergReport, MaxToZeroReport,
    PartitionFamily, PartitionReport, PartitionSpec,
};
use specedge::graphon::l1_distance;
use specedge::moments::{moment_sequence, moment_sequence_grid};
use specedge::profiles::RectProfile;
use specedge::{EntryDistribution, Exec, Graphon, ProfileSpec, SCHEMA_VERSION};

use crate::config::{ExperimentConfig, Mode};
use crate::error::CliResult;
use crate::output::OutputDir;

/// Exponent used for the `4 + delta` moment condition.
const FOUR_PLUS_DELTA: f64 = 4.0 + 1e-9;

/// Outcome of a checker that may not apply to the configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "kebab-case")]
pub enum Checked<T> {
    Ran(T),
    Unavailable(String),
}

impl<T> Checked<T> {
    fn from_result(r: CliResult<T>) -> Self {
        match r {
            Ok(t) => Checked::Ran(t),
            Err(e) => Checked::Unavailable(e.to_string()),
        }
    }

    pub fn ran(&self) -> Option<&T> {
        match self {
            Checked::Ran(t) => Some(t),
            Checked::Unavailable(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConditions {
    pub mean_zero: bool,
    pub unit_variance: bool,
    /// Profile variances in `[0, 1]`.
    pub variance_bounded: bool,
    pub finite_fourth_moment: bool,
    pub finite_four_plus_delta_moment: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreePoint {
    pub n: usize,
    /// `||W_N - W||_1`
    pub l1: f64,
    /// `max_k |m_2k(W_N) - m_2k(W)| / m_2k(W)` over `k <= tree_k`.
    pub moment_gap: f64,
}

/// Tree densities of the induced graphons against the limit kernel. For
/// kernels bounded by one, `|t(T, W_N) - t(T, W)| <= k ||W_N - W||_1`, so a
/// vanishing L1 distance certifies convergence on every tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConvergence {
    pub tree_k: usize,
    pub points: Vec<TreePoint>,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionAudit {
    pub family: PartitionFamily,
    /// Grid size of the square model at each `N` of the config grid.
    pub sizes: Vec<usize>,
    pub reports: Vec<PartitionReport>,
    /// Partition levels reproduce the variance matrix exactly.
    pub levels_match: bool,
    /// `s^(N)_{i,j} <= s^(2N)_{2i,2j}` (1-based) on every size.
    pub diagonal_doubling: bool,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub name: String,
    pub met: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conclusion {
    InProbability,
    AlmostSure,
}

/// A sufficient set of conditions for the norm to converge to the predicted
/// edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub name: String,
    pub conclusion: Conclusion,
    /// `"|A|/sqrt(N)"` or `"|AA^T|/N"`.
    pub statistic: String,
    pub requirements: Vec<Requirement>,
    pub qualifies: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub profile: ProfileSpec,
    pub distribution: EntryDistribution,
    pub n_grid: Vec<usize>,
    pub moments: MomentConditions,
    pub lindeberg: Checked<LindebergReport>,
    pub max_to_zero: Checked<MaxToZeroReport>,
    pub tree_convergence: Checked<TreeConvergence>,
    pub doubling: Checked<Vec<DoublingReport>>,
    pub l1_rate: Checked<L1RateReport>,
    pub partition: Checked<PartitionAudit>,
    pub routes: Vec<Route>,
    /// `name (conclusion)` of every qualifying route.
    pub qualifies_for: Vec<String>,
}

/// Side of the square model at size parameter `n`, when the sizes of the
/// sequence double together with `n`.
fn square_side(profile: &ProfileSpec, n: usize) -> Option<usize> {
    match profile {
        ProfileSpec::Triangular => Some(2 * n),
        ProfileSpec::Gram { .. } => None,
        _ => Some(n),
    }
}

fn derived_partition(profile: &ProfileSpec) -> Option<PartitionFamily> {
    match profile {
        ProfileSpec::Band { p } => Some(PartitionFamily::Band { p: *p }),
        ProfileSpec::Step(s) => Some(PartitionFamily::StepBlocks {
            breakpoints: s.breakpoints.clone(),
            sigma: s.sigma.clone(),
        }),
        ProfileSpec::Triangular => Some(PartitionFamily::TriangularSym),
        _ => None,
    }
}

fn tree_convergence(cfg: &ExperimentConfig) -> CliResult<TreeConvergence> {
    let k = cfg.audit.tree_k;
    let limit = cfg.profile.limit_graphon_with(cfg.moments.resolution)?;
    let target = moment_sequence(&limit, k);
    let points = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let wn = cfg.profile.graphon_of(n)?;
            let m = moment_sequence_grid(&wn, k);
            let moment_gap = (1..=k)
                .filter(|&j| target[j] > 0.0)
                .map(|j| (m[j] - target[j]).abs() / target[j])
                .fold(0.0, f64::max);
            Ok(TreePoint {
                n,
                l1: l1_distance(&Graphon::Step(wn), &limit),
                moment_gap,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let l1: Vec<f64> = points.iter().map(|p| p.l1).collect();
    let passes = l1.iter().all(|&d| d == 0.0)
        || (l1.windows(2).all(|w| w[1] <= w[0]) && l1[l1.len() - 1] < l1[0]);
    Ok(TreeConvergence {
        tree_k: k,
        points,
        passes,
    })
}

fn doubling(cfg: &ExperimentConfig, exec: Exec) -> CliResult<Vec<DoublingReport>> {
    if cfg.profile.is_rectangular() {
        return Err(crate::error::CliError::Config(
            "doubling applies to square profiles".into(),
        ));
    }
    Ok(cfg
        .n_grid
        .iter()
        .map(|&n| check_doubling_with(&cfg.profile, n, exec))
        .collect::<specedge::Result<Vec<_>>>()?)
}

fn partition(cfg: &ExperimentConfig, exec: Exec) -> CliResult<PartitionAudit> {
    let unavailable = |msg: &str| crate::error::CliError::Config(msg.into());
    let family = cfg
        .audit
        .partition
        .clone()
        .or_else(|| derived_partition(&cfg.profile))
        .ok_or_else(|| unavailable("no partition declared or derivable for this profile"))?;
    let mut sizes = Vec::new();
    for &n in &cfg.n_grid {
        sizes.push(square_side(&cfg.profile, n).ok_or_else(|| {
            unavailable("square model sizes do not double with N for gram profiles")
        })?);
    }
    let mut reports = Vec::new();
    let mut levels_match = true;
    let mut diagonal_doubling = true;
    for (&n, &side) in cfg.n_grid.iter().zip(&sizes) {
        let ps = PartitionSpec::from_family(&family, &[side, 2 * side])?;
        reports.push(validate_partition_with(&ps, side, exec)?);
        let levels = ps.get(side).expect("built above").level_matrix()?;
        let s = cfg.profile.square_variance_matrix(n)?;
        let s2 = cfg.profile.square_variance_matrix(2 * n)?;
        levels_match &= levels.rows() == s.rows()
            && (levels.as_matrix() - s.as_matrix()).amax() <= 1e-12;
        for i in 0..side {
            for j in 0..side {
                diagonal_doubling &= s.get(i, j) <= s2.get(2 * i + 1, 2 * j + 1) + 1e-12;
            }
        }
    }
    let passes = levels_match && diagonal_doubling && reports.iter().all(|r| r.passes);
    Ok(PartitionAudit {
        family,
        sizes,
        reports,
        levels_match,
        diagonal_doubling,
        passes,
    })
}

struct RouteBuilder {
    statistic: &'static str,
    routes: Vec<Route>,
}

impl RouteBuilder {
    fn add(&mut self, name: &str, conclusion: Conclusion, reqs: &[(&str, bool)]) {
        let requirements: Vec<Requirement> = reqs
            .iter()
            .map(|&(name, met)| Requirement {
                name: name.to_string(),
                met,
            })
            .collect();
        self.routes.push(Route {
            name: name.to_string(),
            conclusion,
            statistic: self.statistic.to_string(),
            qualifies: requirements.iter().all(|r| r.met),
            requirements,
        });
    }

    /// Adds the in-probability route and its almost-sure upgrade.
    fn add_pair(&mut self, name: &str, reqs: &[(&str, bool)], four_plus_delta: bool) {
        self.add(name, Conclusion::InProbability, reqs);
        let mut strong = reqs.to_vec();
        strong.push(("dominated by a law with finite 4+delta moment", four_plus_delta));
        self.add(name, Conclusion::AlmostSure, &strong);
    }
}

pub fn cmd_audit(cfg: &ExperimentConfig, exec: Exec) -> CliResult<AuditReport> {
    let a = &cfg.audit;
    let dist = &cfg.distribution;
    let profile = &cfg.profile;
    let grid = &cfg.n_grid;

    // the sampler draws sigma_ij * X with X standardized and s_ij ~ sigma_ij^2 in [0, 1]
    let moments = MomentConditions {
        mean_zero: dist.is_symmetric(),
        unit_variance: true,
        variance_bounded: true,
        finite_fourth_moment: dist.has_finite_moment(4.0),
        finite_four_plus_delta_moment: dist.has_finite_moment(FOUR_PLUS_DELTA),
    };
    let lindeberg = Checked::from_result(
        check_lindeberg(dist, profile, grid, a.epsilon, a.lindeberg_threshold, a.tail_method)
            .map_err(Into::into),
    );
    let max_to_zero = Checked::from_result(check_max_to_zero(dist, grid, a.epsilon).map_err(Into::into));
    let tree = Checked::from_result(tree_convergence(cfg));
    let doubling = Checked::from_result(doubling(cfg, exec));
    let l1_rate = Checked::from_result((|| {
        let limit = profile.limit_graphon_with(cfg.moments.resolution)?;
        Ok(check_l1_rate_against(profile, &limit, grid, a.l1_exponent)?)
    })());
    let partition = Checked::from_result(partition(cfg, exec));

    let base = moments.mean_zero && moments.unit_variance && moments.variance_bounded;
    let general = base
        && moments.finite_fourth_moment
        && max_to_zero.ran().is_some_and(|m| m.passes);
    let trees_ok = tree.ran().is_some_and(|t| t.passes);
    let doubling_ok = doubling.ran().is_some_and(|d| d.iter().all(|r| r.holds));
    let l1_ok = l1_rate.ran().is_some_and(|r| r.passes);
    let partition_ok = partition.ran().is_some_and(|p| p.passes);
    let fpd = moments.finite_four_plus_delta_moment;
    let l1_req = format!("L1 rate N^-{} for the induced graphons", a.l1_exponent);

    const TAILS: &str = "mean zero, variance at most one, finite fourth moment, max-to-zero";
    const TREES: &str = "convergence on trees";
    let mut rb = RouteBuilder {
        statistic: match cfg.mode() {
            Mode::Symmetric => "|A|/sqrt(N)",
            Mode::Gram => "|AA^T|/N",
        },
        routes: Vec::new(),
    };
    rb.add_pair(
        "doubling",
        &[(TAILS, general), (TREES, trees_ok), ("doubling inequality", doubling_ok)],
        fpd,
    );
    rb.add_pair("l1-rate", &[(TAILS, general), (TREES, trees_ok), (&l1_req, l1_ok)], fpd);
    rb.add_pair(
        "generalized-step",
        &[(TAILS, general), (TREES, trees_ok), ("generalized step partition", partition_ok)],
        fpd,
    );
    let standard = base && fpd;
    let standard_req = "mean zero, unit variance, finite 4+delta moment";
    let shaped = [
        ("step-profile", "step profile", matches!(profile, ProfileSpec::Step(_))),
        (
            "continuous-profile",
            "continuous profile",
            matches!(profile, ProfileSpec::Continuous { .. }),
        ),
        ("band", "band profile", matches!(profile, ProfileSpec::Band { .. })),
        ("triangular", "triangular profile", matches!(profile, ProfileSpec::Triangular)),
        (
            "gram-step",
            "rectangular step profile",
            matches!(profile, ProfileSpec::Gram { rect: RectProfile::Step { .. }, .. }),
        ),
        (
            "gram-continuous",
            "rectangular continuous profile",
            matches!(profile, ProfileSpec::Gram { rect: RectProfile::Continuous { .. }, .. }),
        ),
    ];
    for (name, req, ok) in shaped {
        rb.add(name, Conclusion::AlmostSure, &[(req, ok), (standard_req, standard)]);
    }

    let qualifies_for = rb
        .routes
        .iter()
        .filter(|r| r.qualifies)
        .map(|r| {
            format!(
                "{} ({})",
                r.name,
                match r.conclusion {
                    Conclusion::InProbability => "in probability",
                    Conclusion::AlmostSure => "almost surely",
                }
            )
        })
        .collect();
    Ok(AuditReport {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        profile: profile.clone(),
        distribution: *dist,
        n_grid: grid.clone(),
        moments,
        lindeberg,
        max_to_zero,
        tree_convergence: tree,
        doubling,
        l1_rate,
        partition,
        routes: rb.routes,
        qualifies_for,
    })
}

impl AuditReport {
    pub fn write(&self, out: &OutputDir) -> CliResult<()> {
        out.write_json("audit.json", self)?;
        Ok(())
    }

    pub fn route(&self, name: &str, conclusion: Conclusion) -> Option<&Route> {
        self.routes
            .iter()
            .find(|r| r.name == name && r.conclusion == conclusion)
    }

    pub fn summary(&self) -> String {
        if self.qualifies_for.is_empty() {
            "audit: no route qualifies".into()
        } else {
            format!("audit: qualifies via {}", self.qualifies_for.join(", "))
        }
    }
}
