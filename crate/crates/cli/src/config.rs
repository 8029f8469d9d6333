use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use specedge::checkers::{PartitionFamily, TailMethod};
use specedge::moments::{EdgeMethod, MomentRoute};
use specedge::trees::DEFAULT_TREE_CAP;
use specedge::{EntryDistribution, ProfileSpec};

use crate::error::{CliError, CliResult};

/// Largest square dimension sampled densely.
pub const MAX_DENSE_N: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Edge,
    Converge,
    Audit,
    Oracle,
    NegativeControl,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Edge => "edge",
            Command::Converge => "converge",
            Command::Audit => "audit",
            Command::Oracle => "oracle",
            Command::NegativeControl => "negative-control",
        }
    }
}

/// Which norm a sweep measures: `|A|_op / sqrt(N)` or `|A A^T|_op / N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Symmetric,
    Gram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentConfig {
    /// Moment order `K`.
    pub k: usize,
    pub method: EdgeMethod,
    /// Quadrature resolution for kernels that are not step functions.
    pub resolution: usize,
    pub route: MomentRoute,
    pub tree_cap: u32,
}

impl Default for MomentConfig {
    fn default() -> Self {
        MomentConfig {
            k: 12,
            method: EdgeMethod::Richardson,
            resolution: specedge::graphon::DEFAULT_RESOLUTION,
            route: MomentRoute::Recursion,
            tree_cap: DEFAULT_TREE_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormConfig {
    /// Square dimension up to which the dense eigensolver is used.
    pub dense_max: usize,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig { dense_max: 2048 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub epsilon: f64,
    pub lindeberg_threshold: f64,
    /// Demanded exponent `D` of the L1 rate.
    pub l1_exponent: f64,
    pub tail_method: TailMethod,
    /// Partition for the generalized-step route; derived from the profile
    /// when absent.
    pub partition: Option<PartitionFamily>,
    /// Largest `k` for the tree-density convergence check.
    pub tree_k: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            epsilon: 1.0,
            lindeberg_threshold: 1e-3,
            l1_exponent: 1.0,
            tail_method: TailMethod::Analytic,
            partition: None,
            tree_k: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub ns: Vec<usize>,
    pub ks: Vec<u32>,
    /// Explicit toy profiles; when empty, `random_profiles` step profiles are
    /// drawn from `profile_seed`.
    pub profiles: Vec<ProfileSpec>,
    pub random_profiles: usize,
    pub profile_seed: u64,
    pub distribution: EntryDistribution,
    pub samples: usize,
    pub mc_seed: u64,
    /// Standard errors allowed between Monte Carlo and exact traces.
    pub z_max: f64,
    pub bound_c: f64,
    pub bound_epsilon: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            ns: vec![4, 5, 6],
            ks: vec![1, 2, 3],
            profiles: Vec::new(),
            random_profiles: 3,
            profile_seed: 2024,
            distribution: EntryDistribution::Rademacher,
            samples: 100_000,
            mc_seed: 17,
            z_max: 4.0,
            bound_c: 1.0,
            bound_epsilon: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NegativeConfig {
    /// Truncation exponent: entries above `N^{1/2 - eta}` are split off.
    pub eta: f64,
    /// Relative excess of the last median over the prediction that counts as
    /// divergence.
    pub excess: f64,
}

impl Default for NegativeConfig {
    fn default() -> Self {
        NegativeConfig { eta: 0.1, excess: 0.05 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default = "ProfileSpec::wigner")]
    pub profile: ProfileSpec,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "gaussian")]
    pub distribution: EntryDistribution,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub moments: MomentConfig,
    /// Derived from the profile when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub norm: NormConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub negative: NegativeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn gaussian() -> EntryDistribution {
    EntryDistribution::Gaussian
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config uses defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or(if self.profile.is_rectangular() {
            Mode::Gram
        } else {
            Mode::Symmetric
        })
    }

    /// Pins the command and mode, then checks everything the command needs.
    pub fn resolve(mut self, cmd: Command) -> CliResult<Self> {
        if let Some(c) = self.command {
            if c != cmd {
                return Err(CliError::Config(format!(
                    "config declares command `{}` but `{}` was invoked",
                    c.name(),
                    cmd.name()
                )));
            }
        }
        self.command = Some(cmd);
        self.mode = Some(self.mode());
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> CliResult<()> {
        let cmd = self.command.expect("resolved");
        let bad = |msg: String| Err(CliError::Config(msg));
        self.profile.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.distribution
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        match (self.mode(), self.profile.is_rectangular()) {
            (Mode::Gram, false) => return bad("gram mode needs a rectangular profile".into()),
            (Mode::Symmetric, true) => {
                return bad("rectangular profiles are measured in gram mode".into())
            }
            _ => {}
        }
        if self.moments.k < 2 && self.moments.method != EdgeMethod::Root {
            return bad("ratio and richardson estimates need moments.k >= 2".into());
        }
        if self.moments.resolution == 0 {
            return bad("moments.resolution must be positive".into());
        }
        match cmd {
            Command::Converge | Command::NegativeControl => {
                if self.n_grid.is_empty() {
                    return bad("n_grid is empty".into());
                }
                if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
                    return bad(format!("n_grid must be strictly ascending, got {:?}", self.n_grid));
                }
                if self.n_grid[0] == 0 {
                    return bad("n_grid entries must be positive".into());
                }
                if cmd == Command::Converge && self.seeds.len() < 3 {
                    return bad(format!("converge needs at least 3 seeds, got {}", self.seeds.len()));
                }
                if self.seeds.is_empty() {
                    return bad("seeds is empty".into());
                }
                let mut seen = self.seeds.clone();
                seen.sort_unstable();
                if seen.windows(2).any(|w| w[0] == w[1]) {
                    return bad("seeds must be distinct".into());
                }
                for &n in &self.n_grid {
                    self.memory_guard(n)?;
                }
                if cmd == Command::NegativeControl {
                    if self.mode() != Mode::Symmetric {
                        return bad("negative-control runs in symmetric mode".into());
                    }
                    let eta = self.negative.eta;
                    if !(eta > 0.0 && eta < 0.125) {
                        return bad(format!("negative.eta = {eta} not in (0, 1/8)"));
                    }
                }
            }
            Command::Audit => {
                if self.n_grid.len() < 2 {
                    return bad("audit needs an n_grid with at least two sizes".into());
                }
                if self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] == 0 {
                    return bad(format!("n_grid must be positive and ascending, got {:?}", self.n_grid));
                }
                if !(self.audit.epsilon > 0.0) {
                    return bad("audit.epsilon must be positive".into());
                }
                for &n in &self.n_grid {
                    // doubling looks at 2N
                    self.memory_guard(2 * n)?;
                }
            }
            Command::Oracle => {
                let o = &self.oracle;
                if o.ns.is_empty() || o.ks.is_empty() {
                    return bad("oracle.ns and oracle.ks must be nonempty".into());
                }
                if let Some(&n) = o.ns.iter().find(|&&n| n == 0 || n > specedge::moments::CYCLES_MAX_N) {
                    return bad(format!(
                        "oracle size {n} outside 1..={}",
                        specedge::moments::CYCLES_MAX_N
                    ));
                }
                if let Some(&k) = o.ks.iter().find(|&&k| k == 0 || k > specedge::moments::CYCLES_MAX_K) {
                    return bad(format!(
                        "oracle order {k} outside 1..={}",
                        specedge::moments::CYCLES_MAX_K
                    ));
                }
                if o.samples < 2 {
                    return bad("oracle.samples must be at least 2".into());
                }
                o.distribution
                    .validate()
                    .map_err(|e| CliError::Config(e.to_string()))?;
                for p in &o.profiles {
                    p.validate().map_err(|e| CliError::Config(e.to_string()))?;
                    if p.is_rectangular() {
                        return bad("oracle profiles must be square".into());
                    }
                }
            }
            Command::Edge => {}
        }
        Ok(())
    }

    fn memory_guard(&self, n: usize) -> CliResult<()> {
        let (rows, cols) = self.profile.dims(n);
        let ok = match self.mode() {
            Mode::Symmetric => n <= MAX_DENSE_N,
            Mode::Gram => rows * cols <= MAX_DENSE_N * MAX_DENSE_N,
        };
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "N = {n} ({rows}x{cols}) exceeds the dense memory guard of {MAX_DENSE_N}"
            )))
        }
    }

    /// SHA-256 of the canonical JSON form (sorted keys, defaults filled in),
    /// leaving out where the outputs go.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}
