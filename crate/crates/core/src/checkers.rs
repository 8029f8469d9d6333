//! Executable versions of the structural conditions on a model: tail
//! conditions on the entry law, the doubling inequality, the L1 rate of the
//! induced graphons, and the geometry of generalized step partitions.
//!
//! Every checker with an analytic route is deterministic; Monte Carlo is only
//! used when explicitly requested.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Exec};
use crate::graphon::{l1_distance, Graphon};
use crate::profiles::{interval_map, ProfileSpec, VarianceMatrix};
use crate::sampler::EntryDistribution;

/// Maximum number of witnesses kept per failing check.
pub const MAX_WITNESSES: usize = 10;
pub const DEFAULT_MC_DRAWS: usize = 1_000_000;
/// Two-sided 99% normal quantile.
const Z99: f64 = 2.575_829_303_548_901;
/// Absolute slack for the doubling inequality.
pub const DOUBLING_SLACK: f64 = 1e-12;

/// Least-squares fit of `ln y = intercept + slope ln x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for two points.
    pub slope_se: f64,
}

/// Fit over the points with `y > 0`; `None` with fewer than two of them.
pub fn loglog_fit(points: &[(f64, f64)]) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = pts
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some(LogLogFit {
        slope,
        intercept,
        slope_se,
    })
}

fn nonincreasing(values: &[f64]) -> bool {
    values
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// tail conditions

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TailMethod {
    #[default]
    Analytic,
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindebergPoint {
    pub n: usize,
    pub value: f64,
    /// Upper end of the 99% confidence interval (Monte Carlo only).
    pub ci_upper: Option<f64>,
}

impl LindebergPoint {
    /// The value compared against the threshold.
    pub fn pass_value(&self) -> f64 {
        self.ci_upper.unwrap_or(self.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindebergReport {
    pub distribution: EntryDistribution,
    pub epsilon: f64,
    pub threshold: f64,
    pub method: TailMethod,
    pub points: Vec<LindebergPoint>,
    pub nonincreasing: bool,
    pub fit: Option<LogLogFit>,
    /// Decay no faster than `N^{-1}`: the term vanishes, but slowly.
    pub slow_decay: bool,
    pub passes: bool,
}

/// Distinct variances of a matrix with their multiplicities, in increasing
/// order.
fn variance_histogram(v: &VarianceMatrix) -> Vec<(f64, usize)> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for x in v.as_matrix().iter() {
        if *x > 0.0 {
            *counts.entry(x.to_bits()).or_default() += 1;
        }
    }
    // positive f64 bit patterns sort like the values
    counts
        .into_iter()
        .map(|(b, c)| (f64::from_bits(b), c))
        .collect()
}

/// Lindeberg term `(1 / (rows cols)) sum_ij E[a_ij^2 1{|a_ij| >= eps sqrt(N)}]`
/// with `a_ij = sigma_ij x_ij`, at size parameter `n`.
pub fn lindeberg_term(
    dist: &EntryDistribution,
    profile: &ProfileSpec,
    n: usize,
    epsilon: f64,
    method: TailMethod,
) -> Result<LindebergPoint> {
    dist.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let v = profile.variance_matrix(n)?;
    let total = (v.rows() * v.cols()) as f64;
    let level = epsilon * (n as f64).sqrt();
    let hist = variance_histogram(&v);
    match method {
        TailMethod::Analytic => {
            let terms: Vec<f64> = hist
                .iter()
                .map(|&(s2, c)| c as f64 * s2 * dist.trunc_second_moment(level / s2.sqrt()))
                .collect();
            Ok(LindebergPoint {
                n,
                value: pairwise_sum(&terms) / total,
                ci_upper: None,
            })
        }
        TailMethod::MonteCarlo { draws, seed } => {
            if draws < 2 {
                return Err(Error::InvalidArgument("need at least two draws".into()));
            }
            // entry e contributes s2_e x^2 whenever |x| >= t_e; sort by t_e
            // (decreasing variance) and accumulate
            let mut by_t: Vec<(f64, f64)> = hist
                .iter()
                .map(|&(s2, c)| (level / s2.sqrt(), c as f64 * s2))
                .collect();
            by_t.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut prefix = Vec::with_capacity(by_t.len() + 1);
            prefix.push(0.0);
            for (_, w) in &by_t {
                prefix.push(prefix.last().unwrap() + w);
            }
            let thresholds: Vec<f64> = by_t.iter().map(|p| p.0).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g: Vec<f64> = (0..draws)
                .map(|_| {
                    let x = dist.sample(&mut rng);
                    let k = thresholds.partition_point(|&t| t <= x.abs());
                    prefix[k] * x * x / total
                })
                .collect();
            let mean = pairwise_sum(&g) / draws as f64;
            let var = g.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let se = (var / draws as f64).sqrt();
            Ok(LindebergPoint {
                n,
                value: mean,
                ci_upper: Some(mean + Z99 * se),
            })
        }
    }
}

/// Lindeberg term over a grid of sizes. Passes iff the term at the largest
/// size is below `threshold` and the term does not increase along the grid.
pub fn check_lindeberg(
    dist: &EntryDistribution,
    profile: &ProfileSpec,
    ns: &[usize],
    epsilon: f64,
    threshold: f64,
    method: TailMethod,
) -> Result<LindebergReport> {
    if ns.is_empty() {
        return Err(Error::InvalidArgument("empty N grid".into()));
    }
    let points = ns
        .iter()
        .map(|&n| lindeberg_term(dist, profile, n, epsilon, method))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let mono = nonincreasing(&values);
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.value)).collect();
    let fit = loglog_fit(&xy);
    let slow_decay = fit.is_some_and(|f| f.slope > -1.0);
    let passes = mono && points.last().unwrap().pass_value() < threshold;
    Ok(LindebergReport {
        distribution: *dist,
        epsilon,
        threshold,
        method,
        points,
        nonincreasing: mono,
        fit,
        slow_decay,
        passes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxToZeroReport {
    pub distribution: EntryDistribution,
    pub epsilon: f64,
    /// `(N, N^2 P(|x| >= eps sqrt(N)))`
    pub points: Vec<(usize, f64)>,
    /// Fit over the upper half of the grid.
    pub tail_fit: Option<LogLogFit>,
    pub passes: bool,
}

/// `sum_ij P(|a_ij| >= eps sqrt(N)) = N^2 P(|x| >= eps sqrt(N))` along a grid.
///
/// Passes iff the value is exactly zero at the largest size, or the log-log
/// slope over the upper half of the grid (at least two points) is negative.
pub fn check_max_to_zero(
    dist: &EntryDistribution,
    ns: &[usize],
    epsilon: f64,
) -> Result<MaxToZeroReport> {
    dist.validate()?;
    if ns.len() < 2 {
        return Err(Error::InvalidArgument("need at least two grid sizes".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("N grid must be increasing".into()));
    }
    let points: Vec<(usize, f64)> = ns
        .iter()
        .map(|&n| {
            let nf = n as f64;
            (n, nf * nf * dist.tail_prob(epsilon * nf.sqrt()))
        })
        .collect();
    let half = (points.len() / 2).min(points.len() - 2);
    let upper: Vec<(f64, f64)> = points[half..]
        .iter()
        .map(|&(n, v)| (n as f64, v))
        .collect();
    let tail_fit = loglog_fit(&upper);
    let passes = points.last().unwrap().1 == 0.0 || tail_fit.is_some_and(|f| f.slope < 0.0);
    Ok(MaxToZeroReport {
        distribution: *dist,
        epsilon,
        points,
        tail_fit,
        passes,
    })
}

// ---------------------------------------------------------------------------
// doubling inequality

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingWitness {
    /// 0-based entry at size `N`.
    pub i: usize,
    pub j: usize,
    pub value: f64,
    /// `min` of the three entries at size `2N`.
    pub doubled_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub n: usize,
    pub holds: bool,
    /// `s^(N)_ij` equals the minimum for every entry.
    pub equality: bool,
    /// Equality wherever `s^(N)_ij > 0`.
    pub equality_on_support: bool,
    /// The weaker `s^(N)_{i,j} <= s^(2N)_{2i,2j}` alone.
    pub diagonal_holds: bool,
    pub violations: usize,
    pub witnesses: Vec<DoublingWitness>,
}

/// `s^(N)_{i,j} <= min{s^(2N)_{2i,2j}, s^(2N)_{2i-1,2j}, s^(2N)_{2i-1,2j-1}}`
/// (1-based) for every entry.
pub fn check_doubling(profile: &ProfileSpec, n: usize) -> Result<DoublingReport> {
    check_doubling_with(profile, n, Exec::default())
}

pub fn check_doubling_with(profile: &ProfileSpec, n: usize, exec: Exec) -> Result<DoublingReport> {
    let small = profile.variance_matrix(n)?;
    let big = profile.variance_matrix(2 * n)?;
    let (r, c) = (small.rows(), small.cols());
    if big.rows() < 2 * r || big.cols() < 2 * c {
        return Err(Error::Shape(format!(
            "profile at 2N is {}x{}, need at least {}x{}",
            big.rows(),
            big.cols(),
            2 * r,
            2 * c
        )));
    }
    // per row: (violations, witnesses, all equal, equal on support, diagonal)
    let rows = exec.map_range(r, |i| {
        let mut bad = Vec::new();
        let mut count = 0usize;
        let mut eq = true;
        let mut eq_support = true;
        let mut diag = true;
        for j in 0..c {
            let s = small.get(i, j);
            diag &= s <= big.get(2 * i + 1, 2 * j + 1) + DOUBLING_SLACK;
            let m = big
                .get(2 * i + 1, 2 * j + 1)
                .min(big.get(2 * i, 2 * j + 1))
                .min(big.get(2 * i, 2 * j));
            if s > m + DOUBLING_SLACK {
                count += 1;
                if bad.len() < MAX_WITNESSES {
                    bad.push(DoublingWitness {
                        i,
                        j,
                        value: s,
                        doubled_min: m,
                    });
                }
            }
            let equal = (s - m).abs() <= DOUBLING_SLACK;
            eq &= equal;
            if s > 0.0 {
                eq_support &= equal;
            }
        }
        (count, bad, eq, eq_support, diag)
    });
    let mut report = DoublingReport {
        n,
        holds: true,
        equality: true,
        equality_on_support: true,
        diagonal_holds: true,
        violations: 0,
        witnesses: Vec::new(),
    };
    for (count, bad, eq, eq_support, diag) in rows {
        report.violations += count;
        report.diagonal_holds &= diag;
        report.equality &= eq;
        report.equality_on_support &= eq_support;
        for w in bad {
            if report.witnesses.len() < MAX_WITNESSES {
                report.witnesses.push(w);
            }
        }
    }
    report.holds = report.violations == 0;
    Ok(report)
}

// ---------------------------------------------------------------------------
// L1 rate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1RateReport {
    /// Demanded exponent `D` in `||W_N - W||_1 <= C N^{-D}`.
    pub d: f64,
    pub points: Vec<(usize, f64)>,
    pub fit: Option<LogLogFit>,
    /// `exp(intercept)` of the fit: the constant of the empirical rate.
    pub fitted_c: Option<f64>,
    /// Every distance is exactly zero, which certifies every `D`.
    pub exact_zero: bool,
    pub passes: bool,
}

/// L1 distance between the induced graphons and the profile's limit kernel
/// along a grid.
pub fn check_l1_rate(profile: &ProfileSpec, ns: &[usize], d: f64) -> Result<L1RateReport> {
    let limit = profile.limit_graphon()?;
    check_l1_rate_against(profile, &limit, ns, d)
}

/// Passes iff all distances vanish or the fitted slope is at most `-d` within
/// two standard errors.
pub fn check_l1_rate_against(
    profile: &ProfileSpec,
    limit: &Graphon,
    ns: &[usize],
    d: f64,
) -> Result<L1RateReport> {
    if ns.is_empty() {
        return Err(Error::InvalidArgument("empty N grid".into()));
    }
    let points = ns
        .iter()
        .map(|&n| {
            let wn = Graphon::Step(profile.graphon_of(n)?);
            Ok((n, l1_distance(&wn, limit)))
        })
        .collect::<Result<Vec<_>>>()?;
    let exact_zero = points.iter().all(|p| p.1 == 0.0);
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (n as f64, v)).collect();
    let fit = if exact_zero { None } else { loglog_fit(&xy) };
    let passes = exact_zero || fit.is_some_and(|f| f.slope - 2.0 * f.slope_se <= -d + 1e-9);
    Ok(L1RateReport {
        d,
        points,
        fit,
        fitted_c: fit.map(|f| f.intercept.exp()),
        exact_zero,
        passes,
    })
}

// ---------------------------------------------------------------------------
// generalized step partitions

/// Partition of `[n]^2` into `cells` sets with a variance level per set.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    n: usize,
    cells: usize,
    assign: Vec<u32>,
    levels: Vec<f64>,
}

impl Partition {
    /// `assign` is row-major; every entry must name a cell below
    /// `levels.len()`.
    pub fn new(n: usize, assign: Vec<usize>, levels: Vec<f64>) -> Result<Self> {
        if assign.len() != n * n {
            return Err(Error::MalformedPartition(format!(
                "assignment covers {} points, grid has {}",
                assign.len(),
                n * n
            )));
        }
        let cells = levels.len();
        if let Some(pos) = assign.iter().position(|&m| m >= cells) {
            return Err(Error::MalformedPartition(format!(
                "point ({}, {}) assigned to cell {} of {}",
                pos / n,
                pos % n,
                assign[pos],
                cells
            )));
        }
        Ok(Partition {
            n,
            cells,
            assign: assign.into_iter().map(|m| m as u32).collect(),
            levels,
        })
    }

    /// Build from explicit (0-based) point lists; overlapping or non-covering
    /// lists are rejected.
    pub fn from_cells(n: usize, cells: &[Vec<(usize, usize)>], levels: Vec<f64>) -> Result<Self> {
        if cells.len() != levels.len() {
            return Err(Error::MalformedPartition(format!(
                "{} cells but {} levels",
                cells.len(),
                levels.len()
            )));
        }
        let mut assign = vec![usize::MAX; n * n];
        for (m, pts) in cells.iter().enumerate() {
            for &(i, j) in pts {
                if i >= n || j >= n {
                    return Err(Error::MalformedPartition(format!(
                        "point ({i}, {j}) outside the {n}x{n} grid"
                    )));
                }
                let slot = &mut assign[i * n + j];
                if *slot != usize::MAX {
                    return Err(Error::MalformedPartition(format!(
                        "point ({i}, {j}) in cells {} and {m}",
                        *slot
                    )));
                }
                *slot = m;
            }
        }
        if let Some(pos) = assign.iter().position(|&m| m == usize::MAX) {
            return Err(Error::MalformedPartition(format!(
                "point ({}, {}) not covered",
                pos / n,
                pos % n
            )));
        }
        Self::new(n, assign, levels)
    }

    pub fn from_fn(n: usize, levels: Vec<f64>, f: impl Fn(usize, usize) -> usize) -> Result<Self> {
        let assign = (0..n * n).map(|p| f(p / n, p % n)).collect();
        Self::new(n, assign, levels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `d_N`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        self.assign[i * self.n + j] as usize
    }

    /// Variance matrix `s_ij = level of the cell containing (i, j)`.
    pub fn level_matrix(&self) -> Result<VarianceMatrix> {
        let rows: Vec<Vec<f64>> = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.levels[self.cell(i, j)]).collect())
            .collect();
        VarianceMatrix::from_rows(&rows)
    }

    fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.cells];
        for &m in &self.assign {
            s[m as usize] += 1;
        }
        s
    }
}

/// Partitions for a list of grid sizes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartitionSpec {
    pub partitions: BTreeMap<usize, Partition>,
}

impl PartitionSpec {
    pub fn from_family(family: &PartitionFamily, ns: &[usize]) -> Result<Self> {
        let mut partitions = BTreeMap::new();
        for &n in ns {
            partitions.insert(n, family.build(n)?);
        }
        Ok(PartitionSpec { partitions })
    }

    pub fn get(&self, n: usize) -> Option<&Partition> {
        self.partitions.get(&n)
    }
}

/// Catalog of partition constructions, parametrized by the grid size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionFamily {
    /// `{|i - j| <= pN}` at level 1, `{i - j > pN}` and `{j - i > pN}` at 0.
    Band { p: f64 },
    /// Symmetrized square upper-triangular profile on `[2M]^2` (the grid size
    /// must be even): `{|i - j| <= M - 1}` at level 0, `{i >= M + j}` and
    /// `{j >= M + i}` at level 1.
    TriangularSym,
    SingleCell,
    /// Two cells alternating in `block x block` squares.
    Checkerboard { block: usize },
    /// One cell per block pair of a step profile, level `sigma_pq^2`.
    StepBlocks {
        breakpoints: Vec<f64>,
        sigma: Vec<Vec<f64>>,
    },
}

impl PartitionFamily {
    pub fn build(&self, n: usize) -> Result<Partition> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be positive".into()));
        }
        match self {
            PartitionFamily::Band { p } => {
                let w = p * n as f64;
                Partition::from_fn(n, vec![1.0, 0.0, 0.0], |i, j| {
                    let (i, j) = (i as f64, j as f64);
                    if (i - j).abs() <= w {
                        0
                    } else if i - j > w {
                        1
                    } else {
                        2
                    }
                })
            }
            PartitionFamily::TriangularSym => {
                if !n.is_multiple_of(2) {
                    return Err(Error::InvalidArgument(format!(
                        "triangular partition needs an even grid, got {n}"
                    )));
                }
                let m = n / 2;
                Partition::from_fn(n, vec![0.0, 1.0, 1.0], |i, j| {
                    if i >= m + j {
                        1
                    } else if j >= m + i {
                        2
                    } else {
                        0
                    }
                })
            }
            PartitionFamily::SingleCell => Partition::new(n, vec![0; n * n], vec![1.0]),
            PartitionFamily::Checkerboard { block } => {
                let b = (*block).max(1);
                Partition::from_fn(n, vec![1.0, 0.5], |i, j| (i / b + j / b) % 2)
            }
            PartitionFamily::StepBlocks { breakpoints, sigma } => {
                let m = breakpoints.len().saturating_sub(1);
                if m == 0 || sigma.len() != m || sigma.iter().any(|r| r.len() != m) {
                    return Err(Error::InvalidProfile(format!(
                        "sigma grid must be {m}x{m}"
                    )));
                }
                let map = interval_map(breakpoints, n);
                let levels = sigma.iter().flatten().map(|s| s * s).collect();
                Partition::from_fn(n, levels, |i, j| map[i] * m + map[j])
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionCheck {
    Reflection,
    ReflectionLevel,
    Doubling,
    DoublingLevel,
    AxialConvexity,
    Crossings,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionWitness {
    pub check: PartitionCheck,
    pub cell: usize,
    /// 0-based point (at size `2N` for doubling witnesses).
    pub i: usize,
    pub j: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub n: usize,
    pub cells: usize,
    /// (a): the transpose of every cell is a cell with the same level.
    pub reflection: bool,
    /// (b): `2B_m` lies inside a single cell at `2N`.
    pub doubling: bool,
    /// The receiving cell's level is at least `s_m`.
    pub doubling_levels: bool,
    pub axially_convex: bool,
    /// Most maximal runs of boundary points of one cell on one line `x = i`.
    pub max_crossings: usize,
    /// (c): `max_crossings <= 2`.
    pub crossings: bool,
    /// `d_N / N` strictly decreasing along the sizes of the partition family.
    pub ratio_decreasing: bool,
    pub passes: bool,
    pub witnesses: Vec<PartitionWitness>,
}

struct Witnesses(Vec<PartitionWitness>);

impl Witnesses {
    fn push(&mut self, check: PartitionCheck, cell: usize, i: usize, j: usize) {
        if self.0.len() < MAX_WITNESSES {
            self.0.push(PartitionWitness { check, cell, i, j });
        }
    }
}

/// Checks the generalized-step conditions for the partition at `n`, using the
/// partition at `2n` for doubling.
pub fn validate_partition(ps: &PartitionSpec, n: usize) -> Result<PartitionReport> {
    validate_partition_with(ps, n, Exec::default())
}

pub fn validate_partition_with(ps: &PartitionSpec, n: usize, exec: Exec) -> Result<PartitionReport> {
    let part = ps
        .get(n)
        .ok_or_else(|| Error::InvalidArgument(format!("no partition for N = {n}")))?;
    let twice = ps
        .get(2 * n)
        .ok_or_else(|| Error::InvalidArgument(format!("no partition for 2N = {}", 2 * n)))?;
    let mut wit = Witnesses(Vec::new());
    let d = part.cells();
    let sizes = part.sizes();

    // (a) reflection: cell m maps onto the cell containing its transpose
    let mut image = vec![usize::MAX; d];
    let mut reflection = true;
    let mut reflection_level = true;
    for i in 0..n {
        for j in 0..n {
            let m = part.cell(i, j);
            let t = part.cell(j, i);
            if image[m] == usize::MAX {
                image[m] = t;
            } else if image[m] != t {
                reflection = false;
                wit.push(PartitionCheck::Reflection, m, i, j);
            }
        }
    }
    for m in 0..d {
        let t = image[m];
        if t == usize::MAX {
            continue;
        }
        if sizes[m] != sizes[t] {
            reflection = false;
            wit.push(PartitionCheck::Reflection, m, 0, 0);
        }
        if part.levels()[m] != part.levels()[t] {
            reflection_level = false;
            wit.push(PartitionCheck::ReflectionLevel, m, 0, 0);
        }
    }

    // (b) doubling: 1-based (i, j) -> (2i, 2j), i.e. 0-based i -> 2i + 1
    let mut target = vec![usize::MAX; d];
    let mut doubling = true;
    let mut doubling_levels = true;
    for i in 0..n {
        for j in 0..n {
            let m = part.cell(i, j);
            let f = twice.cell(2 * i + 1, 2 * j + 1);
            if target[m] == usize::MAX {
                target[m] = f;
                if twice.levels()[f] + DOUBLING_SLACK < part.levels()[m] {
                    doubling_levels = false;
                    wit.push(PartitionCheck::DoublingLevel, m, 2 * i + 1, 2 * j + 1);
                }
            } else if target[m] != f {
                doubling = false;
                wit.push(PartitionCheck::Doubling, m, 2 * i + 1, 2 * j + 1);
            }
        }
    }

    // axial convexity: along every row and every column each cell occupies
    // one contiguous run
    let line_runs = |line: &dyn Fn(usize) -> usize| -> Vec<(usize, usize)> {
        // (cell, start) of each maximal run
        let mut runs = Vec::new();
        let mut prev = usize::MAX;
        for r in 0..n {
            let m = line(r);
            if m != prev {
                runs.push((m, r));
                prev = m;
            }
        }
        runs
    };
    let convex_lines = exec.map_range(2 * n, |l| {
        let runs = if l < n {
            line_runs(&|r| part.cell(l, r))
        } else {
            line_runs(&|r| part.cell(r, l - n))
        };
        let mut seen = vec![false; d];
        let mut bad = None;
        for &(m, start) in &runs {
            if seen[m] && bad.is_none() {
                bad = Some(if l < n { (m, l, start) } else { (m, start, l - n) });
            }
            seen[m] = true;
        }
        bad
    });
    let mut axially_convex = true;
    for (m, i, j) in convex_lines.into_iter().flatten() {
        axially_convex = false;
        wit.push(PartitionCheck::AxialConvexity, m, i, j);
    }

    // (c) along each line x = i, count maximal runs of boundary points of
    // each cell
    let interior = interior_points(part);
    let crossing_rows = exec.map_range(n, |i| {
        let mut counts = vec![0usize; d];
        let mut prev: Option<usize> = None;
        for j in 0..n {
            let boundary = !interior.mask[i * n + j];
            let m = part.cell(i, j);
            let here = boundary.then_some(m);
            if let Some(m) = here {
                if prev != Some(m) {
                    counts[m] += 1;
                }
            }
            prev = here;
        }
        let (worst_cell, worst) = counts
            .iter()
            .copied()
            .enumerate()
            .max_by_key(|&(_, c)| c)
            .unwrap_or((0, 0));
        (worst, worst_cell)
    });
    let mut max_crossings = 0;
    for (i, &(c, m)) in crossing_rows.iter().enumerate() {
        max_crossings = max_crossings.max(c);
        if c > 2 {
            wit.push(PartitionCheck::Crossings, m, i, 0);
        }
    }
    let crossings = max_crossings <= 2;

    let ratios: Vec<f64> = ps
        .partitions
        .iter()
        .map(|(&k, p)| p.cells() as f64 / k as f64)
        .collect();
    let ratio_decreasing = ratios.windows(2).all(|w| w[1] < w[0]);

    let passes = reflection
        && reflection_level
        && doubling
        && doubling_levels
        && axially_convex
        && crossings
        && ratio_decreasing;
    Ok(PartitionReport {
        n,
        cells: d,
        reflection: reflection && reflection_level,
        doubling,
        doubling_levels,
        axially_convex,
        max_crossings,
        crossings,
        ratio_decreasing,
        passes,
        witnesses: wit.0,
    })
}

/// Points whose full 3x3 neighbourhood lies in their own cell.
#[derive(Clone, Debug, PartialEq)]
pub struct InteriorPoints {
    pub n: usize,
    /// Row-major; `true` for interior points.
    pub mask: Vec<bool>,
    pub complement_count: usize,
    /// `6 d_N N`.
    pub bound: usize,
}

impl InteriorPoints {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    /// Row-major mask of the non-interior points.
    pub fn complement(&self) -> Vec<bool> {
        self.mask.iter().map(|b| !b).collect()
    }

    pub fn within_bound(&self) -> bool {
        self.complement_count <= self.bound
    }
}

/// The index set of interior points and its complement size.
pub fn interior_points(part: &Partition) -> InteriorPoints {
    let n = part.n();
    let mut mask = vec![false; n * n];
    if n >= 3 {
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let m = part.cell(i, j);
                mask[i * n + j] = (i - 1..=i + 1)
                    .all(|a| (j - 1..=j + 1).all(|b| part.cell(a, b) == m));
            }
        }
    }
    let complement_count = mask.iter().filter(|b| !**b).count();
    InteriorPoints {
        n,
        mask,
        complement_count,
        bound: 6 * part.cells() * n,
    }
}
