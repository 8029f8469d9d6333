//! Tree moments of a graphon, labeling sums, edge estimates, and the exact
//! good/bad split of `E tr(A^{2k})` at toy scale.
//!
//! Two independent routes give `m_{2k} = sum_T t(T, W)`:
//! the per-tree DP ([`hom_density`], [`m_even_by_trees`]) and the rooted-tree
//! recursion `F_k = sum_{j<k} W(w . F_j) . F_{k-1-j}` ([`moment_sequence`]),
//! which costs `O(k d^2 + k^2 d)` for a `d`-cell grid instead of `C_k` DPs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{pairwise_sum, Exec};
use crate::graphon::{Graphon, StepGraphon};
use crate::profiles::{ProfileSpec, VarianceMatrix};
use crate::sampler::{sample_from_variances, EntryDistribution};
use crate::trees::{cycle_to_graph, enumerate_trees_capped, for_each_tuple, OrderedTree, DEFAULT_TREE_CAP};
use crate::SCHEMA_VERSION;

/// Guard for [`labeling_sum`].
pub const LABELING_MAX_N: usize = 8;
pub const LABELING_MAX_K: u32 = 4;
/// Guard for [`bad_cycle_sum`].
pub const CYCLES_MAX_N: usize = 6;
pub const CYCLES_MAX_K: u32 = 3;

/// `y = W (w . x)` on cell space.
fn apply(grid: &StepGraphon, weights: &[f64], x: &[f64], out: &mut [f64]) {
    let d = grid.cells();
    let wx: Vec<f64> = weights.iter().zip(x).map(|(w, v)| w * v).collect();
    let vals = grid.values();
    for (a, o) in out.iter_mut().enumerate() {
        let row = &vals[a * d..(a + 1) * d];
        *o = row.iter().zip(&wx).map(|(r, v)| r * v).sum();
    }
}

/// `t(T, W)` for a step grid by the bottom-up DP
/// `f_v = prod_children W(w . f_c)`; vertices are in preorder, so every child
/// is finished before its parent when scanning backwards.
pub fn hom_density_grid(tree: &OrderedTree, grid: &StepGraphon) -> f64 {
    let d = grid.cells();
    let w = grid.widths();
    let k = tree.edges();
    let parents = tree.parents();
    let mut f = vec![vec![1.0; d]; k + 1];
    let mut tmp = vec![0.0; d];
    for v in (1..=k).rev() {
        apply(grid, &w, &f[v], &mut tmp);
        let p = parents[v];
        for (fp, t) in f[p].iter_mut().zip(&tmp) {
            *fp *= t;
        }
    }
    w.iter().zip(&f[0]).map(|(a, b)| a * b).sum()
}

/// `t(T, W)`; callable kernels are evaluated on their quadrature grid.
pub fn hom_density(tree: &OrderedTree, g: &Graphon) -> f64 {
    hom_density_grid(tree, &g.quadrature_grid())
}

/// `[m_0, m_2, ..., m_{2 k_max}]` of a step grid via the rooted recursion.
pub fn moment_sequence_grid(grid: &StepGraphon, k_max: usize) -> Vec<f64> {
    let d = grid.cells();
    let w = grid.widths();
    // f[j]: rooted densities of all trees with j edges, as a function of the root cell
    let mut f: Vec<Vec<f64>> = vec![vec![1.0; d]];
    let mut g: Vec<Vec<f64>> = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut gj = vec![0.0; d];
        apply(grid, &w, &f[k - 1], &mut gj);
        g.push(gj);
        let mut fk = vec![0.0; d];
        for j in 0..k {
            for (a, out) in fk.iter_mut().enumerate() {
                *out += g[j][a] * f[k - 1 - j][a];
            }
        }
        f.push(fk);
    }
    f.iter()
        .map(|fk| w.iter().zip(fk).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn moment_sequence(g: &Graphon, k_max: usize) -> Vec<f64> {
    moment_sequence_grid(&g.quadrature_grid(), k_max)
}

/// `m_{2k} = sum_{T in C_k} t(T, W)`.
pub fn m_even(k: u32, g: &Graphon) -> Result<f64> {
    if k > DEFAULT_TREE_CAP {
        return Err(Error::TreeCapExceeded {
            k,
            cap: DEFAULT_TREE_CAP,
        });
    }
    Ok(moment_sequence(g, k as usize)[k as usize])
}

/// `m_{2k}` summed tree by tree. Trees are processed in parallel batches and
/// reduced pairwise in enumeration order, so the result does not depend on
/// the thread count.
pub fn m_even_by_trees(k: u32, g: &Graphon, cap: u32, exec: Exec) -> Result<f64> {
    let grid = g.quadrature_grid();
    let mut trees = enumerate_trees_capped(k, cap)?;
    let mut values = Vec::new();
    const BATCH: usize = 4096;
    loop {
        let batch: Vec<OrderedTree> = trees.by_ref().take(BATCH).collect();
        if batch.is_empty() {
            break;
        }
        values.extend(exec.map(&batch, |t| hom_density_grid(t, &grid)));
    }
    Ok(pairwise_sum(&values))
}

/// `sum_T sum_labelings prod_{edges} S[i, j]` over labelings of the `k + 1`
/// tree vertices by `[N]`; injective labelings give `M_N(k)`.
pub fn labeling_sum(k: u32, s: &VarianceMatrix, injective: bool) -> Result<f64> {
    let n = s.rows();
    if n > LABELING_MAX_N || k > LABELING_MAX_K {
        return Err(Error::GuardExceeded(format!(
            "labeling sums need N <= {LABELING_MAX_N} and k <= {LABELING_MAX_K}, got N = {n}, k = {k}"
        )));
    }
    s.ensure_symmetric(0.0)?;
    let mut total = 0.0;
    for tree in enumerate_trees_capped(k, LABELING_MAX_K)? {
        let mut labels = vec![0usize; tree.vertices()];
        for root in 0..n {
            labels[0] = root;
            total += label_rec(&tree, s, injective, &mut labels, 1);
        }
    }
    Ok(total)
}

fn label_rec(
    tree: &OrderedTree,
    s: &VarianceMatrix,
    injective: bool,
    labels: &mut Vec<usize>,
    v: usize,
) -> f64 {
    if v == tree.vertices() {
        return 1.0;
    }
    let p = labels[tree.parents()[v]];
    let mut acc = 0.0;
    for x in 0..s.rows() {
        if injective && labels[..v].contains(&x) {
            continue;
        }
        let weight = s.get(p, x);
        if weight == 0.0 {
            continue;
        }
        labels[v] = x;
        acc += weight * label_rec(tree, s, injective, labels, v + 1);
    }
    acc
}

/// `M_N(k)` by exhaustive injective labeling.
pub fn m_exact(k: u32, s: &VarianceMatrix) -> Result<f64> {
    labeling_sum(k, s, true)
}

/// `Xi_N(k) = sum_T t(T, W_N)`, the repetition-allowed relaxation of
/// `M_N(k) / N^{k+1}`.
pub fn xi_bound(k: u32, n: usize, profile: &ProfileSpec) -> Result<f64> {
    Ok(xi_sequence(k, n, profile)?[k as usize])
}

pub fn xi_sequence(k_max: u32, n: usize, profile: &ProfileSpec) -> Result<Vec<f64>> {
    let grid = profile.graphon_of(n)?;
    Ok(moment_sequence_grid(&grid, k_max as usize))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMethod {
    Root,
    Ratio,
    #[default]
    Richardson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeEstimate {
    pub method: EdgeMethod,
    pub k: usize,
    /// Headline estimate for the requested method.
    pub value: f64,
    /// `m_{2K}^{1/(2K)}`, a lower bound on the edge.
    pub root: f64,
    pub ratio: f64,
    pub richardson: f64,
    /// `2 sqrt(V_0)` with `V_0 = sup W`.
    pub upper_bracket: f64,
    /// Set when the moments vanish (zero profile).
    pub degenerate: bool,
    /// Set when the extrapolated value had to be clamped into
    /// `[root, upper_bracket]`.
    pub clamped: bool,
}

/// Quadratic-in-`1/K` extrapolation of `sqrt(m_{2K} / m_{2K-2})` to `K = inf`
/// from the nodes `K - 4, K - 2, K` (fewer nodes for small `K`).
pub fn richardson_ratio(m: &[f64], k: usize) -> f64 {
    let ratio = |j: usize| (m[j] / m[j - 1]).sqrt();
    let mut nodes: Vec<usize> = [k.saturating_sub(4), k.saturating_sub(2), k]
        .into_iter()
        .filter(|&j| j >= 1)
        .collect();
    nodes.dedup();
    if nodes.len() < 2 {
        return ratio(k);
    }
    let h: Vec<f64> = nodes.iter().map(|&j| 1.0 / j as f64).collect();
    nodes
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let weight: f64 = (0..h.len())
                .filter(|&l| l != i)
                .map(|l| h[l] / (h[l] - h[i]))
                .product();
            weight * ratio(j)
        })
        .sum()
}

/// Edge estimates from a moment sequence `m[k] = m_{2k}` at order `K`.
pub fn edge_from_moments(m: &[f64], k: usize, method: EdgeMethod, sup: f64) -> Result<EdgeEstimate> {
    if k == 0 || k >= m.len() {
        return Err(Error::MissingMoments {
            needed: k + 1,
            available: m.len(),
        });
    }
    if k < 2 && method != EdgeMethod::Root {
        return Err(Error::InvalidArgument(
            "ratio and richardson estimates need K >= 2".into(),
        ));
    }
    let upper_bracket = 2.0 * sup.max(0.0).sqrt();
    if m[1..=k].iter().any(|&v| v <= 0.0) {
        return Ok(EdgeEstimate {
            method,
            k,
            value: 0.0,
            root: 0.0,
            ratio: 0.0,
            richardson: 0.0,
            upper_bracket,
            degenerate: true,
            clamped: false,
        });
    }
    let root = m[k].powf(1.0 / (2 * k) as f64);
    let ratio = (m[k] / m[k - 1]).sqrt();
    let raw = richardson_ratio(m, k);
    let richardson = raw.clamp(root, upper_bracket.max(root));
    let value = match method {
        EdgeMethod::Root => root,
        EdgeMethod::Ratio => ratio,
        EdgeMethod::Richardson => richardson,
    };
    Ok(EdgeEstimate {
        method,
        k,
        value,
        root,
        ratio,
        richardson,
        upper_bracket,
        degenerate: false,
        clamped: richardson != raw,
    })
}

pub fn edge_estimate(g: &Graphon, k: usize, method: EdgeMethod) -> Result<EdgeEstimate> {
    let m = moment_sequence(g, k);
    edge_from_moments(&m, k, method, g.sup())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentMethodInfo {
    /// `"recursion"` or `"trees"`.
    pub route: String,
    pub resolution: Option<usize>,
    pub check_resolution: Option<usize>,
    /// `|m_{2K}(res) - m_{2K}(res/2)| / m_{2K}(res)`.
    pub resolution_gap: Option<f64>,
    pub low_confidence: bool,
    pub tree_cap: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub schema_version: u32,
    pub k_max: usize,
    /// `m_even[k] = m_{2k}`, `k = 0..=k_max`.
    pub m_even: Vec<f64>,
    /// `m_{2k}^{1/(2k)}` for `k = 1..=k_max`.
    pub edge_root: Vec<f64>,
    /// `sqrt(m_{2k} / m_{2k-2})` for `k = 1..=k_max`.
    pub edge_ratio: Vec<f64>,
    pub edge: EdgeEstimate,
    pub method: MomentMethodInfo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MomentRoute {
    #[default]
    Recursion,
    Trees,
}

#[derive(Clone, Copy, Debug)]
pub struct MomentOptions {
    pub k_max: usize,
    pub method: EdgeMethod,
    pub route: MomentRoute,
    pub tree_cap: u32,
    pub exec: Exec,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            k_max: 12,
            method: EdgeMethod::Richardson,
            route: MomentRoute::Recursion,
            tree_cap: DEFAULT_TREE_CAP,
            exec: Exec::default(),
        }
    }
}

/// Relative resolution gap above which a report is low-confidence.
pub const RESOLUTION_GAP_TOL: f64 = 1e-3;

fn moments_by_route(g: &Graphon, opts: &MomentOptions) -> Result<Vec<f64>> {
    match opts.route {
        MomentRoute::Recursion => {
            if opts.k_max as u32 > opts.tree_cap {
                return Err(Error::TreeCapExceeded {
                    k: opts.k_max as u32,
                    cap: opts.tree_cap,
                });
            }
            Ok(moment_sequence(g, opts.k_max))
        }
        MomentRoute::Trees => (0..=opts.k_max as u32)
            .map(|k| m_even_by_trees(k, g, opts.tree_cap, opts.exec))
            .collect(),
    }
}

pub fn moment_report(g: &Graphon, opts: &MomentOptions) -> Result<MomentReport> {
    let k = opts.k_max;
    let m = moments_by_route(g, opts)?;
    let edge = edge_from_moments(&m, k, opts.method, g.sup())?;
    let edge_root = (1..=k)
        .map(|j| m[j].max(0.0).powf(1.0 / (2 * j) as f64))
        .collect();
    let edge_ratio = (1..=k)
        .map(|j| if m[j - 1] > 0.0 { (m[j] / m[j - 1]).sqrt() } else { 0.0 })
        .collect();
    let (check_resolution, resolution_gap) = match g.resolution() {
        Some(res) if res >= 2 => {
            let coarse = moment_sequence(&g.with_resolution(res / 2), k);
            let gap = if m[k] > 0.0 {
                (m[k] - coarse[k]).abs() / m[k]
            } else {
                0.0
            };
            (Some(res / 2), Some(gap))
        }
        _ => (None, None),
    };
    Ok(MomentReport {
        schema_version: SCHEMA_VERSION,
        k_max: k,
        m_even: m,
        edge_root,
        edge_ratio,
        edge,
        method: MomentMethodInfo {
            route: match opts.route {
                MomentRoute::Recursion => "recursion".into(),
                MomentRoute::Trees => "trees".into(),
            },
            resolution: g.resolution(),
            check_resolution,
            resolution_gap,
            low_confidence: resolution_gap.is_some_and(|gap| gap >= RESOLUTION_GAP_TOL),
            tree_cap: opts.tree_cap,
        },
    })
}

impl MomentReport {
    /// Rows `k,m_2k,edge_root,edge_ratio`; the `k = 0` row leaves the edge
    /// columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,m_2k,edge_root,edge_ratio\n");
        for (k, m) in self.m_even.iter().enumerate() {
            if k == 0 {
                out.push_str(&format!("0,{m:e},,\n"));
            } else {
                out.push_str(&format!(
                    "{k},{m:e},{:e},{:e}\n",
                    self.edge_root[k - 1],
                    self.edge_ratio[k - 1]
                ));
            }
        }
        out
    }
}

/// Exact split `E tr(A^{2k}) = M_N(k) + B_N(k)` for a toy configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDecomposition {
    pub n: usize,
    pub k: u32,
    /// Injective labeling sum.
    pub m_exact: f64,
    /// Sum over good cycles; must agree with `m_exact`.
    pub good_cycle_sum: f64,
    pub b_exact: f64,
    pub trace_expectation: f64,
}

/// Enumerates every cycle in `[N]^{2k}`. `raw_moments[p] = E X^p` of the
/// standardized entry, `p = 0..=2k`; entry `(i, j)` is `sqrt(s_ij) X`.
pub fn bad_cycle_sum(k: u32, s: &VarianceMatrix, raw_moments: &[f64]) -> Result<TraceDecomposition> {
    let n = s.rows();
    if n > CYCLES_MAX_N || k > CYCLES_MAX_K || k == 0 {
        return Err(Error::GuardExceeded(format!(
            "cycle enumeration needs N <= {CYCLES_MAX_N} and 1 <= k <= {CYCLES_MAX_K}, got N = {n}, k = {k}"
        )));
    }
    let len = 2 * k as usize;
    if raw_moments.len() <= len {
        return Err(Error::MissingMoments {
            needed: len + 1,
            available: raw_moments.len(),
        });
    }
    s.ensure_symmetric(0.0)?;
    let mut good = 0.0;
    let mut bad = 0.0;
    let mut failure = None;
    for_each_tuple(n, len, |walk| {
        let graph = match cycle_to_graph(walk) {
            Ok(g) => g,
            Err(e) => {
                failure.get_or_insert(e);
                return;
            }
        };
        let mut term = 1.0;
        for (&(u, v), &a) in graph.edges.iter().zip(&graph.multiplicities) {
            term *= s.get(u, v).sqrt().powi(a as i32) * raw_moments[a];
            if term == 0.0 {
                break;
            }
        }
        if graph.is_good() {
            good += term;
        } else {
            bad += term;
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let m = m_exact(k, s)?;
    Ok(TraceDecomposition {
        n,
        k,
        m_exact: m,
        good_cycle_sum: good,
        b_exact: bad,
        trace_expectation: good + bad,
    })
}

/// Sample mean of `tr(A^{2k})` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub k: u32,
    pub mean: f64,
    pub std_error: f64,
}

impl TraceEstimate {
    /// `|mean - target|` in standard errors. The error is floored at the
    /// rounding level of the target, since `tr(A^2)` is deterministic for
    /// entries with `|x| = 1`.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        let se = self.std_error.max(1e-12 * target.abs().max(1.0));
        d / se
    }
}

/// Monte Carlo estimates of `E tr(A^{2k})`, `k = 1..=k_max`, from `samples`
/// matrices with seeds `seed, seed + 1, ...`. Every `k` uses the same draws.
pub fn trace_moments_monte_carlo(
    s: &VarianceMatrix,
    dist: &EntryDistribution,
    k_max: u32,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<TraceEstimate>> {
    if samples < 2 || k_max == 0 {
        return Err(Error::InvalidArgument(
            "need k_max >= 1 and at least two samples".into(),
        ));
    }
    let km = k_max as usize;
    const CHUNK: usize = 1024;
    let chunks = samples.div_ceil(CHUNK);
    // per chunk: (sum, sum of squares) for every k
    let partial: Vec<Result<Vec<(f64, f64)>>> = exec.map_range(chunks, |c| {
        let mut acc = vec![(0.0, 0.0); km];
        for t in c * CHUNK..((c + 1) * CHUNK).min(samples) {
            let a = sample_from_variances(s, dist, seed.wrapping_add(t as u64), Exec::Sequential)?;
            let a2 = &a * &a;
            let mut p = a2.clone();
            for slot in acc.iter_mut() {
                let tr = p.trace();
                slot.0 += tr;
                slot.1 += tr * tr;
                p = &p * &a2;
            }
        }
        Ok(acc)
    });
    let mut sums = vec![(0.0, 0.0); km];
    for part in partial {
        for (tot, x) in sums.iter_mut().zip(part?) {
            tot.0 += x.0;
            tot.1 += x.1;
        }
    }
    let nf = samples as f64;
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (sum, sq))| {
            let mean = sum / nf;
            let var = ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
            TraceEstimate {
                k: i as u32 + 1,
                mean,
                std_error: (var / nf).sqrt(),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadCycleBoundReport {
    pub n: usize,
    pub k: u32,
    pub b_exact: f64,
    pub bound: f64,
    /// `bound - |B_N(k)|`
    pub slack: f64,
    pub holds: bool,
    /// Whether the entries really are bounded by `C N^{1/2 - eps}`.
    pub precondition_met: bool,
}

/// `sum_{s=1}^k (4k^5)^{2k-2s} (C N^{1/2-eps})^{2k-2s}
///  sum_{t=1}^{min(s+1,k)} (4k^4)^{4(s+1-t)} M_N(t-1)`.
pub fn bad_cycle_bound_rhs(k: u32, n: usize, m: &[f64], c: f64, epsilon: f64) -> f64 {
    let kf = k as f64;
    let scale = c * (n as f64).powf(0.5 - epsilon);
    let mut total = 0.0;
    for s in 1..=k {
        let e = (2 * k - 2 * s) as i32;
        let outer = (4.0 * kf.powi(5)).powi(e) * scale.powi(e);
        let inner: f64 = (1..=(s + 1).min(k))
            .map(|t| (4.0 * kf.powi(4)).powi(4 * (s + 1 - t) as i32) * m[(t - 1) as usize])
            .sum();
        total += outer * inner;
    }
    total
}

/// `entry_sup` bounds `|X|` for the standardized entry (infinite if unbounded).
pub fn check_bad_cycle_bound(
    k: u32,
    s: &VarianceMatrix,
    raw_moments: &[f64],
    entry_sup: f64,
    c: f64,
    epsilon: f64,
) -> Result<BadCycleBoundReport> {
    let n = s.rows();
    let dec = bad_cycle_sum(k, s, raw_moments)?;
    let m: Result<Vec<f64>> = (0..k).map(|t| m_exact(t, s)).collect();
    let bound = bad_cycle_bound_rhs(k, n, &m?, c, epsilon);
    let max_sigma = s.as_matrix().iter().copied().fold(0.0, f64::max).sqrt();
    let precondition_met = max_sigma * entry_sup <= c * (n as f64).powf(0.5 - epsilon);
    Ok(BadCycleBoundReport {
        n,
        k,
        b_exact: dec.b_exact,
        bound,
        slack: bound - dec.b_exact.abs(),
        holds: dec.b_exact.abs() <= bound,
        precondition_met,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRPoint {
    pub n: usize,
    pub k: u32,
    /// `Xi_N(k) / R^{2k}`, the constant this point demands.
    pub c2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRReport {
    pub r: f64,
    pub c1: f64,
    /// Smallest `C_2` witnessing `N^{k+1} Xi_N(k) <= C_2 N^{k+1} R^{2k}` on the
    /// grid, including `k = 0` where `M_N(0) = N` forces `C_2 >= 1`.
    pub min_c2: f64,
    pub c2_cap: f64,
    pub holds: bool,
    pub points: Vec<SigmaRPoint>,
    /// Worst point when `min_c2 > c2_cap`.
    pub violation: Option<SigmaRPoint>,
}

/// Default ceiling on the witnessing constant for [`check_sigma_r`].
pub const SIGMA_R_C2_CAP: f64 = 2.0;

/// Checks the growth condition on the `(N, k)` grid with
/// `1 <= k <= min(C1 ln N, tree cap)`, using `Xi_N(k)` as the surrogate for
/// `M_N(k) / N^{k+1}`.
pub fn check_sigma_r(profile: &ProfileSpec, r: f64, c1: f64, ns: &[usize], c2_cap: f64) -> Result<SigmaRReport> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("R must be positive".into()));
    }
    let mut points = Vec::new();
    for &n in ns {
        let k_max = ((c1 * (n as f64).ln()).floor().max(1.0) as u32).min(DEFAULT_TREE_CAP);
        let xi = xi_sequence(k_max, n, profile)?;
        for k in 1..=k_max {
            points.push(SigmaRPoint {
                n,
                k,
                c2: xi[k as usize] / r.powi(2 * k as i32),
            });
        }
    }
    let worst = points
        .iter()
        .cloned()
        .max_by(|a, b| a.c2.total_cmp(&b.c2));
    let min_c2 = worst.as_ref().map_or(1.0, |w| w.c2.max(1.0));
    let holds = min_c2 <= c2_cap;
    Ok(SigmaRReport {
        r,
        c1,
        min_c2,
        c2_cap,
        holds,
        points,
        violation: if holds { None } else { worst },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::{GraphonKernel, DEFAULT_RESOLUTION};
    use crate::trees::{catalan, enumerate_trees};

    fn example_grid() -> Graphon {
        Graphon::Step(StepGraphon::uniform(2, vec![1.0, 0.5, 0.5, 0.25]).unwrap())
    }

    #[test]
    fn single_edge_density_is_mean() {
        let t = OrderedTree::from_dyck_str("10").unwrap();
        assert!((hom_density(&t, &example_grid()) - 0.5625).abs() < 1e-15);
        assert!((m_even(1, &example_grid()).unwrap() - 0.5625).abs() < 1e-15);
        assert_eq!(m_even(0, &example_grid()).unwrap(), 1.0);
    }

    #[test]
    fn constant_graphon_gives_catalan() {
        let one = Graphon::constant(1.0);
        for k in 0..=10u32 {
            let c = catalan(k).unwrap() as f64;
            assert_eq!(m_even(k, &one).unwrap(), c);
            assert_eq!(m_even_by_trees(k, &one, DEFAULT_TREE_CAP, Exec::default()).unwrap(), c);
        }
        for t in enumerate_trees(4).unwrap() {
            assert_eq!(hom_density(&t, &one), 1.0);
        }
    }

    #[test]
    fn path_density_in_band_against_riemann_sums() {
        // 3-vertex path in 1_{|x-y| <= p}: closed form int L(y)^2 dy with
        // L(y) = |[y-p, y+p] cap [0,1]|, p <= 1/2:
        // 2 int_0^p (y+p)^2 dy + (1-2p) (2p)^2
        let p: f64 = 0.3;
        let exact = 2.0 * ((2.0 * p).powi(3) - p.powi(3)) / 3.0 + (1.0 - 2.0 * p) * 4.0 * p * p;
        let path = OrderedTree::from_dyck_str("1100").unwrap();
        let g = Graphon::callable(GraphonKernel::Band { p }, DEFAULT_RESOLUTION);
        let v = hom_density(&path, &g);
        assert!((v - exact).abs() < 1e-4, "{v} vs {exact}");
        // raw midpoint Riemann sums at two resolutions bracket toward the same value
        let riemann = |r: usize| {
            let h = 1.0 / r as f64;
            let ind = |a: usize, b: usize| ((a as f64 - b as f64).abs() * h <= p) as u8 as f64;
            (0..r)
                .map(|y| {
                    let l: f64 = (0..r).map(|x| ind(x, y)).sum::<f64>() * h;
                    l * l
                })
                .sum::<f64>()
                * h
        };
        let (r1, r2) = (riemann(400), riemann(800));
        assert!((r2 - exact).abs() <= (r1 - exact).abs() + 1e-12);
        assert!((r2 - exact).abs() < 5e-3);
    }

    #[test]
    fn recursion_matches_tree_sum() {
        let g = Graphon::Step(
            StepGraphon::new(vec![0.0, 0.3, 0.55, 1.0], vec![0.9, 0.2, 0.4, 0.2, 0.7, 0.1, 0.4, 0.1, 0.5])
                .unwrap(),
        );
        let m = moment_sequence(&g, 8);
        for k in 0..=8u32 {
            let by_trees = m_even_by_trees(k, &g, DEFAULT_TREE_CAP, Exec::Sequential).unwrap();
            assert!((by_trees - m[k as usize]).abs() <= 1e-12 * m[k as usize].max(1.0));
        }
    }

    #[test]
    fn tree_route_is_thread_count_independent() {
        let g = example_grid();
        let a = m_even_by_trees(9, &g, DEFAULT_TREE_CAP, Exec::Sequential).unwrap();
        let b = m_even_by_trees(9, &g, DEFAULT_TREE_CAP, Exec::default()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn m_exact_examples() {
        let ones = |n| VarianceMatrix::constant(n, 1.0).unwrap();
        assert_eq!(m_exact(0, &ones(7)).unwrap(), 7.0);
        assert_eq!(m_exact(1, &ones(5)).unwrap(), 20.0);
        assert_eq!(m_exact(2, &ones(4)).unwrap(), 48.0);
        assert!(matches!(m_exact(2, &ones(9)), Err(Error::GuardExceeded(_))));
        assert!(matches!(m_exact(5, &ones(3)), Err(Error::GuardExceeded(_))));
    }

    #[test]
    fn non_injective_sum_is_scaled_xi() {
        let profile = ProfileSpec::Continuous {
            kernel: crate::profiles::Kernel::Min,
        };
        for n in [3usize, 5] {
            let s = profile.variance_matrix(n).unwrap();
            for k in 0..=3u32 {
                let lhs = labeling_sum(k, &s, false).unwrap();
                let rhs = (n as f64).powi(k as i32 + 1) * xi_bound(k, n, &profile).unwrap();
                assert!((lhs - rhs).abs() <= 1e-11 * rhs.max(1.0), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn xi_examples() {
        for n in [1, 4, 9] {
            for k in 0..6 {
                assert_eq!(
                    xi_bound(k, n, &ProfileSpec::wigner()).unwrap(),
                    catalan(k).unwrap() as f64
                );
            }
        }
        let band = ProfileSpec::band(0.3);
        let s = band.variance_matrix(10).unwrap();
        assert!((xi_bound(1, 10, &band).unwrap() - s.mean()).abs() < 1e-14);
    }

    #[test]
    fn catalan_edge_estimates() {
        let one = Graphon::constant(1.0);
        let e = edge_estimate(&one, 12, EdgeMethod::Ratio).unwrap();
        let exact = (catalan(12).unwrap() as f64 / catalan(11).unwrap() as f64).sqrt();
        assert_eq!(e.value, exact);
        assert!((exact - (46.0f64 / 13.0).sqrt()).abs() < 1e-15);
        assert!((e.richardson - 2.0).abs() < 0.005);
        assert!(e.root < e.ratio);
        assert_eq!(e.upper_bracket, 2.0);

        let zero = Graphon::constant(0.0);
        let z = edge_estimate(&zero, 12, EdgeMethod::Richardson).unwrap();
        assert!(z.degenerate);
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn triangular_moments() {
        let g = ProfileSpec::Triangular.limit_graphon().unwrap();
        let m = moment_sequence(&g, 5);
        let fact = |n: u64| (1..=n).product::<u64>() as f64;
        for k in 1..=5u64 {
            let target = (k as f64).powi(k as i32) / (2f64.powi(k as i32) * fact(k + 1));
            assert!(
                ((m[k as usize] - target) / target).abs() < 1e-3,
                "k={k}: {} vs {target}",
                m[k as usize]
            );
        }
    }

    #[test]
    fn report_layout_and_csv() {
        let opts = MomentOptions {
            k_max: 4,
            ..MomentOptions::default()
        };
        let r = moment_report(&Graphon::constant(1.0), &opts).unwrap();
        assert_eq!(r.m_even, vec![1.0, 1.0, 2.0, 5.0, 14.0]);
        assert_eq!(r.edge_root.len(), 4);
        assert!(!r.method.low_confidence);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("k,m_2k,edge_root,edge_ratio\n0,"));

        let band = Graphon::callable(GraphonKernel::Band { p: 0.5 }, 256);
        let r = moment_report(&band, &opts).unwrap();
        assert_eq!(r.method.check_resolution, Some(128));
        assert!(r.method.resolution_gap.unwrap() < RESOLUTION_GAP_TOL);
    }

    #[test]
    fn rademacher_two_cycles() {
        // E tr(A^2) = N^2, M_N(1) = N(N - 1), B_N(1) = N
        let moments = [1.0, 0.0, 1.0];
        for n in 2..=5 {
            let s = VarianceMatrix::constant(n, 1.0).unwrap();
            let d = bad_cycle_sum(1, &s, &moments).unwrap();
            let nf = n as f64;
            assert_eq!(d.m_exact, nf * (nf - 1.0));
            assert_eq!(d.good_cycle_sum, d.m_exact);
            assert_eq!(d.b_exact, nf);
            assert_eq!(d.trace_expectation, nf * nf);
        }
    }

    #[test]
    fn rademacher_fourth_moment_by_expansion() {
        // E tr(A^4) for Rademacher Wigner by direct expectation over all
        // independent sign patterns of a 3x3 symmetric matrix (2^6 patterns)
        let n = 3;
        let mut total = 0.0;
        let free: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        for mask in 0..(1u32 << free.len()) {
            let mut a = [[0.0f64; 3]; 3];
            for (bit, &(i, j)) in free.iter().enumerate() {
                let v = if mask >> bit & 1 == 1 { 1.0 } else { -1.0 };
                a[i][j] = v;
                a[j][i] = v;
            }
            let mut a2 = [[0.0f64; 3]; 3];
            for i in 0..n {
                for j in 0..n {
                    a2[i][j] = (0..n).map(|l| a[i][l] * a[l][j]).sum();
                }
            }
            total += (0..n)
                .map(|i| (0..n).map(|j| a2[i][j] * a2[j][i]).sum::<f64>())
                .sum::<f64>();
        }
        let expected = total / (1u32 << free.len()) as f64;
        let s = VarianceMatrix::constant(3, 1.0).unwrap();
        let d = bad_cycle_sum(2, &s, &[1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((d.trace_expectation - expected).abs() < 1e-12);
        assert_eq!(d.m_exact, 2.0 * 3.0 * 2.0 * 1.0);
    }

    #[test]
    fn trace_monte_carlo_agrees_with_exact_split() {
        let s = VarianceMatrix::from_rows(&[
            vec![1.0, 0.5, 0.25],
            vec![0.5, 1.0, 0.5],
            vec![0.25, 0.5, 0.0],
        ])
        .unwrap();
        let est = trace_moments_monte_carlo(&s, &EntryDistribution::Rademacher, 2, 20_000, 11, Exec::Parallel)
            .unwrap();
        // tr(A^2) = sum s_ij for signs: no randomness
        assert_eq!(est[0].std_error, 0.0);
        assert!((est[0].mean - 4.5).abs() < 1e-12);
        let exact = bad_cycle_sum(2, &s, &[1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(est[1].z_score(exact.trace_expectation) < 4.0, "{:?} vs {}", est[1], exact.trace_expectation);
        let seq = trace_moments_monte_carlo(&s, &EntryDistribution::Rademacher, 2, 20_000, 11, Exec::Sequential)
            .unwrap();
        assert_eq!(seq, est);
    }

    #[test]
    fn bad_cycle_bound_small_cases() {
        let s = VarianceMatrix::constant(4, 1.0).unwrap();
        let r = check_bad_cycle_bound(2, &s, &[1.0, 0.0, 1.0, 0.0, 1.0], 1.0, 1.0, 0.5).unwrap();
        assert!(r.holds && r.precondition_met);
        assert!(r.slack > 1e3);
        let r1 = check_bad_cycle_bound(1, &s, &[1.0, 0.0, 1.0], 1.0, 1.0, 0.5).unwrap();
        assert!(r1.holds);
        assert!(r1.b_exact <= 4.0);
    }

    #[test]
    fn sigma_r_examples() {
        let w = check_sigma_r(&ProfileSpec::wigner(), 2.0, 1.5, &[16, 64], SIGMA_R_C2_CAP).unwrap();
        assert!(w.holds);
        assert!(w.min_c2 <= 1.0);
        let z = check_sigma_r(&ProfileSpec::zero(), 0.1, 1.5, &[16], SIGMA_R_C2_CAP).unwrap();
        assert!(z.holds);
        assert_eq!(z.min_c2, 1.0);
        let tight = check_sigma_r(&ProfileSpec::wigner(), 1.0, 1.5, &[64], SIGMA_R_C2_CAP).unwrap();
        assert!(!tight.holds);
        assert!(tight.violation.is_some());
    }
}
