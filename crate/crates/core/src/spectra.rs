//! Operator norms, Gram norms, and empirical spectral distributions.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::sampler::symmetrize;

/// Symmetry tolerance, relative to `max(1, max |a_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax().max(1.0);
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormMethod {
    /// Dense eigensolver up to `dense_max`, Lanczos above.
    #[default]
    Auto,
    Dense,
    Lanczos,
    Power,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    pub dense_max: usize,
    pub method: NormMethod,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            dense_max: 2048,
            method: NormMethod::Auto,
            tol: 1e-10,
            max_iter: 10_000,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual `|A v - theta v| / |theta|` of the returned Ritz pair.
    pub residual: f64,
}

/// Symmetric linear operator for the iterative solvers.
pub trait SymOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Positive semidefinite operators only need the top Ritz value.
    fn is_psd(&self) -> bool {
        false
    }
}

/// `y_j = <col_j(m), x>`, i.e. `y = m^T x`, parallel over columns.
fn cols_dot(m: &DMatrix<f64>, x: &[f64], exec: Exec) -> Vec<f64> {
    let r = m.nrows();
    let data = m.as_slice();
    exec.map_range(m.ncols(), |j| {
        data[j * r..(j + 1) * r]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum()
    })
}

/// Symmetric dense matrix.
pub struct DenseSym<'a> {
    pub a: &'a DMatrix<f64>,
    pub exec: Exec,
}

impl SymOp for DenseSym<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&cols_dot(self.a, x, self.exec));
    }
}

/// `A A^T` for `M <= N`, or `A^T A` otherwise, without forming the product.
pub struct GramOp {
    a: DMatrix<f64>,
    at: DMatrix<f64>,
    exec: Exec,
}

impl GramOp {
    pub fn new(a: &DMatrix<f64>, exec: Exec) -> Self {
        // keep `a` as the wide orientation: rows <= cols
        let (a, at) = if a.nrows() <= a.ncols() {
            (a.clone(), a.transpose())
        } else {
            (a.transpose(), a.clone())
        };
        GramOp { a, at, exec }
    }
}

impl SymOp for GramOp {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        // t = A^T x through the columns of A; y = A t through the columns of A^T
        let t = cols_dot(&self.a, x, self.exec);
        y.copy_from_slice(&cols_dot(&self.at, &t, self.exec));
    }

    fn is_psd(&self) -> bool {
        true
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Number of eigenvalues of the tridiagonal `(alpha, beta)` below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..alpha.len() {
        let b2 = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        q = alpha[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (x.abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `index`-th smallest eigenvalue of a symmetric tridiagonal by bisection.
fn tridiag_eigenvalue(alpha: &[f64], beta: &[f64], index: usize) -> f64 {
    let n = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < n { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Last component of the unit eigenvector of the tridiagonal for `theta`,
/// by two steps of inverse iteration with a shift just outside the spectrum.
fn tridiag_last_component(alpha: &[f64], beta: &[f64], theta: f64) -> f64 {
    let n = alpha.len();
    if n == 1 {
        return 1.0;
    }
    let scale = alpha.iter().chain(beta).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let shift = theta + if theta >= 0.0 { 1.0 } else { -1.0 } * 1e-10 * scale;
    let mut v = vec![1.0; n];
    for _ in 0..3 {
        // Thomas solve of (T - shift) w = v
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = alpha[0] - shift;
        if denom == 0.0 {
            denom = 1e-300;
        }
        c[0] = if n > 1 { beta[0] / denom } else { 0.0 };
        d[0] = v[0] / denom;
        for i in 1..n {
            let mut m = alpha[i] - shift - beta[i - 1] * c[i - 1];
            if m == 0.0 {
                m = 1e-300;
            }
            c[i] = if i + 1 < n { beta[i] / m } else { 0.0 };
            d[i] = (v[i] - beta[i - 1] * d[i - 1]) / m;
        }
        let mut w = vec![0.0; n];
        w[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            w[i] = d[i] - c[i] * w[i + 1];
        }
        let nw = norm2(&w);
        if !nw.is_finite() || nw == 0.0 {
            break;
        }
        v = w.iter().map(|x| x / nw).collect();
    }
    v[n - 1]
}

/// Largest `|eigenvalue|` of a symmetric operator by Lanczos with full
/// reorthogonalization. Both extreme Ritz values must converge unless the
/// operator is PSD; residuals are relative to the norm estimate.
pub fn lanczos_extreme<O: SymOp>(op: &O, tol: f64, max_iter: usize, seed: u64) -> NormResult {
    let n = op.dim();
    if n == 0 {
        return NormResult {
            value: 0.0,
            method: NormMethod::Lanczos,
            iterations: 0,
            converged: true,
            residual: 0.0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nq = norm2(&q);
    q.iter_mut().for_each(|v| *v /= nq);

    let m_max = max_iter.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut best = (0.0, f64::INFINITY);
    for j in 0..m_max {
        op.apply(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let bnorm = norm2(&w);
        let check = j + 1 == m_max || bnorm <= 1e-14 * a.abs().max(1.0) || (j + 1) % 5 == 0;
        if check {
            let k = alpha.len();
            let sub = &beta[..k - 1];
            let lo = tridiag_eigenvalue(&alpha, sub, 0);
            let hi = tridiag_eigenvalue(&alpha, sub, k - 1);
            let value = lo.abs().max(hi.abs());
            let res_of = |theta: f64| {
                bnorm * tridiag_last_component(&alpha, sub, theta).abs() / value.max(1e-300)
            };
            let residual = if op.is_psd() {
                res_of(hi)
            } else {
                res_of(lo).max(res_of(hi))
            };
            best = (value, residual);
            if residual <= tol || bnorm <= 1e-14 * value.max(1.0) {
                return NormResult {
                    value,
                    method: NormMethod::Lanczos,
                    iterations: j + 1,
                    converged: true,
                    residual,
                };
            }
        }
        if j + 1 == m_max {
            break;
        }
        beta.push(bnorm);
        basis.push(w.iter().map(|x| x / bnorm).collect());
    }
    NormResult {
        value: best.0,
        method: NormMethod::Lanczos,
        iterations: alpha.len(),
        converged: false,
        residual: best.1,
    }
}

/// Power iteration on `A^2` (so `+-lambda` pairs do not stall it); returns
/// `sqrt` of the converged Rayleigh quotient.
pub fn power_iteration<O: SymOp>(op: &O, tol: f64, max_iter: usize, seed: u64) -> NormResult {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx.max(1e-300));
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut prev = 0.0;
    for it in 1..=max_iter {
        op.apply(&x, &mut y);
        op.apply(&y, &mut z);
        let rq = dot(&x, &z).max(0.0);
        let nz = norm2(&z);
        if nz == 0.0 {
            return NormResult {
                value: 0.0,
                method: NormMethod::Power,
                iterations: it,
                converged: true,
                residual: 0.0,
            };
        }
        x.iter_mut().zip(&z).for_each(|(a, b)| *a = b / nz);
        let change = (rq - prev).abs() / rq.max(1e-300);
        prev = rq;
        if change <= tol {
            return NormResult {
                value: rq.sqrt(),
                method: NormMethod::Power,
                iterations: it,
                converged: true,
                residual: change,
            };
        }
    }
    NormResult {
        value: prev.sqrt(),
        method: NormMethod::Power,
        iterations: max_iter,
        converged: false,
        residual: f64::NAN,
    }
}

fn dense_top(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone().symmetric_eigenvalues().amax()
}

pub fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    let r = operator_norm_with(a, &NormOptions::default())?;
    Ok(r.value)
}

/// `max_i |lambda_i(A)|` of a symmetric matrix.
pub fn operator_norm_with(a: &DMatrix<f64>, opts: &NormOptions) -> Result<NormResult> {
    check_symmetric(a)?;
    let method = match opts.method {
        NormMethod::Auto if a.nrows() <= opts.dense_max => NormMethod::Dense,
        NormMethod::Auto => NormMethod::Lanczos,
        m => m,
    };
    let op = DenseSym { a, exec: opts.exec };
    let result = match method {
        NormMethod::Dense | NormMethod::Auto => NormResult {
            value: dense_top(a),
            method: NormMethod::Dense,
            iterations: 0,
            converged: true,
            residual: 0.0,
        },
        NormMethod::Lanczos => lanczos_extreme(&op, opts.tol, opts.max_iter.min(1000), 0x5eed),
        NormMethod::Power => power_iteration(&op, opts.tol.max(1e-15), opts.max_iter, 0x5eed),
    };
    Ok(result)
}

/// Side below which [`gram_norm`] forms the small Gram matrix densely.
pub const GRAM_DENSE_MAX: usize = 512;

/// `|A A^T|_op`, the squared top singular value.
pub fn gram_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(gram_norm_with(a, &NormOptions::default())?.value)
}

pub fn gram_norm_with(a: &DMatrix<f64>, opts: &NormOptions) -> Result<NormResult> {
    let small = a.nrows().min(a.ncols());
    let dense = match opts.method {
        NormMethod::Dense => true,
        NormMethod::Auto => small <= GRAM_DENSE_MAX,
        _ => false,
    };
    if dense {
        let g = if a.nrows() <= a.ncols() {
            a * a.transpose()
        } else {
            a.transpose() * a
        };
        let g = (&g + g.transpose()) * 0.5;
        return Ok(NormResult {
            value: dense_top(&g),
            method: NormMethod::Dense,
            iterations: 0,
            converged: true,
            residual: 0.0,
        });
    }
    let op = GramOp::new(a, opts.exec);
    Ok(match opts.method {
        NormMethod::Power => power_iteration(&op, opts.tol.max(1e-15), opts.max_iter, 0x5eed),
        _ => lanczos_extreme(&op, opts.tol, opts.max_iter.min(1000), 0x5eed),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EsdScaling {
    /// Eigenvalues of `A / sqrt(N)` for square symmetric `A`.
    SqrtN,
    /// Eigenvalues of `A A^T / N` for `M x N` input.
    NGram,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Bins {
    /// `count` equal bins over the data range.
    Data { count: usize },
    /// Fixed range; values outside land in the end bins so masses sum to 1.
    Fixed { lo: f64, hi: f64, count: usize },
}

impl Default for Bins {
    fn default() -> Self {
        Bins::Data { count: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsdSummary {
    pub scaling: EsdScaling,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub histogram: Histogram,
    pub max_abs: f64,
}

pub fn histogram(sorted: &[f64], bins: Bins) -> Histogram {
    let (lo, hi, count) = match bins {
        Bins::Data { count } => {
            let lo = sorted.first().copied().unwrap_or(0.0);
            let hi = sorted.last().copied().unwrap_or(0.0);
            if hi > lo {
                (lo, hi, count.max(1))
            } else {
                (lo - 0.5, lo + 0.5, 1)
            }
        }
        Bins::Fixed { lo, hi, count } => (lo, hi, count.max(1)),
    };
    let width = (hi - lo) / count as f64;
    let edges: Vec<f64> = (0..=count).map(|b| lo + b as f64 * width).collect();
    let mut masses = vec![0.0; count];
    let unit = 1.0 / sorted.len().max(1) as f64;
    for &x in sorted {
        let b = (((x - lo) / width).floor().max(0.0) as usize).min(count - 1);
        masses[b] += unit;
    }
    Histogram { edges, masses }
}

pub fn esd(a: &DMatrix<f64>, scaling: EsdScaling, bins: Bins) -> Result<EsdSummary> {
    let mut eig: Vec<f64> = match scaling {
        EsdScaling::SqrtN => {
            check_symmetric(a)?;
            let s = (a.nrows() as f64).sqrt();
            if a.nrows() == 0 {
                Vec::new()
            } else {
                a.clone().symmetric_eigenvalues().iter().map(|v| v / s).collect()
            }
        }
        EsdScaling::NGram => {
            let n = a.ncols() as f64;
            let g = a * a.transpose();
            let g = (&g + g.transpose()) * 0.5;
            g.symmetric_eigenvalues().iter().map(|v| v / n).collect()
        }
    };
    eig.sort_by(f64::total_cmp);
    let max_abs = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let histogram = histogram(&eig, bins);
    Ok(EsdSummary {
        scaling,
        eigenvalues: eig,
        histogram,
        max_abs,
    })
}

impl EsdSummary {
    pub fn eigenvalues_csv(&self) -> String {
        let mut out = String::from("index,eigenvalue\n");
        for (i, v) in self.eigenvalues.iter().enumerate() {
            out.push_str(&format!("{i},{v:e}\n"));
        }
        out
    }

    /// Empirical CDF at `x` (right-continuous).
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.eigenvalues.len();
        if n == 0 {
            return 0.0;
        }
        self.eigenvalues.partition_point(|&v| v <= x) as f64 / n as f64
    }
}

/// Kolmogorov distance between two empirical CDFs.
pub fn ks_distance(e1: &EsdSummary, e2: &EsdSummary) -> f64 {
    let (a, b) = (&e1.eigenvalues, &e2.eigenvalues);
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { 1.0 };
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut worst = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

/// CDF of the semicircle law on `[-2, 2]`.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        return 0.0;
    }
    if x >= 2.0 {
        return 1.0;
    }
    let t = x / 2.0;
    0.5 + (t * (1.0 - t * t).sqrt() + t.asin()) / std::f64::consts::PI
}

/// `sum_b |mass_b - semicircle(bin_b)|` over the summary's histogram bins.
pub fn semicircle_histogram_l1(e: &EsdSummary) -> f64 {
    let h = &e.histogram;
    let inside: f64 = h
        .edges
        .windows(2)
        .zip(&h.masses)
        .map(|(w, m)| (m - (semicircle_cdf(w[1]) - semicircle_cdf(w[0]))).abs())
        .sum();
    let lo = h.edges.first().copied().unwrap_or(0.0);
    let hi = h.edges.last().copied().unwrap_or(0.0);
    inside + semicircle_cdf(lo) + (1.0 - semicircle_cdf(hi))
}

/// Right edge `(1 + sqrt(c))^2` of the Marchenko-Pastur law.
pub fn mp_edge(c: f64) -> f64 {
    (1.0 + c.sqrt()).powi(2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushforwardReport {
    pub m: usize,
    pub n: usize,
    /// `N - M`
    pub zeros_expected: usize,
    /// Squared eigenvalues of the symmetrization within tolerance of 0.
    pub zeros_found: usize,
    pub max_abs_error: f64,
    pub tol: f64,
    pub passes: bool,
}

pub const PUSHFORWARD_TOL: f64 = 1e-8;

/// Squared spectrum of `[[0, A], [A^T, 0]]` equals two copies of
/// Spectrum of `A A^T` plus `N - M` zeros.
pub fn esd_pushforward_check(a: &DMatrix<f64>) -> Result<PushforwardReport> {
    let (m, n) = a.shape();
    if m > n {
        return Err(Error::Shape(format!("pushforward needs M <= N, got {m}x{n}")));
    }
    let scale = a.amax().powi(2).max(1.0) * n.max(1) as f64;
    let tol = PUSHFORWARD_TOL * scale;
    let mut squares: Vec<f64> = symmetrize(a)
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v * v)
        .collect();
    squares.sort_by(f64::total_cmp);
    let g = a * a.transpose();
    let g = (&g + g.transpose()) * 0.5;
    let mut expected: Vec<f64> = Vec::with_capacity(m + n);
    for v in g.symmetric_eigenvalues().iter() {
        expected.push(v.max(0.0));
        expected.push(v.max(0.0));
    }
    expected.extend(std::iter::repeat_n(0.0, n - m));
    expected.sort_by(f64::total_cmp);
    let max_abs_error = squares
        .iter()
        .zip(&expected)
        .fold(0.0f64, |w, (s, e)| w.max((s - e).abs()));
    let zeros_found = squares.iter().filter(|&&s| s.abs() <= tol).count();
    let gram_zeros = expected.iter().filter(|&&e| e.abs() <= tol).count();
    Ok(PushforwardReport {
        m,
        n,
        zeros_expected: n - m,
        zeros_found,
        max_abs_error,
        tol,
        passes: max_abs_error <= tol && zeros_found == gram_zeros,
    })
}
