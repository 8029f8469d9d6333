//! Matrix samples `A = Sigma ⊙ A'` with reproducible per-entry streams.
//!
//! Entry `(i, j)` of a sample with seed `s` is drawn from a ChaCha8 stream keyed
//! by `s` with stream id `(i << 32) | j`, so a sample does not depend on the
//! order in which entries are generated or on the thread count.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::profiles::{ProfileSpec, VarianceMatrix};

/// Standardized entry law (mean 0, variance 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EntryDistribution {
    Gaussian,
    Rademacher,
    /// Student t with `df > 4`, rescaled by `sqrt((df - 2) / df)`.
    StudentT { df: f64 },
    /// Symmetrized Pareto: `|X|` has density `alpha x_min^alpha / x^(alpha+1)`
    /// on `[x_min, inf)` with `x_min = sqrt((alpha - 2) / alpha)`; needs
    /// `alpha > 2`. Fourth moment is infinite for `alpha <= 4`.
    SymmetricPareto { alpha: f64 },
}

impl EntryDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EntryDistribution::StudentT { df } if !(df > 4.0) => Err(Error::InvalidDistribution(
                format!("student-t needs df > 4, got {df}"),
            )),
            EntryDistribution::SymmetricPareto { alpha } if !(alpha > 2.0) => {
                Err(Error::InvalidDistribution(format!(
                    "symmetric-pareto needs alpha > 2, got {alpha}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn t_scale(df: f64) -> f64 {
        ((df - 2.0) / df).sqrt()
    }

    fn pareto_xmin(alpha: f64) -> f64 {
        ((alpha - 2.0) / alpha).sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EntryDistribution::Gaussian => rng.sample(StandardNormal),
            EntryDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryDistribution::StudentT { df } => {
                let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
                t * Self::t_scale(df)
            }
            EntryDistribution::SymmetricPareto { alpha } => {
                // 1 - U lies in (0, 1], so the power is finite
                let u: f64 = 1.0 - rng.random::<f64>();
                let mag = Self::pareto_xmin(alpha) * u.powf(-1.0 / alpha);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }

    /// `E X^p` for `p = 0..=p_max`; errors if a needed moment is infinite.
    pub fn raw_moments(&self, p_max: usize) -> Result<Vec<f64>> {
        (0..=p_max).map(|p| self.raw_moment(p)).collect()
    }

    fn raw_moment(&self, p: usize) -> Result<f64> {
        if p % 2 == 1 {
            return Ok(0.0);
        }
        let m = (p / 2) as f64;
        match *self {
            EntryDistribution::Gaussian => Ok((1..p).step_by(2).map(|j| j as f64).product()),
            EntryDistribution::Rademacher => Ok(1.0),
            EntryDistribution::StudentT { df } => {
                if p as f64 >= df {
                    return Err(Error::InvalidDistribution(format!(
                        "student-t({df}) has no moment of order {p}"
                    )));
                }
                // E T^{2m} = df^m Gamma(m + 1/2) Gamma(df/2 - m) / (sqrt(pi) Gamma(df/2))
                let ln = m * df.ln() + ln_gamma(m + 0.5) + ln_gamma(df / 2.0 - m)
                    - 0.5 * std::f64::consts::PI.ln()
                    - ln_gamma(df / 2.0);
                Ok(ln.exp() * Self::t_scale(df).powi(p as i32))
            }
            EntryDistribution::SymmetricPareto { alpha } => {
                if p as f64 >= alpha {
                    return Err(Error::InvalidDistribution(format!(
                        "symmetric-pareto({alpha}) has no moment of order {p}"
                    )));
                }
                let xm = Self::pareto_xmin(alpha);
                Ok(alpha * xm.powi(p as i32) / (alpha - p as f64))
            }
        }
    }

    /// Whether `E|X|^p < inf`.
    pub fn has_finite_moment(&self, p: f64) -> bool {
        match *self {
            EntryDistribution::Gaussian | EntryDistribution::Rademacher => true,
            EntryDistribution::StudentT { df } => p < df,
            EntryDistribution::SymmetricPareto { alpha } => p < alpha,
        }
    }

    /// `sup |X|` (infinite for unbounded laws).
    pub fn support_bound(&self) -> f64 {
        match self {
            EntryDistribution::Rademacher => 1.0,
            _ => f64::INFINITY,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        true
    }

    /// `P(|X| >= t)`.
    pub fn tail_prob(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match *self {
            EntryDistribution::Gaussian => erfc(t / std::f64::consts::SQRT_2),
            EntryDistribution::Rademacher => f64::from(u8::from(t <= 1.0)),
            EntryDistribution::StudentT { df } => {
                let v = t / Self::t_scale(df);
                2.0 * StudentsT::new(0.0, 1.0, df).expect("validated df").cdf(-v)
            }
            EntryDistribution::SymmetricPareto { alpha } => {
                let xm = Self::pareto_xmin(alpha);
                if t <= xm {
                    1.0
                } else {
                    (xm / t).powf(alpha)
                }
            }
        }
    }

    /// `E[X^2 1{|X| >= t}]`.
    pub fn trunc_second_moment(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match *self {
            EntryDistribution::Gaussian => {
                let phi = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
                2.0 * (t * phi + 0.5 * erfc(t / std::f64::consts::SQRT_2))
            }
            EntryDistribution::Rademacher => f64::from(u8::from(t <= 1.0)),
            EntryDistribution::StudentT { df } => {
                // for T ~ t_df: E[T^2 1{|T| >= v}]
                //   = df (df-1)/(df-2) P(|T_{df-2}| >= v sqrt((df-2)/df)) - df P(|T_df| >= v)
                let s = Self::t_scale(df);
                let v = t / s;
                let lower = StudentsT::new(0.0, 1.0, df - 2.0).expect("df > 4");
                let same = StudentsT::new(0.0, 1.0, df).expect("df > 4");
                let a = 2.0 * lower.cdf(-v * s);
                let b = 2.0 * same.cdf(-v);
                let raw = df * (df - 1.0) / (df - 2.0) * a - df * b;
                (raw * s * s).max(0.0)
            }
            EntryDistribution::SymmetricPareto { alpha } => {
                let xm = Self::pareto_xmin(alpha);
                if t <= xm {
                    1.0
                } else {
                    alpha * xm.powf(alpha) * t.powf(2.0 - alpha) / (alpha - 2.0)
                }
            }
        }
    }

    /// `E[X 1{|X| <= t}]`; zero for every symmetric law in the catalog.
    pub fn truncated_mean(&self, _t: f64) -> f64 {
        0.0
    }
}

fn entry_rng(base: &ChaCha8Rng, i: usize, j: usize) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(((i as u64) << 32) | j as u64);
    rng.set_word_pos(0);
    rng
}

/// Raw standardized draw for entry `(i, j)` under `seed`.
pub fn entry_draw(dist: &EntryDistribution, seed: u64, i: usize, j: usize) -> f64 {
    let base = ChaCha8Rng::seed_from_u64(seed);
    dist.sample(&mut entry_rng(&base, i, j))
}

/// Symmetric sample from an explicit variance matrix.
pub fn sample_from_variances(
    s: &VarianceMatrix,
    dist: &EntryDistribution,
    seed: u64,
    exec: Exec,
) -> Result<DMatrix<f64>> {
    dist.validate()?;
    s.ensure_symmetric(1e-12)?;
    let n = s.rows();
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; n * n];
    // column-major: column j holds the upper-triangle rows i <= j
    exec.for_each_chunk_mut(&mut data, n.max(1), |j, col| {
        for (i, out) in col.iter_mut().enumerate().take(j + 1) {
            let x = dist.sample(&mut entry_rng(&base, i, j));
            *out = s.get(i, j).sqrt() * x;
        }
    });
    let mut a = DMatrix::from_vec(n, n, data);
    for j in 0..n {
        for i in j + 1..n {
            a[(i, j)] = a[(j, i)];
        }
    }
    Ok(a)
}

/// `M x N` sample with independent entries from a rectangular variance
/// matrix.
pub fn sample_rect_from_variances(
    s: &VarianceMatrix,
    dist: &EntryDistribution,
    seed: u64,
    exec: Exec,
) -> Result<DMatrix<f64>> {
    dist.validate()?;
    let (m, n) = (s.rows(), s.cols());
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; m * n];
    exec.for_each_chunk_mut(&mut data, m.max(1), |j, col| {
        for (i, out) in col.iter_mut().enumerate() {
            let x = dist.sample(&mut entry_rng(&base, i, j));
            *out = s.get(i, j).sqrt() * x;
        }
    });
    Ok(DMatrix::from_vec(m, n, data))
}

pub fn sample_symmetric(
    profile: &ProfileSpec,
    n: usize,
    dist: &EntryDistribution,
    seed: u64,
) -> Result<DMatrix<f64>> {
    sample_symmetric_with(profile, n, dist, seed, Exec::default())
}

pub fn sample_symmetric_with(
    profile: &ProfileSpec,
    n: usize,
    dist: &EntryDistribution,
    seed: u64,
    exec: Exec,
) -> Result<DMatrix<f64>> {
    if profile.is_rectangular() {
        return Err(Error::RectangularProfile);
    }
    sample_from_variances(&profile.variance_matrix(n)?, dist, seed, exec)
}

/// `ceil(c N) x N` sample of a rectangular profile.
pub fn sample_rectangular(
    profile: &ProfileSpec,
    n: usize,
    dist: &EntryDistribution,
    seed: u64,
) -> Result<DMatrix<f64>> {
    sample_rectangular_with(profile, n, dist, seed, Exec::default())
}

pub fn sample_rectangular_with(
    profile: &ProfileSpec,
    n: usize,
    dist: &EntryDistribution,
    seed: u64,
    exec: Exec,
) -> Result<DMatrix<f64>> {
    if !profile.is_rectangular() {
        return Err(Error::NotRectangular);
    }
    sample_rect_from_variances(&profile.variance_matrix(n)?, dist, seed, exec)
}

/// `[[0, A], [A^T, 0]]`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let mut out = DMatrix::zeros(m + n, m + n);
    out.view_mut((0, m), (m, n)).copy_from(a);
    out.view_mut((m, 0), (n, m)).copy_from(&a.transpose());
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Centering {
    /// Subtract the analytic truncated mean of the known entry law.
    Analytic { distribution: EntryDistribution },
    /// Leave the truncated part uncentered.
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncationSplit {
    /// `N^{1/2 - eta}`
    pub threshold: f64,
    /// `A 1{|a| <= threshold}` before centering.
    pub le_uncentered: DMatrix<f64>,
    /// Centered truncated part (equal to `le_uncentered` without centering).
    pub le_centered: DMatrix<f64>,
    /// `A 1{|a| > threshold}`
    pub gt: DMatrix<f64>,
    /// Frobenius norm of the subtracted mean matrix.
    pub mean_shift_norm: f64,
    pub centered: bool,
    /// Nonzero entries of `gt`.
    pub gt_nonzeros: usize,
}

/// Splits a square symmetric matrix at `N^{1/2 - eta}`, `eta in (0, 1/8)`.
///
/// With analytic centering the mean of entry `(i, j)` is
/// `sigma_ij E[X 1{|X| <= threshold / sigma_ij}]`, which vanishes for the
/// symmetric catalog laws; the shift is still computed rather than assumed.
pub fn truncate_split(
    a: &DMatrix<f64>,
    eta: f64,
    centering: Centering,
    variances: Option<&VarianceMatrix>,
) -> Result<TruncationSplit> {
    if !(eta > 0.0 && eta < 0.125) {
        return Err(Error::InvalidArgument(format!("eta = {eta} not in (0, 1/8)")));
    }
    let (n, cols) = a.shape();
    if n != cols {
        return Err(Error::Shape(format!("truncation needs a square matrix, got {n}x{cols}")));
    }
    let threshold = (n as f64).powf(0.5 - eta);
    let le = a.map(|x| if x.abs() <= threshold { x } else { 0.0 });
    let gt = a.map(|x| if x.abs() > threshold { x } else { 0.0 });
    let gt_nonzeros = gt.iter().filter(|x| **x != 0.0).count();
    let (le_centered, mean_shift_norm, centered) = match centering {
        Centering::None => (le.clone(), 0.0, false),
        Centering::Analytic { distribution } => {
            let mean = DMatrix::from_fn(n, n, |i, j| {
                let sigma = variances.map_or(1.0, |s| s.get(i, j).sqrt());
                if sigma == 0.0 {
                    0.0
                } else {
                    sigma * distribution.truncated_mean(threshold / sigma)
                }
            });
            (&le - &mean, mean.norm(), true)
        }
    };
    Ok(TruncationSplit {
        threshold,
        le_uncentered: le,
        le_centered,
        gt,
        mean_shift_norm,
        centered,
        gt_nonzeros,
    })
}

/// What to sample, for a list of seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub profile: ProfileSpec,
    pub n: usize,
    pub distribution: EntryDistribution,
    pub seeds: Vec<u64>,
}

impl SampleBatch {
    /// `(rows, cols)` of each sample.
    pub fn shape(&self) -> (usize, usize) {
        self.profile.dims(self.n)
    }

    pub fn sample(&self, seed: u64, exec: Exec) -> Result<DMatrix<f64>> {
        if self.profile.is_rectangular() {
            sample_rectangular_with(&self.profile, self.n, &self.distribution, seed, exec)
        } else {
            sample_symmetric_with(&self.profile, self.n, &self.distribution, seed, exec)
        }
    }

    /// Applies `f` to each sample, in seed order.
    pub fn map<U, F>(&self, exec: Exec, f: F) -> Result<Vec<U>>
    where
        U: Send,
        F: Fn(u64, DMatrix<f64>) -> Result<U> + Sync + Send,
    {
        exec.map(&self.seeds, |&seed| f(seed, self.sample(seed, exec)?))
            .into_iter()
            .collect()
    }
}

/// Writes `{u32 LE rows, u32 LE cols}` followed by row-major `f64` LE.
pub fn write_matrix<W: Write>(mut w: W, a: &DMatrix<f64>) -> Result<()> {
    let (m, n) = a.shape();
    let dims = |v: usize| {
        u32::try_from(v).map_err(|_| Error::Shape(format!("dimension {v} too large for the header")))
    };
    w.write_all(&dims(m)?.to_le_bytes())?;
    w.write_all(&dims(n)?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(m * n * 8);
    for i in 0..m {
        for j in 0..n {
            buf.extend_from_slice(&a[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut header = [0u8; 8];
    r.read_exact(&mut header)?;
    let m = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[4..].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; m * n * 8];
    r.read_exact(&mut buf)?;
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(m, n, &vals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_profile_gives_zero_matrix() {
        let a = sample_symmetric(&ProfileSpec::zero(), 6, &EntryDistribution::Gaussian, 1).unwrap();
        assert!(a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rademacher_support_and_symmetry() {
        let a = sample_symmetric(&ProfileSpec::wigner(), 2, &EntryDistribution::Rademacher, 9).unwrap();
        assert!(a.iter().all(|&x| x == 1.0 || x == -1.0));
        assert_eq!(a[(0, 1)], a[(1, 0)]);
    }

    #[test]
    fn band_zeros_outside_the_band() {
        let a = sample_symmetric(&ProfileSpec::band(0.25), 100, &EntryDistribution::Gaussian, 3).unwrap();
        for i in 0..100usize {
            for j in 0..100usize {
                if i.abs_diff(j) > 25 {
                    assert_eq!(a[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn rectangular_shapes() {
        let mp = ProfileSpec::marchenko_pastur(0.5);
        let a = sample_rectangular(&mp, 10, &EntryDistribution::Gaussian, 1).unwrap();
        assert_eq!(a.shape(), (5, 10));
        let t = sample_rectangular(&ProfileSpec::Triangular, 7, &EntryDistribution::Gaussian, 1).unwrap();
        for i in 0..7 {
            for j in 0..i {
                assert_eq!(t[(i, j)], 0.0);
            }
        }
        assert!(matches!(
            sample_symmetric(&mp, 10, &EntryDistribution::Gaussian, 1),
            Err(Error::RectangularProfile)
        ));
    }

    #[test]
    fn symmetrize_examples() {
        let s = symmetrize(&DMatrix::from_element(1, 1, 1.0));
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let ones = DMatrix::from_element(2, 3, 1.0);
        let eig = symmetrize(&ones).symmetric_eigenvalues();
        let mut v: Vec<f64> = eig.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        assert!((v[4] - 6f64.sqrt()).abs() < 1e-12);
        assert!((v[0] + 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let p = ProfileSpec::wigner();
        let d = EntryDistribution::StudentT { df: 5.0 };
        let a = sample_symmetric_with(&p, 30, &d, 4, Exec::Sequential).unwrap();
        let b = sample_symmetric_with(&p, 30, &d, 4, Exec::default()).unwrap();
        let c = sample_symmetric_with(&p, 30, &d, 5, Exec::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a[(3, 7)], entry_draw(&d, 4, 3, 7));
    }

    #[test]
    fn truncation_examples() {
        let a = sample_symmetric(&ProfileSpec::wigner(), 20, &EntryDistribution::Rademacher, 2).unwrap();
        let split = truncate_split(
            &a,
            0.1,
            Centering::Analytic {
                distribution: EntryDistribution::Rademacher,
            },
            None,
        )
        .unwrap();
        assert!(split.gt.iter().all(|&x| x == 0.0));
        assert_eq!(split.mean_shift_norm, 0.0);
        let mut b = a.clone();
        b[(2, 5)] = 1e6;
        b[(5, 2)] = 1e6;
        let split = truncate_split(&b, 0.1, Centering::None, None).unwrap();
        assert_eq!(split.gt_nonzeros, 2);
        assert!(!split.centered);
        assert_eq!(&split.le_uncentered + &split.gt, b);
        assert!(truncate_split(&b, 0.2, Centering::None, None).is_err());
    }

    #[test]
    fn moment_catalog() {
        let g = EntryDistribution::Gaussian.raw_moments(6).unwrap();
        assert_eq!(g, vec![1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0]);
        let t = EntryDistribution::StudentT { df: 5.0 }.raw_moments(4).unwrap();
        assert!((t[2] - 1.0).abs() < 1e-12);
        // kurtosis of t_5 is 3 + 6/(5-4) = 9
        assert!((t[4] - 9.0).abs() < 1e-9);
        let p = EntryDistribution::SymmetricPareto { alpha: 6.0 }.raw_moments(2).unwrap();
        assert!((p[2] - 1.0).abs() < 1e-12);
        assert!(EntryDistribution::SymmetricPareto { alpha: 3.0 }.raw_moments(4).is_err());
        assert!(EntryDistribution::StudentT { df: 3.0 }.validate().is_err());
    }

    #[test]
    fn truncated_second_moments_against_quadrature() {
        // midpoint rule on [t, t + 60] of 2 x^2 f(x) for the standardized t law
        let df: f64 = 5.0;
        let s = ((df - 2.0) / df).sqrt();
        let t_law = StudentsT::new(0.0, 1.0, df).unwrap();
        let density = |x: f64| statrs::distribution::Continuous::pdf(&t_law, x / s) / s;
        for t in [0.5, 2.0, 6.0] {
            let steps = 400_000;
            let h = 200.0 / steps as f64;
            let quad: f64 = (0..steps)
                .map(|k| {
                    let x = t + (k as f64 + 0.5) * h;
                    2.0 * x * x * density(x)
                })
                .sum::<f64>()
                * h;
            // tail beyond t + 200 decays like x^{-2}; bound ~ 200^{-2} * const
            let analytic = EntryDistribution::StudentT { df }.trunc_second_moment(t);
            assert!((analytic - quad).abs() < 2e-4, "t={t}: {analytic} vs {quad}");
        }
        let g = EntryDistribution::Gaussian.trunc_second_moment(0.0);
        assert_eq!(g, 1.0);
        let p = EntryDistribution::SymmetricPareto { alpha: 3.0 };
        assert_eq!(p.trunc_second_moment(0.1), 1.0);
    }

    #[test]
    fn binary_roundtrip() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.5, 0.0, 1e-300, 7.0]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &a).unwrap();
        assert_eq!(buf.len(), 8 + 6 * 8);
        assert_eq!(&buf[..4], &2u32.to_le_bytes());
        assert_eq!(&buf[8..16], &1.0f64.to_le_bytes());
        assert_eq!(&buf[16..24], &(-2.0f64).to_le_bytes());
        assert_eq!(read_matrix(&buf[..]).unwrap(), a);
    }
}
