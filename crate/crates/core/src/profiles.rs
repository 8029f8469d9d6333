//! Variance profiles `s_ij^(N)` and the kernels they induce.
//!
//! Indices in this module are 0-based: entry `(i, j)` of an `N x N` profile
//! corresponds to the 1-based pair `(i + 1, j + 1)`. Continuous kernels are
//! sampled at `((i + 1) / N, (j + 1) / N)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{CallableGraphon, Graphon, GraphonKernel, StepGraphon, DEFAULT_RESOLUTION};

/// Named catalog of standard-deviation kernels `sigma: [0,1]^2 -> [0,1]`.
///
/// Profiles built from a kernel use `sigma^2` as the variance; keeping the
/// catalog closed makes experiment configs reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Kernel {
    Constant { value: f64 },
    /// `min(x, y)`
    Min,
    /// `x * y`
    Product,
    /// `exp(-((x - c)^2 + (y - c)^2) / (2 w^2))`
    GaussianBump { center: f64, width: f64 },
    /// `1 - max(x, y)`; decreasing separately in each variable.
    OneMinusMax,
    /// Bilinear interpolation of node values on a uniform grid over `[0,1]^2`.
    /// `values[p][q]` sits at `(p / (rows - 1), q / (cols - 1))`.
    MonotoneGrid { values: Vec<Vec<f64>> },
}

impl Kernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Kernel::Constant { value } => *value,
            Kernel::Min => x.min(y),
            Kernel::Product => x * y,
            Kernel::GaussianBump { center, width } => {
                let d2 = (x - center).powi(2) + (y - center).powi(2);
                (-d2 / (2.0 * width * width)).exp()
            }
            Kernel::OneMinusMax => 1.0 - x.max(y),
            Kernel::MonotoneGrid { values } => bilinear(values, x, y),
        }
    }

    /// Supremum over `[0,1]^2`.
    pub fn sup(&self) -> f64 {
        match self {
            Kernel::Constant { value } => *value,
            Kernel::Min | Kernel::Product | Kernel::OneMinusMax => 1.0,
            Kernel::GaussianBump { center, .. } => {
                let c = center.clamp(0.0, 1.0);
                self.eval(c, c)
            }
            Kernel::MonotoneGrid { values } => values
                .iter()
                .flatten()
                .copied()
                .fold(0.0, f64::max),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            Kernel::MonotoneGrid { values } => {
                let r = values.len();
                values.iter().all(|row| row.len() == r)
                    && (0..r).all(|p| (0..r).all(|q| values[p][q] == values[q][p]))
            }
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Constant { value } if !(0.0..=1.0).contains(value) => Err(
                Error::InvalidProfile(format!("constant kernel value {value} outside [0,1]")),
            ),
            Kernel::GaussianBump { width, center } if !(*width > 0.0) || !center.is_finite() => {
                Err(Error::InvalidProfile("gaussian-bump needs width > 0".into()))
            }
            Kernel::MonotoneGrid { values } => {
                let rows = values.len();
                let cols = values.first().map_or(0, Vec::len);
                if rows < 2 || cols < 2 || values.iter().any(|r| r.len() != cols) {
                    return Err(Error::InvalidProfile(
                        "monotone-grid needs a rectangular grid with at least 2x2 nodes".into(),
                    ));
                }
                if values.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidProfile(
                        "monotone-grid values must lie in [0,1]".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn bilinear(values: &[Vec<f64>], x: f64, y: f64) -> f64 {
    let rows = values.len();
    let cols = values[0].len();
    let locate = |t: f64, nodes: usize| {
        let s = t.clamp(0.0, 1.0) * (nodes - 1) as f64;
        let lo = (s.floor() as usize).min(nodes - 2);
        (lo, s - lo as f64)
    };
    let (p, u) = locate(x, rows);
    let (q, v) = locate(y, cols);
    let a = values[p][q];
    let b = values[p + 1][q];
    let c = values[p][q + 1];
    let d = values[p + 1][q + 1];
    (1.0 - u) * (1.0 - v) * a + u * (1.0 - v) * b + (1.0 - u) * v * c + u * v * d
}

/// Symmetric step profile: breakpoints `0 = a_0 < ... < a_m = 1` and an
/// `m x m` symmetric grid of standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepProfile {
    pub breakpoints: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

impl StepProfile {
    pub fn new(breakpoints: Vec<f64>, sigma: Vec<Vec<f64>>) -> Result<Self> {
        let s = StepProfile { breakpoints, sigma };
        s.validate()?;
        Ok(s)
    }

    pub fn blocks(&self) -> usize {
        self.breakpoints.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        validate_breakpoints(&self.breakpoints)?;
        let m = self.blocks();
        validate_grid(&self.sigma, m, m)?;
        for p in 0..m {
            for q in 0..p {
                if self.sigma[p][q] != self.sigma[q][p] {
                    return Err(Error::InvalidProfile(format!(
                        "step sigma grid not symmetric at ({p}, {q})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Rectangular profile for Gram matrices `A` of size `M x N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RectProfile {
    Step {
        row_breakpoints: Vec<f64>,
        col_breakpoints: Vec<f64>,
        sigma: Vec<Vec<f64>>,
    },
    /// `sigma(i / M, j / N)`; the kernel need not be symmetric.
    Continuous { kernel: Kernel },
}

impl RectProfile {
    pub fn ones() -> Self {
        RectProfile::Continuous {
            kernel: Kernel::Constant { value: 1.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RectProfile::Step {
                row_breakpoints,
                col_breakpoints,
                sigma,
            } => {
                validate_breakpoints(row_breakpoints)?;
                validate_breakpoints(col_breakpoints)?;
                validate_grid(sigma, row_breakpoints.len() - 1, col_breakpoints.len() - 1)
            }
            RectProfile::Continuous { kernel } => kernel.validate(),
        }
    }

    pub fn variance_matrix(&self, rows: usize, cols: usize) -> VarianceMatrix {
        let data = match self {
            RectProfile::Step {
                row_breakpoints,
                col_breakpoints,
                sigma,
            } => {
                let ri = interval_map(row_breakpoints, rows);
                let ci = interval_map(col_breakpoints, cols);
                DMatrix::from_fn(rows, cols, |i, j| sigma[ri[i]][ci[j]].powi(2))
            }
            RectProfile::Continuous { kernel } => DMatrix::from_fn(rows, cols, |i, j| {
                kernel
                    .eval((i + 1) as f64 / rows as f64, (j + 1) as f64 / cols as f64)
                    .powi(2)
            }),
        };
        VarianceMatrix { data }
    }
}

/// A variance-profile description yielding `s_ij^(N)` for every `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum ProfileSpec {
    Step(StepProfile),
    Continuous {
        kernel: Kernel,
    },
    /// `1_{|i - j| <= p N}`
    Band {
        p: f64,
    },
    /// Square upper-triangular `1_{i <= j}`; only meaningful through its Gram
    /// matrix / symmetrization.
    Triangular,
    /// Explicit variance matrices keyed by `N`; no interpolation across `N`.
    Custom {
        #[serde(with = "n_keyed")]
        matrices: BTreeMap<usize, Vec<Vec<f64>>>,
    },
    /// Rectangular `ceil(c N) x N` profile with aspect `c` in `(0, 1]`.
    Gram {
        c: f64,
        rect: RectProfile,
    },
}

impl ProfileSpec {
    /// Constant unit variance.
    pub fn wigner() -> Self {
        ProfileSpec::Step(StepProfile {
            breakpoints: vec![0.0, 1.0],
            sigma: vec![vec![1.0]],
        })
    }

    pub fn zero() -> Self {
        ProfileSpec::Step(StepProfile {
            breakpoints: vec![0.0, 1.0],
            sigma: vec![vec![0.0]],
        })
    }

    pub fn band(p: f64) -> Self {
        ProfileSpec::Band { p }
    }

    pub fn marchenko_pastur(c: f64) -> Self {
        ProfileSpec::Gram {
            c,
            rect: RectProfile::ones(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProfileSpec::Step(s) => s.validate(),
            ProfileSpec::Continuous { kernel } => {
                kernel.validate()?;
                if !kernel.is_symmetric() {
                    return Err(Error::InvalidProfile(
                        "continuous profile kernel must be symmetric".into(),
                    ));
                }
                Ok(())
            }
            ProfileSpec::Band { p } => {
                if *p > 0.0 && *p <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidProfile(format!("band width p = {p} not in (0,1]")))
                }
            }
            ProfileSpec::Triangular => Ok(()),
            ProfileSpec::Custom { matrices } => {
                for (&n, rows) in matrices {
                    let v = VarianceMatrix::from_rows(rows)?;
                    if v.rows() != n || v.cols() != n {
                        return Err(Error::InvalidProfile(format!(
                            "custom matrix for N = {n} has shape {}x{}",
                            v.rows(),
                            v.cols()
                        )));
                    }
                    v.ensure_symmetric(0.0)?;
                }
                Ok(())
            }
            ProfileSpec::Gram { c, rect } => {
                if !(*c > 0.0 && *c <= 1.0) {
                    return Err(Error::InvalidProfile(format!("aspect c = {c} not in (0,1]")));
                }
                rect.validate()
            }
        }
    }

    pub fn is_rectangular(&self) -> bool {
        matches!(self, ProfileSpec::Triangular | ProfileSpec::Gram { .. })
    }

    /// Aspect ratio `M / N` of a rectangular profile.
    pub fn aspect(&self) -> Option<f64> {
        match self {
            ProfileSpec::Triangular => Some(1.0),
            ProfileSpec::Gram { c, .. } => Some(*c),
            _ => None,
        }
    }

    /// `(rows, cols)` of the matrix at size parameter `n`.
    pub fn dims(&self, n: usize) -> (usize, usize) {
        match self {
            ProfileSpec::Gram { c, .. } => (gram_rows(*c, n), n),
            _ => (n, n),
        }
    }

    /// Variance `s_ij^(n)` of entry `(i, j)` (0-based).
    ///
    /// For rectangular variants `n` is the column count and `i` ranges over the
    /// `ceil(c n)` rows.
    pub fn variance_at(&self, n: usize, i: usize, j: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be positive".into()));
        }
        let (rows, cols) = self.dims(n);
        if i >= rows || j >= cols {
            return Err(Error::IndexOutOfRange { i, j, rows, cols });
        }
        Ok(match self {
            ProfileSpec::Step(s) => {
                let map = interval_map(&s.breakpoints, n);
                s.sigma[map[i]][map[j]].powi(2)
            }
            ProfileSpec::Continuous { kernel } => sym_kernel_variance(kernel, n, i, j),
            ProfileSpec::Band { p } => band_indicator(*p, n, i, j),
            ProfileSpec::Triangular => f64::from(u8::from(i <= j)),
            ProfileSpec::Custom { matrices } => {
                let rows = matrices.get(&n).ok_or(Error::MissingCustomData(n))?;
                rows[i][j]
            }
            ProfileSpec::Gram { .. } => self.variance_matrix(n)?.get(i, j),
        })
    }

    /// Full variance matrix at size parameter `n`; rectangular variants give
    /// their `rows x cols` matrix.
    pub fn variance_matrix(&self, n: usize) -> Result<VarianceMatrix> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be positive".into()));
        }
        match self {
            ProfileSpec::Step(s) => {
                let map = interval_map(&s.breakpoints, n);
                Ok(VarianceMatrix {
                    data: DMatrix::from_fn(n, n, |i, j| s.sigma[map[i]][map[j]].powi(2)),
                })
            }
            ProfileSpec::Continuous { kernel } => Ok(VarianceMatrix {
                data: DMatrix::from_fn(n, n, |i, j| sym_kernel_variance(kernel, n, i, j)),
            }),
            ProfileSpec::Band { p } => Ok(VarianceMatrix {
                data: DMatrix::from_fn(n, n, |i, j| band_indicator(*p, n, i, j)),
            }),
            ProfileSpec::Triangular => Ok(VarianceMatrix {
                data: DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i <= j))),
            }),
            ProfileSpec::Custom { matrices } => {
                let rows = matrices.get(&n).ok_or(Error::MissingCustomData(n))?;
                VarianceMatrix::from_rows(rows)
            }
            ProfileSpec::Gram { c, rect } => Ok(rect.variance_matrix(gram_rows(*c, n), n)),
        }
    }

    /// Symmetric variance matrix of the square model at size parameter `n`:
    /// the profile itself for symmetric variants, the `(M + N)`-dimensional
    /// symmetrization for rectangular ones.
    pub fn square_variance_matrix(&self, n: usize) -> Result<VarianceMatrix> {
        let v = self.variance_matrix(n)?;
        if self.is_rectangular() {
            symmetrize_variances(&v)
        } else {
            v.ensure_symmetric(1e-12)?;
            Ok(v)
        }
    }

    /// Induced step graphon `W_N(x, y) = s_{ceil(Nx), ceil(Ny)}` on an
    /// `N x N` uniform grid (for rectangular profiles, the grid of the
    /// symmetrization).
    pub fn graphon_of(&self, n: usize) -> Result<StepGraphon> {
        let v = self.square_variance_matrix(n)?;
        let d = v.rows();
        let values: Vec<f64> = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| v.get(i, j))
            .collect();
        StepGraphon::uniform(d, values)
    }

    /// `N -> infinity` limit kernel, with the default quadrature resolution for
    /// kernels that are not step functions.
    pub fn limit_graphon(&self) -> Result<Graphon> {
        self.limit_graphon_with(DEFAULT_RESOLUTION)
    }

    pub fn limit_graphon_with(&self, resolution: usize) -> Result<Graphon> {
        let callable = |kernel| Graphon::Callable(CallableGraphon::new(kernel, resolution));
        Ok(match self {
            ProfileSpec::Step(s) => {
                let m = s.blocks();
                let values = (0..m)
                    .flat_map(|p| (0..m).map(move |q| (p, q)))
                    .map(|(p, q)| s.sigma[p][q].powi(2))
                    .collect();
                Graphon::Step(StepGraphon::new(s.breakpoints.clone(), values)?)
            }
            ProfileSpec::Continuous { kernel } => {
                callable(GraphonKernel::SquaredProfile(kernel.clone()))
            }
            ProfileSpec::Band { p } => callable(GraphonKernel::Band { p: *p }),
            ProfileSpec::Triangular => callable(GraphonKernel::TriangularSym),
            ProfileSpec::Gram { c, rect } => match rect {
                RectProfile::Step {
                    row_breakpoints,
                    col_breakpoints,
                    sigma,
                } => Graphon::Step(symmetrized_step_graphon(
                    *c,
                    row_breakpoints,
                    col_breakpoints,
                    sigma,
                )?),
                RectProfile::Continuous { kernel } => callable(GraphonKernel::SymmetrizedRect {
                    c: *c,
                    kernel: kernel.clone(),
                }),
            },
            ProfileSpec::Custom { .. } => {
                return Err(Error::NoLimit("custom profiles are defined per N only"))
            }
        })
    }
}

/// JSON object keys are strings; inside an internally tagged enum serde cannot
/// coerce them to integers, so parse them by hand.
mod n_keyed {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    type Matrices = BTreeMap<usize, Vec<Vec<f64>>>;

    pub fn serialize<S: Serializer>(m: &Matrices, s: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, &Vec<Vec<f64>>> =
            m.iter().map(|(n, v)| (n.to_string(), v)).collect();
        keyed.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrices, D::Error> {
        let keyed = BTreeMap::<String, Vec<Vec<f64>>>::deserialize(d)?;
        keyed
            .into_iter()
            .map(|(k, v)| {
                k.parse::<usize>()
                    .map(|n| (n, v))
                    .map_err(|_| D::Error::custom(format!("custom matrix key {k:?} is not a size")))
            })
            .collect()
    }
}

fn symmetrized_step_graphon(
    c: f64,
    row_breakpoints: &[f64],
    col_breakpoints: &[f64],
    sigma: &[Vec<f64>],
) -> Result<StepGraphon> {
    let gamma = c / (1.0 + c);
    let m = row_breakpoints.len() - 1;
    let n = col_breakpoints.len() - 1;
    let mut bounds: Vec<f64> = row_breakpoints.iter().map(|a| gamma * a).collect();
    bounds.extend(col_breakpoints[1..].iter().map(|b| gamma + (1.0 - gamma) * b));
    *bounds.last_mut().unwrap() = 1.0;
    let d = m + n;
    let mut values = vec![0.0; d * d];
    for p in 0..m {
        for q in 0..n {
            let v = sigma[p][q].powi(2);
            values[p * d + m + q] = v;
            values[(m + q) * d + p] = v;
        }
    }
    StepGraphon::new(bounds, values)
}

pub(crate) fn gram_rows(c: f64, n: usize) -> usize {
    // ceil with a small guard so that e.g. 0.1 * 30 maps to 3, not 4
    let rows = (c * n as f64 - 1e-9).ceil();
    (rows as usize).max(1)
}

fn band_indicator(p: f64, n: usize, i: usize, j: usize) -> f64 {
    let dist = i.abs_diff(j) as f64;
    f64::from(u8::from(dist <= p * n as f64))
}

/// `sigma(i/N, j/N)^2` (1-based), always evaluated with the smaller index
/// first so that floating-point rounding cannot break symmetry.
fn sym_kernel_variance(kernel: &Kernel, n: usize, i: usize, j: usize) -> f64 {
    let (a, b) = (i.min(j), i.max(j));
    kernel
        .eval((a + 1) as f64 / n as f64, (b + 1) as f64 / n as f64)
        .powi(2)
}

/// Interval index (0-based) of every 0-based position `0..n`.
///
/// Position `i` (1-based `i + 1`) belongs to interval `p` iff
/// `R_{p-1} < i + 1 <= R_p` with `R_p = round(a_p n)`, ties rounded up.
pub fn interval_map(breakpoints: &[f64], n: usize) -> Vec<usize> {
    let m = breakpoints.len() - 1;
    let right: Vec<usize> = (1..=m)
        .map(|p| {
            if p == m {
                n
            } else {
                ((breakpoints[p] * n as f64 + 0.5).floor() as usize).min(n)
            }
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut p = 0;
    for i in 1..=n {
        while i > right[p] {
            p += 1;
        }
        out.push(p);
    }
    out
}

fn validate_breakpoints(b: &[f64]) -> Result<()> {
    if b.len() < 2 || b[0] != 0.0 || *b.last().unwrap() != 1.0 {
        return Err(Error::InvalidProfile(
            "breakpoints must start at 0 and end at 1".into(),
        ));
    }
    if b.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidProfile(
            "breakpoints must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn validate_grid(g: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if g.len() != rows || g.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidProfile(format!(
            "sigma grid must be {rows}x{cols}"
        )));
    }
    if g.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidProfile("sigma values must lie in [0,1]".into()));
    }
    Ok(())
}

/// Dense matrix of entry variances, every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceMatrix {
    data: DMatrix<f64>,
}

impl VarianceMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidProfile(format!("variance {v} outside [0,1]")));
        }
        Ok(VarianceMatrix { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("variance rows must be non-empty and equal length".into()));
        }
        Self::new(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(n, n, value))
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        if self.rows() != self.cols() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn ensure_symmetric(&self, tol: f64) -> Result<()> {
        if self.rows() != self.cols() {
            return Err(Error::Shape(format!(
                "expected a square variance matrix, got {}x{}",
                self.rows(),
                self.cols()
            )));
        }
        let asym = self.max_asymmetry();
        if asym > tol {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Entrywise square roots (standard deviations).
    pub fn sigma(&self) -> DMatrix<f64> {
        self.data.map(f64::sqrt)
    }
}

/// `[[0, S], [S^T, 0]]` for an `M x N` rectangular variance matrix, `M <= N`.
pub fn symmetrize_variances(rect: &VarianceMatrix) -> Result<VarianceMatrix> {
    let (m, n) = (rect.rows(), rect.cols());
    if m > n {
        return Err(Error::Shape(format!("symmetrization needs M <= N, got M = {m}, N = {n}")));
    }
    let d = m + n;
    let data = DMatrix::from_fn(d, d, |i, j| match (i < m, j < m) {
        (true, false) => rect.get(i, j - m),
        (false, true) => rect.get(j, i - m),
        _ => 0.0,
    });
    Ok(VarianceMatrix { data })
}

/// Symmetrized `(M + N) x (M + N)` profile of a rectangular profile evaluated
/// on an `M x N` grid.
pub fn symmetrize_profile(rect: &ProfileSpec, m: usize, n: usize) -> Result<ProfileSpec> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("M and N must be positive".into()));
    }
    if m > n {
        return Err(Error::Shape(format!("symmetrization needs M <= N, got M = {m}, N = {n}")));
    }
    let v = match rect {
        ProfileSpec::Gram { rect, .. } => rect.variance_matrix(m, n),
        ProfileSpec::Triangular => VarianceMatrix {
            data: DMatrix::from_fn(m, n, |i, j| f64::from(u8::from(i <= j))),
        },
        _ => return Err(Error::NotRectangular),
    };
    let sym = symmetrize_variances(&v)?;
    let mut matrices = BTreeMap::new();
    matrices.insert(m + n, sym.to_rows());
    Ok(ProfileSpec::Custom { matrices })
}

/// Step profile with block-boundary rows and columns zeroed so that the
/// doubling inequality holds with equality on the support: entry `(i, j)`
/// (1-based) keeps `sigma_pq` iff `a_{p-1} + 1/N <= i/N < a_p` and likewise
/// for `j`.
pub fn aligned_step_profile(step: &StepProfile, ns: &[usize]) -> Result<ProfileSpec> {
    step.validate()?;
    let m = step.blocks();
    let block_of = |n: usize, i: usize| -> Option<usize> {
        let x = i as f64 / n as f64;
        (0..m).find(|&p| {
            step.breakpoints[p] + 1.0 / n as f64 <= x && x < step.breakpoints[p + 1]
        })
    };
    let mut matrices = BTreeMap::new();
    for &n in ns {
        let rows = (1..=n)
            .map(|i| {
                (1..=n)
                    .map(|j| match (block_of(n, i), block_of(n, j)) {
                        (Some(p), Some(q)) => step.sigma[p][q].powi(2),
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        matrices.insert(n, rows);
    }
    Ok(ProfileSpec::Custom { matrices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::l1_distance;

    fn step_example() -> ProfileSpec {
        ProfileSpec::Step(
            StepProfile::new(vec![0.0, 0.5, 1.0], vec![vec![1.0, 0.5], vec![0.5, 0.25]]).unwrap(),
        )
    }

    #[test]
    fn band_indicator_examples() {
        let band = ProfileSpec::band(0.5);
        assert_eq!(band.variance_at(10, 0, 9).unwrap(), 0.0);
        assert_eq!(band.variance_at(10, 0, 5).unwrap(), 1.0);
        let full = ProfileSpec::band(1.0);
        for n in [1, 7, 20] {
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(full.variance_at(n, i, j).unwrap(), 1.0);
                }
            }
        }
    }

    #[test]
    fn step_variance_is_sigma_squared() {
        let s = step_example();
        // 1-based (3, 4): both in the second interval
        assert_eq!(s.variance_at(4, 2, 3).unwrap(), 0.0625);
        assert_eq!(s.variance_at(4, 0, 3).unwrap(), 0.25);
        assert_eq!(s.variance_at(4, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn index_and_custom_errors() {
        let s = step_example();
        assert!(matches!(
            s.variance_at(4, 4, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        let custom = ProfileSpec::Custom {
            matrices: BTreeMap::from([(2, vec![vec![1.0, 0.5], vec![0.5, 1.0]])]),
        };
        assert_eq!(custom.variance_at(2, 0, 1).unwrap(), 0.5);
        assert!(matches!(
            custom.variance_at(3, 0, 0),
            Err(Error::MissingCustomData(3))
        ));
        assert!(matches!(custom.limit_graphon(), Err(Error::NoLimit(_))));
    }

    #[test]
    fn interval_map_rounds_half_up() {
        // 0.5 * 5 = 2.5 rounds to 3: {1,2,3}, {4,5}
        assert_eq!(interval_map(&[0.0, 0.5, 1.0], 5), vec![0, 0, 0, 1, 1]);
        assert_eq!(interval_map(&[0.0, 0.5, 1.0], 4), vec![0, 0, 1, 1]);
        // empty middle interval at small N
        assert_eq!(interval_map(&[0.0, 0.4, 0.45, 1.0], 2), vec![0, 2]);
    }

    #[test]
    fn validation_rejects_bad_profiles() {
        assert!(StepProfile::new(vec![0.0, 0.6, 0.5, 1.0], vec![vec![1.0; 3]; 3]).is_err());
        assert!(StepProfile::new(vec![0.0, 1.0], vec![vec![1.5]]).is_err());
        assert!(StepProfile::new(vec![0.0, 0.5, 1.0], vec![vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(ProfileSpec::band(0.0).validate().is_err());
        assert!(ProfileSpec::marchenko_pastur(1.5).validate().is_err());
        let asym = ProfileSpec::Continuous {
            kernel: Kernel::MonotoneGrid {
                values: vec![vec![1.0, 0.5], vec![0.4, 0.1]],
            },
        };
        assert!(asym.validate().is_err());
    }

    #[test]
    fn graphon_of_small_cases() {
        let s = step_example();
        let g1 = s.graphon_of(1).unwrap();
        assert_eq!(g1.cells(), 1);
        assert_eq!(g1.value(0, 0), s.variance_at(1, 0, 0).unwrap());

        let g = ProfileSpec::band(0.5).graphon_of(4).unwrap();
        for i in 0..4usize {
            for j in 0..4usize {
                let expected = if i.abs_diff(j) <= 2 { 1.0 } else { 0.0 };
                assert_eq!(g.value(i, j), expected);
            }
        }

        let w = ProfileSpec::wigner().graphon_of(100).unwrap();
        assert!((0..100).all(|i| (0..100).all(|j| w.value(i, j) == 1.0)));
    }

    #[test]
    fn symmetrize_profile_blocks() {
        let mp = ProfileSpec::marchenko_pastur(1.0);
        let sym = symmetrize_profile(&mp, 1, 1).unwrap();
        let v = sym.variance_matrix(2).unwrap();
        assert_eq!(v.to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);

        let rect = ProfileSpec::Gram {
            c: 0.5,
            rect: RectProfile::Step {
                row_breakpoints: vec![0.0, 1.0],
                col_breakpoints: vec![0.0, 0.5, 1.0],
                sigma: vec![vec![1.0, 0.5]],
            },
        };
        let v = symmetrize_profile(&rect, 1, 2).unwrap().variance_matrix(3).unwrap();
        assert_eq!(
            v.to_rows(),
            vec![
                vec![0.0, 1.0, 0.25],
                vec![1.0, 0.0, 0.0],
                vec![0.25, 0.0, 0.0]
            ]
        );

        let v = symmetrize_profile(&mp, 2, 4).unwrap().variance_matrix(6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let off = (i < 2) != (j < 2);
                assert_eq!(v.get(i, j), if off { 1.0 } else { 0.0 });
            }
        }
        assert!(symmetrize_profile(&mp, 3, 2).is_err());
    }

    #[test]
    fn gram_dims_use_ceiling() {
        assert_eq!(ProfileSpec::marchenko_pastur(0.5).dims(10), (5, 10));
        assert_eq!(ProfileSpec::marchenko_pastur(0.25).dims(2000), (500, 2000));
        assert_eq!(ProfileSpec::marchenko_pastur(0.1).dims(30), (3, 30));
        assert_eq!(ProfileSpec::marchenko_pastur(0.3).dims(10), (3, 10));
        assert_eq!(ProfileSpec::marchenko_pastur(0.31).dims(10), (4, 10));
    }

    #[test]
    fn limit_graphons() {
        let band = ProfileSpec::band(0.3).limit_graphon().unwrap();
        assert_eq!(band.eval(0.1, 0.39), 1.0);
        assert_eq!(band.eval(0.1, 0.41), 0.0);
        let w = ProfileSpec::wigner().limit_graphon().unwrap();
        assert_eq!(w.eval(0.3, 0.9), 1.0);
        let tri = ProfileSpec::Triangular.limit_graphon().unwrap();
        // {x <= 1/2 <= y, 2y - 1 >= 2x} and its reflection
        assert_eq!(tri.eval(0.1, 0.7), 1.0);
        assert_eq!(tri.eval(0.3, 0.7), 0.0);
        assert_eq!(tri.eval(0.7, 0.1), 1.0);
        assert_eq!(tri.eval(0.2, 0.4), 0.0);
    }

    #[test]
    fn step_l1_to_limit_is_zero_when_aligned() {
        let s = step_example();
        let limit = s.limit_graphon().unwrap();
        for n in [2, 4, 8, 64] {
            let wn = Graphon::Step(s.graphon_of(n).unwrap());
            assert_eq!(l1_distance(&wn, &limit), 0.0);
        }
    }

    #[test]
    fn aligned_step_profile_zeroes_block_edges() {
        let step = StepProfile::new(vec![0.0, 0.5, 1.0], vec![vec![1.0, 0.5], vec![0.5, 0.25]])
            .unwrap();
        let p = aligned_step_profile(&step, &[4]).unwrap();
        let v = p.variance_matrix(4).unwrap();
        // 1-based i/N in [1/4, 1/2) -> block 1 (i = 1), [3/4, 1) -> block 2 (i = 3)
        assert_eq!(v.get(0, 0), 1.0);
        assert_eq!(v.get(0, 2), 0.25);
        assert_eq!(v.get(2, 2), 0.0625);
        assert_eq!(v.get(1, 1), 0.0);
        assert_eq!(v.get(3, 0), 0.0);
    }

    #[test]
    fn json_roundtrip_of_catalog() {
        let specs = vec![
            step_example(),
            ProfileSpec::Continuous {
                kernel: Kernel::GaussianBump {
                    center: 0.5,
                    width: 0.2,
                },
            },
            ProfileSpec::band(0.25),
            ProfileSpec::Triangular,
            ProfileSpec::marchenko_pastur(0.25),
        ];
        for s in specs {
            let text = serde_json::to_string(&s).unwrap();
            let back: ProfileSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, s);
        }
        let parsed: ProfileSpec =
            serde_json::from_str(r#"{"variant":"continuous","kernel":{"name":"min"}}"#).unwrap();
        assert_eq!(parsed, ProfileSpec::Continuous { kernel: Kernel::Min });
        let custom: ProfileSpec =
            serde_json::from_str(r#"{"variant":"custom","matrices":{"1":[[0.5]]}}"#).unwrap();
        assert_eq!(custom.variance_at(1, 0, 0).unwrap(), 0.5);
        assert!(serde_json::from_str::<ProfileSpec>(r#"{"variant":"continuous","kernel":{"name":"nope"}}"#).is_err());
    }
}
