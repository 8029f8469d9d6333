//! Symmetric kernels on `[0,1]^2`: exact step grids and callables with a
//! quadrature resolution.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::profiles::Kernel;

/// Default midpoint-grid resolution for callable kernels.
pub const DEFAULT_RESOLUTION: usize = 512;

/// Piecewise-constant kernel: cells `[b_a, b_{a+1}) x [b_c, b_{c+1})`, the last
/// cell closed at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGraphon {
    boundaries: Vec<f64>,
    values: Vec<f64>,
}

impl StepGraphon {
    pub fn new(boundaries: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let d = boundaries.len().saturating_sub(1);
        if d == 0 || boundaries[0] != 0.0 || boundaries[d] != 1.0 {
            return Err(Error::InvalidGraphon(
                "cell boundaries must run from 0 to 1".into(),
            ));
        }
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGraphon(
                "cell boundaries must be strictly increasing".into(),
            ));
        }
        if values.len() != d * d {
            return Err(Error::InvalidGraphon(format!(
                "expected {} cell values, got {}",
                d * d,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidGraphon("cell values must be finite and >= 0".into()));
        }
        for a in 0..d {
            for b in 0..a {
                if (values[a * d + b] - values[b * d + a]).abs() > 1e-12 {
                    return Err(Error::InvalidGraphon(format!(
                        "cell values not symmetric at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(StepGraphon { boundaries, values })
    }

    /// `d x d` grid of equal cells with row-major values.
    pub fn uniform(d: usize, values: Vec<f64>) -> Result<Self> {
        let mut boundaries: Vec<f64> = (0..=d).map(|a| a as f64 / d as f64).collect();
        if let Some(last) = boundaries.last_mut() {
            *last = 1.0;
        }
        Self::new(boundaries, values)
    }

    pub fn constant(value: f64) -> Self {
        StepGraphon {
            boundaries: vec![0.0, 1.0],
            values: vec![value],
        }
    }

    pub fn cells(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn widths(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    #[inline]
    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.cells() + b]
    }

    pub fn cell_of(&self, x: f64) -> usize {
        let d = self.cells();
        self.boundaries
            .partition_point(|&b| b <= x)
            .saturating_sub(1)
            .min(d - 1)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.value(self.cell_of(x), self.cell_of(y))
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Self::new(
            self.boundaries.clone(),
            self.values.iter().map(|v| v * lambda).collect(),
        )
    }
}

/// Kernels that are not step functions.
#[derive(Clone)]
pub enum GraphonKernel {
    Constant(f64),
    /// `1_{|x - y| <= p}`
    Band { p: f64 },
    /// `1_{|x - y| >= 1/2}`: the symmetrization of the square upper-triangular
    /// profile.
    TriangularSym,
    /// `sigma(x, y)^2`
    SquaredProfile(Kernel),
    /// Symmetrization of a rectangular `sigma^2` with aspect `c`: zero on the
    /// diagonal blocks split at `c / (1 + c)`.
    SymmetrizedRect { c: f64, kernel: Kernel },
    /// Arbitrary symmetric function; callers guarantee symmetry.
    Fn(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for GraphonKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphonKernel::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            GraphonKernel::Band { p } => f.debug_struct("Band").field("p", p).finish(),
            GraphonKernel::TriangularSym => f.write_str("TriangularSym"),
            GraphonKernel::SquaredProfile(k) => f.debug_tuple("SquaredProfile").field(k).finish(),
            GraphonKernel::SymmetrizedRect { c, kernel } => f
                .debug_struct("SymmetrizedRect")
                .field("c", c)
                .field("kernel", kernel)
                .finish(),
            GraphonKernel::Fn(_) => f.write_str("Fn(..)"),
        }
    }
}

impl GraphonKernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            GraphonKernel::Constant(v) => *v,
            GraphonKernel::Band { p } => f64::from(u8::from((x - y).abs() <= *p)),
            GraphonKernel::TriangularSym => f64::from(u8::from((x - y).abs() >= 0.5)),
            GraphonKernel::SquaredProfile(k) => k.eval(x, y).powi(2),
            GraphonKernel::SymmetrizedRect { c, kernel } => {
                let gamma = c / (1.0 + c);
                let (r, s) = match (x <= gamma, y <= gamma) {
                    (true, false) => (x, y),
                    (false, true) => (y, x),
                    _ => return 0.0,
                };
                kernel
                    .eval(r / gamma, (s - gamma) / (1.0 - gamma))
                    .powi(2)
            }
            GraphonKernel::Fn(f) => f(x, y),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            GraphonKernel::Constant(v) => *v,
            GraphonKernel::Band { .. } | GraphonKernel::TriangularSym => 1.0,
            GraphonKernel::SquaredProfile(k) | GraphonKernel::SymmetrizedRect { kernel: k, .. } => {
                k.sup().powi(2)
            }
            GraphonKernel::Fn(f) => {
                // no closed form; scan a fine grid
                let r = 1024;
                let mut best = 0.0f64;
                for a in 0..=r {
                    for b in 0..=r {
                        best = best.max(f(a as f64 / r as f64, b as f64 / r as f64));
                    }
                }
                best
            }
        }
    }

    /// Area of `{K = 1}` inside a rectangle for `{0,1}`-valued kernels.
    fn indicator_area(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> Option<f64> {
        match self {
            GraphonKernel::Band { p } => Some(strip_area(x0, x1, y0, y1, -*p, *p)),
            GraphonKernel::TriangularSym => {
                let total = (x1 - x0) * (y1 - y0);
                Some(total - strip_area(x0, x1, y0, y1, -0.5, 0.5))
            }
            _ => None,
        }
    }

    /// Mean over a rectangle: exact for constant and indicator kernels,
    /// `sub x sub` midpoint rule otherwise.
    pub fn cell_mean(&self, x0: f64, x1: f64, y0: f64, y1: f64, sub: usize) -> f64 {
        let area = (x1 - x0) * (y1 - y0);
        if let GraphonKernel::Constant(v) = self {
            return *v;
        }
        if let Some(a) = self.indicator_area(x0, x1, y0, y1) {
            return (a / area).clamp(0.0, 1.0);
        }
        let sub = sub.max(1);
        let hx = (x1 - x0) / sub as f64;
        let hy = (y1 - y0) / sub as f64;
        let mut acc = 0.0;
        for a in 0..sub {
            let x = x0 + (a as f64 + 0.5) * hx;
            for b in 0..sub {
                acc += self.eval(x, y0 + (b as f64 + 0.5) * hy);
            }
        }
        acc / (sub * sub) as f64
    }

    /// `int |v - K|` over a rectangle.
    fn abs_diff_integral(&self, v: f64, x0: f64, x1: f64, y0: f64, y1: f64, sub: usize) -> f64 {
        let area = (x1 - x0) * (y1 - y0);
        if let GraphonKernel::Constant(k) = self {
            return (v - k).abs() * area;
        }
        if let Some(ones) = self.indicator_area(x0, x1, y0, y1) {
            let ones = ones.clamp(0.0, area);
            return (v - 1.0).abs() * ones + v.abs() * (area - ones);
        }
        let sub = sub.max(1);
        let hx = (x1 - x0) / sub as f64;
        let hy = (y1 - y0) / sub as f64;
        let mut acc = 0.0;
        for a in 0..sub {
            let x = x0 + (a as f64 + 0.5) * hx;
            for b in 0..sub {
                acc += (v - self.eval(x, y0 + (b as f64 + 0.5) * hy)).abs();
            }
        }
        acc * hx * hy
    }
}

/// Area of `{(x, y) in [x0,x1] x [y0,y1] : lo <= y - x <= hi}`.
///
/// The section length `L(x)` is piecewise linear with kinks where a strip edge
/// passes a rectangle corner, so the trapezoid rule between kinks is exact.
pub fn strip_area(x0: f64, x1: f64, y0: f64, y1: f64, lo: f64, hi: f64) -> f64 {
    let len = |x: f64| ((y1).min(x + hi) - (y0).max(x + lo)).max(0.0);
    let mut knots = vec![x0, x1, y1 - hi, y0 - lo, y0 - hi, y1 - lo];
    knots.retain(|&t| t >= x0 && t <= x1);
    knots.sort_by(f64::total_cmp);
    knots
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (len(w[0]) + len(w[1])))
        .sum()
}

#[derive(Clone, Debug)]
pub struct CallableGraphon {
    pub kernel: GraphonKernel,
    pub resolution: usize,
}

impl CallableGraphon {
    pub fn new(kernel: GraphonKernel, resolution: usize) -> Self {
        CallableGraphon {
            kernel,
            resolution: resolution.max(1),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Graphon {
    Step(StepGraphon),
    Callable(CallableGraphon),
}

impl Graphon {
    pub fn constant(value: f64) -> Self {
        Graphon::Step(StepGraphon::constant(value))
    }

    pub fn callable(kernel: GraphonKernel, resolution: usize) -> Self {
        Graphon::Callable(CallableGraphon::new(kernel, resolution))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Graphon::Step(s) => s.eval(x, y),
            Graphon::Callable(c) => c.kernel.eval(x, y),
        }
    }

    /// `sup W`, the constant `V_0` in the edge bracket `2 sqrt(V_0)`.
    pub fn sup(&self) -> f64 {
        match self {
            Graphon::Step(s) => s.sup(),
            Graphon::Callable(c) => c.kernel.sup(),
        }
    }

    pub fn resolution(&self) -> Option<usize> {
        match self {
            Graphon::Step(_) => None,
            Graphon::Callable(c) => Some(c.resolution),
        }
    }

    pub fn with_resolution(&self, resolution: usize) -> Graphon {
        match self {
            Graphon::Step(_) => self.clone(),
            Graphon::Callable(c) => Graphon::callable(c.kernel.clone(), resolution),
        }
    }

    /// `n x n` grid of cell averages `n^2 int int_{I_a x I_b} W`.
    pub fn discretize(&self, n: usize) -> StepGraphon {
        let n = n.max(1);
        let edges: Vec<f64> = (0..=n).map(|a| a as f64 / n as f64).collect();
        let mut values = vec![0.0; n * n];
        match self {
            Graphon::Step(s) => {
                for a in 0..n {
                    for b in 0..=a {
                        let v = step_rect_mean(s, edges[a], edges[a + 1], edges[b], edges[b + 1]);
                        values[a * n + b] = v;
                        values[b * n + a] = v;
                    }
                }
            }
            Graphon::Callable(c) => {
                let sub = c.resolution.div_ceil(n).max(1);
                for a in 0..n {
                    for b in 0..=a {
                        let v = c
                            .kernel
                            .cell_mean(edges[a], edges[a + 1], edges[b], edges[b + 1], sub);
                        values[a * n + b] = v;
                        values[b * n + a] = v;
                    }
                }
            }
        }
        symmetrize_in_place(&mut values, n);
        StepGraphon::uniform(n, values).expect("cell averages form a valid grid")
    }

    /// Grid on which moments are evaluated: the step grid itself, or the
    /// cell-mean grid at the callable's resolution.
    pub fn quadrature_grid(&self) -> Cow<'_, StepGraphon> {
        match self {
            Graphon::Step(s) => Cow::Borrowed(s),
            Graphon::Callable(c) => Cow::Owned(self.discretize(c.resolution)),
        }
    }
}

fn symmetrize_in_place(values: &mut [f64], n: usize) {
    for a in 0..n {
        for b in 0..a {
            let m = 0.5 * (values[a * n + b] + values[b * n + a]);
            values[a * n + b] = m;
            values[b * n + a] = m;
        }
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

fn step_rect_mean(s: &StepGraphon, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let b = s.boundaries();
    let d = s.cells();
    let mut acc = 0.0;
    for a in 0..d {
        let wx = overlap(x0, x1, b[a], b[a + 1]);
        if wx == 0.0 {
            continue;
        }
        for c in 0..d {
            let wy = overlap(y0, y1, b[c], b[c + 1]);
            if wy > 0.0 {
                acc += wx * wy * s.value(a, c);
            }
        }
    }
    acc / ((x1 - x0) * (y1 - y0))
}

/// `int int |g1 - g2|`: exact for two step grids (common refinement) and for a
/// step grid against an indicator or constant kernel; midpoint rule otherwise.
pub fn l1_distance(g1: &Graphon, g2: &Graphon) -> f64 {
    match (g1, g2) {
        (Graphon::Step(a), Graphon::Step(b)) => step_step_l1(a, b),
        (Graphon::Step(s), Graphon::Callable(c)) | (Graphon::Callable(c), Graphon::Step(s)) => {
            step_callable_l1(s, c)
        }
        (Graphon::Callable(a), Graphon::Callable(b)) => {
            let r = a.resolution.max(b.resolution);
            let h = 1.0 / r as f64;
            let mut acc = 0.0;
            for i in 0..r {
                let x = (i as f64 + 0.5) * h;
                for j in 0..r {
                    let y = (j as f64 + 0.5) * h;
                    acc += (a.kernel.eval(x, y) - b.kernel.eval(x, y)).abs();
                }
            }
            acc * h * h
        }
    }
}

fn merged_boundaries(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|x, y| (*x - *y).abs() <= 1e-15);
    all
}

fn step_step_l1(a: &StepGraphon, b: &StepGraphon) -> f64 {
    let merged = merged_boundaries(a.boundaries(), b.boundaries());
    let mids: Vec<(usize, usize, f64)> = merged
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            (a.cell_of(m), b.cell_of(m), w[1] - w[0])
        })
        .collect();
    let mut acc = 0.0;
    for &(ai, bi, wx) in &mids {
        let mut row = 0.0;
        for &(aj, bj, wy) in &mids {
            row += (a.value(ai, aj) - b.value(bi, bj)).abs() * wy;
        }
        acc += row * wx;
    }
    acc
}

fn step_callable_l1(s: &StepGraphon, c: &CallableGraphon) -> f64 {
    let d = s.cells();
    let sub = c.resolution.div_ceil(d).max(4);
    let bd = s.boundaries();
    let mut acc = 0.0;
    for a in 0..d {
        for b in 0..d {
            acc += c
                .kernel
                .abs_diff_integral(s.value(a, b), bd[a], bd[a + 1], bd[b], bd[b + 1], sub);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_area_matches_geometry() {
        // |y - x| <= 1/2 on the unit square: 1 - 2 * (1/8)
        assert!((strip_area(0.0, 1.0, 0.0, 1.0, -0.5, 0.5) - 0.75).abs() < 1e-15);
        // y - x >= 1/2 within the unit square is a triangle of area 1/8
        assert!((strip_area(0.0, 1.0, 0.0, 1.0, 0.5, 1.0) - 0.125).abs() < 1e-15);
        // fully inside / fully outside
        assert!((strip_area(0.0, 0.1, 0.0, 0.1, -1.0, 1.0) - 0.01).abs() < 1e-17);
        assert_eq!(strip_area(0.0, 0.1, 0.5, 0.6, -0.2, 0.2), 0.0);
    }

    #[test]
    fn strip_area_against_fine_grid() {
        let (x0, x1, y0, y1, lo, hi) = (0.1, 0.45, 0.2, 0.9, -0.13, 0.31);
        let r = 2000;
        let mut count = 0usize;
        for a in 0..r {
            let x = x0 + (a as f64 + 0.5) * (x1 - x0) / r as f64;
            for b in 0..r {
                let y = y0 + (b as f64 + 0.5) * (y1 - y0) / r as f64;
                if (lo..=hi).contains(&(y - x)) {
                    count += 1;
                }
            }
        }
        let grid = count as f64 / (r * r) as f64 * (x1 - x0) * (y1 - y0);
        assert!((strip_area(x0, x1, y0, y1, lo, hi) - grid).abs() < 1e-3 * (x1 - x0));
    }

    #[test]
    fn discretize_examples() {
        let c = Graphon::constant(0.7).discretize(5);
        assert!(c.values().iter().all(|&v| (v - 0.7).abs() < 1e-15));

        let band = Graphon::callable(GraphonKernel::Band { p: 0.5 }, DEFAULT_RESOLUTION);
        let d = band.discretize(2);
        // off-diagonal quarter square [0,1/2]x[1/2,1]: half the area has y - x <= 1/2
        assert_eq!(d.values(), &[1.0, 0.5, 0.5, 1.0]);

        let g = StepGraphon::uniform(2, vec![1.0, 0.25, 0.25, 0.5]).unwrap();
        let back = Graphon::Step(g.clone()).discretize(4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(back.value(i, j), g.value(i / 2, j / 2));
            }
        }
        let same = Graphon::Step(g.clone()).discretize(2);
        assert_eq!(same, g);
    }

    #[test]
    fn l1_examples() {
        let one = Graphon::constant(1.0);
        let zero = Graphon::constant(0.0);
        assert_eq!(l1_distance(&one, &zero), 1.0);
        assert_eq!(l1_distance(&one, &one), 0.0);
        let band = Graphon::callable(GraphonKernel::Band { p: 0.3 }, 64);
        // measure of |x - y| <= 0.3 is 1 - 0.7^2
        assert!((l1_distance(&zero, &band) - 0.51).abs() < 1e-12);
    }

    #[test]
    fn step_eval_and_validation() {
        let g = StepGraphon::new(vec![0.0, 0.25, 1.0], vec![1.0, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(g.eval(0.1, 0.1), 1.0);
        assert_eq!(g.eval(0.25, 0.1), 0.5);
        assert_eq!(g.eval(1.0, 1.0), 0.0);
        assert!(StepGraphon::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(StepGraphon::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.2, 0.3, 1.0]).is_err());
        assert!(StepGraphon::new(vec![0.0, 0.5], vec![1.0]).is_err());
    }

    #[test]
    fn symmetrized_rect_kernel_blocks() {
        let k = GraphonKernel::SymmetrizedRect {
            c: 0.25,
            kernel: Kernel::Constant { value: 1.0 },
        };
        // gamma = 0.2
        assert_eq!(k.eval(0.1, 0.15), 0.0);
        assert_eq!(k.eval(0.5, 0.9), 0.0);
        assert_eq!(k.eval(0.1, 0.9), 1.0);
        assert_eq!(k.eval(0.9, 0.1), 1.0);
    }
}
