//! Dense linear algebra, matrix exponentials and node-aligned quadrature.
//!
//! Everything here works on the uniform grid that discretizes a delay span
//! `[0, α]`: `M` steps of width `Δx`, `M + 1` nodes including both ends.

use nalgebra::{DMatrix, DVector};

use crate::delay_line::DelayLine;
use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Uniform grid over `[0, length]` with `steps` cells.
///
/// The length is derived from the step count and spacing, never the other
/// way round, so `spacing * steps == length` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    steps: usize,
    spacing: f64,
}

impl Grid {
    /// Grid over `[0, length]` with `steps` cells of width `length / steps`.
    pub fn new(length: f64, steps: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Domain(format!(
                "grid length must be positive and finite, got {length}"
            )));
        }
        Self::with_spacing(length / steps.max(1) as f64, steps)
    }

    pub fn with_spacing(spacing: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Domain(format!(
                "grid spacing must be positive and finite, got {spacing}"
            )));
        }
        Ok(Grid { steps, spacing })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn length(&self) -> f64 {
        self.spacing * self.steps as f64
    }

    /// Number of nodes, `steps + 1`.
    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    /// Coordinate of node `i`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    /// Composite trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.steps {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    pub(crate) fn ensure_same(&self, other: &Grid, context: &'static str) -> Result<()> {
        if self.steps != other.steps || self.spacing != other.spacing {
            return Err(Error::shape(
                context,
                format!("grid {}x{:e}", self.steps, self.spacing),
                format!("grid {}x{:e}", other.steps, other.spacing),
            ));
        }
        Ok(())
    }
}

/// Grid samples of a matrix-valued function `x ↦ K(x)`, one per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel {
    grid: Grid,
    samples: Vec<Matrix>,
}

impl SampledKernel {
    pub fn new(grid: Grid, samples: Vec<Matrix>) -> Result<Self> {
        if samples.len() != grid.nodes() {
            return Err(Error::shape(
                "SampledKernel::new",
                format!("{} samples", grid.nodes()),
                format!("{} samples", samples.len()),
            ));
        }
        let shape = samples[0].shape();
        if let Some(bad) = samples.iter().find(|s| s.shape() != shape) {
            return Err(Error::shape(
                "SampledKernel::new",
                format!("{shape:?}"),
                format!("{:?}", bad.shape()),
            ));
        }
        if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::Domain("kernel samples must be finite".into()));
        }
        Ok(SampledKernel { grid, samples })
    }

    /// Samples `f(x_i)` for every node.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64) -> Matrix) -> Result<Self> {
        let samples = (0..grid.nodes()).map(|i| f(grid.node(i))).collect();
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[Matrix] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Matrix {
        &self.samples[i]
    }

    /// `(rows, cols)` shared by every sample.
    pub fn shape(&self) -> (usize, usize) {
        self.samples[0].shape()
    }

    /// Left-multiplies every sample by `m`.
    pub fn premultiply(&self, m: &Matrix) -> Result<SampledKernel> {
        if m.ncols() != self.shape().0 {
            return Err(Error::shape(
                "SampledKernel::premultiply",
                format!("{} columns", self.shape().0),
                format!("{} columns", m.ncols()),
            ));
        }
        Ok(SampledKernel {
            grid: self.grid,
            samples: self.samples.iter().map(|s| m * s).collect(),
        })
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl FnMut(&Matrix) -> Matrix) -> Result<SampledKernel> {
        Self::new(self.grid, self.samples.iter().map(f).collect())
    }
}

fn ensure_square(a: &Matrix, context: &'static str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::shape(
            context,
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(())
}

/// `e^{A t}` by scaling and squaring with a degree-13 Padé approximant.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square(a, "mat_exp")?;
    if !t.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("mat_exp needs finite input".into()));
    }
    if a.nrows() == 0 {
        return Ok(a.clone());
    }
    let out = (a * t).exp();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "e^(At) overflowed for t = {t}"
        )));
    }
    Ok(out)
}

/// Which end of the grid the exponent is anchored to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelDirection {
    /// `samples[i] = e^{A x_i} V`
    Forward,
    /// `samples[i] = e^{A (α - x_i)} V`
    Reflected,
}

/// Samples `e^{Ax}V` (or the reflected `e^{A(α-x)}V`) on every node.
///
/// Uses a single `mat_exp(A, Δx)` followed by `M` matrix products.
pub fn sample_exp_kernel(
    a: &Matrix,
    v: &Matrix,
    grid: &Grid,
    direction: KernelDirection,
) -> Result<SampledKernel> {
    ensure_square(a, "sample_exp_kernel")?;
    if v.nrows() != a.nrows() {
        return Err(Error::shape(
            "sample_exp_kernel",
            format!("{} rows in V", a.nrows()),
            format!("{} rows", v.nrows()),
        ));
    }
    let step = mat_exp(a, grid.spacing())?;
    let mut samples = Vec::with_capacity(grid.nodes());
    let mut current = v.clone();
    samples.push(current.clone());
    for _ in 0..grid.steps() {
        current = &step * &current;
        samples.push(current.clone());
    }
    if direction == KernelDirection::Reflected {
        samples.reverse();
    }
    SampledKernel::new(*grid, samples)
}

/// Composite trapezoid rule for `∫₀^α K(x) φ(x) dx`.
pub fn trapezoid_integral(kernel: &SampledKernel, profile: &DelayLine) -> Result<Vector> {
    integrate_nodes(kernel, profile, 0)
}

/// Trapezoid sum restricted to nodes `first..=M`, keeping the full-grid weights.
pub(crate) fn integrate_nodes(
    kernel: &SampledKernel,
    profile: &DelayLine,
    first: usize,
) -> Result<Vector> {
    kernel
        .grid()
        .ensure_same(profile.grid(), "trapezoid_integral")?;
    let (rows, cols) = kernel.shape();
    if cols != profile.value_dim() {
        return Err(Error::shape(
            "trapezoid_integral",
            format!("profile of dim {cols}"),
            format!("dim {}", profile.value_dim()),
        ));
    }
    let grid = kernel.grid();
    let mut out = Vector::zeros(rows);
    for i in first..grid.nodes() {
        let w = grid.weight(i);
        let k = kernel.sample(i);
        for (c, &p) in profile.sample(i).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let wp = w * p;
            for r in 0..rows {
                out[r] += k[(r, c)] * wp;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, LN_2};

    #[test]
    fn exp_of_zero_is_identity() {
        let e = mat_exp(&Matrix::zeros(2, 2), 5.0).unwrap();
        assert_eq!(e, Matrix::identity(2, 2));
    }

    #[test]
    fn exp_of_rotation_generator() {
        let j = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = mat_exp(&j, FRAC_PI_2).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!(e, expected, epsilon = 1e-14);
        // general t against [[cos, sin], [-sin, cos]]
        let t = 0.7;
        let e = mat_exp(&j, t).unwrap();
        let expected =
            Matrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert_relative_eq!(e, expected, epsilon = 1e-14);
    }

    #[test]
    fn scalar_exp() {
        let e = mat_exp(&Matrix::from_element(1, 1, 1.0), LN_2).unwrap();
        assert_relative_eq!(e[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn exp_rejects_bad_input() {
        assert!(matches!(
            mat_exp(&Matrix::zeros(2, 3), 1.0),
            Err(Error::Shape { .. })
        ));
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(mat_exp(&a, 1.0), Err(Error::Domain(_))));
        assert!(matches!(
            mat_exp(&Matrix::zeros(2, 2), f64::INFINITY),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn grid_length_is_derived() {
        let g = Grid::new(1.0, 1000).unwrap();
        assert_eq!(g.spacing() * 1000.0, g.length());
        assert_eq!(g.nodes(), 1001);
        assert!(Grid::new(0.0, 10).is_err());
        assert!(Grid::new(1.0, 0).is_err());
    }

    #[test]
    fn kernel_of_zero_generator_is_constant() {
        let g = Grid::new(2.0, 8).unwrap();
        let v = Matrix::from_row_slice(2, 1, &[1.5, -2.0]);
        for dir in [KernelDirection::Forward, KernelDirection::Reflected] {
            let k = sample_exp_kernel(&Matrix::zeros(2, 2), &v, &g, dir).unwrap();
            assert!(k.samples().iter().all(|s| *s == v));
        }
    }

    #[test]
    fn scalar_kernels() {
        let a = -0.8;
        let g = Grid::new(1.5, 30).unwrap();
        let am = Matrix::from_element(1, 1, a);
        let v = Matrix::from_element(1, 1, 2.0);
        let fwd = sample_exp_kernel(&am, &v, &g, KernelDirection::Forward).unwrap();
        for i in 0..g.nodes() {
            assert_relative_eq!(
                fwd.sample(i)[(0, 0)],
                (a * g.node(i)).exp() * 2.0,
                max_relative = 1e-13
            );
        }
        let refl = sample_exp_kernel(&am, &v, &g, KernelDirection::Reflected).unwrap();
        assert_relative_eq!(refl.sample(30)[(0, 0)], 2.0);
        assert_relative_eq!(refl.sample(0)[(0, 0)], (a * 1.5).exp() * 2.0, max_relative = 1e-13);
    }

    #[test]
    fn kernel_shape_mismatch() {
        let g = Grid::new(1.0, 4).unwrap();
        let r = sample_exp_kernel(
            &Matrix::zeros(2, 2),
            &Matrix::zeros(3, 1),
            &g,
            KernelDirection::Forward,
        );
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn trapezoid_basic_cases() {
        let g = Grid::new(0.75, 50).unwrap();
        let b = Matrix::from_row_slice(2, 1, &[3.0, -1.0]);
        let k = SampledKernel::from_fn(g, |_| b.clone()).unwrap();
        let zero = DelayLine::zeros(g, 1);
        assert_eq!(trapezoid_integral(&k, &zero).unwrap(), Vector::zeros(2));
        let ones = DelayLine::from_fn(g, 1, |_| vec![1.0]);
        let v = trapezoid_integral(&k, &ones).unwrap();
        assert_relative_eq!(v[0], 0.75 * 3.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], -0.75, epsilon = 1e-14);
    }

    #[test]
    fn trapezoid_exponential_kernel_second_order() {
        let (a, b, tau): (f64, f64, f64) = (1.3, 0.7, 1.0);
        let exact = b * ((a * tau).exp() - 1.0) / a;
        let mut errs = Vec::new();
        for m in [50, 100, 200, 400] {
            let g = Grid::new(tau, m).unwrap();
            let k = sample_exp_kernel(
                &Matrix::from_element(1, 1, a),
                &Matrix::from_element(1, 1, b),
                &g,
                KernelDirection::Forward,
            )
            .unwrap();
            let ones = DelayLine::from_fn(g, 1, |_| vec![1.0]);
            let v = trapezoid_integral(&k, &ones).unwrap()[0];
            errs.push((v - exact).abs());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "observed order {order}");
        }
    }

    #[test]
    fn trapezoid_grid_mismatch() {
        let k = SampledKernel::from_fn(Grid::new(1.0, 10).unwrap(), |_| {
            Matrix::identity(1, 1)
        })
        .unwrap();
        let line = DelayLine::zeros(Grid::new(1.0, 11).unwrap(), 1);
        assert!(matches!(
            trapezoid_integral(&k, &line),
            Err(Error::Shape { .. })
        ));
    }
}
