//! Controllability and observability maps of the delay lines, the
//! block-triangular transforms built from them, and residual checks for the
//! Sylvester identities they satisfy.
//!
//! For an input delay `τ` the controllability map
//!
//! ```text
//! S_τ φ = ∫₀^τ e^{A(x-τ)} B φ(x) dx
//! ```
//!
//! solves `A S_τ - S_τ G_τ = B C_τ`, where `G_τ = -d/dx` generates the shift
//! on `[0, τ]` and `C_τ φ = φ(τ)`. For an output delay `μ` the observability
//! map `(Ψ_μ z)(x) = -C e^{-Ax} z` solves `G_μ Ψ_μ - Ψ_μ A = B_μ C`, which on
//! the grid reads `-(Ψ_μ z)' = Ψ_μ A z` with `(Ψ_μ z)(0) = -Cz`.
//!
//! With matrices every operator is bounded, so the extension of `Ψ_μ` used
//! for unbounded observation gains coincides with `Ψ_μ` itself.

use std::io::Write;

use crate::delay_line::DelayLine;
use crate::error::{Error, Result};
use crate::numkit::{
    sample_exp_kernel, trapezoid_integral, Grid, KernelDirection, Matrix, SampledKernel, Vector,
};

/// Discretized `S_τ`, with kernel samples `e^{A(x_i - τ)} B`.
#[derive(Debug, Clone)]
pub struct InputMap {
    a: Matrix,
    b: Matrix,
    kernel: SampledKernel,
}

impl InputMap {
    pub fn new(a: &Matrix, b: &Matrix, grid: Grid) -> Result<Self> {
        let kernel = sample_exp_kernel(&(-a), b, &grid, KernelDirection::Reflected)?;
        Ok(InputMap {
            a: a.clone(),
            b: b.clone(),
            kernel,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn grid(&self) -> &Grid {
        self.kernel.grid()
    }

    pub fn tau(&self) -> f64 {
        self.grid().length()
    }

    pub fn kernel(&self) -> &SampledKernel {
        &self.kernel
    }
}

/// Discretized `Ψ_μ`, with kernel samples `-C e^{-A x_i}`.
#[derive(Debug, Clone)]
pub struct OutputMap {
    a: Matrix,
    c: Matrix,
    kernel: SampledKernel,
}

impl OutputMap {
    pub fn new(a: &Matrix, c: &Matrix, grid: Grid) -> Result<Self> {
        if c.ncols() != a.nrows() {
            return Err(Error::shape(
                "OutputMap::new",
                format!("C with {} columns", a.nrows()),
                format!("{} columns", c.ncols()),
            ));
        }
        let at = -a.transpose();
        let kernel = sample_exp_kernel(&at, &(-c.transpose()), &grid, KernelDirection::Forward)?
            .map(|s| s.transpose())?;
        Ok(OutputMap {
            a: a.clone(),
            c: c.clone(),
            kernel,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn grid(&self) -> &Grid {
        self.kernel.grid()
    }

    pub fn mu(&self) -> f64 {
        self.grid().length()
    }

    pub fn kernel(&self) -> &SampledKernel {
        &self.kernel
    }
}

/// `S_τ φ` by the trapezoid rule.
pub fn apply_controllability_map(map: &InputMap, phi: &DelayLine) -> Result<Vector> {
    trapezoid_integral(&map.kernel, phi)
}

/// `(Ψ_μ z)(x_i) = -C e^{-A x_i} z` on every node.
pub fn apply_observability_map(map: &OutputMap, z: &Vector) -> Result<DelayLine> {
    if z.len() != map.a.nrows() {
        return Err(Error::shape(
            "apply_observability_map",
            map.a.nrows(),
            z.len(),
        ));
    }
    let samples: Vec<Vector> = map.kernel.samples().iter().map(|k| k * z).collect();
    DelayLine::from_samples(*map.grid(), &samples)
}

/// How the profile derivative in a residual check was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    Analytic,
    CenteredDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub derivative: DerivativeSource,
}

/// Second-order differences: centered inside, one-sided at the ends.
pub fn centered_derivative(line: &DelayLine) -> Result<DelayLine> {
    let grid = *line.grid();
    let m = grid.steps();
    if m < 2 {
        return Err(Error::Domain(
            "centered differences need at least two grid steps".into(),
        ));
    }
    let h = grid.spacing();
    let d = line.value_dim();
    let mut out = DelayLine::zeros(grid, d);
    for i in 0..=m {
        let v: Vec<f64> = (0..d)
            .map(|k| {
                let f = |j: usize| line.sample(j)[k];
                if i == 0 {
                    (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
                } else if i == m {
                    (3.0 * f(m) - 4.0 * f(m - 1) + f(m - 2)) / (2.0 * h)
                } else {
                    (f(i + 1) - f(i - 1)) / (2.0 * h)
                }
            })
            .collect();
        out.sample_mut(i).copy_from_slice(&v);
    }
    Ok(out)
}

/// Residual of `A S_τ f - S_τ(-f') - B f(τ)` for a profile with `f(0) = 0`.
///
/// `df` supplies the analytic derivative; without it centered differences
/// are used.
pub fn sylvester_residual_input(
    map: &InputMap,
    f: &DelayLine,
    df: Option<&DelayLine>,
) -> Result<Residual> {
    let (derivative, source) = match df {
        Some(d) => (d.clone(), DerivativeSource::Analytic),
        None => (centered_derivative(f)?, DerivativeSource::CenteredDifference),
    };
    let sf = apply_controllability_map(map, f)?;
    let sdf = apply_controllability_map(map, &derivative)?;
    let tail = Vector::from_column_slice(f.tail());
    let r = &map.a * sf + sdf - &map.b * tail;
    Ok(Residual {
        value: r.norm(),
        derivative: source,
    })
}

/// Discrete `L²` residual of `-(Ψ_μ z)' - Ψ_μ A z` over the interior nodes.
///
/// The boundary part of the identity is checked by
/// [`output_boundary_defect`].
pub fn sylvester_residual_output(map: &OutputMap, z: &Vector) -> Result<f64> {
    let grid = *map.grid();
    let m = grid.steps();
    if m < 2 {
        return Err(Error::Domain(
            "output residual needs at least two grid steps".into(),
        ));
    }
    let h = grid.spacing();
    let p = apply_observability_map(map, z)?;
    let q = apply_observability_map(map, &(&map.a * z))?;
    let mut acc = 0.0;
    for i in 1..m {
        for k in 0..p.value_dim() {
            let r = -(p.sample(i + 1)[k] - p.sample(i - 1)[k]) / (2.0 * h) - q.sample(i)[k];
            acc += h * r * r;
        }
    }
    Ok(acc.sqrt())
}

/// `‖(Ψ_μ z)(0) + C z‖`.
pub fn output_boundary_defect(map: &OutputMap, z: &Vector) -> Result<f64> {
    let p = apply_observability_map(map, z)?;
    let cz = &map.c * z;
    Ok((Vector::from_column_slice(p.head()) + cz).norm())
}

/// `‖B u - A S_τ(𝟙 u) - e^{-Aτ} B u‖`, the constant-profile form of
/// `S_τ B_τ = e^{-Aτ} B`.
pub fn smoothing_identity_check(map: &InputMap, u: &Vector) -> Result<f64> {
    if map.a.clone().lu().try_inverse().is_none() {
        return Err(Error::Unsupported(
            "smoothing identity check needs an invertible A".into(),
        ));
    }
    if u.len() != map.b.ncols() {
        return Err(Error::shape("smoothing_identity_check", map.b.ncols(), u.len()));
    }
    let ones = DelayLine::resolvent_profile(0.0, u.as_slice(), *map.grid());
    let s = apply_controllability_map(map, &ones)?;
    let decayed = map.kernel.sample(0) * u;
    Ok((&map.b * u - &map.a * s - decayed).norm())
}

/// Samples of `-C e^{A(μ - x)} F`, the distributed observer gain.
pub fn composed_observer_kernel(
    a: &Matrix,
    c: &Matrix,
    f: &Matrix,
    mu: f64,
    grid: Grid,
) -> Result<SampledKernel> {
    if c.ncols() != a.nrows() {
        return Err(Error::shape(
            "composed_observer_kernel",
            format!("C with {} columns", a.nrows()),
            format!("{} columns", c.ncols()),
        ));
    }
    if (grid.length() - mu).abs() > 1e-12 * mu.max(1.0) {
        return Err(Error::shape(
            "composed_observer_kernel",
            format!("grid of length {mu}"),
            format!("length {}", grid.length()),
        ));
    }
    sample_exp_kernel(a, f, &grid, KernelDirection::Reflected)?.premultiply(&(-c))
}

/// `𝕊(z, φ) = (z + S_τ φ, φ)`; the inverse subtracts.
pub fn s_transform(
    z: &Vector,
    phi: &DelayLine,
    map: &InputMap,
    inverse: bool,
) -> Result<(Vector, DelayLine)> {
    let s = apply_controllability_map(map, phi)?;
    if s.len() != z.len() {
        return Err(Error::shape("s_transform", s.len(), z.len()));
    }
    let z = if inverse { z - s } else { z + s };
    Ok((z, phi.clone()))
}

/// `ℙ(z, ψ) = (z, ψ + Ψ_μ z)`; the inverse subtracts.
pub fn p_transform(
    z: &Vector,
    psi: &DelayLine,
    map: &OutputMap,
    inverse: bool,
) -> Result<(Vector, DelayLine)> {
    let mut out = psi.clone();
    let pz = apply_observability_map(map, z)?;
    out.add_scaled(&pz, if inverse { -1.0 } else { 1.0 })?;
    Ok((z.clone(), out))
}

/// One-step defect of the decoupled input dynamics
/// `z̃' = A z̃ + e^{-Aτ} B u` with `z̃ = z + S_τ φ`:
///
/// `‖z̃₁ - z̃₀ - Δt (A z̃₀ + e^{-Aτ} B u)‖`, where `u` is the value injected
/// at the head during the step.
pub fn input_decoupling_residual(
    map: &InputMap,
    before: (&Vector, &DelayLine),
    after: (&Vector, &DelayLine),
) -> Result<f64> {
    let (z0, _) = s_transform(before.0, before.1, map, false)?;
    let (z1, _) = s_transform(after.0, after.1, map, false)?;
    let u = Vector::from_column_slice(after.1.head());
    let dt = map.grid().spacing();
    let drift = &map.a * &z0 + map.kernel.sample(0) * u;
    Ok((z1 - z0 - drift * dt).norm())
}

/// One row of a grid-refinement table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub check: String,
    pub grid_steps: usize,
    pub residual: f64,
}

/// `log₂(r_k / r_{k+1})` for residuals on successively halved grids.
pub fn observed_orders(residuals: &[f64]) -> Vec<f64> {
    residuals
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect()
}

/// CSV with columns `check_name, grid_steps, residual`.
pub fn write_residual_csv<W: Write>(rows: &[ResidualRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check_name", "grid_steps", "residual"])?;
    for r in rows {
        w.write_record([
            r.check.clone(),
            r.grid_steps.to_string(),
            format!("{:e}", r.residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::mat_exp;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn controllability_map_simple_cases() {
        let g = Grid::new(0.8, 400).unwrap();
        let b = Matrix::from_row_slice(2, 1, &[1.0, -2.0]);
        let map = InputMap::new(&Matrix::zeros(2, 2), &b, g).unwrap();
        let zero = DelayLine::zeros(g, 1);
        assert_eq!(apply_controllability_map(&map, &zero).unwrap(), Vector::zeros(2));
        let ones = DelayLine::from_fn(g, 1, |_| vec![1.0]);
        let s = apply_controllability_map(&map, &ones).unwrap();
        assert_relative_eq!(s[0], 0.8, epsilon = 1e-14);
        assert_relative_eq!(s[1], -1.6, epsilon = 1e-14);

        // scalar a: ∫₀^τ e^{a(x-τ)} b dx = b(1 - e^{-aτ})/a
        let (a, bb, tau) = (1.5, 0.5, 1.0);
        let g = Grid::new(tau, 1000).unwrap();
        let map = InputMap::new(&scalar(a), &scalar(bb), g).unwrap();
        let ones = DelayLine::from_fn(g, 1, |_| vec![1.0]);
        let s = apply_controllability_map(&map, &ones).unwrap()[0];
        let exact = bb * (1.0 - (-a * tau).exp()) / a;
        assert!((s - exact).abs() < 1e-6);
    }

    #[test]
    fn input_map_kernel_endpoints() {
        let a = Matrix::from_row_slice(2, 2, &[0.3, 1.0, -0.4, -0.2]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let tau = 0.9;
        let map = InputMap::new(&a, &b, Grid::new(tau, 90).unwrap()).unwrap();
        assert_eq!(map.kernel().sample(90), &b);
        assert_relative_eq!(
            map.kernel().sample(0).clone(),
            mat_exp(&a, -tau).unwrap() * &b,
            epsilon = 1e-12
        );
    }

    #[test]
    fn observability_map_simple_cases() {
        let g = Grid::new(0.5, 50).unwrap();
        let c = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let map = OutputMap::new(&Matrix::zeros(2, 2), &c, g).unwrap();
        let z0 = apply_observability_map(&map, &Vector::zeros(2)).unwrap();
        assert_eq!(z0.max_abs(), 0.0);
        let z = Vector::from_column_slice(&[0.5, -1.0]);
        let p = apply_observability_map(&map, &z).unwrap();
        assert!(p.iter().all(|s| s == [1.5]));
        assert!(apply_observability_map(&map, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn observability_tail_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 3, 3);
            let c = random_matrix(&mut rng, 2, 3);
            let z = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let mu = 0.7;
            let map = OutputMap::new(&a, &c, Grid::new(mu, 700).unwrap()).unwrap();
            let p = apply_observability_map(&map, &z).unwrap();
            let expected = -(&c * mat_exp(&a, -mu).unwrap() * &z);
            let err = (Vector::from_column_slice(p.tail()) - &expected).norm();
            assert!(err < 1e-10 * expected.norm().max(1.0), "tail defect {err}");
            assert!(output_boundary_defect(&map, &z).unwrap() < 1e-15);
        }
    }

    /// Independent evaluation of `A S f + S f' - B f(τ)` for the scalar
    /// plant `a = b = τ = 1` and `f(x) = x`, by closed-form integrals:
    /// `S f = ∫₀¹ e^{x-1} x dx = e^{-1}`, `S f' = ∫₀¹ e^{x-1} dx = 1 - e^{-1}`,
    /// so the exact residual is `e^{-1} + 1 - e^{-1} - 1 = 0`.
    #[test]
    fn input_residual_scalar_linear_profile() {
        let e1 = (-1.0f64).exp();
        assert_relative_eq!(e1 + (1.0 - e1) - 1.0, 0.0, epsilon = 1e-15);

        let mut res = Vec::new();
        for m in [100, 200, 400, 800] {
            let g = Grid::new(1.0, m).unwrap();
            let map = InputMap::new(&scalar(1.0), &scalar(1.0), g).unwrap();
            let f = DelayLine::from_fn(g, 1, |x| vec![x]);
            let df = DelayLine::from_fn(g, 1, |_| vec![1.0]);
            let r = sylvester_residual_input(&map, &f, Some(&df)).unwrap();
            assert_eq!(r.derivative, DerivativeSource::Analytic);
            res.push(r.value);
        }
        for order in observed_orders(&res) {
            assert!(order >= 1.0, "order {order}");
        }
    }

    #[test]
    fn input_residual_oscillatory_profile() {
        let tau = 1.0;
        let g = Grid::new(tau, 1000).unwrap();
        let map = InputMap::new(&scalar(1.0), &scalar(1.0), g).unwrap();
        let f = DelayLine::from_fn(g, 1, |x| vec![x * (PI * x / tau).sin()]);
        let r = sylvester_residual_input(&map, &f, None).unwrap();
        assert_eq!(r.derivative, DerivativeSource::CenteredDifference);
        assert!(r.value < 1e-3, "residual {}", r.value);
        let zero = DelayLine::zeros(g, 1);
        assert_eq!(sylvester_residual_input(&map, &zero, None).unwrap().value, 0.0);
    }

    #[test]
    fn output_residual_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 3, 3);
        let c = random_matrix(&mut rng, 1, 3);
        let z = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let res: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&m| {
                let map = OutputMap::new(&a, &c, Grid::new(1.0, m).unwrap()).unwrap();
                sylvester_residual_output(&map, &z).unwrap()
            })
            .collect();
        for order in observed_orders(&res) {
            assert!(order >= 1.0, "order {order}");
        }
        let map = OutputMap::new(&Matrix::zeros(3, 3), &c, Grid::new(1.0, 10).unwrap()).unwrap();
        assert_eq!(sylvester_residual_output(&map, &z).unwrap(), 0.0);
        assert_eq!(
            sylvester_residual_output(&map, &Vector::zeros(3)).unwrap(),
            0.0
        );
    }

    #[test]
    fn smoothing_identity() {
        // a = b = τ = 1: A S 𝟙 = 1 - e^{-1}, so B - A S 𝟙 = e^{-1} = e^{-Aτ} B
        let g = Grid::new(1.0, 2000).unwrap();
        let map = InputMap::new(&scalar(1.0), &scalar(1.0), g).unwrap();
        let ones = DelayLine::from_fn(g, 1, |_| vec![1.0]);
        let s = apply_controllability_map(&map, &ones).unwrap()[0];
        assert!((s - (1.0 - (-1.0f64).exp())).abs() < 1e-7);
        assert!(smoothing_identity_check(&map, &Vector::from_element(1, 1.0)).unwrap() < 1e-6);
        assert_eq!(smoothing_identity_check(&map, &Vector::zeros(1)).unwrap(), 0.0);

        let rot = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let map = InputMap::new(&rot, &b, g).unwrap();
        assert!(smoothing_identity_check(&map, &Vector::from_element(1, 1.0)).unwrap() < 1e-6);

        let map = InputMap::new(&Matrix::zeros(2, 2), &b, g).unwrap();
        assert!(matches!(
            smoothing_identity_check(&map, &Vector::from_element(1, 1.0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn observer_kernel() {
        let g = Grid::new(0.5, 50).unwrap();
        let c = Matrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let f = Matrix::from_row_slice(2, 1, &[-2.0, 1.0]);
        let k = composed_observer_kernel(&Matrix::zeros(2, 2), &c, &f, 0.5, g).unwrap();
        let cf = -(&c * &f);
        assert!(k.samples().iter().all(|s| *s == cf));

        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.1]);
        let k = composed_observer_kernel(&a, &c, &f, 0.5, g).unwrap();
        assert_eq!(k.sample(50), &cf);
        assert_relative_eq!(
            k.sample(0).clone(),
            -(&c * mat_exp(&a, 0.5).unwrap() * &f),
            epsilon = 1e-12
        );
        assert!(composed_observer_kernel(&a, &c, &f, 0.6, g).is_err());
        assert!(composed_observer_kernel(&a, &Matrix::zeros(1, 3), &f, 0.5, g).is_err());
    }

    #[test]
    fn transforms_with_zero_data_are_identity() {
        let g = Grid::new(1.0, 20).unwrap();
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let z = Vector::from_column_slice(&[1.0, 2.0]);
        let (zs, phi) = s_transform(&z, &DelayLine::zeros(g, 1), &InputMap::new(&a, &b, g).unwrap(), false).unwrap();
        assert_eq!(zs, z);
        assert_eq!(phi.max_abs(), 0.0);
        let psi = DelayLine::from_fn(g, 1, |x| vec![x]);
        let omap = OutputMap::new(&a, &c, g).unwrap();
        let (zp, psi2) = p_transform(&Vector::zeros(2), &psi, &omap, false).unwrap();
        assert_eq!(zp, Vector::zeros(2));
        assert_eq!(psi2, psi);
    }

    proptest! {
        #[test]
        fn transform_round_trips(
            seed in 0u64..1000,
            inverse_first in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new(0.6, 30).unwrap();
            let a = random_matrix(&mut rng, 3, 3);
            let b = random_matrix(&mut rng, 3, 2);
            let c = random_matrix(&mut rng, 2, 3);
            let z = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let phi = DelayLine::from_fn(g, 2, |_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let imap = InputMap::new(&a, &b, g).unwrap();
            let (z1, p1) = s_transform(&z, &phi, &imap, inverse_first).unwrap();
            let (z2, p2) = s_transform(&z1, &p1, &imap, !inverse_first).unwrap();
            prop_assert!((z2 - &z).norm() < 1e-12);
            prop_assert_eq!(p2, phi.clone());

            let omap = OutputMap::new(&a, &c, g).unwrap();
            let (y1, q1) = p_transform(&z, &phi, &omap, inverse_first).unwrap();
            let (y2, mut q2) = p_transform(&y1, &q1, &omap, !inverse_first).unwrap();
            prop_assert_eq!(y2, z.clone());
            q2.add_scaled(&phi, -1.0).unwrap();
            prop_assert!(q2.max_abs() < 1e-12);
        }

        #[test]
        fn controllability_map_is_linear(
            seed in 0u64..1000,
            s in -3.0f64..3.0,
            t in -3.0f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new(1.0, 40).unwrap();
            let a = random_matrix(&mut rng, 2, 2);
            let b = random_matrix(&mut rng, 2, 1);
            let map = InputMap::new(&a, &b, g).unwrap();
            let p1 = DelayLine::from_fn(g, 1, |_| vec![rng.random_range(-1.0..1.0)]);
            let p2 = DelayLine::from_fn(g, 1, |_| vec![rng.random_range(-1.0..1.0)]);
            let mut mix = p1.clone();
            for i in 0..mix.len() {
                mix.sample_mut(i)[0] = s * p1.sample(i)[0] + t * p2.sample(i)[0];
            }
            let lhs = apply_controllability_map(&map, &mix).unwrap();
            let rhs = apply_controllability_map(&map, &p1).unwrap() * s
                + apply_controllability_map(&map, &p2).unwrap() * t;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
