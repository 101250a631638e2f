//! Predictor feedback for a plant with input delay `τ`.
//!
//! The plant `ż = Az + B u(t - τ)` is simulated together with its actuator
//! delay line `φ(x, t) = u(t - x)`. The control law feeds back the
//! `τ`-ahead prediction of the state:
//!
//! ```text
//! u(t) = K e^{Aτ} z(t) + ∫₀^τ K e^{Ax} B φ(x, t) dx
//! ```
//!
//! Stepping conventions (all steps have `Δt = Δx`):
//!
//! * the line head always holds the current control `u(t)`, so
//!   `φ(x_i, t) = u(t - x_i)` at every node;
//! * the plant sees the tail linearly interpolated across the step, which
//!   is exact for the piecewise-linear input the line represents;
//! * the trapezoid rule puts weight `Δx/2` on `φ(0, t) = u(t)` itself, so
//!   the new control solves `(I - ½Δx K B) u = K e^{Aτ} z + Σ_{i≥1} …`.
//!
//! With an explicit head (the previous control standing in for the new
//! one) the discrete loop picks up a weakly damped parasitic mode and the
//! compensation is only first-order accurate.

use std::io::Write;

use nalgebra::LU;
use nalgebra::Dyn;

use crate::delay_line::DelayLine;
use crate::error::{check_blow_up, Error, Result};
use crate::numkit::{
    integrate_nodes, mat_exp, sample_exp_kernel, trapezoid_integral, Grid, KernelDirection,
    Matrix, SampledKernel, Vector,
};

/// Gains of the predictor law for a fixed plant, gain and delay.
#[derive(Debug, Clone)]
pub struct PredictorConfig {
    a: Matrix,
    b: Matrix,
    k: Matrix,
    grid: Grid,
    predict_gain: Matrix,
    conv_kernel: SampledKernel,
    head_solver: LU<f64, Dyn, Dyn>,
}

impl PredictorConfig {
    /// `a` is `n×n`, `b` is `n×m`, `k` is `m×n`; the delay line over
    /// `[0, tau]` gets `steps` cells.
    pub fn new(a: &Matrix, b: &Matrix, k: &Matrix, tau: f64, steps: usize) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::shape("PredictorConfig", "square A", format!("{}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::shape("PredictorConfig", format!("B with {n} rows"), b.nrows()));
        }
        if k.nrows() != b.ncols() || k.ncols() != n {
            return Err(Error::shape(
                "PredictorConfig",
                format!("K of shape {}x{n}", b.ncols()),
                format!("{}x{}", k.nrows(), k.ncols()),
            ));
        }
        let grid = Grid::new(tau, steps)?;
        let predict_gain = k * mat_exp(a, tau)?;
        let conv_kernel =
            sample_exp_kernel(a, b, &grid, KernelDirection::Forward)?.premultiply(k)?;
        let m = b.ncols();
        let head = Matrix::identity(m, m) - conv_kernel.sample(0) * grid.weight(0);
        let head_solver = head.lu();
        if !head_solver.is_invertible() {
            return Err(Error::Domain(
                "I - ½Δx K B is singular; refine the grid".into(),
            ));
        }
        Ok(PredictorConfig {
            a: a.clone(),
            b: b.clone(),
            k: k.clone(),
            grid,
            predict_gain,
            conv_kernel,
            head_solver,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.grid.length()
    }

    pub fn dt(&self) -> f64 {
        self.grid.spacing()
    }

    /// `K e^{Aτ}`.
    pub fn predict_gain(&self) -> &Matrix {
        &self.predict_gain
    }

    /// Samples of `K e^{Ax} B`.
    pub fn conv_kernel(&self) -> &SampledKernel {
        &self.conv_kernel
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Control that is consistent with itself sitting at the line head.
    fn consistent_control(&self, z: &Vector, phi: &DelayLine) -> Result<Vector> {
        let rhs = &self.predict_gain * z + integrate_nodes(&self.conv_kernel, phi, 1)?;
        self.head_solver
            .solve(&rhs)
            .ok_or_else(|| Error::Domain("head solve failed".into()))
    }
}

/// Plant state, actuator delay line and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub z: Vector,
    pub phi: DelayLine,
    pub t: f64,
}

impl ClosedLoopState {
    /// Starts from `z0` with zero input history (`u ≡ 0` for `t < 0`).
    pub fn new(cfg: &PredictorConfig, z0: Vector) -> Result<Self> {
        let m = cfg.input_dim();
        Self::with_history(cfg, z0, |_| vec![0.0; m])
    }

    /// Starts from `z0` with past input `history(s)`, `s ∈ [-τ, 0)`. The
    /// value at `s = 0` is replaced by the feedback itself.
    pub fn with_history(
        cfg: &PredictorConfig,
        z0: Vector,
        history: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        if z0.len() != cfg.a.nrows() {
            return Err(Error::shape("ClosedLoopState", cfg.a.nrows(), z0.len()));
        }
        let mut phi = DelayLine::from_history(cfg.grid, cfg.input_dim(), history);
        let u = cfg.consistent_control(&z0, &phi)?;
        phi.set_head(u.as_slice())?;
        Ok(ClosedLoopState { z: z0, phi, t: 0.0 })
    }

    /// Control currently applied at the actuator, `φ(0, t)`.
    pub fn control(&self) -> Vector {
        Vector::from_column_slice(self.phi.head())
    }

    /// Advances plant and delay line by one step `Δt = Δx`.
    pub fn advance(&mut self, cfg: &PredictorConfig) -> Result<()> {
        cfg.grid.ensure_same(self.phi.grid(), "closed_loop_step")?;
        let m = cfg.grid.steps();
        let v0 = Vector::from_column_slice(self.phi.sample(m));
        let v1 = Vector::from_column_slice(self.phi.sample(m - 1));
        let vm = (&v0 + &v1) * 0.5;
        self.z = rk4_affine(&cfg.a, &cfg.b, &self.z, [&v0, &vm, &v1], cfg.dt());
        self.phi.shift_in(&vec![0.0; cfg.input_dim()])?;
        let u = cfg.consistent_control(&self.z, &self.phi)?;
        self.phi.set_head(u.as_slice())?;
        self.t += cfg.dt();
        Ok(())
    }
}

/// Classical RK4 for `ż = Az + Bv(t)` with `v` given at the start, middle and
/// end of the step.
pub(crate) fn rk4_affine(a: &Matrix, b: &Matrix, z: &Vector, v: [&Vector; 3], dt: f64) -> Vector {
    let f = |z: &Vector, v: &Vector| a * z + b * v;
    let k1 = f(z, v[0]);
    let k2 = f(&(z + &k1 * (0.5 * dt)), v[1]);
    let k3 = f(&(z + &k2 * (0.5 * dt)), v[1]);
    let k4 = f(&(z + &k3 * dt), v[2]);
    z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// `K e^{Aτ} z + ∫₀^τ K e^{Ax} B φ(x) dx` evaluated on the current line.
pub fn predictor_feedback(cfg: &PredictorConfig, state: &ClosedLoopState) -> Result<Vector> {
    if state.z.len() != cfg.a.nrows() {
        return Err(Error::shape("predictor_feedback", cfg.a.nrows(), state.z.len()));
    }
    Ok(&cfg.predict_gain * &state.z + trapezoid_integral(&cfg.conv_kernel, &state.phi)?)
}

/// One step of the closed loop, returning the new state.
pub fn closed_loop_step(cfg: &PredictorConfig, state: &ClosedLoopState) -> Result<ClosedLoopState> {
    let mut next = state.clone();
    next.advance(cfg)?;
    Ok(next)
}

/// Logged closed-loop run: `‖z‖`, `‖φ‖_{L²}` and `u` at every step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub norm_z: Vec<f64>,
    pub norm_phi: Vec<f64>,
    pub inputs: Vec<Vector>,
}

impl Trajectory {
    fn record(&mut self, s: &ClosedLoopState) {
        self.times.push(s.t);
        self.norm_z.push(s.z.norm());
        self.norm_phi.push(s.phi.l2_norm());
        self.inputs.push(s.control());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t, norm_z, norm_phi, u_0, …, u_{m-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut header = vec!["t".to_string(), "norm_z".into(), "norm_phi".into()];
        header.extend((0..m).map(|k| format!("u_{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![
                format!("{}", self.times[i]),
                format!("{:e}", self.norm_z[i]),
                format!("{:e}", self.norm_phi[i]),
            ];
            row.extend(self.inputs[i].iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::Domain(format!("horizon must be nonnegative, got {horizon}")));
    }
    Ok((horizon / dt).round() as usize)
}

/// Runs the closed loop over `[0, horizon]`.
pub fn simulate(
    cfg: &PredictorConfig,
    initial: ClosedLoopState,
    horizon: f64,
) -> Result<(Trajectory, ClosedLoopState)> {
    simulate_with(cfg, initial, horizon, |_, _| Ok(()))
}

/// Like [`simulate`], calling `inspect(before, after)` after every step.
pub fn simulate_with(
    cfg: &PredictorConfig,
    initial: ClosedLoopState,
    horizon: f64,
    mut inspect: impl FnMut(&ClosedLoopState, &ClosedLoopState) -> Result<()>,
) -> Result<(Trajectory, ClosedLoopState)> {
    let steps = step_count(horizon, cfg.dt())?;
    let mut traj = Trajectory::default();
    let mut state = initial;
    traj.record(&state);
    for _ in 0..steps {
        let before = state.clone();
        state.advance(cfg)?;
        check_blow_up(state.t, state.z.norm().max(state.phi.max_abs()))?;
        inspect(&before, &state)?;
        traj.record(&state);
    }
    Ok((traj, state))
}

/// Least-squares slope of `ln value` against `t` over the final half of the
/// series.
pub fn decay_rate_estimate(times: &[f64], values: &[f64]) -> Result<f64> {
    let (first, last) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Fit("empty series".into())),
    };
    decay_rate_over(times, values, 0.5 * (first + last), last)
}

/// Least-squares slope of `ln value` against `t` for `t ∈ [from, to]`.
pub fn decay_rate_over(times: &[f64], values: &[f64], from: f64, to: f64) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::shape("decay_rate_over", times.len(), values.len()));
    }
    let window: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= from && t <= to)
        .map(|(&t, &v)| (t, v))
        .collect();
    if window.len() < 10 {
        return Err(Error::Fit(format!(
            "only {} samples in the fit window",
            window.len()
        )));
    }
    if let Some((t, v)) = window.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Fit(format!("non-positive value {v} at t = {t}")));
    }
    // logs relative to the first sample, so a constant series fits exactly 0
    let base = window[0].1.ln();
    let n = window.len() as f64;
    let mt = window.iter().map(|(t, _)| t).sum::<f64>() / n;
    let ml = window.iter().map(|(_, v)| v.ln() - base).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in &window {
        sxy += (t - mt) * (v.ln() - base - ml);
        sxx += (t - mt) * (t - mt);
    }
    Ok(sxy / sxx)
}
