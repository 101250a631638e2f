//! Boundary-controlled wave equation on `σ ∈ [0, 1]`:
//!
//! ```text
//! z_tt = z_σσ,   z(0, t) = 0,   z_σ(1, t) = u(t - τ),
//! y(t) = ∫₀¹ m(σ) z_t(σ, t - μ) dσ
//! ```
//!
//! The state is kept in the sine basis `sin ω_n σ`, `ω_n = (2n+1)π/2`:
//! `z = Σ c_n sin ω_n σ`, `z_t = Σ ċ_n sin ω_n σ`. Projecting the equation
//! (integrate `z_σσ sin ω_n σ` by parts twice) gives
//!
//! ```text
//! c̈_n = -ω_n² c_n + 2(-1)ⁿ u(t - τ)
//! ```
//!
//! which each mode integrates exactly for piecewise-constant input. The
//! displacement and velocity coordinates `γ_n = 2∫z sin ω_n σ` and
//! `ζ_n = 2∫ z_t sin ω_n σ / ω_n` used by the series feedback are `c_n` and
//! `ċ_n / ω_n`.
//!
//! With `N` modes the whole thing is the matrix system of
//! [`modal_matrices`], and the series controller and observer below coincide
//! with the generic [`predictor`](crate::predictor) and
//! [`observer`](crate::observer) built from those matrices. The tests check
//! that.

use std::f64::consts::PI;
use std::io::Write;

use crate::delay_line::DelayLine;
use crate::error::{check_blow_up, Error, Result};
use crate::numkit::{Grid, Matrix};

/// `ω_n = (2n + 1)π/2` for `n < modes`.
pub fn frequencies(modes: usize) -> Vec<f64> {
    (0..modes).map(|n| (2 * n + 1) as f64 * PI / 2.0).collect()
}

fn sign(n: usize) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Truncated modal state: displacement `c_n` and velocity `ċ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveModal {
    omega: Vec<f64>,
    pub c: Vec<f64>,
    pub cdot: Vec<f64>,
}

impl WaveModal {
    pub fn zeros(modes: usize) -> Self {
        WaveModal {
            omega: frequencies(modes),
            c: vec![0.0; modes],
            cdot: vec![0.0; modes],
        }
    }

    pub fn from_coeffs(c: Vec<f64>, cdot: Vec<f64>) -> Result<Self> {
        if c.len() != cdot.len() {
            return Err(Error::shape("WaveModal::from_coeffs", c.len(), cdot.len()));
        }
        Ok(WaveModal {
            omega: frequencies(c.len()),
            c,
            cdot,
        })
    }

    /// Projects profiles `z(σ)`, `z_t(σ)` onto the first `modes` sine modes
    /// with a `quad_steps`-interval trapezoid rule.
    pub fn from_profile(
        modes: usize,
        z: impl Fn(f64) -> f64,
        zt: impl Fn(f64) -> f64,
        quad_steps: usize,
    ) -> Result<Self> {
        let grid = Grid::new(1.0, quad_steps)?;
        let mut state = WaveModal::zeros(modes);
        for i in 0..grid.nodes() {
            let s = grid.node(i);
            let (zv, ztv) = (z(s), zt(s));
            let w = 2.0 * grid.weight(i);
            for n in 0..modes {
                let sn = (state.omega[n] * s).sin();
                state.c[n] += w * zv * sn;
                state.cdot[n] += w * ztv * sn;
            }
        }
        Ok(state)
    }

    pub fn modes(&self) -> usize {
        self.c.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// `(z(σ), z_t(σ))` of the truncated series.
    pub fn reconstruct(&self, sigma: f64) -> (f64, f64) {
        let mut z = 0.0;
        let mut zt = 0.0;
        for n in 0..self.modes() {
            let s = (self.omega[n] * sigma).sin();
            z += self.c[n] * s;
            zt += self.cdot[n] * s;
        }
        (z, zt)
    }

    /// `(σ, z, z_t)` at `points + 1` equispaced positions.
    pub fn snapshot(&self, points: usize) -> Vec<(f64, f64, f64)> {
        let points = points.max(1);
        (0..=points)
            .map(|i| {
                let s = i as f64 / points as f64;
                let (z, zt) = self.reconstruct(s);
                (s, z, zt)
            })
            .collect()
    }

    /// CSV with columns `sigma, z, z_t`.
    pub fn write_snapshot_csv<W: Write>(&self, points: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sigma", "z", "z_t"])?;
        for (s, z, zt) in self.snapshot(points) {
            w.write_record([format!("{s}"), format!("{z:e}"), format!("{zt:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Componentwise difference `self - other`.
    pub fn difference(&self, other: &WaveModal) -> Result<WaveModal> {
        if self.modes() != other.modes() {
            return Err(Error::shape("WaveModal::difference", self.modes(), other.modes()));
        }
        Ok(WaveModal {
            omega: self.omega.clone(),
            c: self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect(),
            cdot: self.cdot.iter().zip(&other.cdot).map(|(a, b)| a - b).collect(),
        })
    }
}

/// `E = ¼ Σ (ċ_n² + ω_n² c_n²) = ½ ∫₀¹ (z_σ² + z_t²) dσ`.
pub fn energy(state: &WaveModal) -> f64 {
    0.25 * state
        .omega
        .iter()
        .zip(state.c.iter().zip(&state.cdot))
        .map(|(w, (c, cd))| cd * cd + w * w * c * c)
        .sum::<f64>()
}

/// Cached `cos ω_n Δt`, `sin ω_n Δt` for repeated steps.
#[derive(Debug, Clone)]
struct Propagator {
    dt: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Propagator {
    fn new(omega: &[f64], dt: f64) -> Self {
        Propagator {
            dt,
            cos: omega.iter().map(|w| (w * dt).cos()).collect(),
            sin: omega.iter().map(|w| (w * dt).sin()).collect(),
        }
    }

    /// Exact step of `ċ = v + f1`, `v̇ = -ω² c + f2` with `f1`, `f2` held:
    /// rotate about the equilibrium `(f2/ω², -f1)`.
    fn advance_mode(&self, state: &mut WaveModal, n: usize, f1: f64, f2: f64) {
        let w = state.omega[n];
        let cs = f2 / (w * w);
        let vs = -f1;
        let dc = state.c[n] - cs;
        let dv = state.cdot[n] - vs;
        let (co, si) = (self.cos[n], self.sin[n]);
        state.c[n] = cs + dc * co + dv / w * si;
        state.cdot[n] = vs - dc * w * si + dv * co;
    }

    fn advance(&self, state: &mut WaveModal, u: f64) {
        for n in 0..state.modes() {
            self.advance_mode(state, n, 0.0, 2.0 * sign(n) * u);
        }
    }
}

/// Advances every mode exactly over `dt` with boundary input `u` held.
pub fn modal_step(state: &WaveModal, u: f64, dt: f64) -> WaveModal {
    let mut next = state.clone();
    Propagator::new(&state.omega, dt).advance(&mut next, u);
    next
}

/// `α_n = ∫₀^τ cos(ω_n x) φ(x) dx` by the trapezoid rule.
pub fn alpha_coeffs(phi: &DelayLine, omega: &[f64]) -> Result<Vec<f64>> {
    weighted_coeffs(phi, omega, f64::cos, "alpha_coeffs")
}

/// `β_n = ∫₀^τ sin(ω_n x) φ(x) dx`. The feedback does not use these; they
/// are kept for diagnostics.
pub fn beta_coeffs(phi: &DelayLine, omega: &[f64]) -> Result<Vec<f64>> {
    weighted_coeffs(phi, omega, f64::sin, "beta_coeffs")
}

fn weighted_coeffs(
    phi: &DelayLine,
    omega: &[f64],
    f: fn(f64) -> f64,
    context: &'static str,
) -> Result<Vec<f64>> {
    if phi.value_dim() != 1 {
        return Err(Error::shape(context, "scalar line", phi.value_dim()));
    }
    let grid = phi.grid();
    Ok(omega
        .iter()
        .map(|w| {
            (0..grid.nodes())
                .map(|i| grid.weight(i) * f(w * grid.node(i)) * phi.sample(i)[0])
                .sum()
        })
        .collect())
}

/// Sine coefficients `f_n = (2/ω_n) ∫₀¹ m(σ) sin ω_n σ dσ` of the shaping
/// function.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingCoeffs {
    f: Vec<f64>,
}

impl ShapingCoeffs {
    pub fn new(f: Vec<f64>) -> Self {
        ShapingCoeffs { f }
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn modes(&self) -> usize {
        self.f.len()
    }

    /// `Σ f_n² ω_n² / 2`, the value of the observer line kernel at `x = μ`
    /// per unit `k₂`.
    pub fn kernel_sum(&self) -> f64 {
        let omega = frequencies(self.modes());
        self.f.iter().zip(&omega).map(|(f, w)| f * f * w * w / 2.0).sum()
    }
}

/// `f_n` from samples of `m` at `samples.len()` equispaced points of
/// `[0, 1]` (trapezoid rule).
pub fn shaping_coeffs(samples: &[f64], omega: &[f64]) -> Result<ShapingCoeffs> {
    if samples.len() < 2 {
        return Err(Error::shape("shaping_coeffs", "at least 2 samples", samples.len()));
    }
    let grid = Grid::new(1.0, samples.len() - 1)?;
    let f = omega
        .iter()
        .map(|w| {
            let integral: f64 = samples
                .iter()
                .enumerate()
                .map(|(i, m)| grid.weight(i) * m * (w * grid.node(i)).sin())
                .sum();
            2.0 / w * integral
        })
        .collect();
    Ok(ShapingCoeffs { f })
}

/// Exact `f_n` for the indicator of `[lo, hi] ⊂ [0, 1]`:
/// `f_n = 2 (cos ω_n lo - cos ω_n hi) / ω_n²`.
pub fn bump_coeffs(lo: f64, hi: f64, omega: &[f64]) -> Result<ShapingCoeffs> {
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::Domain(format!("bump [{lo}, {hi}] must satisfy 0 ≤ lo < hi ≤ 1")));
    }
    Ok(ShapingCoeffs {
        f: omega
            .iter()
            .map(|w| 2.0 * ((w * lo).cos() - (w * hi).cos()) / (w * w))
            .collect(),
    })
}

fn check_modes(state: &WaveModal, f: &ShapingCoeffs, context: &'static str) -> Result<()> {
    if state.modes() != f.modes() {
        return Err(Error::shape(context, state.modes(), f.modes()));
    }
    Ok(())
}

/// `y = ∫ m z_t dσ = Σ ċ_n f_n ω_n / 2`.
pub fn wave_measurement(state: &WaveModal, f: &ShapingCoeffs) -> Result<f64> {
    check_modes(state, f, "wave_measurement")?;
    Ok(measurement(state, f))
}

fn measurement(state: &WaveModal, f: &ShapingCoeffs) -> f64 {
    state
        .cdot
        .iter()
        .zip(&f.f)
        .zip(&state.omega)
        .map(|((cd, f), w)| cd * f * w / 2.0)
        .sum()
}

/// Series feedback
/// `u = -2k₁ Σ α_n - k₁ Σ (-1)ⁿ [ċ_n cos ω_n τ - ω_n c_n sin ω_n τ]`
/// on the current line `φ` over `[0, τ]`.
pub fn wave_predictor_feedback(state: &WaveModal, phi: &DelayLine, k1: f64, tau: f64) -> Result<f64> {
    if (phi.grid().length() - tau).abs() > 1e-12 * tau.max(1.0) {
        return Err(Error::shape(
            "wave_predictor_feedback",
            format!("line of length {tau}"),
            phi.grid().length(),
        ));
    }
    let alpha = alpha_coeffs(phi, &state.omega)?;
    Ok(-2.0 * k1 * alpha.iter().sum::<f64>() + k1 * predicted_velocity(state, tau))
}

/// `-Σ (-1)ⁿ [ċ_n cos ω_n τ - ω_n c_n sin ω_n τ]`, i.e. minus the boundary
/// velocity the free system would have after `τ`.
fn predicted_velocity(state: &WaveModal, tau: f64) -> f64 {
    -(0..state.modes())
        .map(|n| {
            let w = state.omega[n];
            sign(n) * (state.cdot[n] * (w * tau).cos() - w * state.c[n] * (w * tau).sin())
        })
        .sum::<f64>()
}

/// Series predictor for a fixed truncation, gain and delay grid.
#[derive(Debug, Clone)]
pub struct WaveController {
    k1: f64,
    grid: Grid,
    omega: Vec<f64>,
    /// `-2k₁ w_i Σ_n cos ω_n x_i`: trapezoid weights of the `α` sum.
    node_weights: Vec<f64>,
    /// per-mode factors of the state term
    vel_gain: Vec<f64>,
    disp_gain: Vec<f64>,
}

impl WaveController {
    pub fn new(k1: f64, modes: usize, grid: Grid) -> Result<Self> {
        if !(k1 > 0.0) {
            return Err(Error::Domain(format!("k1 must be positive, got {k1}")));
        }
        let omega = frequencies(modes);
        let tau = grid.length();
        let node_weights = (0..grid.nodes())
            .map(|i| {
                let x = grid.node(i);
                -2.0 * k1 * grid.weight(i) * omega.iter().map(|w| (w * x).cos()).sum::<f64>()
            })
            .collect();
        let vel_gain = (0..modes).map(|n| -k1 * sign(n) * (omega[n] * tau).cos()).collect();
        let disp_gain = (0..modes)
            .map(|n| k1 * sign(n) * omega[n] * (omega[n] * tau).sin())
            .collect();
        Ok(WaveController {
            k1,
            grid,
            omega,
            node_weights,
            vel_gain,
            disp_gain,
        })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.grid.length()
    }

    pub fn modes(&self) -> usize {
        self.omega.len()
    }

    /// Control consistent with itself at the line head:
    /// `u (1 + k₁ N Δx) = (everything else)`.
    fn consistent_control(&self, state: &WaveModal, phi: &DelayLine) -> f64 {
        let mut rest = 0.0;
        for i in 1..self.grid.nodes() {
            rest += self.node_weights[i] * phi.sample(i)[0];
        }
        for n in 0..state.modes() {
            rest += self.vel_gain[n] * state.cdot[n] + self.disp_gain[n] * state.c[n];
        }
        rest / (1.0 - self.node_weights[0])
    }
}

/// Observer gains for measurement weight `m` and gain `k₂`.
#[derive(Debug, Clone)]
pub struct WaveObserverGains {
    k2: f64,
    grid: Grid,
    shaping: ShapingCoeffs,
    /// `k₂ f_n sin ω_n μ`, displacement gain
    g1: Vec<f64>,
    /// `k₂ f_n ω_n cos ω_n μ`, velocity gain
    g2: Vec<f64>,
    /// `k₂ Σ (f_n² ω_n² / 2) cos ω_n (μ - x_i)`
    line_kernel: Vec<f64>,
}

impl WaveObserverGains {
    pub fn new(k2: f64, shaping: ShapingCoeffs, grid: Grid) -> Result<Self> {
        if !(k2 > 0.0) {
            return Err(Error::Domain(format!("k2 must be positive, got {k2}")));
        }
        let omega = frequencies(shaping.modes());
        let mu = grid.length();
        let f = shaping.values();
        let g1 = (0..f.len()).map(|n| k2 * f[n] * (omega[n] * mu).sin()).collect();
        let g2 = (0..f.len())
            .map(|n| k2 * f[n] * omega[n] * (omega[n] * mu).cos())
            .collect();
        let line_kernel = (0..grid.nodes())
            .map(|i| {
                let x = grid.node(i);
                k2 * (0..f.len())
                    .map(|n| f[n] * f[n] * omega[n] * omega[n] / 2.0 * (omega[n] * (mu - x)).cos())
                    .sum::<f64>()
            })
            .collect();
        Ok(WaveObserverGains {
            k2,
            grid,
            shaping,
            g1,
            g2,
            line_kernel,
        })
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mu(&self) -> f64 {
        self.grid.length()
    }

    pub fn shaping(&self) -> &ShapingCoeffs {
        &self.shaping
    }

    pub fn displacement_gain(&self) -> &[f64] {
        &self.g1
    }

    pub fn velocity_gain(&self) -> &[f64] {
        &self.g2
    }

    pub fn line_kernel(&self) -> &[f64] {
        &self.line_kernel
    }
}

/// Observer estimate: modal state and predicted-output line on `[0, μ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveObserver {
    pub state_hat: WaveModal,
    pub psi_hat: DelayLine,
    pub t: f64,
}

impl WaveObserver {
    /// Zero estimate with an empty line.
    pub fn zeros(gains: &WaveObserverGains) -> Self {
        WaveObserver {
            state_hat: WaveModal::zeros(gains.shaping.modes()),
            psi_hat: DelayLine::zeros(gains.grid, 1),
            t: 0.0,
        }
    }

    fn advance_with(&mut self, gains: &WaveObserverGains, prop: &Propagator, y: f64, u: f64) -> f64 {
        let e = y - self.psi_hat.tail()[0];
        for n in 0..self.state_hat.modes() {
            prop.advance_mode(&mut self.state_hat, n, gains.g1[n] * e, gains.g2[n] * e + 2.0 * sign(n) * u);
        }
        let head = measurement(&self.state_hat, &gains.shaping);
        // shift, boundary write, then the source on the interior nodes
        self.psi_hat
            .shift_in(&[head])
            .expect("scalar line");
        for i in 1..self.psi_hat.len() {
            self.psi_hat.sample_mut(i)[0] += prop.dt * gains.line_kernel[i] * e;
        }
        self.t += prop.dt;
        e
    }
}

fn check_observer(gains: &WaveObserverGains, obs: &WaveObserver) -> Result<()> {
    check_modes(&obs.state_hat, &gains.shaping, "wave_observer_step")?;
    gains.grid.ensure_same(obs.psi_hat.grid(), "wave_observer_step")?;
    if obs.psi_hat.value_dim() != 1 {
        return Err(Error::shape("wave_observer_step", "scalar line", obs.psi_hat.value_dim()));
    }
    Ok(())
}

/// One observer step with measurement `y` and plant input `u` held over
/// `Δt = Δx`. Returns the new estimate and the innovation `y - ψ̂(μ)`.
pub fn wave_observer_step(
    gains: &WaveObserverGains,
    obs: &WaveObserver,
    y: f64,
    u: f64,
) -> Result<(WaveObserver, f64)> {
    check_observer(gains, obs)?;
    let prop = Propagator::new(obs.state_hat.omega(), gains.grid.spacing());
    let mut next = obs.clone();
    let e = next.advance_with(gains, &prop, y, u);
    Ok((next, e))
}

/// Matrices of the `N`-mode truncation in the coordinates
/// `(c_0, ċ_0, c_1, ċ_1, …)`: `A` (block rotations), `B` (boundary input),
/// `C` (averaged velocity, needs `f`).
pub fn modal_matrices(f: &ShapingCoeffs) -> (Matrix, Matrix, Matrix) {
    let n = f.modes();
    let omega = frequencies(n);
    let mut a = Matrix::zeros(2 * n, 2 * n);
    let mut b = Matrix::zeros(2 * n, 1);
    let mut c = Matrix::zeros(1, 2 * n);
    for k in 0..n {
        a[(2 * k, 2 * k + 1)] = 1.0;
        a[(2 * k + 1, 2 * k)] = -omega[k] * omega[k];
        b[(2 * k + 1, 0)] = 2.0 * sign(k);
        c[(0, 2 * k + 1)] = f.values()[k] * omega[k] / 2.0;
    }
    (a, b, c)
}

/// Gain `K` with `K z = -k₁ Σ (-1)ⁿ ċ_n` (truncated boundary velocity
/// feedback) and detection gain `F` with velocity entries `-k₂ f_n ω_n`,
/// in the coordinates of [`modal_matrices`].
pub fn modal_gains(k1: f64, k2: f64, f: &ShapingCoeffs) -> (Matrix, Matrix) {
    let n = f.modes();
    let omega = frequencies(n);
    let mut k = Matrix::zeros(1, 2 * n);
    let mut fd = Matrix::zeros(2 * n, 1);
    for j in 0..n {
        k[(0, 2 * j + 1)] = -k1 * sign(j);
        fd[(2 * j + 1, 0)] = -k2 * f.values()[j] * omega[j];
    }
    (k, fd)
}

/// Flattens a modal state into `(c_0, ċ_0, c_1, ċ_1, …)`.
pub fn to_vector(state: &WaveModal) -> crate::numkit::Vector {
    crate::numkit::Vector::from_iterator(
        2 * state.modes(),
        state.c.iter().zip(&state.cdot).flat_map(|(c, cd)| [*c, *cd]),
    )
}

/// Wave plant with its actuator line (when a controller is present) and its
/// sensor line.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePlant {
    pub state: WaveModal,
    /// `φ(x, t) = u(t - x)` on `[0, τ]`; `None` when running open loop.
    pub phi: Option<DelayLine>,
    /// `ψ(x, t) = y_0(t - x)` on `[0, μ]`; `y = ψ(μ, t)`.
    pub psi: DelayLine,
    pub t: f64,
}

impl WavePlant {
    /// Plant at `state` with zero past input and the sensor line holding the
    /// current reading.
    pub fn new(
        state: WaveModal,
        controller: Option<&WaveController>,
        gains: &WaveObserverGains,
    ) -> Result<Self> {
        check_modes(&state, &gains.shaping, "WavePlant")?;
        let phi = match controller {
            Some(ctrl) => {
                if ctrl.modes() != state.modes() {
                    return Err(Error::shape("WavePlant", state.modes(), ctrl.modes()));
                }
                if (ctrl.grid.spacing() - gains.grid.spacing()).abs() > 1e-15 {
                    return Err(Error::Config(format!(
                        "input and output delay lines need one step: Δx = {} vs {}",
                        ctrl.grid.spacing(),
                        gains.grid.spacing()
                    )));
                }
                let mut phi = DelayLine::zeros(ctrl.grid, 1);
                phi.set_head(&[ctrl.consistent_control(&state, &phi)])?;
                Some(phi)
            }
            None => None,
        };
        let y0 = measurement(&state, &gains.shaping);
        let psi = DelayLine::from_fn(gains.grid, 1, |_| vec![y0]);
        Ok(WavePlant { state, phi, psi, t: 0.0 })
    }

    /// Commanded control `φ(0, t)` (0 open loop).
    pub fn control(&self) -> f64 {
        self.phi.as_ref().map_or(0.0, |p| p.head()[0])
    }

    /// Delayed measurement `y(t) = ψ(μ, t)`.
    pub fn measurement(&self) -> f64 {
        self.psi.tail()[0]
    }

    /// Input reaching the boundary during the next step (midpoint of the
    /// linear interpolant between the two tail nodes).
    fn boundary_input(&self) -> f64 {
        match &self.phi {
            Some(phi) => {
                let m = phi.len() - 1;
                0.5 * (phi.sample(m)[0] + phi.sample(m - 1)[0])
            }
            None => 0.0,
        }
    }
}

/// Logged wave run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaveRun {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// commanded control `φ(0, t)`
    pub u: Vec<f64>,
    /// delayed measurement
    pub y: Vec<f64>,
    /// energy of `plant - estimate`
    pub err_energy: Vec<f64>,
    /// `max_x |ψ̌|`, `ψ̌ = (ψ - ψ̂) + Ψ_μ(z - ẑ)`; empty unless requested
    pub transformed_line_max: Vec<f64>,
}

impl WaveRun {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t, energy, u, y, err_energy`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "energy", "u", "y", "err_energy"])?;
        for i in 0..self.len() {
            w.write_record([
                format!("{}", self.times[i]),
                format!("{:e}", self.energy[i]),
                format!("{:e}", self.u[i]),
                format!("{:e}", self.y[i]),
                format!("{:e}", self.err_energy[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sampling options for [`simulate_wave`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveRunOptions {
    /// record every `record_every`-th step (1 = all)
    pub record_every: usize,
    /// also compute `max |ψ̌|` at recorded steps
    pub transformed_line: bool,
}

impl Default for WaveRunOptions {
    fn default() -> Self {
        WaveRunOptions {
            record_every: 1,
            transformed_line: false,
        }
    }
}

/// `Ψ_μ` in modal form: `(Ψ_μ z)(x) = -Σ (f_n ω_n/2)(ω_n c_n sin ω_n x + ċ_n cos ω_n x)`.
struct ModalObservability {
    sin: Vec<Vec<f64>>,
    cos: Vec<Vec<f64>>,
    weight: Vec<f64>,
}

impl ModalObservability {
    fn new(gains: &WaveObserverGains) -> Self {
        let omega = frequencies(gains.shaping.modes());
        let grid = gains.grid;
        let row = |f: fn(f64) -> f64| -> Vec<Vec<f64>> {
            (0..grid.nodes())
                .map(|i| omega.iter().map(|w| f(w * grid.node(i))).collect())
                .collect()
        };
        ModalObservability {
            sin: row(f64::sin),
            cos: row(f64::cos),
            weight: gains
                .shaping
                .values()
                .iter()
                .zip(&omega)
                .map(|(f, w)| f * w / 2.0)
                .collect(),
        }
    }

    fn transformed_max(&self, plant: &WavePlant, obs: &WaveObserver) -> f64 {
        let ez = plant.state.difference(&obs.state_hat).expect("matching modes");
        let w = ez.omega();
        let mut max = 0.0f64;
        for i in 0..self.sin.len() {
            let mut pz = 0.0;
            for n in 0..ez.modes() {
                pz -= self.weight[n] * (w[n] * ez.c[n] * self.sin[i][n] + ez.cdot[n] * self.cos[i][n]);
            }
            let epsi = plant.psi.sample(i)[0] - obs.psi_hat.sample(i)[0];
            max = max.max((epsi + pz).abs());
        }
        max
    }
}

/// Runs plant, optional series predictor and series observer in lockstep
/// over `[0, horizon]`. Without a controller the boundary input is zero.
pub fn simulate_wave(
    controller: Option<&WaveController>,
    gains: &WaveObserverGains,
    plant: WavePlant,
    observer: WaveObserver,
    horizon: f64,
    options: WaveRunOptions,
) -> Result<(WaveRun, WavePlant, WaveObserver)> {
    check_observer(gains, &observer)?;
    if plant.t != observer.t {
        return Err(Error::Config(format!(
            "plant clock {} differs from observer clock {}",
            plant.t, observer.t
        )));
    }
    if plant.phi.is_some() != controller.is_some() {
        return Err(Error::Config("plant actuator line and controller must come together".into()));
    }
    if let (Some(ctrl), Some(phi)) = (controller, &plant.phi) {
        ctrl.grid.ensure_same(phi.grid(), "simulate_wave")?;
    }
    gains.grid.ensure_same(plant.psi.grid(), "simulate_wave")?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::Domain(format!("horizon must be nonnegative, got {horizon}")));
    }
    let dt = gains.grid.spacing();
    let prop = Propagator::new(plant.state.omega(), dt);
    let obs_map = options.transformed_line.then(|| ModalObservability::new(gains));
    let steps = (horizon / dt).round() as usize;
    let every = options.record_every.max(1);

    let mut run = WaveRun::default();
    let (mut plant, mut obs) = (plant, observer);
    let record = |run: &mut WaveRun, plant: &WavePlant, obs: &WaveObserver| {
        run.times.push(plant.t);
        run.energy.push(energy(&plant.state));
        run.u.push(plant.control());
        run.y.push(plant.measurement());
        let err = plant.state.difference(&obs.state_hat).expect("matching modes");
        run.err_energy.push(energy(&err));
        if let Some(map) = &obs_map {
            run.transformed_line_max.push(map.transformed_max(plant, obs));
        }
    };
    record(&mut run, &plant, &obs);
    for k in 1..=steps {
        let u = plant.boundary_input();
        obs.advance_with(gains, &prop, plant.measurement(), u);
        prop.advance(&mut plant.state, u);
        let y0 = measurement(&plant.state, &gains.shaping);
        plant.psi.shift_in(&[y0])?;
        if let (Some(ctrl), Some(phi)) = (controller, plant.phi.as_mut()) {
            phi.shift_in(&[0.0])?;
            let head = ctrl.consistent_control(&plant.state, phi);
            phi.set_head(&[head])?;
        }
        plant.t += dt;
        check_blow_up(plant.t, energy(&plant.state).sqrt().max(plant.control().abs()))?;
        if k % every == 0 || k == steps {
            record(&mut run, &plant, &obs);
        }
    }
    Ok((run, plant, obs))
}

/// `max E(t + window) / E(t)` over recorded samples (uniform spacing).
pub fn envelope_ratio(times: &[f64], energy: &[f64], window: f64) -> Result<f64> {
    if times.len() != energy.len() || times.len() < 2 {
        return Err(Error::shape("envelope_ratio", times.len(), energy.len()));
    }
    let dt = times[1] - times[0];
    let lag = (window / dt).round() as usize;
    if lag == 0 || lag >= times.len() {
        return Err(Error::Domain(format!("window {window} does not fit the series")));
    }
    let mut rho = 0.0f64;
    for i in 0..times.len() - lag {
        if !(energy[i] > 0.0) {
            return Err(Error::Fit(format!("non-positive energy at t = {}", times[i])));
        }
        rho = rho.max(energy[i + lag] / energy[i]);
    }
    Ok(rho)
}
