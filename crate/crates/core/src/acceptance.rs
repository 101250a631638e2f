//! End-to-end numerical checks with pinned tolerances.
//!
//! Each criterion builds its scenario from scratch, runs it and reports a
//! single pass/fail verdict with the measured quantity. The `acceptance`
//! test target and `delaycomp verify-all` both run [`criteria`].

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::delay_line::DelayLine;
use crate::error::Result;
use crate::numkit::{mat_exp, Grid, Matrix, Vector};
use crate::observer::{precompute_gains, simulate_with_plant, LinearPlant, ObserverState, OutputDelayPlant};
use crate::operator_maps::{
    apply_observability_map, input_decoupling_residual, observed_orders, output_boundary_defect,
    smoothing_identity_check, sylvester_residual_input, sylvester_residual_output, InputMap,
    OutputMap, ResidualRow,
};
use crate::predictor::{decay_rate_over, simulate, simulate_with, ClosedLoopState, PredictorConfig};
use crate::reference::{energy_norm_difference, leapfrog_wave};
use crate::wave::{
    bump_coeffs, envelope_ratio, frequencies, modal_step, simulate_wave, WaveController, WaveModal,
    WaveObserver, WaveObserverGains, WavePlant, WaveRunOptions,
};

/// Relative tracking error allowed in P1.
pub const P1_TOL: f64 = 1e-3;
/// Minimum observed order and maximum residual at the finest grid in P2.
pub const P2_MIN_ORDER: f64 = 1.0;
pub const P2_MAX_RESIDUAL: f64 = 1e-3;
/// P3 bounds.
pub const P3_SMOOTHING_TOL: f64 = 1e-6;
pub const P3_TAIL_TOL: f64 = 1e-10;
/// P5: the N = 32 envelope may exceed the reference ratio by this factor,
/// and a rerun of the reference must reproduce it within this fraction.
pub const P5_ENVELOPE_SLACK: f64 = 1.1;
pub const P5_REPRODUCTION_TOL: f64 = 0.1;
/// `max E(t+4)/E(t)` of the reference run (N = 64, Δx = 5e-4), locked from
/// the run in `regenerate_p5_reference`.
pub const P5_RHO_REF: f64 = 0.105636;
/// P6: fitted rate within this fraction of the slowest eigenvalue rate.
pub const P6_RATE_TOL: f64 = 0.15;
/// P7: error-energy reduction required between `t = μ` and `t = 30`.
pub const P7_DECAY_FACTOR: f64 = 1e-2;
/// P9: energy-norm discrepancy between modal and finite-difference solvers.
pub const P9_TOL: f64 = 1e-3;

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Report {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: {} [{:.2} s, budget {} s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

/// A named check with its runtime budget.
#[derive(Clone, Copy)]
pub struct Criterion {
    pub id: &'static str,
    pub title: &'static str,
    pub budget: Duration,
    check: fn() -> Result<(bool, String)>,
}

impl fmt::Debug for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Criterion").field("id", &self.id).finish()
    }
}

impl Criterion {
    /// Runs the check; an error counts as a failure and is reported.
    pub fn run(&self) -> Report {
        let start = Instant::now();
        let (passed, detail) = match (self.check)() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        Report {
            id: self.id,
            title: self.title,
            passed,
            detail,
            elapsed: start.elapsed(),
            budget: self.budget,
        }
    }
}

const fn criterion(
    id: &'static str,
    title: &'static str,
    secs: u64,
    check: fn() -> Result<(bool, String)>,
) -> Criterion {
    Criterion {
        id,
        title,
        budget: Duration::from_secs(secs),
        check,
    }
}

/// All criteria in order.
pub fn criteria() -> &'static [Criterion] {
    const ALL: [Criterion; 9] = [
        criterion("P1", "exact compensation", 2, p1),
        criterion("P2", "input Sylvester residual", 1, p2),
        criterion("P3", "gain identities", 1, p3),
        criterion("P4", "input decoupling", 2, p4),
        criterion("P5", "wave closed-loop envelope", 30, p5),
        criterion("P6", "observer rate", 2, p6),
        criterion("P7", "wave observer", 30, p7),
        criterion("P8", "cascade vanishing", 2, p8),
        criterion("P9", "modal vs finite differences", 10, p9),
    ];
    &ALL
}

/// Looks up a criterion by id (`"P1"` … `"P9"`).
pub fn criterion_by_id(id: &str) -> Option<&'static Criterion> {
    criteria().iter().find(|c| c.id.eq_ignore_ascii_case(id))
}

fn scalar(v: f64) -> Matrix {
    Matrix::from_element(1, 1, v)
}

const P1_DT: f64 = 1e-3;

fn p1_setup() -> Result<(PredictorConfig, ClosedLoopState)> {
    let cfg = PredictorConfig::new(&scalar(1.0), &scalar(1.0), &scalar(-2.0), 1.0, 1000)?;
    let s0 = ClosedLoopState::new(&cfg, Vector::from_element(1, 1.0))?;
    Ok((cfg, s0))
}

/// Max relative deviation of `z(t)` from `e^{-(t-1)} z(1)` on `[1, 10]`.
pub fn p1_error() -> Result<f64> {
    let (cfg, s0) = p1_setup()?;
    let (traj, _) = simulate(&cfg, s0, 10.0)?;
    let flush = (1.0 / P1_DT).round() as usize;
    // ‖z‖ is logged; the scalar z keeps its sign on this run
    let z1 = traj.norm_z[flush];
    Ok((flush..traj.len())
        .map(|i| {
            let target = (-((i - flush) as f64) * P1_DT).exp() * z1;
            (traj.norm_z[i] - target).abs() / target
        })
        .fold(0.0, f64::max))
}

fn p1() -> Result<(bool, String)> {
    let err = p1_error()?;
    Ok((err <= P1_TOL, format!("max relative error {err:.2e} (tol {P1_TOL:e})")))
}

/// Residual rows of the input and output Sylvester identities on `levels`.
pub fn sylvester_rows(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    tau: f64,
    mu: f64,
    levels: &[usize],
) -> Result<Vec<ResidualRow>> {
    let mut rows = Vec::new();
    let m = b.ncols();
    for &steps in levels {
        let grid = Grid::new(tau, steps)?;
        let map = InputMap::new(a, b, grid)?;
        let profiles: [(&str, fn(f64, f64) -> f64, fn(f64, f64) -> f64); 2] = [
            ("input f=x", |x, _| x, |_, _| 1.0),
            (
                "input f=x*sin(pi*x/tau)",
                |x, t| x * (PI * x / t).sin(),
                |x, t| (PI * x / t).sin() + PI * x / t * (PI * x / t).cos(),
            ),
        ];
        for (name, f, df) in profiles {
            let line = DelayLine::from_fn(grid, m, |x| vec![f(x, tau); m]);
            let dline = DelayLine::from_fn(grid, m, |x| vec![df(x, tau); m]);
            let r = sylvester_residual_input(&map, &line, Some(&dline))?;
            rows.push(ResidualRow {
                check: name.to_string(),
                grid_steps: steps,
                residual: r.value,
            });
        }
        let out_grid = Grid::new(mu, steps)?;
        let omap = OutputMap::new(a, c, out_grid)?;
        let z = Vector::from_element(a.nrows(), 1.0);
        rows.push(ResidualRow {
            check: "output z=1".into(),
            grid_steps: steps,
            residual: sylvester_residual_output(&omap, &z)?,
        });
        rows.push(ResidualRow {
            check: "output boundary z=1".into(),
            grid_steps: steps,
            residual: output_boundary_defect(&omap, &z)?,
        });
    }
    Ok(rows)
}

/// Per check name: residuals in level order and observed orders.
pub fn convergence_summary(rows: &[ResidualRow]) -> Vec<(String, Vec<f64>, Vec<f64>)> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.check.as_str()) {
            names.push(&r.check);
        }
    }
    names
        .into_iter()
        .map(|n| {
            let res: Vec<f64> = rows.iter().filter(|r| r.check == n).map(|r| r.residual).collect();
            let ord = observed_orders(&res);
            (n.to_string(), res, ord)
        })
        .collect()
}

pub const P2_LEVELS: [usize; 3] = [250, 500, 1000];

fn p2_plants() -> Vec<(&'static str, Matrix, Matrix)> {
    vec![
        ("scalar", scalar(1.0), scalar(1.0)),
        (
            "rotation",
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        ),
    ]
}

fn p2() -> Result<(bool, String)> {
    let mut ok = true;
    let mut worst_order = f64::INFINITY;
    let mut worst_res = 0.0f64;
    for (_, a, b) in p2_plants() {
        let c = Matrix::from_element(1, a.nrows(), 1.0);
        let rows = sylvester_rows(&a, &b, &c, 1.0, 1.0, &P2_LEVELS)?;
        for (name, res, ord) in convergence_summary(&rows) {
            if !name.starts_with("input") {
                continue;
            }
            let min_order = ord.iter().cloned().fold(f64::INFINITY, f64::min);
            let last = *res.last().expect("levels");
            worst_order = worst_order.min(min_order);
            worst_res = worst_res.max(last);
            ok &= min_order >= P2_MIN_ORDER && last < P2_MAX_RESIDUAL;
        }
    }
    Ok((
        ok,
        format!(
            "min observed order {worst_order:.2} (need {P2_MIN_ORDER}), max residual at M=1000 {worst_res:.2e} (tol {P2_MAX_RESIDUAL:e})"
        ),
    ))
}

/// Largest deviation `‖(Ψ_μ z)(μ) + C e^{-Aμ} z‖` over seeded random
/// 3×3 instances.
pub fn p3_tail_identity(seed: u64, instances: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let mut r = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let a = Matrix::from_row_slice(3, 3, &r(9));
        let c = Matrix::from_row_slice(1, 3, &r(3));
        let z = Vector::from_vec(r(3));
        let mu = 0.5;
        let map = OutputMap::new(&a, &c, Grid::new(mu, 500)?)?;
        let tail = Vector::from_column_slice(apply_observability_map(&map, &z)?.tail());
        let exact = -(&c * mat_exp(&a, -mu)? * &z);
        worst = worst.max((tail - exact).norm());
    }
    Ok(worst)
}

fn p3() -> Result<(bool, String)> {
    let mut smoothing = 0.0f64;
    for (_, a, b) in p2_plants() {
        let map = InputMap::new(&a, &b, Grid::new(1.0, 2000)?)?;
        smoothing = smoothing.max(smoothing_identity_check(&map, &Vector::from_element(b.ncols(), 1.0))?);
    }
    let tail = p3_tail_identity(42, 20)?;
    Ok((
        smoothing < P3_SMOOTHING_TOL && tail < P3_TAIL_TOL,
        format!(
            "smoothing identity {smoothing:.2e} (tol {P3_SMOOTHING_TOL:e}), tail identity {tail:.2e} (tol {P3_TAIL_TOL:e})"
        ),
    ))
}

/// Largest per-step decoupling residual along the P1 run.
pub fn p4_residual() -> Result<f64> {
    let (cfg, s0) = p1_setup()?;
    let map = InputMap::new(cfg.a(), cfg.b(), *cfg.grid())?;
    let mut worst = 0.0f64;
    simulate_with(&cfg, s0, 10.0, |before, after| {
        let r = input_decoupling_residual(&map, (&before.z, &before.phi), (&after.z, &after.phi))?;
        worst = worst.max(r);
        Ok(())
    })?;
    Ok(worst)
}

fn p4() -> Result<(bool, String)> {
    let r = p4_residual()?;
    let tol = 5.0 * (P1_DT + P1_DT);
    Ok((r <= tol, format!("max per-step residual {r:.2e} (tol {tol:e})")))
}

/// Envelope ratio `max E(t+4)/E(t)`, `t ∈ [0, 36]`, of the wave closed
/// loop with `modes` modes and step `dx` (k₁ = 0.5, τ = 0.4, z = σ²).
pub fn p5_envelope(modes: usize, dx: f64) -> Result<f64> {
    let tau_steps = (0.4 / dx).round() as usize;
    let mu_steps = (0.3 / dx).round() as usize;
    let ctrl = WaveController::new(0.5, modes, Grid::with_spacing(dx, tau_steps)?)?;
    let shaping = bump_coeffs(0.3, 0.8, &frequencies(modes))?;
    let gains = WaveObserverGains::new(1.0, shaping, Grid::with_spacing(dx, mu_steps)?)?;
    let s0 = WaveModal::from_profile(modes, |s| s * s, |_| 0.0, 20_000)?;
    let plant = WavePlant::new(s0, Some(&ctrl), &gains)?;
    let obs = WaveObserver::zeros(&gains);
    let (run, _, _) = simulate_wave(Some(&ctrl), &gains, plant, obs, 40.0, WaveRunOptions::default())?;
    envelope_ratio(&run.times, &run.energy, 4.0)
}

fn p5() -> Result<(bool, String)> {
    let rho = p5_envelope(32, 1e-3)?;
    let rerun = p5_envelope(64, 5e-4)?;
    let drift = (rerun / P5_RHO_REF - 1.0).abs();
    let ok = P5_RHO_REF < 1.0 && rho <= P5_ENVELOPE_SLACK * P5_RHO_REF && drift <= P5_REPRODUCTION_TOL;
    Ok((
        ok,
        format!(
            "rho(N=32) {rho:.4} vs locked rho_ref {P5_RHO_REF:.4} (slack {P5_ENVELOPE_SLACK}); reference rerun {rerun:.4} (drift {drift:.1e}, tol {P5_REPRODUCTION_TOL})"
        ),
    ))
}

/// The P6/P8 plant: oscillator with `A + FC` eigenvalues `{-1, -2}`.
pub fn p6_setup(steps: usize) -> Result<(LinearPlant, Matrix, f64, Grid)> {
    let plant = LinearPlant::new(
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )?;
    let f = Matrix::from_row_slice(2, 1, &[-3.0, -1.0]);
    let mu = 0.5;
    Ok((plant, f, mu, Grid::new(mu, steps)?))
}

fn p6_run(horizon: f64) -> Result<(crate::observer::ErrorTrajectory, f64)> {
    let (plant, f, mu, grid) = p6_setup(500)?;
    let gains = precompute_gains(plant.a(), plant.c(), &f, mu, grid)?;
    let p = OutputDelayPlant::new(plant.clone(), Vector::from_column_slice(&[1.0, 0.0]), grid)?;
    let obs = ObserverState::new(&plant, Vector::zeros(2), grid)?;
    let (traj, _, _) = simulate_with_plant(&gains, p, obs, horizon, |t| Vector::from_element(1, (0.5 * t).sin()))?;
    Ok((traj, mu))
}

fn p6() -> Result<(bool, String)> {
    let (traj, mu) = p6_run(15.0)?;
    let rate = decay_rate_over(&traj.times, &traj.err_state, mu + 2.0, 15.0)?;
    let rel = (rate.abs() - 1.0).abs();
    Ok((
        rel <= P6_RATE_TOL,
        format!("fitted rate {rate:.4} vs -1 (rel. deviation {rel:.3}, tol {P6_RATE_TOL})"),
    ))
}

fn max_after(times: &[f64], values: &[f64], t0: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t > t0 + 1e-9)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max)
}

/// P7 outcome: error-energy ratio `E(30)/E(μ)` and `max |ψ̌|` for `t > μ`.
pub fn p7_measure() -> Result<(f64, f64, f64)> {
    let (modes, dx, mu) = (32, 1e-3, 0.3);
    let shaping = bump_coeffs(0.3, 0.8, &frequencies(modes))?;
    let gains = WaveObserverGains::new(1.0, shaping, Grid::with_spacing(dx, (mu / dx).round() as usize)?)?;
    let s0 = WaveModal::from_profile(modes, |s| s * s, |_| 0.0, 20_000)?;
    let plant = WavePlant::new(s0, None, &gains)?;
    let obs = WaveObserver::zeros(&gains);
    let options = WaveRunOptions {
        record_every: 1,
        transformed_line: true,
    };
    let (run, _, _) = simulate_wave(None, &gains, plant, obs, 30.0, options)?;
    let at_mu = (mu / dx).round() as usize;
    let ratio = run.err_energy[run.len() - 1] / run.err_energy[at_mu];
    let check = max_after(&run.times, &run.transformed_line_max, mu);
    Ok((ratio, check, dx))
}

fn p7() -> Result<(bool, String)> {
    let (ratio, check, dx) = p7_measure()?;
    let tol = 10.0 * dx;
    Ok((
        ratio <= P7_DECAY_FACTOR && check <= tol,
        format!(
            "error energy E(30)/E(mu) {ratio:.3e} (need <= {P7_DECAY_FACTOR:e}); transformed line max {check:.2e} (tol {tol:e})"
        ),
    ))
}

fn p8() -> Result<(bool, String)> {
    let (traj, mu) = p6_run(5.0)?;
    let before = max_after(&traj.times[..1], &traj.transformed_line_max[..1], -1.0);
    let after = max_after(&traj.times, &traj.transformed_line_max, mu);
    let tol = 1e-12 + 10.0 * (mu / 500.0);
    Ok((
        after <= tol,
        format!("transformed line max for t > mu {after:.2e} (tol {tol:.1e}; {before:.2e} at t = 0)"),
    ))
}

/// Energy-norm distance at `t = 1` between the `modes`-mode solution and a
/// leapfrog solution on `intervals` cells, for `z = σ² - 2σ³/3`,
/// `z_t = 0`, `u = ½ sin²(πt)`.
pub fn p9_discrepancy(modes: usize, intervals: usize) -> Result<f64> {
    let z0 = |s: f64| s * s - 2.0 / 3.0 * s * s * s;
    let u = |t: f64| 0.5 * (PI * t).sin().powi(2);
    let dt = 1e-4;
    let mut state = WaveModal::from_profile(modes, z0, |_| 0.0, 20_000)?;
    for k in 0..10_000 {
        state = modal_step(&state, u((k as f64 + 0.5) * dt), dt);
    }
    let snap = leapfrog_wave(z0, |_| 0.0, u, intervals, 1.0, 0.5)?;
    Ok(energy_norm_difference(&snap, |s| state.reconstruct(s)))
}

fn p9() -> Result<(bool, String)> {
    let d = p9_discrepancy(64, 2000)?;
    Ok((d < P9_TOL, format!("energy-norm discrepancy {d:.2e} (tol {P9_TOL:e})")))
}
