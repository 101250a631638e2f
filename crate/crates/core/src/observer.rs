//! State observer for a plant whose measurement arrives `μ` late.
//!
//! The plant output `Cz` travels down a delay line `ψ` on `[0, μ]` and is
//! read at the tail, `y(t) = C z(t - μ)`. The observer copies that structure
//!
//! ```text
//! ẑ' = A ẑ - e^{Aμ} F [y - ψ̂(μ)] + B u
//! ψ̂_t + ψ̂_x = -C e^{A(μ - x)} F [y - ψ̂(μ)],   ψ̂(0) = C ẑ
//! ```
//!
//! and converges whenever `A + FC` is Hurwitz. Only `y` and `u` enter
//! [`observer_step`]; the plant state is never touched.

use std::io::Write;

use crate::delay_line::DelayLine;
use crate::error::{check_blow_up, Error, Result};
use crate::numkit::{mat_exp, Grid, Matrix, SampledKernel, Vector};
use crate::operator_maps::{composed_observer_kernel, p_transform, OutputMap};

/// `(A, B, C)` with shapes checked once.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

impl LinearPlant {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::shape("LinearPlant", "square A", format!("{}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::shape("LinearPlant", format!("B with {n} rows"), b.nrows()));
        }
        if c.ncols() != n {
            return Err(Error::shape("LinearPlant", format!("C with {n} columns"), c.ncols()));
        }
        Ok(LinearPlant { a, b, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// RK4 for `ż = Az + d` with `d` constant over the step.
    fn integrate(&self, z: &Vector, d: &Vector, dt: f64) -> Vector {
        let f = |z: &Vector| &self.a * z + d;
        let k1 = f(z);
        let k2 = f(&(z + &k1 * (0.5 * dt)));
        let k3 = f(&(z + &k2 * (0.5 * dt)));
        let k4 = f(&(z + &k3 * dt));
        z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }
}

/// Largest real part of the spectrum of `m`.
pub fn spectral_abscissa(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::shape("spectral_abscissa", "square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(m.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Gains of the delayed-output observer.
#[derive(Debug, Clone)]
pub struct ObserverGains {
    f: Matrix,
    mu: f64,
    state_gain: Matrix,
    line_kernel: SampledKernel,
}

impl ObserverGains {
    pub fn f(&self) -> &Matrix {
        &self.f
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `e^{Aμ} F`.
    pub fn state_gain(&self) -> &Matrix {
        &self.state_gain
    }

    /// Samples of `-C e^{A(μ - x)} F`.
    pub fn line_kernel(&self) -> &SampledKernel {
        &self.line_kernel
    }

    pub fn grid(&self) -> &Grid {
        self.line_kernel.grid()
    }
}

/// Observer gains for detection gain `f`, rejecting any `f` for which
/// `A + FC` is not Hurwitz.
pub fn precompute_gains(a: &Matrix, c: &Matrix, f: &Matrix, mu: f64, grid: Grid) -> Result<ObserverGains> {
    if f.nrows() != a.nrows() || f.ncols() != c.nrows() {
        return Err(Error::shape(
            "precompute_gains",
            format!("F of shape {}x{}", a.nrows(), c.nrows()),
            format!("{}x{}", f.nrows(), f.ncols()),
        ));
    }
    let line_kernel = composed_observer_kernel(a, c, f, mu, grid)?;
    let abscissa = spectral_abscissa(&(a + f * c))?;
    if !(abscissa < -1e-9) {
        return Err(Error::Config(format!(
            "A + FC is not Hurwitz (largest real part {abscissa:e})"
        )));
    }
    Ok(ObserverGains {
        f: f.clone(),
        mu,
        state_gain: mat_exp(a, mu)? * f,
        line_kernel,
    })
}

/// Observer estimate `(ẑ, ψ̂)` and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub z_hat: Vector,
    pub psi_hat: DelayLine,
    pub t: f64,
}

impl ObserverState {
    /// `ẑ = z_hat0` with an empty line apart from the head `C ẑ`.
    pub fn new(plant: &LinearPlant, z_hat0: Vector, grid: Grid) -> Result<Self> {
        if z_hat0.len() != plant.state_dim() {
            return Err(Error::shape("ObserverState", plant.state_dim(), z_hat0.len()));
        }
        let mut psi_hat = DelayLine::zeros(grid, plant.output_dim());
        psi_hat.set_head((plant.c() * &z_hat0).as_slice())?;
        Ok(ObserverState { z_hat: z_hat0, psi_hat, t: 0.0 })
    }

    /// Innovation `y - ψ̂(μ)`.
    pub fn innovation(&self, y: &Vector) -> Result<Vector> {
        if y.len() != self.psi_hat.value_dim() {
            return Err(Error::shape("innovation", self.psi_hat.value_dim(), y.len()));
        }
        Ok(y - Vector::from_column_slice(self.psi_hat.tail()))
    }

    /// One observer step with `y` and `u` held; returns the innovation used.
    pub fn advance(
        &mut self,
        gains: &ObserverGains,
        y: &Vector,
        u: &Vector,
        plant: &LinearPlant,
    ) -> Result<Vector> {
        gains.grid().ensure_same(self.psi_hat.grid(), "observer_step")?;
        if u.len() != plant.input_dim() {
            return Err(Error::shape("observer_step", plant.input_dim(), u.len()));
        }
        if self.z_hat.len() != plant.state_dim() {
            return Err(Error::shape("observer_step", plant.state_dim(), self.z_hat.len()));
        }
        let e = self.innovation(y)?;
        let dt = gains.grid().spacing();
        let drive = plant.b() * u - &gains.state_gain * &e;
        self.z_hat = plant.integrate(&self.z_hat, &drive, dt);
        let head = plant.c() * &self.z_hat;
        self.psi_hat.shift_in(head.as_slice())?;
        self.psi_hat.add_distributed_source(&gains.line_kernel, e.as_slice())?;
        // the boundary condition ψ̂(0) = Cẑ overrides the source at x = 0
        self.psi_hat.set_head(head.as_slice())?;
        self.t += dt;
        Ok(e)
    }
}

/// One observer step, returning the new state.
pub fn observer_step(
    gains: &ObserverGains,
    obs: &ObserverState,
    y: &Vector,
    u: &Vector,
    plant: &LinearPlant,
) -> Result<ObserverState> {
    let mut next = obs.clone();
    next.advance(gains, y, u, plant)?;
    Ok(next)
}

/// Plant with its output delay line; `y(t) = ψ(μ, t) = C z(t - μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDelayPlant {
    pub plant: LinearPlant,
    pub z: Vector,
    pub psi: DelayLine,
    pub t: f64,
}

impl OutputDelayPlant {
    /// Starts at `z0` with the sensor line holding the current reading,
    /// `ψ(x, 0) = C z0`.
    pub fn new(plant: LinearPlant, z0: Vector, grid: Grid) -> Result<Self> {
        if z0.len() != plant.state_dim() {
            return Err(Error::shape("OutputDelayPlant", plant.state_dim(), z0.len()));
        }
        let y0 = (plant.c() * &z0).as_slice().to_vec();
        Self::with_history(plant, z0, grid, |_| y0.clone())
    }

    /// Starts at `z0` with past outputs `ψ(x, 0) = history(x)`; the head is
    /// set to `C z0`. `history` must return `output_dim` values.
    pub fn with_history(
        plant: LinearPlant,
        z0: Vector,
        grid: Grid,
        history: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        if z0.len() != plant.state_dim() {
            return Err(Error::shape("OutputDelayPlant", plant.state_dim(), z0.len()));
        }
        let mut psi = DelayLine::from_fn(grid, plant.output_dim(), history);
        psi.set_head((plant.c() * &z0).as_slice())?;
        Ok(OutputDelayPlant { plant, z: z0, psi, t: 0.0 })
    }

    pub fn measurement(&self) -> Vector {
        Vector::from_column_slice(self.psi.tail())
    }

    /// Advances with `u` held over the step.
    pub fn advance(&mut self, u: &Vector) -> Result<()> {
        if u.len() != self.plant.input_dim() {
            return Err(Error::shape("OutputDelayPlant::advance", self.plant.input_dim(), u.len()));
        }
        let dt = self.psi.grid().spacing();
        let drive = self.plant.b() * u;
        self.z = self.plant.integrate(&self.z, &drive, dt);
        self.psi.shift_in((self.plant.c() * &self.z).as_slice())?;
        self.t += dt;
        Ok(())
    }
}

/// Error norms logged while running plant and observer in lockstep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTrajectory {
    pub times: Vec<f64>,
    /// `‖z - ẑ‖`.
    pub err_state: Vec<f64>,
    /// `‖ψ - ψ̂‖_{L²}`.
    pub err_line: Vec<f64>,
    /// `‖y - ψ̂(μ)‖`.
    pub innovation: Vec<f64>,
    /// `max_x |ψ̌(x)|` with `ψ̌ = (ψ - ψ̂) + Ψ_μ (z - ẑ)`.
    pub transformed_line_max: Vec<f64>,
}

impl ErrorTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn record(&mut self, plant: &OutputDelayPlant, obs: &ObserverState, map: &OutputMap) -> Result<()> {
        let ez = &plant.z - &obs.z_hat;
        let mut epsi = plant.psi.clone();
        epsi.add_scaled(&obs.psi_hat, -1.0)?;
        let (_, check) = p_transform(&ez, &epsi, map, false)?;
        self.times.push(obs.t);
        self.err_state.push(ez.norm());
        self.err_line.push(epsi.l2_norm());
        self.innovation.push(obs.innovation(&plant.measurement())?.norm());
        self.transformed_line_max.push(check.max_abs());
        Ok(())
    }

    /// CSV with columns `t, err_state_norm, err_line_norm, innovation_norm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "err_state_norm", "err_line_norm", "innovation_norm"])?;
        for i in 0..self.len() {
            w.write_record([
                format!("{}", self.times[i]),
                format!("{:e}", self.err_state[i]),
                format!("{:e}", self.err_line[i]),
                format!("{:e}", self.innovation[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs plant and observer side by side over `[0, horizon]`. Both see
/// `input` evaluated at the midpoint of each step.
pub fn simulate_with_plant(
    gains: &ObserverGains,
    mut plant: OutputDelayPlant,
    mut obs: ObserverState,
    horizon: f64,
    mut input: impl FnMut(f64) -> Vector,
) -> Result<(ErrorTrajectory, OutputDelayPlant, ObserverState)> {
    if *plant.psi.grid() != *gains.grid() || *obs.psi_hat.grid() != *gains.grid() {
        return Err(Error::Config(
            "plant, observer and gains must share one delay grid (Δt = Δx)".into(),
        ));
    }
    if plant.t != obs.t {
        return Err(Error::Config(format!(
            "plant clock {} differs from observer clock {}",
            plant.t, obs.t
        )));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::Domain(format!("horizon must be nonnegative, got {horizon}")));
    }
    let dt = gains.grid().spacing();
    let map = OutputMap::new(plant.plant.a(), plant.plant.c(), *gains.grid())?;
    let steps = (horizon / dt).round() as usize;
    let mut traj = ErrorTrajectory::default();
    traj.record(&plant, &obs, &map)?;
    for _ in 0..steps {
        let u = input(obs.t + 0.5 * dt);
        let y = plant.measurement();
        obs.advance(gains, &y, &u, &plant.plant)?;
        plant.advance(&u)?;
        check_blow_up(obs.t, obs.z_hat.norm().max(plant.z.norm()))?;
        traj.record(&plant, &obs, &map)?;
    }
    Ok((traj, plant, obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::decay_rate_over;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    fn oscillator() -> (LinearPlant, Matrix) {
        let plant = LinearPlant::new(
            m(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            m(2, 1, &[0.0, 1.0]),
            m(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        (plant, m(2, 1, &[-3.0, -1.0]))
    }

    #[test]
    fn gains_without_drift() {
        let grid = Grid::new(0.4, 40).unwrap();
        let c1 = m(1, 1, &[1.0]);
        let f1 = m(1, 1, &[-0.5]);
        let g = precompute_gains(&Matrix::zeros(1, 1), &c1, &f1, 0.4, grid).unwrap();
        assert_eq!(g.state_gain()[(0, 0)], -0.5);
        for k in g.line_kernel().samples() {
            assert_eq!(k[(0, 0)], 0.5);
        }
    }

    #[test]
    fn scalar_gains() {
        let grid = Grid::new(0.5, 100).unwrap();
        let one = m(1, 1, &[1.0]);
        let g = precompute_gains(&one, &one, &m(1, 1, &[-3.0]), 0.5, grid).unwrap();
        assert_relative_eq!(g.state_gain()[(0, 0)], -3.0 * 0.5f64.exp(), max_relative = 1e-14);
        for i in 0..grid.nodes() {
            let x = grid.node(i);
            assert_relative_eq!(
                g.line_kernel().sample(i)[(0, 0)],
                3.0 * (0.5 - x).exp(),
                max_relative = 1e-12
            );
        }
        let err = precompute_gains(&m(1, 1, &[3.0]), &one, &m(1, 1, &[-2.0]), 0.5, grid);
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(precompute_gains(&one, &one, &m(1, 2, &[1.0, 1.0]), 0.5, grid).is_err());
        assert!(precompute_gains(&one, &one, &m(1, 1, &[-3.0]), 0.6, grid).is_err());
    }

    #[test]
    fn one_cell_update_by_hand() {
        // A = 0, C = 1, F = -1, μ = Δx: ẑ' = +(y - ψ̂(μ))
        let grid = Grid::new(0.1, 1).unwrap();
        let plant = LinearPlant::new(m(1, 1, &[0.0]), m(1, 1, &[0.0]), m(1, 1, &[1.0])).unwrap();
        let gains = precompute_gains(plant.a(), plant.c(), &m(1, 1, &[-1.0]), 0.1, grid).unwrap();
        let obs = ObserverState {
            z_hat: Vector::from_element(1, 0.5),
            psi_hat: DelayLine::from_fn(grid, 1, |x| vec![if x == 0.0 { 0.5 } else { 0.2 }]),
            t: 0.0,
        };
        let next = observer_step(&gains, &obs, &Vector::from_element(1, 1.0), &Vector::zeros(1), &plant).unwrap();
        assert_relative_eq!(next.z_hat[0], 0.58, epsilon = 1e-15);
        assert_relative_eq!(next.psi_hat.sample(0)[0], 0.58, epsilon = 1e-15);
        assert_relative_eq!(next.psi_hat.sample(1)[0], 0.58, epsilon = 1e-15);
        assert_relative_eq!(next.t, 0.1);
    }

    #[test]
    fn matched_start_stays_matched() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut r = |n| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let a = m(3, 3, &r(9)) - Matrix::identity(3, 3) * 2.0;
        let plant = LinearPlant::new(a.clone(), m(3, 1, &r(3)), m(1, 3, &r(3))).unwrap();
        let grid = Grid::new(0.3, 60).unwrap();
        // F = -C^T keeps A + FC Hurwitz for this shifted A
        let f = -plant.c().transpose();
        let gains = precompute_gains(&a, plant.c(), &f, 0.3, grid).unwrap();
        let z0 = Vector::from_vec(r(3));
        let p = OutputDelayPlant::new(plant.clone(), z0.clone(), grid).unwrap();
        let obs = ObserverState {
            z_hat: z0,
            psi_hat: p.psi.clone(),
            t: 0.0,
        };
        let (traj, _, _) =
            simulate_with_plant(&gains, p, obs, 20.0, |t| Vector::from_element(1, (3.0 * t).sin())).unwrap();
        assert!(traj.err_state.iter().chain(&traj.err_line).all(|&e| e <= 1e-10));
    }

    #[test]
    fn estimate_of_resting_plant_decays() {
        let (plant, f) = oscillator();
        let grid = Grid::new(0.5, 250).unwrap();
        let gains = precompute_gains(plant.a(), plant.c(), &f, 0.5, grid).unwrap();
        let p = OutputDelayPlant::new(plant.clone(), Vector::zeros(2), grid).unwrap();
        let obs = ObserverState::new(&plant, Vector::from_column_slice(&[1.0, -1.0]), grid).unwrap();
        let (traj, _, end) = simulate_with_plant(&gains, p, obs, 12.0, |_| Vector::zeros(1)).unwrap();
        assert!(end.z_hat.norm() < 1e-3 * traj.err_state[0]);
    }

    #[test]
    fn scalar_error_rate_follows_a_plus_fc() {
        let one = m(1, 1, &[1.0]);
        let plant = LinearPlant::new(one.clone(), one.clone(), one.clone()).unwrap();
        let grid = Grid::new(0.5, 500).unwrap();
        let gains = precompute_gains(&one, &one, &m(1, 1, &[-3.0]), 0.5, grid).unwrap();
        let p = OutputDelayPlant::new(plant.clone(), Vector::from_element(1, 1.0), grid).unwrap();
        let obs = ObserverState::new(&plant, Vector::zeros(1), grid).unwrap();
        let (traj, _, _) =
            simulate_with_plant(&gains, p, obs, 8.0, |t| Vector::from_element(1, -(t.cos()))).unwrap();
        let rate = decay_rate_over(&traj.times, &traj.err_state, 2.5, 8.0).unwrap();
        assert!((rate + 2.0).abs() < 0.3, "{rate}");
    }

    #[test]
    fn transformed_line_vanishes_after_mu() {
        let (plant, f) = oscillator();
        let mu = 0.5;
        let grid = Grid::new(mu, 500).unwrap();
        let gains = precompute_gains(plant.a(), plant.c(), &f, mu, grid).unwrap();
        let p = OutputDelayPlant::new(plant.clone(), Vector::from_column_slice(&[1.0, 0.5]), grid).unwrap();
        // a line profile that no unforced plant history produces
        let mut obs = ObserverState::new(&plant, Vector::zeros(2), grid).unwrap();
        obs.psi_hat = DelayLine::from_fn(grid, 1, |x| vec![if x == 0.0 { 0.0 } else { 0.7 }]);
        let (traj, _, _) =
            simulate_with_plant(&gains, p, obs, 3.0, |t| Vector::from_element(1, (0.5 * t).sin())).unwrap();
        let before = traj.transformed_line_max[traj.len() / 12];
        assert!(before > 0.1, "{before}");
        let after = traj
            .times
            .iter()
            .zip(&traj.transformed_line_max)
            .filter(|(t, _)| **t > mu + 1e-9)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max);
        assert!(after < 10.0 * grid.spacing(), "{after}");
    }

    #[test]
    fn mismatched_clocks_are_rejected() {
        let (plant, f) = oscillator();
        let grid = Grid::new(0.5, 50).unwrap();
        let gains = precompute_gains(plant.a(), plant.c(), &f, 0.5, grid).unwrap();
        let p = OutputDelayPlant::new(plant.clone(), Vector::zeros(2), grid).unwrap();
        let mut obs = ObserverState::new(&plant, Vector::zeros(2), grid).unwrap();
        obs.t = 0.01;
        let r = simulate_with_plant(&gains, p.clone(), obs, 1.0, |_| Vector::zeros(1));
        assert!(matches!(r, Err(Error::Config(_))));
        let other = ObserverState::new(&plant, Vector::zeros(2), Grid::new(0.5, 25).unwrap()).unwrap();
        let r = simulate_with_plant(&gains, p, other, 1.0, |_| Vector::zeros(1));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn plant_histories() {
        let (plant, _) = oscillator();
        let grid = Grid::new(std::f64::consts::FRAC_PI_2, 200).unwrap();
        let z0 = Vector::from_column_slice(&[1.0, 0.0]);
        let held = OutputDelayPlant::new(plant.clone(), z0.clone(), grid).unwrap();
        assert!(held.psi.iter().all(|v| v[0] == 1.0));
        // unforced past: z(-s) = (cos s, sin s), so y(0) = C z(-π/2) = 0
        let free = OutputDelayPlant::with_history(plant, z0, grid, |x| vec![x.cos()]).unwrap();
        assert!(free.measurement()[0].abs() < 1e-12);
        assert_eq!(free.psi.head()[0], 1.0);
    }

    #[test]
    fn error_csv_header() {
        let (plant, f) = oscillator();
        let grid = Grid::new(0.5, 5).unwrap();
        let gains = precompute_gains(plant.a(), plant.c(), &f, 0.5, grid).unwrap();
        let p = OutputDelayPlant::new(plant.clone(), Vector::zeros(2), grid).unwrap();
        let obs = ObserverState::new(&plant, Vector::zeros(2), grid).unwrap();
        let (traj, _, _) = simulate_with_plant(&gains, p, obs, 0.2, |_| Vector::zeros(1)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,err_state_norm,err_line_norm,innovation_norm\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
