//! Subcommand implementations. Each returns whether its checks passed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use delaycomp::acceptance::{self, convergence_summary, sylvester_rows, Report, P2_MAX_RESIDUAL, P2_MIN_ORDER};
use delaycomp::observer::{precompute_gains, simulate_with_plant, LinearPlant, ObserverState, OutputDelayPlant};
use delaycomp::operator_maps::{apply_observability_map, write_residual_csv, OutputMap, ResidualRow};
use delaycomp::predictor::{simulate, ClosedLoopState, PredictorConfig};
use delaycomp::wave::{
    bump_coeffs, frequencies, simulate_wave, WaveController, WaveModal, WaveObserver, WaveObserverGains, WavePlant,
    WaveRunOptions,
};
use delaycomp::{numkit::mat_exp, Error, Grid, Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, Output, ScenarioConfig};

/// Failure of a subcommand before it could reach a verdict.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numeric(Error),
}

impl CliError {
    /// Process exit code: 3 for blow-up, 1 for failed fits, 2 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric(Error::BlowUp { .. }) => 3,
            CliError::Numeric(Error::Fit(_)) => 1,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error:\n{e}"),
            CliError::Numeric(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numeric(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numeric(Error::Io(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn missing(field: &str, why: &str) -> CliError {
    CliError::Config(ConfigError {
        messages: vec![format!("{field}: required {why}")],
    })
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> delaycomp::Result<()>) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    body(&mut w)?;
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn simulate_input_delay(cfg: &ScenarioConfig, out: &Path) -> CliResult<bool> {
    let m = cfg.matrix()?;
    let b = m.b.as_ref().ok_or_else(|| missing("system.matrix.b", "for simulate-input-delay"))?;
    let k = m.k.as_ref().ok_or_else(|| missing("system.matrix.k", "for simulate-input-delay"))?;
    let grid = cfg.tau_grid()?;
    let pc = PredictorConfig::new(&m.a, b, k, cfg.tau, grid.steps())?;
    let s0 = ClosedLoopState::new(&pc, m.z0.clone())?;
    let (traj, end) = simulate(&pc, s0, cfg.horizon)?;
    if cfg.wants(Output::Trajectory) {
        write_file(out, "trajectory.csv", |w| traj.write_csv(w))?;
    }
    if cfg.wants(Output::DelayLine) {
        write_file(out, "input_line.csv", |w| end.phi.write_csv(w))?;
    }
    println!("t = {}  |z| = {:e}  |phi| = {:e}", end.t, end.z.norm(), end.phi.l2_norm());
    Ok(true)
}

pub fn simulate_output_delay(cfg: &ScenarioConfig, out: &Path) -> CliResult<bool> {
    let m = cfg.matrix()?;
    let c = m.c.as_ref().ok_or_else(|| missing("system.matrix.c", "for simulate-output-delay"))?;
    let f = m.f.as_ref().ok_or_else(|| missing("system.matrix.f", "for simulate-output-delay"))?;
    let b = m.b.clone().unwrap_or_else(|| Matrix::zeros(m.a.nrows(), 1));
    let grid = cfg.mu_grid()?;
    let gains = precompute_gains(&m.a, c, f, cfg.mu, grid)?;
    let plant = LinearPlant::new(m.a.clone(), b, c.clone())?;
    let obs = ObserverState::new(&plant, m.zhat0.clone(), grid)?;
    let inputs = plant.input_dim();
    let sys = OutputDelayPlant::new(plant, m.z0.clone(), grid)?;
    let signal = m.input;
    let (traj, _, obs) = simulate_with_plant(&gains, sys, obs, cfg.horizon, |t| {
        Vector::from_element(inputs, signal.at(t))
    })?;
    if cfg.wants(Output::Errors) {
        write_file(out, "errors.csv", |w| traj.write_csv(w))?;
    }
    if cfg.wants(Output::DelayLine) {
        write_file(out, "observer_line.csv", |w| obs.psi_hat.write_csv(w))?;
    }
    let last = traj.len() - 1;
    println!(
        "t = {}  |z - zhat| = {:e}  |psi - psihat| = {:e}",
        traj.times[last], traj.err_state[last], traj.err_line[last]
    );
    Ok(true)
}

/// Finest-level residual below which a row is treated as exact and its
/// observed order is not meaningful.
const EXACT: f64 = 1e-10;

/// Residual rows and a formatted table for the config's Sylvester checks.
fn sylvester_table(cfg: &ScenarioConfig) -> CliResult<(Vec<ResidualRow>, Vec<String>, bool)> {
    let m = cfg.matrix()?;
    let b = m.b.as_ref().ok_or_else(|| missing("system.matrix.b", "for verify-sylvester"))?;
    if cfg.tau <= 0.0 {
        return Err(missing("tau", "(positive) for verify-sylvester"));
    }
    let g = cfg.grid_steps;
    if g < 8 || g % 4 != 0 {
        return Err(CliError::Config(ConfigError {
            messages: vec![format!("grid_steps: verify-sylvester needs a multiple of 4 that is at least 8, found {g}")],
        }));
    }
    let levels = [g / 4, g / 2, g];
    let n = m.a.nrows();
    let c = m.c.clone().unwrap_or_else(|| Matrix::from_element(1, n, 1.0));
    let mu = if cfg.mu > 0.0 { cfg.mu } else { cfg.tau };
    let mut rows = sylvester_rows(&m.a, b, &c, cfg.tau, mu, &levels)?;
    rows.extend(tail_identity_rows(&m.a, &c, mu, &levels, cfg.seed)?);

    let mut ok = true;
    let mut lines = vec![format!(
        "{:<28} {:>12} {:>12} {:>12}  {:>6} {:>6}  verdict",
        "check", levels[0], levels[1], levels[2], "ord1", "ord2"
    )];
    for (name, res, ord) in convergence_summary(&rows) {
        let finest = *res.last().expect("three levels");
        let min_order = ord.iter().cloned().fold(f64::INFINITY, f64::min);
        let pass = if name.contains("boundary") || name.contains("tail") {
            finest <= EXACT
        } else {
            finest <= EXACT || (min_order >= P2_MIN_ORDER && finest < P2_MAX_RESIDUAL)
        };
        ok &= pass;
        // orders of rows already at rounding level are noise
        let order = |i: usize| {
            if res[i + 1] <= EXACT {
                "-".to_string()
            } else {
                format!("{:.2}", ord[i])
            }
        };
        lines.push(format!(
            "{:<28} {:>12.3e} {:>12.3e} {:>12.3e}  {:>6} {:>6}  {}",
            name,
            res[0],
            res[1],
            res[2],
            order(0),
            order(1),
            if pass { "PASS" } else { "FAIL" }
        ));
    }
    Ok((rows, lines, ok))
}

pub fn verify_sylvester(cfg: &ScenarioConfig, out: &Path) -> CliResult<bool> {
    let (rows, lines, ok) = sylvester_table(cfg)?;
    if cfg.wants(Output::Residuals) {
        write_file(out, "residuals.csv", |w| write_residual_csv(&rows, w))?;
    }
    for l in lines {
        println!("{l}");
    }
    Ok(ok)
}

/// `‖(Ψ_μ z)(μ) + C e^{-Aμ} z‖` for one seeded random `z` per level.
fn tail_identity_rows(a: &Matrix, c: &Matrix, mu: f64, levels: &[usize], seed: u64) -> CliResult<Vec<ResidualRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Vector::from_fn(a.nrows(), |_, _| rng.random_range(-1.0..1.0));
    let exact = -(c * mat_exp(a, -mu)? * &z);
    let mut rows = Vec::new();
    for &steps in levels {
        let map = OutputMap::new(a, c, Grid::new(mu, steps)?)?;
        let tail = Vector::from_column_slice(apply_observability_map(&map, &z)?.tail());
        rows.push(ResidualRow {
            check: "output tail identity".into(),
            grid_steps: steps,
            residual: (tail - &exact).norm(),
        });
    }
    Ok(rows)
}

pub fn wave_demo(cfg: &ScenarioConfig, out: &Path) -> CliResult<bool> {
    let w = cfg.wave()?;
    let omega = frequencies(w.modes);
    let shaping = bump_coeffs(w.shaping.0, w.shaping.1, &omega)?;
    let gains = WaveObserverGains::new(w.k2, shaping, cfg.mu_grid()?)?;
    let controller = if cfg.tau > 0.0 {
        Some(WaveController::new(w.k1, w.modes, cfg.tau_grid()?)?)
    } else {
        None
    };
    let initial = w.initial;
    let state = WaveModal::from_profile(w.modes, |s| initial.displacement(s), |_| 0.0, 4000)?;
    let plant = WavePlant::new(state.clone(), controller.as_ref(), &gains)?;
    let obs = WaveObserver::zeros(&gains);
    let (run, plant, obs) = simulate_wave(
        controller.as_ref(),
        &gains,
        plant,
        obs,
        cfg.horizon,
        WaveRunOptions::default(),
    )?;
    if cfg.wants(Output::Wave) {
        write_file(out, "wave.csv", |f| run.write_csv(f))?;
    }
    if cfg.wants(Output::Profile) {
        write_file(out, "profile_initial.csv", |f| state.write_snapshot_csv(w.snapshot_points, f))?;
        write_file(out, "profile_final.csv", |f| plant.state.write_snapshot_csv(w.snapshot_points, f))?;
    }
    if cfg.wants(Output::DelayLine) {
        if let Some(phi) = &plant.phi {
            write_file(out, "actuator_line.csv", |f| phi.write_csv(f))?;
        }
        write_file(out, "observer_line.csv", |f| obs.psi_hat.write_csv(f))?;
    }
    let last = run.len() - 1;
    println!(
        "t = {}  energy {:e} -> {:e}  error energy {:e} -> {:e}",
        run.times[last], run.energy[0], run.energy[last], run.err_energy[0], run.err_energy[last]
    );
    Ok(true)
}

/// Worker count from `DELAYCOMP_THREADS`, defaulting to the available cores.
pub fn thread_cap(var: Option<String>) -> Result<usize, ConfigError> {
    match var {
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ConfigError {
                messages: vec![format!("DELAYCOMP_THREADS: expected a positive integer, found {v:?}")],
            }),
        },
    }
}

/// Runs `jobs` on at most `threads` workers; results keep job order.
pub fn run_parallel<T: Send>(jobs: Vec<Box<dyn Fn() -> T + Send + Sync + '_>>, threads: usize) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = threads.clamp(1, jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = job();
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// `(check name, passed, detail)` of one verify-all job.
type CheckJob<'a> = Box<dyn Fn() -> (String, bool, String) + Send + Sync + 'a>;

/// Acceptance criteria (all, or those in `only`) plus, when a config is
/// given, its Sylvester check.
pub fn verify_all(cfg: Option<&ScenarioConfig>, only: &[String], threads: usize, out: &Path) -> CliResult<bool> {
    let mut selected = Vec::new();
    for id in only {
        match acceptance::criterion_by_id(id) {
            Some(c) => selected.push(c),
            None => {
                return Err(CliError::Config(ConfigError {
                    messages: vec![format!("--only: unknown criterion {id:?} (P1 to P9)")],
                }))
            }
        }
    }
    if only.is_empty() {
        selected.extend(acceptance::criteria());
    }
    let mut jobs: Vec<CheckJob> = selected
        .into_iter()
        .map(|c| {
            Box::new(move || {
                let r: Report = c.run();
                println!("{r}");
                (r.id.to_string(), r.passed, r.detail)
            }) as CheckJob
        })
        .collect();
    if let Some(cfg) = cfg {
        jobs.push(Box::new(move || match sylvester_table(cfg) {
            Ok((_, _, ok)) => {
                let detail = "Sylvester residuals of the config system".to_string();
                println!("config {}: {detail}", if ok { "PASS" } else { "FAIL" });
                ("config".to_string(), ok, detail)
            }
            Err(e) => {
                println!("config FAIL: {e}");
                ("config".to_string(), false, e.to_string())
            }
        }));
    }
    let results = run_parallel(jobs, threads);

    write_file(out, "acceptance.csv", |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["check_name", "passed", "detail"])?;
        for (id, passed, detail) in &results {
            w.write_record([id.as_str(), if *passed { "true" } else { "false" }, detail.as_str()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!();
    for (id, passed, _) in &results {
        println!("{id:<10} {}", if *passed { "PASS" } else { "FAIL" });
    }
    Ok(results.iter().all(|r| r.1))
}
