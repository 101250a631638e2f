//! Scenario files.
//!
//! ```toml
//! tau = 1.0
//! mu = 0.5
//! grid_steps = 1000      # cells on the input delay line
//! horizon = 10.0
//! seed = 7
//! outputs = ["trajectory", "delay_line"]
//!
//! [system.matrix]
//! a = [[1.0]]
//! b = [[1.0]]
//! c = [[1.0]]
//! k = [[-2.0]]
//! f = [[-3.0]]
//! z0 = [1.0]
//! ```
//!
//! or, for the wave benchmark,
//!
//! ```toml
//! [system.wave]
//! k1 = 0.5
//! k2 = 1.0
//! modes = 32
//! shaping = { lo = 0.3, hi = 0.8 }
//! initial = "square"
//! ```
//!
//! Both delay lines share one step `Δx`: `τ / grid_steps` when `τ > 0`,
//! otherwise `μ / grid_steps`. The other delay must be a whole number of
//! steps.

use std::fmt;
use std::path::Path;

use delaycomp::{Grid, Matrix, Vector};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    tau: Option<f64>,
    mu: Option<f64>,
    grid_steps: Option<usize>,
    horizon: Option<f64>,
    outputs: Option<Vec<String>>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    matrix: Option<RawMatrix>,
    wave: Option<RawWave>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    a: Vec<Vec<f64>>,
    b: Option<Vec<Vec<f64>>>,
    c: Option<Vec<Vec<f64>>>,
    k: Option<Vec<Vec<f64>>>,
    f: Option<Vec<Vec<f64>>>,
    z0: Option<Vec<f64>>,
    zhat0: Option<Vec<f64>>,
    input: Option<RawInput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    amplitude: f64,
    frequency: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWave {
    k1: f64,
    k2: f64,
    modes: Option<usize>,
    shaping: Option<RawBump>,
    initial: Option<String>,
    snapshot_points: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBump {
    lo: f64,
    hi: f64,
}

/// A rejected config: every problem found, one per line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub messages: Vec<String>,
}

impl ConfigError {
    fn single(msg: impl Into<String>) -> Self {
        ConfigError {
            messages: vec![msg.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.messages.join("\n"))
    }
}

impl std::error::Error for ConfigError {}

/// Series a run may write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Trajectory,
    Errors,
    DelayLine,
    Wave,
    Profile,
    Residuals,
}

impl Output {
    const ALL: [(&'static str, Output); 6] = [
        ("trajectory", Output::Trajectory),
        ("errors", Output::Errors),
        ("delay_line", Output::DelayLine),
        ("wave", Output::Wave),
        ("profile", Output::Profile),
        ("residuals", Output::Residuals),
    ];

    fn parse(name: &str) -> Option<Output> {
        Output::ALL.iter().find(|(n, _)| *n == name).map(|(_, o)| *o)
    }
}

/// `u(t) = amplitude · sin(frequency · t)` on every input channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSignal {
    pub amplitude: f64,
    pub frequency: f64,
}

impl InputSignal {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t).sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSystem {
    pub a: Matrix,
    pub b: Option<Matrix>,
    pub c: Option<Matrix>,
    pub k: Option<Matrix>,
    pub f: Option<Matrix>,
    pub z0: Vector,
    pub zhat0: Vector,
    pub input: InputSignal,
}

/// Named initial profiles `(z, z_t)` for the wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveInitial {
    /// `z = σ²`, `z_t = 0`
    Square,
    /// `z = σ² - 2σ³/3`, `z_t = 0` (compatible with `z_σ(1) = 0`)
    Cubic,
    Zero,
}

impl WaveInitial {
    pub fn displacement(self, s: f64) -> f64 {
        match self {
            WaveInitial::Square => s * s,
            WaveInitial::Cubic => s * s - 2.0 / 3.0 * s * s * s,
            WaveInitial::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveSystem {
    pub k1: f64,
    pub k2: f64,
    pub modes: usize,
    pub shaping: (f64, f64),
    pub initial: WaveInitial,
    pub snapshot_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum System {
    Matrix(MatrixSystem),
    Wave(WaveSystem),
}

/// Validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub system: System,
    pub tau: f64,
    pub mu: f64,
    pub grid_steps: usize,
    pub horizon: f64,
    pub outputs: Option<Vec<Output>>,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Common step of both delay lines.
    pub fn spacing(&self) -> f64 {
        if self.tau > 0.0 {
            self.tau / self.grid_steps as f64
        } else {
            self.mu / self.grid_steps as f64
        }
    }

    /// Grid over `[0, τ]`, or an error when `τ = 0`.
    pub fn tau_grid(&self) -> Result<Grid, ConfigError> {
        self.line_grid(self.tau, "tau")
    }

    /// Grid over `[0, μ]`, or an error when `μ = 0`.
    pub fn mu_grid(&self) -> Result<Grid, ConfigError> {
        self.line_grid(self.mu, "mu")
    }

    fn line_grid(&self, length: f64, name: &str) -> Result<Grid, ConfigError> {
        if length <= 0.0 {
            return Err(ConfigError::single(format!("{name}: must be positive for this subcommand")));
        }
        let steps = whole_steps(length, self.spacing())
            .ok_or_else(|| ConfigError::single(format!("{name}: not a whole number of grid steps")))?;
        Grid::with_spacing(self.spacing(), steps).map_err(|e| ConfigError::single(format!("{name}: {e}")))
    }

    /// Whether `o` should be written: listed explicitly, or no list given.
    pub fn wants(&self, o: Output) -> bool {
        self.outputs.as_ref().map_or(true, |list| list.contains(&o))
    }

    pub fn matrix(&self) -> Result<&MatrixSystem, ConfigError> {
        match &self.system {
            System::Matrix(m) => Ok(m),
            System::Wave(_) => Err(ConfigError::single("system: this subcommand needs [system.matrix]")),
        }
    }

    pub fn wave(&self) -> Result<&WaveSystem, ConfigError> {
        match &self.system {
            System::Wave(w) => Ok(w),
            System::Matrix(_) => Err(ConfigError::single("system: this subcommand needs [system.wave]")),
        }
    }
}

fn whole_steps(length: f64, spacing: f64) -> Option<usize> {
    let n = length / spacing;
    let r = n.round();
    ((n - r).abs() <= 1e-9 * r.max(1.0) && r >= 1.0).then_some(r as usize)
}

fn to_matrix(rows: &[Vec<f64>], field: &str, errors: &mut Vec<String>) -> Option<Matrix> {
    if rows.is_empty() || rows[0].is_empty() {
        errors.push(format!("{field}: must be a non-empty list of rows"));
        return None;
    }
    let ncols = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        errors.push(format!("{field}: row {i} has {} entries, row 0 has {ncols}", r.len()));
        return None;
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        errors.push(format!("{field}: entries must be finite"));
        return None;
    }
    Some(Matrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().cloned()))
}

fn expect_shape(m: &Matrix, rows: usize, cols: usize, field: &str, what: &str, errors: &mut Vec<String>) {
    if m.nrows() != rows || m.ncols() != cols {
        errors.push(format!(
            "{field}: expected {rows}x{cols} ({what}), found {}x{}",
            m.nrows(),
            m.ncols()
        ));
    }
}

fn validate_matrix(raw: RawMatrix, errors: &mut Vec<String>) -> Option<MatrixSystem> {
    let a = to_matrix(&raw.a, "system.matrix.a", errors)?;
    let n = a.nrows();
    if !a.is_square() {
        errors.push(format!("system.matrix.a: must be square, found {}x{}", n, a.ncols()));
    }
    let b = raw.b.as_deref().and_then(|r| to_matrix(r, "system.matrix.b", errors));
    let c = raw.c.as_deref().and_then(|r| to_matrix(r, "system.matrix.c", errors));
    let k = raw.k.as_deref().and_then(|r| to_matrix(r, "system.matrix.k", errors));
    let f = raw.f.as_deref().and_then(|r| to_matrix(r, "system.matrix.f", errors));
    if let Some(b) = &b {
        if b.nrows() != n {
            errors.push(format!("system.matrix.b: expected {n} rows (states), found {}", b.nrows()));
        }
    }
    if let Some(c) = &c {
        if c.ncols() != n {
            errors.push(format!("system.matrix.c: expected {n} columns (states), found {}", c.ncols()));
        }
    }
    if let Some(k) = &k {
        match &b {
            Some(b) => expect_shape(k, b.ncols(), n, "system.matrix.k", "inputs x states", errors),
            None => errors.push("system.matrix.k: given without b".into()),
        }
    }
    if let Some(f) = &f {
        match &c {
            Some(c) => expect_shape(f, n, c.nrows(), "system.matrix.f", "states x outputs", errors),
            None => errors.push("system.matrix.f: given without c".into()),
        }
    }
    let vector = |v: Option<Vec<f64>>, field: &str, errors: &mut Vec<String>| -> Vector {
        match v {
            Some(v) if v.len() != n => {
                errors.push(format!("{field}: expected {n} entries, found {}", v.len()));
                Vector::zeros(n)
            }
            Some(v) => Vector::from_vec(v),
            None => Vector::zeros(n),
        }
    };
    let z0 = vector(raw.z0, "system.matrix.z0", errors);
    let zhat0 = vector(raw.zhat0, "system.matrix.zhat0", errors);
    let input = match raw.input {
        Some(i) if !(i.amplitude.is_finite() && i.frequency.is_finite()) => {
            errors.push("system.matrix.input: amplitude and frequency must be finite".into());
            InputSignal { amplitude: 0.0, frequency: 0.0 }
        }
        Some(i) => InputSignal {
            amplitude: i.amplitude,
            frequency: i.frequency,
        },
        None => InputSignal {
            amplitude: 0.0,
            frequency: 0.0,
        },
    };
    Some(MatrixSystem {
        a,
        b,
        c,
        k,
        f,
        z0,
        zhat0,
        input,
    })
}

fn validate_wave(raw: RawWave, errors: &mut Vec<String>) -> WaveSystem {
    if !(raw.k1 > 0.0) {
        errors.push(format!("system.wave.k1: must be positive, found {}", raw.k1));
    }
    if !(raw.k2 > 0.0) {
        errors.push(format!("system.wave.k2: must be positive, found {}", raw.k2));
    }
    let modes = raw.modes.unwrap_or(32);
    if modes == 0 {
        errors.push("system.wave.modes: must be at least 1".into());
    }
    let shaping = raw.shaping.map_or((0.3, 0.8), |b| (b.lo, b.hi));
    if !(0.0 <= shaping.0 && shaping.0 < shaping.1 && shaping.1 <= 1.0) {
        errors.push(format!(
            "system.wave.shaping: need 0 <= lo < hi <= 1, found [{}, {}]",
            shaping.0, shaping.1
        ));
    }
    let initial = match raw.initial.as_deref().unwrap_or("square") {
        "square" => WaveInitial::Square,
        "cubic" => WaveInitial::Cubic,
        "zero" => WaveInitial::Zero,
        other => {
            errors.push(format!(
                "system.wave.initial: unknown profile {other:?} (square, cubic, zero)"
            ));
            WaveInitial::Zero
        }
    };
    WaveSystem {
        k1: raw.k1,
        k2: raw.k2,
        modes,
        shaping,
        initial,
        snapshot_points: raw.snapshot_points.unwrap_or(100).max(1),
    }
}

/// Command-line values that replace their config counterparts before
/// validation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub grid_steps: Option<usize>,
    pub horizon: Option<f64>,
}

/// Parses TOML text into a validated config, collecting every problem.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    parse_config_str_with(text, Overrides::default())
}

pub fn parse_config_str_with(text: &str, overrides: Overrides) -> Result<ScenarioConfig, ConfigError> {
    let mut raw: RawConfig =
        toml::from_str(text).map_err(|e| ConfigError::single(format!("parse error: {e}")))?;
    raw.grid_steps = overrides.grid_steps.or(raw.grid_steps);
    raw.horizon = overrides.horizon.or(raw.horizon);
    let mut errors = Vec::new();

    let system = match (raw.system.matrix, raw.system.wave) {
        (Some(m), None) => validate_matrix(m, &mut errors).map(System::Matrix),
        (None, Some(w)) => Some(System::Wave(validate_wave(w, &mut errors))),
        (Some(_), Some(_)) => {
            errors.push("system: give exactly one of [system.matrix] and [system.wave]".into());
            None
        }
        (None, None) => {
            errors.push("system: missing [system.matrix] or [system.wave]".into());
            None
        }
    };

    let tau = raw.tau.unwrap_or(0.0);
    let mu = raw.mu.unwrap_or(0.0);
    for (name, v) in [("tau", tau), ("mu", mu)] {
        if !(v.is_finite() && v >= 0.0) {
            errors.push(format!("{name}: must be a nonnegative number, found {v}"));
        }
    }
    if tau <= 0.0 && mu <= 0.0 {
        errors.push("tau, mu: at least one delay must be positive".into());
    }
    let grid_steps = raw.grid_steps.unwrap_or(1000);
    if grid_steps == 0 {
        errors.push("grid_steps: must be at least 1".into());
    }
    let horizon = raw.horizon.unwrap_or(10.0);
    if !(horizon.is_finite() && horizon >= 0.0) {
        errors.push(format!("horizon: must be a nonnegative number, found {horizon}"));
    }
    let outputs = raw.outputs.map(|names| {
        names
            .iter()
            .filter_map(|n| {
                let o = Output::parse(n);
                if o.is_none() {
                    let known: Vec<&str> = Output::ALL.iter().map(|(n, _)| *n).collect();
                    errors.push(format!("outputs: unknown series {n:?} (known: {})", known.join(", ")));
                }
                o
            })
            .collect()
    });

    if tau > 0.0 && mu > 0.0 && grid_steps > 0 && whole_steps(mu, tau / grid_steps as f64).is_none() {
        errors.push(format!(
            "mu: {mu} is not a whole number of steps of size tau/grid_steps = {}",
            tau / grid_steps as f64
        ));
    }

    match system {
        Some(system) if errors.is_empty() => Ok(ScenarioConfig {
            system,
            tau,
            mu,
            grid_steps,
            horizon,
            outputs,
            seed: raw.seed.unwrap_or(0),
        }),
        _ => Err(ConfigError { messages: errors }),
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    parse_config_with(path, Overrides::default())
}

pub fn parse_config_with(path: &Path, overrides: Overrides) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str_with(&text, overrides)
}
