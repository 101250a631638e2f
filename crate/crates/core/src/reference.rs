//! Second-order finite-difference wave solver, kept independent of the
//! modal code so it can serve as an oracle for it.
//!
//! Leapfrog in time on `σ_j = j h`, Dirichlet at `σ = 0`, and the Neumann
//! condition `z_σ(1) = u` through a ghost node `z_{J+1} = z_{J-1} + 2hu`.

use crate::error::{Error, Result};

/// Displacement and velocity on a uniform grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdSnapshot {
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
    pub z_t: Vec<f64>,
}

impl FdSnapshot {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.sigma.len() - 1) as f64
    }
}

fn laplacian(z: &[f64], h: f64, u: f64, out: &mut [f64]) {
    let j = z.len() - 1;
    out[0] = 0.0;
    for i in 1..j {
        out[i] = z[i + 1] - 2.0 * z[i] + z[i - 1];
    }
    out[j] = 2.0 * z[j - 1] - 2.0 * z[j] + 2.0 * h * u;
}

/// Solves `z_tt = z_σσ`, `z(0) = 0`, `z_σ(1) = u(t)` from `(z0, zt0)` up to
/// `horizon` with `intervals` cells and time step `cfl·h` (rounded so the
/// horizon is hit exactly).
pub fn leapfrog_wave(
    z0: impl Fn(f64) -> f64,
    zt0: impl Fn(f64) -> f64,
    u: impl Fn(f64) -> f64,
    intervals: usize,
    horizon: f64,
    cfl: f64,
) -> Result<FdSnapshot> {
    if intervals < 2 {
        return Err(Error::Domain("need at least two intervals".into()));
    }
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::Domain(format!("CFL number {cfl} outside (0, 1]")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let h = 1.0 / intervals as f64;
    let steps = (horizon / (cfl * h)).ceil() as usize;
    let dt = horizon / steps as f64;
    let r = (dt / h) * (dt / h);
    let sigma: Vec<f64> = (0..=intervals).map(|j| j as f64 * h).collect();
    let mut lap = vec![0.0; intervals + 1];

    let mut prev: Vec<f64> = sigma.iter().map(|&s| z0(s)).collect();
    prev[0] = 0.0;
    // Taylor start: z(dt) = z + dt z_t + ½dt² z_σσ
    laplacian(&prev, h, u(0.0), &mut lap);
    let mut cur: Vec<f64> = (0..=intervals)
        .map(|j| prev[j] + dt * zt0(sigma[j]) + 0.5 * r * lap[j])
        .collect();
    cur[0] = 0.0;
    let mut next = vec![0.0; intervals + 1];
    // one step past the horizon for a centered velocity
    for k in 1..=steps {
        laplacian(&cur, h, u(k as f64 * dt), &mut lap);
        for j in 0..=intervals {
            next[j] = 2.0 * cur[j] - prev[j] + r * lap[j];
        }
        next[0] = 0.0;
        if k == steps {
            break;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    let z_t = (0..=intervals).map(|j| (next[j] - prev[j]) / (2.0 * dt)).collect();
    Ok(FdSnapshot { sigma, z: cur, z_t })
}

/// `sqrt(½ ∫ (e_σ² + e_t²) dσ)` for `e = snapshot - (z, z_t)` with the
/// other field evaluated on the snapshot's nodes. `e_σ` uses second-order
/// differences; the integral uses the trapezoid rule.
pub fn energy_norm_difference(snapshot: &FdSnapshot, other: impl Fn(f64) -> (f64, f64)) -> f64 {
    let n = snapshot.sigma.len();
    let h = snapshot.spacing();
    let (mut ez, mut et) = (vec![0.0; n], vec![0.0; n]);
    for j in 0..n {
        let (z, zt) = other(snapshot.sigma[j]);
        ez[j] = snapshot.z[j] - z;
        et[j] = snapshot.z_t[j] - zt;
    }
    let mut acc = 0.0;
    for j in 0..n {
        let d = if j == 0 {
            (-3.0 * ez[0] + 4.0 * ez[1] - ez[2]) / (2.0 * h)
        } else if j == n - 1 {
            (3.0 * ez[j] - 4.0 * ez[j - 1] + ez[j - 2]) / (2.0 * h)
        } else {
            (ez[j + 1] - ez[j - 1]) / (2.0 * h)
        };
        let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
        acc += w * (d * d + et[j] * et[j]);
    }
    (0.5 * acc).sqrt()
}
