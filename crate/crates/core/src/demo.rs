//! Synthetic pursuit-style traces for self-contained runs.
//!
//! A demo trace is a smooth 2-D route plus AR(1) jitter whose
//! cross-dimension correlation flips halfway through, so the segmenter has
//! something to find.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{validate_trace, PathTrace, RngSpec, MIN_ROWS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub n: usize,
    /// AR(1) coefficient of the jitter.
    pub ar: f64,
    /// Stationary standard deviation of the jitter, world units.
    pub noise_sd: f64,
    /// Innovation correlation between x and y before and after the midpoint.
    pub rho_before: f64,
    pub rho_after: f64,
    /// Length of the route along x.
    pub extent: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { n: 400, ar: 0.8, noise_sd: 1.0, rho_before: 0.7, rho_after: -0.7, extent: 60.0 }
    }
}

/// Noise-free route at `s` in `[0, 1]`.
pub fn route(s: f64, extent: f64) -> [f64; 2] {
    use std::f64::consts::PI;
    let x = extent * s + 0.1 * extent * (3.0 * PI * s).sin();
    let y = 0.35 * extent * (2.0 * PI * s).sin() * (1.0 - 0.4 * s);
    [x, y]
}

/// One route plus jitter trace drawn from `rng`.
pub fn pursuit_trace(config: &DemoConfig, rng: RngSpec, id: &str) -> Result<PathTrace> {
    let DemoConfig { n, ar, noise_sd, rho_before, rho_after, extent } = *config;
    if n < MIN_ROWS {
        return Err(Error::TooShort { n, min: MIN_ROWS });
    }
    if ar.abs() >= 1.0 || noise_sd < 0.0 || rho_before.abs() > 1.0 || rho_after.abs() > 1.0 {
        return Err(Error::InvalidParameter(format!("bad demo config {config:?}")));
    }
    let innovation = noise_sd * (1.0 - ar * ar).sqrt();
    let mut rng = rng.rng();
    let mut state = [0.0; 2];
    let mut values = DMatrix::zeros(n, 2);
    for t in 0..n {
        let rho = if t < n / 2 { rho_before } else { rho_after };
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let shock = [a, rho * a + (1.0 - rho * rho).sqrt() * b];
        for k in 0..2 {
            state[k] = if t == 0 { noise_sd * shock[k] } else { ar * state[k] + innovation * shock[k] };
        }
        let base = route(t as f64 / (n - 1) as f64, extent);
        values[(t, 0)] = base[0] + state[0];
        values[(t, 1)] = base[1] + state[1];
    }
    validate_trace(values, 1.0, id)
}

/// A source trace and a similar trace: same route, independent jitter.
pub fn pursuit_pair(config: &DemoConfig, seed: u64) -> Result<(PathTrace, PathTrace)> {
    let source = pursuit_trace(config, RngSpec::new(seed, 0), "demo-source")?;
    let similar = pursuit_trace(config, RngSpec::new(seed, 1), "demo-similar")?;
    Ok((source, similar))
}
