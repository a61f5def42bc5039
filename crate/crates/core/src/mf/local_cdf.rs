//! Time-localized kernel CDF estimates `D_t(y)`.
//!
//! Row `t` is `sum_s w(t-s) Phi((y - Y_s)/h) / sum_s w(t-s)` with Gaussian
//! time weights `w(u) = exp(-u^2 / (2 b^2))`, tabulated on a uniform grid.
//! The time sum is a linear convolution along each grid column, done by
//! zero-padded FFT so the cost does not grow with `b`.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::normal;
use crate::trace::MAX_ROWS;

/// Evaluation points per dimension.
pub const GRID_POINTS: usize = 4096;
/// Probabilities are kept inside `[EPS_U, 1 - EPS_U]`.
pub const EPS_U: f64 = 1e-6;

/// How the value-axis smoothing bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueBandwidth {
    /// Silverman's rule on the time-weighted local samples.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCdf {
    grid_lo: f64,
    grid_step: f64,
    grid_len: usize,
    n: usize,
    /// Row-major `n x grid_len`.
    cdf_values: Vec<f64>,
    bandwidth_time: f64,
    bandwidth_value: f64,
}

impl LocalCdf {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth_time(&self) -> f64 {
        self.bandwidth_time
    }

    pub fn bandwidth_value(&self) -> f64 {
        self.bandwidth_value
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn grid_y(&self) -> Vec<f64> {
        (0..self.grid_len).map(|g| self.grid_point(g)).collect()
    }

    #[inline]
    fn grid_point(&self, g: usize) -> f64 {
        self.grid_lo + g as f64 * self.grid_step
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.cdf_values[t * self.grid_len..(t + 1) * self.grid_len]
    }

    /// `D_t(y)` by linear interpolation on the grid, clamped to
    /// `[EPS_U, 1 - EPS_U]`. Points off the grid map to the clamp bounds.
    pub fn eval(&self, t: usize, y: f64) -> f64 {
        let row = self.row(t);
        let x = (y - self.grid_lo) / self.grid_step;
        if x < 0.0 {
            return EPS_U;
        }
        if x > (self.grid_len - 1) as f64 {
            return 1.0 - EPS_U;
        }
        let i = (x.floor() as usize).min(self.grid_len - 2);
        let frac = x - i as f64;
        (row[i] + frac * (row[i + 1] - row[i])).clamp(EPS_U, 1.0 - EPS_U)
    }

    /// `D_t^{-1}(u)`: bisection for the bracketing grid cell, then exact
    /// inversion of the linear interpolant.
    pub fn quantile(&self, t: usize, u: f64) -> f64 {
        let row = self.row(t);
        let u = u.clamp(EPS_U, 1.0 - EPS_U);
        let g = row.partition_point(|&v| v < u);
        if g == 0 {
            return self.grid_point(0);
        }
        if g == self.grid_len {
            return self.grid_point(self.grid_len - 1);
        }
        let (lo, hi) = (row[g - 1], row[g]);
        self.grid_point(g - 1) + (u - lo) / (hi - lo) * self.grid_step
    }
}

/// Fits `D_t` for every `t` on the default [`GRID_POINTS`] grid.
pub fn fit_local_cdf(series: &[f64], b: f64, h: ValueBandwidth) -> Result<LocalCdf> {
    fit_local_cdf_on_grid(series, b, h, GRID_POINTS)
}

pub fn fit_local_cdf_on_grid(
    series: &[f64],
    b: f64,
    h: ValueBandwidth,
    grid_len: usize,
) -> Result<LocalCdf> {
    let n = series.len();
    if n < crate::trace::MIN_ROWS {
        return Err(Error::TooShort { n, min: crate::trace::MIN_ROWS });
    }
    if n > MAX_ROWS {
        return Err(Error::TraceTooLong { n, max: MAX_ROWS });
    }
    if !(b.is_finite() && b >= 1.0) {
        return Err(Error::InvalidParameter(format!("time bandwidth must be >= 1, got {b}")));
    }
    if grid_len < 2 {
        return Err(Error::InvalidParameter("grid needs at least 2 points".into()));
    }
    if let Some(row) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row, column: 0 });
    }
    if series.iter().all(|&v| v == series[0]) {
        return Err(Error::ConstantColumn { column: 0 });
    }
    if b > n as f64 {
        log::warn!("time bandwidth {b} exceeds series length {n}; D_t degenerates to a global CDF");
    }

    let kernel: Vec<f64> = (0..n)
        .map(|u| {
            let u = u as f64 / b;
            (-0.5 * u * u).exp()
        })
        .collect();

    let h = match h {
        ValueBandwidth::Auto => silverman_bandwidth(series, &kernel),
        ValueBandwidth::Fixed(h) if h.is_finite() && h > 0.0 => h,
        ValueBandwidth::Fixed(h) => {
            return Err(Error::InvalidParameter(format!("value bandwidth must be positive, got {h}")))
        }
    };

    let (min, max) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let grid_lo = min - 3.0 * h;
    let grid_step = (max + 3.0 * h - grid_lo) / (grid_len - 1) as f64;

    let weight_totals = window_totals(&kernel);
    let cdf_values = convolve_columns(series, &kernel, &weight_totals, grid_lo, grid_step, grid_len, h);

    Ok(LocalCdf {
        grid_lo,
        grid_step,
        grid_len,
        n,
        cdf_values,
        bandwidth_time: b,
        bandwidth_value: h,
    })
}

/// `U_t = D_t(Y_t)`.
pub fn to_uniform(series: &[f64], cdf: &LocalCdf) -> Result<Vec<f64>> {
    if series.len() != cdf.n {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", cdf.n),
            got: format!("{} values", series.len()),
        });
    }
    Ok(series.iter().enumerate().map(|(t, &y)| cdf.eval(t, y)).collect())
}

/// `sum_s kernel[|t - s|]` for every `t`.
fn window_totals(kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let mut prefix = vec![0.0; n + 1];
    for (u, &k) in kernel.iter().enumerate() {
        prefix[u + 1] = prefix[u] + k;
    }
    // Left side covers lags 1..=t, right side lags 0..=n-1-t.
    (0..n).map(|t| prefix[t + 1] - prefix[1] + prefix[n - t]).collect()
}

/// Silverman's rule with the local spread averaged over time:
/// `h = 1.06 * sigma_w * m_w^(-1/5)`, where `sigma_w^2` is the mean of the
/// time-weighted local variances and `m_w` the effective sample size of an
/// interior window.
fn silverman_bandwidth(series: &[f64], kernel: &[f64]) -> f64 {
    let n = series.len();
    let radius = kernel.iter().rposition(|&k| k > 1e-14).unwrap_or(0);
    let mut var_sum = 0.0;
    for t in 0..n {
        let lo = t.saturating_sub(radius);
        let hi = (t + radius).min(n - 1);
        let (mut w_sum, mut mean) = (0.0, 0.0);
        for s in lo..=hi {
            let w = kernel[t.abs_diff(s)];
            w_sum += w;
            mean += w * series[s];
        }
        mean /= w_sum;
        let var: f64 = (lo..=hi)
            .map(|s| kernel[t.abs_diff(s)] * (series[s] - mean).powi(2))
            .sum::<f64>()
            / w_sum;
        var_sum += var;
    }
    let local_sd = (var_sum / n as f64).sqrt();

    let centre = n / 2;
    let (w1, w2) = (0..n).fold((0.0, 0.0), |(a, b), s| {
        let w = kernel[centre.abs_diff(s)];
        (a + w, b + w * w)
    });
    let effective = w1 * w1 / w2;

    let global_mean = series.iter().sum::<f64>() / n as f64;
    let global_sd =
        (series.iter().map(|v| (v - global_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    // A locally flat but globally varying series would otherwise get h = 0.
    (1.06 * local_sd * effective.powf(-0.2)).max(1e-3 * global_sd)
}

fn convolve_columns(
    series: &[f64],
    kernel: &[f64],
    totals: &[f64],
    grid_lo: f64,
    grid_step: f64,
    grid_len: usize,
    h: f64,
) -> Vec<f64> {
    let n = series.len();
    let len = (2 * n - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    let mut spectrum = vec![Complex::new(0.0, 0.0); len];
    spectrum[0].re = kernel[0];
    for u in 1..n {
        spectrum[u].re = kernel[u];
        spectrum[len - u].re = kernel[u];
    }
    fwd.process(&mut spectrum);
    let norm = 1.0 / len as f64;
    for c in &mut spectrum {
        *c *= norm;
    }

    let smooth_step = |g: usize, y_s: f64| -> f64 {
        let z = (grid_lo + g as f64 * grid_step - y_s) / h;
        if z < -8.5 {
            0.0
        } else if z > 8.5 {
            1.0
        } else {
            normal::cdf(z)
        }
    };

    let mut out = vec![0.0; n * grid_len];
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fwd.get_inplace_scratch_len()];
    // Two real columns per complex transform: the kernel is real and
    // symmetric, so the real and imaginary parts convolve independently.
    for g in (0..grid_len).step_by(2) {
        let g2 = g + 1;
        for (s, slot) in buf.iter_mut().enumerate() {
            *slot = if s < n {
                let re = smooth_step(g, series[s]);
                let im = if g2 < grid_len { smooth_step(g2, series[s]) } else { 0.0 };
                Complex::new(re, im)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fwd.process_with_scratch(&mut buf, &mut scratch);
        for (v, k) in buf.iter_mut().zip(&spectrum) {
            *v *= k;
        }
        inv.process_with_scratch(&mut buf, &mut scratch);
        for t in 0..n {
            out[t * grid_len + g] = buf[t].re / totals[t];
            if g2 < grid_len {
                out[t * grid_len + g2] = buf[t].im / totals[t];
            }
        }
    }

    for row in out.chunks_mut(grid_len) {
        let mut running = EPS_U;
        for v in row.iter_mut() {
            running = running.max(v.clamp(EPS_U, 1.0 - EPS_U));
            *v = running;
        }
    }
    out
}
