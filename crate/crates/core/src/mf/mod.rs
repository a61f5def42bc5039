//! Model-free transform of a trace into IID standard normal residuals,
//! applied independently to each dimension:
//!
//! 1. `U_t = D_t(Y_t)` with a time-localized kernel CDF ([`local_cdf`]);
//! 2. `Z_t = Phi^{-1}(U_t)`;
//! 3. `eps = C^{-1} Z` where `C C^T` is a banded estimate of the temporal
//!    correlation of `Z` ([`covariance`]).
//!
//! [`inverse`] runs the three steps backwards, which is how new paths are
//! produced from new residuals.

pub mod covariance;
pub mod local_cdf;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use covariance::{decorrelate, estimate_temporal_covariance, BandedLower, Taper, TemporalCovariance};
pub use local_cdf::{fit_local_cdf, to_uniform, LocalCdf, ValueBandwidth, EPS_U, GRID_POINTS};
pub use crate::normal::to_gaussian;

use crate::error::{Error, Result};
use crate::normal;
use crate::trace::{PathTrace, ResidualMatrix, TraceWarning, MAX_ROWS};

/// Fitted transform for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionModel {
    pub cdf: LocalCdf,
    pub cov: TemporalCovariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    dims: Vec<DimensionModel>,
    n: usize,
    bandwidth: f64,
    dt: f64,
    source_id: String,
    dim_names: Vec<String>,
}

impl MfModel {
    pub fn dims(&self) -> &[DimensionModel] {
        &self.dims
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.dims.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Selected banding lag per dimension.
    pub fn band_widths(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.cov.band_width()).collect()
    }
}

/// Fits the per-dimension transform on `trace` with time bandwidth `b`.
pub fn fit_mf(trace: &PathTrace, b: f64, h: ValueBandwidth) -> Result<MfModel> {
    if let Some(TraceWarning::ConstantColumn { column }) = trace.warnings().first() {
        return Err(Error::ConstantColumn { column: *column });
    }
    if trace.n() > MAX_ROWS {
        return Err(Error::TraceTooLong { n: trace.n(), max: MAX_ROWS });
    }
    let dims = (0..trace.p())
        .into_par_iter()
        .map(|k| fit_dimension(&trace.column(k), b, h).map_err(|e| relabel(e, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MfModel {
        dims,
        n: trace.n(),
        bandwidth: b,
        dt: trace.dt(),
        source_id: trace.id().to_string(),
        dim_names: trace.dim_names().to_vec(),
    })
}

fn fit_dimension(series: &[f64], b: f64, h: ValueBandwidth) -> Result<DimensionModel> {
    let cdf = fit_local_cdf(series, b, h)?;
    let z = to_gaussian(&to_uniform(series, &cdf)?)?;
    let cov = estimate_temporal_covariance(&z)?;
    Ok(DimensionModel { cdf, cov })
}

fn relabel(err: Error, column: usize) -> Error {
    match err {
        Error::ConstantColumn { .. } => Error::ConstantColumn { column },
        Error::NonFinite { row, .. } => Error::NonFinite { row, column },
        other => other,
    }
}

/// Residuals of `trace` under `model`, one column per dimension.
pub fn forward(model: &MfModel, trace: &PathTrace) -> Result<ResidualMatrix> {
    if trace.n() != model.n || trace.p() != model.p() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", model.n, model.p()),
            got: format!("{}x{}", trace.n(), trace.p()),
        });
    }
    let columns = model
        .dims
        .par_iter()
        .enumerate()
        .map(|(k, dim)| {
            let z = to_gaussian(&to_uniform(&trace.column(k), &dim.cdf)?)?;
            dim.cov.decorrelate(&z)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = DMatrix::from_fn(model.n, model.p(), |t, k| columns[k][t]);
    ResidualMatrix::new(values, trace.id())
}

/// Maps residuals back to a path: `Y'_t = D_t^{-1}(Phi(C eps))`.
pub fn inverse(model: &MfModel, residuals: &ResidualMatrix) -> Result<PathTrace> {
    if residuals.n() != model.n || residuals.p() != model.p() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", model.n, model.p()),
            got: format!("{}x{}", residuals.n(), residuals.p()),
        });
    }
    let columns = model
        .dims
        .par_iter()
        .enumerate()
        .map(|(k, dim)| {
            let eps: Vec<f64> = residuals.values.column(k).iter().copied().collect();
            let z = dim.cov.correlate(&eps)?;
            Ok(z.iter()
                .enumerate()
                .map(|(t, &zt)| {
                    let u = normal::cdf(zt).clamp(EPS_U, 1.0 - EPS_U);
                    dim.cdf.quantile(t, u)
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let values = DMatrix::from_fn(model.n, model.p(), |t, k| columns[k][t]);
    PathTrace::new(values, model.dt, residuals.source_trace.clone(), model.dim_names.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{validate_trace, RngSpec};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1_trace(n: usize, phis: &[f64], seed: u64) -> PathTrace {
        let mut rng = RngSpec::new(seed, 0).rng();
        let p = phis.len();
        let mut state = vec![0.0; p];
        let mut rows = Vec::with_capacity(n);
        for t in 0..n + 100 {
            for k in 0..p {
                state[k] = phis[k] * state[k] + rng.sample::<f64, _>(StandardNormal);
            }
            if t >= 100 {
                rows.push(state.clone());
            }
        }
        PathTrace::from_rows(&rows, 1.0, format!("ar-{seed}")).unwrap()
    }

    #[test]
    fn structure_follows_trace() {
        let t = ar1_trace(200, &[0.5, 0.7], 1);
        let m = fit_mf(&t, 10.0, ValueBandwidth::Auto).unwrap();
        assert_eq!(m.p(), 2);
        let t3 = ar1_trace(150, &[0.5, 0.7, 0.2], 2);
        let m3 = fit_mf(&t3, 5.0, ValueBandwidth::Auto).unwrap();
        assert_eq!(m3.p(), 3);
        assert!(m3.dims().iter().all(|d| d.cov.gamma_matrix().shape() == (150, 150)));
    }

    #[test]
    fn constant_column_is_promoted() {
        let mut values = ar1_trace(100, &[0.5, 0.5], 3).values().clone();
        values.column_mut(1).fill(3.0);
        let t = validate_trace(values, 1.0, "c").unwrap();
        assert_eq!(
            fit_mf(&t, 5.0, ValueBandwidth::Auto).unwrap_err(),
            Error::ConstantColumn { column: 1 }
        );
    }

    #[test]
    fn round_trip_recovers_trace() {
        for b in [2.0, 10.0, 300.0] {
            let t = ar1_trace(300, &[0.9, -0.3], 4);
            let m = fit_mf(&t, b, ValueBandwidth::Auto).unwrap();
            let back = inverse(&m, &forward(&m, &t).unwrap()).unwrap();
            for k in 0..2 {
                let col = t.column(k);
                let range = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - col.iter().cloned().fold(f64::INFINITY, f64::min);
                let err = col
                    .iter()
                    .zip(back.column(k))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err <= 1e-3 * range, "b={b} k={k} err={err}");
            }
        }
    }

    #[test]
    fn zero_residuals_give_local_median() {
        let t = ar1_trace(120, &[0.6, 0.2], 5);
        let m = fit_mf(&t, 8.0, ValueBandwidth::Auto).unwrap();
        let zero = ResidualMatrix::new(DMatrix::zeros(120, 2), "z").unwrap();
        let y = inverse(&m, &zero).unwrap();
        for k in 0..2 {
            for tt in [0, 60, 119] {
                assert_eq!(y.values()[(tt, k)], m.dims()[k].cdf.quantile(tt, 0.5));
            }
        }
    }

    #[test]
    fn larger_residuals_move_further_from_centre() {
        // Identity temporal factor: white input under a global CDF.
        let t = ar1_trace(200, &[0.0], 6);
        let m = fit_mf(&t, 200.0, ValueBandwidth::Auto).unwrap();
        if m.dims()[0].cov.band_width() != 0 {
            return;
        }
        let mut rng = RngSpec::new(7, 0).rng();
        let eps = DMatrix::from_fn(200, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let one = inverse(&m, &ResidualMatrix::new(eps.clone(), "e").unwrap()).unwrap();
        let two = inverse(&m, &ResidualMatrix::new(eps * 2.0, "e").unwrap()).unwrap();
        for tt in 0..200 {
            let c = m.dims()[0].cdf.quantile(tt, 0.5);
            assert!((two.values()[(tt, 0)] - c).abs() >= (one.values()[(tt, 0)] - c).abs());
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let t = ar1_trace(250, &[0.8, 0.4], 8);
        let a = fit_mf(&t, 5.0, ValueBandwidth::Auto).unwrap();
        let b = fit_mf(&t, 5.0, ValueBandwidth::Auto).unwrap();
        assert_eq!(a, b);
        assert_eq!(forward(&a, &t).unwrap(), forward(&b, &t).unwrap());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let t = ar1_trace(100, &[0.5], 9);
        let m = fit_mf(&t, 5.0, ValueBandwidth::Auto).unwrap();
        let other = ar1_trace(90, &[0.5], 10);
        assert!(matches!(forward(&m, &other), Err(Error::ShapeMismatch { .. })));
        let r = ResidualMatrix::new(DMatrix::zeros(100, 2), "r").unwrap();
        assert!(matches!(inverse(&m, &r), Err(Error::ShapeMismatch { .. })));
    }
}
