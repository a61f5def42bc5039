//! Banded, tapered Toeplitz estimate of the temporal correlation of the
//! Gaussianized series, with a banded Cholesky factor.
//!
//! Because the flat-top taper zeroes every lag beyond `2l`, both the
//! matrix and its Cholesky factor are banded; only the band is stored.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::MAX_ROWS;

/// Lower bound enforced on the smallest eigenvalue.
pub const EPS_PD: f64 = 1e-6;
const BAND_C: f64 = 2.0;
const SHRINK_RESOLUTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Taper {
    /// 1 on |x| <= 1, 2 - |x| on 1 < |x| <= 2, 0 beyond.
    FlatTop,
}

impl Taper {
    pub fn weight(self, x: f64) -> f64 {
        match self {
            Taper::FlatTop => {
                let x = x.abs();
                if x <= 1.0 {
                    1.0
                } else if x <= 2.0 {
                    2.0 - x
                } else {
                    0.0
                }
            }
        }
    }
}

/// Lower-triangular matrix with `bw` sub-diagonals, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedLower {
    n: usize,
    bw: usize,
    /// Row `i` holds columns `i - bw ..= i` at offsets `0 ..= bw`.
    data: Vec<f64>,
}

impl BandedLower {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i || i - j > self.bw {
            0.0
        } else {
            self.row(i)[j + self.bw - i]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Cholesky of the symmetric banded Toeplitz matrix with first row
    /// `acf[0..=bw]`, optionally with `shift` subtracted from the diagonal.
    /// `None` if the shifted matrix is not positive definite.
    fn factor_toeplitz(n: usize, acf: &[f64], shift: f64) -> Option<Self> {
        let bw = (acf.len() - 1).min(n.saturating_sub(1));
        let width = bw + 1;
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut sum = acf[i - j] - if i == j { shift } else { 0.0 };
                // Columns lo..j are shared by rows i and j.
                let (ri, rj) = (i * width, j * width);
                let a = &data[ri + lo + bw - i..ri + j + bw - i];
                let b = &data[rj + lo + bw - j..rj + bw];
                sum -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                if i == j {
                    if !(sum > 0.0) {
                        return None;
                    }
                    data[ri + bw] = sum.sqrt();
                } else {
                    data[ri + j + bw - i] = sum / data[rj + bw];
                }
            }
        }
        Some(Self { n, bw, data })
    }

    /// `L x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let row = &self.row(i)[lo + self.bw - i..];
                row.iter().zip(&x[lo..=i]).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Solves `L x = b` by forward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.row(i)[lo + self.bw - i..];
            let acc: f64 = row[..i - lo].iter().zip(&x[lo..i]).map(|(a, b)| a * b).sum();
            x[i] = (b[i] - acc) / row[i - lo];
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalCovariance {
    n: usize,
    /// Correlations at lags `0..=bandwidth` after tapering and shrinkage.
    acf: Vec<f64>,
    band_width: usize,
    taper: Taper,
    shrinkage: f64,
    chol: BandedLower,
}

impl TemporalCovariance {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Selected banding lag `l`.
    pub fn band_width(&self) -> usize {
        self.band_width
    }

    pub fn taper(&self) -> Taper {
        self.taper
    }

    /// Weight `s` of the identity in `(1 - s) Gamma + s I`.
    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    /// First row of the Toeplitz matrix, up to the last nonzero band.
    pub fn first_row(&self) -> &[f64] {
        &self.acf
    }

    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.acf.get(i.abs_diff(j)).copied().unwrap_or(0.0)
    }

    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.gamma(i, j))
    }

    pub fn chol_lower(&self) -> &BandedLower {
        &self.chol
    }

    /// Whitening: `C^{-1} z` by triangular solve.
    pub fn decorrelate(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        Ok(self.chol.solve(z))
    }

    /// Re-colouring: `C eps`.
    pub fn correlate(&self, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_len(eps.len())?;
        Ok(self.chol.mul_vec(eps))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", self.n),
                got: format!("{len} values"),
            });
        }
        Ok(())
    }
}

/// Sample autocorrelations `rho(0..n)` with the 1/n convention. A constant
/// series yields `rho(k) = 0` for `k >= 1`.
pub fn sample_acf(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mean = z.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = z.iter().map(|v| v - mean).collect();
    let gamma0: f64 = centred.iter().map(|v| v * v).sum();
    let mut acf = vec![0.0; n];
    acf[0] = 1.0;
    if gamma0 > 0.0 {
        for (k, slot) in acf.iter_mut().enumerate().skip(1) {
            let g: f64 = centred[..n - k].iter().zip(&centred[k..]).map(|(a, b)| a * b).sum();
            *slot = g / gamma0;
        }
    }
    acf
}

/// Smallest `l` such that the `K_n` lags after it are all insignificant.
pub fn select_band(acf: &[f64]) -> usize {
    let n = acf.len();
    let nf = n as f64;
    let threshold = BAND_C * (nf.log10().max(0.0) / nf).sqrt();
    let run = 5usize.max(nf.log10().max(0.0).sqrt().ceil() as usize);
    (0..n)
        .find(|&l| (l + 1..=l + run).take_while(|&k| k < n).all(|k| acf[k].abs() < threshold))
        .unwrap_or(n - 1)
}

pub fn estimate_temporal_covariance(z: &[f64]) -> Result<TemporalCovariance> {
    let n = z.len();
    if n < 2 {
        return Err(Error::TooShort { n, min: 2 });
    }
    if n > MAX_ROWS {
        return Err(Error::TraceTooLong { n, max: MAX_ROWS });
    }
    if let Some(row) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row, column: 0 });
    }
    let rho = sample_acf(z);
    let band = select_band(&rho);
    let taper = Taper::FlatTop;
    let bw = (2 * band).min(n - 1);
    let tapered: Vec<f64> = (0..=bw)
        .map(|k| if k == 0 { 1.0 } else { rho[k] * taper.weight(k as f64 / band as f64) })
        .collect();

    let shrunk = |s: f64| -> Vec<f64> {
        tapered
            .iter()
            .enumerate()
            .map(|(k, &g)| if k == 0 { 1.0 } else { (1.0 - s) * g })
            .collect()
    };
    let acceptable = |s: f64| BandedLower::factor_toeplitz(n, &shrunk(s), EPS_PD).is_some();

    let shrinkage = if acceptable(0.0) {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > SHRINK_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if acceptable(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let acf = shrunk(shrinkage);
    let chol = BandedLower::factor_toeplitz(n, &acf, 0.0).ok_or(Error::CholeskyFailure)?;
    Ok(TemporalCovariance { n, acf, band_width: band, taper, shrinkage, chol })
}

/// `epsilon = C^{-1} z`.
pub fn decorrelate(z: &[f64], cov: &TemporalCovariance) -> Result<Vec<f64>> {
    cov.decorrelate(z)
}
