//! Standard normal CDF and quantile.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile for `u` in (0, 1).
#[inline]
pub fn quantile(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

/// Maps a vector of probabilities to standard normal scores.
pub fn to_gaussian(u: &[f64]) -> Result<Vec<f64>> {
    u.iter()
        .map(|&v| {
            if v > 0.0 && v < 1.0 {
                Ok(quantile(v))
            } else {
                Err(Error::OutOfRange { value: v })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// erf by its Maclaurin series, summed until terms vanish; only used
    /// for |x| < 3 where cancellation stays harmless.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x * x / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    fn quantile_by_bisection(u: f64) -> f64 {
        let (mut lo, mut hi) = (-4.0, 4.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 0.5 * (1.0 + erf_series(mid / SQRT_2)) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn median_maps_to_zero() {
        assert_eq!(to_gaussian(&[0.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn phi_of_one_inverts() {
        let z = quantile(0.841_344_746_068_542_9);
        assert!((z - 1.0).abs() < 1e-8, "{z}");
    }

    #[test]
    fn two_sided_five_percent_matches_bisection_oracle() {
        let z = to_gaussian(&[0.025, 0.975]).unwrap();
        let lo = quantile_by_bisection(0.025);
        let hi = quantile_by_bisection(0.975);
        assert!((lo + 1.959_963_984_540_054).abs() < 1e-9);
        assert!((z[0] - lo).abs() < 1e-9 && (z[1] - hi).abs() < 1e-9, "{z:?}");
    }

    #[test]
    fn quantile_matches_oracle_across_range() {
        for i in 1..200 {
            let u = i as f64 / 200.0;
            assert!((quantile(u) - quantile_by_bisection(u)).abs() < 1e-9, "u={u}");
        }
    }

    #[test]
    fn rejects_closed_endpoints() {
        assert!(matches!(to_gaussian(&[0.0]), Err(Error::OutOfRange { .. })));
        assert!(matches!(to_gaussian(&[0.3, 1.0]), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn cdf_round_trips_quantile() {
        for &z in &[-7.5, -3.0, -0.2, 0.0, 1.3, 4.0] {
            assert!((quantile(cdf(z)) - z).abs() < 1e-9, "z={z}");
        }
    }
}
