//! Three-sample data-copying test on subsequence embeddings.
//!
//! Generated points `Q` and held-out points `P` are compared by their
//! Euclidean distance to the training cloud `T`. `rho` is the fraction of
//! `(q, p)` pairs with `d(q, T) > d(p, T)` (strict, ties count 0); `Z_U`
//! is its Mann-Whitney z-score and `C_T` the `P`-weighted average of
//! per-bin z-scores. Negative values flag copying, positive values
//! underfitting.

pub mod embed;
pub mod kmeans;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use embed::{default_stride, embed, EmbeddedCloud, WindowLength};
pub use kmeans::{bin_assign, Binning};

use crate::error::{Error, Result};
use crate::trace::{PathTrace, RngSpec};

/// Euclidean distance from `x` to its nearest neighbour in `set`.
///
/// Exact: candidates are abandoned only once their partial sum already
/// exceeds the best full sum.
pub fn dist_to_set(x: &[f64], set: &EmbeddedCloud) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    if x.len() != set.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, set has {}",
            x.len(),
            set.dim()
        )));
    }
    let mut best = f64::INFINITY;
    'points: for t in set.iter() {
        let mut acc = 0.0;
        for (a, b) in x.iter().zip(t) {
            acc += (a - b) * (a - b);
            if acc > best {
                continue 'points;
            }
        }
        best = acc;
    }
    Ok(best.sqrt())
}

/// Distances of every point of `cloud` to `set`, computed in parallel.
pub fn distances(cloud: &EmbeddedCloud, set: &EmbeddedCloud) -> Result<Vec<f64>> {
    (0..cloud.len()).into_par_iter().map(|i| dist_to_set(cloud.point(i), set)).collect()
}

/// Number of pairs with `q > p`, by sorting `p` and binary search.
pub fn exceedance_count(dq: &[f64], dp: &[f64]) -> u64 {
    let mut sorted = dp.to_vec();
    sorted.sort_by(f64::total_cmp);
    dq.iter().map(|&x| sorted.partition_point(|&v| v < x) as u64).sum()
}

/// `rho` from precomputed distance vectors.
pub fn rho_from_distances(dq: &[f64], dp: &[f64]) -> f64 {
    exceedance_count(dq, dp) as f64 / (dq.len() as f64 * dp.len() as f64)
}

/// Mann-Whitney normal approximation, no tie correction.
pub fn z_from_count(u: f64, m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::DegenerateSizes { m, n });
    }
    let (m, n) = (m as f64, n as f64);
    Ok((u - m * n / 2.0) / (m * n * (m + n + 1.0) / 12.0).sqrt())
}

pub fn rho_t(q: &EmbeddedCloud, p: &EmbeddedCloud, t: &EmbeddedCloud) -> Result<f64> {
    if q.is_empty() || p.is_empty() {
        return Err(Error::DegenerateSizes { m: q.len(), n: p.len() });
    }
    Ok(rho_from_distances(&distances(q, t)?, &distances(p, t)?))
}

pub fn z_u(q: &EmbeddedCloud, p: &EmbeddedCloud, t: &EmbeddedCloud) -> Result<f64> {
    if q.is_empty() || p.is_empty() {
        return Err(Error::DegenerateSizes { m: q.len(), n: p.len() });
    }
    let dq = distances(q, t)?;
    let dp = distances(p, t)?;
    z_from_count(exceedance_count(&dq, &dp) as f64, dq.len(), dp.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestParams {
    pub window: usize,
    pub stride: usize,
    pub k: usize,
    pub tau: f64,
    pub seed: u64,
    pub stream_id: u64,
    /// Sizes of the generated, held-out and training clouds.
    pub m: usize,
    pub n: usize,
    pub t_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bin: usize,
    pub count_p: usize,
    pub count_q: usize,
    pub retained: bool,
    pub z_u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeSampleReport {
    pub rho: f64,
    pub z_u_global: f64,
    pub bins: Vec<BinReport>,
    pub c_t: f64,
    pub params: TestParams,
}

/// Bins `T` into `k` cells, computes `Z_U` in every cell that holds at
/// least `max(2, tau * size / k)` points of both `Q` and `P`, and averages
/// them with weights `#{P in cell} / n`, renormalized over retained cells.
pub fn c_t(
    q: &EmbeddedCloud,
    p: &EmbeddedCloud,
    t: &EmbeddedCloud,
    k: usize,
    tau: f64,
    rng: RngSpec,
) -> Result<ThreeSampleReport> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [0, 1), got {tau}")));
    }
    let (m, n) = (q.len(), p.len());
    if m == 0 || n == 0 {
        return Err(Error::DegenerateSizes { m, n });
    }
    let dq = distances(q, t)?;
    let dp = distances(p, t)?;
    let u = exceedance_count(&dq, &dp) as f64;
    let rho = u / (m as f64 * n as f64);
    let z_u_global = z_from_count(u, m, n)?;

    let binning = bin_assign(t, k, rng)?;
    let q_bins = binning.assign_all(q);
    let p_bins = binning.assign_all(p);
    let min_q = 2f64.max(tau * m as f64 / k as f64);
    let min_p = 2f64.max(tau * n as f64 / k as f64);

    let mut bins = Vec::with_capacity(k);
    let (mut weighted, mut weight) = (0.0, 0.0);
    for bin in 0..k {
        let bq: Vec<f64> = dq.iter().zip(&q_bins).filter(|(_, &b)| b == bin).map(|(&d, _)| d).collect();
        let bp: Vec<f64> = dp.iter().zip(&p_bins).filter(|(_, &b)| b == bin).map(|(&d, _)| d).collect();
        let retained = bq.len() as f64 >= min_q && bp.len() as f64 >= min_p;
        let z = if retained {
            let z = z_from_count(exceedance_count(&bq, &bp) as f64, bq.len(), bp.len())?;
            let w = bp.len() as f64 / n as f64;
            weighted += w * z;
            weight += w;
            Some(z)
        } else {
            None
        };
        bins.push(BinReport { bin, count_p: bp.len(), count_q: bq.len(), retained, z_u: z });
    }
    if weight == 0.0 {
        return Err(Error::NoBinsRetained);
    }
    Ok(ThreeSampleReport {
        rho,
        z_u_global,
        bins,
        c_t: weighted / weight,
        params: TestParams {
            window: t.window(),
            stride: t.stride(),
            k,
            tau,
            seed: rng.seed,
            stream_id: rng.stream_id,
            m,
            n,
            t_size: t.len(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub window: WindowLength,
    /// `None` means half a window.
    pub stride: Option<usize>,
    /// `None` means `max(1, n_P / 50)`.
    pub k: Option<usize>,
    pub tau: f64,
    pub rng: RngSpec,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { window: WindowLength::Auto, stride: None, k: None, tau: 0.0, rng: RngSpec::new(0, 0) }
    }
}

pub fn default_k(n_p: usize) -> usize {
    (n_p / 50).max(1)
}

/// Embeds every trace with a common window, pools them by role
/// (training, held-out, generated) and runs [`c_t`].
pub fn evaluate_traces(
    sources: &[PathTrace],
    held_out: &[PathTrace],
    synthetic: &[PathTrace],
    params: &EvalParams,
) -> Result<ThreeSampleReport> {
    for (role, list) in [("training", sources), ("held-out", held_out), ("synthetic", synthetic)] {
        if list.is_empty() {
            return Err(Error::InvalidParameter(format!("no {role} traces")));
        }
    }
    let all = sources.iter().chain(held_out).chain(synthetic);
    let p = sources[0].p();
    if let Some(bad) = all.clone().find(|t| t.p() != p) {
        return Err(Error::DimensionMismatch(format!(
            "trace {} has {} dimensions, expected {p}",
            bad.id(),
            bad.p()
        )));
    }
    let shortest = all.map(PathTrace::n).min().unwrap_or(0);
    let window = WindowLength::Fixed(params.window.resolve(shortest));
    let pool = |list: &[PathTrace]| -> Result<EmbeddedCloud> {
        let clouds = list.iter().map(|t| embed(t, window, params.stride)).collect::<Result<Vec<_>>>()?;
        EmbeddedCloud::concat(&clouds)
    };
    let t = pool(sources)?;
    let p_cloud = pool(held_out)?;
    let q = pool(synthetic)?;
    let k = params.k.unwrap_or_else(|| default_k(p_cloud.len()));
    c_t(&q, &p_cloud, &t, k, params.tau, params.rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_cloud(n: usize, dim: usize, seed: u64) -> EmbeddedCloud {
        let mut rng = RngSpec::new(seed, 0).rng();
        let pts: Vec<Vec<f64>> =
            (0..n).map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()).collect();
        EmbeddedCloud::from_points(&pts, dim, "g").unwrap()
    }

    fn brute_force(x: &[f64], set: &EmbeddedCloud) -> f64 {
        set.iter()
            .map(|t| x.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn member_and_pythagorean_distances() {
        let set = EmbeddedCloud::from_points(&[vec![0.0, 0.0]], 1, "o").unwrap();
        assert_eq!(dist_to_set(&[3.0, 4.0], &set).unwrap(), 5.0);
        let g = gaussian_cloud(50, 4, 1);
        assert_eq!(dist_to_set(g.point(17), &g).unwrap(), 0.0);
    }

    #[test]
    fn pruned_scan_equals_brute_force() {
        let t = gaussian_cloud(300, 6, 2);
        let q = gaussian_cloud(100, 6, 3);
        for x in q.iter() {
            assert_eq!(dist_to_set(x, &t).unwrap(), brute_force(x, &t));
        }
    }

    #[test]
    fn empty_set_and_bad_dimension() {
        let t = gaussian_cloud(5, 3, 4);
        assert!(matches!(dist_to_set(&[1.0], &t), Err(Error::DimensionMismatch(_))));
        let empty = t.subset(&[]);
        assert_eq!(dist_to_set(&[0.0, 0.0, 0.0], &empty).unwrap_err(), Error::EmptySet);
    }

    #[test]
    fn ties_and_dominance() {
        let d = [0.5, 1.0, 2.0];
        assert_eq!(rho_from_distances(&d, &d), 1.0 / 3.0);
        let t = gaussian_cloud(50, 3, 5);
        let p = gaussian_cloud(40, 3, 6);
        assert_eq!(rho_t(&p, &p, &t).unwrap(), {
            let dp = distances(&p, &t).unwrap();
            rho_from_distances(&dp, &dp)
        });
        // Copies of T sit at distance 0, strictly below every held-out point.
        assert_eq!(rho_t(&t, &p, &t).unwrap(), 0.0);
        assert_eq!(rho_from_distances(&[5.0, 6.0], &[1.0, 2.0, 3.0]), 1.0);
    }

    #[test]
    fn rho_matches_pairwise_count() {
        let mut rng = RngSpec::new(7, 0).rng();
        let dq: Vec<f64> = (0..80).map(|_| (rng.random_range(0..20) as f64) / 4.0).collect();
        let dp: Vec<f64> = (0..60).map(|_| (rng.random_range(0..20) as f64) / 4.0).collect();
        let pairs = dq.iter().flat_map(|x| dp.iter().map(move |z| (x > z) as u64)).sum::<u64>();
        assert_eq!(exceedance_count(&dq, &dp), pairs);
    }

    #[test]
    fn z_score_arithmetic() {
        assert_eq!(z_from_count(100.0 * 100.0 / 2.0, 100, 100).unwrap(), 0.0);
        let z = z_from_count(0.0, 100, 100).unwrap();
        let oracle = -5000.0 / (10000.0f64 * 201.0 / 12.0).sqrt();
        assert!((z - oracle).abs() < 1e-12);
        assert!((z + 12.217).abs() < 1e-3, "{z}");
        assert!(z_from_count(0.0, 0, 5).is_err());
    }

    #[test]
    fn single_bin_reduces_to_global_z() {
        let t = gaussian_cloud(200, 4, 8);
        let q = gaussian_cloud(120, 4, 9);
        let p = gaussian_cloud(100, 4, 10);
        let r = c_t(&q, &p, &t, 1, 0.0, RngSpec::new(0, 0)).unwrap();
        assert_eq!(r.c_t, r.z_u_global);
        assert_eq!(r.z_u_global, z_u(&q, &p, &t).unwrap());
    }

    #[test]
    fn training_copies_flag_copying() {
        let t = gaussian_cloud(400, 3, 11);
        let p = gaussian_cloud(400, 3, 12);
        let idx: Vec<usize> = (0..200).collect();
        let q = t.subset(&idx);
        let r = c_t(&q, &p, &t, 4, 0.0, RngSpec::new(1, 0)).unwrap();
        assert!(r.bins.iter().filter_map(|b| b.z_u).all(|z| z < 0.0));
        assert!(r.c_t < -5.0, "{}", r.c_t);
        // Same set on both sides: only the diagonal pairs tie, so rho sits
        // just under one half and every bin leans negative.
        let same = c_t(&p, &p, &t, 4, 0.0, RngSpec::new(1, 0)).unwrap();
        let n = 400.0;
        assert!((same.rho - (n - 1.0) / (2.0 * n)).abs() < 1e-12);
        assert!(same.bins.iter().filter_map(|b| b.z_u).all(|z| z < 0.0));
    }

    #[test]
    fn sparse_bins_are_dropped() {
        let t = gaussian_cloud(200, 2, 13);
        let q = gaussian_cloud(3, 2, 14);
        let p = gaussian_cloud(3, 2, 15);
        match c_t(&q, &p, &t, 10, 0.0, RngSpec::new(0, 0)) {
            Ok(r) => assert!(r.bins.iter().any(|b| !b.retained)),
            Err(e) => assert_eq!(e, Error::NoBinsRetained),
        }
        assert!(c_t(&q, &p, &t, 1, 1.0, RngSpec::new(0, 0)).is_err());
    }

    #[test]
    fn evaluate_checks_roles_and_dims() {
        let rows: Vec<Vec<f64>> = (0..100).map(|t| vec![t as f64, (t as f64).sin()]).collect();
        let a = PathTrace::from_rows(&rows, 1.0, "a").unwrap();
        let r = evaluate_traces(&[a.clone()], &[a.clone()], &[a.clone()], &EvalParams::default()).unwrap();
        assert_eq!(r.params.window, 10);
        assert!(evaluate_traces(&[a.clone()], &[a.clone()], &[], &EvalParams::default()).is_err());
        let rows3: Vec<Vec<f64>> = (0..100).map(|t| vec![t as f64, 1.0 + t as f64, (t as f64).cos()]).collect();
        let b = PathTrace::from_rows(&rows3, 1.0, "b").unwrap();
        assert!(matches!(
            evaluate_traces(&[a.clone()], &[a], &[b], &EvalParams::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn dists() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.0f64..10.0, 1..60)
        }

        proptest! {
            #[test]
            fn rho_is_a_rank_statistic(dq in dists(), dp in dists()) {
                let f = |v: &[f64]| v.iter().map(|x| (x * 0.7).exp() + 3.0).collect::<Vec<_>>();
                prop_assert_eq!(rho_from_distances(&dq, &dp), rho_from_distances(&f(&dq), &f(&dp)));
            }

            #[test]
            fn swapped_roles_sum_to_at_most_one(dq in dists(), dp in dists()) {
                let total = rho_from_distances(&dq, &dp) + rho_from_distances(&dp, &dq);
                prop_assert!(total <= 1.0 + 1e-12);
                let ties = dq.iter().any(|a| dp.contains(a));
                if !ties {
                    prop_assert!((total - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn z_sign_follows_rho(dq in dists(), dp in dists()) {
                let rho = rho_from_distances(&dq, &dp);
                let u = exceedance_count(&dq, &dp) as f64;
                let z = z_from_count(u, dq.len(), dp.len()).unwrap();
                prop_assert_eq!(z.partial_cmp(&0.0), (rho - 0.5).partial_cmp(&0.0));
            }
        }
    }
}
