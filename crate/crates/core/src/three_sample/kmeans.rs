//! Seeded k-means (k-means++ initialization, Lloyd iterations) used to bin
//! the training cloud.

use rand::Rng;

use super::embed::EmbeddedCloud;
use crate::error::{Error, Result};
use crate::trace::RngSpec;

pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    centroids: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Binning {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Nearest centroid; ties go to the lower index.
    pub fn assign(&self, point: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = sq_dist(point, c);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    pub fn assign_all(&self, cloud: &EmbeddedCloud) -> Vec<usize> {
        cloud.iter().map(|p| self.assign(p)).collect()
    }
}

fn distinct_points(cloud: &EmbeddedCloud) -> usize {
    let mut rows: Vec<&[f64]> = cloud.iter().collect();
    let cmp = |a: &&[f64], b: &&[f64]| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    };
    rows.sort_by(cmp);
    rows.dedup_by(|a, b| cmp(&&**a, &&**b).is_eq());
    rows.len()
}

/// Clusters the training cloud into `k` bins.
pub fn bin_assign(training: &EmbeddedCloud, k: usize, rng: RngSpec) -> Result<Binning> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if training.is_empty() {
        return Err(Error::EmptySet);
    }
    let distinct = distinct_points(training);
    if k > distinct {
        return Err(Error::KTooLarge { k, distinct });
    }
    let mut rng = rng.rng();
    let n = training.len();

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = vec![training.point(rng.random_range(0..n)).to_vec()];
    let mut nearest: Vec<f64> = training.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in nearest.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        // Guard against landing on an existing centroid through rounding.
        if nearest[pick] == 0.0 {
            pick = nearest.iter().enumerate().fold(0, |b, (i, &d)| if d > nearest[b] { i } else { b });
        }
        let c = training.point(pick).to_vec();
        for (i, p) in training.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &c));
        }
        centroids.push(c);
    }

    let mut binning = Binning { centroids };
    let mut labels = binning.assign_all(training);
    let dim = training.dim();
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in training.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, (sum, &count)) in binning.centroids.iter_mut().zip(sums.into_iter().zip(&counts)) {
            if count > 0 {
                *c = sum.into_iter().map(|s| s / count as f64).collect();
            }
        }
        let next = binning.assign_all(training);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(binning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn blobs(seed: u64) -> (EmbeddedCloud, Vec<usize>) {
        let mut rng = RngSpec::new(seed, 0).rng();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for i in 0..400 {
            let centre = if i % 2 == 0 { -10.0 } else { 10.0 };
            pts.push((0..3).map(|_| centre + rng.sample::<f64, _>(StandardNormal)).collect());
            truth.push(i % 2);
        }
        (EmbeddedCloud::from_points(&pts, 3, "b").unwrap(), truth)
    }

    #[test]
    fn single_bin_takes_everything() {
        let (c, _) = blobs(1);
        let b = bin_assign(&c, 1, RngSpec::new(0, 0)).unwrap();
        assert!(b.assign_all(&c).iter().all(|&l| l == 0));
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let (c, truth) = blobs(2);
        let b = bin_assign(&c, 2, RngSpec::new(3, 0)).unwrap();
        let labels = b.assign_all(&c);
        let agree = labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let purity = agree.max(labels.len() - agree) as f64 / labels.len() as f64;
        assert!(purity >= 0.99, "{purity}");
    }

    #[test]
    fn seeded_runs_match() {
        let (c, _) = blobs(4);
        let a = bin_assign(&c, 5, RngSpec::new(8, 1)).unwrap();
        let b = bin_assign(&c, 5, RngSpec::new(8, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_bins_for_duplicates() {
        let c = EmbeddedCloud::from_points(&vec![vec![1.0, 2.0]; 10], 1, "d").unwrap();
        assert_eq!(bin_assign(&c, 2, RngSpec::new(0, 0)).unwrap_err(), Error::KTooLarge { k: 2, distinct: 1 });
    }
}
