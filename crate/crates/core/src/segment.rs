//! Detection of drifting cross-correlation in MF residuals, recursive
//! binary segmentation, and stitching of per-segment paths.
//!
//! The test statistic is the CUSUM of centred cross-products
//! `eps_i(t) eps_j(t)` over all dimension pairs; its null distribution is
//! approximated by a Rademacher multiplier bootstrap of the bridged
//! partial-sum process.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{PathTrace, ResidualMatrix, RngSpec};

pub const BOOTSTRAP_REPLICATES: usize = 500;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// `max(32, ceil(n / 10))`.
pub fn default_min_len(n: usize) -> usize {
    32usize.max(n.div_ceil(10))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityTest {
    pub pvalue: f64,
    /// First row of the later regime, i.e. the CUSUM peak splits the input
    /// into `..argmax_index` and `argmax_index..`.
    pub argmax_index: usize,
    pub statistic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub index: usize,
    pub pvalue: f64,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationPlan {
    pub n: usize,
    pub boundaries: Vec<usize>,
    pub min_len: usize,
    pub alpha: f64,
    pub pvalues: Vec<SplitRecord>,
}

impl SegmentationPlan {
    /// Trivial plan: one segment covering `0..n`.
    pub fn whole(n: usize, min_len: usize, alpha: f64) -> Self {
        Self { n, boundaries: Vec::new(), min_len, alpha, pvalues: Vec::new() }
    }

    /// Half-open row ranges tiling `0..n`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.boundaries.len() + 2);
        edges.push(0);
        edges.extend_from_slice(&self.boundaries);
        edges.push(self.n);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// CUSUM-of-cross-products test with a multiplier bootstrap p-value.
/// Inputs shorter than `2 * min_len`, or with a single dimension, are
/// reported as stationary (`pvalue = 1`).
pub fn test_crosscorr_stationarity(
    residuals: &ResidualMatrix,
    min_len: usize,
    rng: RngSpec,
) -> StationarityTest {
    let (n, p) = residuals.values.shape();
    let vacuous = StationarityTest { pvalue: 1.0, argmax_index: n / 2, statistic: 0.0 };
    if p < 2 || n < 2 * min_len.max(1) {
        return vacuous;
    }

    let mut products: Vec<Vec<f64>> = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in i + 1..p {
            let x: Vec<f64> = residuals
                .values
                .column(i)
                .iter()
                .zip(residuals.values.column(j).iter())
                .map(|(a, b)| a * b)
                .collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            products.push(x.into_iter().map(|v| v - mean).collect());
        }
    }

    let norm = 1.0 / (n as f64).sqrt();
    let (statistic, split_after) = cusum_max(&products, None, norm);

    let mut rng = rng.rng();
    let mut signs = vec![0.0; n];
    let mut exceed = 0usize;
    for _ in 0..BOOTSTRAP_REPLICATES {
        for s in signs.iter_mut() {
            *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let (m, _) = cusum_max(&products, Some(&signs), norm);
        if m >= statistic {
            exceed += 1;
        }
    }
    StationarityTest {
        pvalue: (1 + exceed) as f64 / (BOOTSTRAP_REPLICATES + 1) as f64,
        argmax_index: split_after + 1,
        statistic,
    }
}

/// Maximum over series and split points of the bridged partial sums of
/// `weights[s] * x[s]`. Returns the maximum and the last index of the left
/// part at the peak.
fn cusum_max(series: &[Vec<f64>], weights: Option<&[f64]>, norm: f64) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for x in series {
        let n = x.len();
        let w = |s: usize| weights.map_or(1.0, |w| w[s]);
        let total: f64 = (0..n).map(|s| w(s) * x[s]).sum();
        let mut partial = 0.0;
        for t in 0..n - 1 {
            partial += w(t) * x[t];
            let bridged = (partial - (t + 1) as f64 / n as f64 * total).abs() * norm;
            if bridged > best.0 {
                best = (bridged, t);
            }
        }
    }
    best
}

/// Recursive binary segmentation: split at the CUSUM peak while the test
/// rejects at `alpha` and both parts can hold `min_len` rows.
pub fn segment(
    residuals: &ResidualMatrix,
    alpha: f64,
    min_len: usize,
    rng: RngSpec,
) -> Result<SegmentationPlan> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if min_len == 0 {
        return Err(Error::InvalidParameter("min_len must be positive".into()));
    }
    let n = residuals.n();
    let mut plan = SegmentationPlan::whole(n, min_len, alpha);
    split_range(residuals, 0, n, &mut plan, rng);
    plan.boundaries.sort_unstable();
    plan.pvalues.sort_by_key(|r| r.index);
    Ok(plan)
}

fn split_range(
    residuals: &ResidualMatrix,
    start: usize,
    end: usize,
    plan: &mut SegmentationPlan,
    rng: RngSpec,
) {
    let min_len = plan.min_len;
    if end - start < 2 * min_len {
        return;
    }
    let tag = ((start as u64) << 32) | end as u64;
    let test = test_crosscorr_stationarity(&residuals.rows(start, end), min_len, rng.child(tag));
    if test.pvalue >= plan.alpha {
        return;
    }
    let cut = (start + test.argmax_index).clamp(start + min_len, end - min_len);
    plan.boundaries.push(cut);
    plan.pvalues.push(SplitRecord { index: cut, pvalue: test.pvalue, statistic: test.statistic });
    split_range(residuals, start, cut, plan, rng);
    split_range(residuals, cut, end, plan, rng);
}

/// Joins pieces end to end. Each later piece is translated so its first
/// row lands on the previous piece's last row, and that duplicate row is
/// dropped.
pub fn stitch(pieces: &[PathTrace]) -> Result<PathTrace> {
    stitch_with_gaps(pieces).map(|(trace, _)| trace)
}

/// [`stitch`], also returning for each junction the largest coordinate gap
/// between the translated first row of the later piece and the row it
/// replaces.
pub fn stitch_with_gaps(pieces: &[PathTrace]) -> Result<(PathTrace, Vec<f64>)> {
    let first = pieces.first().ok_or_else(|| Error::DimensionMismatch("no pieces to stitch".into()))?;
    let p = first.p();
    for piece in &pieces[1..] {
        if piece.p() != p || piece.dt() != first.dt() {
            return Err(Error::DimensionMismatch(format!(
                "piece {} is {}-dimensional with dt={}, expected {p} with dt={}",
                piece.id(),
                piece.p(),
                piece.dt(),
                first.dt()
            )));
        }
    }
    let total = pieces.iter().map(PathTrace::n).sum::<usize>() - (pieces.len() - 1);
    let mut values = nalgebra::DMatrix::zeros(total, p);
    let mut row = 0;
    let mut anchor: Option<Vec<f64>> = None;
    let mut gaps = Vec::with_capacity(pieces.len() - 1);
    for piece in pieces {
        let offset: Vec<f64> = match &anchor {
            Some(last) => (0..p).map(|k| last[k] - piece.values()[(0, k)]).collect(),
            None => vec![0.0; p],
        };
        if let Some(last) = &anchor {
            gaps.push((0..p).map(|k| (piece.values()[(0, k)] + offset[k] - last[k]).abs()).fold(0.0, f64::max));
        }
        let skip = usize::from(anchor.is_some());
        for t in skip..piece.n() {
            for k in 0..p {
                values[(row, k)] = piece.values()[(t, k)] + offset[k];
            }
            row += 1;
        }
        anchor = Some(values.row(row - 1).iter().copied().collect());
    }
    let trace = PathTrace::new(values, first.dt(), first.id(), first.dim_names().to_vec())?;
    Ok((trace, gaps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand_distr::StandardNormal;

    /// Bivariate normal rows whose correlation is `rho_a` before `switch`
    /// and `rho_b` after.
    fn residuals(n: usize, rho_a: f64, rho_b: f64, switch: usize, seed: u64) -> ResidualMatrix {
        let mut rng = RngSpec::new(seed, 9).rng();
        let values = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut out = values.clone();
        for t in 0..n {
            let rho: f64 = if t < switch { rho_a } else { rho_b };
            out[(t, 1)] = rho * values[(t, 0)] + (1.0 - rho * rho).sqrt() * values[(t, 1)];
        }
        ResidualMatrix::new(out, "r").unwrap()
    }

    #[test]
    fn single_dimension_is_vacuous() {
        let r = ResidualMatrix::new(DMatrix::from_fn(100, 1, |t, _| t as f64), "u").unwrap();
        assert_eq!(test_crosscorr_stationarity(&r, 10, RngSpec::new(0, 0)).pvalue, 1.0);
    }

    #[test]
    fn correlation_flip_is_located() {
        let mut hits = 0;
        for seed in 0..20 {
            let r = residuals(600, 0.8, -0.8, 300, seed);
            let t = test_crosscorr_stationarity(&r, 60, RngSpec::new(seed, 0));
            if t.pvalue < 0.05 && t.argmax_index.abs_diff(300) <= 60 {
                hits += 1;
            }
        }
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn stationary_input_rarely_rejects() {
        let rejections = (0..40)
            .filter(|&seed| {
                let r = residuals(600, 0.5, 0.5, 0, 100 + seed);
                test_crosscorr_stationarity(&r, 60, RngSpec::new(seed, 0)).pvalue < 0.05
            })
            .count();
        assert!(rejections <= 6, "{rejections}/40");
    }

    #[test]
    fn plan_respects_min_len_and_tiles() {
        for seed in 0..10 {
            let r = residuals(600, 0.9, -0.9, 250, seed);
            let plan = segment(&r, 0.05, 60, RngSpec::new(seed, 0)).unwrap();
            let segs = plan.segments();
            assert_eq!(segs.first().unwrap().0, 0);
            assert_eq!(segs.last().unwrap().1, 600);
            assert!(segs.windows(2).all(|w| w[0].1 == w[1].0));
            assert!(segs.iter().all(|(a, b)| b - a >= 60));
            assert!(plan.boundaries.iter().any(|&c| c.abs_diff(250) <= 60));
        }
    }

    #[test]
    fn short_input_gives_empty_plan() {
        let r = residuals(100, 0.9, -0.9, 50, 1);
        let plan = segment(&r, 0.05, 60, RngSpec::new(1, 0)).unwrap();
        assert!(plan.boundaries.is_empty());
        assert_eq!(plan.segments(), vec![(0, 100)]);
    }

    #[test]
    fn segmentation_is_deterministic() {
        let r = residuals(600, 0.7, -0.2, 400, 3);
        let a = segment(&r, 0.05, 40, RngSpec::new(5, 2)).unwrap();
        let b = segment(&r, 0.05, 40, RngSpec::new(5, 2)).unwrap();
        assert_eq!(a, b);
    }

    fn piece(rows: &[[f64; 2]], id: &str) -> PathTrace {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        PathTrace::from_rows(&rows, 1.0, id).unwrap()
    }

    fn line(n: usize, start: [f64; 2], step: [f64; 2], id: &str) -> PathTrace {
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|t| [start[0] + step[0] * t as f64, start[1] + step[1] * t as f64])
            .collect();
        piece(&rows, id)
    }

    #[test]
    fn stitch_single_piece_is_identity() {
        let a = line(10, [0.0, 0.0], [1.0, 0.5], "a");
        assert_eq!(stitch(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn stitch_contiguous_pieces_concatenates() {
        let a = line(10, [0.0, 0.0], [1.0, 1.0], "a");
        let b = line(10, [9.0, 9.0], [1.0, -1.0], "b");
        let s = stitch(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.n(), 19);
        for t in 0..10 {
            assert_eq!(s.row(t), a.row(t));
        }
        for t in 1..10 {
            assert_eq!(s.row(9 + t), b.row(t));
        }
    }

    #[test]
    fn stitch_translates_rigidly() {
        let a = line(10, [0.0, 0.0], [1.0, 1.0], "a");
        // Piece b starts at (6, 10); a ends at (9, 9): offset (3, -1).
        let b = line(12, [6.0, 10.0], [0.5, 2.0], "b");
        let s = stitch(&[a, b.clone()]).unwrap();
        assert_eq!(s.n(), 21);
        assert_eq!(s.row(9), vec![9.0, 9.0]);
        for t in 1..12 {
            let want = [b.values()[(t, 0)] + 3.0, b.values()[(t, 1)] - 1.0];
            assert_eq!(s.row(9 + t), want.to_vec());
        }
    }

    #[test]
    fn stitch_rejects_mixed_dimensions() {
        let a = line(10, [0.0, 0.0], [1.0, 1.0], "a");
        let b = PathTrace::from_rows(&vec![vec![1.0, 2.0, 3.0]; 10], 1.0, "b").unwrap();
        assert!(matches!(stitch(&[a, b]), Err(Error::DimensionMismatch(_))));
        assert!(stitch(&[]).is_err());
    }
}
