//! End-to-end synthesis: segment, fit per segment, sample, invert, stitch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{self, CopulaModel};
use crate::error::{Error, Result};
use crate::mf::{self, MfModel, ValueBandwidth};
use crate::segment::{self, SegmentationPlan, DEFAULT_ALPHA};
use crate::trace::{PathTrace, RngSpec};

/// Tag of the child stream used for segmentation.
const SEGMENT_TAG: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    /// Time bandwidth of the local CDFs, in samples.
    pub b: f64,
    /// Residual scale in percent (100 leaves residuals unchanged).
    pub lambda: f64,
    /// Half-width of the uniform jitter on target correlations.
    pub delta: f64,
    pub n_realizations: usize,
    pub alpha: f64,
    /// `None` means `max(32, ceil(n / 10))`.
    pub min_len: Option<usize>,
    pub rng: RngSpec,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            b: 10.0,
            lambda: 100.0,
            delta: 0.2,
            n_realizations: 1,
            alpha: DEFAULT_ALPHA,
            min_len: None,
            rng: RngSpec::new(0, 0),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.b >= 1.0) {
            return Err(Error::InvalidParameter(format!("b must be >= 1, got {}", self.b)));
        }
        copula::effective_scale(self.lambda)?;
        if !(0.0..=0.5).contains(&self.delta) {
            return Err(Error::InvalidParameter(format!("delta must lie in [0, 0.5], got {}", self.delta)));
        }
        if self.n_realizations == 0 {
            return Err(Error::InvalidParameter("n_realizations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Models fitted on one segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub start: usize,
    /// Exclusive end of the rows the models were fitted on. All but the
    /// last segment borrow one row from the next to supply the junction.
    pub fit_end: usize,
    pub sigma: Vec<Vec<f64>>,
    pub sigma_projected: bool,
    pub band_widths: Vec<usize>,
    pub value_bandwidths: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizationSummary {
    pub index: usize,
    pub id: String,
    pub rng: RngSpec,
    /// Target correlation per segment.
    pub targets: Vec<Vec<Vec<f64>>>,
    /// Largest coordinate mismatch at each segment junction.
    pub junction_gaps: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationReport {
    #[serde(skip)]
    pub realizations: Vec<PathTrace>,
    pub source_id: String,
    pub n: usize,
    pub p: usize,
    pub plan: SegmentationPlan,
    pub segments: Vec<SegmentSummary>,
    pub realization_summaries: Vec<RealizationSummary>,
    pub params: GenerationParams,
}

struct FittedSegment {
    start: usize,
    fit_end: usize,
    mf: MfModel,
    copula: CopulaModel,
}

fn to_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Segments `source` on the residuals of a transform fitted to the whole
/// trace. This is the plan [`generate`] uses.
pub fn plan_segments(source: &PathTrace, params: &GenerationParams) -> Result<SegmentationPlan> {
    params.validate()?;
    let whole = mf::fit_mf(source, params.b, ValueBandwidth::Auto)?;
    let residuals = mf::forward(&whole, source)?;
    let min_len = params.min_len.unwrap_or_else(|| segment::default_min_len(source.n()));
    segment::segment(&residuals, params.alpha, min_len, params.rng.child(SEGMENT_TAG))
}

/// Generates `params.n_realizations` synthetic versions of `source`.
///
/// Realization `r` draws from stream `r` of `params.rng`, so the first
/// realizations do not depend on how many are requested. Every
/// realization has the source's length and starts at its first row.
pub fn generate(source: &PathTrace, params: &GenerationParams) -> Result<GenerationReport> {
    let n = source.n();
    let h = ValueBandwidth::Auto;

    let plan = plan_segments(source, params)?;

    let ranges = plan.segments();
    let last = ranges.len() - 1;
    let fitted = ranges
        .par_iter()
        .enumerate()
        .map(|(j, &(start, end))| {
            let fit_end = if j == last { end } else { end + 1 };
            let piece = source.slice(start, fit_end, format!("{}-seg{j}", source.id()))?;
            let mf = mf::fit_mf(&piece, params.b, h)?;
            let copula = copula::fit_copula(&mf::forward(&mf, &piece)?)?;
            Ok(FittedSegment { start, fit_end, mf, copula })
        })
        .collect::<Result<Vec<_>>>()?;

    let anchor = source.row(0);
    let outputs = (0..params.n_realizations)
        .into_par_iter()
        .map(|r| realize(source, &fitted, params, r, &anchor))
        .collect::<Result<Vec<_>>>()?;
    let (realizations, realization_summaries) = outputs.into_iter().unzip();

    let segments = fitted
        .iter()
        .map(|s| SegmentSummary {
            start: s.start,
            fit_end: s.fit_end,
            sigma: to_rows(&s.copula.sigma),
            sigma_projected: s.copula.projected,
            band_widths: s.mf.band_widths(),
            value_bandwidths: s.mf.dims().iter().map(|d| d.cdf.bandwidth_value()).collect(),
        })
        .collect();

    Ok(GenerationReport {
        realizations,
        source_id: source.id().to_string(),
        n,
        p: source.p(),
        plan,
        segments,
        realization_summaries,
        params: *params,
    })
}

fn realize(
    source: &PathTrace,
    fitted: &[FittedSegment],
    params: &GenerationParams,
    r: usize,
    anchor: &[f64],
) -> Result<(PathTrace, RealizationSummary)> {
    let rng = params.rng.with_stream(r as u64);
    let mut pieces = Vec::with_capacity(fitted.len());
    let mut targets = Vec::with_capacity(fitted.len());
    for (j, seg) in fitted.iter().enumerate() {
        let j = j as u64;
        let target = copula::jitter_target(&seg.copula, params.delta, rng.child(2 * j))?;
        let eps = copula::sample(&seg.copula, seg.fit_end - seg.start, rng.child(2 * j + 1))?;
        let eps = copula::scale(&copula::retarget(&eps, &seg.copula, &target)?, params.lambda)?;
        pieces.push(mf::inverse(&seg.mf, &eps)?);
        targets.push(to_rows(&target.gamma_target));
    }
    let (stitched, junction_gaps) = segment::stitch_with_gaps(&pieces)?;
    let first = stitched.row(0);
    let offset: Vec<f64> = anchor.iter().zip(&first).map(|(a, f)| a - f).collect();
    let id = format!("{}-r{r}", source.id());
    let mut values = stitched.translated(&offset).values().clone();
    // The translation rounds; pin the start exactly.
    for (k, &a) in anchor.iter().enumerate() {
        values[(0, k)] = a;
    }
    let out = PathTrace::new(values, source.dt(), id.clone(), source.dim_names().to_vec())?;
    Ok((out, RealizationSummary { index: r, id, rng, targets, junction_gaps }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{pursuit_trace, DemoConfig};

    fn source(n: usize) -> PathTrace {
        pursuit_trace(&DemoConfig { n, ..DemoConfig::default() }, RngSpec::new(5, 0), "src").unwrap()
    }

    fn params(n_realizations: usize, lambda: f64) -> GenerationParams {
        GenerationParams { n_realizations, lambda, rng: RngSpec::new(11, 0), ..GenerationParams::default() }
    }

    #[test]
    fn realizations_match_source_shape_and_start() {
        let src = source(300);
        let report = generate(&src, &params(3, 100.0)).unwrap();
        assert_eq!(report.realizations.len(), 3);
        for (r, real) in report.realizations.iter().enumerate() {
            assert_eq!((real.n(), real.p()), (300, 2));
            assert_eq!(real.row(0), src.row(0));
            assert_eq!(real.id(), format!("src-r{r}"));
        }
        assert_eq!(report.segments.len(), report.plan.boundaries.len() + 1);
        assert_eq!(report.realization_summaries[2].targets.len(), report.segments.len());
    }

    #[test]
    fn same_params_same_output() {
        let src = source(200);
        let a = generate(&src, &params(2, 50.0)).unwrap();
        let b = generate(&src, &params(2, 50.0)).unwrap();
        assert_eq!(a.realizations, b.realizations);
    }

    #[test]
    fn first_realization_ignores_batch_size() {
        let src = source(200);
        let one = generate(&src, &params(1, 100.0)).unwrap();
        let four = generate(&src, &params(4, 100.0)).unwrap();
        assert_eq!(one.realizations[0], four.realizations[0]);
        assert_ne!(four.realizations[0], four.realizations[1]);
    }

    #[test]
    fn deviation_grows_with_lambda() {
        let src = source(300);
        let mean_dev = |lambda: f64| {
            let rep = generate(&src, &params(20, lambda)).unwrap();
            let total: f64 = rep
                .realizations
                .iter()
                .map(|r| (r.values() - src.values()).row_iter().map(|d| d.norm()).sum::<f64>() / 300.0)
                .sum();
            total / 20.0
        };
        let devs: Vec<f64> = [10.0, 50.0, 100.0, 150.0].iter().map(|&l| mean_dev(l)).collect();
        assert!(devs.windows(2).all(|w| w[1] >= w[0]), "{devs:?}");
    }

    #[test]
    fn junctions_are_continuous_after_split() {
        let src = pursuit_trace(&DemoConfig { n: 600, ..DemoConfig::default() }, RngSpec::new(2, 0), "s").unwrap();
        let rep = generate(&src, &params(2, 100.0)).unwrap();
        assert!(!rep.plan.boundaries.is_empty());
        assert_eq!(rep.realizations[0].n(), 600);
        for summary in &rep.realization_summaries {
            assert_eq!(summary.junction_gaps.len(), rep.plan.boundaries.len());
            assert!(summary.junction_gaps.iter().all(|&g| g < 1e-12), "{:?}", summary.junction_gaps);
        }
    }

    #[test]
    fn parameters_are_validated() {
        let src = source(100);
        assert_eq!(generate(&src, &params(1, 0.0)).unwrap_err(), Error::NonPositiveLambda(0.0));
        let bad_b = GenerationParams { b: 0.5, ..params(1, 100.0) };
        assert!(generate(&src, &bad_b).is_err());
        let bad_n = GenerationParams { n_realizations: 0, ..params(1, 100.0) };
        assert!(generate(&src, &bad_n).is_err());
    }
}
