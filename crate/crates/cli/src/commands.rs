use std::path::{Path, PathBuf};

use pathsynth::demo::{pursuit_pair, DemoConfig};
use pathsynth::generate::plan_segments;
use pathsynth::three_sample::{evaluate_traces, EvalParams, WindowLength};
use pathsynth::{generate, GenerationParams, GenerationReport, PathTrace, RngSpec, SegmentationPlan, ThreeSampleReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{
    Cli, Command, EvaluateArgs, GenerateArgs, ReplicateArgs, SegmentArgs, SegmentationFlags, TestFlags,
};
use crate::error::CliError;
use crate::io;

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Replicate(a) => cmd_replicate(a),
    }
}

fn generation_params(seg: &SegmentationFlags, lambda: f64, delta: f64, n: usize) -> GenerationParams {
    GenerationParams {
        b: seg.b,
        lambda,
        delta,
        n_realizations: n,
        alpha: seg.alpha,
        min_len: seg.min_len,
        rng: RngSpec::new(seg.seed, 0),
    }
}

fn eval_params(flags: &TestFlags, seed: u64) -> EvalParams {
    EvalParams {
        window: flags.window.map_or(WindowLength::Auto, WindowLength::Fixed),
        stride: flags.stride,
        k: flags.k,
        tau: flags.tau,
        rng: RngSpec::new(seed, 0),
    }
}

#[derive(Serialize)]
struct TracePlan {
    trace_id: String,
    plan: SegmentationPlan,
}

#[derive(Serialize)]
struct SegmentOutput<'a> {
    input: &'a Path,
    params: GenerationParams,
    plans: Vec<TracePlan>,
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<(), CliError> {
    let traces = io::read_traces(&args.trace)?;
    let params = generation_params(&args.seg, 100.0, 0.0, 1);
    let plans = traces
        .iter()
        .map(|t| Ok(TracePlan { trace_id: t.id().to_string(), plan: plan_segments(t, &params)? }))
        .collect::<Result<Vec<_>, CliError>>()?;
    io::write_json(&args.out, &SegmentOutput { input: &args.trace, params, plans })
}

#[derive(Serialize)]
struct GenerateOutput<'a> {
    input: &'a Path,
    params: GenerationParams,
    files: Vec<String>,
    reports: Vec<GenerationReport>,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let traces = io::read_traces(&args.trace)?;
    let params = generation_params(&args.seg, args.synth.lambda, args.synth.delta, args.synth.n);
    params.validate()?;
    let reports = traces.iter().map(|t| generate(t, &params)).collect::<Result<Vec<_>, _>>()?;
    let mut files = Vec::new();
    for real in reports.iter().flat_map(|r| &r.realizations) {
        let name = format!("{}.csv", real.id());
        io::write_atomic(&args.out.join(&name), io::trace_csv(real).as_bytes())?;
        files.push(name);
    }
    let all: Vec<PathTrace> = reports.iter().flat_map(|r| r.realizations.iter().cloned()).collect();
    io::write_atomic(&args.out.join("realizations.csv"), io::tidy_csv(&all).as_bytes())?;
    io::write_json(&args.out.join("report.json"), &GenerateOutput { input: &args.trace, params, files, reports })
}

#[derive(Serialize)]
struct Inputs<'a> {
    train: &'a [PathBuf],
    test: &'a [PathBuf],
    synth: &'a [PathBuf],
}

#[derive(Serialize)]
struct RepeatSummary {
    groups: usize,
    c_t: Vec<f64>,
    mean_c_t: f64,
    std_c_t: f64,
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    #[serde(flatten)]
    report: ThreeSampleReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    repeat: Option<RepeatSummary>,
    inputs: Inputs<'a>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let train = io::read_all(&args.train)?;
    let test = io::read_all(&args.test)?;
    let synth = io::read_all(&args.synth)?;
    let params = eval_params(&args.test_flags, args.seed);
    let report = evaluate_traces(&train, &test, &synth, &params)?;
    let repeat = match args.repeat {
        None => None,
        Some(r) if r == 0 || r > synth.len() => {
            return Err(CliError::Validation(format!(
                "--repeat must lie in 1..={} (number of synthetic traces), got {r}",
                synth.len()
            )))
        }
        Some(r) => {
            let c_t = (0..r)
                .map(|g| {
                    let group: Vec<PathTrace> = synth.iter().skip(g).step_by(r).cloned().collect();
                    Ok(evaluate_traces(&train, &test, &group, &params)?.c_t)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let (mean_c_t, std_c_t) = mean_std(&c_t);
            Some(RepeatSummary { groups: r, c_t, mean_c_t, std_c_t })
        }
    };
    let inputs = Inputs { train: &args.train, test: &args.test, synth: &args.synth };
    io::write_json(&args.out, &EvaluateOutput { report, repeat, inputs })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub b: f64,
    pub lambda: f64,
    pub mean_c_t: f64,
    pub std_c_t: f64,
    pub n_realizations: usize,
    pub c_t: Vec<f64>,
}

#[derive(Serialize)]
struct ReplicateOutput<'a> {
    source: String,
    similar: String,
    demo: Option<DemoConfig>,
    delta: f64,
    alpha: f64,
    min_len: Option<usize>,
    seed: u64,
    window: Option<usize>,
    stride: Option<usize>,
    k: Option<usize>,
    tau: f64,
    rows: &'a [SweepRow],
}

fn sorted_unique(values: &[f64], name: &str) -> Result<Vec<f64>, CliError> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Validation(format!("--{name} needs finite values")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Mean C_T over realizations at every `(b, lambda)` grid point, in
/// ascending `(b, lambda)` order.
pub fn sweep(
    source: &PathTrace,
    similar: &PathTrace,
    b_values: &[f64],
    lambda_values: &[f64],
    base: &GenerationParams,
    eval: &EvalParams,
) -> Result<Vec<SweepRow>, CliError> {
    let grid: Vec<(f64, f64)> = b_values.iter().flat_map(|&b| lambda_values.iter().map(move |&l| (b, l))).collect();
    grid.par_iter()
        .map(|&(b, lambda)| {
            let params = GenerationParams { b, lambda, ..*base };
            let report = generate(source, &params)?;
            let c_t = report
                .realizations
                .iter()
                .map(|q| Ok(evaluate_traces(std::slice::from_ref(source), std::slice::from_ref(similar), std::slice::from_ref(q), eval)?.c_t))
                .collect::<Result<Vec<_>, CliError>>()?;
            let (mean_c_t, std_c_t) = mean_std(&c_t);
            Ok(SweepRow { b, lambda, mean_c_t, std_c_t, n_realizations: c_t.len(), c_t })
        })
        .collect()
}

pub fn cmd_replicate(args: &ReplicateArgs) -> Result<(), CliError> {
    let b_values = sorted_unique(&args.b_values, "b-values")?;
    let lambda_values = sorted_unique(&args.lambda_values, "lambda-values")?;
    let (source, similar, demo) = if args.demo {
        let cfg = DemoConfig { n: args.demo_len, ..DemoConfig::default() };
        let (s, p) = pursuit_pair(&cfg, args.seed)?;
        io::write_atomic(&args.out.join("demo-source.csv"), io::trace_csv(&s).as_bytes())?;
        io::write_atomic(&args.out.join("demo-similar.csv"), io::trace_csv(&p).as_bytes())?;
        (s, p, Some(cfg))
    } else {
        let missing = || CliError::Validation("replicate needs a trace and --similar, or --demo".into());
        let source = io::read_single(args.trace.as_deref().ok_or_else(missing)?)?;
        let similar = io::read_single(args.similar.as_deref().ok_or_else(missing)?)?;
        (source, similar, None)
    };
    let base = GenerationParams {
        b: b_values[0],
        lambda: lambda_values[0],
        delta: args.delta,
        n_realizations: args.n,
        alpha: args.alpha,
        min_len: args.min_len,
        rng: RngSpec::new(args.seed, 0),
    };
    let eval = eval_params(&args.test_flags, args.seed);
    let jobs = args.jobs.unwrap_or(0);
    if args.jobs == Some(0) {
        return Err(CliError::Validation("--jobs must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let rows = pool.install(|| sweep(&source, &similar, &b_values, &lambda_values, &base, &eval))?;

    let mut table = String::from("b,lambda,mean_c_t,std_c_t,n_realizations\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            r.b,
            r.lambda,
            io::fmt_value(r.mean_c_t),
            io::fmt_value(r.std_c_t),
            r.n_realizations
        ));
    }
    io::write_atomic(&args.out.join("sweep.csv"), table.as_bytes())?;
    let out = ReplicateOutput {
        source: source.id().to_string(),
        similar: similar.id().to_string(),
        demo,
        delta: args.delta,
        alpha: args.alpha,
        min_len: args.min_len,
        seed: args.seed,
        window: args.test_flags.window,
        stride: args.test_flags.stride,
        k: args.test_flags.k,
        tau: args.test_flags.tau,
        rows: &rows,
    };
    io::write_json(&args.out.join("sweep.json"), &out)
}
