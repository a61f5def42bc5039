//! Trace CSV reading/writing and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pathsynth::nalgebra::DMatrix;
use pathsynth::PathTrace;

use crate::error::CliError;

/// Relative tolerance on time-step uniformity.
const DT_TOLERANCE: f64 = 1e-6;

/// Formats a value with 17 significant digits.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads every trace under `path`: a directory of CSVs (sorted by name) or a
/// single CSV, optionally with a leading `trace_id` column.
pub fn read_traces(path: &Path) -> Result<Vec<PathTrace>, CliError> {
    let meta = fs::metadata(path).map_err(|e| CliError::io(path, e))?;
    if !meta.is_dir() {
        return read_csv(path);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Validation(format!("{}: no .csv files", path.display())));
    }
    let mut out = Vec::new();
    for f in files {
        out.extend(read_csv(&f)?);
    }
    Ok(out)
}

/// Reads all traces from several paths, in argument order.
pub fn read_all(paths: &[PathBuf]) -> Result<Vec<PathTrace>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_traces(p)?);
    }
    Ok(out)
}

/// Reads exactly one trace.
pub fn read_single(path: &Path) -> Result<PathTrace, CliError> {
    let mut traces = read_traces(path)?;
    if traces.len() != 1 {
        return Err(CliError::Validation(format!(
            "{}: expected one trace, found {}",
            path.display(),
            traces.len()
        )));
    }
    Ok(traces.remove(0))
}

struct Group {
    id: String,
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

pub fn read_csv(path: &Path) -> Result<Vec<PathTrace>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> =
        reader.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    let with_id = header.first().is_some_and(|h| h == "trace_id");
    let skip = usize::from(with_id);
    if header.get(skip).map(String::as_str) != Some("t") || header.len() < skip + 2 {
        return Err(bad("header must be `t,<dim>...` or `trace_id,t,<dim>...`".into()));
    }
    let dim_names: Vec<String> = header[skip + 1..].to_vec();
    let stem = path.file_stem().map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());

    let mut groups: Vec<Group> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != header.len() {
            return Err(bad(format!("row {} has {} fields, expected {}", line + 1, record.len(), header.len())));
        }
        let id = if with_id { record[0].to_string() } else { stem.clone() };
        let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("row {}: `{s}` is not a number", line + 1)));
        let t = parse(&record[skip])?;
        let row = record.iter().skip(skip + 1).map(parse).collect::<Result<Vec<_>, _>>()?;
        match groups.iter_mut().find(|g| g.id == id) {
            Some(g) => {
                g.times.push(t);
                g.rows.push(row);
            }
            None => groups.push(Group { id, times: vec![t], rows: vec![row] }),
        }
    }
    if groups.is_empty() {
        return Err(bad("no data rows".into()));
    }
    groups
        .into_iter()
        .map(|g| {
            let dt = uniform_step(&g.times).map_err(|m| bad(format!("trace {}: {m}", g.id)))?;
            let values = DMatrix::from_fn(g.rows.len(), dim_names.len(), |t, k| g.rows[t][k]);
            PathTrace::new(values, dt, g.id, dim_names.clone()).map_err(CliError::from)
        })
        .collect()
}

fn uniform_step(times: &[f64]) -> Result<f64, String> {
    if times.len() < 2 {
        return Ok(1.0);
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt.is_finite() && dt > 0.0) {
        return Err("time column must be increasing".into());
    }
    for (i, &t) in times.iter().enumerate() {
        let expected = times[0] + i as f64 * dt;
        if (t - expected).abs() > DT_TOLERANCE * dt.max(expected.abs()) {
            return Err(format!("irregular time step at row {}", i + 1));
        }
    }
    Ok(dt)
}

pub fn trace_csv(trace: &PathTrace) -> String {
    let mut out = String::from("t");
    for name in trace.dim_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for t in 0..trace.n() {
        out.push_str(&fmt_value(t as f64 * trace.dt()));
        for v in trace.values().row(t).iter() {
            out.push(',');
            out.push_str(&fmt_value(*v));
        }
        out.push('\n');
    }
    out
}

/// Long format, one row per realization, time step and dimension.
pub fn tidy_csv(traces: &[PathTrace]) -> String {
    let mut out = String::from("realization_id,t,dim,value\n");
    for trace in traces {
        for t in 0..trace.n() {
            let time = fmt_value(t as f64 * trace.dt());
            for (k, name) in trace.dim_names().iter().enumerate() {
                out.push_str(&format!("{},{time},{name},{}\n", trace.id(), fmt_value(trace.values()[(t, k)])));
            }
        }
    }
    out
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
