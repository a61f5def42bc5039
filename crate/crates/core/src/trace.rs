//! Domain types shared by every stage: validated traces, residual
//! matrices, and the `(seed, stream)` randomness contract.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_ROWS: usize = 8;
pub const MAX_DIMS: usize = 8;
/// Longest trace the n x n temporal covariance machinery accepts.
pub const MAX_ROWS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceWarning {
    /// Column has zero sample variance. Fitting a transform on it fails.
    ConstantColumn { column: usize },
}

/// A validated `n x p` time series sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    values: DMatrix<f64>,
    dt: f64,
    id: String,
    dim_names: Vec<String>,
    warnings: Vec<TraceWarning>,
}

/// Default labels: x, y, z, then d3, d4, ...
pub fn default_dim_names(p: usize) -> Vec<String> {
    (0..p)
        .map(|k| match k {
            0 => "x".to_string(),
            1 => "y".to_string(),
            2 => "z".to_string(),
            _ => format!("d{k}"),
        })
        .collect()
}

/// Validates a raw `n x p` matrix into a [`PathTrace`] with default
/// dimension names.
pub fn validate_trace(raw: DMatrix<f64>, dt: f64, id: impl Into<String>) -> Result<PathTrace> {
    let p = raw.ncols();
    PathTrace::new(raw, dt, id, default_dim_names(p))
}

impl PathTrace {
    pub fn new(
        values: DMatrix<f64>,
        dt: f64,
        id: impl Into<String>,
        dim_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = values.shape();
        if n == 0 || p == 0 {
            return Err(Error::Malformed);
        }
        if p > MAX_DIMS {
            return Err(Error::TooWide { p, max: MAX_DIMS });
        }
        if n < MIN_ROWS {
            return Err(Error::TooShort { n, min: MIN_ROWS });
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if dim_names.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{} dimension names for {p} columns",
                dim_names.len()
            )));
        }
        let mut warnings = Vec::new();
        for (column, col) in values.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, column });
            }
            if col.iter().all(|&v| v == col[0]) {
                warnings.push(TraceWarning::ConstantColumn { column });
            }
        }
        Ok(Self { values, dt, id: id.into(), dim_names, warnings })
    }

    /// Builds a trace from row vectors; rows must all have the same length.
    pub fn from_rows(rows: &[Vec<f64>], dt: f64, id: impl Into<String>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(Error::Malformed);
        }
        let values = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        validate_trace(values, dt, id)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim_names(&self) -> &[String] {
        &self.dim_names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn warnings(&self) -> &[TraceWarning] {
        &self.warnings
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.column(k).iter().copied().collect()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.values.row(t).iter().copied().collect()
    }

    /// Rows `start..end` as a new trace (same dt and dimension names).
    pub fn slice(&self, start: usize, end: usize, id: impl Into<String>) -> Result<Self> {
        if start >= end || end > self.n() {
            return Err(Error::InvalidParameter(format!(
                "bad row range {start}..{end} for trace of length {}",
                self.n()
            )));
        }
        let values = self.values.rows(start, end - start).into_owned();
        Self::new(values, self.dt, id, self.dim_names.clone())
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Adds `offset[k]` to every value of column `k`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, mut col) in out.values.column_iter_mut().enumerate() {
            col.add_scalar_mut(offset[k]);
        }
        out
    }
}

/// MF residuals (or copula samples derived from them), one column per
/// trace dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix {
    pub values: DMatrix<f64>,
    pub source_trace: String,
    /// Effective multiplier already applied (1.0 if none).
    pub scale: f64,
}

impl ResidualMatrix {
    pub fn new(values: DMatrix<f64>, source_trace: impl Into<String>) -> Result<Self> {
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            let n = values.nrows().max(1);
            return Err(Error::NonFinite { row: idx % n, column: idx / n });
        }
        Ok(Self { values, source_trace: source_trace.into(), scale: 1.0 })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Rows `start..end` as a new residual matrix.
    pub fn rows(&self, start: usize, end: usize) -> Self {
        Self {
            values: self.values.rows(start, end - start).into_owned(),
            source_trace: self.source_trace.clone(),
            scale: self.scale,
        }
    }
}

/// Seed plus stream selector. Identical specs give identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Same seed, different stream.
    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self { seed: self.seed, stream_id }
    }

    /// An independent spec keyed by `tag`. Children of distinct tags never
    /// share a key with each other or with `with_stream` siblings.
    pub fn child(&self, tag: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream_id: self.stream_id,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
