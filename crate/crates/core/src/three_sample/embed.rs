use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::PathTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowLength {
    /// `round(sqrt(n))`, clamped to `[4, n / 4]`.
    Auto,
    Fixed(usize),
}

impl WindowLength {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            WindowLength::Fixed(l) => l,
            WindowLength::Auto => {
                let l = (n as f64).sqrt().round() as usize;
                l.min(n / 4).max(4)
            }
        }
    }
}

/// Default stride: half a window.
pub fn default_stride(window: usize) -> usize {
    (window / 2).max(1)
}

/// Points in `R^{pL}`, one per window start, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCloud {
    points: Vec<f64>,
    dim: usize,
    window: usize,
    stride: usize,
    /// Index into `source_ids` for every point.
    sources: Vec<u32>,
    source_ids: Vec<String>,
}

impl EmbeddedCloud {
    /// A cloud from explicit points (all of length `dim`).
    pub fn from_points(points: &[Vec<f64>], window: usize, id: &str) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch("points must share a positive dimension".into()));
        }
        Ok(Self {
            points: points.concat(),
            dim,
            window,
            stride: 1,
            sources: vec![0; points.len()],
            source_ids: vec![id.to_string()],
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn source_of(&self, i: usize) -> &str {
        &self.source_ids[self.sources[i] as usize]
    }

    /// Keeps the points at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().flat_map(|&i| self.point(i).iter().copied()).collect(),
            dim: self.dim,
            window: self.window,
            stride: self.stride,
            sources: indices.iter().map(|&i| self.sources[i]).collect(),
            source_ids: self.source_ids.clone(),
        }
    }

    /// Pools several clouds of equal dimension.
    pub fn concat(clouds: &[EmbeddedCloud]) -> Result<Self> {
        let first = clouds.first().ok_or(Error::EmptySet)?;
        let mut out = Self {
            points: Vec::new(),
            dim: first.dim,
            window: first.window,
            stride: first.stride,
            sources: Vec::new(),
            source_ids: Vec::new(),
        };
        for c in clouds {
            if c.dim != first.dim {
                return Err(Error::DimensionMismatch(format!(
                    "cannot pool {}-dimensional and {}-dimensional clouds",
                    first.dim, c.dim
                )));
            }
            let base = out.source_ids.len() as u32;
            out.points.extend_from_slice(&c.points);
            out.sources.extend(c.sources.iter().map(|s| s + base));
            out.source_ids.extend(c.source_ids.iter().cloned());
        }
        Ok(out)
    }
}

/// Sliding windows `[t, t + L)` of every dimension, concatenated into one
/// `p * L` vector per window start `0, stride, 2 * stride, ...`.
pub fn embed(trace: &PathTrace, window: WindowLength, stride: Option<usize>) -> Result<EmbeddedCloud> {
    let n = trace.n();
    let l = window.resolve(n);
    if l < 2 {
        return Err(Error::InvalidParameter(format!("window length must be >= 2, got {l}")));
    }
    if n < 4 * l {
        return Err(Error::TraceTooShortForL { n, window: l });
    }
    let stride = stride.unwrap_or_else(|| default_stride(l));
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    let p = trace.p();
    let values = trace.values();
    let starts: Vec<usize> = (0..=n - l).step_by(stride).collect();
    let mut points = Vec::with_capacity(starts.len() * p * l);
    for &s in &starts {
        for k in 0..p {
            points.extend((s..s + l).map(|t| values[(t, k)]));
        }
    }
    Ok(EmbeddedCloud {
        points,
        dim: p * l,
        window: l,
        stride,
        sources: vec![0; starts.len()],
        source_ids: vec![trace.id().to_string()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn trace(n: usize, p: usize) -> PathTrace {
        crate::trace::validate_trace(DMatrix::from_fn(n, p, |t, k| (t * (k + 1)) as f64), 1.0, "t").unwrap()
    }

    #[test]
    fn auto_window_is_root_n() {
        let c = embed(&trace(100, 2), WindowLength::Auto, None).unwrap();
        assert_eq!(c.window(), 10);
        assert_eq!(c.dim(), 20);
        assert_eq!(c.stride(), 5);
    }

    #[test]
    fn unit_stride_counts_every_start() {
        let c = embed(&trace(100, 2), WindowLength::Fixed(10), Some(1)).unwrap();
        assert_eq!(c.len(), 91);
        // Second point: x[1..11] then y[1..11].
        let pt = c.point(1);
        assert_eq!(pt[0], 1.0);
        assert_eq!(pt[10], 2.0);
    }

    #[test]
    fn constant_trace_gives_identical_points() {
        let t = PathTrace::from_rows(&vec![vec![1.0, -2.0]; 64], 1.0, "c").unwrap();
        let c = embed(&t, WindowLength::Auto, Some(1)).unwrap();
        assert!(c.iter().all(|p| p == c.point(0)));
    }

    #[test]
    fn window_bounds_are_enforced() {
        assert!(matches!(
            embed(&trace(30, 1), WindowLength::Fixed(10), None),
            Err(Error::TraceTooShortForL { n: 30, window: 10 })
        ));
        assert!(embed(&trace(30, 1), WindowLength::Fixed(1), None).is_err());
        assert!(embed(&trace(30, 1), WindowLength::Fixed(4), Some(0)).is_err());
        assert_eq!(WindowLength::Auto.resolve(9), 4);
    }
}
