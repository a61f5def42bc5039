//! Gaussian copula over MF residuals: fitting, sampling, correlation
//! retargeting, jitter of the target, and amplitude scaling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::trace::{ResidualMatrix, RngSpec, MIN_ROWS};

/// Smallest eigenvalue tolerated in any fitted or target correlation.
pub const MIN_EIGENVALUE: f64 = 1e-8;
/// Eigenvalue floor used when repairing a singular projection result.
const REPAIR_FLOOR: f64 = 2e-6;
const MAX_PROJECTION_ITERS: usize = 200;
const PROJECTION_TOL: f64 = 1e-9;
const JITTER_CLIP: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct CopulaModel {
    pub sigma: DMatrix<f64>,
    pub chol_orig: DMatrix<f64>,
    pub n_fit: usize,
    /// Set when the sample correlation had to be projected to stay PD.
    pub projected: bool,
}

impl CopulaModel {
    /// A copula with a given correlation matrix.
    pub fn from_correlation(sigma: DMatrix<f64>, n_fit: usize) -> Result<Self> {
        let chol_orig = cholesky(&sigma)?;
        Ok(Self { sigma, chol_orig, n_fit, projected: false })
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetCorrelation {
    pub gamma_target: DMatrix<f64>,
    pub chol_target: DMatrix<f64>,
    pub jitter_delta: f64,
}

impl TargetCorrelation {
    /// An explicit target (no jitter).
    pub fn explicit(gamma_target: DMatrix<f64>) -> Result<Self> {
        let chol_target = cholesky(&gamma_target)?;
        Ok(Self { gamma_target, chol_target, jitter_delta: 0.0 })
    }
}

fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.l()).ok_or(Error::CholeskyFailure)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Pearson correlation of the residual columns, projected to a PD
/// correlation matrix when necessary.
pub fn fit_copula(residuals: &ResidualMatrix) -> Result<CopulaModel> {
    let (n, p) = residuals.values.shape();
    if n < MIN_ROWS {
        return Err(Error::TooShort { n, min: MIN_ROWS });
    }
    let mut centred = residuals.values.clone();
    let mut sd = vec![0.0; p];
    for (k, mut col) in centred.column_iter_mut().enumerate() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        sd[k] = col.norm();
        if sd[k] == 0.0 {
            return Err(Error::DegenerateResiduals { column: k });
        }
    }
    let cross = centred.transpose() * &centred;
    let mut sigma = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            (cross[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    });
    let mut projected = false;
    if min_eigenvalue(&sigma) < MIN_EIGENVALUE {
        log::warn!("residual correlation is not positive definite; projecting");
        sigma = nearest_correlation(&sigma)?;
        projected = true;
    }
    let chol_orig = cholesky(&sigma)?;
    Ok(CopulaModel { sigma, chol_orig, n_fit: n, projected })
}

/// `n` IID rows from `N(0, Sigma)`: each row is `C_orig w` for standard
/// normal `w`.
pub fn sample(copula: &CopulaModel, n: usize, rng: RngSpec) -> Result<ResidualMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let p = copula.p();
    let mut rng = rng.rng();
    // Draw row by row so a prefix of a longer sample equals a shorter one.
    let mut w = DMatrix::zeros(p, n);
    for t in 0..n {
        for k in 0..p {
            w[(k, t)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let rows = &copula.chol_orig * w;
    ResidualMatrix::new(rows.transpose(), "copula-sample")
}

/// Moves the correlation of `eps_prime` from the copula's `Sigma` to
/// `Gamma_target`. With row vectors,
/// `eps'' = eps' (C_orig^T)^{-1} C_target^T`, whose population covariance
/// is `C_target C_target^T = Gamma_target`.
pub fn retarget(
    eps_prime: &ResidualMatrix,
    copula: &CopulaModel,
    target: &TargetCorrelation,
) -> Result<ResidualMatrix> {
    let p = copula.p();
    if eps_prime.p() != p || target.gamma_target.nrows() != p {
        return Err(Error::ShapeMismatch {
            expected: format!("{p} columns"),
            got: format!(
                "{} residual columns, {}x{} target",
                eps_prime.p(),
                target.gamma_target.nrows(),
                target.gamma_target.ncols()
            ),
        });
    }
    // Work on columns: x^T = C_orig^{-1} eps'^T, eps''^T = C_target x^T.
    let mut xt = eps_prime.values.transpose();
    if !copula.chol_orig.solve_lower_triangular_mut(&mut xt) {
        return Err(Error::CholeskyFailure);
    }
    let out = (&target.chol_target * xt).transpose();
    Ok(ResidualMatrix {
        values: out,
        source_trace: eps_prime.source_trace.clone(),
        scale: eps_prime.scale,
    })
}

/// Draws each off-diagonal target correlation uniformly within `delta` of
/// the fitted value, then repairs the result into a PD correlation matrix.
pub fn jitter_target(copula: &CopulaModel, delta: f64, rng: RngSpec) -> Result<TargetCorrelation> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(Error::InvalidParameter(format!("delta must lie in [0, 0.5], got {delta}")));
    }
    if delta == 0.0 {
        return Ok(TargetCorrelation {
            gamma_target: copula.sigma.clone(),
            chol_target: copula.chol_orig.clone(),
            jitter_delta: 0.0,
        });
    }
    let p = copula.p();
    let mut rng = rng.rng();
    let mut gamma = DMatrix::identity(p, p);
    for i in 0..p {
        for j in i + 1..p {
            let centre = copula.sigma[(i, j)];
            let dist = Uniform::new(centre - delta, centre + delta)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let v = rng.sample(dist).clamp(-JITTER_CLIP, JITTER_CLIP);
            gamma[(i, j)] = v;
            gamma[(j, i)] = v;
        }
    }
    let gamma_target = nearest_correlation(&gamma)?;
    let chol_target = cholesky(&gamma_target)?;
    Ok(TargetCorrelation { gamma_target, chol_target, jitter_delta: delta })
}

/// Effective multiplier for a percent-style scale parameter: `lambda / 100`.
pub fn effective_scale(lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    Ok(lambda / 100.0)
}

/// Multiplies residuals by `lambda / 100`.
pub fn scale(eps: &ResidualMatrix, lambda: f64) -> Result<ResidualMatrix> {
    let s = effective_scale(lambda)?;
    Ok(ResidualMatrix {
        values: &eps.values * s,
        source_trace: eps.source_trace.clone(),
        scale: eps.scale * s,
    })
}

/// Frobenius-nearest correlation matrix by alternating projections with
/// Dykstra's correction, followed by an eigenvalue floor when the limit is
/// singular.
pub fn nearest_correlation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    if m.ncols() != p {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", p, m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut y = sym.clone();
    y.fill_diagonal(1.0);
    let mut correction = DMatrix::zeros(p, p);
    let mut converged = false;
    for _ in 0..MAX_PROJECTION_ITERS {
        let r = &y - &correction;
        let x = project_psd(&r, 0.0);
        correction = &x - &r;
        let mut next = x;
        next.fill_diagonal(1.0);
        let change = (&next - &y).amax();
        y = next;
        if change < PROJECTION_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(MAX_PROJECTION_ITERS));
    }
    y = (&y + y.transpose()) * 0.5;
    if min_eigenvalue(&y) < MIN_EIGENVALUE {
        let floored = project_psd(&y, REPAIR_FLOOR);
        let d = DVector::from_iterator(p, floored.diagonal().iter().map(|v| 1.0 / v.sqrt()));
        y = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { floored[(i, j)] * d[i] * d[j] });
    }
    Ok(y)
}

fn project_psd(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    (&out + out.transpose()) * 0.5
}
