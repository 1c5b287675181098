//! Least squares by QR and sandwich covariances.

use nalgebra::{DMatrix, DVector};

use crate::design::{dependent_column, CovarianceKind};
use crate::error::{PanelError, Result};

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// RSS / (n - k).
    pub sigma2: f64,
    pub n: usize,
    pub k: usize,
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    /// σ̂²(XᵀX)⁻¹.
    pub fn classical_cov(&self) -> DMatrix<f64> {
        symmetrize(&self.xtx_inv * self.sigma2)
    }

    pub fn covariance(&self, x: &DMatrix<f64>, kind: CovarianceKind) -> Result<DMatrix<f64>> {
        match kind {
            CovarianceKind::Classical => Ok(self.classical_cov()),
            _ => sandwich(&self.xtx_inv, x, &self.residuals, kind),
        }
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn rank_error(x: &DMatrix<f64>, names: &[String]) -> PanelError {
    let label = |j: usize| names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
    match dependent_column(x) {
        Some((col, deps)) => PanelError::Collinear { column: label(col), depends_on: deps.into_iter().map(label).collect() },
        None => PanelError::Degenerate("design matrix is numerically rank deficient".into()),
    }
}

/// Least squares via Householder QR. `names` label columns in rank errors.
pub fn ols_fit(y: &DVector<f64>, x: &DMatrix<f64>, names: &[String]) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(PanelError::Spec(format!("y has {} rows, X has {n}", y.len())));
    }
    if n <= k {
        return Err(PanelError::DegreesOfFreedom(format!("{n} observations for {k} coefficients")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-10 * max_diag) {
        return Err(rank_error(x, names));
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty).ok_or_else(|| rank_error(x, names))?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(k, k)).ok_or_else(|| rank_error(x, names))?;
    let xtx_inv = symmetrize(&r_inv * r_inv.transpose());
    let residuals = y - x * &beta;
    let rss = residuals.norm_squared();
    Ok(OlsFit { beta, residuals, rss, sigma2: rss / (n - k) as f64, n, k, xtx_inv })
}

fn sandwich(bread: &DMatrix<f64>, x: &DMatrix<f64>, e: &DVector<f64>, kind: CovarianceKind) -> Result<DMatrix<f64>> {
    let (n, k) = x.shape();
    if e.len() != n {
        return Err(PanelError::Spec(format!("{} residuals for {n} design rows", e.len())));
    }
    let mut weighted = x.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= e[i] * e[i];
    }
    let meat = x.transpose() * weighted;
    let mut v = bread * meat * bread;
    if kind == CovarianceKind::Hc1 {
        if n <= k {
            return Err(PanelError::DegreesOfFreedom(format!("HC1 needs n > k, got n = {n}, k = {k}")));
        }
        v *= n as f64 / (n - k) as f64;
    }
    Ok(symmetrize(v))
}

/// (XᵀX)⁻¹ Xᵀ diag(e²) X (XᵀX)⁻¹, scaled by n/(n-k) for HC1.
pub fn hc_covariance(x: &DMatrix<f64>, residuals: &DVector<f64>, kind: CovarianceKind) -> Result<DMatrix<f64>> {
    if residuals.len() != x.nrows() {
        return Err(PanelError::Spec(format!("{} residuals for {} design rows", residuals.len(), x.nrows())));
    }
    let k = x.ncols();
    let r = x.clone().qr().r();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| PanelError::Degenerate("X is rank deficient".into()))?;
    let bread = symmetrize(&r_inv * r_inv.transpose());
    match kind {
        CovarianceKind::Classical => Err(PanelError::Spec("hc_covariance needs HC0 or HC1".into())),
        _ => sandwich(&bread, x, residuals, kind),
    }
}
