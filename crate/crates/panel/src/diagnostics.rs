//! Poolability, heteroskedasticity, serial correlation, cross-sectional
//! dependence and Hausman tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use crate::design::Design;
use crate::error::{PanelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub df1: f64,
    pub df2: Option<f64>,
    pub p_value: f64,
    /// Auxiliary statistics, e.g. the scaled CD z for the LM test.
    #[serde(default)]
    pub extra: Vec<(String, f64)>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive dof").sf(x)
}

fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    FisherSnedecor::new(d1, d2).expect("positive dof").sf(x)
}

/// F = [(RSS_p - RSS_fe)/(N-1)] / [RSS_fe/(n - N - k)], with k slopes.
pub fn f_pool_test(rss_pooled: f64, rss_fe: f64, n_groups: usize, n: usize, k: usize) -> Result<TestResult> {
    if n_groups < 2 {
        return Err(PanelError::DegreesOfFreedom("poolability test needs at least 2 cities".into()));
    }
    if n <= n_groups + k {
        return Err(PanelError::DegreesOfFreedom(format!("n = {n} leaves no residual dof for N = {n_groups}, k = {k}")));
    }
    let d1 = (n_groups - 1) as f64;
    let d2 = (n - n_groups - k) as f64;
    let mut warnings = Vec::new();
    if rss_fe > rss_pooled * (1.0 + 1e-12) {
        warnings.push(format!("fixed-effects RSS {rss_fe:.6e} exceeds pooled RSS {rss_pooled:.6e}"));
    }
    let num = (rss_pooled - rss_fe).max(0.0) / d1;
    let stat = if num == 0.0 { 0.0 } else { num / (rss_fe / d2) };
    Ok(TestResult {
        name: "F test for city effects".into(),
        statistic: stat,
        df1: d1,
        df2: Some(d2),
        p_value: if stat == 0.0 { 1.0 } else { f_sf(stat, d1, d2) },
        extra: Vec::new(),
        warnings,
    })
}

/// Modified Wald test for groupwise heteroskedasticity:
/// W = Σ_i (σ̂_i² - σ̂²)² / V̂_i, V̂_i = Σ_t (e_it² - σ̂_i²)² / (T_i (T_i - 1)), χ²(N).
/// Cities with V̂_i = 0 are excluded and reduce the dof.
pub fn groupwise_het_wald(residuals: &[Vec<f64>]) -> Result<TestResult> {
    if let Some((i, g)) = residuals.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(PanelError::DegreesOfFreedom(format!("group {i} has {} residuals, need at least 2", g.len())));
    }
    let n: usize = residuals.iter().map(Vec::len).sum();
    let sigma2 = residuals.iter().flatten().map(|e| e * e).sum::<f64>() / n as f64;
    let mut stat = 0.0;
    let mut df = 0usize;
    let mut warnings = Vec::new();
    for (i, g) in residuals.iter().enumerate() {
        let t = g.len() as f64;
        let s2 = g.iter().map(|e| e * e).sum::<f64>() / t;
        let v = g.iter().map(|e| (e * e - s2).powi(2)).sum::<f64>() / (t * (t - 1.0));
        if v <= 0.0 {
            warnings.push(format!("group {i} has constant squared residuals and was excluded"));
            continue;
        }
        stat += (s2 - sigma2).powi(2) / v;
        df += 1;
    }
    if df == 0 {
        return Err(PanelError::Degenerate("every group has constant squared residuals".into()));
    }
    Ok(TestResult {
        name: "Modified Wald test for groupwise heteroskedasticity".into(),
        statistic: stat,
        df1: df as f64,
        df2: None,
        p_value: chi2_sf(stat, df as f64),
        extra: vec![("sigma2".into(), sigma2)],
        warnings,
    })
}

/// First-difference serial-correlation test on already differenced residuals:
/// pooled no-constant regression of Δe_t on Δe_{t-1}, H0: slope = -0.5,
/// cluster-robust Wald compared with F(1, G-1).
pub fn serial_corr_differenced(diffs: &[Vec<f64>]) -> Result<TestResult> {
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut pairs = 0;
    for g in diffs {
        for w in g.windows(2) {
            sxx += w[0] * w[0];
            sxy += w[0] * w[1];
            pairs += 1;
        }
    }
    let groups: Vec<&Vec<f64>> = diffs.iter().filter(|g| g.len() >= 2).collect();
    let n_groups = groups.len();
    if n_groups < 2 || pairs == 0 {
        return Err(PanelError::DegreesOfFreedom("serial correlation test needs T >= 3 in at least 2 cities".into()));
    }
    if sxx <= 0.0 {
        return Err(PanelError::Degenerate("all differenced residuals are zero".into()));
    }
    let b = sxy / sxx;
    let mut meat = 0.0;
    for g in &groups {
        let score: f64 = g.windows(2).map(|w| w[0] * (w[1] - b * w[0])).sum();
        meat += score * score;
    }
    let gf = n_groups as f64;
    let var = gf / (gf - 1.0) * meat / (sxx * sxx);
    if var <= 0.0 {
        return Err(PanelError::Degenerate("zero cluster-robust variance in serial correlation test".into()));
    }
    let stat = (b + 0.5).powi(2) / var;
    Ok(TestResult {
        name: "Wooldridge test for serial correlation".into(),
        statistic: stat,
        df1: 1.0,
        df2: Some(gf - 1.0),
        p_value: f_sf(stat, 1.0, gf - 1.0),
        extra: vec![("rho".into(), b), ("se".into(), var.sqrt())],
        warnings: Vec::new(),
    })
}

/// Serial-correlation test on level residual series (differenced here).
pub fn serial_corr_test(residuals: &[Vec<f64>]) -> Result<TestResult> {
    if residuals.iter().any(|g| g.len() < 3) {
        return Err(PanelError::DegreesOfFreedom("serial correlation test needs T >= 3 per city".into()));
    }
    let diffs: Vec<Vec<f64>> = residuals.iter().map(|g| g.windows(2).map(|w| w[1] - w[0]).collect()).collect();
    serial_corr_differenced(&diffs)
}

/// Residuals of the first-differenced slope regression (no constant), grouped
/// by city in period order. Differences are taken only across consecutive days.
pub fn fd_residuals(design: &Design) -> Result<Vec<Vec<f64>>> {
    let slopes = design.slope_indices();
    if slopes.is_empty() {
        return Err(PanelError::Spec("first-difference regression needs at least one slope".into()));
    }
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for i in 1..design.n() {
        if design.groups[i] == design.groups[i - 1] && design.periods[i] == design.periods[i - 1] + 1 {
            rows.push((i, i - 1));
        }
    }
    let m = rows.len();
    let dy = DVector::from_iterator(m, rows.iter().map(|&(i, p)| design.y[i] - design.y[p]));
    let dx = DMatrix::from_fn(m, slopes.len(), |r, c| {
        let (i, p) = rows[r];
        design.x[(i, slopes[c])] - design.x[(p, slopes[c])]
    });
    let names = design.slope_names();
    let fit = crate::ols::ols_fit(&dy, &dx, &names)?;
    let mut out = vec![Vec::new(); design.n_groups()];
    for (r, &(i, _)) in rows.iter().enumerate() {
        out[design.groups[i]].push(fit.residuals[r]);
    }
    Ok(out)
}

/// Breusch-Pagan LM test of cross-sectional dependence with the scaled CD variant.
/// Correlations are uncentered: ρ_ij = Σ e_i e_j / sqrt(Σ e_i² Σ e_j²).
pub fn bp_lm_cd_test(residuals: &[Vec<f64>]) -> Result<TestResult> {
    let n = residuals.len();
    if n < 2 {
        return Err(PanelError::DegreesOfFreedom("cross-sectional dependence test needs at least 2 cities".into()));
    }
    let t = residuals[0].len();
    if residuals.iter().any(|g| g.len() != t) {
        return Err(PanelError::Spec("cross-sectional dependence test needs a common T across cities".into()));
    }
    if t < 2 {
        return Err(PanelError::DegreesOfFreedom(format!("T = {t}, need at least 2")));
    }
    let norms: Vec<f64> = residuals.iter().map(|g| g.iter().map(|e| e * e).sum::<f64>().sqrt()).collect();
    let mut warnings = Vec::new();
    let tf = t as f64;
    let mut lm = 0.0;
    let mut cd = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let rho = if norms[i] > 0.0 && norms[j] > 0.0 {
                residuals[i].iter().zip(&residuals[j]).map(|(a, b)| a * b).sum::<f64>() / (norms[i] * norms[j])
            } else {
                warnings.push(format!("pair ({i}, {j}) has an all-zero residual series"));
                0.0
            };
            lm += tf * rho * rho;
            cd += tf * rho * rho - 1.0;
        }
    }
    let nf = n as f64;
    let z = (1.0 / (nf * (nf - 1.0))).sqrt() * cd;
    let df = nf * (nf - 1.0) / 2.0;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(TestResult {
        name: "Breusch-Pagan LM test for cross-sectional dependence".into(),
        statistic: lm,
        df1: df,
        df2: None,
        p_value: chi2_sf(lm, df),
        extra: vec![("z".into(), z), ("z_p_value".into(), 2.0 * normal.sf(z.abs()))],
        warnings,
    })
}

/// H = qᵀ (V_fe - V_re)⁺ q with q = β_fe - β_re, χ² with one dof per shared slope.
/// A difference that is not positive definite is inverted with the
/// Moore-Penrose pseudo-inverse and flagged.
pub fn hausman_test(
    fe: (&[String], &DVector<f64>, &DMatrix<f64>),
    re: (&[String], &DVector<f64>, &DMatrix<f64>),
) -> Result<TestResult> {
    let shared: Vec<(usize, usize)> = fe
        .0
        .iter()
        .enumerate()
        .filter_map(|(i, name)| re.0.iter().position(|r| r == name).map(|j| (i, j)))
        .collect();
    let k = shared.len();
    if k == 0 {
        return Err(PanelError::Spec("no shared slopes between the two models".into()));
    }
    let q = DVector::from_iterator(k, shared.iter().map(|&(i, j)| fe.1[i] - re.1[j]));
    let diff = DMatrix::from_fn(k, k, |a, b| fe.2[(shared[a].0, shared[b].0)] - re.2[(shared[a].1, shared[b].1)]);
    let diff = (&diff + diff.transpose()) * 0.5;
    let eig = diff.symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = max_abs * k as f64 * f64::EPSILON * 16.0;
    let mut warnings = Vec::new();
    let negative = eig.eigenvalues.iter().filter(|&&v| v < -tol).count();
    let null = eig.eigenvalues.iter().filter(|v| v.abs() <= tol).count();
    if negative > 0 {
        warnings.push(format!(
            "covariance difference is not positive semidefinite ({negative} negative eigenvalues); used pseudo-inverse"
        ));
    } else if null > 0 {
        warnings.push(format!("covariance difference is singular (rank {}); used pseudo-inverse", k - null));
    }
    let proj = eig.eigenvectors.transpose() * &q;
    let mut stat = 0.0;
    for (l, &v) in eig.eigenvalues.iter().enumerate() {
        if v.abs() > tol {
            stat += proj[l] * proj[l] / v;
        }
    }
    if q.iter().all(|&v| v == 0.0) {
        stat = 0.0;
    }
    Ok(TestResult {
        name: "Hausman test".into(),
        statistic: stat,
        df1: k as f64,
        df2: None,
        p_value: if stat > 0.0 { chi2_sf(stat, k as f64) } else { 1.0 },
        extra: Vec::new(),
        warnings,
    })
}
