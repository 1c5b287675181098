//! Pooled, fixed-effects (LSDV and within) and random-effects estimators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::PanelDataset;
use crate::design::{build_design, ColumnKind, CovarianceKind, Design, RegressionSpec};
use crate::error::{PanelError, Result};
use crate::ols::{ols_fit, symmetrize, OlsFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Pooled,
    FixedEffects,
    Within,
    RandomEffects,
}

/// `***` p<0.01, `**` p<0.05, `*` p<0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub stars: String,
    /// 95% confidence interval from the t distribution with the residual degrees of freedom.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub dependent: String,
    pub estimator: Estimator,
    pub covariance: CovarianceKind,
    pub coefficients: Vec<Coefficient>,
    /// Per-city intercepts β0 + γ_i (fixed effects only), baseline first.
    pub city_intercepts: Vec<Coefficient>,
    pub baseline: Option<String>,
    pub n_obs: usize,
    pub n_groups: usize,
    pub df_resid: usize,
    pub rss: f64,
    pub r_squared: f64,
    pub warnings: Vec<String>,
}

impl RegressionReport {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn coefficient(name: String, estimate: f64, variance: f64, t_dist: &StudentsT) -> Coefficient {
    let crit = t_dist.inverse_cdf(0.975);
    let se = variance.max(0.0).sqrt();
    let t = estimate / se;
    let p = if se > 0.0 { 2.0 * t_dist.sf(t.abs()) } else { f64::NAN };
    Coefficient {
        name,
        estimate,
        std_error: se,
        t_stat: t,
        p_value: p,
        stars: stars(p).to_string(),
        ci_low: estimate - crit * se,
        ci_high: estimate + crit * se,
    }
}

fn t_dist(df: usize) -> StudentsT {
    StudentsT::new(0.0, 1.0, df.max(1) as f64).expect("positive dof")
}

pub(crate) fn coefficients(names: &[String], beta: &[f64], cov: &DMatrix<f64>, idx: &[usize], df: usize) -> Vec<Coefficient> {
    let t_dist = t_dist(df);
    idx.iter().map(|&j| coefficient(names[j].clone(), beta[j], cov[(j, j)], &t_dist)).collect()
}

fn r_squared(y: &DVector<f64>, rss: f64) -> f64 {
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if tss > 0.0 {
        1.0 - rss / tss
    } else {
        f64::NAN
    }
}

/// A fitted least-squares model with its design.
#[derive(Debug, Clone)]
pub struct PanelFit {
    pub design: Design,
    pub ols: OlsFit,
    pub cov: DMatrix<f64>,
    pub report: RegressionReport,
}

fn fit_design(design: Design, spec: &RegressionSpec, estimator: Estimator) -> Result<PanelFit> {
    let ols = ols_fit(&design.y, &design.x, &design.columns)?;
    let cov = ols.covariance(&design.x, spec.covariance)?;
    let shown: Vec<usize> = (0..design.k())
        .filter(|&j| match design.kinds[j] {
            ColumnKind::Slope => true,
            ColumnKind::Intercept => estimator == Estimator::Pooled,
            ColumnKind::Dummy => false,
        })
        .collect();
    let df = ols.n - ols.k;
    let beta: Vec<f64> = ols.beta.iter().copied().collect();
    let mut city_intercepts = Vec::new();
    if estimator == Estimator::FixedEffects {
        let t_dist = t_dist(df);
        if let Some(b) = &design.baseline {
            city_intercepts.push(coefficient(b.clone(), ols.beta[0], cov[(0, 0)], &t_dist));
        }
        for (j, kind) in design.kinds.iter().enumerate() {
            if *kind == ColumnKind::Dummy {
                let city = design.columns[j].trim_start_matches("D[").trim_end_matches(']').to_string();
                let var = cov[(0, 0)] + cov[(j, j)] + 2.0 * cov[(0, j)];
                city_intercepts.push(coefficient(city, ols.beta[0] + ols.beta[j], var, &t_dist));
            }
        }
    }
    let report = RegressionReport {
        dependent: spec.dependent.to_string(),
        estimator,
        covariance: spec.covariance,
        coefficients: coefficients(&design.columns, &beta, &cov, &shown, df),
        city_intercepts,
        baseline: design.baseline.clone(),
        n_obs: ols.n,
        n_groups: design.n_groups(),
        df_resid: df,
        rss: ols.rss,
        r_squared: r_squared(&design.y, ols.rss),
        warnings: design.notes.clone(),
    };
    Ok(PanelFit { design, ols, cov, report })
}

/// OLS with a single intercept, ignoring city structure.
pub fn pooled_fit(panel: &PanelDataset, spec: &RegressionSpec) -> Result<PanelFit> {
    let spec = RegressionSpec { dummies: false, ..spec.clone() };
    fit_design(build_design(panel, &spec)?, &spec, Estimator::Pooled)
}

/// Least-squares dummy-variable fixed effects: intercept plus N-1 city dummies.
pub fn fe_lsdv_fit(panel: &PanelDataset, spec: &RegressionSpec) -> Result<PanelFit> {
    let spec = RegressionSpec { dummies: true, ..spec.clone() };
    fit_design(build_design(panel, &spec)?, &spec, Estimator::FixedEffects)
}

#[derive(Debug, Clone)]
pub struct WithinFit {
    pub names: Vec<String>,
    pub beta: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// RSS / (n - N - k).
    pub sigma2: f64,
    pub df_resid: usize,
    pub n_obs: usize,
    pub n_groups: usize,
    /// Regressors with no within-city variation.
    pub unidentified: Vec<String>,
    pub warnings: Vec<String>,
    pub groups: Vec<usize>,
}

fn group_means(v: &DVector<f64>, groups: &[usize], n_groups: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n_groups];
    let mut count = vec![0usize; n_groups];
    for (i, &g) in groups.iter().enumerate() {
        sum[g] += v[i];
        count[g] += 1;
    }
    sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
}

/// Fixed effects by demeaning within each city.
pub fn within_fit(panel: &PanelDataset, spec: &RegressionSpec) -> Result<WithinFit> {
    let spec = RegressionSpec { dummies: false, ..spec.clone() };
    let design = build_design(panel, &spec)?;
    within_from_design(&design)
}

pub fn within_from_design(design: &Design) -> Result<WithinFit> {
    let mut warnings = design.notes.clone();
    let sizes = design.group_sizes();
    let keep_rows: Vec<usize> = (0..design.n()).filter(|&i| sizes[design.groups[i]] >= 2).collect();
    for (g, &s) in sizes.iter().enumerate() {
        if s == 1 {
            warnings.push(format!("city `{}` has a single observation and was dropped", design.cities[g]));
        }
    }
    let mut remap = vec![usize::MAX; design.n_groups()];
    let mut n_groups = 0;
    for (g, &s) in sizes.iter().enumerate() {
        if s >= 2 {
            remap[g] = n_groups;
            n_groups += 1;
        }
    }
    let groups: Vec<usize> = keep_rows.iter().map(|&i| remap[design.groups[i]]).collect();
    let slopes = design.slope_indices();
    let n = keep_rows.len();

    let y = DVector::from_iterator(n, keep_rows.iter().map(|&i| design.y[i]));
    let y_bar = group_means(&y, &groups, n_groups);
    let y_dm = DVector::from_iterator(n, (0..n).map(|i| y[i] - y_bar[groups[i]]));

    let mut names = Vec::new();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut unidentified = Vec::new();
    for &j in &slopes {
        let col = DVector::from_iterator(n, keep_rows.iter().map(|&i| design.x[(i, j)]));
        let bar = group_means(&col, &groups, n_groups);
        let dm = DVector::from_iterator(n, (0..n).map(|i| col[i] - bar[groups[i]]));
        if dm.norm() <= 1e-10 * col.norm().max(1e-300) {
            unidentified.push(design.columns[j].clone());
            warnings.push(format!("`{}` is constant within every city and is not identified", design.columns[j]));
            continue;
        }
        names.push(design.columns[j].clone());
        cols.push(dm);
    }
    if cols.is_empty() {
        return Err(PanelError::Degenerate("no regressor varies within cities".into()));
    }
    let x = DMatrix::from_columns(&cols);
    let k = x.ncols();
    if n <= n_groups + k {
        return Err(PanelError::DegreesOfFreedom(format!("{n} observations, {n_groups} cities, {k} slopes")));
    }
    let ols = ols_fit(&y_dm, &x, &names)?;
    let df = n - n_groups - k;
    let sigma2 = ols.rss / df as f64;
    Ok(WithinFit {
        names,
        cov: symmetrize(&ols.xtx_inv * sigma2),
        beta: ols.beta,
        residuals: ols.residuals,
        rss: ols.rss,
        sigma2,
        df_resid: df,
        n_obs: n,
        n_groups,
        unidentified,
        warnings,
        groups,
    })
}

#[derive(Debug, Clone)]
pub struct ReFit {
    pub report: RegressionReport,
    /// Slope names and their estimates/covariance block, aligned.
    pub slope_names: Vec<String>,
    pub slope_beta: DVector<f64>,
    pub slope_cov: DMatrix<f64>,
    pub sigma2_eps: f64,
    pub sigma2_alpha: f64,
    /// Quasi-demeaning weight per city.
    pub theta: Vec<f64>,
}

/// Random effects by feasible GLS with Swamy-Arora variance components:
/// σ²_ε from the within regression, σ²_α from the between regression of city
/// means (harmonic-mean group size for unbalanced panels), then quasi-demeaning
/// with θ_i = 1 - sqrt(σ²_ε / (T_i σ²_α + σ²_ε)).
pub fn re_fit(panel: &PanelDataset, spec: &RegressionSpec) -> Result<ReFit> {
    let spec = RegressionSpec { dummies: false, ..spec.clone() };
    let design = build_design(panel, &spec)?;
    re_from_design(&design, &spec)
}

pub fn re_from_design(design: &Design, spec: &RegressionSpec) -> Result<ReFit> {
    let mut warnings = design.notes.clone();
    let within = within_from_design(design)?;
    let sigma2_eps = within.sigma2;

    let n_groups = design.n_groups();
    let sizes = design.group_sizes();
    let k = design.k();
    let y_bar = group_means(&design.y, &design.groups, n_groups);
    let x_bar: Vec<Vec<f64>> = (0..k)
        .map(|j| group_means(&design.x.column(j).into_owned(), &design.groups, n_groups))
        .collect();
    let xb = DMatrix::from_fn(n_groups, k, |g, j| x_bar[j][g]);
    let yb = DVector::from_vec(y_bar.clone());
    let svd = xb.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * max_sv).count();
    if n_groups <= rank {
        return Err(PanelError::DegreesOfFreedom(format!(
            "between regression has {n_groups} cities for {rank} identified coefficients"
        )));
    }
    let coef = svd.solve(&yb, 1e-10 * max_sv).map_err(|e| PanelError::Degenerate(e.to_string()))?;
    let between_rss = (&yb - &xb * coef).norm_squared();
    let sigma2_between = between_rss / (n_groups - rank) as f64;
    let t_harmonic = n_groups as f64 / sizes.iter().map(|&s| 1.0 / s as f64).sum::<f64>();
    let mut sigma2_alpha = sigma2_between - sigma2_eps / t_harmonic;
    if sigma2_alpha < 0.0 {
        warnings.push(format!("negative city-effect variance estimate {sigma2_alpha:.3e} clamped to 0"));
        sigma2_alpha = 0.0;
    }
    let theta: Vec<f64> =
        sizes.iter().map(|&t| 1.0 - (sigma2_eps / (t as f64 * sigma2_alpha + sigma2_eps)).sqrt()).collect();

    let n = design.n();
    let y_star = DVector::from_iterator(n, (0..n).map(|i| design.y[i] - theta[design.groups[i]] * y_bar[design.groups[i]]));
    let x_star = DMatrix::from_fn(n, k, |i, j| design.x[(i, j)] - theta[design.groups[i]] * x_bar[j][design.groups[i]]);
    let ols = ols_fit(&y_star, &x_star, &design.columns)?;
    let cov = ols.covariance(&x_star, spec.covariance)?;
    let df = ols.n - ols.k;
    let beta: Vec<f64> = ols.beta.iter().copied().collect();
    let all: Vec<usize> = (0..k).collect();
    let slopes = design.slope_indices();
    let report = RegressionReport {
        dependent: spec.dependent.to_string(),
        estimator: Estimator::RandomEffects,
        covariance: spec.covariance,
        coefficients: coefficients(&design.columns, &beta, &cov, &all, df),
        city_intercepts: Vec::new(),
        baseline: None,
        n_obs: n,
        n_groups,
        df_resid: df,
        rss: ols.rss,
        r_squared: r_squared(&y_star, ols.rss),
        warnings,
    };
    Ok(ReFit {
        report,
        slope_names: slopes.iter().map(|&j| design.columns[j].clone()).collect(),
        slope_beta: DVector::from_iterator(slopes.len(), slopes.iter().map(|&j| ols.beta[j])),
        slope_cov: DMatrix::from_fn(slopes.len(), slopes.len(), |a, b| cov[(slopes[a], slopes[b])]),
        sigma2_eps,
        sigma2_alpha,
        theta,
    })
}

/// Slope estimates and covariance block of a fitted FE model, in design order.
pub fn slope_block(fit: &PanelFit) -> (Vec<String>, DVector<f64>, DMatrix<f64>) {
    let idx = fit.design.slope_indices();
    let names = idx.iter().map(|&j| fit.design.columns[j].clone()).collect();
    let beta = DVector::from_iterator(idx.len(), idx.iter().map(|&j| fit.ols.beta[j]));
    let cov = DMatrix::from_fn(idx.len(), idx.len(), |a, b| fit.cov[(idx[a], idx[b])]);
    (names, beta, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::row;
    use crate::data::SentimentPanelRow;
    use crate::design::{Dependent, Regressor};

    /// netout = slope·cases + α_city exactly.
    fn noiseless(cities: &[(&str, f64)], days: u32, slope: f64) -> PanelDataset {
        let mut rows = Vec::new();
        for (ci, (c, alpha)) in cities.iter().enumerate() {
            for d in 1..=days {
                let cases = ((d * 7 + ci as u32 * 3) % 11) as f64;
                rows.push(SentimentPanelRow { cases, netout: Some(slope * cases + alpha), ..row(c, d, 10, 1) });
            }
        }
        PanelDataset::new(rows).unwrap()
    }

    fn spec() -> RegressionSpec {
        RegressionSpec {
            regressors: vec![Regressor::level("cases")],
            trend: false,
            ..RegressionSpec::standard(Dependent::Netout)
        }
    }

    #[test]
    fn noiseless_fixed_effects() {
        let p = noiseless(&[("a", 1.0), ("b", 4.0), ("c", -2.0)], 8, 1.0);
        let fe = fe_lsdv_fit(&p, &spec()).unwrap();
        assert!((fe.report.coefficients[0].estimate - 1.0).abs() < 1e-12);
        assert!(fe.report.rss < 1e-20);
        let ints: Vec<f64> = fe.report.city_intercepts.iter().map(|c| c.estimate).collect();
        assert!((ints[1] - ints[0] - 3.0).abs() < 1e-10);
        assert!((ints[2] - ints[0] + 3.0).abs() < 1e-10);
        assert_eq!(fe.report.city_intercepts[0].name, "a");
    }

    #[test]
    fn single_city_reduces_to_pooled() {
        let p = noiseless(&[("solo", 2.0)], 9, 0.5);
        let fe = fe_lsdv_fit(&p, &spec()).unwrap();
        let po = pooled_fit(&p, &spec()).unwrap();
        assert_eq!(fe.design.k(), po.design.k());
        assert!((fe.ols.beta[1] - po.ols.beta[1]).abs() < 1e-12);
    }

    #[test]
    fn within_flags_constant_regressor() {
        let rows: Vec<SentimentPanelRow> = noiseless(&[("a", 1.0), ("b", 2.0)], 6, 1.0)
            .rows()
            .iter()
            .map(|r| SentimentPanelRow { density: if r.city == "a" { 5.0 } else { 9.0 }, ..r.clone() })
            .collect();
        let p = PanelDataset::new(rows).unwrap();
        let s = RegressionSpec { regressors: vec![Regressor::level("cases"), Regressor::level("density")], ..spec() };
        let w = within_fit(&p, &s).unwrap();
        assert_eq!(w.unidentified, ["density"]);
        assert_eq!(w.names, ["cases"]);
    }

    #[test]
    fn stars_follow_thresholds() {
        assert_eq!(stars(0.009), "***");
        assert_eq!(stars(0.01), "**");
        assert_eq!(stars(0.049), "**");
        assert_eq!(stars(0.05), "*");
        assert_eq!(stars(0.099), "*");
        assert_eq!(stars(0.1), "");
    }
}
