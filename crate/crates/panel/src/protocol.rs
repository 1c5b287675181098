//! The full specification-test sequence for a set of regressions.

use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::design::{CovarianceKind, Dependent, RegressionSpec};
use crate::diagnostics::{bp_lm_cd_test, f_pool_test, fd_residuals, groupwise_het_wald, hausman_test, serial_corr_differenced, TestResult};
use crate::error::{PanelError, Result};
use crate::estimators::{fe_lsdv_fit, pooled_fit, re_from_design, slope_block, RegressionReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub alpha: f64,
    /// Covariance used once heteroskedasticity or serial correlation is detected.
    pub robust: CovarianceKind,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self { alpha: 0.05, robust: CovarianceKind::Hc1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Pooled,
    FixedEffects,
    RandomEffects,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecOutcome {
    pub dependent: String,
    pub f_test: TestResult,
    pub heteroskedasticity: TestResult,
    pub serial_correlation: TestResult,
    /// Absent when the panel is unbalanced after lagging.
    pub cross_section: Option<TestResult>,
    pub hausman: TestResult,
    pub recommended: ModelChoice,
    /// Fixed-effects estimates with the covariance chosen by the tests.
    pub fixed_effects: RegressionReport,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub options: ProtocolOptions,
    pub outcomes: Vec<SpecOutcome>,
    /// Specifications that were not run, with the reason.
    pub skipped: Vec<String>,
}

impl ProtocolReport {
    pub fn outcome(&self, dependent: &str) -> Option<&SpecOutcome> {
        self.outcomes.iter().find(|o| o.dependent == dependent)
    }
}

/// Fear, confidence and attention, plus the net-outflow robustness regression.
pub fn default_specs() -> Vec<RegressionSpec> {
    [Dependent::fear(), Dependent::confidence(), Dependent::Attention, Dependent::Netout]
        .into_iter()
        .map(RegressionSpec::standard)
        .collect()
}

pub fn run_protocol(panel: &PanelDataset, specs: &[RegressionSpec], opts: &ProtocolOptions) -> Result<ProtocolReport> {
    let mut outcomes = Vec::new();
    let mut skipped = Vec::new();
    for spec in specs {
        if spec.dependent == Dependent::Netout && !panel.has_netout() {
            skipped.push("netout: panel has no net-outflow column, robustness regression skipped".to_string());
            continue;
        }
        let outcome = run_spec(panel, spec, opts)
            .map_err(|e| PanelError::InSpec { spec: spec.dependent.to_string(), source: Box::new(e) })?;
        outcomes.push(outcome);
    }
    Ok(ProtocolReport { options: *opts, outcomes, skipped })
}

pub fn run_spec(panel: &PanelDataset, spec: &RegressionSpec, opts: &ProtocolOptions) -> Result<SpecOutcome> {
    let classical = RegressionSpec { covariance: CovarianceKind::Classical, ..spec.clone() };
    let fe = fe_lsdv_fit(panel, &classical)?;
    let pooled = pooled_fit(panel, &classical)?;
    let design = &fe.design;
    let mut notes = design.notes.clone();

    let k_slopes = design.slope_indices().len();
    let f_test = f_pool_test(pooled.ols.rss, fe.ols.rss, design.n_groups(), design.n(), k_slopes)?;

    let by_city = design.by_group(&fe.ols.residuals);
    let heteroskedasticity = groupwise_het_wald(&by_city)?;
    let serial_correlation = serial_corr_differenced(&fd_residuals(design)?)?;
    let cross_section = match bp_lm_cd_test(&by_city) {
        Ok(t) => Some(t),
        Err(PanelError::Spec(msg)) => {
            notes.push(format!("cross-sectional dependence test skipped: {msg}"));
            None
        }
        Err(e) => return Err(e),
    };

    let robust = heteroskedasticity.rejects(opts.alpha) || serial_correlation.rejects(opts.alpha);
    let cov_kind = if robust { opts.robust } else { CovarianceKind::Classical };

    let re_spec = RegressionSpec { dummies: false, covariance: cov_kind, ..spec.clone() };
    let re_design = crate::design::build_design(panel, &re_spec)?;
    let re = re_from_design(&re_design, &re_spec)?;
    notes.extend(re.report.warnings.iter().filter(|w| !design.notes.contains(w)).cloned());

    let final_spec = RegressionSpec { covariance: cov_kind, ..spec.clone() };
    let fixed = if robust { fe_lsdv_fit(panel, &final_spec)? } else { fe };
    let (fe_names, fe_beta, fe_cov) = slope_block(&fixed);
    let hausman = hausman_test((&fe_names, &fe_beta, &fe_cov), (&re.slope_names, &re.slope_beta, &re.slope_cov))?;

    let recommended = if !f_test.rejects(opts.alpha) {
        ModelChoice::Pooled
    } else if hausman.rejects(opts.alpha) {
        ModelChoice::FixedEffects
    } else {
        ModelChoice::RandomEffects
    };
    if robust {
        notes.push(format!("heteroskedasticity or serial correlation detected: {cov_kind} standard errors"));
    }
    Ok(SpecOutcome {
        dependent: spec.dependent.to_string(),
        f_test,
        heteroskedasticity,
        serial_correlation,
        cross_section,
        hausman,
        recommended,
        fixed_effects: fixed.report,
        notes,
    })
}
