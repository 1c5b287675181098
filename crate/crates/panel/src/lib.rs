//! City-day sentiment panels: share aggregation, pooled / fixed / random
//! effects estimation, sandwich covariances and specification tests.

pub mod data;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod ols;
pub mod protocol;
pub mod report;
pub mod synth;

pub use data::{aggregate_shares, count_texts, ClassifiedText, PanelDataset, SentimentPanelRow, ShareRow, Shares, EMOTIONS};
pub use design::{build_design, CovarianceKind, Dependent, Design, Regressor, RegressionSpec};
pub use diagnostics::{bp_lm_cd_test, f_pool_test, groupwise_het_wald, hausman_test, serial_corr_test, TestResult};
pub use error::{PanelError, Result};
pub use estimators::{fe_lsdv_fit, pooled_fit, re_fit, within_fit, Coefficient, Estimator, RegressionReport};
pub use ols::{hc_covariance, ols_fit, OlsFit};
pub use protocol::{default_specs, run_protocol, ModelChoice, ProtocolOptions, ProtocolReport};
