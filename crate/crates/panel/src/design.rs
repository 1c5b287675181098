//! Regression specifications and design-matrix assembly.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{emotion_index, PanelDataset, SentimentPanelRow, COVARIATES, EMOTIONS};
use crate::error::{PanelError, Result};

pub const INTERCEPT: &str = "(Intercept)";
pub const TREND: &str = "trend";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Dependent {
    /// Pandemic texts over all texts.
    Attention,
    /// Share of pandemic texts in one emotion class.
    Emotion(usize),
    Netout,
}

impl FromStr for Dependent {
    type Err = PanelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Dependent::Attention),
            "netout" => Ok(Dependent::Netout),
            other => emotion_index(other).map(Dependent::Emotion).ok_or_else(|| {
                PanelError::Spec(format!("unknown dependent variable `{other}` (attention, netout or an emotion)"))
            }),
        }
    }
}

impl TryFrom<String> for Dependent {
    type Error = PanelError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Dependent> for String {
    fn from(d: Dependent) -> String {
        d.to_string()
    }
}

impl fmt::Display for Dependent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dependent::Attention => f.write_str("attention"),
            Dependent::Netout => f.write_str("netout"),
            Dependent::Emotion(i) => f.write_str(EMOTIONS[*i]),
        }
    }
}

impl Dependent {
    pub fn fear() -> Self {
        Dependent::Emotion(0)
    }

    pub fn confidence() -> Self {
        Dependent::Emotion(4)
    }

    /// Value for one row; `None` when undefined (no texts, no pandemic texts, or no netout).
    pub fn value(&self, row: &SentimentPanelRow) -> Option<f64> {
        match self {
            Dependent::Attention => (row.total_texts > 0).then(|| row.pandemic_texts as f64 / row.total_texts as f64),
            Dependent::Emotion(e) => {
                (row.pandemic_texts > 0).then(|| row.emotions[*e] as f64 / row.pandemic_texts as f64)
            }
            Dependent::Netout => row.netout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regressor {
    pub variable: String,
    /// Use the previous day's value.
    #[serde(default)]
    pub lag: bool,
    /// Apply ln(1 + x).
    #[serde(default)]
    pub log1p: bool,
}

impl Regressor {
    pub fn level(variable: &str) -> Self {
        Self { variable: variable.into(), lag: false, log1p: false }
    }

    pub fn lagged(variable: &str) -> Self {
        Self { variable: variable.into(), lag: true, log1p: false }
    }

    pub fn lagged_log1p(variable: &str) -> Self {
        Self { variable: variable.into(), lag: true, log1p: true }
    }

    /// Column label, e.g. `ln(1+cases[t-1])`.
    pub fn name(&self) -> String {
        let base = if self.lag { format!("{}[t-1]", self.variable) } else { self.variable.clone() };
        if self.log1p {
            format!("ln(1+{base})")
        } else {
            base
        }
    }

    pub fn apply(&self, x: f64) -> Option<f64> {
        if self.log1p {
            (x > -1.0).then(|| x.ln_1p())
        } else {
            Some(x)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    #[default]
    Classical,
    Hc0,
    Hc1,
}

impl fmt::Display for CovarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceKind::Classical => "classical",
            CovarianceKind::Hc0 => "HC0",
            CovarianceKind::Hc1 => "HC1",
        })
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub dependent: Dependent,
    pub regressors: Vec<Regressor>,
    #[serde(default = "default_true")]
    pub dummies: bool,
    #[serde(default = "default_true")]
    pub trend: bool,
    /// City left out of the dummy set; the first city in sorted order when absent.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default)]
    pub covariance: CovarianceKind,
}

impl RegressionSpec {
    /// Lagged log counts of cases, imported cases and risk areas, lagged
    /// distance, and same-day spending and density, with city dummies and a trend.
    pub fn standard(dependent: Dependent) -> Self {
        Self {
            dependent,
            regressors: vec![
                Regressor::lagged_log1p("cases"),
                Regressor::lagged_log1p("foreign"),
                Regressor::lagged_log1p("risk"),
                Regressor::lagged("distance"),
                Regressor::level("pmedical"),
                Regressor::level("pgovernment"),
                Regressor::level("density"),
            ],
            dummies: true,
            trend: true,
            baseline: None,
            covariance: CovarianceKind::Classical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.regressors {
            if !COVARIATES.contains(&r.variable.as_str()) {
                return Err(PanelError::Spec(format!(
                    "unknown regressor `{}` (expected one of {})",
                    r.variable,
                    COVARIATES.join(", ")
                )));
            }
            if !seen.insert(r.variable.as_str()) {
                return Err(PanelError::Spec(format!("regressor `{}` listed more than once", r.variable)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Intercept,
    Dummy,
    Slope,
}

/// A regression problem in matrix form with its panel bookkeeping.
#[derive(Debug, Clone)]
pub struct Design {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    /// Group id per row, indexing `cities`.
    pub groups: Vec<usize>,
    /// Days since the panel's first date, per row.
    pub periods: Vec<usize>,
    /// Cities with at least one row, sorted.
    pub cities: Vec<String>,
    pub baseline: Option<String>,
    /// Why rows were dropped.
    pub notes: Vec<String>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.cities.len()
    }

    pub fn slope_indices(&self) -> Vec<usize> {
        (0..self.k()).filter(|&j| self.kinds[j] == ColumnKind::Slope).collect()
    }

    pub fn slope_names(&self) -> Vec<String> {
        self.slope_indices().into_iter().map(|j| self.columns[j].clone()).collect()
    }

    /// Splits a per-row vector into per-city series in period order.
    pub fn by_group(&self, v: &DVector<f64>) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_groups()];
        for (i, &g) in self.groups.iter().enumerate() {
            out[g].push(v[i]);
        }
        out
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups()];
        self.groups.iter().for_each(|&g| sizes[g] += 1);
        sizes
    }
}

/// Builds `y` and `X` (intercept, optional city dummies, regressors, optional
/// trend). Rows whose dependent value or lagged regressor is unavailable are
/// dropped and counted in `notes`.
pub fn build_design(panel: &PanelDataset, spec: &RegressionSpec) -> Result<Design> {
    spec.validate()?;
    let first = panel.first_date().ok_or_else(|| PanelError::NoRows("panel is empty".into()))?;
    let index: HashMap<(&str, NaiveDate), &SentimentPanelRow> =
        panel.rows().iter().map(|r| ((r.city.as_str(), r.date), r)).collect();

    let mut missing_dep = 0;
    let mut missing_lag = 0;
    let mut kept: Vec<(&SentimentPanelRow, f64, Vec<f64>)> = Vec::new();
    'rows: for row in panel.rows() {
        let Some(y) = spec.dependent.value(row) else {
            missing_dep += 1;
            continue;
        };
        let mut values = Vec::with_capacity(spec.regressors.len());
        for reg in &spec.regressors {
            let source = if reg.lag {
                match index.get(&(row.city.as_str(), row.date - Duration::days(1))) {
                    Some(prev) => *prev,
                    None => {
                        missing_lag += 1;
                        continue 'rows;
                    }
                }
            } else {
                row
            };
            let raw = source.covariate(&reg.variable).expect("validated covariate");
            let v = reg.apply(raw).ok_or_else(|| PanelError::InvalidRow {
                city: row.city.clone(),
                date: row.date.to_string(),
                message: format!("ln(1+x) undefined for {} = {raw}", reg.variable),
            })?;
            values.push(v);
        }
        kept.push((row, y, values));
    }
    let mut notes = Vec::new();
    if missing_lag > 0 {
        notes.push(format!("{missing_lag} rows dropped: previous day unavailable for lagged regressors"));
    }
    if missing_dep > 0 {
        notes.push(format!("{missing_dep} rows dropped: {} undefined", spec.dependent));
    }
    if kept.is_empty() {
        return Err(PanelError::NoRows(format!("every row was dropped for `{}`", spec.dependent)));
    }

    let mut cities: Vec<String> = kept.iter().map(|(r, _, _)| r.city.clone()).collect();
    cities.dedup();
    let baseline = if spec.dummies {
        let b = match &spec.baseline {
            Some(b) if cities.contains(b) => b.clone(),
            Some(b) => return Err(PanelError::Spec(format!("baseline city `{b}` has no rows"))),
            None => cities[0].clone(),
        };
        Some(b)
    } else {
        None
    };

    let mut columns = vec![INTERCEPT.to_string()];
    let mut kinds = vec![ColumnKind::Intercept];
    let dummy_cities: Vec<&String> = cities.iter().filter(|c| Some(*c) != baseline.as_ref()).collect();
    if spec.dummies {
        for c in &dummy_cities {
            columns.push(format!("D[{c}]"));
            kinds.push(ColumnKind::Dummy);
        }
    }
    for r in &spec.regressors {
        columns.push(r.name());
        kinds.push(ColumnKind::Slope);
    }
    if spec.trend {
        columns.push(TREND.to_string());
        kinds.push(ColumnKind::Slope);
    }

    let n = kept.len();
    let k = columns.len();
    let mut x = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    let mut groups = Vec::with_capacity(n);
    let mut periods = Vec::with_capacity(n);
    for (i, (row, yi, values)) in kept.iter().enumerate() {
        let g = cities.binary_search(&row.city).expect("city collected above");
        let t = (row.date - first).num_days() as usize;
        y[i] = *yi;
        groups.push(g);
        periods.push(t);
        let mut j = 0;
        x[(i, j)] = 1.0;
        j += 1;
        if spec.dummies {
            for c in &dummy_cities {
                x[(i, j)] = if **c == row.city { 1.0 } else { 0.0 };
                j += 1;
            }
        }
        for v in values {
            x[(i, j)] = *v;
            j += 1;
        }
        if spec.trend {
            x[(i, j)] = (t + 1) as f64;
        }
    }
    if let Some((col, deps)) = dependent_column(&x) {
        return Err(PanelError::Collinear {
            column: columns[col].clone(),
            depends_on: deps.into_iter().map(|d| columns[d].clone()).collect(),
        });
    }
    Ok(Design { y, x, columns, kinds, groups, periods, cities, baseline, notes })
}

/// First column that is (numerically) a linear combination of earlier ones,
/// with the earlier columns that carry nonzero weight in that combination.
pub fn dependent_column(x: &DMatrix<f64>) -> Option<(usize, Vec<usize>)> {
    const TOL: f64 = 1e-9;
    let n = x.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut basis_cols: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col.clone();
        // two passes of modified Gram-Schmidt for stability
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&v);
                v.axpy(-p, q, 1.0);
            }
        }
        let rest = v.norm();
        if norm == 0.0 || rest <= TOL * norm {
            if basis_cols.is_empty() || norm == 0.0 {
                return Some((j, Vec::new()));
            }
            let sub = DMatrix::from_fn(n, basis_cols.len(), |r, c| x[(r, basis_cols[c])]);
            let coef = sub
                .clone()
                .svd(true, true)
                .solve(&col, 1e-12)
                .unwrap_or_else(|_| DVector::zeros(basis_cols.len()));
            let deps = basis_cols
                .iter()
                .zip(coef.iter())
                .filter(|(&c, w)| w.abs() * x.column(c).norm() > 1e-8 * norm)
                .map(|(&c, _)| c)
                .collect();
            return Some((j, deps));
        }
        basis.push(v / rest);
        basis_cols.push(j);
    }
    None
}
