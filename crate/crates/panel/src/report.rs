//! Plain-text regression tables and JSON output.

use std::fmt::Write;

use crate::diagnostics::TestResult;
use crate::estimators::{Coefficient, RegressionReport};
use crate::protocol::{ModelChoice, ProtocolReport};

const LABEL_WIDTH: usize = 22;
const CELL_WIDTH: usize = 14;

fn push_union<'a>(names: &mut Vec<&'a str>, coefs: &'a [Coefficient]) {
    for c in coefs {
        if !names.contains(&c.name.as_str()) {
            names.push(&c.name);
        }
    }
}

fn coef_rows(out: &mut String, names: &[&str], columns: &[&[Coefficient]]) {
    for name in names {
        let mut est = format!("{name:<LABEL_WIDTH$}");
        let mut se = format!("{:<LABEL_WIDTH$}", "");
        for col in columns {
            match col.iter().find(|c| c.name == *name) {
                Some(c) => {
                    let _ = write!(est, "{:<CELL_WIDTH$}", format!("{:.3}{}", c.estimate, c.stars));
                    let _ = write!(se, "{:<CELL_WIDTH$}", format!("({:.3})", c.std_error));
                }
                None => {
                    let _ = write!(est, "{:<CELL_WIDTH$}", "");
                    let _ = write!(se, "{:<CELL_WIDTH$}", "");
                }
            }
        }
        out.push_str(est.trim_end());
        out.push('\n');
        out.push_str(se.trim_end());
        out.push('\n');
    }
}

fn scalar_row(out: &mut String, label: &str, cells: impl Iterator<Item = String>) {
    let mut line = format!("{label:<LABEL_WIDTH$}");
    for c in cells {
        let _ = write!(line, "{c:<CELL_WIDTH$}");
    }
    out.push_str(line.trim_end());
    out.push('\n');
}

/// Side-by-side table: estimate with stars, standard error in parentheses
/// underneath, then city intercepts and fit statistics.
pub fn format_table(reports: &[&RegressionReport]) -> String {
    let mut out = String::new();
    let rule = "-".repeat(LABEL_WIDTH + CELL_WIDTH * reports.len());
    scalar_row(&mut out, "Variable", reports.iter().map(|r| r.dependent.clone()));
    out.push_str(&rule);
    out.push('\n');

    let mut names = Vec::new();
    for r in reports {
        push_union(&mut names, &r.coefficients);
    }
    let cols: Vec<&[Coefficient]> = reports.iter().map(|r| r.coefficients.as_slice()).collect();
    coef_rows(&mut out, &names, &cols);

    let mut cities = Vec::new();
    for r in reports {
        push_union(&mut cities, &r.city_intercepts);
    }
    if !cities.is_empty() {
        out.push_str(&rule);
        out.push_str("\nIntercept by city\n");
        let cols: Vec<&[Coefficient]> = reports.iter().map(|r| r.city_intercepts.as_slice()).collect();
        coef_rows(&mut out, &cities, &cols);
    }

    out.push_str(&rule);
    out.push('\n');
    scalar_row(&mut out, "Obs.", reports.iter().map(|r| r.n_obs.to_string()));
    scalar_row(&mut out, "Cities", reports.iter().map(|r| r.n_groups.to_string()));
    scalar_row(&mut out, "R-squared", reports.iter().map(|r| format!("{:.3}", r.r_squared)));
    scalar_row(&mut out, "Std. errors", reports.iter().map(|r| r.covariance.to_string()));
    out.push_str(&rule);
    out.push_str("\nStandard errors are in parenthesis\n*** p<0.01, ** p<0.05, * p<0.1\n");
    out
}

fn test_line(out: &mut String, t: &TestResult) {
    let df = match t.df2 {
        Some(d2) => format!("df = ({}, {})", t.df1, d2),
        None => format!("df = {}", t.df1),
    };
    let _ = writeln!(out, "  {}: statistic = {:.4}, {df}, p = {:.4}", t.name, t.statistic, t.p_value);
    for (k, v) in &t.extra {
        let _ = writeln!(out, "    {k} = {v:.4}");
    }
    for w in &t.warnings {
        let _ = writeln!(out, "    warning: {w}");
    }
}

/// The fixed-effects table followed by each specification's test sequence.
pub fn format_protocol(report: &ProtocolReport) -> String {
    let fe: Vec<&RegressionReport> = report.outcomes.iter().map(|o| &o.fixed_effects).collect();
    let mut out = String::from("Fixed-effects estimates\n\n");
    out.push_str(&format_table(&fe));
    for o in &report.outcomes {
        let _ = writeln!(out, "\nSpecification tests: {}", o.dependent);
        test_line(&mut out, &o.f_test);
        test_line(&mut out, &o.heteroskedasticity);
        test_line(&mut out, &o.serial_correlation);
        if let Some(cd) = &o.cross_section {
            test_line(&mut out, cd);
        }
        test_line(&mut out, &o.hausman);
        let choice = match o.recommended {
            ModelChoice::Pooled => "pooled OLS",
            ModelChoice::FixedEffects => "fixed effects",
            ModelChoice::RandomEffects => "random effects",
        };
        let _ = writeln!(out, "  preferred model at alpha = {}: {choice}", report.options.alpha);
        for n in &o.notes {
            let _ = writeln!(out, "  note: {n}");
        }
    }
    for s in &report.skipped {
        let _ = writeln!(out, "\nskipped: {s}");
    }
    out
}

pub fn to_json(report: &ProtocolReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}
