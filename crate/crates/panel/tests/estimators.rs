mod common;

use common::{base_row, normal_equations, random_panel, sandwich_brute};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentipanel_panel::estimators::{re_fit, slope_block};
use sentipanel_panel::synth::{generate, SynthConfig};
use sentipanel_panel::*;

fn netout_spec(regressors: Vec<Regressor>, trend: bool) -> RegressionSpec {
    RegressionSpec { regressors, trend, ..RegressionSpec::standard(Dependent::Netout) }
}

#[test]
fn qr_matches_normal_equations_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let names: Vec<String> = (0..3).map(|j| format!("x{j}")).collect();
    for _ in 0..100 {
        let x = DMatrix::from_fn(40, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-5.0..5.0) });
        let y = DVector::from_fn(40, |_, _| rng.random_range(-10.0..10.0));
        let fit = ols_fit(&y, &x, &names).unwrap();
        let oracle = normal_equations(&y, &x);
        assert!((&fit.beta - &oracle).amax() < 1e-8);
        let xte = x.transpose() * &fit.residuals;
        assert!(xte.amax() < 1e-8 * y.norm());
    }
}

#[test]
fn hc_matches_triple_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let x = DMatrix::from_fn(30, 4, |_, j| if j == 0 { 1.0 } else { rng.random_range(-3.0..3.0) });
        let e = DVector::from_fn(30, |_, _| rng.random_range(-2.0..2.0));
        let hc0 = hc_covariance(&x, &e, CovarianceKind::Hc0).unwrap();
        let brute = sandwich_brute(&x, &e);
        assert!((&hc0 - &brute).amax() < 1e-10);
        let hc1 = hc_covariance(&x, &e, CovarianceKind::Hc1).unwrap();
        assert!((&hc1 - &brute * (30.0 / 26.0)).amax() < 1e-10);
    }
}

#[test]
fn lsdv_agrees_with_within() {
    for seed in 0..20 {
        let p = random_panel(seed, 6, 25, if seed % 2 == 0 { 0.0 } else { 0.2 });
        let spec = RegressionSpec::standard(Dependent::Netout);
        let fe = fe_lsdv_fit(&p, &spec).unwrap();
        let w = within_fit(&p, &spec).unwrap();
        let (names, beta, _) = slope_block(&fe);
        assert_eq!(names, w.names);
        assert!((&beta - &w.beta).amax() < 1e-8, "seed {seed}");
        assert!((fe.ols.rss - w.rss).abs() < 1e-8 * fe.ols.rss);
        assert!((fe.ols.sigma2 - w.sigma2).abs() < 1e-8 * fe.ols.sigma2);
    }
}

#[test]
fn within_leaves_zero_mean_regressor_alone_for_one_city() {
    let rows: Vec<SentimentPanelRow> = (0..6)
        .map(|d| {
            let x = [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5][d];
            SentimentPanelRow { distance: x, netout: Some(3.0 + 2.0 * x + [0.1, -0.1][d % 2]), ..base_row("solo", d) }
        })
        .collect();
    let p = PanelDataset::new(rows).unwrap();
    let spec = netout_spec(vec![Regressor::level("distance")], false);
    let w = within_fit(&p, &spec).unwrap();
    let pooled = pooled_fit(&p, &spec).unwrap();
    assert!((w.beta[0] - pooled.ols.beta[1]).abs() < 1e-12);
}

#[test]
fn within_drops_singleton_city() {
    let mut rows: Vec<SentimentPanelRow> = random_panel(3, 3, 8, 0.0).rows().to_vec();
    let mut lone = base_row("z", 4);
    lone.netout = Some(1.0);
    rows.push(lone);
    let p = PanelDataset::new(rows).unwrap();
    let w = within_fit(&p, &netout_spec(vec![Regressor::level("distance"), Regressor::level("cases")], true)).unwrap();
    assert_eq!(w.n_groups, 3);
    assert!(w.warnings.iter().any(|m| m.contains("`z`") && m.contains("single observation")));
}

/// Scalar-regressor slopes by closed form.
fn simple_slopes(p: &PanelDataset) -> (f64, f64, f64, f64) {
    let rows = p.rows();
    let n = rows.len() as f64;
    let xm = rows.iter().map(|r| r.distance).sum::<f64>() / n;
    let ym = rows.iter().map(|r| r.netout.unwrap()).sum::<f64>() / n;
    let sxy: f64 = rows.iter().map(|r| (r.distance - xm) * (r.netout.unwrap() - ym)).sum();
    let sxx: f64 = rows.iter().map(|r| (r.distance - xm).powi(2)).sum();
    let b_pooled = sxy / sxx;
    let rss_pooled: f64 = rows.iter().map(|r| (r.netout.unwrap() - ym - b_pooled * (r.distance - xm)).powi(2)).sum();
    let mut wxy = 0.0;
    let mut wxx = 0.0;
    let mut parts = Vec::new();
    for c in p.cities() {
        let g: Vec<_> = rows.iter().filter(|r| &r.city == c).collect();
        let gn = g.len() as f64;
        let gx = g.iter().map(|r| r.distance).sum::<f64>() / gn;
        let gy = g.iter().map(|r| r.netout.unwrap()).sum::<f64>() / gn;
        wxy += g.iter().map(|r| (r.distance - gx) * (r.netout.unwrap() - gy)).sum::<f64>();
        wxx += g.iter().map(|r| (r.distance - gx).powi(2)).sum::<f64>();
        parts.push((g, gx, gy));
    }
    let b_within = wxy / wxx;
    let rss_fe: f64 = parts
        .iter()
        .flat_map(|(g, gx, gy)| g.iter().map(move |r| (r.netout.unwrap() - gy - b_within * (r.distance - gx)).powi(2)))
        .sum();
    (b_pooled, rss_pooled, b_within, rss_fe)
}

#[test]
fn f_test_two_city_hand_computation() {
    let xs = [[1.0, 2.0, 4.0, 7.0], [2.0, 3.0, 5.0, 6.0]];
    let ys = [[1.2, 2.1, 3.9, 7.4], [4.1, 4.8, 7.2, 7.9]];
    let mut rows = Vec::new();
    for (c, city) in ["a", "b"].iter().enumerate() {
        for d in 0..4 {
            rows.push(SentimentPanelRow { distance: xs[c][d], netout: Some(ys[c][d]), ..base_row(city, d) });
        }
    }
    let p = PanelDataset::new(rows).unwrap();
    let spec = netout_spec(vec![Regressor::level("distance")], false);
    let (b_pooled, rss_p, b_within, rss_fe) = simple_slopes(&p);
    let pooled = pooled_fit(&p, &spec).unwrap();
    let fe = fe_lsdv_fit(&p, &spec).unwrap();
    assert!((pooled.ols.beta[1] - b_pooled).abs() < 1e-12);
    assert!((fe.ols.beta[2] - b_within).abs() < 1e-12);
    assert!((pooled.ols.rss - rss_p).abs() < 1e-12);
    assert!((fe.ols.rss - rss_fe).abs() < 1e-12);
    let f = f_pool_test(pooled.ols.rss, fe.ols.rss, 2, 8, 1).unwrap();
    let hand = (rss_p - rss_fe) / (rss_fe / 5.0);
    assert!((f.statistic - hand).abs() < 1e-9 * hand);
    assert_eq!((f.df1, f.df2), (1.0, Some(5.0)));
}

#[test]
fn f_test_rejects_strong_city_effects() {
    let s = generate(&SynthConfig::default(), 21);
    let spec = RegressionSpec::standard(Dependent::fear());
    let fe = fe_lsdv_fit(&s.panel, &spec).unwrap();
    let pooled = pooled_fit(&s.panel, &spec).unwrap();
    let f = f_pool_test(pooled.ols.rss, fe.ols.rss, 10, fe.design.n(), fe.design.slope_indices().len()).unwrap();
    assert!(f.p_value < 0.01);
    assert_eq!(fe.design.n(), 300);
}

#[test]
fn re_lies_between_pooled_and_fe_for_a_scalar_regressor() {
    for seed in 0..20 {
        let p = random_panel(100 + seed, 8, 12, 0.0);
        let spec = netout_spec(vec![Regressor::level("distance")], false);
        let (b_pooled, _, b_within, _) = simple_slopes(&p);
        let re = re_fit(&p, &spec).unwrap();
        let b_re = re.slope_beta[0];
        let (lo, hi) = if b_pooled < b_within { (b_pooled, b_within) } else { (b_within, b_pooled) };
        assert!(lo - 1e-12 <= b_re && b_re <= hi + 1e-12, "seed {seed}: {b_pooled} {b_re} {b_within}");
    }
}

#[test]
fn re_without_city_effects_is_pooled() {
    // noise demeaned within each city, so city means sit exactly on the line
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut rows = Vec::new();
    for c in 0..5 {
        let xs: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..10.0)).collect();
        let mut es: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let em = es.iter().sum::<f64>() / 10.0;
        es.iter_mut().for_each(|e| *e -= em);
        for d in 0..10 {
            rows.push(SentimentPanelRow { distance: xs[d], netout: Some(1.0 + 0.5 * xs[d] + es[d]), ..base_row(&format!("c{c}"), d) });
        }
    }
    let p = PanelDataset::new(rows).unwrap();
    let spec = netout_spec(vec![Regressor::level("distance")], false);
    let re = re_fit(&p, &spec).unwrap();
    assert_eq!(re.sigma2_alpha, 0.0);
    assert!(re.theta.iter().all(|&t| t == 0.0));
    assert!(re.report.warnings.iter().any(|w| w.contains("clamped")));
    let pooled = pooled_fit(&p, &spec).unwrap();
    assert!((re.slope_beta[0] - pooled.ols.beta[1]).abs() < 1e-10);
}

#[test]
fn re_with_dominant_city_effects_approaches_fe() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rows = Vec::new();
    for c in 0..6 {
        let alpha = 1000.0 * rng.random_range(-1.0..1.0);
        for d in 0..20 {
            let x: f64 = rng.random_range(0.0..10.0) + c as f64;
            rows.push(SentimentPanelRow {
                distance: x,
                netout: Some(alpha + 0.5 * x + 0.01 * rng.random_range(-1.0..1.0)),
                ..base_row(&format!("c{c}"), d)
            });
        }
    }
    let p = PanelDataset::new(rows).unwrap();
    let spec = netout_spec(vec![Regressor::level("distance")], false);
    let re = re_fit(&p, &spec).unwrap();
    let w = within_fit(&p, &spec).unwrap();
    assert!(re.theta.iter().all(|&t| t > 0.999));
    assert!((re.slope_beta[0] - w.beta[0]).abs() < 1e-5);
}

#[test]
fn fe_reports_city_intercepts_with_errors() {
    let p = random_panel(8, 4, 15, 0.0);
    let spec = RegressionSpec { covariance: CovarianceKind::Hc1, ..RegressionSpec::standard(Dependent::Netout) };
    let fe = fe_lsdv_fit(&p, &spec).unwrap();
    let r = &fe.report;
    assert_eq!(r.city_intercepts.len(), 4);
    assert_eq!(r.baseline.as_deref(), Some("c0"));
    assert!(r.coefficient("(Intercept)").is_none());
    for c in &r.city_intercepts {
        assert!(c.std_error > 0.0 && c.ci_low < c.estimate && c.estimate < c.ci_high);
    }
    let d1 = fe.design.columns.iter().position(|c| c == "D[c1]").unwrap();
    let var = fe.cov[(0, 0)] + fe.cov[(d1, d1)] + 2.0 * fe.cov[(0, d1)];
    assert!((r.city_intercepts[1].std_error - var.sqrt()).abs() < 1e-12);
    assert!((r.city_intercepts[1].estimate - fe.ols.beta[0] - fe.ols.beta[d1]).abs() < 1e-12);
}
