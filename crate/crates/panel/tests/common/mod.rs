#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentipanel_panel::{PanelDataset, SentimentPanelRow};

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..2 * k).map(|j| if j < k { a[(i, j)] } else if j - k == i { 1.0 } else { 0.0 }).collect())
        .collect();
    for c in 0..k {
        let p = (c..k).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..k {
            if r != c {
                let f = m[r][c];
                let pivot = m[c].clone();
                m[r].iter_mut().zip(&pivot).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    DMatrix::from_fn(k, k, |i, j| m[i][k + j])
}

/// β = (XᵀX)⁻¹ Xᵀ y from explicit sums.
pub fn normal_equations(y: &DVector<f64>, x: &DMatrix<f64>) -> DVector<f64> {
    let (n, k) = x.shape();
    let xtx = DMatrix::from_fn(k, k, |a, b| (0..n).map(|i| x[(i, a)] * x[(i, b)]).sum());
    let xty = DVector::from_fn(k, |a, _| (0..n).map(|i| x[(i, a)] * y[i]).sum());
    invert(&xtx) * xty
}

/// Elementwise triple product B (Σ_i e_i² x_i x_iᵀ) B with B = (XᵀX)⁻¹.
pub fn sandwich_brute(x: &DMatrix<f64>, e: &DVector<f64>) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let xtx = DMatrix::from_fn(k, k, |a, b| (0..n).map(|i| x[(i, a)] * x[(i, b)]).sum());
    let bread = invert(&xtx);
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let mut s = 0.0;
            for c in 0..k {
                for d in 0..k {
                    let meat: f64 = (0..n).map(|i| e[i] * e[i] * x[(i, c)] * x[(i, d)]).sum();
                    s += bread[(a, c)] * meat * bread[(d, b)];
                }
            }
            out[(a, b)] = s;
        }
    }
    out
}

pub fn date(day: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + Duration::days(day as i64)
}

pub fn base_row(city: &str, day: usize) -> SentimentPanelRow {
    SentimentPanelRow {
        city: city.into(),
        date: date(day),
        total_texts: 1000,
        pandemic_texts: 100,
        emotions: [20, 10, 10, 10, 20, 10, 10, 10],
        cases: 0.0,
        foreign: 0.0,
        risk: 0.0,
        distance: 0.0,
        pmedical: 0.0,
        pgovernment: 0.0,
        density: 0.0,
        netout: None,
    }
}

/// Random panel with time-varying covariates and
/// netout = Σ β x + α_city + noise. `drop` removes that fraction of rows.
pub fn random_panel(seed: u64, cities: usize, days: usize, drop: f64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for c in 0..cities {
        let alpha: f64 = rng.random_range(-2.0..2.0);
        let city = format!("c{c}");
        for d in 0..days {
            if d > 1 && rng.random::<f64>() < drop {
                continue;
            }
            let mut r = base_row(&city, d);
            r.cases = (rng.random_range(0.0..6.0f64)).exp().round();
            r.foreign = rng.random_range(0..20) as f64;
            r.risk = rng.random_range(0..8) as f64;
            r.distance = rng.random_range(1.0..40.0);
            r.pmedical = rng.random_range(50.0..150.0);
            r.pgovernment = rng.random_range(100.0..300.0);
            r.density = 1000.0 + 100.0 * c as f64 + rng.random_range(-30.0..30.0);
            let y = 0.3 * r.cases.ln_1p() - 0.02 * r.distance + 0.001 * r.pmedical + alpha + rng.random_range(-1.0..1.0);
            r.netout = Some(y);
            rows.push(r);
        }
    }
    PanelDataset::new(rows).unwrap()
}
