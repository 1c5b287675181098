//! Synthetic city-day panels with planted linear effects.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{PanelDataset, SentimentPanelRow};
use crate::design::{Dependent, RegressionSpec, TREND};

const CITY_NAMES: [&str; 10] =
    ["Beijing", "Chengdu", "Chongqing", "Guangzhou", "Nanjing", "Shanghai", "Shenzhen", "Wuhan", "Xi'an", "Zhengzhou"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_cities: usize,
    pub n_days: usize,
    pub start: NaiveDate,
    /// Standard deviation of the city effects on shares.
    pub city_effect_sd: f64,
    /// Correlation between each city effect and the city's case level; at 1
    /// the effect is a function of the case level, which random effects ignores.
    pub effect_correlation: f64,
    /// Per-city noise standard deviations are drawn uniformly from this range.
    pub noise_range: (f64, f64),
    pub texts_per_day: u64,
    pub with_netout: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_cities: 10,
            n_days: 31,
            start: NaiveDate::from_ymd_opt(2020, 1, 24).expect("valid date"),
            city_effect_sd: 0.05,
            effect_correlation: 1.0,
            noise_range: (0.005, 0.03),
            texts_per_day: 200_000,
            with_netout: true,
        }
    }
}

/// Planted slopes per dependent variable, keyed by design column name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub dependent: Dependent,
    pub slopes: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct SynthPanel {
    pub panel: PanelDataset,
    pub truth: Vec<Truth>,
    pub noise_sd: Vec<f64>,
    /// Shares that had to be clipped into (0, 1); zero under the default settings.
    pub clipped: usize,
}

impl SynthPanel {
    pub fn slopes(&self, dep: Dependent) -> Option<&[(String, f64)]> {
        self.truth.iter().find(|t| t.dependent == dep).map(|t| t.slopes.as_slice())
    }
}

// cases, foreign, risk, distance, pmedical, pgovernment, density, trend
const FEAR: [f64; 8] = [0.02, 0.01, 0.015, 0.001, -0.0003, 0.0001, -0.00001, -0.001];
const CONFIDENCE: [f64; 8] = [-0.01, -0.015, 0.005, 0.0005, 0.0004, -0.0002, -0.00002, 0.001];
const ATTENTION: [f64; 8] = [0.03, 0.02, 0.02, 0.001, 0.0002, -0.0001, -0.00001, 0.0];
const NETOUT: [f64; 8] = [0.13, -0.04, -0.03, -0.01, -0.02, 0.02, 0.001, -0.04];
const NETOUT_SCALE: f64 = 10.0;
const BASE: [f64; 4] = [0.3, 0.2, 0.3, 1.0];
/// Relative weights of the six emotions that share the remainder.
const OTHER_WEIGHTS: [f64; 6] = [0.1, 0.3, 0.1, 0.2, 0.15, 0.15];

struct CityDay {
    raw: [f64; 7],
}

fn column_names() -> Vec<String> {
    let mut names: Vec<String> = RegressionSpec::standard(Dependent::Attention).regressors.iter().map(|r| r.name()).collect();
    names.push(TREND.to_string());
    names
}

/// Generates a balanced panel whose shares follow the standard specification
/// exactly: regressors are the lagged log counts, lagged distance, same-day
/// spending and density, and a trend, with city effects and groupwise
/// heteroskedastic noise. Day 0 only supplies lags.
pub fn generate(cfg: &SynthConfig, seed: u64) -> SynthPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let n = cfg.n_cities;
    let t_len = cfg.n_days;

    let case_level: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..4.0)).collect();
    let foreign_level: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.5)).collect();
    let risk_level: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let distance_base: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..30.0)).collect();
    let medical_base: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..150.0)).collect();
    let gov_base: Vec<f64> = (0..n).map(|_| rng.random_range(100.0..300.0)).collect();
    let density_base: Vec<f64> = (0..n).map(|_| rng.random_range(500.0..2000.0)).collect();

    let mut days: Vec<Vec<CityDay>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut series = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let tf = t as f64;
            let cases = (case_level[i] + 0.1 * tf + 0.3 * std.sample(&mut rng)).exp().round();
            let foreign = (foreign_level[i] + 0.5 * std.sample(&mut rng)).exp().round();
            let risk = (risk_level[i] + 0.05 * tf + 0.5 * std.sample(&mut rng)).exp().round();
            let distance = (distance_base[i] - 0.2 * tf + std.sample(&mut rng)).max(0.5);
            let pmedical = medical_base[i] + 5.0 * std.sample(&mut rng);
            let pgovernment = gov_base[i] + 10.0 * std.sample(&mut rng);
            let density = density_base[i] + 20.0 * std.sample(&mut rng);
            series.push(CityDay { raw: [cases, foreign, risk, distance, pmedical, pgovernment, density] });
        }
        days.push(series);
    }

    let mean_case = case_level.iter().sum::<f64>() / n as f64;
    let effects: Vec<[f64; 4]> = (0..n)
        .map(|i| {
            // 0.866 is the standard deviation of U(1, 4)
            let tracked = (case_level[i] - mean_case) / 0.866;
            let mut e = [0.0; 4];
            for (d, slot) in e.iter_mut().enumerate() {
                let z = std.sample(&mut rng);
                let a = cfg.effect_correlation;
                let v = cfg.city_effect_sd * (a * tracked + (1.0 - a * a).max(0.0).sqrt() * z);
                *slot = if d == 3 { v * NETOUT_SCALE } else { v };
            }
            e
        })
        .collect();
    let noise_sd: Vec<f64> = (0..n).map(|_| rng.random_range(cfg.noise_range.0..cfg.noise_range.1)).collect();

    // regressor values per (city, day >= 1)
    let regressors = |i: usize, t: usize| -> [f64; 8] {
        let prev = &days[i][t - 1].raw;
        let cur = &days[i][t].raw;
        [prev[0].ln_1p(), prev[1].ln_1p(), prev[2].ln_1p(), prev[3], cur[4], cur[5], cur[6], (t + 1) as f64]
    };
    let mut means = [0.0; 8];
    for i in 0..n {
        for t in 1..t_len {
            for (m, v) in means.iter_mut().zip(regressors(i, t)) {
                *m += v;
            }
        }
    }
    means.iter_mut().for_each(|m| *m /= (n * (t_len - 1)) as f64);
    let planted = |beta: &[f64; 8], x: &[f64; 8]| -> f64 { beta.iter().zip(x).zip(&means).map(|((b, v), m)| b * (v - m)).sum() };

    let mut clipped = 0;
    let mut clip = |v: f64| -> f64 {
        if (0.001..=0.999).contains(&v) {
            v
        } else {
            clipped += 1;
            v.clamp(0.001, 0.999)
        }
    };

    let mut rows = Vec::with_capacity(n * t_len);
    for i in 0..n {
        let city = CITY_NAMES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("city{i:02}"));
        for (t, day) in days[i].iter().enumerate().take(t_len) {
            let raw = &day.raw;
            let (attention, fear, confidence, netout) = if t == 0 {
                (BASE[2] + effects[i][2], BASE[0] + effects[i][0], BASE[1] + effects[i][1], BASE[3] + effects[i][3])
            } else {
                let x = regressors(i, t);
                let s = noise_sd[i];
                (
                    BASE[2] + effects[i][2] + planted(&ATTENTION, &x) + s * std.sample(&mut rng),
                    BASE[0] + effects[i][0] + planted(&FEAR, &x) + s * std.sample(&mut rng),
                    BASE[1] + effects[i][1] + planted(&CONFIDENCE, &x) + s * std.sample(&mut rng),
                    BASE[3] + effects[i][3] + planted(&NETOUT, &x) + NETOUT_SCALE * s * std.sample(&mut rng),
                )
            };
            let attention = clip(attention);
            let fear = clip(fear);
            let confidence = clip(confidence).min(1.0 - fear);

            let w = cfg.texts_per_day;
            let a = (w as f64 * attention).round() as u64;
            let mut emotions = [0u64; 8];
            emotions[0] = (a as f64 * fear).round() as u64;
            emotions[4] = (a as f64 * confidence).round() as u64;
            let rest = a - emotions[0] - emotions[4];
            let mut left = rest;
            for (slot, weight) in [1, 2, 3, 5, 6].iter().zip(&OTHER_WEIGHTS) {
                let c = (rest as f64 * weight).floor() as u64;
                emotions[*slot] = c;
                left -= c;
            }
            emotions[7] = left;

            rows.push(SentimentPanelRow {
                city: city.clone(),
                date: cfg.start + Duration::days(t as i64),
                total_texts: w,
                pandemic_texts: a,
                emotions,
                cases: raw[0],
                foreign: raw[1],
                risk: raw[2],
                distance: raw[3],
                pmedical: raw[4],
                pgovernment: raw[5],
                density: raw[6],
                netout: cfg.with_netout.then_some(netout),
            });
        }
    }

    let names = column_names();
    let truth = [
        (Dependent::fear(), FEAR),
        (Dependent::confidence(), CONFIDENCE),
        (Dependent::Attention, ATTENTION),
        (Dependent::Netout, NETOUT),
    ]
    .into_iter()
    .filter(|(d, _)| cfg.with_netout || *d != Dependent::Netout)
    .map(|(dependent, beta)| Truth { dependent, slopes: names.iter().cloned().zip(beta).collect() })
    .collect();

    SynthPanel { panel: PanelDataset::new(rows).expect("generated rows are valid"), truth, noise_sd, clipped }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_counts() {
        let s = generate(&SynthConfig::default(), 7);
        assert_eq!(s.panel.len(), 310);
        assert_eq!(s.panel.cities().len(), 10);
        assert!(s.panel.is_balanced());
        assert!(s.panel.has_netout());
        assert_eq!(s.clipped, 0);
        for r in s.panel.rows() {
            assert_eq!(r.emotions.iter().sum::<u64>(), r.pandemic_texts);
        }
        assert_eq!(s.slopes(Dependent::fear()).unwrap()[0].0, "ln(1+cases[t-1])");
    }

    #[test]
    fn reproducible() {
        let a = generate(&SynthConfig::default(), 3);
        let b = generate(&SynthConfig::default(), 3);
        let c = generate(&SynthConfig::default(), 4);
        assert_eq!(a.panel.rows(), b.panel.rows());
        assert_ne!(a.panel.rows(), c.panel.rows());
    }

    #[test]
    fn without_netout() {
        let s = generate(&SynthConfig { with_netout: false, ..SynthConfig::default() }, 1);
        assert!(!s.panel.has_netout());
        assert!(s.slopes(Dependent::Netout).is_none());
    }
}
