//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::ParameterStore;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Coordinates sampled from the selected parameters; all of them when fewer exist.
    pub samples: usize,
    /// Restricts the check to these parameters (default: every parameter).
    pub params: Option<Vec<String>>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-4, samples: 64, params: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Coordinate {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: Vec<Coordinate>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&Coordinate> {
        self.checked.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares tape gradients of the scalar built by `f` against central differences.
pub fn grad_check<F>(store: &ParameterStore, f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: for<'s> Fn(&mut Tape<'s>) -> Result<Var>,
{
    let mut tape = Tape::with_store(store);
    let out = f(&mut tape)?;
    if tape.value(out).len() != 1 {
        return Err(Error::Shape("grad_check needs a scalar objective".into()));
    }
    tape.backward(out)?;
    let mut analytic = store.clone();
    analytic.zero_grads();
    tape.accumulate_into(&mut analytic)?;
    drop(tape);

    let names: Vec<String> = match &cfg.params {
        Some(p) => p.clone(),
        None => store.names().map(str::to_string).collect(),
    };
    let mut coords = Vec::new();
    for name in &names {
        let len = store.get(name)?.len();
        coords.extend((0..len).map(|i| (name.clone(), i)));
    }
    let chosen: Vec<(String, usize)> = if coords.len() <= cfg.samples {
        coords
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx = sample(&mut rng, coords.len(), cfg.samples).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| coords[i].clone()).collect()
    };

    let mut work = store.clone();
    let mut checked = Vec::with_capacity(chosen.len());
    let mut max_rel_error: f64 = 0.0;
    for (name, index) in chosen {
        let ad = analytic.get(&name)?.grad().map_or(0.0, |g| g[index]);
        let original = work.get(&name)?.values()[index];
        work.get_mut(&name)?.values_mut()[index] = original + cfg.step;
        let plus = eval(&work, &f)?;
        work.get_mut(&name)?.values_mut()[index] = original - cfg.step;
        let minus = eval(&work, &f)?;
        work.get_mut(&name)?.values_mut()[index] = original;
        let fd = (plus - minus) / (2.0 * cfg.step);
        let rel = relative_error(ad, fd);
        max_rel_error = max_rel_error.max(rel);
        checked.push(Coordinate { param: name, index, analytic: ad, numeric: fd, rel_error: rel });
    }
    Ok(GradCheckReport { max_rel_error, checked })
}

fn eval<F>(store: &ParameterStore, f: &F) -> Result<f64>
where
    F: for<'s> Fn(&mut Tape<'s>) -> Result<Var>,
{
    let mut tape = Tape::with_store(store);
    let out = f(&mut tape)?;
    let v = tape.scalar(out);
    if !v.is_finite() {
        return Err(Error::NonFinite("grad_check objective".into()));
    }
    Ok(v)
}
