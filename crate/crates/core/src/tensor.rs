//! Dense row-major `f64` tensors and the named parameter store.
//!
//! Tensors used by the tape are at most two-dimensional. A 1-D tensor of
//! length `n` behaves as a `1 × n` row wherever a matrix is expected.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Probability floor applied before taking a logarithm in [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self { shape, values, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, values: vec![0.0; n], grad: None }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self { shape: vec![values.len()], values, grad: None }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(rows, cols)` view; 1-D tensors are single rows.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            more => (more[..more.len() - 1].iter().product(), more[more.len() - 1]),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn take_grad(&mut self) -> Option<Vec<f64>> {
        self.grad.take()
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "gradient length {} does not match tensor length {}",
                g.len(),
                self.values.len()
            )));
        }
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }
}

/// Plain matrix product, `[m×k] · [k×n]`.
pub fn matmul(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (m, k) = a.dims2();
    let (k2, n) = b.dims2();
    if k != k2 {
        return Err(Error::Shape(format!("matmul inner dims {k} vs {k2}")));
    }
    let mut out = vec![0.0; m * n];
    matmul_into(a.values(), b.values(), &mut out, m, k, n);
    DenseTensor::new(vec![m, n], out)
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Max-subtracted softmax of a slice.
pub fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn softmax(logits: &DenseTensor) -> Result<DenseTensor> {
    if logits.is_empty() {
        return Err(Error::Shape("softmax of an empty vector".into()));
    }
    Ok(DenseTensor::vector(softmax_slice(logits.values())))
}

/// `-ln(pred[true_class])`, with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(pred: &[f64], true_class: usize) -> Result<f64> {
    let p = pred
        .get(true_class)
        .ok_or(Error::IndexOutOfRange { index: true_class, len: pred.len() })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Named trainable tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    params: BTreeMap<String, DenseTensor>,
    seed: u64,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        Self { params: BTreeMap::new(), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: DenseTensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Config(format!("parameter `{name}` already exists")));
        }
        self.params.insert(name, tensor);
        Ok(())
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`.
    ///
    /// The draw stream is keyed on the store seed and the parameter name,
    /// so the result does not depend on registration order.
    pub fn init_uniform(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Result<()> {
        let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let mut rng = self.rng_for(name);
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
        self.insert(name, DenseTensor::new(shape, values)?)
    }

    pub fn init_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<()> {
        self.insert(name, DenseTensor::zeros(shape))
    }

    pub fn rng_for(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name.as_bytes()))
    }

    pub fn get(&self, name: &str) -> Result<&DenseTensor> {
        self.params.get(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut DenseTensor> {
        self.params.get_mut(name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseTensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut DenseTensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(DenseTensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params.values_mut().for_each(DenseTensor::zero_grad);
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_hand_example() {
        let a = DenseTensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = DenseTensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.values(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_identity_and_zeros() {
        let eye = DenseTensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let b = DenseTensor::from_rows(&[vec![1.5, -2.0], vec![0.25, 9.0], vec![-3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&eye, &b).unwrap().values(), b.values());
        let z = DenseTensor::zeros(vec![3, 3]);
        assert!(matmul(&z, &b).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = DenseTensor::zeros(vec![2, 3]);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&DenseTensor::vector(vec![0.0, 0.0])).unwrap();
        assert_eq!(p.values(), &[0.5, 0.5]);
        let p = softmax(&DenseTensor::vector(vec![2f64.ln(), 0.0])).unwrap();
        assert!((p.values()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.values()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(softmax(&DenseTensor::vector(vec![])).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = vec![0.125; 8];
        assert!((cross_entropy(&uniform, 3).unwrap() - 8f64.ln()).abs() < 1e-12);
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        assert!((cross_entropy(&[0.25, 0.75], 0).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&[0.0, 1.0], 0).unwrap() - (-PROB_FLOOR.ln())).abs() < 1e-9);
        assert!(matches!(cross_entropy(&[1.0], 1), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn store_init_is_seeded_and_order_free() {
        let mut a = ParameterStore::new(7);
        a.init_uniform("w1", vec![3, 4], 4, 3).unwrap();
        a.init_uniform("w2", vec![2], 2, 2).unwrap();
        let mut b = ParameterStore::new(7);
        b.init_uniform("w2", vec![2], 2, 2).unwrap();
        b.init_uniform("w1", vec![3, 4], 4, 3).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 7.0).sqrt();
        assert!(a.get("w1").unwrap().values().iter().all(|v| v.abs() <= limit));
        let mut c = ParameterStore::new(8);
        c.init_uniform("w1", vec![3, 4], 4, 3).unwrap();
        assert_ne!(a.get("w1").unwrap().values(), c.get("w1").unwrap().values());
    }
}
