//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape in reverse and accumulates vector-Jacobian products.
//! Parameters are borrowed from a [`ParameterStore`] rather than copied, and
//! each name is bound once per tape so repeated use (e.g. an LSTM weight
//! applied at every timestep) accumulates into a single gradient.

use std::borrow::Cow;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{matmul_into, softmax_slice, DenseTensor, ParameterStore, PROB_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Rows(Var, usize),
    StackRows(Vec<Var>),
    ConcatCols(Var, Var),
    Gather(Var, Vec<usize>),
    Unfold(Var, usize),
    Softmax(Var),
    SoftmaxXent(Var, usize, Vec<f64>),
    Sum(Var),
}

struct Node<'s> {
    value: Cow<'s, DenseTensor>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'s> {
    store: Option<&'s ParameterStore>,
    nodes: Vec<Node<'s>>,
    bound: HashMap<String, Var>,
    frozen: Vec<String>,
    grads: Vec<Option<Vec<f64>>>,
}

impl<'s> Tape<'s> {
    /// A tape with no parameter source; only constants can be used.
    pub fn new() -> Self {
        Self { store: None, nodes: Vec::new(), bound: HashMap::new(), frozen: Vec::new(), grads: Vec::new() }
    }

    pub fn with_store(store: &'s ParameterStore) -> Self {
        Self { store: Some(store), ..Self::new() }
    }

    /// Parameters bound under this name are treated as constants.
    pub fn freeze(&mut self, name: impl Into<String>) {
        self.frozen.push(name.into());
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseTensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).values()[0]
    }

    pub fn constant(&mut self, t: DenseTensor) -> Var {
        self.push_raw(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.bound.get(name) {
            return Ok(*v);
        }
        let store = self.store.ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        let t = store.get(name)?;
        let frozen = self.frozen.iter().any(|f| f == name);
        let op = if frozen { Op::Leaf } else { Op::Param(name.to_string()) };
        let v = self.push_raw(Cow::Borrowed(t), op, !frozen);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    fn push_raw(&mut self, value: Cow<'s, DenseTensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op_name(&op).to_string()));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let t = DenseTensor::new(shape, values)?;
        Ok(self.push_raw(Cow::Owned(t), op, needs_grad))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.value(v).dims2()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::Shape(format!("matmul inner dims {k} vs {k2}")));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a).values(), self.value(b).values(), &mut out, m, k, n);
        self.push(vec![m, n], out, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`; the usual form for `W x` with `W` stored `[out×in]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::Shape(format!("matmul_t inner dims {k} vs {k2}")));
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &bv[j * k..(j + 1) * k];
                out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        self.push(vec![m, n], out, Op::MatMulT(a, b), &[a, b])
    }

    fn binary(&mut self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let da = self.dims(a);
        let db = self.dims(b);
        if da != db {
            return Err(Error::Shape(format!("{what}: {da:?} vs {db:?}")));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.binary(a, b, "add")?;
        let out = zip_map(self.value(a).values(), self.value(b).values(), |x, y| x + y);
        self.push(vec![m, n], out, Op::Add(a, b), &[a, b])
    }

    /// Adds a length-`n` row to every row of an `[m×n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.value(row).len() != n {
            return Err(Error::Shape(format!("add_row: width {n} vs bias {}", self.value(row).len())));
        }
        let bias = self.value(row).values();
        let out = self.value(a).values().iter().enumerate().map(|(i, x)| x + bias[i % n]).collect();
        self.push(vec![m, n], out, Op::AddRow(a, row), &[a, row])
    }

    /// Elementwise product; also accepts a 1-D tensor against a single row.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.binary(a, b, "mul")?;
        let out = zip_map(self.value(a).values(), self.value(b).values(), |x, y| x * y);
        self.push(vec![m, n], out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        let out = self.value(a).values().iter().map(|x| x * s).collect();
        self.push(shape, out, Op::Scale(a, s), &[a])
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        let out = self.value(a).values().iter().map(|x| f(*x)).collect();
        self.push(shape, out, op, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    /// Rows `start..start + len` of a matrix.
    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start + len > m {
            return Err(Error::IndexOutOfRange { index: start + len, len: m });
        }
        let out = self.value(a).values()[start * n..(start + len) * n].to_vec();
        self.push(vec![len, n], out, Op::Rows(a, start), &[a])
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        self.rows(a, i, 1)
    }

    /// Vertically stacks matrices that share a column count.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::Shape("stack_rows of nothing".into()));
        };
        let n = self.dims(*first).1;
        let mut out = Vec::new();
        let mut m = 0;
        for p in parts {
            let (pm, pn) = self.dims(*p);
            if pn != n {
                return Err(Error::Shape(format!("stack_rows: width {pn} vs {n}")));
            }
            out.extend_from_slice(self.value(*p).values());
            m += pm;
        }
        self.push(vec![m, n], out, Op::StackRows(parts.to_vec()), parts)
    }

    /// Horizontal concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, na) = self.dims(a);
        let (mb, nb) = self.dims(b);
        if m != mb {
            return Err(Error::Shape(format!("concat_cols: rows {m} vs {mb}")));
        }
        let (av, bv) = (self.value(a).values(), self.value(b).values());
        let mut out = Vec::with_capacity(m * (na + nb));
        for i in 0..m {
            out.extend_from_slice(&av[i * na..(i + 1) * na]);
            out.extend_from_slice(&bv[i * nb..(i + 1) * nb]);
        }
        self.push(vec![m, na + nb], out, Op::ConcatCols(a, b), &[a, b])
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, d) = self.dims(table);
        let tv = self.value(table).values();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::IndexOutOfRange { index: id, len: rows });
            }
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        self.push(vec![ids.len(), d], out, Op::Gather(table, ids.to_vec()), &[table])
    }

    /// Sliding windows of `k` consecutive rows, flattened: `[s×d] -> [(s-k+1) × k·d]`.
    pub fn unfold(&mut self, a: Var, k: usize) -> Result<Var> {
        let (s, d) = self.dims(a);
        if k == 0 || s < k {
            return Err(Error::Shape(format!("unfold: sequence length {s} shorter than window {k}")));
        }
        let rows = s - k + 1;
        let av = self.value(a).values();
        let mut out = Vec::with_capacity(rows * k * d);
        for t in 0..rows {
            out.extend_from_slice(&av[t * d..(t + k) * d]);
        }
        self.push(vec![rows, k * d], out, Op::Unfold(a, k), &[a])
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if n == 0 {
            return Err(Error::Shape("softmax of an empty row".into()));
        }
        let av = self.value(a).values();
        let out: Vec<f64> = (0..m).flat_map(|i| softmax_slice(&av[i * n..(i + 1) * n])).collect();
        self.push(vec![m, n], out, Op::Softmax(a), &[a])
    }

    /// Cross-entropy of `softmax(logits)` against `target`, fused for a stable gradient.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = self.value(logits).len();
        if target >= n {
            return Err(Error::IndexOutOfRange { index: target, len: n });
        }
        let probs = softmax_slice(self.value(logits).values());
        let loss = -probs[target].max(PROB_FLOOR).ln();
        self.push(vec![1], vec![loss], Op::SoftmaxXent(logits, target, probs), &[logits])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).values().iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a), &[a])
    }

    /// Gradient of `output` (seeded with ones) with respect to every node.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0; self.value(output).len()]);
        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradients of every bound parameter into the owning store entries.
    pub fn accumulate_into(&self, store: &mut ParameterStore) -> Result<()> {
        for node_idx in self.bound.values() {
            if let Op::Param(name) = &self.nodes[node_idx.0].op {
                let t = store.get_mut(name)?;
                match self.grad(*node_idx) {
                    Some(g) => t.accumulate_grad(g)?,
                    None => t.accumulate_grad(&vec![0.0; t.len()])?,
                }
            }
        }
        Ok(())
    }

    /// Owned `(name, gradient)` pairs for every trainable parameter bound on this tape.
    pub fn param_grads(&self) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = self
            .bound
            .values()
            .filter_map(|v| match &self.nodes[v.0].op {
                Op::Param(name) => {
                    let g = self.grad(*v).map_or_else(|| vec![0.0; self.value(*v).len()], <[f64]>::to_vec);
                    Some((name.clone(), g))
                }
                _ => None,
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Names of parameters that received gradient on this tape.
    pub fn trainable_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .bound
            .iter()
            .filter(|(_, v)| matches!(self.nodes[v.0].op, Op::Param(_)))
            .map(|(k, _)| k.clone())
            .collect();
        names.sort();
        names
    }

    fn send(&self, grads: &mut [Option<Vec<f64>>], to: Var, g: Vec<f64>) {
        if !self.nodes[to.0].needs_grad {
            return;
        }
        match &mut grads[to.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.nodes[idx].value.values();
        match &self.nodes[idx].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                let (av, bv) = (self.value(*a).values(), self.value(*b).values());
                if self.needs(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            da[i * k + p] = (0..n).map(|j| g[i * n + j] * bv[p * n + j]).sum();
                        }
                    }
                    self.send(grads, *a, da);
                }
                if self.needs(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let av_ip = av[i * k + p];
                            if av_ip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[p * n + j] += av_ip * g[i * n + j];
                            }
                        }
                    }
                    self.send(grads, *b, db);
                }
            }
            Op::MatMulT(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).0;
                let (av, bv) = (self.value(*a).values(), self.value(*b).values());
                if self.needs(*a) {
                    // dA = dC · B
                    let mut da = vec![0.0; m * k];
                    matmul_into(g, bv, &mut da, m, n, k);
                    self.send(grads, *a, da);
                }
                if self.needs(*b) {
                    // dB = dCᵀ · A
                    let mut db = vec![0.0; n * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                db[j * k + p] += gij * av[i * k + p];
                            }
                        }
                    }
                    self.send(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.send(grads, *a, g.to_vec());
                self.send(grads, *b, g.to_vec());
            }
            Op::AddRow(a, row) => {
                self.send(grads, *a, g.to_vec());
                if self.needs(*row) {
                    let n = self.value(*row).len();
                    let mut db = vec![0.0; n];
                    g.iter().enumerate().for_each(|(i, x)| db[i % n] += x);
                    self.send(grads, *row, db);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).values(), self.value(*b).values());
                if self.needs(*a) {
                    self.send(grads, *a, zip_map(g, bv, |x, y| x * y));
                }
                if self.needs(*b) {
                    self.send(grads, *b, zip_map(g, av, |x, y| x * y));
                }
            }
            Op::Scale(a, s) => self.send(grads, *a, g.iter().map(|x| x * s).collect()),
            Op::Sigmoid(a) => self.send(grads, *a, zip_map(g, out, |x, y| x * y * (1.0 - y))),
            Op::Tanh(a) => self.send(grads, *a, zip_map(g, out, |x, y| x * (1.0 - y * y))),
            Op::Relu(a) => {
                let av = self.value(*a).values();
                self.send(grads, *a, zip_map(g, av, |x, y| if y > 0.0 { x } else { 0.0 }));
            }
            Op::Rows(a, start) => {
                let mut da = vec![0.0; self.value(*a).len()];
                let off = start * self.dims(*a).1;
                da[off..off + g.len()].copy_from_slice(g);
                self.send(grads, *a, da);
            }
            Op::StackRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    self.send(grads, *p, g[off..off + len].to_vec());
                    off += len;
                }
            }
            Op::ConcatCols(a, b) => {
                let (m, na) = self.dims(*a);
                let nb = self.dims(*b).1;
                let w = na + nb;
                let da = (0..m).flat_map(|i| g[i * w..i * w + na].to_vec()).collect();
                let db = (0..m).flat_map(|i| g[i * w + na..(i + 1) * w].to_vec()).collect();
                self.send(grads, *a, da);
                self.send(grads, *b, db);
            }
            Op::Gather(table, ids) => {
                let d = self.dims(*table).1;
                let mut dt = vec![0.0; self.value(*table).len()];
                for (i, &id) in ids.iter().enumerate() {
                    dt[id * d..(id + 1) * d].iter_mut().zip(&g[i * d..(i + 1) * d]).for_each(|(a, b)| *a += b);
                }
                self.send(grads, *table, dt);
            }
            Op::Unfold(a, k) => {
                let d = self.dims(*a).1;
                let rows = g.len() / (k * d);
                let mut da = vec![0.0; self.value(*a).len()];
                for t in 0..rows {
                    let src = &g[t * k * d..(t + 1) * k * d];
                    da[t * d..(t + k) * d].iter_mut().zip(src).for_each(|(a, b)| *a += b);
                }
                self.send(grads, *a, da);
            }
            Op::Softmax(a) => {
                let n = self.dims(*a).1;
                let mut da = vec![0.0; g.len()];
                for (row, (gy, y)) in da.chunks_mut(n).zip(g.chunks(n).zip(out.chunks(n))) {
                    let dot: f64 = gy.iter().zip(y).map(|(a, b)| a * b).sum();
                    row.iter_mut().zip(gy.iter().zip(y)).for_each(|(d, (gi, yi))| *d = yi * (gi - dot));
                }
                self.send(grads, *a, da);
            }
            Op::SoftmaxXent(logits, target, probs) => {
                let mut d: Vec<f64> = probs.iter().map(|p| p * g[0]).collect();
                d[*target] -= g[0];
                self.send(grads, *logits, d);
            }
            Op::Sum(a) => self.send(grads, *a, vec![g[0]; self.value(*a).len()]),
        }
    }
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param(_) => "param",
        Op::MatMul(..) => "matmul",
        Op::MatMulT(..) => "matmul_t",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Relu(_) => "relu",
        Op::Rows(..) => "rows",
        Op::StackRows(_) => "stack_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::Gather(..) => "gather",
        Op::Unfold(..) => "unfold",
        Op::Softmax(_) => "softmax",
        Op::SoftmaxXent(..) => "softmax_cross_entropy",
        Op::Sum(_) => "sum",
    }
}
