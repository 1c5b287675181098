//! Embedding lookup, multi-channel 1-D convolution, peephole LSTM,
//! bidirectional LSTM and dot-product attention pooling.
//!
//! Layers own only their shape and the names of their parameters; values
//! live in a [`ParameterStore`] and are bound through a [`Tape`].

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::ParameterStore;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Looks up rows of `table`. Out-of-range ids fall back to the UNK row and an
/// empty id list yields a single PAD row.
pub fn embed(tape: &mut Tape<'_>, table: Var, ids: &[usize]) -> Result<Var> {
    let rows = tape.value(table).rows();
    let mut clean: Vec<usize> = ids.iter().map(|&i| if i < rows { i } else { UNK_ID }).collect();
    if clean.is_empty() {
        clean.push(PAD_ID);
    }
    tape.gather(table, &clean)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLayer {
    pub prefix: String,
    pub kernel_size: usize,
    pub channels: usize,
    pub input_dim: usize,
}

impl ConvLayer {
    pub fn new(prefix: impl Into<String>, kernel_size: usize, channels: usize, input_dim: usize) -> Result<Self> {
        if kernel_size == 0 || channels == 0 || input_dim == 0 {
            return Err(Error::Config("conv kernel size, channels and input width must be >= 1".into()));
        }
        Ok(Self { prefix: prefix.into(), kernel_size, channels, input_dim })
    }

    /// One row per channel, each a flattened `k × d` kernel.
    pub fn kernels_name(&self) -> String {
        format!("{}.kernels", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn param_names(&self) -> Vec<String> {
        vec![self.bias_name(), self.kernels_name()]
    }

    pub fn init(&self, store: &mut ParameterStore) -> Result<()> {
        let fan_in = self.kernel_size * self.input_dim;
        store.init_uniform(&self.kernels_name(), vec![self.channels, fan_in], fan_in, self.channels)?;
        store.init_zeros(&self.bias_name(), vec![self.channels])
    }

    /// `[s × d] -> [(s - k + 1) × c]`, row `t` holding `relu(<kernel_j, window_t> + bias_j)`.
    pub fn forward(&self, tape: &mut Tape<'_>, input: Var) -> Result<Var> {
        let (s, d) = tape.value(input).dims2();
        if d != self.input_dim {
            return Err(Error::Shape(format!("conv expects width {}, got {d}", self.input_dim)));
        }
        if s < self.kernel_size {
            return Err(Error::Shape(format!(
                "sequence length {s} is shorter than kernel size {}; pad the input to at least {} positions",
                self.kernel_size, self.kernel_size
            )));
        }
        let kernels = tape.param(&self.kernels_name())?;
        let bias = tape.param(&self.bias_name())?;
        let windows = tape.unfold(input, self.kernel_size)?;
        let pre = tape.matmul_t(windows, kernels)?;
        let pre = tape.add_row(pre, bias)?;
        tape.relu(pre)
    }
}

/// Peephole LSTM parameters. Gate weights are stored `[hidden × input]`
/// and `[hidden × hidden]`; peephole weights are per-unit vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmParams {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

const GATES: [&str; 4] = ["i", "f", "o", "c"];

impl LstmParams {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config("lstm dimensions must be >= 1".into()));
        }
        Ok(Self { prefix: prefix.into(), input_dim, hidden_dim })
    }

    fn name(&self, what: &str, gate: &str) -> String {
        format!("{}.{what}{gate}", self.prefix)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for g in GATES {
            names.push(self.name("w_x", g));
            names.push(self.name("w_h", g));
            names.push(self.name("b_", g));
            if g != "c" {
                names.push(self.name("w_c", g));
            }
        }
        names.sort();
        names
    }

    pub fn init(&self, store: &mut ParameterStore) -> Result<()> {
        let (h, x) = (self.hidden_dim, self.input_dim);
        for g in GATES {
            store.init_uniform(&self.name("w_x", g), vec![h, x], x, h)?;
            store.init_uniform(&self.name("w_h", g), vec![h, h], h, h)?;
            store.init_zeros(&self.name("b_", g), vec![h])?;
            if g != "c" {
                store.init_uniform(&self.name("w_c", g), vec![h], h, h)?;
            }
        }
        Ok(())
    }

    fn bind(&self, tape: &mut Tape<'_>) -> Result<BoundLstm> {
        let mut p = |what: &str, g: &str| tape.param(&self.name(what, g));
        Ok(BoundLstm {
            w_x: [p("w_x", "i")?, p("w_x", "f")?, p("w_x", "o")?, p("w_x", "c")?],
            w_h: [p("w_h", "i")?, p("w_h", "f")?, p("w_h", "o")?, p("w_h", "c")?],
            b: [p("b_", "i")?, p("b_", "f")?, p("b_", "o")?, p("b_", "c")?],
            w_c: [p("w_c", "i")?, p("w_c", "f")?, p("w_c", "o")?],
        })
    }

    /// One timestep of
    ///
    /// ```text
    /// i = σ(W_xi x + W_hi h + w_ci ⊙ c_prev + b_i)
    /// f = σ(W_xf x + W_hf h + w_cf ⊙ c_prev + b_f)
    /// c = f ⊙ c_prev + i ⊙ tanh(W_xc x + W_hc h + b_c)
    /// o = σ(W_xo x + W_ho h + w_co ⊙ c + b_o)
    /// h = o ⊙ tanh(c)
    /// ```
    ///
    /// All vectors are `1 × n` rows.
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        self.check_dims(tape, x, h_prev, c_prev)?;
        let p = self.bind(tape)?;
        let mut xw = [x; 4];
        for (slot, w) in xw.iter_mut().zip(p.w_x) {
            *slot = tape.matmul_t(x, w)?;
        }
        cell(tape, &p, xw, h_prev, c_prev)
    }

    /// Runs over the rows of `xs` (`[s × input]`), returning all hidden states `[s × hidden]`.
    pub fn run(&self, tape: &mut Tape<'_>, xs: Var) -> Result<Var> {
        let (s, d) = tape.value(xs).dims2();
        if s == 0 {
            return Err(Error::Shape("lstm over an empty sequence".into()));
        }
        if d != self.input_dim {
            return Err(Error::Shape(format!("lstm expects input width {}, got {d}", self.input_dim)));
        }
        let p = self.bind(tape)?;
        // input projections for every timestep at once
        let mut proj = [xs; 4];
        for (slot, w) in proj.iter_mut().zip(p.w_x) {
            *slot = tape.matmul_t(xs, w)?;
        }
        let mut h = tape.constant(crate::tensor::DenseTensor::zeros(vec![1, self.hidden_dim]));
        let mut c = h;
        let mut states = Vec::with_capacity(s);
        for t in 0..s {
            let mut xw = [xs; 4];
            for (slot, pr) in xw.iter_mut().zip(proj) {
                *slot = tape.row(pr, t)?;
            }
            (h, c) = cell(tape, &p, xw, h, c)?;
            states.push(h);
        }
        tape.stack_rows(&states)
    }

    fn check_dims(&self, tape: &Tape<'_>, x: Var, h: Var, c: Var) -> Result<()> {
        let ok = tape.value(x).dims2() == (1, self.input_dim)
            && tape.value(h).dims2() == (1, self.hidden_dim)
            && tape.value(c).dims2() == (1, self.hidden_dim);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "lstm step expects x 1x{}, h and c 1x{}",
                self.input_dim, self.hidden_dim
            )))
        }
    }
}

struct BoundLstm {
    w_x: [Var; 4],
    w_h: [Var; 4],
    b: [Var; 4],
    w_c: [Var; 3],
}

/// Gate arithmetic given the precomputed input projections `xw` (order i, f, o, c).
fn cell(tape: &mut Tape<'_>, p: &BoundLstm, xw: [Var; 4], h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    let pre = |tape: &mut Tape<'_>, g: usize| -> Result<Var> {
        let hw = tape.matmul_t(h_prev, p.w_h[g])?;
        let s = tape.add(xw[g], hw)?;
        tape.add_row(s, p.b[g])
    };
    let peep = |tape: &mut Tape<'_>, z: Var, cell: Var, w: Var| -> Result<Var> {
        let m = tape.mul(cell, w)?;
        tape.add(z, m)
    };

    let zi = pre(tape, 0)?;
    let zi = peep(tape, zi, c_prev, p.w_c[0])?;
    let i = tape.sigmoid(zi)?;

    let zf = pre(tape, 1)?;
    let zf = peep(tape, zf, c_prev, p.w_c[1])?;
    let f = tape.sigmoid(zf)?;

    let zc = pre(tape, 3)?;
    let cand = tape.tanh(zc)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, cand)?;
    let c = tape.add(keep, write)?;

    let zo = pre(tape, 2)?;
    let zo = peep(tape, zo, c, p.w_c[2])?;
    let o = tape.sigmoid(zo)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Bidirectional LSTM: row `i` is `h_front,i ⊕ h_back,i`.
pub fn bilstm(tape: &mut Tape<'_>, input: Var, fwd: &LstmParams, bwd: &LstmParams) -> Result<Var> {
    if fwd.hidden_dim != bwd.hidden_dim {
        return Err(Error::Shape(format!(
            "bilstm directions disagree on hidden width: {} vs {}",
            fwd.hidden_dim, bwd.hidden_dim
        )));
    }
    let s = tape.value(input).rows();
    if s == 0 || tape.value(input).is_empty() {
        return Err(Error::Shape("bilstm over an empty sequence".into()));
    }
    let front = fwd.run(tape, input)?;
    let reversed = reverse_rows(tape, input)?;
    let back_rev = bwd.run(tape, reversed)?;
    let back = reverse_rows(tape, back_rev)?;
    tape.concat_cols(front, back)
}

pub fn reverse_rows(tape: &mut Tape<'_>, a: Var) -> Result<Var> {
    let s = tape.value(a).rows();
    let rows = (0..s).rev().map(|t| tape.row(a, t)).collect::<Result<Vec<_>>>()?;
    tape.stack_rows(&rows)
}

/// Attention weights and pooled summary.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    /// `1 × valid` weights.
    pub weights: Var,
    /// `1 × width` weighted sum of the states.
    pub summary: Var,
}

/// `α_t = softmax_t(v · h_t)` over the first `valid` states, `S = Σ α_t h_t`.
///
/// States at positions `>= valid` are masked (equivalent to a `-∞` logit).
pub fn attention_pool(tape: &mut Tape<'_>, states: Var, query: Var, valid: usize) -> Result<Attention> {
    let (s, n) = tape.value(states).dims2();
    if s == 0 || valid == 0 {
        return Err(Error::Shape("attention over a zero-length sequence".into()));
    }
    if valid > s {
        return Err(Error::IndexOutOfRange { index: valid, len: s });
    }
    if tape.value(query).len() != n {
        return Err(Error::Shape(format!("attention query width {} vs state width {n}", tape.value(query).len())));
    }
    let live = if valid == s { states } else { tape.rows(states, 0, valid)? };
    let scores = tape.matmul_t(query, live)?;
    let weights = tape.softmax(scores)?;
    let summary = tape.matmul(weights, live)?;
    Ok(Attention { weights, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckConfig};
    use crate::tensor::DenseTensor;

    fn zero_lstm(input: usize, hidden: usize) -> (ParameterStore, LstmParams) {
        let p = LstmParams::new("l", input, hidden).unwrap();
        let mut store = ParameterStore::new(0);
        p.init(&mut store).unwrap();
        for (_, t) in store.iter_mut() {
            t.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        (store, p)
    }

    #[test]
    fn embed_rows_and_fallbacks() {
        let mut tape = Tape::new();
        let table =
            tape.constant(DenseTensor::from_rows(&[vec![0.0, 0.0], vec![9.0, 9.0], vec![1.0, 2.0]]).unwrap());
        let e = embed(&mut tape, table, &[0]).unwrap();
        assert_eq!(tape.value(e).values(), &[0.0, 0.0]);
        let e = embed(&mut tape, table, &[2, 77]).unwrap();
        assert_eq!(tape.value(e).values(), &[1.0, 2.0, 9.0, 9.0]);
        let e = embed(&mut tape, table, &[]).unwrap();
        assert_eq!(tape.value(e).shape(), &[1, 2]);
    }

    #[test]
    fn embed_shape_at_full_width() {
        let mut tape = Tape::new();
        let table = tape.constant(DenseTensor::zeros(vec![50, 200]));
        let e = embed(&mut tape, table, &[3; 10]).unwrap();
        assert_eq!(tape.value(e).shape(), &[10, 200]);
    }

    #[test]
    fn conv_all_ones_sums_window() {
        let layer = ConvLayer::new("conv", 2, 1, 2).unwrap();
        let mut store = ParameterStore::new(0);
        store.insert(layer.kernels_name(), DenseTensor::new(vec![1, 4], vec![1.0; 4]).unwrap()).unwrap();
        store.insert(layer.bias_name(), DenseTensor::zeros(vec![1])).unwrap();
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(DenseTensor::new(vec![5, 2], vec![1.0; 10]).unwrap());
        let y = layer.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[4, 1]);
        assert!(tape.value(y).values().iter().all(|v| *v == 4.0));
    }

    #[test]
    fn conv_negative_kernel_is_clamped() {
        let layer = ConvLayer::new("conv", 2, 1, 2).unwrap();
        let mut store = ParameterStore::new(0);
        store.insert(layer.kernels_name(), DenseTensor::new(vec![1, 4], vec![-1.0; 4]).unwrap()).unwrap();
        store.insert(layer.bias_name(), DenseTensor::zeros(vec![1])).unwrap();
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(DenseTensor::new(vec![2, 2], vec![1.0; 4]).unwrap());
        let y = layer.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).values(), &[0.0]);
    }

    #[test]
    fn conv_shape_and_short_input() {
        let layer = ConvLayer::new("conv", 3, 4, 6).unwrap();
        let mut store = ParameterStore::new(1);
        layer.init(&mut store).unwrap();
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(DenseTensor::zeros(vec![10, 6]));
        let y = layer.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[8, 4]);
        let short = tape.constant(DenseTensor::zeros(vec![2, 6]));
        let err = layer.forward(&mut tape, short).unwrap_err();
        assert!(err.to_string().contains("pad"));
    }

    #[test]
    fn lstm_zero_params() {
        let (store, p) = zero_lstm(3, 2);
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(DenseTensor::new(vec![1, 3], vec![0.4, -1.0, 2.0]).unwrap());
        let zero = tape.constant(DenseTensor::zeros(vec![1, 2]));
        let (h, c) = p.step(&mut tape, x, zero, zero).unwrap();
        assert_eq!(tape.value(h).values(), &[0.0, 0.0]);
        assert_eq!(tape.value(c).values(), &[0.0, 0.0]);

        // c_prev = 1: i = f = o = 0.5, candidate tanh(0) = 0 -> c = 0.5, h = 0.5 tanh(0.5)
        let one = tape.constant(DenseTensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap());
        let (h, c) = p.step(&mut tape, x, zero, one).unwrap();
        assert_eq!(tape.value(c).values(), &[0.5, 0.5]);
        let expected = 0.5 * 0.5f64.tanh();
        assert!((tape.value(h).values()[0] - expected).abs() < 1e-15);
        assert!((expected - 0.2311).abs() < 1e-4);
    }

    #[test]
    fn lstm_saturated_forget_gate_keeps_cell() {
        let (mut store, p) = zero_lstm(1, 1);
        store.get_mut("l.b_f").unwrap().values_mut()[0] = 50.0;
        store.get_mut("l.b_c").unwrap().values_mut()[0] = 0.3;
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(DenseTensor::zeros(vec![1, 1]));
        let h0 = tape.constant(DenseTensor::zeros(vec![1, 1]));
        let c0 = tape.constant(DenseTensor::new(vec![1, 1], vec![0.7]).unwrap());
        let (_, c) = p.step(&mut tape, x, h0, c0).unwrap();
        let expected = 0.7 + 0.5 * 0.3f64.tanh();
        assert!((tape.value(c).values()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn lstm_step_rejects_bad_dims() {
        let (store, p) = zero_lstm(3, 2);
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(DenseTensor::zeros(vec![1, 4]));
        let z = tape.constant(DenseTensor::zeros(vec![1, 2]));
        assert!(matches!(p.step(&mut tape, x, z, z), Err(Error::Shape(_))));
    }

    #[test]
    fn lstm_run_matches_repeated_step() {
        let p = LstmParams::new("l", 3, 4).unwrap();
        let mut store = ParameterStore::new(5);
        p.init(&mut store).unwrap();
        let xs = DenseTensor::new(vec![5, 3], (0..15).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let mut tape = Tape::with_store(&store);
        let xv = tape.constant(xs.clone());
        let all = p.run(&mut tape, xv).unwrap();
        let mut h = tape.constant(DenseTensor::zeros(vec![1, 4]));
        let mut c = h;
        for t in 0..5 {
            let x = tape.constant(DenseTensor::new(vec![1, 3], xs.row(t).to_vec()).unwrap());
            (h, c) = p.step(&mut tape, x, h, c).unwrap();
            let expect = tape.value(h).values().to_vec();
            let got = tape.value(all).row(t).to_vec();
            for (a, b) in expect.iter().zip(&got) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bilstm_zero_params_and_width() {
        let (store, f) = zero_lstm(3, 2);
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(DenseTensor::new(vec![4, 3], vec![0.5; 12]).unwrap());
        let y = bilstm(&mut tape, x, &f, &f).unwrap();
        assert_eq!(tape.value(y).shape(), &[4, 4]);
        assert!(tape.value(y).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bilstm_palindrome_symmetry() {
        let p = LstmParams::new("l", 2, 3).unwrap();
        let mut store = ParameterStore::new(9);
        p.init(&mut store).unwrap();
        let rows = [[0.1, 0.5], [-0.3, 0.2], [0.9, -0.4], [-0.3, 0.2], [0.1, 0.5]];
        let xs = DenseTensor::new(vec![5, 2], rows.iter().flatten().copied().collect()).unwrap();
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(xs);
        let y = bilstm(&mut tape, x, &p, &p).unwrap();
        let out = tape.value(y);
        for i in 0..5 {
            let front = &out.row(i)[..3];
            let back = &out.row(4 - i)[3..];
            for (a, b) in front.iter().zip(back) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bilstm_halves_match_unidirectional_runs() {
        let f = LstmParams::new("f", 2, 3).unwrap();
        let b = LstmParams::new("b", 2, 3).unwrap();
        let mut store = ParameterStore::new(11);
        f.init(&mut store).unwrap();
        b.init(&mut store).unwrap();
        let xs = DenseTensor::new(vec![4, 2], vec![0.3, -0.1, 0.8, 0.2, -0.5, 0.4, 0.0, 1.0]).unwrap();
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(xs.clone());
        let both = bilstm(&mut tape, x, &f, &b).unwrap();
        let front = f.run(&mut tape, x).unwrap();
        let rev_rows: Vec<Vec<f64>> = (0..4).rev().map(|t| xs.row(t).to_vec()).collect();
        let xr = tape.constant(DenseTensor::from_rows(&rev_rows).unwrap());
        let back = b.run(&mut tape, xr).unwrap();
        for i in 0..4 {
            let row = tape.value(both).row(i).to_vec();
            assert_eq!(&row[..3], tape.value(front).row(i));
            assert_eq!(&row[3..], tape.value(back).row(3 - i));
        }
    }

    #[test]
    fn bilstm_requires_matching_hidden() {
        let f = LstmParams::new("f", 2, 3).unwrap();
        let b = LstmParams::new("b", 2, 4).unwrap();
        let mut store = ParameterStore::new(0);
        f.init(&mut store).unwrap();
        b.init(&mut store).unwrap();
        let mut tape = Tape::with_store(&store);
        let x = tape.constant(DenseTensor::zeros(vec![3, 2]));
        assert!(bilstm(&mut tape, x, &f, &b).is_err());
    }

    #[test]
    fn attention_examples() {
        let mut tape = Tape::new();
        let states = tape.constant(DenseTensor::new(vec![4, 2], vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap());
        let q = tape.constant(DenseTensor::new(vec![1, 2], vec![0.3, 0.7]).unwrap());
        let a = attention_pool(&mut tape, states, q, 4).unwrap();
        assert!(tape.value(a.weights).values().iter().all(|w| (w - 0.25).abs() < 1e-15));

        let single = tape.constant(DenseTensor::new(vec![1, 2], vec![3.0, -1.0]).unwrap());
        let a = attention_pool(&mut tape, single, q, 1).unwrap();
        assert_eq!(tape.value(a.weights).values(), &[1.0]);
        assert_eq!(tape.value(a.summary).values(), &[3.0, -1.0]);

        // v · h = (ln 2, 0)
        let two = tape.constant(DenseTensor::new(vec![2, 1], vec![2f64.ln(), 0.0]).unwrap());
        let v = tape.constant(DenseTensor::new(vec![1, 1], vec![1.0]).unwrap());
        let a = attention_pool(&mut tape, two, v, 2).unwrap();
        let w = tape.value(a.weights).values();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12 && (w[1] - 1.0 / 3.0).abs() < 1e-12);

        assert!(attention_pool(&mut tape, two, v, 0).is_err());
    }

    #[test]
    fn attention_mask_ignores_tail() {
        let mut tape = Tape::new();
        let states = tape.constant(DenseTensor::new(vec![3, 1], vec![1.0, 2.0, 100.0]).unwrap());
        let v = tape.constant(DenseTensor::new(vec![1, 1], vec![1.0]).unwrap());
        let a = attention_pool(&mut tape, states, v, 2).unwrap();
        assert_eq!(tape.value(a.weights).len(), 2);
        let s = tape.value(a.summary).values()[0];
        assert!(s > 1.0 && s < 2.0);
    }

    #[test]
    fn layers_pass_gradient_check() {
        let conv = ConvLayer::new("conv", 2, 3, 4).unwrap();
        let fwd = LstmParams::new("fwd", 3, 3).unwrap();
        let bwd = LstmParams::new("bwd", 3, 3).unwrap();
        let head = LstmParams::new("head", 6, 6).unwrap();
        let mut store = ParameterStore::new(21);
        store.init_uniform("emb", vec![7, 4], 4, 7).unwrap();
        conv.init(&mut store).unwrap();
        fwd.init(&mut store).unwrap();
        bwd.init(&mut store).unwrap();
        head.init(&mut store).unwrap();
        // non-zero biases so the zero-init entries are exercised away from symmetric points
        for (name, t) in store.iter_mut() {
            if name.contains(".b") {
                let n = t.len();
                t.values_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 + 0.05 * (i % n) as f64);
            }
        }
        let f = |tape: &mut Tape<'_>| -> Result<Var> {
            let table = tape.param("emb")?;
            let x = embed(tape, table, &[1, 3, 5, 2, 6])?;
            let m = conv.forward(tape, x)?;
            let b = bilstm(tape, m, &fwd, &bwd)?;
            let hs = head.run(tape, b)?;
            let last = tape.value(hs).rows() - 1;
            let v = tape.row(hs, last)?;
            let att = attention_pool(tape, hs, v, last + 1)?;
            let sq = tape.mul(att.summary, att.summary)?;
            tape.sum(sq)
        };
        let groups = [
            vec!["emb".to_string()],
            conv.param_names(),
            fwd.param_names(),
            bwd.param_names(),
            head.param_names(),
        ];
        for params in groups {
            let cfg = GradCheckConfig { samples: 64, params: Some(params.clone()), seed: 4, ..Default::default() };
            let report = grad_check(&store, f, &cfg).unwrap();
            assert!(report.max_rel_error < 1e-4, "{params:?}: {:?}", report.worst());
        }
    }
}
