//! The multitask classifier: a shared trunk (character embeddings, a
//! multi-channel convolution and a bidirectional LSTM of width `c` per
//! direction) feeding one head per task. Each head runs its own LSTM of width
//! `2c` over the trunk states, pools them with attention keyed on its final
//! output, and projects the pooled vector to class probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, Vocabulary};
use crate::error::{Error, Result};
use crate::layers::{attention_pool, bilstm, embed, ConvLayer, LstmParams, PAD_ID};
use crate::tape::{Tape, Var};
use crate::tensor::{softmax_slice, ParameterStore};

pub const EMBEDDING: &str = "embedding";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub classes: Vec<String>,
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, classes: Vec<String>) -> Result<Self> {
        let spec = Self { id: id.into(), classes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(char::is_whitespace) {
            return Err(Error::Config(format!("task id {:?} must be non-empty without whitespace", self.id)));
        }
        if self.classes.len() < 2 {
            return Err(Error::Config(format!("task `{}` needs at least 2 classes", self.id)));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.classes.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Config(format!("task `{}` repeats class name `{dup}`", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kernel_size: usize,
    pub channels: usize,
    /// Longer texts are truncated to this many characters.
    pub max_len: usize,
    /// Pad every text to `max_len` (attention masks the padding) instead of
    /// only up to the kernel size.
    pub fixed_length: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kernel_size: 3, channels: 64, max_len: 140, fixed_length: false }
    }
}

#[derive(Debug, Clone)]
struct Head {
    lstm: LstmParams,
    out_weight: String,
    out_bias: String,
}

impl Head {
    fn new(task: &str, width: usize) -> Result<Self> {
        Ok(Self {
            lstm: LstmParams::new(format!("head.{task}.lstm"), width, width)?,
            out_weight: format!("head.{task}.out.weight"),
            out_bias: format!("head.{task}.out.bias"),
        })
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = self.lstm.param_names();
        names.push(self.out_bias.clone());
        names.push(self.out_weight.clone());
        names
    }
}

/// Per-text classifier output.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
    /// One weight per unmasked position of the head LSTM sequence.
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AclmmModel {
    vocab: Vocabulary,
    config: ModelConfig,
    tasks: Vec<TaskSpec>,
    store: ParameterStore,
    conv: ConvLayer,
    fwd: LstmParams,
    bwd: LstmParams,
    heads: Vec<Head>,
}

pub(crate) struct Graph {
    pub logits: Var,
    pub attention: Var,
}

/// Builds a freshly initialized model around a trainable copy of `embedding`.
pub fn build_model(
    vocab: &Vocabulary,
    embedding: &EmbeddingMatrix,
    config: ModelConfig,
    tasks: Vec<TaskSpec>,
    seed: u64,
) -> Result<AclmmModel> {
    if config.kernel_size < 1 || config.channels < 1 {
        return Err(Error::Config("kernel size and channel count must be >= 1".into()));
    }
    if config.max_len < config.kernel_size {
        return Err(Error::Config(format!(
            "max_len {} is shorter than kernel size {}",
            config.max_len, config.kernel_size
        )));
    }
    if embedding.vocab_size() != vocab.len() {
        return Err(Error::Shape(format!(
            "embedding has {} rows for a vocabulary of {}",
            embedding.vocab_size(),
            vocab.len()
        )));
    }
    if tasks.is_empty() {
        return Err(Error::Config("at least one task is required".into()));
    }
    for (i, t) in tasks.iter().enumerate() {
        t.validate()?;
        if tasks[..i].iter().any(|o| o.id == t.id) {
            return Err(Error::DuplicateTask(t.id.clone()));
        }
    }
    let c = config.channels;
    let d = embedding.dim();
    let conv = ConvLayer::new("trunk.conv", config.kernel_size, c, d)?;
    let fwd = LstmParams::new("trunk.bilstm_fwd", c, c)?;
    let bwd = LstmParams::new("trunk.bilstm_bwd", c, c)?;
    let heads = tasks.iter().map(|t| Head::new(&t.id, 2 * c)).collect::<Result<Vec<_>>>()?;

    let mut store = ParameterStore::new(seed);
    store.insert(EMBEDDING, embedding.table().clone())?;
    conv.init(&mut store)?;
    fwd.init(&mut store)?;
    bwd.init(&mut store)?;
    for (head, task) in heads.iter().zip(&tasks) {
        head.lstm.init(&mut store)?;
        store.init_uniform(&head.out_weight, vec![task.num_classes(), 2 * c], 2 * c, task.num_classes())?;
        store.init_zeros(&head.out_bias, vec![task.num_classes()])?;
    }
    Ok(AclmmModel { vocab: vocab.clone(), config, tasks, store, conv, fwd, bwd, heads })
}

impl AclmmModel {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub(crate) fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn embedding_dim(&self) -> usize {
        self.store.get(EMBEDDING).map(|t| t.cols()).unwrap_or(0)
    }

    pub fn task_index(&self, task: &str) -> Result<usize> {
        self.tasks.iter().position(|t| t.id == task).ok_or_else(|| Error::UnknownTask(task.to_string()))
    }

    pub fn head_hidden_dim(&self, task: &str) -> Result<usize> {
        Ok(self.heads[self.task_index(task)?].lstm.hidden_dim)
    }

    /// Embedding, convolution and bi-LSTM parameter names.
    pub fn trunk_param_names(&self) -> Vec<String> {
        let mut names = vec![EMBEDDING.to_string()];
        names.extend(self.conv.param_names());
        names.extend(self.fwd.param_names());
        names.extend(self.bwd.param_names());
        names
    }

    pub fn head_param_names(&self, task: &str) -> Result<Vec<String>> {
        Ok(self.heads[self.task_index(task)?].param_names())
    }

    /// Character ids after truncation and padding, plus the count of real characters.
    pub fn encode(&self, text: &str) -> (Vec<usize>, usize) {
        let mut ids = self.vocab.encode(text);
        ids.truncate(self.config.max_len);
        let real = ids.len();
        let target = if self.config.fixed_length { self.config.max_len } else { real.max(self.config.kernel_size) };
        ids.resize(target, PAD_ID);
        (ids, real)
    }

    /// Records the full network on `tape` and returns the head logits.
    pub(crate) fn graph(&self, tape: &mut Tape<'_>, ids: &[usize], real: usize, head: usize) -> Result<Graph> {
        let head = &self.heads[head];
        let table = tape.param(EMBEDDING)?;
        let x = embed(tape, table, ids)?;
        let feats = self.conv.forward(tape, x)?;
        let trunk = bilstm(tape, feats, &self.fwd, &self.bwd)?;
        let states = head.lstm.run(tape, trunk)?;
        let rows = tape.value(states).rows();
        let valid = (real + 1).saturating_sub(self.config.kernel_size).clamp(1, rows);
        let query = tape.row(states, valid - 1)?;
        let att = attention_pool(tape, states, query, valid)?;
        let w = tape.param(&head.out_weight)?;
        let b = tape.param(&head.out_bias)?;
        let logits = tape.matmul_t(att.summary, w)?;
        let logits = tape.add_row(logits, b)?;
        Ok(Graph { logits, attention: att.weights })
    }

    /// Mean cross-entropy of `(text, label)` pairs for `task`, recorded on `tape`.
    /// Parameters are read from the tape's store, so this works on perturbed copies.
    pub fn batch_loss(&self, tape: &mut Tape<'_>, batch: &[(&str, usize)], task: &str) -> Result<Var> {
        let head = self.task_index(task)?;
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let n = self.tasks[head].num_classes();
        let mut losses = Vec::with_capacity(batch.len());
        for &(text, label) in batch {
            if label >= n {
                return Err(Error::IndexOutOfRange { index: label, len: n });
            }
            let (ids, real) = self.encode(text);
            let g = self.graph(tape, &ids, real, head)?;
            losses.push(tape.softmax_cross_entropy(g.logits, label)?);
        }
        let stacked = tape.stack_rows(&losses)?;
        let total = tape.sum(stacked)?;
        tape.scale(total, 1.0 / batch.len() as f64)
    }

    /// Class probabilities and attention weights for one text.
    pub fn forward(&self, text: &str, task: &str) -> Result<Prediction> {
        let head = self.task_index(task)?;
        self.forward_ids(text, head)
    }

    fn forward_ids(&self, text: &str, head: usize) -> Result<Prediction> {
        let (ids, real) = self.encode(text);
        let mut tape = Tape::with_store(&self.store);
        let g = self.graph(&mut tape, &ids, real, head)?;
        let probs = softmax_slice(tape.value(g.logits).values());
        let class = argmax(&probs);
        Ok(Prediction { class, probs, attention: tape.value(g.attention).values().to_vec() })
    }

    /// Predictions in input order; texts are processed in parallel.
    pub fn predict_batch<S: AsRef<str> + Sync>(&self, texts: &[S], task: &str) -> Result<Vec<Prediction>> {
        let head = self.task_index(task)?;
        texts.par_iter().map(|t| self.forward_ids(t.as_ref(), head)).collect()
    }

    /// Replaces parameter values, keeping names and shapes.
    pub(crate) fn load_values(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        let t = self.store.get_mut(name)?;
        if t.len() != values.len() {
            return Err(Error::CheckpointShape(format!("{name}: expected {} values, got {}", t.len(), values.len())));
        }
        t.values_mut().copy_from_slice(&values);
        Ok(())
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::embedding::build_vocab;
    use crate::tensor::DenseTensor;

    pub(crate) fn tiny_model(channels: usize, tasks: &[(&str, usize)], seed: u64) -> AclmmModel {
        let vocab = build_vocab(&["abcdefgh"], 1).unwrap();
        let mut store = ParameterStore::new(seed);
        store.init_uniform("e", vec![vocab.len(), 6], 6, vocab.len()).unwrap();
        let emb = EmbeddingMatrix::new(store.get("e").unwrap().clone()).unwrap();
        let tasks = tasks
            .iter()
            .map(|(id, n)| TaskSpec::new(*id, (0..*n).map(|i| format!("c{i}")).collect()).unwrap())
            .collect();
        let cfg = ModelConfig { kernel_size: 3, channels, max_len: 12, fixed_length: false };
        build_model(&vocab, &emb, cfg, tasks, seed).unwrap()
    }

    #[test]
    fn head_width_is_twice_channels() {
        let m = tiny_model(64, &[("a", 2)], 0);
        assert_eq!(m.head_hidden_dim("a").unwrap(), 128);
        assert_eq!(m.store().get("head.a.lstm.w_xi").unwrap().shape(), &[128, 128]);
        assert_eq!(m.store().get("trunk.bilstm_fwd.w_xi").unwrap().shape(), &[64, 64]);
        assert_eq!(m.store().get("trunk.conv.kernels").unwrap().shape(), &[64, 18]);
    }

    #[test]
    fn duplicate_task_rejected() {
        let vocab = build_vocab(&["ab"], 1).unwrap();
        let emb = EmbeddingMatrix::new(DenseTensor::zeros(vec![vocab.len(), 4])).unwrap();
        let t = TaskSpec::new("x", vec!["a".into(), "b".into()]).unwrap();
        let err = build_model(&vocab, &emb, ModelConfig::default(), vec![t.clone(), t], 0).unwrap_err();
        assert!(matches!(err, Error::DuplicateTask(_)));
    }

    #[test]
    fn task_spec_validation() {
        assert!(TaskSpec::new("x", vec!["a".into()]).is_err());
        assert!(TaskSpec::new("x", vec!["a".into(), "a".into()]).is_err());
        assert!(TaskSpec::new("has space", vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = tiny_model(4, &[("a", 2), ("b", 3)], 5);
        let b = tiny_model(4, &[("a", 2), ("b", 3)], 5);
        assert_eq!(a.store(), b.store());
    }

    #[test]
    fn forward_is_simplex_and_deterministic() {
        let m = tiny_model(4, &[("a", 2), ("b", 8)], 1);
        for text in ["", "a", "ab", "abcdefgh", "abcdefghabcdefghabcdefgh", "zzz?"] {
            let p = m.forward(text, "b").unwrap();
            assert_eq!(p.probs.len(), 8);
            assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.probs.iter().all(|x| *x > 0.0));
            assert!((p.attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(m.forward(text, "b").unwrap(), p);
        }
        assert!(matches!(m.forward("a", "nope"), Err(Error::UnknownTask(_))));
    }

    #[test]
    fn truncates_long_texts() {
        let m = tiny_model(4, &[("a", 2)], 1);
        let (ids, real) = m.encode(&"abc".repeat(20));
        assert_eq!(ids.len(), 12);
        assert_eq!(real, 12);
        let p = m.forward(&"abc".repeat(20), "a").unwrap();
        assert_eq!(p.attention.len(), 10);
    }

    #[test]
    fn fixed_length_masks_padding() {
        let mut m = tiny_model(4, &[("a", 2)], 1);
        m.config.fixed_length = true;
        let (ids, real) = m.encode("abcde");
        assert_eq!((ids.len(), real), (12, 5));
        let p = m.forward("abcde", "a").unwrap();
        assert_eq!(p.attention.len(), 3);
        assert!((p.attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_equals_single() {
        let m = tiny_model(4, &[("a", 3)], 2);
        let texts = ["abc", "hgf", "a", "bbbbbbb", "cafe"];
        let batch = m.predict_batch(&texts, "a").unwrap();
        assert_eq!(batch.len(), texts.len());
        for (t, p) in texts.iter().zip(&batch) {
            assert_eq!(&m.forward(t, "a").unwrap(), p);
            assert_eq!(p.class, argmax(&p.probs));
        }
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
