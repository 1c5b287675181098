//! Labeled corpora and round-robin multitask training.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AclmmModel, EMBEDDING};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::tape::Tape;
use crate::tensor::cross_entropy;

pub const CORPUS_HEADER: &str = "text\ttask\tlabel\tsplit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}` (expected train, dev or test)"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub text: String,
    pub task: String,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub records: Vec<Record>,
}

impl LabeledCorpus {
    pub fn new(records: Vec<Record>) -> Self {
        Self { records }
    }

    /// Parses `text<TAB>task<TAB>label<TAB>split` lines after the header.
    pub fn parse_tsv(input: &str) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == CORPUS_HEADER => {}
            _ => return Err(Error::Format { line: 1, message: format!("expected header `{CORPUS_HEADER}`") }),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fail = |message: String| Error::Format { line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(fail(format!("expected 4 tab-separated fields, got {}", fields.len())));
            }
            let label = fields[2].parse().map_err(|_| fail(format!("label `{}` is not an integer", fields[2])))?;
            let split = fields[3].parse().map_err(|e: Error| fail(e.to_string()))?;
            records.push(Record { text: fields[0].to_string(), task: fields[1].to_string(), label, split });
        }
        Ok(Self { records })
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        Self::parse_tsv(&fs::read_to_string(path)?)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(CORPUS_HEADER);
        out.push('\n');
        for r in &self.records {
            let text = r.text.replace(['\t', '\n', '\r'], " ");
            out.push_str(&format!("{text}\t{}\t{}\t{}\n", r.task, r.label, r.split));
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn select<'a>(&'a self, task: &str, split: Split) -> impl Iterator<Item = &'a Record> + 'a {
        let task = task.to_string();
        self.records.iter().filter(move |r| r.task == task && r.split == split)
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.text.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// One batch per task per cycle, tasks in registration order.
    RoundRobin,
    /// Each batch's task drawn with probability proportional to its training size.
    Proportional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seed: u64,
    pub schedule: Schedule,
    pub freeze_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            seed: 0,
            schedule: Schedule::RoundRobin,
            freeze_embeddings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEpoch {
    pub task: String,
    pub train_loss: f64,
    pub train_examples: usize,
    pub dev_loss: Option<f64>,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub tasks: Vec<TaskEpoch>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn task(&self, epoch: usize, task: &str) -> Option<&TaskEpoch> {
        self.epochs.get(epoch)?.tasks.iter().find(|t| t.task == task)
    }

    /// `epoch  task  train_loss  dev_loss  dev_accuracy` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttask\ttrain_loss\tdev_loss\tdev_accuracy\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        for e in &self.epochs {
            for t in &e.tasks {
                out.push_str(&format!(
                    "{}\t{}\t{:.6}\t{}\t{}\n",
                    e.epoch,
                    t.task,
                    t.train_loss,
                    opt(t.dev_loss),
                    opt(t.dev_accuracy)
                ));
            }
        }
        out
    }
}

/// Accuracy, mean cross-entropy and `(true, predicted)` pairs over a set of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub pairs: Vec<(usize, usize)>,
}

pub fn evaluate(model: &AclmmModel, records: &[&Record], task: &str) -> Result<Evaluation> {
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let preds = model.predict_batch(&texts, task)?;
    let mut loss = 0.0;
    let mut correct = 0;
    let mut pairs = Vec::with_capacity(records.len());
    for (r, p) in records.iter().zip(&preds) {
        loss += cross_entropy(&p.probs, r.label)?;
        correct += usize::from(p.class == r.label);
        pairs.push((r.label, p.class));
    }
    let n = records.len().max(1) as f64;
    Ok(Evaluation { accuracy: correct as f64 / n, loss: loss / n, pairs })
}

fn check_records(model: &AclmmModel, corpora: &[LabeledCorpus]) -> Result<()> {
    for r in corpora.iter().flat_map(|c| &c.records) {
        let idx = model.task_index(&r.task)?;
        let n = model.tasks()[idx].num_classes();
        if r.label >= n {
            return Err(Error::Config(format!("task `{}` label {} is out of range for {n} classes", r.task, r.label)));
        }
    }
    Ok(())
}

/// Loss and per-parameter gradient of one example, with the loss scaled by `scale`.
/// Named parameter gradients of one example.
type Grads = Vec<(String, Vec<f64>)>;

fn example_gradient(
    model: &AclmmModel,
    record: &Record,
    head: usize,
    scale: f64,
    freeze_embeddings: bool,
) -> Result<(f64, Grads)> {
    let (ids, real) = model.encode(&record.text);
    let mut tape = Tape::with_store(model.store());
    if freeze_embeddings {
        tape.freeze(EMBEDDING);
    }
    let g = model.graph(&mut tape, &ids, real, head)?;
    let loss = tape.softmax_cross_entropy(g.logits, record.label)?;
    let value = tape.scalar(loss);
    let scaled = tape.scale(loss, scale)?;
    tape.backward(scaled)?;
    Ok((value, tape.param_grads()))
}

/// Mean loss over a batch; accumulates the batch-mean gradient into the model store.
fn accumulate_batch(model: &mut AclmmModel, batch: &[&Record], head: usize, freeze: bool) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let per_example: Vec<(f64, Grads)> = batch
        .par_iter()
        .map(|r| example_gradient(model, r, head, scale, freeze))
        .collect::<Result<_>>()?;
    let store = model.store_mut();
    let mut total = 0.0;
    // summed in batch order so the result does not depend on thread scheduling
    for (loss, grads) in per_example {
        total += loss;
        for (name, g) in grads {
            store.get_mut(&name)?.accumulate_grad(&g)?;
        }
    }
    Ok(total)
}

struct TaskCursor<'a> {
    task: String,
    head: usize,
    records: Vec<&'a Record>,
    order: Vec<usize>,
    pos: usize,
}

impl<'a> TaskCursor<'a> {
    fn next_batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Record> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size.min(self.records.len()) {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            batch.push(self.records[self.order[self.pos]]);
            self.pos += 1;
        }
        batch
    }
}

/// Trains the shared trunk and task heads. Each step draws one batch from a
/// single task and updates the trunk plus that task's head only; an epoch
/// covers the largest task's training split once.
pub fn train_multitask(model: &mut AclmmModel, corpora: &[LabeledCorpus], cfg: &TrainConfig) -> Result<TrainLog> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }
    check_records(model, corpora)?;
    let mut cursors: Vec<TaskCursor<'_>> = Vec::new();
    let mut dev: BTreeMap<usize, Vec<&Record>> = BTreeMap::new();
    for (head, spec) in model.tasks().iter().enumerate() {
        let train: Vec<&Record> =
            corpora.iter().flat_map(|c| c.select(&spec.id, Split::Train)).collect();
        let dev_records: Vec<&Record> = corpora.iter().flat_map(|c| c.select(&spec.id, Split::Dev)).collect();
        if !dev_records.is_empty() {
            dev.insert(head, dev_records);
        }
        if !train.is_empty() {
            let order = (0..train.len()).collect();
            cursors.push(TaskCursor { task: spec.id.clone(), head, pos: train.len(), records: train, order });
        }
    }
    if cursors.is_empty() {
        return Err(Error::EmptyCorpus("no training records for any registered task".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate)?;
    let largest = cursors.iter().map(|c| c.records.len()).max().unwrap_or(0);
    let cycles = largest.div_ceil(cfg.batch_size);
    let sizes: Vec<f64> = cursors.iter().map(|c| c.records.len() as f64).collect();
    let total_size: f64 = sizes.iter().sum();

    let mut trunk = model.trunk_param_names();
    if cfg.freeze_embeddings {
        trunk.retain(|n| n != EMBEDDING);
    }
    let head_names: Vec<Vec<String>> =
        cursors.iter().map(|c| model.head_param_names(&c.task)).collect::<Result<_>>()?;

    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let mut losses = vec![(0.0, 0usize); cursors.len()];
        let plan: Vec<usize> = match cfg.schedule {
            Schedule::RoundRobin => (0..cycles).flat_map(|_| 0..cursors.len()).collect(),
            Schedule::Proportional => (0..cycles * cursors.len())
                .map(|_| {
                    let mut u = rng.random::<f64>() * total_size;
                    sizes
                        .iter()
                        .position(|s| {
                            u -= s;
                            u < 0.0
                        })
                        .unwrap_or(sizes.len() - 1)
                })
                .collect(),
        };
        for ti in plan {
            let batch = cursors[ti].next_batch(cfg.batch_size, &mut rng);
            let head = cursors[ti].head;
            model.store_mut().zero_grads();
            let loss = accumulate_batch(model, &batch, head, cfg.freeze_embeddings)?;
            let mut names = trunk.clone();
            names.extend(head_names[ti].iter().cloned());
            opt.step(model.store_mut(), &names)?;
            model.store_mut().zero_grads();
            losses[ti].0 += loss;
            losses[ti].1 += batch.len();
        }

        let mut tasks = Vec::with_capacity(cursors.len());
        for (ci, c) in cursors.iter().enumerate() {
            let (dev_loss, dev_accuracy) = match dev.get(&c.head) {
                Some(records) => {
                    let ev = evaluate(model, records, &c.task)?;
                    (Some(ev.loss), Some(ev.accuracy))
                }
                None => (None, None),
            };
            let (sum, n) = losses[ci];
            tasks.push(TaskEpoch {
                task: c.task.clone(),
                train_loss: if n > 0 { sum / n as f64 } else { f64::NAN },
                train_examples: n,
                dev_loss,
                dev_accuracy,
            });
        }
        log.epochs.push(EpochLog { epoch: epoch + 1, tasks });
    }
    Ok(log)
}

/// Probability vector and loss of a single labeled text (for tests and diagnostics).
pub fn example_loss(model: &AclmmModel, text: &str, task: &str, label: usize) -> Result<f64> {
    let p = model.forward(text, task)?;
    cross_entropy(&p.probs, label)
}
