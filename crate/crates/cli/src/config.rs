//! Pipeline configuration: a TOML file layered over defaults, then
//! `key.path=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sentipanel_core::{OptimizerKind, Schedule};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Directory receiving every artifact.
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub embedding: EmbeddingSection,
    pub model: ModelSection,
    pub tasks: Vec<TaskSection>,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub classify: ClassifySection,
    pub regression: RegressionSection,
    pub demo: DemoSection,
}

/// Input locations. Unset inputs that an earlier stage produces default to
/// that stage's artifact in `out_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Labeled corpora (`text`, `task`, `label`, `split` TSV).
    pub corpora: Vec<PathBuf>,
    /// Extra unlabeled texts for embedding training, one per line.
    pub texts: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Posts to classify (`city`, `date`, `text` TSV).
    pub posts: Option<PathBuf>,
    pub classified: Option<PathBuf>,
    /// City-day covariates CSV used by `aggregate`.
    pub covariates: Option<PathBuf>,
    pub panel: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self { dim: 200, window: 2, negatives: 5, epochs: 5, learning_rate: 0.05, min_count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kernel_size: usize,
    pub channels: usize,
    pub max_len: usize,
    pub fixed_length: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { kernel_size: 3, channels: 64, max_len: 140, fixed_length: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub id: String,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub freeze_embeddings: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            schedule: Schedule::RoundRobin,
            freeze_embeddings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Split scored by `eval`: train, dev or test.
    pub split: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { split: "test".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    /// Binary task separating pandemic posts from the rest.
    pub identify_task: String,
    /// Class of `identify_task` that marks a pandemic post.
    pub pandemic_class: String,
    /// Task whose class names are emotion names.
    pub emotion_task: String,
}

impl Default for ClassifySection {
    fn default() -> Self {
        Self { identify_task: "identify".into(), pandemic_class: "pandemic".into(), emotion_task: "emotion".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSection {
    pub dependents: Vec<String>,
    pub alpha: f64,
    /// Covariance used when heteroskedasticity or serial correlation is detected: hc0 or hc1.
    pub robust: String,
    pub baseline: Option<String>,
    pub trend: bool,
}

impl Default for RegressionSection {
    fn default() -> Self {
        Self {
            dependents: ["fear", "confidence", "attention", "netout"].map(String::from).to_vec(),
            alpha: 0.05,
            robust: "hc1".into(),
            baseline: None,
            trend: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSection {
    pub cities: usize,
    pub days: usize,
    /// Posts generated per city-day for the classification stage.
    pub posts_per_day: u64,
    pub identify_train: usize,
    pub identify_eval: usize,
    /// Per emotion class.
    pub emotion_train: usize,
    pub emotion_eval: usize,
}

impl Default for DemoSection {
    fn default() -> Self {
        Self {
            cities: 10,
            days: 31,
            posts_per_day: 40,
            identify_train: 400,
            identify_eval: 100,
            emotion_train: 40,
            emotion_eval: 20,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            paths: Paths::default(),
            embedding: EmbeddingSection::default(),
            model: ModelSection::default(),
            tasks: Vec::new(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            classify: ClassifySection::default(),
            regression: RegressionSection::default(),
            demo: DemoSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Desk-scale settings for the synthetic end-to-end run.
    pub fn demo_defaults() -> Self {
        Self {
            embedding: EmbeddingSection { dim: 32, epochs: 3, ..EmbeddingSection::default() },
            model: ModelSection { channels: 16, max_len: 32, ..ModelSection::default() },
            train: TrainSection { epochs: 20, batch_size: 16, learning_rate: 3e-3, ..TrainSection::default() },
            ..Self::default()
        }
    }

    /// Makes relative input paths relative to `base` (the config file's directory).
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        self.paths.corpora.iter_mut().for_each(fix);
        for p in [
            &mut self.paths.texts,
            &mut self.paths.embeddings,
            &mut self.paths.checkpoint,
            &mut self.paths.posts,
            &mut self.paths.classified,
            &mut self.paths.covariates,
            &mut self.paths.panel,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a string when it is not one.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("override `{key}`: `{part}` is not a section"))),
        };
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Loads `path` (if any) over `base`, applies overrides, and resolves relative
/// paths against the config file's directory (or the working directory).
pub fn load(path: Option<&Path>, overrides: &[String], base: PipelineConfig) -> Result<PipelineConfig, CliError> {
    let mut table = toml::Table::try_from(&base).map_err(|e| CliError::Config(e.to_string()))?;
    let mut dir = PathBuf::from(".");
    if let Some(p) = path {
        let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        let file: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", p.display(), e.message())))?;
        merge(&mut table, file);
        if let Some(parent) = p.parent() {
            dir = parent.to_path_buf();
        }
    }
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: PipelineConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    cfg.resolve(&dir);
    Ok(cfg)
}
