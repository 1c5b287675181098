//! Character-level multitask sentiment classification on a small
//! reverse-mode autodiff engine.

pub mod checkpoint;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tape;
pub mod tensor;
pub mod train;

pub use embedding::{build_vocab, train_cbow, CbowConfig, EmbeddingMatrix, Vocabulary};
pub use error::{Error, Result};
pub use metrics::{confusion, metrics, ConfusionMatrix, Metrics};
pub use model::{build_model, AclmmModel, ModelConfig, Prediction, TaskSpec};
pub use optim::{OptimizerKind, OptimizerState};
pub use tape::{Tape, Var};
pub use tensor::{DenseTensor, ParameterStore};
pub use train::{train_multitask, LabeledCorpus, Record, Schedule, Split, TrainConfig, TrainLog};
