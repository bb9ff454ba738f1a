//! Multi-view consensus group recommendation: interaction data handling,
//! view construction, a small reverse-mode tensor engine, the model, BPR
//! training and ranked top-K evaluation.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod views;

pub use data::{Entity, EvalQuery, Format, InteractionDataset, SplitDataset, Task};
pub use error::{Error, Result};
pub use eval::MetricsReport;
pub use model::{ConsensusModel, ForwardOutputs, ModelParams, ViewMask};
pub use train::{train, TrainConfig};
