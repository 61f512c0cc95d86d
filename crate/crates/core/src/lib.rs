//! Item-based collaborative filtering with item- and feature-level attention.
//!
//! Models: FISM, NAIS, FLA_NAIS, DeepICF and FLA_DICF, trained with a
//! pointwise log loss and Adagrad, evaluated by full-ranking HR@n / NDCG@n.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod params;
pub mod predict;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{AttentionMode, Design, ModelConfig, ModelKind, TrainConfig};
pub use data::{InteractionDataset, SplitDataset, SplitPart};
pub use error::{Error, Result};
pub use eval::{evaluate, BaselineKind, MetricsRecord, Scorer};
pub use params::{init_parameters, Matrix, ParameterSet, Pretrained};
pub use predict::{forward, predict, PredictionContext};
