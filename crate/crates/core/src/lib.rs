//! Neural probabilistic dependency parsing with Matrix-Tree inference.

pub mod checkpoint;
pub mod crf;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod model;
pub mod numerics;
pub mod params;
pub mod scorer;
pub mod trainer;
pub mod tree;

pub use checkpoint::Checkpoint;
pub use crf::{EdgeScores, MarginalTable};
pub use decoder::CollapsedScores;
pub use error::{Error, Result};
pub use model::{ModelParams, Parser};
pub use numerics::Matrix;
pub use trainer::{Ablation, Objective, TrainConfig, Trainer};
pub use tree::DependencyTree;
