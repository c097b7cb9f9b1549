//! Desk-scale symmetric joint training on a synthetic expression manifold.

pub mod eval;
pub mod linalg;
pub mod net;
pub mod optim;
pub mod train;
pub mod world;

pub use eval::{evaluate_synthetic, EvalSettings, Generator, NetGenerator, OracleGenerator, SourceOracleGenerator, SyntheticEval};
pub use net::{one_step_generate, VelocityNet};
pub use optim::{Adam, AdamConfig};
pub use train::{
    objective, objective_with_grad, sample_batch, train, CurveRow, LossBreakdown, Objective, SymmetricBatch,
    TrainConfig, TrainError, TrainMode, TrainedModel, Trainer,
};
pub use world::{generate_world, FrozenEncoders, SyntheticWorldConfig, World};
