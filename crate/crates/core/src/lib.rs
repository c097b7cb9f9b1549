//! Benchmark metrics and a desk-scale reference trainer for continuous,
//! disentangled facial-expression editing.
//!
//! - [`affect`]: expression taxonomy, affect vectors, confusing-pair registry
//! - [`metrics`]: structural confusion, accuracy, identity similarity, HES, control linearity
//! - [`interp`]: residual directions, intensity interpolation/extrapolation, blends
//! - [`losses`]: flow matching, triplet variants, symmetric contrastive, identity, total objective
//! - [`trainer`]: synthetic expression manifold, velocity net, symmetric joint training, evaluation
//! - [`data`]: annotation/prediction ingestion, quality filtering, triplet manifests
//! - [`config`] and [`cli`]: run configuration and the command-line front end

pub mod affect;
pub mod cli;
pub mod config;
pub mod data;
pub mod interp;
pub mod losses;
pub mod metrics;
pub mod tensorfile;
pub mod trainer;

pub use affect::{AffectVector, ConfusingPairRegistry, ExpressionId, ExpressionPair};
pub use interp::{AlphaRange, Direction, Embedding};
pub use metrics::{EvalRecord, MetricReport};
