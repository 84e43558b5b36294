//! Non-symmetric Physarum dynamics for the uncapacitated transshipment
//! (minimum-cost flow) problem on directed graphs.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` and `f32` instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod graph;
pub mod harmonic;
pub mod instance;
pub mod kirchhoff;
pub mod oracle;
pub mod report;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Digraph64 = graph::Digraph<f64>;
pub type SourceVector64 = graph::SourceVector<f64>;
pub type ArcVector64 = graph::ArcVector<f64>;
pub type SolverConfig64 = dynamics::SolverConfig<f64>;
pub type RunResult64 = dynamics::RunResult<f64>;
pub type InstanceFile64 = instance::InstanceFile<f64>;

pub type Digraph32 = graph::Digraph<f32>;
pub type SourceVector32 = graph::SourceVector<f32>;
pub type ArcVector32 = graph::ArcVector<f32>;
pub type SolverConfig32 = dynamics::SolverConfig<f32>;
pub type RunResult32 = dynamics::RunResult<f32>;
pub type InstanceFile32 = instance::InstanceFile<f32>;
