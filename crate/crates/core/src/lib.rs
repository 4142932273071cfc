//! Value functions, optimal policies and trajectories for infinite- and
//! finite-horizon hybrid control problems with autonomous and controlled
//! jumps.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod expr;
pub mod finite;
pub mod fixtures;
pub mod geometry;
pub mod grid;
pub mod model;
pub mod operators;
pub mod policy;
pub mod scalar;
pub mod stationary;
pub mod trajectory;
pub mod validate;
pub mod verification;

pub use error::{Error, Result};
pub use grid::{Grid, GridSpec, ValueField};
pub use model::{ChartId, HybridModel, HybridState};
pub use policy::Policy;
pub use scalar::Scalar;

pub type ModelF64 = HybridModel<f64>;
pub type ModelF32 = HybridModel<f32>;
pub type StateF64 = HybridState<f64>;
pub type StateF32 = HybridState<f32>;
pub type GridF64 = Grid<f64>;
pub type GridF32 = Grid<f32>;
pub type ValueFieldF64 = ValueField<f64>;
pub type ValueFieldF32 = ValueField<f32>;
pub type PolicyF64 = Policy<f64>;
pub type PolicyF32 = Policy<f32>;
pub type TrajectoryF64 = trajectory::TrajectoryRecord<f64>;
pub type TrajectoryF32 = trajectory::TrajectoryRecord<f32>;
