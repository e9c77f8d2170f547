//! Learnable physics engine for pushed groups of articulated discs.
//!
//! Two propagation networks share one scene representation: a physics
//! predictor that forecasts object velocities under a scripted pusher, and a
//! temporal (recurrent) network that infers the hidden joint type of every
//! object pair from the interaction history. A deterministic 2D constraint
//! simulator produces the ground-truth data both networks are trained on.
//!
//! Module map:
//! - [`numerics`]: dense tensors, MLPs, LSTM cell, Adam, plateau decay.
//! - [`scene`]: objects, joints, relation graphs and feature layouts.
//! - [`sim`]: sequential-impulse simulator, scene and push generators.
//! - [`predictor`]: encode / propagate / decode, single step and rollout.
//! - [`belief`]: recurrent relation inference and the regulated rollout.
//! - [`training`]: training loops and validation-based model selection.
//! - [`harness`]: baselines, metrics, persistence, experiments, plots.

pub mod belief;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod numerics;
pub mod predictor;
pub mod scene;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
pub use geometry::Vec2;
