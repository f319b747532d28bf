//! Impedance-primitive hierarchical reinforcement learning on desk-scale
//! contact tasks.
//!
//! The crate couples a lumped-mass impedance-controlled end-effector
//! simulator with a library of stiffness-parameterized behavior primitives,
//! an adaptive stiffness controller, affordance-coupled reward shaping, and a
//! hybrid discrete/continuous soft actor-critic trainer, plus the evaluation
//! metrics and a batch CLI.

pub mod affordance;
pub mod config;
pub mod controller;
pub mod envs;
pub mod metrics;
pub mod primitives;
pub mod rl;
pub mod sim;
