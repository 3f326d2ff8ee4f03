//! Optimistic actor-critic for low-rank MDPs.
//!
//! The crate bundles:
//!
//! * [`mdp`]: tabular low-rank MDPs, exact dynamic programming, distances.
//! * [`envgen`]: seeded synthetic environments, finite model classes and
//!   misspecified variants.
//! * [`oracles`]: a ridge least-squares supervised-learning oracle and the
//!   policy-evaluation, fitted-Q planning and constrained-planning reductions
//!   built on it, with per-run call accounting.
//! * [`optac`]: the optimistic actor-critic loop (exploratory roll-ins, MLE
//!   model selection, elliptical bonus, exact or regression critic,
//!   exponentiated-gradient actor).
//! * [`crff`]: conditional random Fourier features for approximate low-rank
//!   factorization of conditional densities.
//! * [`lemmalab`]: executable checks of the inequalities the analysis relies on.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crff;
pub mod envgen;
pub mod lemmalab;
pub mod linalg;
pub mod mdp;
pub mod optac;
pub mod oracles;
pub mod rng;
pub mod stats;
