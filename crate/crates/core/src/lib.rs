//! Equilibrium price formation in a securities market with one major trader
//! and N minor traders, solved exactly on discrete common-noise lattices.
//!
//! The crate assembles the coupled forward-backward systems of the finite
//! market and of its mean-field limit, solves them with a direct sparse solve
//! or damped Picard iteration, and provides the metrics and cost functionals
//! used to check market clearing, optimality and convergence.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::large_enum_variant, clippy::type_complexity)]

pub mod benchmarks;
pub mod cli;
pub mod error;
pub mod fbsde;
pub mod finite_market;
pub mod linalg;
pub mod mean_field;
pub mod metrics;
pub mod model;
pub mod optimality;
pub mod output;
pub mod scenario;

pub use error::{Error, Result};
