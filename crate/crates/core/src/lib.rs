//! Derivative formulae, Girsanov weights and Harnack inequalities for linear
//! SDEs driven by pure-jump Lévy noise, with Monte Carlo, quadrature and
//! finite-state verification tools.

pub mod bounds;
pub mod config;
pub mod error;
pub mod estimate;
pub mod finite_markov;
pub mod flow;
pub mod harnack_lab;
pub mod levy_model;
pub mod mecke_girsanov;
pub mod pathsim;
pub mod quadrature;
pub mod runner;
pub mod testfn;

pub use error::{Error, Result};
