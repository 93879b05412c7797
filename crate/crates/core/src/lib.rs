//! Data valuation with a one-step PPO agent over a transformer-encoder
//! policy, plus Leave-One-Out, Monte-Carlo Shapley and REINFORCE baselines,
//! a label-noise harness and evaluation utilities.

pub mod agent;
pub mod autodiff;
pub mod baselines;
pub mod data;
pub mod env;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod experiment;
pub mod matrix;
pub mod nn;
pub mod par;
pub mod valuation;

pub use error::{Error, Result};
