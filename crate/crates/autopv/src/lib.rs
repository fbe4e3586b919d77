//! AutoPV: neural architecture search for photovoltaic power forecasting.
//!
//! The library is organized around the search pipeline: `dataset` prepares
//! hourly PV/weather frames and sliding windows, `autodiff` provides the
//! differentiable compute core, `blocks` implements the selectable modules,
//! `search_space` defines genotypes and assembles them into trainable models,
//! `evaluator` trains and scores candidates, and `searcher` runs the
//! multi-objective Bayesian search over (validation MAE, parameter count).

pub mod autodiff;
pub mod blocks;
pub mod config;
pub mod dataset;
pub mod evaluator;
pub mod report;
pub mod runner;
pub mod search_space;
pub mod searcher;
pub mod synth;
