//! Core algorithms for residential water-lead risk modeling.
//!
//! Everything in this crate is allocation-only and IO-free: record types and
//! address normalization, the parcel merge and feature encoding, a
//! second-order gradient-boosted tree learner, discrete AdaBoost, sigmoid
//! calibration, evaluation drivers, inverse-propensity weighted quantiles and
//! a synthetic city generator. File formats and the command-line pipeline
//! live in the `aquarisk` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adaboost;
pub mod address;
pub mod calibrate;
pub mod encode;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod gbt;
pub mod math;
pub mod merge;
pub mod model;
pub mod quantile;
pub mod records;
pub mod risk;
pub mod rng;
pub mod split;
pub mod synth;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
