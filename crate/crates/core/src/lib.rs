//! Federated household load forecasting on top of non-intrusive load
//! monitoring.
//!
//! The crate is `no_std` compatible (it needs `alloc`). Everything here is a
//! pure function of its inputs: dense `f64` tensor math, hand-written forward
//! and backward passes for the layers, the BiLSTM-Attention forecaster and
//! the CNN-LSTM disaggregator, a simulated FedAvg orchestrator, the data
//! pipeline (channel parsing, alignment, normalization, windowing, synthetic
//! households) and the evaluation harness.
//!
//! File IO, configuration files and the command line live in the `fedload`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod federated;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ParamTree, Tensor};
