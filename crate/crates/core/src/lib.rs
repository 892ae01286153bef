//! Lossless bilevel-image compression with a sequential pixel predictor.
//!
//! The crate is organised bottom-up:
//! - [`dataset`] reads MNIST/USPS and binarizes them;
//! - [`model`] evaluates the autoregressive predictor;
//! - [`trainer`] fits it by stochastic gradient descent;
//! - [`coder`] is the binary arithmetic coder;
//! - [`baselines`] holds the non-neural reference coders;
//! - [`codec`] ties predictors to the coder and produces benchmark tables.

pub mod baselines;
pub mod codec;
pub mod coder;
pub mod dataset;
pub mod model;
pub mod trainer;
pub mod wire;
