//! Neural networks with Boolean weights and activations, trained directly in
//! the Boolean domain by logic backpropagation and weight flipping.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod layers;
pub mod logic;
pub mod model;
pub mod optimizer;
pub mod reference;
pub mod tensor;
pub mod train;
pub mod variation;

pub use error::{Error, Result};
