// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tools for analyzing and inducing compositional structure in sentence
//! representations.

pub mod attnflow;
pub mod autodiff;
pub mod cacr;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod optim;
pub mod pooling;
pub mod ptb;
pub mod rng;
pub mod synnamon;
pub mod tensor;
pub mod tracing;

pub use error::{Error, ErrorClass, Result};
pub use tensor::Tensor;
