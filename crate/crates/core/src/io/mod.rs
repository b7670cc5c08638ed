// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tensor files and manifests.

pub mod manifest;
pub mod npy;

pub use manifest::{Manifest, Record};
pub use npy::{load_tensor, save_tensor};
