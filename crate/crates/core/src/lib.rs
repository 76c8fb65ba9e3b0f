//! Learning-to-rank core for multimodal review helpfulness.
//!
//! The crate is `no_std` with `alloc`. It contains the dense matrix kernel
//! and its reverse-mode tape, the synthetic corpus generator, the coherence
//! encoder with listwise attention, the soft decision tree regressor, the
//! listwise and pairwise objectives with ranking metrics, the training loop,
//! and numerical checks of the loss-function properties behind the
//! listwise-vs-pairwise generalization argument. File formats and the
//! command-line driver live in the `helprank` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod certify;
pub mod data;
pub mod encoder;
pub mod error;
pub mod kernel;
pub mod model;
pub mod objectives;
pub mod regressor;
pub mod theoria;
pub mod trainer;

pub use error::{Error, Result};
