//! Attention-based encoder-decoder constituency parsing of conversational
//! speech with word-level acoustic-prosodic inputs.
//!
//! The crate is `no_std` with `alloc`; file formats and the command-line
//! driver live in the `speechparse` crate.

#![no_std]
extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod prosody;
pub mod synth;
pub mod train;
pub mod tree;
pub mod treeops;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tree::Tree;
