//! Numeric core for continual and gradual test-time adaptation.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that does
//! not touch the file system: a small network with hand-written
//! backpropagation, the self-training and contrastive losses, the mean-teacher
//! pair, source prototypes, synthetic domain-shift streams, the adaptation
//! methods and the benchmark loop. File formats and the command line live in
//! the `ttalab` crate.

#![no_std]

extern crate alloc;

mod error;

pub mod adapters;
pub mod bench;
pub mod losses;
pub mod meanteacher;
pub mod netcore;
pub mod prototypes;
pub mod rng;
pub mod streams;

pub use error::{Error, Result};
