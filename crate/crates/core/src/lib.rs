//! Speech-to-bias-word retrieval for contextual speech recognition.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithm of the
//! pipeline: pronunciation lexicon and homophone sets, seeded synthetic
//! corpora, the dual encoders with average and attention pooling, the
//! contrastive objective with a homophone curriculum and hand-written
//! gradients, an exact inner-product index, and the evaluation metrics.
//! File formats, the CLI and benchmarking live in the `biasret` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod contrastive;
pub mod db;
pub mod encoder;
mod error;
pub mod index;
pub mod lexicon;
pub mod math;
pub mod metrics;
pub mod rng;
pub mod synth;

pub use crate::db::{BiasDatabase, BiasEntry, WordId};
pub use crate::error::{Error, Result};
