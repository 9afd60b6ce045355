//! Recurrent cell architecture search with weighted networks.
//!
//! A pool of randomly generated recurrent-cell genomes is searched in
//! network batches. Every batch, together with the best cells carried over
//! from earlier batches, is trained jointly as a softmax-weighted mixture;
//! the learned mixture weights rank the cells.
//!
//! * [`autodiff`]: tensors, reverse-mode graph, optimizers.
//! * [`cellspace`]: genomes, random generation, serialization.
//! * [`model`]: the cell equations and the language model around them.
//! * [`wenet`]: the weighted mixture and its joint training.
//! * [`search`]: pool partitioning, rounds and seed carry-over.
//! * [`lmdata`]: corpora, batching, perplexity.
//! * [`train`]: training one discovered cell from scratch.

pub mod autodiff;
pub mod cellspace;
#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod lmdata;
pub mod model;
mod par;
pub mod rngs;
pub mod search;
pub mod train;
pub mod wenet;


pub use error::{Error, Result};
