//! Preference-aware story evaluation.
//!
//! A compact sliding-window encoder-decoder learns a story preference score
//! from upvote-ranked pairs, predicts which aspects a reader would comment
//! on and how they would rate each one, and writes a short comment per
//! aspect. The crate also carries the dataset pipeline that produces the
//! ranked pairs and aspect annotations, and the metrics used to evaluate
//! the result.
//!
//! Runnable walkthroughs live in `examples/`; the `storyer` binary exposes
//! the same pipeline from the command line.

pub mod aspects;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod objectives;
pub mod rng;
pub mod text;
pub mod train;

pub use error::{Error, Result};
