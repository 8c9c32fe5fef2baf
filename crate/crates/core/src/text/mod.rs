//! Tokenizer and the compact encoder-decoder story model.

mod config;
pub mod generate;
mod layers;
mod model;
mod stopwords;
pub mod vocab;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use config::ModelConfig;
pub use generate::{generate_comment, DecodeConfig, DecodeStrategy};
pub use layers::Dropout;
pub(crate) use layers::{Encoder, Linear};
pub use model::{Encoded, EncoderOutput, HeadOutputs, NllStats, StoryModel};
pub use stopwords::{is_stopword, STOPWORDS};
pub use vocab::Vocabulary;

/// Everything the evaluator says about one story.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub story_id: String,
    /// Preference score in (0, 1).
    pub p_s: f64,
    /// Aspect confidences; sum to one.
    pub a_c: Vec<f64>,
    /// Aspect ratings, each in (0, 1).
    pub a_r: Vec<f64>,
    /// Generated comment per aspect index.
    pub comments: BTreeMap<usize, String>,
}
