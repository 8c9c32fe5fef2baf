//! Reader comments with their aspect and rating labels.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommentSource {
    Crowd,
    Augmented,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub story_id: String,
    pub aspect: Option<usize>,
    /// Normalized to [0, 1].
    pub rating: Option<f64>,
    pub text: String,
    pub source: CommentSource,
}

impl CommentRecord {
    pub fn validate(&self, num_aspects: usize) -> Result<()> {
        if self.source == CommentSource::Crowd && (self.aspect.is_none() || self.rating.is_none()) {
            return Err(Error::data(format!(
                "crowd comment on {} lacks an aspect or rating",
                self.story_id
            )));
        }
        if let Some(a) = self.aspect.filter(|&a| a >= num_aspects) {
            return Err(Error::data(format!("aspect {a} out of range")));
        }
        if let Some(r) = self.rating.filter(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::data(format!("rating {r} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Maps a 1-5 rating to {0, 0.25, 0.5, 0.75, 1}.
pub fn rating_from_class(class: u8) -> Result<f64> {
    if !(1..=5).contains(&class) {
        return Err(Error::data(format!("rating class {class} outside 1..=5")));
    }
    Ok(f64::from(class - 1) / 4.0)
}

/// Inverse of [`rating_from_class`], rounding to the nearest class.
pub fn class_from_rating(rating: f64) -> u8 {
    (rating.clamp(0.0, 1.0) * 4.0).round() as u8 + 1
}

/// Sentiment group of a 1-5 class: negative (1, 2), neutral (3) or
/// positive (4, 5).
pub fn sentiment_group(class: u8) -> u8 {
    match class {
        0..=2 => 0,
        3 => 1,
        _ => 2,
    }
}

/// An unlabeled comment waiting for augmentation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComment {
    pub story_id: String,
    pub text: String,
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rating_map_is_affine_and_invertible() {
        let r: Vec<f64> = (1..=5).map(|c| rating_from_class(c).unwrap()).collect();
        assert_eq!(r, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        for c in 1..=5 {
            assert_eq!(class_from_rating(rating_from_class(c).unwrap()), c);
        }
        assert!(rating_from_class(0).is_err());
        assert!(rating_from_class(6).is_err());
    }

    #[test]
    fn groups() {
        let g: Vec<u8> = (1..=5).map(sentiment_group).collect();
        assert_eq!(g, vec![0, 0, 1, 2, 2]);
    }

    #[test]
    fn crowd_records_need_labels() {
        let mut r = CommentRecord {
            story_id: "s".into(),
            aspect: Some(2),
            rating: Some(0.5),
            text: "x".into(),
            source: CommentSource::Crowd,
        };
        r.validate(10).unwrap();
        r.rating = None;
        assert!(r.validate(10).is_err());
        r.source = CommentSource::Augmented;
        r.validate(10).unwrap();
        r.aspect = Some(10);
        assert!(r.validate(10).is_err());
    }
}
