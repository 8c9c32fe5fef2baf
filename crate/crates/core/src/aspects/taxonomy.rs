//! The ordered aspect list and the operator-edited topic mapping.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aspect {
    pub index: usize,
    pub name: String,
    pub group: String,
}

/// Aspect categories in head order. The order is persisted with every
/// model because head dimensions depend on it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AspectTaxonomy {
    aspects: Vec<Aspect>,
}

const DEFAULT: [(&str, &str); 10] = [
    ("opening/beginning", "structure"),
    ("middle/twist/flow/conflict", "structure"),
    ("ending", "structure"),
    ("character shaping", "writing style"),
    ("scene description", "writing style"),
    ("heartwarming/touching", "type"),
    ("sad/crying/tragedy", "type"),
    ("horror/scary", "type"),
    ("funny/hilarious/laugh", "type"),
    ("novelty/good idea/brilliant", "type"),
];

impl Default for AspectTaxonomy {
    fn default() -> Self {
        Self {
            aspects: DEFAULT
                .iter()
                .enumerate()
                .map(|(index, (name, group))| Aspect {
                    index,
                    name: name.to_string(),
                    group: group.to_string(),
                })
                .collect(),
        }
    }
}

impl AspectTaxonomy {
    pub fn new(aspects: Vec<Aspect>) -> Result<Self> {
        let t = Self { aspects };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.aspects.is_empty() {
            return Err(Error::config("taxonomy has no aspects"));
        }
        let mut names = HashSet::new();
        for (i, a) in self.aspects.iter().enumerate() {
            if a.index != i {
                return Err(Error::config(format!(
                    "aspect {:?} has index {}, expected {i}",
                    a.name, a.index
                )));
            }
            if !names.insert(a.name.as_str()) {
                return Err(Error::config(format!("duplicate aspect name {:?}", a.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.aspects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty()
    }

    pub fn aspects(&self) -> &[Aspect] {
        &self.aspects
    }

    pub fn name(&self, k: usize) -> Option<&str> {
        self.aspects.get(k).map(|a| a.name.as_str())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: Self = serde_json::from_str(&text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// One discovered topic, its top words, and the aspect an operator assigned
/// to it (`None` until reviewed, or to discard the topic).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub topic: usize,
    pub top_words: Vec<String>,
    pub aspect: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicMapping {
    pub num_topics: usize,
    pub coherence: f64,
    pub topics: Vec<TopicEntry>,
}

impl TopicMapping {
    /// Checks every assigned aspect exists in `taxonomy`.
    pub fn validate(&self, taxonomy: &AspectTaxonomy) -> Result<()> {
        for t in &self.topics {
            if let Some(a) = t.aspect.filter(|&a| a >= taxonomy.len()) {
                return Err(Error::config(format!(
                    "topic {} maps to unknown aspect {a}",
                    t.topic
                )));
            }
        }
        Ok(())
    }
}
