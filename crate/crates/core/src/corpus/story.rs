//! Raw story records and their JSONL reader.

use std::io::BufRead;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the raw metadata file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub prompt_id: String,
    #[serde(default)]
    pub prompt: String,
    pub text: String,
    pub upvotes: i64,
    pub created_at: String,
    #[serde(default)]
    pub comments: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Story {
    pub id: String,
    pub prompt_id: String,
    pub prompt: String,
    pub text: String,
    pub upvotes: i64,
    pub created_at: NaiveDate,
    pub word_count: usize,
    pub comments: Vec<String>,
}

/// Whitespace-separated token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

impl TryFrom<RawRecord> for Story {
    type Error = String;

    fn try_from(r: RawRecord) -> std::result::Result<Self, String> {
        if r.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if r.prompt_id.trim().is_empty() {
            return Err("empty prompt_id".into());
        }
        let created_at = NaiveDate::parse_from_str(&r.created_at, "%Y-%m-%d")
            .map_err(|e| format!("invalid created_at {:?}: {e}", r.created_at))?;
        Ok(Story {
            word_count: word_count(&r.text),
            id: r.id,
            prompt_id: r.prompt_id,
            prompt: r.prompt,
            text: r.text,
            upvotes: r.upvotes,
            created_at,
            comments: r.comments,
        })
    }
}

/// A record that could not be used, with the reason.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the input file.
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub reason: String,
}

/// Parses JSONL story records; malformed lines become rejects instead of
/// failing the whole read. Blank lines are ignored.
pub fn parse_stories(reader: impl BufRead) -> Result<(Vec<Story>, Vec<Reject>)> {
    let mut stories = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                rejects.push(Reject {
                    line: i + 1,
                    id: None,
                    reason: format!("invalid json: {e}"),
                });
                continue;
            }
        };
        let id = value.get("id").and_then(|v| v.as_str()).map(str::to_string);
        let parsed = serde_json::from_value::<RawRecord>(value)
            .map_err(|e| format!("malformed record: {e}"))
            .and_then(Story::try_from);
        match parsed {
            Ok(s) => stories.push(s),
            Err(reason) => rejects.push(Reject {
                line: i + 1,
                id,
                reason,
            }),
        }
    }
    Ok((stories, rejects))
}

pub fn read_stories(path: &Path) -> Result<(Vec<Story>, Vec<Reject>)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_stories(std::io::BufReader::new(f))
}
