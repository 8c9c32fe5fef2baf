//! Word-level vocabulary and tokenizer.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "<sep>";
pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

pub const CLS_ID: usize = 0;
pub const SEP_ID: usize = 1;
pub const PAD_ID: usize = 2;
pub const BOS_ID: usize = 3;
pub const EOS_ID: usize = 4;
pub const UNK_ID: usize = 5;
pub const FIRST_ASPECT_ID: usize = 6;
const FIXED_SPECIALS: [&str; 6] = [CLS, SEP, PAD, BOS, EOS, UNK];

pub fn aspect_token(k: usize) -> String {
    format!("<aspect_{k}>")
}

/// Lowercases and splits into word and punctuation tokens.
///
/// Words are runs of alphanumerics, optionally joined by an apostrophe
/// between two alphanumerics ("don't"). Every other non-space character is
/// its own token.
pub fn segment(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut out = Vec::new();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let joins =
            c == '\'' && !word.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || joins {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Bijective token/id table. Reserved tokens occupy the first ids:
/// `[CLS] <sep> <pad> <bos> <eos> <unk>` followed by one token per aspect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    num_aspects: usize,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, num_aspects: usize) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            index,
            num_aspects,
        })
    }

    fn reserved(num_aspects: usize) -> Vec<String> {
        FIXED_SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain((0..num_aspects).map(aspect_token))
            .collect()
    }

    /// Builds from a corpus: most frequent words first, ties broken
    /// alphabetically, capped at `max_size` total entries.
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        max_size: usize,
        num_aspects: usize,
    ) -> Result<Self> {
        let mut tokens = Self::reserved(num_aspects);
        if max_size < tokens.len() {
            return Err(Error::config(format!(
                "vocabulary size {max_size} is smaller than the {} reserved tokens",
                tokens.len()
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for w in segment(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let reserved: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, _)| !reserved.contains(w))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = max_size - tokens.len();
        tokens.extend(ranked.into_iter().take(room).map(|(w, _)| w));
        Self::from_tokens(tokens, num_aspects)
    }

    /// Vocabulary holding only the given words after the reserved block.
    pub fn from_words<S: AsRef<str>>(words: &[S], num_aspects: usize) -> Result<Self> {
        let mut tokens = Self::reserved(num_aspects);
        tokens.extend(words.iter().map(|w| w.as_ref().to_string()));
        Self::from_tokens(tokens, num_aspects)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_aspects(&self) -> usize {
        self.num_aspects
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn aspect_id(&self, k: usize) -> Result<usize> {
        if k >= self.num_aspects {
            return Err(Error::contract(format!(
                "aspect {k} out of range 0..{}",
                self.num_aspects
            )));
        }
        Ok(FIRST_ASPECT_ID + k)
    }

    pub fn is_special(&self, id: usize) -> bool {
        id < FIXED_SPECIALS.len() + self.num_aspects
    }

    /// Word ids without any special tokens.
    pub fn word_ids(&self, text: &str) -> Vec<usize> {
        segment(text)
            .iter()
            .map(|w| self.id(w).unwrap_or(UNK_ID))
            .collect()
    }

    /// `[CLS]` followed by word ids, truncated to `max_len`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Result<Vec<usize>> {
        let words = self.word_ids(text);
        if words.is_empty() {
            return Err(Error::EmptyInput("text has no tokens".into()));
        }
        let mut ids = Vec::with_capacity(max_len.min(words.len() + 1));
        ids.push(CLS_ID);
        ids.extend(words.into_iter().take(max_len.saturating_sub(1)));
        Ok(ids)
    }

    /// `<bos> words <eos>`, keeping at most `max_len` ids in total.
    pub fn comment_ids(&self, text: &str, max_len: usize) -> Result<Vec<usize>> {
        let words = self.word_ids(text);
        if words.is_empty() {
            return Err(Error::EmptyInput("comment has no tokens".into()));
        }
        let mut ids = vec![BOS_ID];
        ids.extend(words.into_iter().take(max_len.saturating_sub(2)));
        ids.push(EOS_ID);
        Ok(ids)
    }

    /// Space-joined tokens, skipping special ids.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| !self.is_special(i) || i == UNK_ID)
            .filter_map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for t in &self.tokens {
            writeln!(f, "{t}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path, num_aspects: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_lines(text.lines(), num_aspects)
    }

    pub fn from_lines<'a>(
        lines: impl IntoIterator<Item = &'a str>,
        num_aspects: usize,
    ) -> Result<Self> {
        let tokens: Vec<String> = lines.into_iter().map(str::to_string).collect();
        let reserved = Self::reserved(num_aspects);
        if tokens.len() < reserved.len() || tokens[..reserved.len()] != reserved[..] {
            return Err(Error::data(
                "vocabulary does not start with the reserved tokens",
            ));
        }
        Self::from_tokens(tokens, num_aspects)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_words_and_punctuation() {
        assert_eq!(segment("The cat."), vec!["the", "cat", "."]);
        assert_eq!(segment("Don't stop!"), vec!["don't", "stop", "!"]);
        assert_eq!(segment("'quoted'"), vec!["'", "quoted", "'"]);
        assert!(segment("   ").is_empty());
    }

    #[test]
    fn tokenize_prepends_cls_and_maps_unknowns() {
        let v = Vocabulary::from_words(&["the", "cat", "."], 2).unwrap();
        let ids = v.tokenize("The cat.", 512).unwrap();
        assert_eq!(
            ids,
            vec![
                CLS_ID,
                v.id("the").unwrap(),
                v.id("cat").unwrap(),
                v.id(".").unwrap()
            ]
        );
        let ids = v.tokenize("the dog", 512).unwrap();
        assert_eq!(ids[2], UNK_ID);
    }

    #[test]
    fn tokenize_truncates_to_max_len() {
        let v = Vocabulary::from_words(&["w"], 1).unwrap();
        let text = vec!["w"; 1000].join(" ");
        assert_eq!(v.tokenize(&text, 512).unwrap().len(), 512);
    }

    #[test]
    fn empty_text_is_an_error() {
        let v = Vocabulary::from_words(&["w"], 1).unwrap();
        assert!(matches!(v.tokenize("  \n", 10), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn build_orders_by_frequency_then_alphabet() {
        let v = Vocabulary::build(["b a a c", "c b a"], 100, 0).unwrap();
        let words: Vec<&str> = v.tokens()[6..].iter().map(String::as_str).collect();
        assert_eq!(words, vec!["a", "b", "c"]);
        let capped = Vocabulary::build(["b a a c", "c b a"], 7, 0).unwrap();
        assert_eq!(capped.len(), 7);
    }

    #[test]
    fn reserved_ids_are_distinct_and_first() {
        let v = Vocabulary::from_words(&["x"], 10).unwrap();
        assert_eq!(v.id(CLS), Some(CLS_ID));
        assert_eq!(v.id(UNK), Some(UNK_ID));
        assert_eq!(v.aspect_id(0).unwrap(), 6);
        assert_eq!(v.aspect_id(9).unwrap(), 15);
        assert!(v.aspect_id(10).is_err());
        assert_eq!(v.id("x"), Some(16));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(["hello world ."], 50, 3).unwrap();
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path, 3).unwrap(), v);
        assert!(Vocabulary::load(&path, 4).is_err());
    }
}
