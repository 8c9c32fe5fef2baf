//! Word-count and date filtering.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::Story;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_words: usize,
    pub max_words: usize,
    /// First day of the excluded date window, inclusive.
    pub exclude_from: Option<NaiveDate>,
    /// Last day of the excluded date window, inclusive. Open-ended if unset.
    pub exclude_to: Option<NaiveDate>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_words: 200,
            max_words: 800,
            exclude_from: None,
            exclude_to: None,
        }
    }
}

/// Why a story was filtered out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    TooShort,
    TooLong,
    ExcludedDate,
}

impl FilterConfig {
    pub fn check(&self, story: &Story) -> Option<FilterReason> {
        if story.word_count < self.min_words {
            return Some(FilterReason::TooShort);
        }
        if story.word_count > self.max_words {
            return Some(FilterReason::TooLong);
        }
        let after_start = self.exclude_from.is_some_and(|d| story.created_at >= d);
        let before_end = self.exclude_to.is_none_or(|d| story.created_at <= d);
        if after_start && before_end {
            return Some(FilterReason::ExcludedDate);
        }
        None
    }
}

/// Keeps stories inside the word-count bounds (inclusive) and outside the
/// excluded date window, preserving order.
pub fn filter_stories(stories: Vec<Story>, cfg: &FilterConfig) -> Vec<Story> {
    stories
        .into_iter()
        .filter(|s| cfg.check(s).is_none())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn story(id: &str, words: usize, date: &str) -> Story {
        Story {
            id: id.into(),
            prompt_id: "p".into(),
            prompt: String::new(),
            text: vec!["w"; words].join(" "),
            upvotes: 0,
            created_at: date.parse().unwrap(),
            word_count: words,
            comments: vec![],
        }
    }

    #[test]
    fn six_story_fixture() {
        let cfg = FilterConfig {
            exclude_from: Some("2019-12-01".parse().unwrap()),
            exclude_to: Some("2020-03-31".parse().unwrap()),
            ..Default::default()
        };
        let stories = vec![
            story("w150", 150, "2019-01-01"),
            story("w200", 200, "2019-01-01"),
            story("w800", 800, "2019-01-01"),
            story("w801", 801, "2019-01-01"),
            story("recent", 500, "2020-01-15"),
            story("old", 500, "2018-06-01"),
        ];
        let kept: Vec<String> = filter_stories(stories, &cfg)
            .into_iter()
            .map(|s| s.id)
            .collect();
        assert_eq!(kept, vec!["w200", "w800", "old"]);
    }

    #[test]
    fn open_ended_window() {
        let cfg = FilterConfig {
            exclude_from: Some("2020-01-01".parse().unwrap()),
            ..Default::default()
        };
        assert_eq!(
            cfg.check(&story("a", 300, "2024-01-01")),
            Some(FilterReason::ExcludedDate)
        );
        assert_eq!(cfg.check(&story("a", 300, "2019-12-31")), None);
        assert_eq!(
            cfg.check(&story("a", 150, "2019-12-31")),
            Some(FilterReason::TooShort)
        );
    }
}
