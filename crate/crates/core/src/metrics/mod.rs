//! Evaluation metrics for ranking, aspect prediction and comment generation.

pub mod correlation;
pub mod generation;
pub mod ranking;
mod report;

pub use correlation::{
    correlation_pvalue, kendall, mid_ranks, spearman, Correlation, Statistic, SIGNIFICANCE,
};
pub use generation::{bleu_avg, bleu_avg_with, corpus_perplexity, rouge_l, CommentExample};
pub use ranking::{pairwise_accuracy, recall_at_k, score_distance, top_k};
pub use report::{render_table, MetricReport};
