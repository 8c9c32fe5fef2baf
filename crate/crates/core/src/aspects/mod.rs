//! Aspect discovery and annotation augmentation: topic modeling over
//! reader comments, the aspect taxonomy, comment classifiers and the
//! augmentation filter.

mod augment;
mod classifier;
pub mod lda;
mod records;
mod taxonomy;

pub use augment::{augment_comments, AugmentAudit, AugmentConfig, DropReason};
pub use classifier::{
    grouped_accuracy, train_aspect_classifier, train_sentiment_scorer, ClassifierConfig,
    ClassifierReport, CommentClassifier, CommentScorer,
};
pub use lda::{
    comment_tokens, lda_fit, select_num_topics, umass_coherence, LdaConfig, LdaModel,
    TopicSelection,
};
pub use records::{
    class_from_rating, rating_from_class, read_jsonl, sentiment_group, CommentRecord,
    CommentSource, RawComment,
};
pub use taxonomy::{Aspect, AspectTaxonomy, TopicEntry, TopicMapping};
