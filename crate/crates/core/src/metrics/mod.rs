//! Caption and VQA evaluation: corpus BLEU@4, CIDEr-D and VQA v2 accuracy.
//!
//! BLEU is reported in `[0, 1]`. CIDEr-D keeps its native scale: a perfect
//! item scores 10.

mod bleu;
mod cider;
mod corpus;
mod normalize;
mod vqa;

pub use bleu::{bleu4, BleuStats};
pub use cider::{cider_d, cider_d_per_item, CIDER_SIGMA};
pub use corpus::{CaptionLine, CaptionReport, EvalCorpus, EvalItem};
pub use normalize::normalize;
pub use vqa::{
    item_accuracy, vqa_accuracy, BreakdownCounts, QuestionType, VqaBreakdown, VqaItem, VqaLine, VqaNormalizer, ANNOTATORS,
};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("idf undefined: CIDEr-D needs at least 2 items, got {0}")]
    IdfUndefined(usize),
    #[error("item {0} has no references")]
    NoReferences(usize),
    #[error("item {id:?} has {found} annotator answers, expected 10")]
    AnnotatorCount { id: String, found: usize },
    #[error("unknown question type {0:?}")]
    UnknownQuestionType(String),
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
