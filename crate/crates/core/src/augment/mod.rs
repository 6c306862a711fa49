//! Augmented sample construction for captioning and VQA.
//!
//! A named [`AblationMode`] decides which retrieved text parts are spliced in
//! front of the prompt or question and whether the retrieved image is placed
//! next to the query image. [`emit_dataset`] applies a mode to a whole raw
//! dataset and reports coverage.

mod dataset;
mod image;
mod mode;
mod sample;

pub use dataset::{
    columns, emit_dataset, CompositeOutput, DatasetReport, RawDataset, RawRecord, CAPTIONING_COLUMNS, VQA_COLUMNS,
};
pub use image::{concat_images, FsImageSource, ImageSource, MemoryImageSource, RgbImage};
pub use mode::{AblationMode, Task, TextPart};
pub use sample::{
    build_sample, build_text_context, context_entry, fit_context, retrieval_only_caption, AugmentConfig,
    AugmentedSample, CaptionFilter, RetrievalStatus, SampleImage, Tokenizer, WhitespaceTokenizer, CAPTION_PROMPT,
    DEFAULT_CAPTION_JOIN, DEFAULT_MAX_SOURCE_LENGTH, DEFAULT_PART_SEPARATOR, DEFAULT_SEPARATOR,
};

use crate::tsv::TsvError;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown {task} mode {name:?}")]
    UnknownMode { task: Task, name: String },
    #[error("invalid mode: {0}")]
    InvalidMode(String),
    #[error("record task {record} does not match mode task {mode}")]
    TaskMismatch { record: Task, mode: Task },
    #[error("line {line}: field {field:?} {reason}")]
    MalformedRecord { line: usize, field: String, reason: String },
    #[error("duplicate sample_id {0:?}")]
    DuplicateSample(String),
    #[error("sample {sample_id:?}: prompt alone needs {tokens} tokens, limit is {limit}")]
    PromptTooLong { sample_id: String, tokens: usize, limit: usize },
    #[error("zero-sized image")]
    ZeroSizedImage,
    #[error("image: {0}")]
    Image(String),
    #[error("query image {0:?} not found")]
    MissingQueryImage(String),
    #[error("image modes need a composite output directory")]
    NoCompositeOutput,
    #[error("png: {0}")]
    Png(#[from] ::image::ImageError),
    #[error(transparent)]
    Tsv(#[from] TsvError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
