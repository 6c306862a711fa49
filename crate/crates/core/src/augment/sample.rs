use serde::{Deserialize, Serialize};

use super::dataset::RawRecord;
use super::image::{concat_images, ImageSource, RgbImage};
use super::mode::{AblationMode, Task, TextPart};
use super::AugmentError;
use crate::retriever::{MappedCaptions, MemoryEntry, RetrievalResult};
use crate::tsv::sanitize;

pub const DEFAULT_SEPARATOR: &str = " </context> ";
pub const DEFAULT_PART_SEPARATOR: &str = " | ";
pub const DEFAULT_CAPTION_JOIN: &str = " ; ";
pub const DEFAULT_MAX_SOURCE_LENGTH: usize = 600;
pub const CAPTION_PROMPT: &str = "What does the image describe?";

/// Token counting and truncation used for the source-length limit.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
    /// Longest prefix of `text` holding at most `max_tokens` tokens.
    fn truncate(&self, text: &str, max_tokens: usize) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn truncate(&self, text: &str, max_tokens: usize) -> String {
        match text.split_whitespace().nth(max_tokens) {
            None => text.to_owned(),
            Some(first_dropped) => {
                let end = first_dropped.as_ptr() as usize - text.as_ptr() as usize;
                text[..end].trim_end().to_owned()
            }
        }
    }
}

/// Which records survive in captioning modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionFilter {
    /// Only image modes drop records lacking retrieved captions + image.
    #[default]
    ImageModesOnly,
    /// Every retrieval mode works on the captions + image subset.
    AllRetrievalModes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Placed between retrieved context and the prompt or question.
    pub separator: String,
    /// Placed between the text parts of a mode.
    pub part_separator: String,
    /// Joins the entries of the all-captions list.
    pub caption_join: String,
    pub max_source_length: usize,
    /// Context before the prompt (`true`) or after it.
    pub context_first: bool,
    pub caption_prompt: String,
    pub caption_filter: CaptionFilter,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            separator: DEFAULT_SEPARATOR.to_owned(),
            part_separator: DEFAULT_PART_SEPARATOR.to_owned(),
            caption_join: DEFAULT_CAPTION_JOIN.to_owned(),
            max_source_length: DEFAULT_MAX_SOURCE_LENGTH,
            context_first: true,
            caption_prompt: CAPTION_PROMPT.to_owned(),
            caption_filter: CaptionFilter::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalStatus {
    /// Retrieved captions and a retrieved image.
    Full,
    /// Retrieved captions, no usable image.
    CaptionsOnly,
    Missing,
}

impl RetrievalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RetrievalStatus::Full => "full",
            RetrievalStatus::CaptionsOnly => "captions_only",
            RetrievalStatus::Missing => "missing",
        }
    }
}

/// The memory entry whose metadata feeds the context: the top-1 pick when
/// there is one, else the best hit that at least has mapped captions.
pub fn context_entry(retrieval: Option<&RetrievalResult>) -> (RetrievalStatus, Option<&MemoryEntry>) {
    let Some(r) = retrieval else {
        return (RetrievalStatus::Missing, None);
    };
    if let Some(top) = &r.top1 {
        return (RetrievalStatus::Full, Some(top));
    }
    match r.hits.iter().find(|h| h.entry.mapped.is_some()) {
        Some(h) => (RetrievalStatus::CaptionsOnly, Some(&h.entry)),
        None => (RetrievalStatus::Missing, None),
    }
}

/// Joins the mode's text parts in order. Absent parts are empty and empty
/// parts are skipped, so a fully missing retrieval yields `""`.
pub fn build_text_context(
    mode: &AblationMode,
    mapped: Option<&MappedCaptions>,
    alt_text: Option<&str>,
    config: &AugmentConfig,
) -> String {
    let parts = mode.text_parts().iter().map(|part| match part {
        TextPart::TopCaption => mapped.map(|m| m.top_caption().to_owned()).unwrap_or_default(),
        TextPart::AllCaptions => mapped
            .map(|m| m.all_captions().join(&config.caption_join))
            .unwrap_or_default(),
        TextPart::AltText => alt_text.unwrap_or_default().to_owned(),
    });
    parts
        .map(|p| sanitize(&p).trim().to_owned())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(&config.part_separator)
}

/// Predicted caption of the retrieval-only baseline: the top caption of the
/// context entry, or `""`.
pub fn retrieval_only_caption(retrieval: Option<&RetrievalResult>) -> String {
    context_entry(retrieval)
        .1
        .and_then(|e| e.mapped.as_ref())
        .map(|m| m.top_caption().to_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleImage {
    /// The record's own `image_ref`, untouched.
    Original(String),
    Composite(RgbImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub sample_id: String,
    pub image: SampleImage,
    pub input_text: String,
    pub target_text: String,
    pub retrieval_status: RetrievalStatus,
    /// The (possibly truncated) retrieved context inside `input_text`.
    pub context: String,
}

fn assemble(context: &str, prompt: &str, config: &AugmentConfig) -> String {
    if config.context_first {
        format!("{context}{}{prompt}", config.separator)
    } else {
        format!("{prompt}{}{context}", config.separator)
    }
}

/// Cuts the context until the assembled input fits the source-length limit.
/// The prompt is never shortened.
pub fn fit_context(
    sample_id: &str,
    context: &str,
    prompt: &str,
    config: &AugmentConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<(String, String), AugmentError> {
    let limit = config.max_source_length;
    let fixed = tokenizer.count(&assemble("", prompt, config));
    if fixed > limit {
        return Err(AugmentError::PromptTooLong {
            sample_id: sample_id.to_owned(),
            tokens: fixed,
            limit,
        });
    }
    let mut budget = (limit - fixed).min(tokenizer.count(context));
    loop {
        let ctx = tokenizer.truncate(context, budget);
        let input = assemble(&ctx, prompt, config);
        if tokenizer.count(&input) <= limit {
            return Ok((ctx, input));
        }
        if budget == 0 {
            return Err(AugmentError::PromptTooLong {
                sample_id: sample_id.to_owned(),
                tokens: tokenizer.count(&input),
                limit,
            });
        }
        budget -= 1;
    }
}

/// Builds one augmented sample, or `None` when the mode's filtering policy
/// drops the record.
pub fn build_sample(
    record: &RawRecord,
    retrieval: Option<&RetrievalResult>,
    mode: &AblationMode,
    config: &AugmentConfig,
    tokenizer: &dyn Tokenizer,
    images: &dyn ImageSource,
) -> Result<Option<AugmentedSample>, AugmentError> {
    if record.task() != mode.task() {
        return Err(AugmentError::TaskMismatch {
            record: record.task(),
            mode: mode.task(),
        });
    }
    let prompt = match record.task() {
        Task::Captioning => config.caption_prompt.as_str(),
        Task::Vqa => record.text(),
    };
    let (status, entry) = context_entry(retrieval);

    if mode.is_baseline() {
        return Ok(Some(AugmentedSample {
            sample_id: record.sample_id().to_owned(),
            image: SampleImage::Original(record.image_ref().to_owned()),
            input_text: prompt.to_owned(),
            target_text: record.target().to_owned(),
            retrieval_status: status,
            context: String::new(),
        }));
    }

    if record.task() == Task::Captioning && status != RetrievalStatus::Full {
        let filtered = mode.use_image() || config.caption_filter == CaptionFilter::AllRetrievalModes;
        if filtered {
            return Ok(None);
        }
    }

    let context = match entry {
        Some(e) => build_text_context(mode, e.mapped.as_ref(), Some(&e.alt_text), config),
        None => String::new(),
    };
    let (context, input_text) = fit_context(record.sample_id(), &context, prompt, config, tokenizer)?;

    let image = if mode.use_image() {
        let query = images
            .load(record.image_ref())?
            .ok_or_else(|| AugmentError::MissingQueryImage(record.image_ref().to_owned()))?;
        let retrieved = match entry {
            Some(e) if status == RetrievalStatus::Full => images.load(&e.image_ref)?,
            _ => None,
        };
        SampleImage::Composite(concat_images(&query, retrieved.as_ref())?)
    } else {
        SampleImage::Original(record.image_ref().to_owned())
    };

    Ok(Some(AugmentedSample {
        sample_id: record.sample_id().to_owned(),
        image,
        input_text,
        target_text: record.target().to_owned(),
        retrieval_status: status,
        context,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::image::MemoryImageSource;
    use crate::retriever::RetrievedHit;

    fn caps(list: &[&str]) -> MappedCaptions {
        MappedCaptions::from_list(list.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn entry(id: &str, image: &str, alt: &str, mapped: Option<MappedCaptions>) -> MemoryEntry {
        MemoryEntry {
            id: id.into(),
            image_ref: image.into(),
            alt_text: alt.into(),
            mapped,
        }
    }

    #[test]
    fn whitespace_truncation() {
        let t = WhitespaceTokenizer;
        assert_eq!(t.count("  a b\tc "), 3);
        assert_eq!(t.truncate("a  b c d", 2), "a  b");
        assert_eq!(t.truncate("a b", 5), "a b");
        assert_eq!(t.truncate("a b", 0), "");
    }

    #[test]
    fn context_examples() {
        let cfg = AugmentConfig::default();
        let top = AblationMode::named(Task::Captioning, "top_caption").unwrap();
        assert_eq!(
            build_text_context(&top, Some(&caps(&["a dog runs", "x"])), None, &cfg),
            "a dog runs"
        );
        let two = AblationMode::named(Task::Captioning, "top_caption_all_captions").unwrap();
        assert_eq!(build_text_context(&two, None, None, &cfg), "");
        let three = AblationMode::named(Task::Captioning, "top_caption_all_captions_alttext").unwrap();
        assert_eq!(
            build_text_context(&three, Some(&caps(&["a", "b"])), Some("alt"), &cfg),
            "a | a ; b | alt"
        );
    }

    fn vqa_record() -> RawRecord {
        RawRecord::vqa("q1", "img/q1.png", "what color is the bus?", "red")
    }

    #[test]
    fn baseline_is_raw() {
        let s = build_sample(
            &vqa_record(),
            None,
            &AblationMode::none(Task::Vqa),
            &AugmentConfig::default(),
            &WhitespaceTokenizer,
            &MemoryImageSource::new(),
        )
        .unwrap()
        .unwrap();
        assert_eq!(s.input_text, "what color is the bus?");
        assert_eq!(s.target_text, "red");
        assert_eq!(s.image, SampleImage::Original("img/q1.png".into()));
    }

    #[test]
    fn vqa_missing_retrieval_keeps_question() {
        let mode = AblationMode::named(Task::Vqa, "top_caption_all_captions").unwrap();
        let cfg = AugmentConfig::default();
        let r = RetrievalResult {
            query_id: "q1".into(),
            hits: vec![RetrievedHit {
                entry: entry("m", "m.png", "alt", None),
                score: 0.9,
            }],
            top1: None,
        };
        let s = build_sample(&vqa_record(), Some(&r), &mode, &cfg, &WhitespaceTokenizer, &MemoryImageSource::new())
            .unwrap()
            .unwrap();
        assert_eq!(s.input_text, format!("{}what color is the bus?", cfg.separator));
        assert_eq!(s.retrieval_status, RetrievalStatus::Missing);
        assert_eq!(s.context, "");
    }

    #[test]
    fn captions_only_status() {
        let r = RetrievalResult {
            query_id: "q".into(),
            hits: vec![RetrievedHit {
                entry: entry("m", "", "alt", Some(caps(&["c"]))),
                score: 0.5,
            }],
            top1: None,
        };
        let (status, e) = context_entry(Some(&r));
        assert_eq!(status, RetrievalStatus::CaptionsOnly);
        assert_eq!(e.unwrap().id, "m");
        assert_eq!(retrieval_only_caption(Some(&r)), "c");
        assert_eq!(retrieval_only_caption(None), "");
    }

    #[test]
    fn long_context_is_truncated_not_question() {
        let cfg = AugmentConfig {
            max_source_length: 12,
            ..AugmentConfig::default()
        };
        let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let (ctx, input) = fit_context("s", &words.join(" "), "is it red ?", &cfg, &WhitespaceTokenizer).unwrap();
        assert_eq!(WhitespaceTokenizer.count(&input), 12);
        assert_eq!(ctx, words[..7].join(" "));
        assert!(input.ends_with("</context> is it red ?"));
        let err = fit_context("s", "", &words.join(" "), &cfg, &WhitespaceTokenizer).unwrap_err();
        assert!(matches!(err, AugmentError::PromptTooLong { .. }));
    }

    #[test]
    fn prompt_first_ordering() {
        let cfg = AugmentConfig {
            context_first: false,
            ..AugmentConfig::default()
        };
        let (_, input) = fit_context("s", "ctx", "why?", &cfg, &WhitespaceTokenizer).unwrap();
        assert_eq!(input, "why? </context> ctx");
    }

    #[test]
    fn task_mismatch_is_an_error() {
        let mode = AblationMode::named(Task::Captioning, "top_caption").unwrap();
        assert!(matches!(
            build_sample(&vqa_record(), None, &mode, &AugmentConfig::default(), &WhitespaceTokenizer, &MemoryImageSource::new()),
            Err(AugmentError::TaskMismatch { .. })
        ));
    }

    #[test]
    fn image_mode_builds_composite() {
        let mut images = MemoryImageSource::new();
        images.insert("q.png", RgbImage::solid(4, 4, [255, 0, 0]).unwrap());
        images.insert("m.png", RgbImage::solid(2, 2, [0, 0, 255]).unwrap());
        let record = RawRecord::captioning("c1", "q.png", "a red square");
        let r = RetrievalResult {
            query_id: "c1".into(),
            hits: vec![],
            top1: Some(entry("m", "m.png", "", Some(caps(&["blue"])))),
        };
        let mode = AblationMode::named(Task::Captioning, "image").unwrap();
        let s = build_sample(&record, Some(&r), &mode, &AugmentConfig::default(), &WhitespaceTokenizer, &images)
            .unwrap()
            .unwrap();
        let SampleImage::Composite(img) = s.image else { panic!() };
        assert_eq!((img.width(), img.height()), (8, 4));
        assert_eq!(img.pixel(5, 1), [0, 0, 255]);
        assert_eq!(s.context, "");
        // Without retrieval the image mode drops the record.
        assert!(build_sample(&record, None, &mode, &AugmentConfig::default(), &WhitespaceTokenizer, &images)
            .unwrap()
            .is_none());
    }
}
