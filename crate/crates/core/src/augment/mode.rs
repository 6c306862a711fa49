use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AugmentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Captioning,
    Vqa,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Captioning => "captioning",
            Task::Vqa => "vqa",
        })
    }
}

impl FromStr for Task {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "captioning" | "caption" => Ok(Task::Captioning),
            "vqa" => Ok(Task::Vqa),
            other => Err(AugmentError::UnknownTask(other.to_owned())),
        }
    }
}

/// A piece of retrieved text that a mode may splice into the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextPart {
    TopCaption,
    AllCaptions,
    AltText,
}

/// Which retrieved modalities are attached to a query sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationMode {
    name: String,
    task: Task,
    text_parts: Vec<TextPart>,
    use_image: bool,
}

use TextPart::{AllCaptions, AltText, TopCaption};

const CAPTIONING_MODES: &[(&str, &[TextPart], bool)] = &[
    ("none", &[], false),
    ("top_caption", &[TopCaption], false),
    ("alt_text", &[AltText], false),
    ("all_captions_concatenated", &[AllCaptions], false),
    ("top_caption_all_captions", &[TopCaption, AllCaptions], false),
    ("top_caption_all_captions_alttext", &[TopCaption, AllCaptions, AltText], false),
    ("image", &[], true),
    ("image_top_caption_all_captions", &[TopCaption, AllCaptions], true),
];

const VQA_MODES: &[(&str, &[TextPart], bool)] = &[
    ("none", &[], false),
    ("alttext", &[AltText], false),
    ("alttext_all_captions", &[AltText, AllCaptions], false),
    ("top_caption_all_captions", &[TopCaption, AllCaptions], false),
];

impl AblationMode {
    /// Every named mode for `task`, in table order.
    pub fn all(task: Task) -> Vec<Self> {
        Self::table(task)
            .iter()
            .map(|(name, parts, image)| Self {
                name: (*name).to_owned(),
                task,
                text_parts: parts.to_vec(),
                use_image: *image,
            })
            .collect()
    }

    pub fn names(task: Task) -> Vec<&'static str> {
        Self::table(task).iter().map(|(n, _, _)| *n).collect()
    }

    fn table(task: Task) -> &'static [(&'static str, &'static [TextPart], bool)] {
        match task {
            Task::Captioning => CAPTIONING_MODES,
            Task::Vqa => VQA_MODES,
        }
    }

    pub fn named(task: Task, name: &str) -> Result<Self, AugmentError> {
        Self::all(task)
            .into_iter()
            .find(|m| m.name == name)
            .ok_or_else(|| AugmentError::UnknownMode {
                task,
                name: name.to_owned(),
            })
    }

    /// The non-retrieved baseline.
    pub fn none(task: Task) -> Self {
        Self::named(task, "none").expect("baseline mode exists")
    }

    pub fn custom(
        name: impl Into<String>,
        task: Task,
        text_parts: Vec<TextPart>,
        use_image: bool,
    ) -> Result<Self, AugmentError> {
        let name = name.into();
        if task == Task::Vqa && use_image {
            return Err(AugmentError::InvalidMode(format!("{name}: vqa modes are text-only")));
        }
        if text_parts.is_empty() && !use_image && name != "none" {
            return Err(AugmentError::InvalidMode(format!("{name}: mode selects nothing")));
        }
        Ok(Self {
            name,
            task,
            text_parts,
            use_image,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn text_parts(&self) -> &[TextPart] {
        &self.text_parts
    }

    pub fn use_image(&self) -> bool {
        self.use_image
    }

    pub fn is_baseline(&self) -> bool {
        self.text_parts.is_empty() && !self.use_image
    }
}
