use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::MetricError;

pub const ANNOTATORS: usize = 10;

const CONTRACTIONS: &str = include_str!("../../data/vqa_contractions.tsv");
const PUNCTUATION: &[char] = &[
    ';', '/', '[', ']', '"', '{', '}', '(', ')', '=', '+', '\\', '_', '-', '>', '<', '@', '`', ',', '?', '!',
];
const ARTICLES: &[&str] = &["a", "an", "the"];
const NUMBER_WORDS: &[(&str, &str)] = &[
    ("none", "0"),
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
];

/// Answer normalization of the VQA v2 evaluator: punctuation stripping,
/// number words to digits, article removal and contraction repair.
#[derive(Debug, Clone)]
pub struct VqaNormalizer {
    contractions: HashMap<String, String>,
}

impl VqaNormalizer {
    pub fn from_table(table: &str) -> Self {
        let contractions = table
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .filter_map(|l| l.split_once('\t'))
            .map(|(k, v)| (k.to_owned(), v.to_owned()))
            .collect();
        Self { contractions }
    }

    /// The normalizer with the bundled contraction table.
    pub fn standard() -> &'static Self {
        static STANDARD: OnceLock<VqaNormalizer> = OnceLock::new();
        STANDARD.get_or_init(|| Self::from_table(CONTRACTIONS))
    }

    pub fn normalize(&self, answer: &str) -> String {
        let text = answer.replace(['\n', '\t'], " ");
        let text = text.trim();
        self.digits_and_articles(&strip_punctuation(text))
    }

    fn digits_and_articles(&self, text: &str) -> String {
        text.to_lowercase()
            .split_whitespace()
            .map(|w| {
                NUMBER_WORDS
                    .iter()
                    .find(|(word, _)| *word == w)
                    .map_or(w, |(_, digit)| digit)
            })
            .filter(|w| !ARTICLES.contains(w))
            .map(|w| self.contractions.get(w).map_or(w, String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn has_digit_comma_digit(text: &str) -> bool {
    let b = text.as_bytes();
    b.windows(3)
        .any(|w| w[0].is_ascii_digit() && w[1] == b',' && w[2].is_ascii_digit())
}

fn strip_punctuation(text: &str) -> String {
    let comma_number = has_digit_comma_digit(text);
    let mut out = text.to_owned();
    for &p in PUNCTUATION {
        let spaced = text.contains(&format!("{p} ")) || text.contains(&format!(" {p}"));
        out = out.replace(p, if spaced || comma_number { "" } else { " " });
    }
    // Periods go unless they precede a digit.
    let chars: Vec<char> = out.chars().collect();
    chars
        .iter()
        .enumerate()
        .filter(|&(i, &c)| c != '.' || chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()))
        .map(|(_, &c)| c)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    #[serde(rename = "yes/no")]
    YesNo,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "other")]
    Other,
}

impl FromStr for QuestionType {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yes/no" => Ok(Self::YesNo),
            "number" => Ok(Self::Number),
            "other" => Ok(Self::Other),
            other => Err(MetricError::UnknownQuestionType(other.to_owned())),
        }
    }
}

/// Input line of the VQA evaluation JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaLine {
    pub id: String,
    pub predicted: String,
    pub annotator_answers: Vec<String>,
    pub question_type: QuestionType,
}

/// A prediction with its ten annotator answers, all normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VqaItem {
    pub id: String,
    pub predicted: String,
    pub annotator_answers: Vec<String>,
    pub question_type: QuestionType,
}

impl VqaItem {
    pub fn new<S: AsRef<str>>(
        id: &str,
        predicted: &str,
        annotator_answers: &[S],
        question_type: QuestionType,
    ) -> Result<Self, MetricError> {
        if annotator_answers.len() != ANNOTATORS {
            return Err(MetricError::AnnotatorCount {
                id: id.to_owned(),
                found: annotator_answers.len(),
            });
        }
        let norm = VqaNormalizer::standard();
        Ok(Self {
            id: id.to_owned(),
            predicted: norm.normalize(predicted),
            annotator_answers: annotator_answers.iter().map(|a| norm.normalize(a.as_ref())).collect(),
            question_type,
        })
    }

    pub fn from_line(line: &VqaLine) -> Result<Self, MetricError> {
        Self::new(&line.id, &line.predicted, &line.annotator_answers, line.question_type)
    }

    pub fn accuracy(&self) -> f64 {
        item_accuracy(&self.predicted, &self.annotator_answers)
    }

    pub fn read_jsonl<R: Read>(source: R) -> Result<Vec<Self>, MetricError> {
        let mut items = Vec::new();
        for (n, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: VqaLine = serde_json::from_str(&line).map_err(|e| MetricError::Jsonl {
                line: n + 1,
                message: e.to_string(),
            })?;
            items.push(Self::from_line(&parsed)?);
        }
        Ok(items)
    }
}

/// `min(matches / 3, 1)` averaged over the ten leave-one-annotator-out subsets.
/// Answers are compared as given; [`VqaItem`] normalizes them first.
pub fn item_accuracy<S: AsRef<str>>(predicted: &str, annotator_answers: &[S]) -> f64 {
    let matching: Vec<bool> = annotator_answers.iter().map(|a| a.as_ref() == predicted).collect();
    let total = matching.iter().filter(|&&m| m).count();
    let sum: f64 = matching
        .iter()
        .map(|&left_out| {
            let others = total - usize::from(left_out);
            (others as f64 / 3.0).min(1.0)
        })
        .sum();
    sum / annotator_answers.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaBreakdown {
    pub overall: f64,
    #[serde(rename = "yes/no")]
    pub yes_no: Option<f64>,
    pub number: Option<f64>,
    pub other: Option<f64>,
    pub items: usize,
    pub counts: BreakdownCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BreakdownCounts {
    #[serde(rename = "yes/no")]
    pub yes_no: usize,
    pub number: usize,
    pub other: usize,
}


/// Mean accuracy overall and per question type. Types with no items are `None`.
pub fn vqa_accuracy(items: &[VqaItem]) -> Result<VqaBreakdown, MetricError> {
    if items.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    let mut overall = 0.0;
    for item in items {
        if item.annotator_answers.len() != ANNOTATORS {
            return Err(MetricError::AnnotatorCount {
                id: item.id.clone(),
                found: item.annotator_answers.len(),
            });
        }
        let acc = item.accuracy();
        let slot = item.question_type as usize;
        sums[slot] += acc;
        counts[slot] += 1;
        overall += acc;
    }
    let mean = |i: usize| (counts[i] > 0).then(|| sums[i] / counts[i] as f64);
    Ok(VqaBreakdown {
        overall: overall / items.len() as f64,
        yes_no: mean(QuestionType::YesNo as usize),
        number: mean(QuestionType::Number as usize),
        other: mean(QuestionType::Other as usize),
        items: items.len(),
        counts: BreakdownCounts {
            yes_no: counts[0],
            number: counts[1],
            other: counts[2],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn answers(matches: usize, predicted: &str) -> Vec<String> {
        (0..ANNOTATORS)
            .map(|i| if i < matches { predicted.to_owned() } else { format!("other{i}") })
            .collect()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(item_accuracy("yes", &answers(10, "yes")), 1.0);
        assert_eq!(item_accuracy("yes", &answers(0, "yes")), 0.0);
        assert!((item_accuracy("yes", &answers(3, "yes")) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn normalizer_rules() {
        let n = VqaNormalizer::standard();
        assert_eq!(n.normalize("Two"), "2");
        assert_eq!(n.normalize("the dog"), "dog");
        assert_eq!(n.normalize("dont"), "don't");
        assert_eq!(n.normalize("yes."), "yes");
        assert_eq!(n.normalize("3.5"), "3.5");
        assert_eq!(n.normalize("1,000"), "1000");
        assert_eq!(n.normalize("red, white"), "red white");
        assert_eq!(n.normalize("t-shirt"), "t shirt");
        assert_eq!(n.normalize("  A\tBus \n"), "bus");
    }

    #[test]
    fn breakdown() {
        let items = vec![
            VqaItem::new("1", "yes", &answers(10, "yes"), QuestionType::YesNo).unwrap(),
            VqaItem::new("2", "2", &answers(0, "two"), QuestionType::Number).unwrap(),
            VqaItem::new("3", "two", &answers(10, "2"), QuestionType::Number).unwrap(),
        ];
        let b = vqa_accuracy(&items).unwrap();
        assert_eq!(b.yes_no, Some(1.0));
        assert_eq!(b.number, Some(0.5));
        assert_eq!(b.other, None);
        assert!((b.overall - 2.0 / 3.0).abs() < 1e-12);
        let json = serde_json::to_value(&b).unwrap();
        assert!(json.get("yes/no").is_some());
    }

    #[test]
    fn wrong_annotator_count() {
        let err = VqaItem::new("x", "a", &["a"; 9], QuestionType::Other).unwrap_err();
        assert!(matches!(err, MetricError::AnnotatorCount { found: 9, .. }));
        assert!("maybe".parse::<QuestionType>().is_err());
    }
}
