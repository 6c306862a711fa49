use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use super::{bleu4, cider_d, normalize, MetricError};

/// One candidate caption with its references, already tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalItem {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalItem {
    pub fn from_text<S: AsRef<str>>(candidate: &str, references: &[S]) -> Self {
        Self {
            candidate: normalize(candidate),
            references: references.iter().map(|r| normalize(r.as_ref())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvalCorpus {
    items: Vec<EvalItem>,
}

/// Input line of the captioning evaluation JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionLine {
    pub id: String,
    pub candidate: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionReport {
    pub items: usize,
    pub bleu4: f64,
    /// `None` when the corpus is too small for idf.
    pub cider_d: Option<f64>,
}

impl EvalCorpus {
    pub fn new(items: Vec<EvalItem>) -> Result<Self, MetricError> {
        if let Some(i) = items.iter().position(|it| it.references.is_empty()) {
            return Err(MetricError::NoReferences(i));
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[EvalItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn from_lines(lines: &[CaptionLine]) -> Result<Self, MetricError> {
        Self::new(
            lines
                .iter()
                .map(|l| EvalItem::from_text(&l.candidate, &l.references))
                .collect(),
        )
    }

    pub fn read_jsonl<R: Read>(source: R) -> Result<Self, MetricError> {
        let mut lines = Vec::new();
        for (n, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            lines.push(serde_json::from_str::<CaptionLine>(&line).map_err(|e| MetricError::Jsonl {
                line: n + 1,
                message: e.to_string(),
            })?);
        }
        Self::from_lines(&lines)
    }

    pub fn report(&self) -> Result<CaptionReport, MetricError> {
        let cider = match cider_d(self) {
            Ok(v) => Some(v),
            Err(MetricError::IdfUndefined(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(CaptionReport {
            items: self.len(),
            bleu4: bleu4(self)?,
            cider_d: cider,
        })
    }
}
