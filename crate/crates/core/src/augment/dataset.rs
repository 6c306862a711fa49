use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::ImageSource;
use super::mode::{AblationMode, Task};
use super::sample::{build_sample, context_entry, AugmentConfig, RetrievalStatus, SampleImage, Tokenizer};
use super::AugmentError;
use crate::retriever::RetrievalResult;
use crate::tsv::{self, Table, TsvWriter};

pub const CAPTIONING_COLUMNS: &[&str] = &["sample_id", "image_ref", "caption"];
pub const VQA_COLUMNS: &[&str] = &["sample_id", "image_ref", "question", "answer"];

pub fn columns(task: Task) -> &'static [&'static str] {
    match task {
        Task::Captioning => CAPTIONING_COLUMNS,
        Task::Vqa => VQA_COLUMNS,
    }
}

/// One input dataset row. The original cells are kept so the row can be
/// written back unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    task: Task,
    sample_id: String,
    image_ref: String,
    /// Caption or question.
    text: String,
    answer: Option<String>,
    fields: Vec<String>,
}

impl RawRecord {
    pub fn captioning(sample_id: &str, image_ref: &str, caption: &str) -> Self {
        Self {
            task: Task::Captioning,
            sample_id: sample_id.into(),
            image_ref: image_ref.into(),
            text: caption.into(),
            answer: None,
            fields: vec![sample_id.into(), image_ref.into(), caption.into()],
        }
    }

    pub fn vqa(sample_id: &str, image_ref: &str, question: &str, answer: &str) -> Self {
        Self {
            task: Task::Vqa,
            sample_id: sample_id.into(),
            image_ref: image_ref.into(),
            text: question.into(),
            answer: Some(answer.into()),
            fields: vec![sample_id.into(), image_ref.into(), question.into(), answer.into()],
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn image_ref(&self) -> &str {
        &self.image_ref
    }

    /// Caption (captioning) or question (VQA).
    pub fn text(&self) -> &str {
        &self.text
    }

    /// What the model should produce: the caption or the answer.
    pub fn target(&self) -> &str {
        self.answer.as_deref().unwrap_or(&self.text)
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    task: Task,
    headers: Vec<String>,
    records: Vec<RawRecord>,
}

impl RawDataset {
    /// Builds a dataset with the canonical column layout for the records' task.
    pub fn from_records(task: Task, records: Vec<RawRecord>) -> Result<Self, AugmentError> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.task != task {
                return Err(AugmentError::TaskMismatch { record: r.task, mode: task });
            }
            if !seen.insert(r.sample_id.clone()) {
                return Err(AugmentError::DuplicateSample(r.sample_id.clone()));
            }
        }
        Ok(Self {
            task,
            headers: columns(task).iter().map(|s| s.to_string()).collect(),
            records,
        })
    }

    pub fn read_tsv<R: Read>(source: R, task: Task) -> Result<Self, AugmentError> {
        let table = Table::read(source)?;
        let idx: Vec<usize> = columns(task)
            .iter()
            .map(|c| table.column(c))
            .collect::<Result<_, _>>()?;
        let mut records = Vec::with_capacity(table.len());
        let mut seen = HashSet::new();
        for (line, row) in table.rows_with_lines() {
            for (&i, name) in idx.iter().zip(columns(task)) {
                if row[i].trim().is_empty() {
                    return Err(AugmentError::MalformedRecord {
                        line,
                        field: (*name).to_owned(),
                        reason: "empty".into(),
                    });
                }
            }
            let sample_id = row[idx[0]].clone();
            if !seen.insert(sample_id.clone()) {
                return Err(AugmentError::DuplicateSample(sample_id));
            }
            records.push(RawRecord {
                task,
                sample_id,
                image_ref: row[idx[1]].clone(),
                text: row[idx[2]].clone(),
                answer: (task == Task::Vqa).then(|| row[idx[3]].clone()),
                fields: row.clone(),
            });
        }
        Ok(Self {
            task,
            headers: table.headers.clone(),
            records,
        })
    }

    pub fn read_path(path: impl AsRef<Path>, task: Task) -> Result<Self, AugmentError> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_tsv(file, task)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn records(&self) -> &[RawRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Re-serializes the dataset as read.
    pub fn write_tsv<W: Write>(&self, sink: W) -> Result<W, AugmentError> {
        Ok(tsv::write_table(
            sink,
            &self.headers.iter().map(String::as_str).collect::<Vec<_>>(),
            self.records.iter().map(|r| r.fields.clone()),
        )?)
    }
}

/// Per-run coverage and size bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub task: Task,
    pub mode: String,
    pub total_records: usize,
    /// Records whose retrieval produced mapped captions.
    pub with_captions: usize,
    /// Records whose retrieval produced mapped captions and an image.
    pub with_captions_and_image: usize,
    pub emitted: usize,
    /// Records that had no retrieval result at all.
    pub join_misses: usize,
    /// Emitted samples whose context was shortened to fit the limit.
    pub truncated: usize,
    /// Emitted rows serialized with the input columns only.
    pub bytes_without_retrieval: usize,
    /// Emitted rows as written, retrieval columns included.
    pub bytes_with_retrieval: usize,
}

/// Where composite images go.
#[derive(Debug, Clone)]
pub struct CompositeOutput {
    /// Directory the PNGs are written to.
    pub dir: PathBuf,
    /// Prefix used for the `composite_image_ref` column, usually `dir`
    /// relative to the output TSV.
    pub ref_prefix: String,
}

fn file_stem_for(sample_id: &str) -> String {
    sample_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

struct CountingWriter<W> {
    inner: W,
    bytes: usize,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.bytes += n;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Builds every sample of `dataset` under `mode` and writes the augmented
/// TSV to `sink` in input order.
///
/// Output columns are the input columns followed by `retrieved_context`,
/// `retrieval_status` and, for image modes, `composite_image_ref`. Mode
/// `none` writes the input unchanged.
#[allow(clippy::too_many_arguments)]
pub fn emit_dataset<W, I>(
    dataset: &RawDataset,
    retrievals: I,
    mode: &AblationMode,
    config: &AugmentConfig,
    tokenizer: &dyn Tokenizer,
    images: &dyn ImageSource,
    composites: Option<&CompositeOutput>,
    sink: W,
) -> Result<DatasetReport, AugmentError>
where
    W: Write,
    I: IntoIterator<Item = RetrievalResult>,
{
    if dataset.task() != mode.task() {
        return Err(AugmentError::TaskMismatch {
            record: dataset.task(),
            mode: mode.task(),
        });
    }
    if mode.use_image() && composites.is_none() {
        return Err(AugmentError::NoCompositeOutput);
    }
    let by_id: HashMap<String, RetrievalResult> =
        retrievals.into_iter().map(|r| (r.query_id.clone(), r)).collect();

    let built: Vec<_> = dataset
        .records()
        .par_iter()
        .map(|record| {
            let retrieval = by_id.get(record.sample_id());
            let sample = build_sample(record, retrieval, mode, config, tokenizer, images)?;
            Ok((record, retrieval, sample))
        })
        .collect::<Result<_, AugmentError>>()?;

    let mut report = DatasetReport {
        task: dataset.task(),
        mode: mode.name().to_owned(),
        total_records: dataset.len(),
        with_captions: 0,
        with_captions_and_image: 0,
        emitted: 0,
        join_misses: 0,
        truncated: 0,
        bytes_without_retrieval: 0,
        bytes_with_retrieval: 0,
    };
    for (_, retrieval, _) in &built {
        match context_entry(*retrieval).0 {
            RetrievalStatus::Full => {
                report.with_captions += 1;
                report.with_captions_and_image += 1;
            }
            RetrievalStatus::CaptionsOnly => report.with_captions += 1,
            RetrievalStatus::Missing => {}
        }
        if retrieval.is_none() {
            report.join_misses += 1;
        }
    }

    let mut headers: Vec<&str> = dataset.headers().iter().map(String::as_str).collect();
    if !mode.is_baseline() {
        headers.extend(["retrieved_context", "retrieval_status"]);
        if mode.use_image() {
            headers.push("composite_image_ref");
        }
    }
    let mut out = TsvWriter::new(CountingWriter { inner: sink, bytes: 0 });
    out.write_row(&headers)?;
    let mut plain = TsvWriter::new(CountingWriter {
        inner: std::io::sink(),
        bytes: 0,
    });
    plain.write_row(dataset.headers())?;

    for (record, _, sample) in built {
        let Some(sample) = sample else { continue };
        report.emitted += 1;
        plain.write_row(record.fields())?;
        if mode.is_baseline() {
            out.write_row(record.fields())?;
            continue;
        }
        let full_context = match context_entry(by_id.get(record.sample_id())).1 {
            Some(e) => super::sample::build_text_context(mode, e.mapped.as_ref(), Some(&e.alt_text), config),
            None => String::new(),
        };
        if sample.context != full_context {
            report.truncated += 1;
        }
        let mut row: Vec<String> = record.fields().to_vec();
        row.push(sample.context.clone());
        row.push(sample.retrieval_status.as_str().to_owned());
        if let SampleImage::Composite(img) = &sample.image {
            let target = composites.expect("checked above");
            let name = format!("{}.png", file_stem_for(&sample.sample_id));
            img.write_png(target.dir.join(&name))?;
            row.push(if target.ref_prefix.is_empty() {
                name
            } else {
                format!("{}/{name}", target.ref_prefix.trim_end_matches('/'))
            });
        }
        out.write_row(row)?;
    }
    report.bytes_with_retrieval = out.finish()?.bytes;
    report.bytes_without_retrieval = plain.finish()?.bytes;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::image::{MemoryImageSource, RgbImage};
    use crate::augment::sample::WhitespaceTokenizer;
    use crate::retriever::{MappedCaptions, MemoryEntry, RetrievedHit};

    fn dataset(n: usize) -> RawDataset {
        let records = (0..n)
            .map(|i| RawRecord::captioning(&format!("s{i}"), &format!("q{i}.png"), &format!("caption {i}")))
            .collect();
        RawDataset::from_records(Task::Captioning, records).unwrap()
    }

    fn retrieval(id: &str, mapped: bool) -> RetrievalResult {
        let entry = MemoryEntry {
            id: format!("m-{id}"),
            image_ref: "m.png".into(),
            alt_text: "some alt".into(),
            mapped: mapped.then(|| MappedCaptions::from_list(vec!["top".into(), "other".into()]).unwrap()),
        };
        RetrievalResult {
            query_id: id.into(),
            hits: vec![RetrievedHit {
                entry: entry.clone(),
                score: 1.0,
            }],
            top1: mapped.then_some(entry),
        }
    }

    fn images(n: usize) -> MemoryImageSource {
        let mut src = MemoryImageSource::new();
        for i in 0..n {
            src.insert(format!("q{i}.png"), RgbImage::solid(4, 3, [i as u8, 0, 0]).unwrap());
        }
        src.insert("m.png", RgbImage::solid(2, 2, [0, 0, 9]).unwrap());
        src
    }

    fn emit(ds: &RawDataset, rs: Vec<RetrievalResult>, mode: &str, dir: &Path) -> (DatasetReport, String) {
        let mode = AblationMode::named(ds.task(), mode).unwrap();
        let comp = CompositeOutput {
            dir: dir.to_path_buf(),
            ref_prefix: "composites".into(),
        };
        let mut out = Vec::new();
        let report = emit_dataset(
            ds,
            rs,
            &mode,
            &AugmentConfig::default(),
            &WhitespaceTokenizer,
            &images(ds.len()),
            Some(&comp),
            &mut out,
        )
        .unwrap();
        (report, String::from_utf8(out).unwrap())
    }

    #[test]
    fn all_present() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(10);
        let rs = (0..10).map(|i| retrieval(&format!("s{i}"), true)).collect();
        let (report, text) = emit(&ds, rs, "image_top_caption_all_captions", dir.path());
        assert_eq!((report.total_records, report.with_captions, report.emitted), (10, 10, 10));
        assert_eq!(text.lines().count(), 11);
        assert!(text.lines().nth(1).unwrap().ends_with("\tfull\tcomposites/s0.png"));
        let img = RgbImage::read_png(dir.path().join("s0.png")).unwrap();
        assert_eq!((img.width(), img.height()), (4 + 3, 3));
    }

    #[test]
    fn missing_mappings_filter_image_modes() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(10);
        let rs: Vec<_> = (0..10).map(|i| retrieval(&format!("s{i}"), i >= 3)).collect();
        let (report, _) = emit(&ds, rs.clone(), "image", dir.path());
        assert_eq!(report.emitted, 7);
        assert_eq!(report.with_captions_and_image, 7);
        let (report, text) = emit(&ds, rs, "top_caption", dir.path());
        assert_eq!(report.emitted, 10);
        assert!(text.contains("s0\tq0.png\tcaption 0\t\tmissing\n"));
        assert!(report.bytes_with_retrieval >= report.bytes_without_retrieval);
    }

    #[test]
    fn join_miss_is_counted() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(4);
        let (report, _) = emit(&ds, vec![retrieval("s1", true)], "top_caption", dir.path());
        assert_eq!(report.join_misses, 3);
        assert_eq!(report.emitted, 4);
    }

    #[test]
    fn baseline_passes_through() {
        let dir = tempfile::tempdir().unwrap();
        let text = "sample_id\timage_ref\tquestion\tanswer\nv1\ta.png\tis it?\tyes\nv2\tb.png\thow many?\t2\n";
        let ds = RawDataset::read_tsv(text.as_bytes(), Task::Vqa).unwrap();
        let (report, out) = emit(&ds, vec![], "none", dir.path());
        assert_eq!(out, text);
        assert_eq!(report.bytes_with_retrieval, report.bytes_without_retrieval);
        assert_eq!(report.bytes_with_retrieval, text.len());
    }

    #[test]
    fn malformed_rows_name_the_field() {
        let text = "sample_id\timage_ref\tquestion\tanswer\nv1\ta.png\t\tyes\n";
        match RawDataset::read_tsv(text.as_bytes(), Task::Vqa) {
            Err(AugmentError::MalformedRecord { field, line: 2, .. }) => assert_eq!(field, "question"),
            other => panic!("{other:?}"),
        }
        let missing = "sample_id\timage_ref\tquestion\nv1\ta.png\tq\n";
        let err = RawDataset::read_tsv(missing.as_bytes(), Task::Vqa).unwrap_err();
        assert!(err.to_string().contains("answer"), "{err}");
        let dup = "sample_id\timage_ref\tcaption\nx\ta\tb\nx\tc\td\n";
        assert!(matches!(
            RawDataset::read_tsv(dup.as_bytes(), Task::Captioning),
            Err(AugmentError::DuplicateSample(_))
        ));
    }

    #[test]
    fn image_modes_need_output_dir() {
        let ds = dataset(1);
        let mode = AblationMode::named(Task::Captioning, "image").unwrap();
        let err = emit_dataset(
            &ds,
            vec![],
            &mode,
            &AugmentConfig::default(),
            &WhitespaceTokenizer,
            &images(1),
            None,
            Vec::new(),
        )
        .unwrap_err();
        assert!(matches!(err, AugmentError::NoCompositeOutput));
    }
}
