//! Seeded synthetic fixtures and the end-to-end demo pipeline.
//!
//! The fixtures imitate the shape of a real setup at toy scale: a memory of
//! topic-clustered embeddings with alt text, a caption corpus that misses
//! some ids, small PNGs (some memory items have none), and captioning and
//! VQA datasets whose query embeddings sit near the same topic centres.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augment::{
    build_sample, emit_dataset, retrieval_only_caption, AblationMode, CompositeOutput, DatasetReport,
    FsImageSource, RawDataset, RawRecord, RgbImage, Task, WhitespaceTokenizer,
};
use crate::config::{PipelineConfig, DEFAULT_MODE};
use crate::decode::{decode_all, RankedAnswers, ScorerFixture, TokenMode, END_TOKEN_TEXT};
use crate::embed_store::{EmbeddingStore, StoreBuilder};
use crate::index::IvfIndex;
use crate::jsonl;
use crate::metrics::{vqa_accuracy, CaptionLine, CaptionReport, EvalCorpus, QuestionType, VqaBreakdown, VqaItem, VqaLine};
use crate::retriever::{
    write_results_jsonl, CaptionCorpus, MappedCaptions, MemoryMetadata, RetrievalResult, Retriever,
};
use crate::Error;

struct Topic {
    subject: &'static str,
    plural: &'static str,
    color: &'static str,
    rgb: [u8; 3],
    place: &'static str,
    verb: &'static str,
}

const TOPICS: &[Topic] = &[
    Topic { subject: "dog", plural: "dogs", color: "brown", rgb: [140, 90, 40], place: "park", verb: "running" },
    Topic { subject: "cat", plural: "cats", color: "black", rgb: [20, 20, 20], place: "kitchen", verb: "sleeping" },
    Topic { subject: "horse", plural: "horses", color: "white", rgb: [235, 235, 235], place: "field", verb: "grazing" },
    Topic { subject: "bird", plural: "birds", color: "blue", rgb: [40, 80, 220], place: "tree", verb: "singing" },
    Topic { subject: "car", plural: "cars", color: "red", rgb: [210, 30, 30], place: "street", verb: "parked" },
    Topic { subject: "boat", plural: "boats", color: "yellow", rgb: [240, 220, 40], place: "harbor", verb: "floating" },
    Topic { subject: "train", plural: "trains", color: "green", rgb: [30, 160, 60], place: "station", verb: "waiting" },
    Topic { subject: "kite", plural: "kites", color: "orange", rgb: [250, 140, 20], place: "beach", verb: "flying" },
];

const COUNTS: &[&str] = &["one", "two", "three", "four"];

/// Sizes and coverage rates of the synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub memory_size: usize,
    pub dimension: usize,
    /// Records per dataset (captioning and VQA each).
    pub records: usize,
    /// Fraction of memory ids with a caption-corpus row.
    pub caption_coverage: f64,
    /// Fraction of memory ids with an image.
    pub image_coverage: f64,
    /// Norm of the noise added to a topic centre.
    pub noise: f64,
    /// Every n-th memory item copies the previous item's vector.
    pub duplicate_every: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            memory_size: 400,
            dimension: 32,
            records: 50,
            caption_coverage: 0.8,
            image_coverage: 0.9,
            noise: 0.35,
            duplicate_every: 25,
        }
    }
}

pub struct DemoFixtures {
    pub memory: EmbeddingStore,
    pub metadata: MemoryMetadata,
    pub captions: CaptionCorpus,
    /// PNGs keyed by `image_ref`.
    pub images: BTreeMap<String, RgbImage>,
    pub captioning: RawDataset,
    pub captioning_queries: EmbeddingStore,
    /// Reference captions per captioning sample id.
    pub caption_references: BTreeMap<String, Vec<String>>,
    pub vqa: RawDataset,
    pub vqa_queries: EmbeddingStore,
    /// Annotations with an empty `predicted` field.
    pub vqa_annotations: Vec<VqaLine>,
    /// Closed answer set, sorted.
    pub answers: Vec<String>,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

fn near(rng: &mut ChaCha8Rng, centre: &[f32], noise: f64) -> Vec<f32> {
    let scale = noise / (centre.len() as f64).sqrt();
    centre
        .iter()
        .map(|&c| (f64::from(c) + scale * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect()
}

/// Every tenth record has no query embedding, so it never gets a retrieval.
fn lacks_query(record: usize) -> bool {
    record % 10 == 9
}

fn noun(topic: &Topic, count: usize) -> &'static str {
    if count == 0 {
        topic.subject
    } else {
        topic.plural
    }
}

fn picture(rng: &mut ChaCha8Rng, topic: &Topic) -> RgbImage {
    let w = rng.random_range(6..=12);
    let h = rng.random_range(4..=10);
    let [r, g, b] = topic.rgb;
    RgbImage::from_fn(w, h, |x, y| [r.wrapping_add((x * 7) as u8), g.wrapping_add((y * 5) as u8), b])
        .expect("non-empty size")
}

impl DemoFixtures {
    pub fn generate(seed: u64, shape: &FixtureSpec) -> Result<Self, Error> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = shape.dimension;
        let centres: Vec<Vec<f32>> = TOPICS.iter().map(|_| unit_gaussian(&mut rng, d)).collect();

        let mut memory = StoreBuilder::new(d, true)?;
        let mut metadata = MemoryMetadata::new();
        let mut captions = CaptionCorpus::new();
        let mut images = BTreeMap::new();
        let mut previous: Option<Vec<f32>> = None;
        for i in 0..shape.memory_size {
            let id = format!("m{i:04}");
            let ti = rng.random_range(0..TOPICS.len());
            let t = &TOPICS[ti];
            let count = rng.random_range(0..COUNTS.len());
            let vector = match &previous {
                Some(p) if shape.duplicate_every > 0 && i % shape.duplicate_every == 0 => p.clone(),
                _ => near(&mut rng, &centres[ti], shape.noise),
            };
            previous = Some(vector.clone());
            memory.push(id.clone(), vector)?;

            let image_ref = if rng.random::<f64>() < shape.image_coverage {
                let r = format!("images/{id}.png");
                images.insert(r.clone(), picture(&mut rng, t));
                r
            } else {
                String::new()
            };
            metadata.insert(&id, image_ref, format!("IMG_{i:04}.jpg {} {} stock photo", t.subject, t.place));
            if rng.random::<f64>() < shape.caption_coverage {
                let n = noun(t, count);
                let top = format!("{} {} {n} {} in the {}", COUNTS[count], t.color, t.verb, t.place);
                let all = vec![
                    top.clone(),
                    format!("a photo of {} {} {n}", COUNTS[count], t.color),
                    format!("{n} near the {}", t.place),
                ];
                captions.insert(&id, MappedCaptions::new(top, all).expect("generated captions are valid"));
            }
        }

        let mut cap_records = Vec::new();
        let mut cap_queries = StoreBuilder::new(d, true)?;
        let mut caption_references = BTreeMap::new();
        for j in 0..shape.records {
            let id = format!("c{j:03}");
            let ti = rng.random_range(0..TOPICS.len());
            let t = &TOPICS[ti];
            let count = rng.random_range(0..COUNTS.len());
            let n = noun(t, count);
            let image_ref = format!("images/{id}.png");
            images.insert(image_ref.clone(), picture(&mut rng, t));
            let caption = format!("{} {} {n} {} near the {}", COUNTS[count], t.color, t.verb, t.place);
            caption_references.insert(
                id.clone(),
                vec![caption.clone(), format!("{} {n} in the {}", COUNTS[count], t.place)],
            );
            cap_records.push(RawRecord::captioning(&id, &image_ref, &caption));
            let q = near(&mut rng, &centres[ti], shape.noise);
            if !lacks_query(j) {
                cap_queries.push(id, q)?;
            }
        }

        let colors: Vec<&str> = TOPICS.iter().map(|t| t.color).collect();
        let mut vqa_records = Vec::new();
        let mut vqa_queries = StoreBuilder::new(d, true)?;
        let mut vqa_annotations = Vec::new();
        for j in 0..shape.records {
            let id = format!("q{j:03}");
            let ti = rng.random_range(0..TOPICS.len());
            let t = &TOPICS[ti];
            let count = rng.random_range(0..COUNTS.len());
            let image_ref = format!("images/{id}.png");
            images.insert(image_ref.clone(), picture(&mut rng, t));
            let (question, answer, qtype, class): (String, &str, _, Vec<&str>) = match j % 3 {
                0 => (format!("what color is the {}?", t.subject), t.color, QuestionType::Other, colors.clone()),
                1 => (
                    format!("how many {} are there?", t.plural),
                    COUNTS[count],
                    QuestionType::Number,
                    COUNTS.to_vec(),
                ),
                _ => {
                    let asked = if rng.random::<bool>() { ti } else { rng.random_range(0..TOPICS.len()) };
                    let answer = if asked == ti { "yes" } else { "no" };
                    (
                        format!("is there a {} in the picture?", TOPICS[asked].subject),
                        answer,
                        QuestionType::YesNo,
                        vec!["yes", "no"],
                    )
                }
            };
            let agreeing = rng.random_range(6..=10);
            let wrong: Vec<&str> = class.iter().copied().filter(|a| *a != answer).collect();
            let mut annotators: Vec<String> = (0..10)
                .map(|k| {
                    if k < agreeing {
                        answer.to_owned()
                    } else {
                        wrong[rng.random_range(0..wrong.len())].to_owned()
                    }
                })
                .collect();
            annotators.shuffle(&mut rng);
            vqa_annotations.push(VqaLine {
                id: id.clone(),
                predicted: String::new(),
                annotator_answers: annotators,
                question_type: qtype,
            });
            vqa_records.push(RawRecord::vqa(&id, &image_ref, &question, answer));
            let q = near(&mut rng, &centres[ti], shape.noise);
            if !lacks_query(j) {
                vqa_queries.push(id, q)?;
            }
        }

        let answers: BTreeSet<String> = colors
            .iter()
            .chain(COUNTS)
            .chain(&["yes", "no"])
            .map(|s| (*s).to_owned())
            .collect();

        Ok(Self {
            memory: memory.finish(),
            metadata,
            captions,
            images,
            captioning: RawDataset::from_records(Task::Captioning, cap_records)?,
            captioning_queries: cap_queries.finish(),
            caption_references,
            vqa: RawDataset::from_records(Task::Vqa, vqa_records)?,
            vqa_queries: vqa_queries.finish(),
            vqa_annotations,
            answers: answers.into_iter().collect(),
        })
    }

    /// Writes every fixture file under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(dir.join("images"))?;
        self.memory.persist_path(dir.join("memory.rvem"))?;
        self.metadata.write_tsv(create(&dir.join("metadata.tsv"))?)?;
        self.captions.write_tsv(create(&dir.join("captions.tsv"))?)?;
        for (r, img) in &self.images {
            img.write_png(dir.join(r))?;
        }
        self.captioning.write_tsv(create(&dir.join("captioning.tsv"))?)?;
        self.captioning_queries.persist_path(dir.join("captioning_queries.rvem"))?;
        let refs: Vec<CaptionLine> = self
            .caption_references
            .iter()
            .map(|(id, r)| CaptionLine {
                id: id.clone(),
                candidate: String::new(),
                references: r.clone(),
            })
            .collect();
        jsonl::write(&refs, create(&dir.join("captioning_references.jsonl"))?)?;
        self.vqa.write_tsv(create(&dir.join("vqa.tsv"))?)?;
        self.vqa_queries.persist_path(dir.join("vqa_queries.rvem"))?;
        jsonl::write(&self.vqa_annotations, create(&dir.join("vqa_annotations.jsonl"))?)?;
        let mut answers = create(&dir.join("answers.txt"))?;
        for a in &self.answers {
            writeln!(answers, "{a}")?;
        }
        answers.flush()?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Path {
            path: path.to_owned(),
            source,
        })
}

const BOOSTED: f64 = 8.0;
const IN_CLASS: f64 = 2.0;

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A table scorer standing in for a VQA model: it favours answers of the
/// question's type, and among those the ones that occur in the retrieved
/// context.
pub fn context_scorer<S: AsRef<str>>(id: &str, question: &str, context: &str, answers: &[S]) -> ScorerFixture {
    let q = question.to_lowercase();
    let ctx = words(context);
    let class: Vec<&str> = if q.starts_with("how many") {
        COUNTS.to_vec()
    } else if q.starts_with("what color") {
        TOPICS.iter().map(|t| t.color).collect()
    } else {
        vec!["yes", "no"]
    };
    let mut weights: Vec<(&str, f64)> = Vec::new();
    if class == ["yes", "no"] {
        let asked: BTreeSet<String> = words(&q)
            .into_iter()
            .filter(|w| !["is", "there", "a", "in", "the", "picture"].contains(&w.as_str()))
            .collect();
        let seen = asked.iter().any(|w| ctx.contains(w));
        weights.push(("yes", if seen { BOOSTED } else { IN_CLASS }));
        weights.push(("no", if seen { IN_CLASS } else { BOOSTED }));
    } else {
        for a in answers.iter().map(AsRef::as_ref) {
            if class.contains(&a) {
                weights.push((a, if ctx.contains(a) { BOOSTED } else { IN_CLASS }));
            }
        }
    }
    // Spread each answer's weight along its character path.
    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (answer, w) in weights {
        let chars: Vec<char> = answer.chars().collect();
        for k in 0..=chars.len() {
            let prefix: String = chars[..k].iter().collect();
            let next = chars.get(k).map_or_else(|| END_TOKEN_TEXT.to_owned(), |c| c.to_string());
            let slot = table.entry(prefix).or_default().entry(next).or_insert(0.0);
            *slot = f64::max(*slot, w);
        }
    }
    ScorerFixture {
        id: id.to_owned(),
        default_weight: 1.0,
        table,
    }
}

/// Everything the demo writes, relative to its output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub captioning: CaptionReport,
    pub vqa: VqaBreakdown,
    pub augment: Vec<DatasetReport>,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    /// Retrieval-only captioning baseline: the top caption is the prediction.
    captioning: &'a CaptionReport,
    /// Constrained decoding with the context scorer.
    vqa: &'a VqaBreakdown,
    augment: &'a [DatasetReport],
}

/// Generates fixtures under `out/fixtures` and runs index build, retrieval,
/// augmentation, decoding and evaluation on them.
pub fn run_demo(out: &Path, config: &PipelineConfig) -> Result<DemoReport, Error> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let fixtures_dir = out.join("fixtures");
    let fx = DemoFixtures::generate(config.seed, &FixtureSpec::default())?;
    fx.write(&fixtures_dir)?;
    let mut artifacts = vec![PathBuf::from("index.rvix")];

    let index = IvfIndex::build(&fx.memory, config.nlist.min(fx.memory.len()), config.seed)?;
    index.persist_path(out.join("index.rvix"))?;
    let retriever = Retriever::new(&fx.memory, &fx.metadata, &fx.captions, config.retrieval()).with_index(&index);
    let cap_retrievals = retriever.retrieve_all(&fx.captioning_queries)?;
    let vqa_retrievals = retriever.retrieve_all(&fx.vqa_queries)?;
    for (name, results) in [
        ("retrievals_captioning.jsonl", &cap_retrievals),
        ("retrievals_vqa.jsonl", &vqa_retrievals),
    ] {
        write_results_jsonl(results, create(&out.join(name))?)?;
        artifacts.push(name.into());
    }

    let augment_cfg = config.augment();
    let images = FsImageSource::new(&fixtures_dir);
    let cap_mode = config.ablation_mode(Task::Captioning)?;
    let vqa_mode = config
        .ablation_mode(Task::Vqa)
        .or_else(|_| AblationMode::named(Task::Vqa, DEFAULT_MODE))?;
    let image_mode = AblationMode::named(Task::Captioning, "image_top_caption_all_captions")?;
    let composites = CompositeOutput {
        dir: out.join("composites"),
        ref_prefix: "composites".into(),
    };
    let mut reports = Vec::new();
    for (name, dataset, retrievals, mode) in [
        ("captioning_augmented.tsv", &fx.captioning, &cap_retrievals, &cap_mode),
        ("captioning_image_augmented.tsv", &fx.captioning, &cap_retrievals, &image_mode),
        ("vqa_augmented.tsv", &fx.vqa, &vqa_retrievals, &vqa_mode),
    ] {
        if mode.use_image() {
            fs::create_dir_all(&composites.dir)?;
        }
        let report = emit_dataset(
            dataset,
            retrievals.iter().cloned(),
            mode,
            &augment_cfg,
            &WhitespaceTokenizer,
            &images,
            mode.use_image().then_some(&composites),
            create(&out.join(name))?,
        )?;
        reports.push(report);
        artifacts.push(name.into());
    }

    let by_id = |rs: &[RetrievalResult]| -> BTreeMap<String, RetrievalResult> {
        rs.iter().map(|r| (r.query_id.clone(), r.clone())).collect()
    };
    let cap_by_id = by_id(&cap_retrievals);
    let caption_lines: Vec<CaptionLine> = fx
        .captioning
        .records()
        .iter()
        .map(|r| CaptionLine {
            id: r.sample_id().to_owned(),
            candidate: retrieval_only_caption(cap_by_id.get(r.sample_id())),
            references: fx.caption_references[r.sample_id()].clone(),
        })
        .collect();
    jsonl::write(&caption_lines, create(&out.join("eval_captioning.jsonl"))?)?;
    artifacts.push("eval_captioning.jsonl".into());
    let captioning = EvalCorpus::from_lines(&caption_lines)?.report()?;

    let vqa_by_id = by_id(&vqa_retrievals);
    let scorers = fx
        .vqa
        .records()
        .iter()
        .map(|r| {
            let sample = build_sample(
                r,
                vqa_by_id.get(r.sample_id()),
                &vqa_mode,
                &augment_cfg,
                &WhitespaceTokenizer,
                &images,
            )?
            .expect("vqa keeps every record");
            Ok(context_scorer(r.sample_id(), r.text(), &sample.context, &fx.answers))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    jsonl::write(&scorers, create(&out.join("decode_scorers.jsonl"))?)?;
    let decoded: Vec<RankedAnswers> = decode_all(&fx.answers, &scorers, TokenMode::Char, &config.beam_config())?;
    jsonl::write(&decoded, create(&out.join("decode.jsonl"))?)?;
    artifacts.extend(["decode_scorers.jsonl".into(), "decode.jsonl".into()]);

    let vqa_lines: Vec<VqaLine> = fx
        .vqa_annotations
        .iter()
        .zip(&decoded)
        .map(|(a, d)| VqaLine {
            predicted: d.ranked.first().map(|h| h.answer.clone()).unwrap_or_default(),
            ..a.clone()
        })
        .collect();
    jsonl::write(&vqa_lines, create(&out.join("eval_vqa.jsonl"))?)?;
    artifacts.push("eval_vqa.jsonl".into());
    let items = vqa_lines.iter().map(VqaItem::from_line).collect::<Result<Vec<_>, _>>()?;
    let vqa = vqa_accuracy(&items)?;

    let mut text = serde_json::to_string_pretty(&EvalReport {
        captioning: &captioning,
        vqa: &vqa,
        augment: &reports,
    })
    .expect("report serializes");
    text.push('\n');
    fs::write(out.join("eval_report.json"), text)?;
    artifacts.push("eval_report.json".into());
    let sidecar = config.write_sidecar(&out.join("eval_report.json"))?;
    artifacts.push(sidecar.strip_prefix(out).expect("inside out").to_owned());

    for entry in fs::read_dir(&composites.dir).into_iter().flatten() {
        artifacts.push(Path::new("composites").join(entry?.file_name()));
    }
    artifacts.sort();
    Ok(DemoReport {
        captioning,
        vqa,
        augment: reports,
        artifacts,
    })
}
