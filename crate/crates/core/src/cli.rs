//! Command-line front end. Every subcommand loads its inputs, calls the
//! library and writes outputs plus a `<output>.config.json` sidecar.
//!
//! Failures print one JSON line to stderr,
//! `{"error":"usage"|"pipeline","message":...}`, and exit with 2 (usage) or
//! 1 (pipeline).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::augment::{emit_dataset, CompositeOutput, FsImageSource, RawDataset, Task, WhitespaceTokenizer};
use crate::config::{ConfigLayer, IndexBackend, PipelineConfig};
use crate::decode::{decode_all, read_answers, ScorerFixture, TokenMode};
use crate::embed_store::{EmbeddingStore, IngestOptions};
use crate::index::{search_exact_batch, IvfIndex, ScoredHit};
use crate::metrics::{vqa_accuracy, EvalCorpus, VqaItem};
use crate::retriever::{fuse_stores, read_results_jsonl, write_results_jsonl, CaptionCorpus, MemoryMetadata, Retriever};
use crate::{demo, jsonl, Error};

#[derive(Debug, Parser)]
#[command(name = "ragvl", version, about = "Retrieval augmentation for vision-language datasets")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings; each overrides the config file and `RAVEN_*` vars.
#[derive(Debug, Args)]
struct Settings {
    /// TOML file with pipeline settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Memory embedding store (RVEM or JSONL).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[arg(long, global = true)]
    backend: Option<IndexBackend>,
    #[arg(long, global = true)]
    nlist: Option<usize>,
    #[arg(long, global = true)]
    nprobe: Option<usize>,
    #[arg(long = "top-k", visible_alias = "k", global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    dedup_threshold: Option<f64>,
    #[arg(long, global = true)]
    max_source_length: Option<usize>,
    /// Ablation mode name.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    separator: Option<String>,
    #[arg(long, global = true)]
    beam: Option<usize>,
}

impl Settings {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            store: self.store.clone(),
            backend: self.backend,
            nlist: self.nlist,
            nprobe: self.nprobe,
            top_k: self.top_k,
            dedup_threshold: self.dedup_threshold,
            max_source_length: self.max_source_length,
            mode: self.mode.clone(),
            separator: self.separator.clone(),
            beam: self.beam,
            seed: self.seed,
            threads: self.threads,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or query an IVF index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Retrieve, dedup and map captions for a set of query embeddings.
    Retrieve {
        #[arg(long)]
        queries: PathBuf,
        /// Text embeddings fused with the image queries of the same id.
        #[arg(long)]
        text_queries: Option<PathBuf>,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit an augmented dataset TSV under one ablation mode.
    Augment {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        retrievals: PathBuf,
        /// Root for image_ref lookups; defaults to the dataset's directory.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Composite PNG directory for image modes.
        #[arg(long)]
        composites: Option<PathBuf>,
        /// Coverage report; defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score captions or VQA predictions.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Rank a closed answer set with trie-constrained beam search.
    Decode {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        scorers: PathBuf,
        #[arg(long, default_value = "char")]
        tokens: TokenMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic fixtures and run the whole pipeline on them.
    Demo {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum IndexCommand {
    Build {
        #[arg(long)]
        out: PathBuf,
    },
    Search {
        #[arg(long)]
        queries: PathBuf,
        /// Required with `--backend ivf`.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    Captioning {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Vqa {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Pipeline(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => Failure::Usage(c.to_string()),
            other => Failure::Pipeline(other),
        }
    }
}

macro_rules! impl_pipeline_from {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::from(Error::from(e))
            }
        })*
    };
}

impl_pipeline_from!(
    crate::embed_store::StoreError,
    crate::index::IndexError,
    crate::retriever::RetrieveError,
    crate::augment::AugmentError,
    crate::metrics::MetricError,
    crate::decode::DecodeError,
    crate::config::ConfigError,
    crate::jsonl::JsonlError,
    std::io::Error
);

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn report(kind: &str, message: &str) {
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    let line = serde_json::to_string(&ErrorLine { error: kind, message }).expect("error line serializes");
    eprintln!("{line}");
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            report("usage", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            report("usage", &m);
            2
        }
        Err(Failure::Pipeline(e)) => {
            report("pipeline", &e.to_string());
            1
        }
    }
}

fn resolve(settings: &Settings) -> Result<PipelineConfig, Failure> {
    let file = match &settings.config {
        Some(path) => {
            require_file(path)?;
            ConfigLayer::read_toml(path)?
        }
        None => ConfigLayer::default(),
    };
    let env = ConfigLayer::from_env(std::env::vars())?;
    Ok(PipelineConfig::resolve([&file, &env, &settings.layer()])?)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let config = resolve(&cli.settings)?;
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Usage(format!("threads: {e}")))?
            .install(|| dispatch(cli.command, &config)),
        None => dispatch(cli.command, &config),
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file not found: {}", path.display())))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| {
        Failure::Pipeline(Error::Path {
            path: path.to_owned(),
            source,
        })
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_store(config: &PipelineConfig) -> Result<EmbeddingStore, Failure> {
    let path = config
        .store
        .as_deref()
        .ok_or_else(|| Failure::Usage("--store (or `store` in the config) is required".into()))?;
    load_embeddings(path)
}

fn load_embeddings(path: &Path) -> Result<EmbeddingStore, Failure> {
    require_file(path)?;
    Ok(EmbeddingStore::ingest_path(path, IngestOptions::default())?)
}

fn load_index(path: Option<&Path>, config: &PipelineConfig) -> Result<Option<IvfIndex>, Failure> {
    match (config.backend, path) {
        (IndexBackend::Ivf, None) => Err(Failure::Usage("--backend ivf needs --index".into())),
        (_, Some(p)) => {
            require_file(p)?;
            Ok(Some(IvfIndex::load_path(p)?))
        }
        (IndexBackend::Exact, None) => Ok(None),
    }
}

#[derive(Serialize)]
struct SearchLine<'a> {
    query_id: &'a str,
    hits: Vec<ScoredHit>,
}

fn dispatch(command: Command, config: &PipelineConfig) -> Result<(), Failure> {
    match command {
        Command::Index(IndexCommand::Build { out }) => {
            let store = load_store(config)?;
            let index = IvfIndex::build(&store, config.nlist, config.seed)?;
            let mut w = create(&out)?;
            index.persist(&mut w)?;
            w.flush()?;
            config.write_sidecar(&out)?;
        }
        Command::Index(IndexCommand::Search { queries, index, out }) => {
            let store = load_store(config)?;
            let index = load_index(index.as_deref(), config)?;
            let queries = load_embeddings(&queries)?;
            let vectors: Vec<&[f32]> = (0..queries.len()).map(|i| queries.vector_at(i)).collect();
            let hits = match (config.backend, &index) {
                (IndexBackend::Ivf, Some(ix)) => ix.search_batch(&store, &vectors, config.top_k, config.nprobe)?,
                _ => search_exact_batch(&store, &vectors, config.top_k)?,
            };
            let lines: Vec<SearchLine<'_>> = hits
                .into_iter()
                .enumerate()
                .map(|(i, hits)| SearchLine {
                    query_id: queries.id_at(i),
                    hits,
                })
                .collect();
            jsonl::write(&lines, create(&out)?)?;
            config.write_sidecar(&out)?;
        }
        Command::Retrieve {
            queries,
            text_queries,
            metadata,
            captions,
            index,
            out,
        } => {
            let store = load_store(config)?;
            let index = load_index(index.as_deref(), config)?;
            let mut queries = load_embeddings(&queries)?;
            if let Some(t) = text_queries {
                queries = fuse_stores(&queries, &load_embeddings(&t)?)?;
            }
            require_file(&metadata)?;
            require_file(&captions)?;
            let metadata = MemoryMetadata::read_path(&metadata)?;
            let corpus = CaptionCorpus::read_path(&captions)?;
            let mut retriever = Retriever::new(&store, &metadata, &corpus, config.retrieval());
            if let Some(ix) = &index {
                retriever = retriever.with_index(ix);
            }
            let results = retriever.retrieve_all(&queries)?;
            write_results_jsonl(&results, create(&out)?)?;
            config.write_sidecar(&out)?;
        }
        Command::Augment {
            task,
            dataset,
            retrievals,
            images,
            composites,
            report,
            out,
        } => {
            let mode = config.ablation_mode(task)?;
            require_file(&dataset)?;
            require_file(&retrievals)?;
            let data = RawDataset::read_path(&dataset, task)?;
            let results = read_results_jsonl(File::open(&retrievals)?)?;
            let root = images.unwrap_or_else(|| dataset.parent().unwrap_or(Path::new(".")).to_owned());
            let composites = mode.use_image().then(|| match composites {
                Some(dir) => CompositeOutput {
                    ref_prefix: dir.to_string_lossy().into_owned(),
                    dir,
                },
                None => CompositeOutput {
                    dir: out.parent().unwrap_or(Path::new(".")).join("composites"),
                    ref_prefix: "composites".into(),
                },
            });
            if let Some(c) = &composites {
                fs::create_dir_all(&c.dir)?;
            }
            let mut w = create(&out)?;
            let summary = emit_dataset(
                &data,
                results,
                &mode,
                &config.augment(),
                &WhitespaceTokenizer,
                &FsImageSource::new(root),
                composites.as_ref(),
                &mut w,
            )?;
            w.flush()?;
            let report = report.unwrap_or_else(|| {
                let mut p = out.as_os_str().to_owned();
                p.push(".report.json");
                PathBuf::from(p)
            });
            write_json(&summary, &report)?;
            config.write_sidecar(&out)?;
        }
        Command::Eval(EvalCommand::Captioning { input, out }) => {
            require_file(&input)?;
            let corpus = EvalCorpus::read_jsonl(File::open(&input)?)?;
            write_json(&corpus.report()?, &out)?;
            config.write_sidecar(&out)?;
        }
        Command::Eval(EvalCommand::Vqa { input, out }) => {
            require_file(&input)?;
            let items = VqaItem::read_jsonl(File::open(&input)?)?;
            write_json(&vqa_accuracy(&items)?, &out)?;
            config.write_sidecar(&out)?;
        }
        Command::Decode {
            answers,
            scorers,
            tokens,
            out,
        } => {
            require_file(&answers)?;
            require_file(&scorers)?;
            let answers = read_answers(File::open(&answers)?)?;
            let fixtures = ScorerFixture::read_jsonl(File::open(&scorers)?)?;
            let ranked = decode_all(&answers, &fixtures, tokens, &config.beam_config())?;
            jsonl::write(&ranked, create(&out)?)?;
            config.write_sidecar(&out)?;
        }
        Command::Demo { out } => {
            demo::run_demo(&out, config)?;
        }
    }
    Ok(())
}
