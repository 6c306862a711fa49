//! Every VQA ablation mode applied to one record, including truncation of a
//! long context to the source-length limit.
//!
//! cargo run --example augment_vqa

use ragvl::augment::{build_sample, AblationMode, AugmentConfig, MemoryImageSource, RawRecord, Task, WhitespaceTokenizer};
use ragvl::retriever::{MappedCaptions, MemoryEntry, RetrievalResult, RetrievedHit};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let entry = MemoryEntry {
        id: "m7".into(),
        image_ref: "img/m7.png".into(),
        alt_text: "two brown dogs in a park".into(),
        mapped: Some(MappedCaptions::from_list(vec![
            "two dogs play in the park".into(),
            "a pair of brown dogs on grass".into(),
        ])?),
    };
    let retrieval = RetrievalResult {
        query_id: "v1".into(),
        hits: vec![RetrievedHit { entry: entry.clone(), score: 0.91 }],
        top1: Some(entry),
    };
    let record = RawRecord::vqa("v1", "img/q1.png", "how many dogs are there?", "two");
    let images = MemoryImageSource::new();
    let tok = WhitespaceTokenizer;

    for mode in AblationMode::all(Task::Vqa) {
        let cfg = AugmentConfig::default();
        let sample = build_sample(&record, Some(&retrieval), &mode, &cfg, &tok, &images)?.expect("vqa keeps every record");
        println!("{:<26} {}", mode.name(), sample.input_text);
    }

    let tight = AugmentConfig {
        max_source_length: 12,
        ..AugmentConfig::default()
    };
    let mode = AblationMode::named(Task::Vqa, "alttext_all_captions")?;
    let sample = build_sample(&record, Some(&retrieval), &mode, &tight, &tok, &images)?.unwrap();
    println!("\nlimited to 12 tokens: {}", sample.input_text);
    Ok(())
}
