//! Retrieval with near-duplicate removal, caption mapping and the top-1
//! pick that requires both an image and captions.
//!
//! cargo run --example retrieve_and_dedup

use ragvl::embed_store::StoreBuilder;
use ragvl::retriever::{CaptionCorpus, MappedCaptions, MemoryMetadata, RetrievalConfig, Retriever};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut b = StoreBuilder::new(3, true)?;
    b.push("m1".into(), vec![1.0, 0.0, 0.0])?
        .push("m1-copy".into(), vec![1.0, 0.01, 0.0])?
        .push("m2".into(), vec![0.8, 0.6, 0.0])?
        .push("m3".into(), vec![0.6, 0.0, 0.8])?;
    let store = b.finish();

    let mut meta = MemoryMetadata::new();
    meta.insert("m1", "", "a dog on grass");
    meta.insert("m1-copy", "img/m1b.png", "a dog on grass");
    meta.insert("m2", "img/m2.png", "a brown dog running");
    meta.insert("m3", "img/m3.png", "a cat indoors");

    let mut corpus = CaptionCorpus::new();
    corpus.insert("m1", MappedCaptions::from_list(vec!["a dog lying in the grass".into()])?);
    corpus.insert("m2", MappedCaptions::from_list(vec!["a dog runs in a park".into(), "brown dog outdoors".into()])?);

    let retriever = Retriever::new(&store, &meta, &corpus, RetrievalConfig::default());
    let result = retriever.retrieve("query-0", &[1.0, 0.1, 0.0], 4)?;
    for hit in &result.hits {
        let captions = hit.entry.mapped.as_ref().map_or("-", |m| m.top_caption());
        println!("{:<8} {:.3} image={:<12} caption={captions}", hit.entry.id, hit.score, hit.entry.image_ref);
    }
    // m1 is dropped as a near duplicate of the higher-scoring m1-copy, which
    // has an image but no captions, so m2 wins top-1.
    println!("top1: {:?}", result.top1.map(|e| e.id));
    Ok(())
}
