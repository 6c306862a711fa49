//! Corpus BLEU-4 and CIDEr-D for a handful of candidate captions.
//!
//! cargo run --example caption_metrics

use ragvl::metrics::{bleu4, cider_d, cider_d_per_item, EvalCorpus, EvalItem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = EvalCorpus::new(vec![
        EvalItem::from_text("a dog runs across the grass", &["a dog running across the grass", "a brown dog in a field"]),
        EvalItem::from_text("a red car parked on the street", &["a red car parked on a city street", "a car by the curb"]),
        EvalItem::from_text("two cats sleeping", &["two cats asleep on a sofa", "a pair of cats sleeping together"]),
    ])?;
    println!("BLEU-4  {:.4}", bleu4(&corpus)?);
    println!("CIDEr-D {:.4}", cider_d(&corpus)?);
    for (item, score) in corpus.items().iter().zip(cider_d_per_item(&corpus)?) {
        println!("  {:<32} {score:.4}", item.candidate.join(" "));
    }
    Ok(())
}
