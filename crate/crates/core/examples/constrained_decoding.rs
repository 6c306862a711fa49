//! Trie-constrained beam search over a closed answer set, scored by a small
//! lookup table.
//!
//! cargo run --example constrained_decoding

use ragvl::decode::{constrained_beam_search, AnswerTrie, BeamConfig, TableScorer, Vocab, END_TOKEN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let answers = ["yes", "no", "two", "three", "red"];
    let vocab = Vocab::chars(&answers);
    let trie = AnswerTrie::build(&answers, |a| vocab.encode(a).expect("in vocab"))?;
    let id = |c: &str| vocab.id(c).unwrap();

    // A scorer that leans towards "t" at the start and towards "w" after it.
    let mut scorer = TableScorer::new(vocab.len(), END_TOKEN, 1.0);
    scorer.set(&[], &[(id("t"), 6.0), (id("y"), 3.0)]);
    scorer.set(&[id("t")], &[(id("w"), 4.0), (id("h"), 2.0)]);

    for beam in [1, 2, trie.answer_count()] {
        let ranked = constrained_beam_search(&scorer, &(), &trie, &BeamConfig::with_beam(beam))?;
        let text: Vec<String> = ranked.iter().map(|h| format!("{} ({:.2})", vocab.decode(&h.tokens), h.logprob)).collect();
        println!("beam {beam}: {}", text.join(", "));
    }
    Ok(())
}
