use std::collections::{BTreeMap, HashMap, HashSet};

use super::{EvalCorpus, MetricError};

const MAX_N: usize = 4;
/// Width of the Gaussian length penalty.
pub const CIDER_SIGMA: f64 = 6.0;

type Gram<'a> = &'a [String];

/// tf-idf vectors for n = 1..=4 with their L2 norms. `length` counts bigram
/// occurrences, as the COCO reference scorer does.
struct Weighted<'a> {
    vectors: [BTreeMap<Gram<'a>, f64>; MAX_N],
    norms: [f64; MAX_N],
    length: f64,
}

fn counts(tokens: &[String]) -> BTreeMap<Gram<'_>, usize> {
    let mut out = BTreeMap::new();
    for n in 1..=MAX_N {
        for gram in tokens.windows(n) {
            *out.entry(gram).or_insert(0) += 1;
        }
    }
    out
}

fn weigh<'a>(counts: &BTreeMap<Gram<'a>, usize>, df: &HashMap<Gram<'a>, usize>, log_docs: f64) -> Weighted<'a> {
    let mut w = Weighted {
        vectors: Default::default(),
        norms: [0.0; MAX_N],
        length: 0.0,
    };
    for (&gram, &tf) in counts {
        let n = gram.len() - 1;
        let idf = log_docs - (df.get(gram).copied().unwrap_or(0).max(1) as f64).ln();
        let value = tf as f64 * idf;
        w.vectors[n].insert(gram, value);
        w.norms[n] += value * value;
        if n == 1 {
            w.length += tf as f64;
        }
    }
    for norm in &mut w.norms {
        *norm = norm.sqrt();
    }
    w
}

#[allow(clippy::needless_range_loop)]
fn similarity(hyp: &Weighted<'_>, reference: &Weighted<'_>) -> [f64; MAX_N] {
    let delta = hyp.length - reference.length;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut out = [0.0; MAX_N];
    for n in 0..MAX_N {
        let mut v = 0.0;
        for (gram, &h) in &hyp.vectors[n] {
            let r = reference.vectors[n].get(gram).copied().unwrap_or(0.0);
            v += h.min(r) * r;
        }
        if hyp.norms[n] != 0.0 && reference.norms[n] != 0.0 {
            v /= hyp.norms[n] * reference.norms[n];
        }
        out[n] = v * penalty;
    }
    out
}

/// CIDEr-D score of every item, idf taken over the reference sets.
pub fn cider_d_per_item(corpus: &EvalCorpus) -> Result<Vec<f64>, MetricError> {
    if corpus.len() < 2 {
        return Err(MetricError::IdfUndefined(corpus.len()));
    }
    let ref_counts: Vec<Vec<BTreeMap<Gram<'_>, usize>>> = corpus
        .items()
        .iter()
        .map(|it| it.references.iter().map(|r| counts(r)).collect())
        .collect();
    let mut df: HashMap<Gram<'_>, usize> = HashMap::new();
    for refs in &ref_counts {
        let grams: HashSet<Gram<'_>> = refs.iter().flat_map(|c| c.keys().copied()).collect();
        for g in grams {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let log_docs = (corpus.len() as f64).ln();

    Ok(corpus
        .items()
        .iter()
        .zip(&ref_counts)
        .map(|(item, refs)| {
            let hyp = weigh(&counts(&item.candidate), &df, log_docs);
            let mut total = [0.0; MAX_N];
            for r in refs {
                let sim = similarity(&hyp, &weigh(r, &df, log_docs));
                for (t, s) in total.iter_mut().zip(sim) {
                    *t += s;
                }
            }
            let mean_over_n = total.iter().sum::<f64>() / MAX_N as f64;
            mean_over_n / refs.len() as f64 * 10.0
        })
        .collect())
}

/// Corpus CIDEr-D: the mean of the per-item scores.
pub fn cider_d(corpus: &EvalCorpus) -> Result<f64, MetricError> {
    let scores = cider_d_per_item(corpus)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EvalItem;

    fn corpus(items: &[(&str, &[&str])]) -> EvalCorpus {
        EvalCorpus::new(items.iter().map(|(c, r)| EvalItem::from_text(c, r)).collect()).unwrap()
    }

    #[test]
    fn exact_disjoint_items_score_ten() {
        let c = corpus(&[
            ("a red bus parked outside", &["a red bus parked outside"]),
            ("two cats sleep on sofa", &["two cats sleep on sofa"]),
            ("kids fly kites at beach", &["kids fly kites at beach"]),
        ]);
        for s in cider_d_per_item(&c).unwrap() {
            assert!((s - 10.0).abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn disjoint_candidate_scores_zero() {
        let c = corpus(&[
            ("zebra yak quail", &["a red bus parked outside"]),
            ("two cats sleep on sofa", &["two cats sleep on sofa"]),
        ]);
        assert_eq!(cider_d_per_item(&c).unwrap()[0], 0.0);
    }

    #[test]
    fn needs_two_items() {
        let c = corpus(&[("a b c d", &["a b c d"])]);
        let err = cider_d(&c).unwrap_err();
        assert!(err.to_string().contains("idf undefined"));
    }

    #[test]
    fn shared_grams_lower_the_score() {
        // The second item shares every gram with the first, so idf is zero.
        let c = corpus(&[("a b c d", &["a b c d"]), ("x y z w", &["a b c d"])]);
        assert_eq!(cider_d_per_item(&c).unwrap()[0], 0.0);
    }
}
