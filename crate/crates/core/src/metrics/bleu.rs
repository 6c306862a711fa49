use std::collections::HashMap;

use super::{EvalCorpus, MetricError};

const MAX_N: usize = 4;

/// Corpus-level sufficient statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BleuStats {
    /// Clipped n-gram matches, n = 1..=4.
    pub matches: [usize; MAX_N],
    /// Candidate n-gram totals, n = 1..=4.
    pub totals: [usize; MAX_N],
    pub candidate_length: usize,
    /// Sum of the reference lengths closest to each candidate.
    pub reference_length: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

impl BleuStats {
    pub fn collect(corpus: &EvalCorpus) -> Self {
        let mut stats = Self::default();
        for item in corpus.items() {
            let c = item.candidate.len();
            stats.candidate_length += c;
            // Closest reference length, shorter one on ties.
            stats.reference_length += item
                .references
                .iter()
                .map(|r| r.len())
                .min_by_key(|&r| (r.abs_diff(c), r))
                .unwrap_or(0);
            for n in 1..=MAX_N {
                let cand = ngram_counts(&item.candidate, n);
                let mut max_ref: HashMap<&[String], usize> = HashMap::new();
                for r in &item.references {
                    for (gram, count) in ngram_counts(r, n) {
                        let slot = max_ref.entry(gram).or_insert(0);
                        *slot = (*slot).max(count);
                    }
                }
                stats.totals[n - 1] += c.saturating_sub(n - 1);
                stats.matches[n - 1] += cand
                    .iter()
                    .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
                    .sum::<usize>();
            }
        }
        stats
    }

    pub fn score(&self) -> f64 {
        if self.candidate_length == 0 || self.matches.contains(&0) {
            return 0.0;
        }
        let log_precision: f64 = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| (m as f64 / t as f64).ln())
            .sum::<f64>()
            / MAX_N as f64;
        let (c, r) = (self.candidate_length as f64, self.reference_length as f64);
        let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        brevity * log_precision.exp()
    }
}

/// Corpus BLEU with uniform 1..4-gram weights and brevity penalty, no
/// smoothing. Any zero n-gram precision gives 0.
pub fn bleu4(corpus: &EvalCorpus) -> Result<f64, MetricError> {
    if corpus.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(BleuStats::collect(corpus).score())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EvalItem;

    fn corpus(items: &[(&str, &[&str])]) -> EvalCorpus {
        EvalCorpus::new(items.iter().map(|(c, r)| EvalItem::from_text(c, r)).collect()).unwrap()
    }

    #[test]
    fn perfect_match_is_one() {
        let c = corpus(&[
            ("a man rides a red bike", &["a man rides a red bike"]),
            ("two dogs play in the snow", &["two dogs play in the snow"]),
        ]);
        assert_eq!(bleu4(&c).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        let c = corpus(&[("alpha beta gamma delta", &["one two three four"])]);
        assert_eq!(bleu4(&c).unwrap(), 0.0);
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(matches!(bleu4(&EvalCorpus::default()), Err(MetricError::EmptyCorpus)));
    }

    #[test]
    fn hand_computed() {
        // candidate: the cat sat on the mat (6), reference: the cat is on the mat (6)
        // p1 = 5/6, p2 = 3/5, p3 = 1/4, p4 = 0/3 -> 0
        let c = corpus(&[("the cat sat on the mat", &["the cat is on the mat"])]);
        let s = BleuStats::collect(&c);
        assert_eq!(s.matches, [5, 3, 1, 0]);
        assert_eq!(s.totals, [6, 5, 4, 3]);
        assert_eq!(bleu4(&c).unwrap(), 0.0);
        // short candidate gets the brevity penalty
        let c = corpus(&[("a b c d", &["a b c d e f g h"])]);
        assert!((bleu4(&c).unwrap() - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn clipping() {
        let c = corpus(&[("the the the the", &["the cat"])]);
        assert_eq!(BleuStats::collect(&c).matches[0], 1);
    }
}
