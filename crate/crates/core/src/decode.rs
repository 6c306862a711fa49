//! Closed-vocabulary answer decoding: a prefix tree over tokenized answers
//! and a beam search that may only walk that tree.
//!
//! The next-token model is abstracted as a [`TokenScorer`]; hypotheses only
//! ever extend along trie edges (every other token is treated as −∞) and may
//! only end at a node that terminates an inserted answer.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

pub type TokenId = u32;

pub const DEFAULT_BEAM: usize = 5;
/// Tolerance on `Σ exp(log_probs) = 1` for scorer outputs.
pub const SCORER_MASS_TOLERANCE: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("answer {0:?} tokenizes to an empty sequence")]
    EmptyAnswer(String),
    #[error("answer list is empty")]
    NoAnswers,
    #[error("trie is empty")]
    EmptyTrie,
    #[error("prefix {0:?} is not a path in the trie")]
    PrefixNotInTrie(Vec<TokenId>),
    #[error("beam width must be at least 1")]
    ZeroBeam,
    #[error("trie uses the end token {0} as an answer token")]
    EndTokenInTrie(TokenId),
    #[error("scorer returned {found} log-probabilities for a vocabulary of {expected}")]
    ScorerWidth { expected: usize, found: usize },
    #[error("scorer output is not a distribution: {0}")]
    ScorerDistribution(String),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Node {
    children: BTreeMap<TokenId, usize>,
    terminal: bool,
}

/// Prefix tree over tokenized answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerTrie {
    nodes: Vec<Node>,
    answer_count: usize,
}

/// Tokens that may follow a prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allowed {
    pub tokens: BTreeSet<TokenId>,
    /// The prefix is itself a complete answer.
    pub end: bool,
}

impl Default for AnswerTrie {
    fn default() -> Self {
        Self {
            nodes: vec![Node::default()],
            answer_count: 0,
        }
    }
}

impl AnswerTrie {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tokenizes and inserts every answer; repeated answers collapse.
    pub fn build<S, F>(answers: &[S], mut tokenizer: F) -> Result<Self, DecodeError>
    where
        S: AsRef<str>,
        F: FnMut(&str) -> Vec<TokenId>,
    {
        if answers.is_empty() {
            return Err(DecodeError::NoAnswers);
        }
        let mut trie = Self::new();
        for answer in answers {
            let tokens = tokenizer(answer.as_ref());
            if tokens.is_empty() {
                return Err(DecodeError::EmptyAnswer(answer.as_ref().to_owned()));
            }
            trie.insert(&tokens);
        }
        Ok(trie)
    }

    /// Returns `true` when the sequence was not present before.
    pub fn insert(&mut self, tokens: &[TokenId]) -> bool {
        let mut node = 0;
        for &t in tokens {
            node = match self.nodes[node].children.get(&t) {
                Some(&child) => child,
                None => {
                    self.nodes.push(Node::default());
                    let child = self.nodes.len() - 1;
                    self.nodes[node].children.insert(t, child);
                    child
                }
            };
        }
        let fresh = !self.nodes[node].terminal;
        self.nodes[node].terminal = true;
        if fresh {
            self.answer_count += 1;
        }
        fresh
    }

    pub fn answer_count(&self) -> usize {
        self.answer_count
    }

    pub fn is_empty(&self) -> bool {
        self.answer_count == 0
    }

    fn node_of(&self, prefix: &[TokenId]) -> Option<usize> {
        prefix
            .iter()
            .try_fold(0usize, |node, t| self.nodes[node].children.get(t).copied())
    }

    pub fn contains(&self, tokens: &[TokenId]) -> bool {
        self.node_of(tokens).is_some_and(|n| self.nodes[n].terminal)
    }

    pub fn allowed_next(&self, prefix: &[TokenId]) -> Result<Allowed, DecodeError> {
        let node = self
            .node_of(prefix)
            .ok_or_else(|| DecodeError::PrefixNotInTrie(prefix.to_vec()))?;
        let node = &self.nodes[node];
        Ok(Allowed {
            tokens: node.children.keys().copied().collect(),
            end: node.terminal,
        })
    }

    /// Every inserted answer, in lexicographic token order.
    pub fn answers(&self) -> Vec<Vec<TokenId>> {
        let mut out = Vec::with_capacity(self.answer_count);
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if self.nodes[node].terminal {
                out.push(path.clone());
            }
            for (&t, &child) in self.nodes[node].children.iter().rev() {
                let mut next = path.clone();
                next.push(t);
                stack.push((child, next));
            }
        }
        out
    }

    fn uses_token(&self, token: TokenId) -> bool {
        self.nodes.iter().any(|n| n.children.contains_key(&token))
    }
}

/// Next-token model: log-probabilities over the whole vocabulary for a
/// prefix, given an opaque context.
pub trait TokenScorer {
    type Context: ?Sized;

    fn vocab_size(&self) -> usize;
    fn end_token(&self) -> TokenId;
    fn log_probs(&self, context: &Self::Context, prefix: &[TokenId]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    pub tokens: Vec<TokenId>,
    /// Sum of token log-probabilities, end token included when complete.
    pub logprob: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam: usize,
    /// Rank by `logprob / len^alpha` instead of raw `logprob`.
    pub length_penalty: Option<f64>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam: DEFAULT_BEAM,
            length_penalty: None,
        }
    }
}

impl BeamConfig {
    pub fn with_beam(beam: usize) -> Self {
        Self {
            beam,
            ..Self::default()
        }
    }

    fn rank_score(&self, h: &BeamHypothesis) -> f64 {
        match self.length_penalty {
            Some(alpha) if !h.tokens.is_empty() => h.logprob / (h.tokens.len() as f64).powf(alpha),
            _ => h.logprob,
        }
    }

    fn compare(&self, a: &BeamHypothesis, b: &BeamHypothesis) -> Ordering {
        self.rank_score(b)
            .total_cmp(&self.rank_score(a))
            .then_with(|| a.tokens.cmp(&b.tokens))
            .then_with(|| a.complete.cmp(&b.complete))
    }
}

fn checked_log_probs<S: TokenScorer>(
    scorer: &S,
    context: &S::Context,
    prefix: &[TokenId],
) -> Result<Vec<f64>, DecodeError> {
    let lp = scorer.log_probs(context, prefix);
    if lp.len() != scorer.vocab_size() {
        return Err(DecodeError::ScorerWidth {
            expected: scorer.vocab_size(),
            found: lp.len(),
        });
    }
    if let Some(i) = lp.iter().position(|x| !x.is_finite()) {
        return Err(DecodeError::ScorerDistribution(format!("non-finite value at token {i}")));
    }
    let mass: f64 = lp.iter().map(|x| x.exp()).sum();
    if (mass - 1.0).abs() > SCORER_MASS_TOLERANCE {
        return Err(DecodeError::ScorerDistribution(format!("probabilities sum to {mass}")));
    }
    Ok(lp)
}

/// Beam search restricted to trie paths. Returns the complete hypotheses it
/// found, best first; ties are ordered by token sequence.
pub fn constrained_beam_search<S: TokenScorer>(
    scorer: &S,
    context: &S::Context,
    trie: &AnswerTrie,
    config: &BeamConfig,
) -> Result<Vec<BeamHypothesis>, DecodeError> {
    if config.beam == 0 {
        return Err(DecodeError::ZeroBeam);
    }
    if trie.is_empty() {
        return Err(DecodeError::EmptyTrie);
    }
    let end = scorer.end_token();
    if trie.uses_token(end) {
        return Err(DecodeError::EndTokenInTrie(end));
    }
    let vocab = scorer.vocab_size();

    let mut live = vec![(
        BeamHypothesis {
            tokens: Vec::new(),
            logprob: 0.0,
            complete: false,
        },
        0usize,
    )];
    let mut finished = Vec::new();
    while !live.is_empty() {
        let mut candidates = Vec::new();
        for (hyp, node) in &live {
            let lp = checked_log_probs(scorer, context, &hyp.tokens)?;
            let node_ref = &trie.nodes[*node];
            if node_ref.terminal {
                candidates.push((
                    BeamHypothesis {
                        tokens: hyp.tokens.clone(),
                        logprob: hyp.logprob + lp[end as usize],
                        complete: true,
                    },
                    *node,
                ));
            }
            for (&t, &child) in &node_ref.children {
                if t as usize >= vocab {
                    return Err(DecodeError::ScorerWidth {
                        expected: t as usize + 1,
                        found: vocab,
                    });
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(t);
                candidates.push((
                    BeamHypothesis {
                        tokens,
                        logprob: hyp.logprob + lp[t as usize],
                        complete: false,
                    },
                    child,
                ));
            }
        }
        candidates.sort_by(|a, b| config.compare(&a.0, &b.0));
        candidates.truncate(config.beam);
        live.clear();
        for (hyp, node) in candidates {
            if hyp.complete {
                finished.push(hyp);
            } else {
                live.push((hyp, node));
            }
        }
    }
    finished.sort_by(|a, b| config.compare(a, b));
    Ok(finished)
}

/// Maps answer strings to token ids. Id 0 is reserved for the end marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: bool,
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
}

pub const END_TOKEN: TokenId = 0;
pub const END_TOKEN_TEXT: &str = "</s>";

impl Vocab {
    /// One token per character, ids assigned in sorted character order.
    pub fn chars<S: AsRef<str>>(answers: &[S]) -> Self {
        let set: BTreeSet<String> = answers
            .iter()
            .flat_map(|a| a.as_ref().chars().map(String::from).collect::<Vec<_>>())
            .collect();
        Self::from_tokens(false, set)
    }

    /// One token per whitespace-separated word.
    pub fn words<S: AsRef<str>>(answers: &[S]) -> Self {
        let set: BTreeSet<String> = answers
            .iter()
            .flat_map(|a| a.as_ref().split_whitespace().map(str::to_owned).collect::<Vec<_>>())
            .collect();
        Self::from_tokens(true, set)
    }

    fn from_tokens(words: bool, set: BTreeSet<String>) -> Self {
        let mut tokens = vec![END_TOKEN_TEXT.to_owned()];
        tokens.extend(set.into_iter().filter(|t| t != END_TOKEN_TEXT));
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self { words, tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    fn pieces<'a>(&self, text: &'a str) -> Vec<&'a str> {
        if self.words {
            text.split_whitespace().collect()
        } else {
            text.char_indices()
                .map(|(i, c)| &text[i..i + c.len_utf8()])
                .collect()
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, DecodeError> {
        self.pieces(text)
            .into_iter()
            .map(|p| self.id(p).ok_or_else(|| DecodeError::UnknownToken(p.to_owned())))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        let parts = ids.iter().map(|&i| self.token(i).unwrap_or("<unk>"));
        if self.words {
            parts.collect::<Vec<_>>().join(" ")
        } else {
            parts.collect()
        }
    }
}

/// Table-driven scorer: per-prefix weights over tokens, normalized to a
/// distribution. Tokens without an entry get `default_weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableScorer {
    vocab_size: usize,
    end_token: TokenId,
    default_weight: f64,
    table: HashMap<Vec<TokenId>, Vec<(TokenId, f64)>>,
}

impl TableScorer {
    pub fn new(vocab_size: usize, end_token: TokenId, default_weight: f64) -> Self {
        assert!(default_weight > 0.0 && default_weight.is_finite());
        Self {
            vocab_size,
            end_token,
            default_weight,
            table: HashMap::new(),
        }
    }

    pub fn set(&mut self, prefix: &[TokenId], weights: &[(TokenId, f64)]) -> &mut Self {
        self.table.insert(prefix.to_vec(), weights.to_vec());
        self
    }
}

impl TokenScorer for TableScorer {
    type Context = ();

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn end_token(&self) -> TokenId {
        self.end_token
    }

    fn log_probs(&self, _context: &(), prefix: &[TokenId]) -> Vec<f64> {
        let mut w = vec![self.default_weight; self.vocab_size];
        if let Some(entries) = self.table.get(prefix) {
            for &(t, weight) in entries {
                if let Some(slot) = w.get_mut(t as usize) {
                    *slot = weight;
                }
            }
        }
        let total: f64 = w.iter().sum();
        w.iter().map(|x| (x / total).ln()).collect()
    }
}

/// One line of the decode fixture JSONL: weights keyed by the detokenized
/// prefix, then by token text (`"</s>"` for the end marker).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerFixture {
    pub id: String,
    #[serde(default = "one")]
    pub default_weight: f64,
    #[serde(default)]
    pub table: BTreeMap<String, BTreeMap<String, f64>>,
}

fn one() -> f64 {
    1.0
}

impl ScorerFixture {
    pub fn read_jsonl<R: Read>(source: R) -> Result<Vec<Self>, DecodeError> {
        let mut out = Vec::new();
        for (n, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| DecodeError::Jsonl {
                line: n + 1,
                message: e.to_string(),
            })?);
        }
        Ok(out)
    }

    pub fn to_scorer(&self, vocab: &Vocab) -> Result<TableScorer, DecodeError> {
        if !(self.default_weight > 0.0 && self.default_weight.is_finite()) {
            return Err(DecodeError::ScorerDistribution(format!(
                "fixture {}: default_weight must be positive",
                self.id
            )));
        }
        let mut scorer = TableScorer::new(vocab.len(), END_TOKEN, self.default_weight);
        for (prefix, weights) in &self.table {
            let prefix = vocab.encode(prefix)?;
            let entries = weights
                .iter()
                .map(|(tok, &w)| {
                    if !(w > 0.0 && w.is_finite()) {
                        return Err(DecodeError::ScorerDistribution(format!("weight {w} for {tok:?}")));
                    }
                    vocab
                        .id(tok)
                        .map(|id| (id, w))
                        .ok_or_else(|| DecodeError::UnknownToken(tok.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            scorer.set(&prefix, &entries);
        }
        Ok(scorer)
    }
}

/// Output line of the `decode` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswers {
    pub id: String,
    pub ranked: Vec<RankedAnswer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    pub answer: String,
    pub logprob: f64,
}

/// How answers are split into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    #[default]
    Char,
    Word,
}

impl std::str::FromStr for TokenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char" => Ok(TokenMode::Char),
            "word" => Ok(TokenMode::Word),
            other => Err(format!("expected char or word, got {other:?}")),
        }
    }
}

/// Builds the vocabulary and trie for `answers` and ranks the closed set
/// under every scorer fixture.
pub fn decode_all<S: AsRef<str>>(
    answers: &[S],
    fixtures: &[ScorerFixture],
    tokens: TokenMode,
    config: &BeamConfig,
) -> Result<Vec<RankedAnswers>, DecodeError> {
    let vocab = match tokens {
        TokenMode::Char => Vocab::chars(answers),
        TokenMode::Word => Vocab::words(answers),
    };
    let trie = AnswerTrie::build(answers, |a| vocab.encode(a).expect("vocab covers its own answers"))?;
    fixtures
        .iter()
        .map(|fx| {
            let scorer = fx.to_scorer(&vocab)?;
            let ranked = constrained_beam_search(&scorer, &(), &trie, config)?
                .into_iter()
                .map(|h| RankedAnswer {
                    answer: vocab.decode(&h.tokens),
                    logprob: h.logprob,
                })
                .collect();
            Ok(RankedAnswers {
                id: fx.id.clone(),
                ranked,
            })
        })
        .collect()
}

/// Reads a one-answer-per-line list, skipping blank lines.
pub fn read_answers<R: Read>(source: R) -> Result<Vec<String>, DecodeError> {
    let mut out = Vec::new();
    for line in BufReader::new(source).lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if !line.trim().is_empty() {
            out.push(line.to_owned());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn char_trie(answers: &[&str]) -> (Vocab, AnswerTrie) {
        let vocab = Vocab::chars(answers);
        let trie = AnswerTrie::build(answers, |a| vocab.encode(a).unwrap()).unwrap();
        (vocab, trie)
    }

    #[test]
    fn trie_examples() {
        let (_, t) = char_trie(&["yes", "no"]);
        assert_eq!(t.answer_count(), 2);
        let (v, t) = char_trie(&["two", "twelve", "two"]);
        assert_eq!(t.answer_count(), 2);
        let tw = v.encode("tw").unwrap();
        let allowed = t.allowed_next(&tw).unwrap();
        let expected: BTreeSet<_> = [v.id("o").unwrap(), v.id("e").unwrap()].into();
        assert_eq!(allowed.tokens, expected);
        assert!(!allowed.end);
        assert!(t.allowed_next(&v.encode("two").unwrap()).unwrap().end);
        assert!(matches!(
            t.allowed_next(&v.encode("o").unwrap()),
            Err(DecodeError::PrefixNotInTrie(_))
        ));
    }

    #[test]
    fn root_children() {
        let (v, t) = char_trie(&["yes", "no"]);
        let root = t.allowed_next(&[]).unwrap();
        assert_eq!(root.tokens, [v.id("y").unwrap(), v.id("n").unwrap()].into());
    }

    #[test]
    fn build_errors() {
        assert!(matches!(AnswerTrie::build::<&str, _>(&[], |_| vec![1]), Err(DecodeError::NoAnswers)));
        assert!(matches!(AnswerTrie::build(&["", "a"], |a| a.bytes().map(u32::from).collect()), Err(DecodeError::EmptyAnswer(_))));
    }

    #[test]
    fn certain_scorer_picks_yes() {
        let (v, t) = char_trie(&["yes", "no"]);
        let mut s = TableScorer::new(v.len(), END_TOKEN, 1e-300);
        let (y, e, sx) = (v.id("y").unwrap(), v.id("e").unwrap(), v.id("s").unwrap());
        s.set(&[], &[(y, 1.0)]).set(&[y], &[(e, 1.0)]).set(&[y, e], &[(sx, 1.0)]).set(&[y, e, sx], &[(END_TOKEN, 1.0)]);
        let out = constrained_beam_search(&s, &(), &t, &BeamConfig::with_beam(2)).unwrap();
        assert_eq!(v.decode(&out[0].tokens), "yes");
        assert!(out[0].logprob.abs() < 1e-12);
        assert!(out.iter().all(|h| h.complete && t.contains(&h.tokens)));
    }

    #[test]
    fn prefix_answer_and_continuation() {
        // answers {"a", "ab"}; scorer prefers continuing after "a"
        let vocab = Vocab::chars(&["a", "ab"]);
        let trie = AnswerTrie::build(&["a", "ab"], |x| vocab.encode(x).unwrap()).unwrap();
        let (a, b) = (vocab.id("a").unwrap(), vocab.id("b").unwrap());
        let mut s = TableScorer::new(vocab.len(), END_TOKEN, 1.0);
        s.set(&[a], &[(b, 6.0), (END_TOKEN, 3.0)]);
        let out = constrained_beam_search(&s, &(), &trie, &BeamConfig::with_beam(4)).unwrap();
        let lp = |p: &[TokenId], t: TokenId| s.log_probs(&(), p)[t as usize];
        let ab = lp(&[], a) + lp(&[a], b) + lp(&[a, b], END_TOKEN);
        let a_only = lp(&[], a) + lp(&[a], END_TOKEN);
        assert_eq!(out.len(), 2);
        assert_eq!(vocab.decode(&out[0].tokens), if ab > a_only { "ab" } else { "a" });
        assert_eq!(out[0].logprob, ab.max(a_only));
        assert_eq!(out[1].logprob, ab.min(a_only));
    }

    #[test]
    fn beam_width_is_not_monotone() {
        // Widening the beam lets two locally attractive prefixes push out
        // the branch that finishes best.
        let vocab = Vocab::words(&["a x", "b y", "b z"]);
        let trie = AnswerTrie::build(&["a x", "b y", "b z"], |s| vocab.encode(s).unwrap()).unwrap();
        let id = |t: &str| vocab.id(t).unwrap();
        let mut s = TableScorer::new(vocab.len(), END_TOKEN, 1e-3);
        s.set(&[], &[(id("a"), 10.0), (id("b"), 9.0)])
            .set(&[id("a")], &[(END_TOKEN, 1.0), (id("a"), 1.0), (id("b"), 1.0), (id("x"), 1.0), (id("y"), 1.0), (id("z"), 1.0)])
            .set(&[id("b")], &[(id("y"), 50.0), (id("z"), 40.0)])
            .set(&[id("a"), id("x")], &[(END_TOKEN, 100.0)])
            .set(&[id("b"), id("y")], &[(END_TOKEN, 1e-3)])
            .set(&[id("b"), id("z")], &[(END_TOKEN, 1e-3)]);
        let top = |beam| constrained_beam_search(&s, &(), &trie, &BeamConfig::with_beam(beam)).unwrap()[0].clone();
        assert_eq!(vocab.decode(&top(1).tokens), "a x");
        assert!(top(2).logprob < top(1).logprob);
        assert_eq!(top(3).logprob, top(1).logprob);
    }

    #[test]
    fn scorer_contract_is_checked() {
        struct Bad;
        impl TokenScorer for Bad {
            type Context = ();
            fn vocab_size(&self) -> usize {
                3
            }
            fn end_token(&self) -> TokenId {
                0
            }
            fn log_probs(&self, _: &(), _: &[TokenId]) -> Vec<f64> {
                vec![0.0; 3]
            }
        }
        let mut t = AnswerTrie::new();
        t.insert(&[1]);
        assert!(matches!(
            constrained_beam_search(&Bad, &(), &t, &BeamConfig::default()),
            Err(DecodeError::ScorerDistribution(_))
        ));
        assert!(matches!(
            constrained_beam_search(&Bad, &(), &t, &BeamConfig::with_beam(0)),
            Err(DecodeError::ZeroBeam)
        ));
        assert!(matches!(
            constrained_beam_search(&Bad, &(), &AnswerTrie::new(), &BeamConfig::default()),
            Err(DecodeError::EmptyTrie)
        ));
        t.insert(&[0]);
        assert!(matches!(
            constrained_beam_search(&Bad, &(), &t, &BeamConfig::default()),
            Err(DecodeError::EndTokenInTrie(0))
        ));
    }

    #[test]
    fn fixture_to_scorer() {
        let vocab = Vocab::chars(&["yes", "no"]);
        let line = r#"{"id":"q","table":{"":{"n":9.0},"no":{"</s>":4.0}}}"#;
        let fx = ScorerFixture::read_jsonl(line.as_bytes()).unwrap().remove(0);
        let s = fx.to_scorer(&vocab).unwrap();
        let root = s.log_probs(&(), &[]);
        assert!((root.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(root[vocab.id("n").unwrap() as usize] > root[vocab.id("y").unwrap() as usize]);
        let bad = ScorerFixture {
            id: "x".into(),
            default_weight: 1.0,
            table: [("".to_owned(), [("q".to_owned(), 1.0)].into())].into(),
        };
        assert!(matches!(bad.to_scorer(&vocab), Err(DecodeError::UnknownToken(_))));
    }

    #[test]
    fn answers_enumerate_sorted() {
        let (v, t) = char_trie(&["b", "ab", "a"]);
        let listed: Vec<String> = t.answers().iter().map(|a| v.decode(a)).collect();
        assert_eq!(listed, ["a", "ab", "b"]);
        assert_eq!(read_answers("yes\n\nno\r\n".as_bytes()).unwrap(), ["yes", "no"]);
    }
}
