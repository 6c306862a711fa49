//! Test-side reference implementations and fixture generators. These are
//! written from the textbook definitions and share no code with the crate.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the generator independent of rand_distr.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    (0..d).map(|_| gaussian(rng) as f32).collect()
}

pub fn unit(v: &[f32]) -> Vec<f32> {
    let n = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    v.iter().map(|&x| (f64::from(x) / n) as f32).collect()
}

pub fn inner(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Scores every item, sorts the whole list and cuts at k.
pub fn mips_full_sort(ids: &[String], vectors: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = ids
        .iter()
        .zip(vectors)
        .map(|(id, v)| (id.clone(), inner(query, v)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Greedy dedup through a precomputed pairwise cosine matrix.
#[allow(clippy::needless_range_loop)]
pub fn dedup_pairwise(vectors: &[Vec<f32>], threshold: f64) -> Vec<usize> {
    let n = vectors.len();
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            sim[i][j] = inner(&vectors[i], &vectors[j]);
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..n {
        if !kept.iter().any(|&j| sim[i][j] >= threshold) {
            kept.push(i);
        }
    }
    kept
}

/// Nearest-neighbour sampling at pixel centres.
pub fn resample_nearest(pixels: &[u8], w: u32, h: u32, new_w: u32, new_h: u32) -> Vec<u8> {
    let mut out = Vec::new();
    for y in 0..new_h {
        let sy = (((f64::from(y) + 0.5) * f64::from(h)) / f64::from(new_h)).floor() as u32;
        for x in 0..new_w {
            let sx = (((f64::from(x) + 0.5) * f64::from(w)) / f64::from(new_w)).floor() as u32;
            let i = 3 * (sy.min(h - 1) * w + sx.min(w - 1)) as usize;
            out.extend_from_slice(&pixels[i..i + 3]);
        }
    }
    out
}

/// Width after scaling to `new_h`, aspect kept, rounded half up.
pub fn scaled_width(w: u32, h: u32, new_h: u32) -> u32 {
    ((f64::from(w) * f64::from(new_h) / f64::from(h)) + 0.5).floor().max(1.0) as u32
}

fn grams(tokens: &[String], n: usize) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *m.entry(tokens[i..i + n].join(" ")).or_insert(0) += 1;
        }
    }
    m
}

/// Papineni corpus BLEU-4: clipped precisions summed over the corpus,
/// closest reference length (shorter on ties), no smoothing.
pub fn bleu_reference(items: &[(Vec<String>, Vec<Vec<String>>)]) -> f64 {
    let mut num = [0usize; 4];
    let mut den = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, refs) in items {
        c += cand.len();
        let mut best = refs[0].len();
        for rf in refs {
            let (d_new, d_old) = ((rf.len() as i64 - cand.len() as i64).abs(), (best as i64 - cand.len() as i64).abs());
            if d_new < d_old || (d_new == d_old && rf.len() < best) {
                best = rf.len();
            }
        }
        r += best;
        for n in 1..=4 {
            let cg = grams(cand, n);
            for (g, cnt) in &cg {
                let max_ref = refs.iter().map(|rf| grams(rf, n).get(g).copied().unwrap_or(0)).max().unwrap_or(0);
                num[n - 1] += (*cnt).min(max_ref);
                den[n - 1] += cnt;
            }
        }
    }
    if c == 0 || num.contains(&0) {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        log_sum += (num[n] as f64 / den[n] as f64).ln();
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / 4.0).exp()
}

/// CIDEr-D as published with the COCO caption evaluation code: raw-count
/// tf times log(N / max(1, df)), clipped dot product, Gaussian length
/// penalty on bigram counts, sigma 6, mean over n and references, times 10.
pub fn cider_reference(items: &[(Vec<String>, Vec<Vec<String>>)]) -> f64 {
    let n_docs = items.len() as f64;
    let mut df: HashMap<String, f64> = HashMap::new();
    for (_, refs) in items {
        let mut seen = HashSet::new();
        for rf in refs {
            for n in 1..=4 {
                for g in grams(rf, n).into_keys() {
                    seen.insert(format!("{n}|{g}"));
                }
            }
        }
        for key in seen {
            *df.entry(key).or_insert(0.0) += 1.0;
        }
    }
    let weigh = |tokens: &[String]| -> (Vec<HashMap<String, f64>>, Vec<f64>, f64) {
        let mut vecs = Vec::new();
        let mut norms = Vec::new();
        for n in 1..=4 {
            let mut v = HashMap::new();
            let mut sq = 0.0;
            for (g, tf) in grams(tokens, n) {
                let d = df.get(&format!("{n}|{g}")).copied().unwrap_or(0.0).max(1.0);
                let w = tf as f64 * (n_docs.ln() - d.ln());
                sq += w * w;
                v.insert(g, w);
            }
            vecs.push(v);
            norms.push(sq.sqrt());
        }
        let bigrams = if tokens.len() >= 2 { tokens.len() - 1 } else { 0 };
        (vecs, norms, bigrams as f64)
    };
    let mut total = 0.0;
    for (cand, refs) in items {
        let (cv, cn, cl) = weigh(cand);
        let mut per_item = 0.0;
        for rf in refs {
            let (rv, rn, rl) = weigh(rf);
            let penalty = (-((cl - rl) * (cl - rl)) / (2.0 * 36.0)).exp();
            let mut mean = 0.0;
            for n in 0..4 {
                let mut dotp = 0.0;
                for (g, &w) in &cv[n] {
                    if let Some(&x) = rv[n].get(g) {
                        dotp += w.min(x) * x;
                    }
                }
                if cn[n] != 0.0 && rn[n] != 0.0 {
                    dotp /= cn[n] * rn[n];
                }
                mean += dotp * penalty / 4.0;
            }
            per_item += mean;
        }
        total += 10.0 * per_item / refs.len() as f64;
    }
    total / items.len() as f64
}

/// VQA accuracy by enumerating the ten 9-annotator subsets.
pub fn vqa_brute_force(predicted: &str, answers: &[&str]) -> f64 {
    let mut acc = 0.0;
    for left_out in 0..answers.len() {
        let matches = answers
            .iter()
            .enumerate()
            .filter(|&(i, a)| i != left_out && *a == predicted)
            .count();
        acc += (matches as f64 / 3.0).min(1.0);
    }
    acc / answers.len() as f64
}

pub const WORDS: &[&str] = &[
    "a", "man", "dog", "cat", "on", "the", "grass", "red", "car", "street", "two", "people", "sitting", "bench",
    "near", "water", "with", "ball", "playing", "tree",
];

pub fn sentence(rng: &mut ChaCha8Rng, min: usize, max: usize) -> Vec<String> {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_owned()).collect()
}

/// A caption corpus where candidates partly copy a reference.
pub fn caption_corpus(rng: &mut ChaCha8Rng, items: usize) -> Vec<(Vec<String>, Vec<Vec<String>>)> {
    (0..items)
        .map(|_| {
            let refs: Vec<Vec<String>> = (0..rng.random_range(1..=5)).map(|_| sentence(rng, 4, 12)).collect();
            let mut cand = refs[0].clone();
            for t in cand.iter_mut() {
                if rng.random::<f64>() < 0.3 {
                    *t = WORDS[rng.random_range(0..WORDS.len())].to_owned();
                }
            }
            if rng.random::<bool>() {
                cand.extend(sentence(rng, 0, 3));
            }
            (cand, refs)
        })
        .collect()
}

/// Log-probability of a full answer under a table of weights, computed by
/// normalizing each step's weights directly.
pub fn sequence_logprob(
    tokens: &[u32],
    end: u32,
    vocab: usize,
    default_weight: f64,
    table: &HashMap<Vec<u32>, Vec<(u32, f64)>>,
) -> f64 {
    let step = |prefix: &[u32], tok: u32| -> f64 {
        let mut w = vec![default_weight; vocab];
        if let Some(entries) = table.get(prefix) {
            for &(t, x) in entries {
                w[t as usize] = x;
            }
        }
        (w[tok as usize] / w.iter().sum::<f64>()).ln()
    };
    let mut lp = 0.0;
    for i in 0..tokens.len() {
        lp += step(&tokens[..i], tokens[i]);
    }
    lp + step(tokens, end)
}
