//! Learned edit costs from character alignments between likely variant
//! pairs.
//!
//! Candidate pairs come from each word's nearest neighbors. A lexical
//! translation EM then treats every word as a sentence and every
//! character as a token, and costs are read off as `|1 - P(src, tgt)|`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::combine::Similarity;
use crate::corpus::Vocabulary;
use crate::lexvar::top_neighbors;
use crate::stringsim::{CostMatrix, NULL_SYMBOL};
use crate::WordId;

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("no candidate pairs to align")]
    EmptyInput,
    #[error("configuration error: {0}")]
    Config(String),
}

/// Unordered word pairs, each stored once with the smaller id first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidatePairList {
    pairs: Vec<(WordId, WordId)>,
}

impl CandidatePairList {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (WordId, WordId)>) -> Self {
        let set: BTreeSet<(WordId, WordId)> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        CandidatePairList {
            pairs: set.into_iter().collect(),
        }
    }

    pub fn pairs(&self) -> &[(WordId, WordId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Every pair inside each neighborhood `{w} ∪ top_n(w)`. `n` larger than
/// the word count allows is clamped with a warning.
pub fn candidate_pairs<S: Similarity + ?Sized>(
    words: &[WordId],
    sim: &S,
    n: usize,
) -> Result<CandidatePairList, AlignmentError> {
    if n == 0 {
        return Err(AlignmentError::Config("neighborhood must be at least 1".into()));
    }
    let mut words = words.to_vec();
    words.sort_unstable();
    words.dedup();
    let limit = words.len().saturating_sub(1);
    let n = if n > limit {
        log::warn!("neighborhood {n} exceeds the {limit} other words; clamped");
        limit
    } else {
        n
    };
    if n == 0 {
        return Ok(CandidatePairList::default());
    }
    let neighbors = top_neighbors(&words, sim, n, f64::NEG_INFINITY);
    let mut pairs = BTreeSet::new();
    for (&w, nb) in words.iter().zip(&neighbors) {
        let mut hood: Vec<WordId> = nb.iter().map(|&(v, _)| v).collect();
        hood.push(w);
        for (i, &a) in hood.iter().enumerate() {
            for &b in &hood[i + 1..] {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
    }
    Ok(CandidatePairList {
        pairs: pairs.into_iter().collect(),
    })
}

/// Character translation probabilities `P(tgt | src)`; `None` as source is
/// the null symbol, which accounts for inserted target characters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CharAlignmentTable {
    probs: BTreeMap<(Option<char>, char), f64>,
}

impl CharAlignmentTable {
    pub fn prob(&self, src: Option<char>, tgt: char) -> f64 {
        self.probs.get(&(src, tgt)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (Option<char>, char, f64)> + '_ {
        self.probs.iter().map(|(&(s, t), &p)| (s, t, p))
    }

    /// Source symbols whose outgoing probabilities do not sum to 1.
    pub fn unnormalized_sources(&self, tol: f64) -> Vec<Option<char>> {
        let mut sums: BTreeMap<Option<char>, f64> = BTreeMap::new();
        for (&(s, _), &p) in &self.probs {
            *sums.entry(s).or_default() += p;
        }
        sums.into_iter()
            .filter(|(_, total)| (total - 1.0).abs() > tol)
            .map(|(s, _)| s)
            .collect()
    }

    /// `src<TAB>tgt<TAB>prob` rows, null source written as `-`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (&(s, t), &p) in &self.probs {
            let src = s.map_or(NULL_SYMBOL.to_string(), String::from);
            let _ = writeln!(out, "{src}\t{t}\t{p:.6}");
        }
        out
    }
}

/// Fixed alignment prior: the null link gets `null_prob`, other links decay
/// with distance from the diagonal at rate `tension`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub iterations: usize,
    pub null_prob: f64,
    pub tension: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            iterations: 10,
            null_prob: 0.08,
            tension: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub table: CharAlignmentTable,
    /// Corpus log-likelihood under the parameters entering each iteration.
    pub log_likelihood: Vec<f64>,
}

/// Prior over source positions `0..=l` (0 = null) for target position `j`
/// (1-based) of `m`.
pub fn alignment_prior(j: usize, l: usize, m: usize, cfg: &EmConfig) -> Vec<f64> {
    let mut p = Vec::with_capacity(l + 1);
    p.push(cfg.null_prob);
    let weights: Vec<f64> = (1..=l)
        .map(|i| (-cfg.tension * (i as f64 / l as f64 - j as f64 / m as f64).abs()).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    p.extend(weights.iter().map(|w| (1.0 - cfg.null_prob) * w / z));
    p
}

/// Symbol indices: 0 is null, characters follow in sorted order.
struct Symbols {
    chars: Vec<char>,
}

impl Symbols {
    fn index(&self, c: char) -> usize {
        self.chars.binary_search(&c).expect("known character") + 1
    }
}

/// Runs lexical translation EM over `(source, target)` character
/// sequences from a uniform start.
pub fn em_align_sequences(
    pairs: &[(Vec<char>, Vec<char>)],
    cfg: &EmConfig,
) -> Result<EmResult, AlignmentError> {
    if pairs.is_empty() || pairs.iter().all(|(_, t)| t.is_empty()) {
        return Err(AlignmentError::EmptyInput);
    }
    if cfg.iterations == 0 {
        return Err(AlignmentError::Config("at least one EM iteration is required".into()));
    }
    if !(0.0..1.0).contains(&cfg.null_prob) || !(cfg.tension >= 0.0) {
        return Err(AlignmentError::Config(format!("bad alignment prior {cfg:?}")));
    }
    let mut all: BTreeSet<char> = BTreeSet::new();
    for (s, t) in pairs {
        all.extend(s.iter().copied());
        all.extend(t.iter().copied());
    }
    let symbols = Symbols {
        chars: all.into_iter().collect(),
    };
    let v = symbols.chars.len() + 1;
    let encoded: Vec<(Vec<usize>, Vec<usize>)> = pairs
        .iter()
        .map(|(s, t)| {
            (
                s.iter().map(|&c| symbols.index(c)).collect(),
                t.iter().map(|&c| symbols.index(c)).collect(),
            )
        })
        .collect();
    // Rows are sources (null included), columns target characters.
    let targets = v - 1;
    let mut prob = vec![1.0 / targets as f64; v * v];
    let mut log_likelihood = Vec::with_capacity(cfg.iterations);

    for _ in 0..cfg.iterations {
        // Fixed-size chunks keep the floating-point reduction order
        // independent of the worker count.
        let partials: Vec<(Vec<f64>, f64)> = encoded
            .par_chunks(256)
            .map(|chunk| {
                let mut counts = vec![0.0; v * v];
                let mut ll = 0.0;
                for (src, tgt) in chunk {
                    let l = src.len();
                    let m = tgt.len();
                    for (j, &f) in tgt.iter().enumerate() {
                        let prior = alignment_prior(j + 1, l, m, cfg);
                        let mut post = Vec::with_capacity(l + 1);
                        post.push(prior[0] * prob[f]);
                        for (i, &e) in src.iter().enumerate() {
                            post.push(prior[i + 1] * prob[e * v + f]);
                        }
                        let z: f64 = post.iter().sum();
                        ll += z.ln();
                        counts[f] += post[0] / z;
                        for (i, &e) in src.iter().enumerate() {
                            counts[e * v + f] += post[i + 1] / z;
                        }
                    }
                }
                (counts, ll)
            })
            .collect();
        let mut counts = vec![0.0; v * v];
        let mut ll = 0.0;
        for (c, l) in partials {
            for (acc, x) in counts.iter_mut().zip(c) {
                *acc += x;
            }
            ll += l;
        }
        log_likelihood.push(ll);
        for row in 0..v {
            let r = &counts[row * v..(row + 1) * v];
            let total: f64 = r.iter().sum();
            if total > 0.0 {
                for col in 0..v {
                    prob[row * v + col] = r[col] / total;
                }
            }
        }
    }

    let mut probs = BTreeMap::new();
    for row in 0..v {
        let src = (row > 0).then(|| symbols.chars[row - 1]);
        for col in 1..v {
            let p = prob[row * v + col];
            if p > 0.0 {
                probs.insert((src, symbols.chars[col - 1]), p);
            }
        }
    }
    Ok(EmResult {
        table: CharAlignmentTable { probs },
        log_likelihood,
    })
}

/// EM over candidate pairs, each used in both directions.
pub fn em_align(
    pairs: &CandidatePairList,
    vocab: &Vocabulary,
    cfg: &EmConfig,
) -> Result<EmResult, AlignmentError> {
    if pairs.is_empty() {
        return Err(AlignmentError::EmptyInput);
    }
    let mut seqs = Vec::with_capacity(pairs.len() * 2);
    for &(a, b) in pairs.pairs() {
        let sa: Vec<char> = vocab.surface(a).chars().collect();
        let sb: Vec<char> = vocab.surface(b).chars().collect();
        seqs.push((sa.clone(), sb.clone()));
        seqs.push((sb, sa));
    }
    em_align_sequences(&seqs, cfg)
}

/// Substitution costs `|1 - P(src, tgt)|`, insertion costs from the null
/// row, then symmetrized.
pub fn costs_from_alignment(table: &CharAlignmentTable) -> CostMatrix {
    let mut sub = Vec::new();
    let mut ins = Vec::new();
    for (src, tgt, p) in table.entries() {
        let cost = (1.0 - p).abs();
        match src {
            Some(s) => sub.push(((s, tgt), cost)),
            None => ins.push((tgt, cost)),
        }
    }
    CostMatrix::from_entries(sub, ins, Vec::new()).symmetrized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, Message};

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn pairs_normalized() {
        let l = CandidatePairList::from_pairs([(3, 1), (1, 3), (2, 2), (0, 4)]);
        assert_eq!(l.pairs(), &[(0, 4), (1, 3)]);
    }

    #[test]
    fn two_words_one_pair() {
        let sim = |_: WordId, _: WordId| 0.5;
        let l = candidate_pairs(&[0, 1], &sim, 1).unwrap();
        assert_eq!(l.pairs(), &[(0, 1)]);
        // clamped
        assert_eq!(candidate_pairs(&[0, 1], &sim, 50).unwrap().pairs(), &[(0, 1)]);
        assert!(candidate_pairs(&[0, 1], &sim, 0).is_err());
    }

    #[test]
    fn neighborhoods_match_exhaustive_sort() {
        let n = 9u32;
        let sim = move |a: WordId, b: WordId| {
            if a == b {
                1.0
            } else {
                ((a * 7 + b * 7 + a * b) % 5) as f64 / 5.0
            }
        };
        let words: Vec<WordId> = (0..n).collect();
        let got = candidate_pairs(&words, &sim, 3).unwrap();
        let mut expect = BTreeSet::new();
        for w in 0..n {
            let mut others: Vec<(f64, WordId)> =
                (0..n).filter(|&v| v != w).map(|v| (sim(w, v), v)).collect();
            others.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
            let mut hood: Vec<WordId> = others[..3].iter().map(|x| x.1).collect();
            hood.push(w);
            for &a in &hood {
                for &b in &hood {
                    if a < b {
                        expect.insert((a, b));
                    }
                }
            }
        }
        assert_eq!(got.pairs(), expect.into_iter().collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn identical_pairs_converge_to_identity() {
        let pairs = vec![(chars("abc"), chars("abc")); 4];
        let cfg = EmConfig {
            iterations: 60,
            ..EmConfig::default()
        };
        let r = em_align_sequences(&pairs, &cfg).unwrap();
        for c in ['a', 'b', 'c'] {
            assert!(r.table.prob(Some(c), c) > 0.99, "{c}: {}", r.table.prob(Some(c), c));
        }
        assert!(r.table.unnormalized_sources(1e-6).is_empty());
    }

    /// Likelihood of one target sequence by summing over every alignment
    /// vector explicitly.
    fn brute_likelihood(
        src: &[char],
        tgt: &[char],
        p: &dyn Fn(Option<char>, char) -> f64,
        cfg: &EmConfig,
    ) -> f64 {
        let l = src.len();
        let m = tgt.len();
        let mut total = 0.0;
        let combos = (l + 1).pow(m as u32);
        for mut code in 0..combos {
            let mut prod = 1.0;
            for (j, &f) in tgt.iter().enumerate() {
                let a = code % (l + 1);
                code /= l + 1;
                let prior = alignment_prior(j + 1, l, m, cfg)[a];
                let s = if a == 0 { None } else { Some(src[a - 1]) };
                prod *= prior * p(s, f);
            }
            total += prod;
        }
        total
    }

    #[test]
    fn two_iterations_match_alignment_enumeration() {
        let pairs = vec![(chars("ab"), chars("ab")), (chars("ab"), chars("b"))];
        let cfg = EmConfig {
            iterations: 2,
            ..EmConfig::default()
        };
        let got = em_align_sequences(&pairs, &cfg).unwrap();

        // E/M steps by enumerating alignment vectors, posterior of each
        // vector normalized by the pair likelihood.
        let syms = [None, Some('a'), Some('b')];
        let mut t: BTreeMap<(Option<char>, char), f64> = BTreeMap::new();
        for s in syms {
            for f in ['a', 'b'] {
                t.insert((s, f), 0.5);
            }
        }
        let mut lls = Vec::new();
        for _ in 0..2 {
            let mut counts: BTreeMap<(Option<char>, char), f64> = BTreeMap::new();
            let mut ll = 0.0;
            for (src, tgt) in &pairs {
                let p = |s: Option<char>, f: char| t[&(s, f)];
                let z = brute_likelihood(src, tgt, &p, &cfg);
                ll += z.ln();
                let l = src.len();
                let m = tgt.len();
                for mut code in 0..(l + 1).pow(m as u32) {
                    let mut links = Vec::new();
                    let mut prod = 1.0;
                    for (j, &f) in tgt.iter().enumerate() {
                        let a = code % (l + 1);
                        code /= l + 1;
                        let s = if a == 0 { None } else { Some(src[a - 1]) };
                        prod *= alignment_prior(j + 1, l, m, &cfg)[a] * p(s, f);
                        links.push((s, f));
                    }
                    for link in links {
                        *counts.entry(link).or_default() += prod / z;
                    }
                }
            }
            lls.push(ll);
            for s in syms {
                let total: f64 = ['a', 'b'].iter().map(|&f| counts.get(&(s, f)).copied().unwrap_or(0.0)).sum();
                for f in ['a', 'b'] {
                    t.insert((s, f), counts.get(&(s, f)).copied().unwrap_or(0.0) / total);
                }
            }
        }
        for (&(s, f), &p) in &t {
            assert!((got.table.prob(s, f) - p).abs() < 1e-12, "{s:?} {f}");
        }
        for (a, b) in got.log_likelihood.iter().zip(&lls) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn likelihood_never_decreases() {
        let words = ["zindagi", "zindagee", "zindgi", "kaun", "kon", "koun", "mujhay", "mujhe", "mujay"];
        let v = build_vocabulary(&[Message::new(words.iter().map(|s| s.to_string()).collect())]);
        let pairs = CandidatePairList::from_pairs([(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (6, 7), (6, 8), (7, 8)]);
        let r = em_align(&pairs, &v, &EmConfig { iterations: 15, ..EmConfig::default() }).unwrap();
        for w in r.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", r.log_likelihood);
        }
        assert!(r.table.unnormalized_sources(1e-6).is_empty());
        let costs = costs_from_alignment(&r.table);
        assert!(costs.is_symmetric());
        assert!(costs.sub('a', 'e') < 1.0);
    }

    #[test]
    fn costs_from_table() {
        let mut probs = BTreeMap::new();
        probs.insert((Some('a'), 'a'), 0.3);
        probs.insert((Some('a'), 'e'), 0.7);
        probs.insert((Some('e'), 'e'), 1.0);
        probs.insert((None, 'h'), 0.4);
        let table = CharAlignmentTable { probs };
        let c = costs_from_alignment(&table);
        assert_eq!(c.sub('a', 'a'), 0.0);
        assert!((c.sub('a', 'e') - 0.3).abs() < 1e-15);
        assert!((c.sub('e', 'a') - 0.3).abs() < 1e-15);
        assert!((c.ins('h') - 0.6).abs() < 1e-15);
        assert!((c.del('h') - 0.6).abs() < 1e-15);
        assert_eq!(c.ins('x'), 1.0);
    }

    #[test]
    fn empty_input() {
        assert_eq!(
            em_align_sequences(&[], &EmConfig::default()).unwrap_err(),
            AlignmentError::EmptyInput
        );
        let v = build_vocabulary(&[]);
        assert_eq!(
            em_align(&CandidatePairList::default(), &v, &EmConfig::default()).unwrap_err(),
            AlignmentError::EmptyInput
        );
    }
}
