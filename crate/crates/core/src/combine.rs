//! Weighted combination of per-feature similarities into one score.
//!
//! `S(a, b) = Σ α_f σ_f(a, b) / Σ α_f`, summed over the enabled features
//! that are available for the pair. A context feature contributes two
//! terms, previous-word and next-word similarity, each carrying the
//! feature's weight.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::contextsim::{context_similarity_distinct, cosine_clamped, EmbeddingTable};
use crate::corpus::Vocabulary;
use crate::phonetic::{PhoneticEncoder, UrduPhone};
use crate::stringsim::{jaccard_sorted, skip_grams, string_similarity_chars, CostMatrix};
use crate::WordId;

#[derive(Debug, Error, PartialEq)]
pub enum CombineError {
    #[error("no feature is available for this word pair")]
    Undefined,
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature {0} is enabled but its inputs were not supplied")]
    MissingInput(FeatureKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Phonetic,
    String,
    /// Context lists over neighbor word ids.
    ContextWord,
    /// Context lists over neighbor phonetic code ids.
    ContextPhonetic,
    Embedding,
    SkipGram,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Phonetic,
        FeatureKind::String,
        FeatureKind::ContextWord,
        FeatureKind::ContextPhonetic,
        FeatureKind::Embedding,
        FeatureKind::SkipGram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Phonetic => "phonetic",
            FeatureKind::String => "string",
            FeatureKind::ContextWord => "context",
            FeatureKind::ContextPhonetic => "context-phonetic",
            FeatureKind::Embedding => "embedding",
            FeatureKind::SkipGram => "skipgram",
        }
    }

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = CombineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "phonetic" | "urduphone" | "p" => Ok(FeatureKind::Phonetic),
            "string" | "s" => Ok(FeatureKind::String),
            "context" | "context-word" | "c1" => Ok(FeatureKind::ContextWord),
            "context-phonetic" | "context-urduphone" | "c2" => Ok(FeatureKind::ContextPhonetic),
            "embedding" | "word2vec" | "w" => Ok(FeatureKind::Embedding),
            "skipgram" | "2skip1gram" | "g" => Ok(FeatureKind::SkipGram),
            other => Err(CombineError::UnknownFeature(other.to_string())),
        }
    }
}

/// Set of enabled features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FeatureSet(u8);

impl FeatureSet {
    pub fn empty() -> Self {
        FeatureSet(0)
    }

    pub fn of(kinds: &[FeatureKind]) -> Self {
        FeatureSet(kinds.iter().fold(0, |acc, k| acc | k.bit()))
    }

    pub fn with(self, kind: FeatureKind) -> Self {
        FeatureSet(self.0 | kind.bit())
    }

    pub fn contains(self, kind: FeatureKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = FeatureKind> {
        FeatureKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }
}

impl FromStr for FeatureSet {
    type Err = CombineError;

    /// Comma-separated feature names, e.g. `phonetic,string,context`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .try_fold(FeatureSet::empty(), |set, name| Ok(set.with(name.parse()?)))
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(FeatureKind::name).collect();
        f.write_str(&names.join(","))
    }
}

/// Per-feature weights α. All default to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureWeights {
    pub phonetic: f64,
    pub string: f64,
    pub context_word: f64,
    pub context_phonetic: f64,
    pub embedding: f64,
    pub skipgram: f64,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        FeatureWeights {
            phonetic: 1.0,
            string: 1.0,
            context_word: 1.0,
            context_phonetic: 1.0,
            embedding: 1.0,
            skipgram: 1.0,
        }
    }
}

impl FeatureWeights {
    pub fn get(&self, kind: FeatureKind) -> f64 {
        match kind {
            FeatureKind::Phonetic => self.phonetic,
            FeatureKind::String => self.string,
            FeatureKind::ContextWord => self.context_word,
            FeatureKind::ContextPhonetic => self.context_phonetic,
            FeatureKind::Embedding => self.embedding,
            FeatureKind::SkipGram => self.skipgram,
        }
    }

    pub fn set(&mut self, kind: FeatureKind, value: f64) {
        match kind {
            FeatureKind::Phonetic => self.phonetic = value,
            FeatureKind::String => self.string = value,
            FeatureKind::ContextWord => self.context_word = value,
            FeatureKind::ContextPhonetic => self.context_phonetic = value,
            FeatureKind::Embedding => self.embedding = value,
            FeatureKind::SkipGram => self.skipgram = value,
        }
    }

    /// All weights finite and non-negative, at least one enabled weight
    /// positive.
    pub fn validate(&self, enabled: FeatureSet) -> Result<(), CombineError> {
        for kind in FeatureKind::ALL {
            let w = self.get(kind);
            if !w.is_finite() || w < 0.0 {
                return Err(CombineError::Weights(format!("{kind} weight {w}")));
            }
        }
        if !enabled.iter().any(|k| self.get(k) > 0.0) {
            return Err(CombineError::Weights(
                "no enabled feature has a positive weight".into(),
            ));
        }
        Ok(())
    }

    /// Parses `name=value` pairs separated by commas, starting from the
    /// defaults.
    pub fn parse(s: &str) -> Result<Self, CombineError> {
        let mut weights = FeatureWeights::default();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| CombineError::Weights(format!("expected name=value in {part:?}")))?;
            let kind: FeatureKind = name.parse()?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CombineError::Weights(format!("bad number in {part:?}")))?;
            weights.set(kind, value);
        }
        Ok(weights)
    }
}

/// Weighted mean of the available `(weight, value)` terms; a `None` value
/// drops the term from numerator and denominator.
pub fn combine_terms(
    terms: impl IntoIterator<Item = (f64, Option<f64>)>,
) -> Result<f64, CombineError> {
    let mut sum = 0.0;
    let mut total = 0.0;
    for (weight, value) in terms {
        if let Some(v) = value {
            sum += weight * v;
            total += weight;
        }
    }
    if total > 0.0 {
        Ok(sum / total)
    } else {
        Err(CombineError::Undefined)
    }
}

/// Pairwise word similarity in `[0, 1]`, symmetric.
pub trait Similarity: Sync {
    fn similarity(&self, a: WordId, b: WordId) -> f64;

    /// `Some(s)` when `s = similarity(a, b) > floor`, else `None`.
    /// Implementations may skip work once the bound is out of reach but
    /// must agree exactly with [`Similarity::similarity`].
    fn similarity_above(&self, a: WordId, b: WordId, floor: f64) -> Option<f64> {
        let s = self.similarity(a, b);
        (s > floor).then_some(s)
    }
}

impl<F> Similarity for F
where
    F: Fn(WordId, WordId) -> f64 + Sync,
{
    fn similarity(&self, a: WordId, b: WordId) -> f64 {
        self(a, b)
    }
}

/// Precomputed per-word inputs for every feature.
#[derive(Debug, Clone, Default)]
pub struct WordFeatures {
    chars: Vec<Vec<char>>,
    sorted_chars: Vec<Vec<char>>,
    code: Vec<Option<u32>>,
    // top-k neighbor lists; never repeat an item
    prev_word: Vec<Vec<u32>>,
    next_word: Vec<Vec<u32>>,
    prev_code: Vec<Vec<u32>>,
    next_code: Vec<Vec<u32>>,
    grams: Vec<Vec<(char, char)>>,
    vectors: Vec<Option<Vec<f64>>>,
    has_phonetic_ctx: bool,
    has_embeddings: bool,
    context_size: usize,
}

/// Inputs to [`WordFeatures::build`].
pub struct FeatureInputs<'a> {
    /// Vocabulary with word-id contexts extracted.
    pub word_contexts: &'a Vocabulary,
    /// Same vocabulary with phonetic-id contexts, if that feature is used.
    pub phonetic_contexts: Option<&'a Vocabulary>,
    pub encoder: &'a UrduPhone,
    pub embeddings: Option<&'a EmbeddingTable>,
    pub context_size: usize,
}

impl WordFeatures {
    pub fn build(inputs: FeatureInputs<'_>) -> Self {
        let vocab = inputs.word_contexts;
        let mut codes: HashMap<String, u32> = HashMap::new();
        let mut f = WordFeatures {
            context_size: inputs.context_size,
            has_phonetic_ctx: inputs.phonetic_contexts.is_some(),
            has_embeddings: inputs.embeddings.is_some(),
            ..Default::default()
        };
        for e in vocab.entries() {
            let chars: Vec<char> = e.surface.chars().collect();
            f.grams.push(skip_grams(&chars));
            let mut sorted = chars.clone();
            sorted.sort_unstable();
            f.sorted_chars.push(sorted);
            f.chars.push(chars);
            f.code.push(inputs.encoder.encode(&e.surface).ok().map(|c| {
                let next = codes.len() as u32;
                *codes.entry(c.to_string()).or_insert(next)
            }));
            f.prev_word.push(e.prev_features());
            f.next_word.push(e.next_features());
            match inputs.phonetic_contexts {
                Some(pv) => {
                    let pe = pv.entry(e.id);
                    f.prev_code.push(pe.prev_features());
                    f.next_code.push(pe.next_features());
                }
                None => {
                    f.prev_code.push(Vec::new());
                    f.next_code.push(Vec::new());
                }
            }
            f.vectors
                .push(inputs.embeddings.and_then(|t| t.get(&e.surface)).map(<[f64]>::to_vec));
        }
        f
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}

/// The combined similarity over a fixed feature store.
#[derive(Debug, Clone)]
pub struct SimilarityModel {
    features: Arc<WordFeatures>,
    enabled: FeatureSet,
    weights: FeatureWeights,
    costs: Arc<CostMatrix>,
    min_indel: f64,
    min_cost: f64,
}

impl SimilarityModel {
    pub fn new(
        features: Arc<WordFeatures>,
        enabled: FeatureSet,
        weights: FeatureWeights,
        costs: CostMatrix,
    ) -> Result<Self, CombineError> {
        let min_indel = costs.min_indel();
        let min_cost = costs.min_cost();
        let model = SimilarityModel {
            features,
            enabled,
            weights,
            costs: Arc::new(costs),
            min_indel,
            min_cost,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<(), CombineError> {
        self.weights.validate(self.enabled)?;
        let f = &self.features;
        if self.enabled.contains(FeatureKind::ContextPhonetic) && !f.has_phonetic_ctx {
            return Err(CombineError::MissingInput(FeatureKind::ContextPhonetic));
        }
        if self.enabled.contains(FeatureKind::Embedding) && !f.has_embeddings {
            return Err(CombineError::MissingInput(FeatureKind::Embedding));
        }
        // Embedding and phonetic terms can be absent for a pair; some other
        // positive-weight feature must always be there.
        let always = [
            FeatureKind::String,
            FeatureKind::ContextWord,
            FeatureKind::ContextPhonetic,
            FeatureKind::SkipGram,
        ];
        let covered = always
            .iter()
            .any(|&k| self.enabled.contains(k) && self.weights.get(k) > 0.0);
        if !covered {
            let phon = self.enabled.contains(FeatureKind::Phonetic) && self.weights.phonetic > 0.0;
            let emb = self.enabled.contains(FeatureKind::Embedding) && self.weights.embedding > 0.0;
            let every_word_ok = (0..f.len()).all(|i| {
                (phon && f.code[i].is_some())
                    || (emb && f.vectors[i].as_ref().is_some_and(|v| v.iter().any(|x| *x != 0.0)))
            });
            if !every_word_ok {
                return Err(CombineError::Undefined);
            }
        }
        Ok(())
    }

    /// Same features and costs under new weights.
    pub fn with_weights(&self, weights: FeatureWeights) -> Result<Self, CombineError> {
        let model = SimilarityModel {
            weights,
            ..self.clone()
        };
        model.check()?;
        Ok(model)
    }

    pub fn weights(&self) -> FeatureWeights {
        self.weights
    }

    pub fn enabled(&self) -> FeatureSet {
        self.enabled
    }

    pub fn features(&self) -> &Arc<WordFeatures> {
        &self.features
    }

    /// The similarity, or an error when no feature is available.
    pub fn try_similarity(&self, a: WordId, b: WordId) -> Result<f64, CombineError> {
        self.evaluate(a, b, None).ok_or(CombineError::Undefined)
    }

    /// Individual feature values in canonical order; `None` for features
    /// absent on this pair. Disabled features are omitted.
    pub fn feature_values(&self, a: WordId, b: WordId) -> Vec<(FeatureKind, Option<f64>)> {
        let (a, b) = (a as usize, b as usize);
        let f = &*self.features;
        let k = f.context_size;
        let mut out = Vec::new();
        for kind in self.enabled.iter() {
            let v = match kind {
                FeatureKind::Phonetic => self.phonetic(a, b),
                FeatureKind::String => Some(string_similarity_chars(&f.chars[a], &f.chars[b], &self.costs)),
                FeatureKind::ContextWord => Some(
                    (context_similarity_distinct(&f.prev_word[a], &f.prev_word[b], k)
                        + context_similarity_distinct(&f.next_word[a], &f.next_word[b], k))
                        / 2.0,
                ),
                FeatureKind::ContextPhonetic => Some(
                    (context_similarity_distinct(&f.prev_code[a], &f.prev_code[b], k)
                        + context_similarity_distinct(&f.next_code[a], &f.next_code[b], k))
                        / 2.0,
                ),
                FeatureKind::Embedding => self.embedding(a, b),
                FeatureKind::SkipGram => Some(jaccard_sorted(&f.grams[a], &f.grams[b])),
            };
            out.push((kind, v));
        }
        out
    }

    #[inline]
    fn phonetic(&self, a: usize, b: usize) -> Option<f64> {
        let f = &self.features;
        match (f.code[a], f.code[b]) {
            (Some(x), Some(y)) => Some(if x == y { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    #[inline]
    fn embedding(&self, a: usize, b: usize) -> Option<f64> {
        let f = &self.features;
        cosine_clamped(f.vectors[a].as_deref()?, f.vectors[b].as_deref()?)
    }

    /// Upper bound on the string score. The shared character multiset
    /// bounds the LCS from above, and every character of the longer word
    /// outside it costs at least the cheapest edit.
    #[inline]
    fn string_bound(&self, a: usize, b: usize) -> f64 {
        let (sa, sb) = (&self.features.sorted_chars[a], &self.features.sorted_chars[b]);
        let (la, lb) = (sa.len(), sb.len());
        let overlap = multiset_overlap(sa, sb);
        let min_len = la.min(lb) as f64;
        let gap = la.abs_diff(lb) as f64 * self.min_indel;
        let unmatched = (la.max(lb) - overlap) as f64 * self.min_cost;
        // slack keeps the bound above the DP value under rounding
        let edist = gap.max(unmatched) * (1.0 - 1e-9);
        overlap as f64 / (min_len + edist)
    }

    /// Canonical term order: phonetic, string, context-word (prev, next),
    /// context-phonetic (prev, next), embedding, skipgram. With a floor,
    /// the string term is first replaced by its upper bound and the DP is
    /// skipped when even the bound cannot clear the floor.
    fn evaluate(&self, a: WordId, b: WordId, floor: Option<f64>) -> Option<f64> {
        let (a, b) = (a as usize, b as usize);
        let f = &*self.features;
        let w = &self.weights;
        let k = f.context_size;
        let en = self.enabled;

        let mut terms: [(f64, Option<f64>); 8] = [(0.0, None); 8];
        if en.contains(FeatureKind::Phonetic) {
            terms[0] = (w.phonetic, self.phonetic(a, b));
        }
        let string_on = en.contains(FeatureKind::String);
        if en.contains(FeatureKind::ContextWord) {
            terms[2] = (
                w.context_word,
                Some(context_similarity_distinct(&f.prev_word[a], &f.prev_word[b], k)),
            );
            terms[3] = (
                w.context_word,
                Some(context_similarity_distinct(&f.next_word[a], &f.next_word[b], k)),
            );
        }
        if en.contains(FeatureKind::ContextPhonetic) {
            terms[4] = (
                w.context_phonetic,
                Some(context_similarity_distinct(&f.prev_code[a], &f.prev_code[b], k)),
            );
            terms[5] = (
                w.context_phonetic,
                Some(context_similarity_distinct(&f.next_code[a], &f.next_code[b], k)),
            );
        }
        if en.contains(FeatureKind::Embedding) {
            terms[6] = (w.embedding, self.embedding(a, b));
        }
        if en.contains(FeatureKind::SkipGram) {
            terms[7] = (w.skipgram, Some(jaccard_sorted(&f.grams[a], &f.grams[b])));
        }

        if string_on {
            if let Some(floor) = floor {
                terms[1] = (w.string, Some(self.string_bound(a, b)));
                let bound = combine_terms(terms.iter().copied()).ok()?;
                if bound <= floor {
                    return None;
                }
            }
            terms[1] = (
                w.string,
                Some(string_similarity_chars(&f.chars[a], &f.chars[b], &self.costs)),
            );
        }
        let s = combine_terms(terms.iter().copied()).ok()?;
        match floor {
            Some(floor) if s <= floor => None,
            _ => Some(s),
        }
    }
}

impl Similarity for SimilarityModel {
    fn similarity(&self, a: WordId, b: WordId) -> f64 {
        self.evaluate(a, b, None)
            .expect("model construction guarantees an available feature")
    }

    fn similarity_above(&self, a: WordId, b: WordId, floor: f64) -> Option<f64> {
        self.evaluate(a, b, Some(floor))
    }
}

fn multiset_overlap(a: &[char], b: &[char]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Memoizes pair similarities. The wrapped similarity must be symmetric;
/// pairs are keyed unordered.
pub struct PairCache<S> {
    inner: S,
    map: RwLock<HashMap<(WordId, WordId), f64>>,
}

impl<S: Similarity> PairCache<S> {
    pub fn new(inner: S) -> Self {
        PairCache {
            inner,
            map: RwLock::new(HashMap::new()),
        }
    }

    pub fn clear(&self) {
        self.map.write().expect("cache lock").clear();
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(a: WordId, b: WordId) -> (WordId, WordId) {
        (a.min(b), a.max(b))
    }

    fn cached(&self, a: WordId, b: WordId) -> Option<f64> {
        self.map.read().expect("cache lock").get(&Self::key(a, b)).copied()
    }

    fn store(&self, a: WordId, b: WordId, s: f64) {
        self.map.write().expect("cache lock").insert(Self::key(a, b), s);
    }
}

impl<S: Similarity> Similarity for PairCache<S> {
    fn similarity(&self, a: WordId, b: WordId) -> f64 {
        if let Some(s) = self.cached(a, b) {
            return s;
        }
        let s = self.inner.similarity(a, b);
        self.store(a, b, s);
        s
    }

    fn similarity_above(&self, a: WordId, b: WordId, floor: f64) -> Option<f64> {
        if let Some(s) = self.cached(a, b) {
            return (s > floor).then_some(s);
        }
        let s = self.inner.similarity_above(a, b, floor)?;
        self.store(a, b, s);
        Some(s)
    }
}

/// Counts similarity evaluations (bounded calls included).
pub struct CountingSimilarity<S> {
    inner: S,
    calls: AtomicU64,
}

impl<S: Similarity> CountingSimilarity<S> {
    pub fn new(inner: S) -> Self {
        CountingSimilarity {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) -> u64 {
        self.calls.swap(0, Ordering::Relaxed)
    }
}

impl<S: Similarity> Similarity for CountingSimilarity<S> {
    fn similarity(&self, a: WordId, b: WordId) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.similarity(a, b)
    }

    fn similarity_above(&self, a: WordId, b: WordId, floor: f64) -> Option<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.similarity_above(a, b, floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, extract_contexts, ContextFeature, Message};
    use crate::phonetic::code_ids;

    #[test]
    fn eq_one_arithmetic() {
        assert_eq!(combine_terms([(1.0, Some(1.0)), (3.0, Some(1.0))]), Ok(1.0));
        assert_eq!(combine_terms([(1.0, Some(0.0)), (1.0, Some(0.5))]), Ok(0.25));
        let base = combine_terms([(1.0, Some(0.2)), (2.0, Some(0.9)), (0.5, Some(0.4))]).unwrap();
        let scaled = combine_terms([(3.0, Some(0.2)), (6.0, Some(0.9)), (1.5, Some(0.4))]).unwrap();
        assert!((base - scaled).abs() < 1e-15);
        // missing features are dropped, not zeroed
        assert_eq!(combine_terms([(1.0, Some(0.5)), (1.0, None)]), Ok(0.5));
        assert_eq!(combine_terms([(1.0, None)]), Err(CombineError::Undefined));
        assert_eq!(combine_terms([(0.0, Some(0.4))]), Err(CombineError::Undefined));
    }

    #[test]
    fn parse_features_and_weights() {
        let set: FeatureSet = "phonetic,string,context".parse().unwrap();
        assert!(set.contains(FeatureKind::Phonetic));
        assert!(set.contains(FeatureKind::ContextWord));
        assert!(!set.contains(FeatureKind::Embedding));
        assert_eq!(set.to_string(), "phonetic,string,context");
        assert!("phonetic,bogus".parse::<FeatureSet>().is_err());

        let w = FeatureWeights::parse("phonetic=2,c1=1.5").unwrap();
        assert_eq!(w.phonetic, 2.0);
        assert_eq!(w.context_word, 1.5);
        assert_eq!(w.string, 1.0);
        assert!(FeatureWeights::parse("phonetic").is_err());
        assert!(FeatureWeights::parse("phonetic=x").is_err());

        let mut bad = FeatureWeights::default();
        bad.string = -1.0;
        assert!(bad.validate(set).is_err());
        let mut zero = FeatureWeights::default();
        zero.phonetic = 0.0;
        zero.string = 0.0;
        zero.context_word = 0.0;
        assert!(zero.validate(set).is_err());
        assert!(zero.validate(FeatureSet::of(&[FeatureKind::SkipGram])).is_ok());
    }

    fn toy_model(enabled: &str, weights: FeatureWeights) -> (Vocabulary, SimilarityModel) {
        let lines: Vec<Message> = [
            "wo kaun hai",
            "wo kon hai",
            "ye kaun tha",
            "tum kon ho",
            "zindagi bhi hai",
            "zindagee bhi hai",
            "hahah 12 ok",
        ]
        .iter()
        .map(|l| Message::new(l.split(' ').map(String::from).collect()))
        .collect();
        let v = build_vocabulary(&lines);
        let vw = extract_contexts(&lines, &v, 5, ContextFeature::WordId).unwrap();
        let enc = UrduPhone::default();
        let ids = code_ids(&v, &enc);
        let vp = extract_contexts(&lines, &v, 5, ContextFeature::UrduPhoneId(&ids)).unwrap();
        let mut emb = EmbeddingTable::default();
        emb.insert("kaun", vec![1.0, 0.2]).unwrap();
        emb.insert("kon", vec![0.9, 0.3]).unwrap();
        let feats = WordFeatures::build(FeatureInputs {
            word_contexts: &vw,
            phonetic_contexts: Some(&vp),
            encoder: &enc,
            embeddings: Some(&emb),
            context_size: 5,
        });
        let model = SimilarityModel::new(
            Arc::new(feats),
            enabled.parse().unwrap(),
            weights,
            CostMatrix::unit(),
        )
        .unwrap();
        (v, model)
    }

    #[test]
    fn model_matches_manual_combination() {
        let (v, m) = toy_model("phonetic,string", FeatureWeights::default());
        let (a, b) = (v.id_of("zindagi").unwrap(), v.id_of("zindagee").unwrap());
        // same UrduPhone code, string 6/9
        let expected = (1.0 + 6.0 / 9.0) / 2.0;
        assert!((m.similarity(a, b) - expected).abs() < 1e-15);
        assert_eq!(m.similarity(a, b), m.similarity(b, a));
    }

    #[test]
    fn missing_embedding_renormalizes() {
        let (v, m) = toy_model("string,embedding", FeatureWeights::default());
        let kaun = v.id_of("kaun").unwrap();
        let kon = v.id_of("kon").unwrap();
        let hai = v.id_of("hai").unwrap();
        let s_str = crate::stringsim::string_similarity("kaun", "hai", &CostMatrix::unit()).unwrap();
        assert_eq!(m.similarity(kaun, hai), s_str);
        let vals = m.feature_values(kaun, kon);
        assert!(vals.iter().all(|(_, v)| v.is_some()));
    }

    #[test]
    fn bounded_evaluation_agrees() {
        let (v, m) = toy_model("phonetic,string,context,skipgram", FeatureWeights::default());
        for a in v.ids() {
            for b in v.ids() {
                let s = m.similarity(a, b);
                for floor in [0.0, 0.1, 0.25, 0.3, 0.5, 0.8, s] {
                    let got = m.similarity_above(a, b, floor);
                    assert_eq!(got, (s > floor).then_some(s), "{a} {b} {floor}");
                }
            }
        }
    }

    #[test]
    fn convex_and_scale_invariant() {
        let (v, m) = toy_model("phonetic,string,context,context-phonetic,skipgram", FeatureWeights::default());
        let mut w3 = FeatureWeights::default();
        for k in FeatureKind::ALL {
            w3.set(k, 3.0);
        }
        let m3 = m.with_weights(w3).unwrap();
        for a in v.ids() {
            for b in v.ids() {
                let s = m.similarity(a, b);
                let vals: Vec<f64> = m.feature_values(a, b).into_iter().filter_map(|x| x.1).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(lo - 1e-12 <= s && s <= hi + 1e-12);
                assert!((s - m3.similarity(a, b)).abs() < 1e-12);
                assert_eq!(s, m.similarity(b, a));
            }
        }
    }

    #[test]
    fn model_construction_errors() {
        let (_, m) = toy_model("phonetic,string", FeatureWeights::default());
        let mut w = FeatureWeights::default();
        w.phonetic = 0.0;
        w.string = 0.0;
        assert!(matches!(m.with_weights(w), Err(CombineError::Weights(_))));
        let feats = m.features().clone();
        // only embedding, but most words have no vector
        assert_eq!(
            SimilarityModel::new(feats.clone(), "embedding".parse().unwrap(), FeatureWeights::default(), CostMatrix::unit())
                .unwrap_err(),
            CombineError::Undefined
        );
        let bare = Arc::new(WordFeatures::default());
        assert_eq!(
            SimilarityModel::new(bare, "context-phonetic".parse().unwrap(), FeatureWeights::default(), CostMatrix::unit())
                .unwrap_err(),
            CombineError::MissingInput(FeatureKind::ContextPhonetic)
        );
    }

    #[test]
    fn cache_is_transparent() {
        let (v, m) = toy_model("phonetic,string,context", FeatureWeights::default());
        let cached = PairCache::new(m.clone());
        for round in 0..2 {
            for a in v.ids() {
                for b in v.ids() {
                    assert_eq!(cached.similarity(a, b).to_bits(), m.similarity(a, b).to_bits());
                    assert_eq!(cached.similarity_above(a, b, 0.3), m.similarity_above(a, b, 0.3));
                }
            }
            if round == 0 {
                assert!(!cached.is_empty());
            }
        }
        cached.clear();
        assert!(cached.is_empty());

        let counter = CountingSimilarity::new(m.clone());
        counter.similarity(0, 1);
        counter.similarity_above(0, 1, 0.9);
        assert_eq!(counter.calls(), 2);
    }

    proptest::proptest! {
        #[test]
        fn string_bound_dominates(
            words in proptest::collection::btree_set("[abcdh]{1,7}", 2..8),
            subs in proptest::collection::vec(((0u8..5, 0u8..5), 0.0f64..1.0), 0..8),
            indels in proptest::collection::vec((0u8..5, 0.0f64..1.0), 0..5),
        ) {
            let ch = |i: u8| (b'a' + i) as char;
            let costs = CostMatrix::from_entries(
                subs.iter().map(|&((a, b), c)| ((ch(a), ch(b)), c)),
                indels.iter().map(|&(a, c)| (ch(a), c)),
                indels.iter().map(|&(a, c)| (ch(a), c)),
            );
            let words: Vec<String> = words.into_iter().collect();
            let msgs: Vec<Message> = words
                .windows(2)
                .map(|w| Message::new(w.to_vec()))
                .collect();
            let v = build_vocabulary(&msgs);
            let vw = extract_contexts(&msgs, &v, 5, ContextFeature::WordId).unwrap();
            let feats = WordFeatures::build(FeatureInputs {
                word_contexts: &vw,
                phonetic_contexts: None,
                encoder: &UrduPhone::default(),
                embeddings: None,
                context_size: 5,
            });
            let m = SimilarityModel::new(
                Arc::new(feats),
                FeatureSet::of(&[FeatureKind::String]),
                FeatureWeights::default(),
                costs.clone(),
            )
            .unwrap();
            for a in v.ids() {
                for b in v.ids() {
                    let (ca, cb) = (&m.features.chars[a as usize], &m.features.chars[b as usize]);
                    let exact = string_similarity_chars(ca, cb, &costs);
                    proptest::prop_assert!(m.string_bound(a as usize, b as usize) >= exact);
                }
            }
        }
    }
}
