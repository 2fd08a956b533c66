//! Context similarity between ranked neighbor lists, and cosine similarity
//! over pre-trained word vectors.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("context list of length {len} exceeds context size {k}")]
    TooLong { len: usize, k: usize },
    #[error("context size must be at least 1")]
    ZeroK,
    #[error("embedding file line {line}: {msg}")]
    Embedding { line: usize, msg: String },
}

/// Score of `ctx_i` against `ctx_j`: each item of `ctx_i`, in rank order,
/// matches the best-ranked unused equal item of `ctx_j`; a match at ranks
/// `k` and `l` (1-based) is worth `K + 1 - max(k, l)`. The sum is divided by
/// `1 + 2 + ... + K`.
pub fn directed_context_score(ctx_i: &[u32], ctx_j: &[u32], k: usize) -> f64 {
    let mut used = [false; 64];
    let mut used_heap;
    let used: &mut [bool] = if ctx_j.len() <= used.len() {
        &mut used[..ctx_j.len()]
    } else {
        used_heap = vec![false; ctx_j.len()];
        &mut used_heap
    };
    let mut total = 0usize;
    for (rank_i, a) in ctx_i.iter().enumerate() {
        if let Some(l) = (0..ctx_j.len()).find(|&l| !used[l] && ctx_j[l] == *a) {
            used[l] = true;
            total += k + 1 - (rank_i.max(l) + 1);
        }
    }
    total as f64 / (k * (k + 1) / 2) as f64
}

/// Symmetric context similarity in `[0, 1]`: the mean of both directed
/// scores. Lists shorter than `k` keep the full denominator.
pub fn context_similarity(ctx_i: &[u32], ctx_j: &[u32], k: usize) -> Result<f64, ContextError> {
    if k == 0 {
        return Err(ContextError::ZeroK);
    }
    for ctx in [ctx_i, ctx_j] {
        if ctx.len() > k {
            return Err(ContextError::TooLong { len: ctx.len(), k });
        }
    }
    Ok(context_similarity_unchecked(ctx_i, ctx_j, k))
}

#[inline]
pub(crate) fn context_similarity_unchecked(ctx_i: &[u32], ctx_j: &[u32], k: usize) -> f64 {
    let forward = directed_context_score(ctx_i, ctx_j, k);
    let backward = directed_context_score(ctx_j, ctx_i, k);
    (forward + backward) / 2.0
}

/// Same value as [`context_similarity_unchecked`] when neither list repeats
/// an item: matches are then unique, so both directions score alike.
#[inline]
pub(crate) fn context_similarity_distinct(ctx_i: &[u32], ctx_j: &[u32], k: usize) -> f64 {
    let mut total = 0usize;
    for (rank_i, a) in ctx_i.iter().enumerate() {
        if let Some(l) = ctx_j.iter().position(|b| b == a) {
            total += k - rank_i.max(l);
        }
    }
    total as f64 / (k * (k + 1) / 2) as f64
}

/// Word vectors keyed by surface form. All vectors share one dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Parses the word2vec text format: `word v1 v2 ...` per line, with an
    /// optional leading `count dim` header.
    pub fn parse(text: &str) -> Result<Self, ContextError> {
        let mut table = EmbeddingTable::default();
        for (idx, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            if idx == 0 && rest.len() == 1 && word.parse::<usize>().is_ok()
                && rest[0].parse::<usize>().is_ok() {
                    continue;
                }
            let err = |msg: String| ContextError::Embedding { line: idx + 1, msg };
            let vec: Vec<f64> = rest
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| err(e.to_string()))?;
            if vec.is_empty() {
                return Err(err("no vector components".into()));
            }
            if vec.iter().any(|x| !x.is_finite()) {
                return Err(err("non-finite component".into()));
            }
            if table.dim == 0 {
                table.dim = vec.len();
            } else if vec.len() != table.dim {
                return Err(err(format!(
                    "dimension {} differs from {}",
                    vec.len(),
                    table.dim
                )));
            }
            table.vectors.insert(word.to_string(), vec);
        }
        Ok(table)
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<(), ContextError> {
        if self.dim != 0 && vector.len() != self.dim {
            return Err(ContextError::Embedding {
                line: 0,
                msg: format!("dimension {} differs from {}", vector.len(), self.dim),
            });
        }
        self.dim = vector.len();
        self.vectors.insert(word.to_string(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

/// Cosine of two vectors with negative values clamped to 0. `None` when
/// either vector has zero norm.
pub fn cosine_clamped(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Embedding similarity of two words; `None` (feature absent) when either
/// word lacks a vector.
pub fn embedding_cosine(w_i: &str, w_j: &str, table: &EmbeddingTable) -> Option<f64> {
    cosine_clamped(table.get(w_i)?, table.get(w_j)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_and_disjoint() {
        let a = [1, 2, 3, 4, 5];
        assert_eq!(context_similarity(&a, &a, 5), Ok(1.0));
        assert_eq!(context_similarity(&a, &[6, 7, 8], 5), Ok(0.0));
        assert_eq!(context_similarity(&[], &[], 5), Ok(0.0));
    }

    #[test]
    fn rank_offsets() {
        // x=1, y=2, z=3, w=4
        let i = [1, 2, 3];
        let j = [2, 1, 4];
        assert!((directed_context_score(&i, &j, 5) - 8.0 / 15.0).abs() < 1e-15);
        assert!((directed_context_score(&j, &i, 5) - 8.0 / 15.0).abs() < 1e-15);
        assert!((context_similarity(&i, &j, 5).unwrap() - 8.0 / 15.0).abs() < 1e-15);
        // partial context keeps the full denominator
        assert!((context_similarity(&[9], &[9], 5).unwrap() - 5.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn config_errors() {
        assert_eq!(
            context_similarity(&[1, 2, 3], &[1], 2),
            Err(ContextError::TooLong { len: 3, k: 2 })
        );
        assert_eq!(context_similarity(&[], &[], 0), Err(ContextError::ZeroK));
    }

    #[test]
    fn cosine_rules() {
        let mut t = EmbeddingTable::default();
        t.insert("a", vec![1.0, 0.0]).unwrap();
        t.insert("b", vec![2.0, 0.0]).unwrap();
        t.insert("c", vec![0.0, 3.0]).unwrap();
        t.insert("d", vec![-1.0, 0.0]).unwrap();
        t.insert("z", vec![0.0, 0.0]).unwrap();
        assert!((embedding_cosine("a", "b", &t).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(embedding_cosine("a", "c", &t), Some(0.0));
        assert_eq!(embedding_cosine("a", "d", &t), Some(0.0));
        assert_eq!(embedding_cosine("a", "missing", &t), None);
        assert_eq!(embedding_cosine("a", "z", &t), None);
        assert!(t.insert("e", vec![1.0]).is_err());
    }

    #[test]
    fn parse_embeddings() {
        let t = EmbeddingTable::parse("3 2\nkaun 0.5 0.5\nkon 0.4 0.6\n\nhai -1 2\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("hai"), Some(&[-1.0, 2.0][..]));
        let t = EmbeddingTable::parse("kaun 0.5 0.5\n").unwrap();
        assert_eq!(t.len(), 1);
        assert!(matches!(
            EmbeddingTable::parse("a 1 2\nb 1\n"),
            Err(ContextError::Embedding { line: 2, .. })
        ));
        assert!(EmbeddingTable::parse("a 1 x\n").is_err());
        assert!(EmbeddingTable::parse("a NaN 1\n").is_err());
        assert!(EmbeddingTable::parse("a\n").is_err());
    }

    fn distinct(v: Vec<u32>) -> Vec<u32> {
        let mut seen = std::collections::HashSet::new();
        v.into_iter().filter(|x| seen.insert(*x)).collect()
    }

    proptest! {
        #[test]
        fn distinct_lists_score_alike_both_ways(
            a in prop::collection::btree_set(0u32..10, 0..6),
            b in prop::collection::btree_set(0u32..10, 0..6),
            seed in any::<u64>(),
        ) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut a: Vec<u32> = a.into_iter().collect();
            let mut b: Vec<u32> = b.into_iter().collect();
            a.shuffle(&mut rng);
            b.shuffle(&mut rng);
            let k = a.len().max(b.len()).max(1);
            prop_assert_eq!(
                context_similarity_distinct(&a, &b, k),
                context_similarity_unchecked(&a, &b, k)
            );
        }

        #[test]
        fn symmetric_and_bounded(a in prop::collection::vec(0u32..8, 0..6),
                                 b in prop::collection::vec(0u32..8, 0..6)) {
            let (a, b) = (distinct(a), distinct(b));
            let s = context_similarity(&a, &b, 5).unwrap();
            prop_assert_eq!(s, context_similarity(&b, &a, 5).unwrap());
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn dropping_last_item_never_raises_score(a in prop::collection::vec(0u32..8, 1..6),
                                                 b in prop::collection::vec(0u32..8, 0..6)) {
            let (a, b) = (distinct(a), distinct(b));
            let full = directed_context_score(&a, &b, 5);
            let shorter = directed_context_score(&a[..a.len() - 1], &b, 5);
            prop_assert!(shorter <= full);
        }
    }
}
