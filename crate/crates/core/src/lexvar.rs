//! Lex-Var clustering: a thresholded k-medoids over word similarity, and
//! its neighborhood-restricted hierarchical variant.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::combine::Similarity;
use crate::corpus::Vocabulary;
use crate::phonetic::{group_by_encoding, PhoneticEncoder};
use crate::WordId;

#[derive(Debug, Error, PartialEq)]
pub enum LexVarError {
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("clustering file line {line}: {msg}")]
    Tsv { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Sorted ascending.
    pub members: Vec<WordId>,
    pub centroid: WordId,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// A partition of a word set into non-empty clusters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Clustering {
    clusters: Vec<Cluster>,
    index: HashMap<WordId, usize>,
}

impl Clustering {
    /// Builds a clustering from disjoint groups. Empty groups are dropped;
    /// each centroid starts as the group's lowest id.
    pub fn from_groups(groups: Vec<Vec<WordId>>) -> Self {
        let clusters = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|mut members| {
                members.sort_unstable();
                members.dedup();
                Cluster {
                    centroid: members[0],
                    members,
                }
            })
            .collect();
        Self::from_clusters(clusters)
    }

    fn from_clusters(clusters: Vec<Cluster>) -> Self {
        let mut index = HashMap::new();
        for (c, cluster) in clusters.iter().enumerate() {
            for &w in &cluster.members {
                let prev = index.insert(w, c);
                debug_assert!(prev.is_none(), "word {w} in two clusters");
            }
        }
        Clustering { clusters, index }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster_of(&self, word: WordId) -> Option<usize> {
        self.index.get(&word).copied()
    }

    pub fn num_words(&self) -> usize {
        self.index.len()
    }

    pub fn singleton_count(&self) -> usize {
        self.clusters.iter().filter(|c| c.len() == 1).count()
    }

    /// All clustered words, ascending.
    pub fn words(&self) -> Vec<WordId> {
        let mut w: Vec<WordId> = self.index.keys().copied().collect();
        w.sort_unstable();
        w
    }

    pub fn is_centroid(&self, word: WordId) -> bool {
        self.cluster_of(word)
            .is_some_and(|c| self.clusters[c].centroid == word)
    }

    /// Clusters ordered by lowest member id.
    pub fn canonicalized(&self) -> Clustering {
        let mut clusters = self.clusters.clone();
        clusters.sort_by_key(|c| c.members[0]);
        Self::from_clusters(clusters)
    }

    /// Keeps only `words`, dropping emptied clusters. A removed centroid is
    /// replaced by the lowest remaining member.
    pub fn restricted(&self, words: &BTreeSet<WordId>) -> Clustering {
        let clusters = self
            .clusters
            .iter()
            .filter_map(|c| {
                let members: Vec<WordId> =
                    c.members.iter().copied().filter(|w| words.contains(w)).collect();
                let first = *members.first()?;
                let centroid = if members.contains(&c.centroid) { c.centroid } else { first };
                Some(Cluster { members, centroid })
            })
            .collect();
        Self::from_clusters(clusters)
    }

    /// Checks that the clusters exactly partition `words`, that none is
    /// empty and that every centroid is a member.
    pub fn validate(&self, words: &[WordId]) -> Result<(), LexVarError> {
        let mut seen = BTreeSet::new();
        for (i, c) in self.clusters.iter().enumerate() {
            if c.members.is_empty() {
                return Err(LexVarError::Partition(format!("cluster {i} is empty")));
            }
            if !c.members.contains(&c.centroid) {
                return Err(LexVarError::Partition(format!(
                    "centroid {} of cluster {i} is not a member",
                    c.centroid
                )));
            }
            for &w in &c.members {
                if !seen.insert(w) {
                    return Err(LexVarError::Partition(format!("word {w} appears twice")));
                }
                if self.index.get(&w) != Some(&i) {
                    return Err(LexVarError::Partition(format!("index disagrees for word {w}")));
                }
            }
        }
        let expected: BTreeSet<WordId> = words.iter().copied().collect();
        if seen != expected {
            let missing = expected.difference(&seen).next();
            let extra = seen.difference(&expected).next();
            return Err(LexVarError::Partition(format!(
                "word set mismatch (missing {missing:?}, extra {extra:?})"
            )));
        }
        Ok(())
    }

    /// Writes `surface<TAB>cluster_id<TAB>is_centroid` rows in word id
    /// order, with cluster ids numbered by lowest member.
    pub fn to_tsv(&self, vocab: &Vocabulary) -> String {
        let canon = self.canonicalized();
        let mut out = String::new();
        for w in canon.words() {
            let c = canon.index[&w];
            let centroid = u8::from(canon.clusters[c].centroid == w);
            let _ = writeln!(out, "{}\t{}\t{}", vocab.surface(w), c, centroid);
        }
        out
    }

    pub fn from_tsv(text: &str, vocab: &Vocabulary) -> Result<Self, LexVarError> {
        let mut groups: BTreeMap<String, (Vec<WordId>, Option<WordId>)> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| LexVarError::Tsv { line: i + 1, msg };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(err(format!("expected 2 or 3 fields, found {}", fields.len())));
            }
            let id = vocab
                .id_of(fields[0])
                .ok_or_else(|| err(format!("unknown word {:?}", fields[0])))?;
            if !seen.insert(id) {
                return Err(err(format!("word {:?} listed twice", fields[0])));
            }
            let entry = groups.entry(fields[1].to_string()).or_default();
            entry.0.push(id);
            match fields.get(2).copied() {
                None | Some("0") => {}
                Some("1") => {
                    if entry.1.replace(id).is_some() {
                        return Err(err(format!("second centroid in cluster {}", fields[1])));
                    }
                }
                Some(other) => return Err(err(format!("bad centroid flag {other:?}"))),
            }
        }
        let clusters = groups
            .into_values()
            .map(|(mut members, centroid)| {
                members.sort_unstable();
                Cluster {
                    centroid: centroid.unwrap_or(members[0]),
                    members,
                }
            })
            .collect();
        Ok(Self::from_clusters(clusters).canonicalized())
    }
}

/// Stop when the fraction of words changing cluster drops below
/// `epsilon`, or after `max_iters` iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            epsilon: 0.001,
            max_iters: 100,
        }
    }
}

impl StopRule {
    fn check(&self) -> Result<(), LexVarError> {
        if self.max_iters == 0 || !(self.epsilon >= 0.0) {
            return Err(LexVarError::Config(format!("bad stop rule {self:?}")));
        }
        Ok(())
    }
}

/// Threshold used when none is given: 0.3 for vocabularies under 20k
/// words, 0.4 above.
pub fn default_threshold(vocab_size: usize) -> f64 {
    if vocab_size < 20_000 {
        0.3
    } else {
        0.4
    }
}

pub enum InitStrategy<'a> {
    /// One cluster per distinct phonetic code.
    Encoding(&'a dyn PhoneticEncoder),
    /// Uniform random assignment to `count` clusters.
    Random { count: usize, seed: u64 },
    Singletons,
}

pub fn init_clusters(
    vocab: &Vocabulary,
    words: &[WordId],
    strategy: InitStrategy<'_>,
) -> Result<Clustering, LexVarError> {
    match strategy {
        InitStrategy::Encoding(enc) => Ok(group_by_encoding(vocab, words, enc)),
        InitStrategy::Random { count, seed } => {
            if count == 0 || count > words.len() {
                return Err(LexVarError::Config(format!(
                    "random init needs 1 <= count <= {}, got {count}",
                    words.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut groups = vec![Vec::new(); count];
            let mut sorted = words.to_vec();
            sorted.sort_unstable();
            for w in sorted {
                groups[rng.gen_range(0..count)].push(w);
            }
            Ok(Clustering::from_groups(groups))
        }
        InitStrategy::Singletons => Ok(Clustering::from_groups(
            words.iter().map(|&w| vec![w]).collect(),
        )),
    }
}

/// Member with the largest similarity sum over the cluster (itself
/// included); ties go to the lowest id.
pub fn find_centroid<S: Similarity + ?Sized>(members: &[WordId], sim: &S) -> WordId {
    assert!(!members.is_empty(), "centroid of an empty cluster");
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s = sim.similarity(sorted[i], sorted[j]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let mut best = 0;
    let mut best_sum = f64::NEG_INFINITY;
    for i in 0..n {
        let sum: f64 = m[i * n..(i + 1) * n].iter().sum();
        if sum > best_sum {
            best_sum = sum;
            best = i;
        }
    }
    sorted[best]
}

/// What happened in one clustering iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub changed: usize,
    pub clusters: usize,
    /// `Σ n_c² + N·K` for the clustering the iteration started from.
    pub evaluation_bound: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub iterations: Vec<IterationStats>,
    pub converged: bool,
}

fn check_threshold(t: f64) -> Result<(), LexVarError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(LexVarError::Threshold(t))
    }
}

fn evaluation_bound(c: &Clustering) -> u64 {
    let sq: u64 = c.clusters.iter().map(|c| (c.len() as u64).pow(2)).sum();
    sq + c.num_words() as u64 * c.len() as u64
}

/// Runs Lex-Var from `init`. Each iteration recomputes every centroid,
/// then assigns each word to the cluster whose centroid is most similar
/// above `t`, founding a singleton when none qualifies. A centroid counts
/// its own cluster at its self-similarity, so it only leaves for a centroid
/// at least as close. `observe` sees the clustering after every iteration.
pub fn lexvar_cluster<S, F>(
    sim: &S,
    t: f64,
    init: &Clustering,
    stop: StopRule,
    mut observe: F,
) -> Result<(Clustering, RunStats), LexVarError>
where
    S: Similarity + ?Sized,
    F: FnMut(&IterationStats, &Clustering),
{
    check_threshold(t)?;
    stop.check()?;
    let words = init.words();
    init.validate(&words)?;
    let n = words.len();
    let mut current = init.clone();
    let mut stats = RunStats {
        iterations: Vec::new(),
        converged: false,
    };

    for iteration in 1..=stop.max_iters {
        let bound = evaluation_bound(&current);
        let centroids: Vec<WordId> = current
            .clusters
            .par_iter()
            .map(|c| find_centroid(&c.members, sim))
            .collect();
        let k = centroids.len();
        let is_centroid: HashMap<WordId, usize> =
            centroids.iter().enumerate().map(|(i, &c)| (c, i)).collect();

        // A centroid keeps its cluster unless another centroid is at least
        // as similar (above t) and comes first. Leaving centroids then join
        // the best staying centroid above t, or stay put if there is none.
        let rows: Vec<(f64, Vec<(usize, f64)>)> = (0..k)
            .into_par_iter()
            .map(|j| {
                let c = centroids[j];
                let above = (0..k)
                    .filter(|&i| i != j)
                    .filter_map(|i| sim.similarity_above(c, centroids[i], t).map(|s| (i, s)))
                    .collect();
                (sim.similarity(c, c), above)
            })
            .collect();
        let prefers_self: Vec<bool> = rows
            .iter()
            .enumerate()
            .map(|(j, (own, above))| {
                !above.iter().any(|&(i, s)| s > *own || (s == *own && i < j))
            })
            .collect();
        let centroid_target: Vec<usize> = rows
            .iter()
            .enumerate()
            .map(|(j, (_, above))| {
                if prefers_self[j] {
                    return j;
                }
                let mut best: Option<(usize, f64)> = None;
                for &(i, s) in above {
                    if prefers_self[i] && best.is_none_or(|(_, b)| s > b) {
                        best = Some((i, s));
                    }
                }
                best.map_or(j, |(i, _)| i)
            })
            .collect();
        let open: Vec<bool> = (0..k).map(|j| centroid_target[j] == j).collect();

        let targets: Vec<Option<usize>> = words
            .par_iter()
            .map(|&w| match is_centroid.get(&w) {
                Some(&j) => Some(centroid_target[j]),
                None => best_above(sim, w, &centroids, &open, t),
            })
            .collect();

        let mut groups: Vec<Vec<WordId>> = vec![Vec::new(); k];
        let mut founders = Vec::new();
        let mut changed = 0;
        for (&w, target) in words.iter().zip(&targets) {
            let old = current.index[&w];
            match *target {
                Some(j) => {
                    if j != old {
                        changed += 1;
                    }
                    groups[j].push(w);
                }
                None => {
                    changed += 1;
                    founders.push(w);
                }
            }
        }
        let mut clusters: Vec<Cluster> = groups
            .into_iter()
            .zip(centroids)
            .filter(|(members, _)| !members.is_empty())
            .map(|(members, centroid)| Cluster { members, centroid })
            .collect();
        clusters.extend(founders.into_iter().map(|w| Cluster {
            members: vec![w],
            centroid: w,
        }));
        current = Clustering::from_clusters(clusters);

        let it = IterationStats {
            iteration,
            changed,
            clusters: current.len(),
            evaluation_bound: bound,
        };
        log::debug!("lexvar iteration {iteration}: {changed} changed, {} clusters", current.len());
        observe(&it, &current);
        stats.iterations.push(it);
        if (changed as f64) < stop.epsilon * n as f64 || changed == 0 {
            stats.converged = true;
            break;
        }
    }
    Ok((current, stats))
}

/// Index of the allowed centroid most similar to `w` above `t`; ties go
/// to the lowest index.
fn best_above<S: Similarity + ?Sized>(
    sim: &S,
    w: WordId,
    centroids: &[WordId],
    allowed: &[bool],
    t: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &c) in centroids.iter().enumerate() {
        if !allowed[j] {
            continue;
        }
        let floor = best.map_or(t, |(_, s)| s);
        if let Some(s) = sim.similarity_above(w, c, floor) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
}

/// For each word, its `n` most similar other words from `words` with
/// similarity above `floor`, sorted by similarity descending then id.
pub fn top_neighbors<S: Similarity + ?Sized>(
    words: &[WordId],
    sim: &S,
    n: usize,
    floor: f64,
) -> Vec<Vec<(WordId, f64)>> {
    words
        .par_iter()
        .map(|&w| {
            let mut top: Vec<(WordId, f64)> = Vec::with_capacity(n + 1);
            for &v in words {
                if v == w {
                    continue;
                }
                let cut = if top.len() == n { top[n - 1].1 } else { floor };
                if let Some(s) = sim.similarity_above(w, v, cut) {
                    // stable position: after every entry with sim >= s
                    let pos = top.partition_point(|&(_, x)| x >= s);
                    top.insert(pos, (v, s));
                    top.truncate(n);
                }
            }
            top
        })
        .collect()
}

/// Hierarchical Lex-Var. Starts from singletons, precomputes each word's
/// `neighborhood` nearest words, then repeatedly moves each word into the
/// cluster of its closest neighbor above `t`. A move is kept only if both
/// affected clusters still have every member above `t` to their
/// recomputed centroid.
pub fn hierarchical_cluster<S, F>(
    sim: &S,
    words: &[WordId],
    t: f64,
    neighborhood: usize,
    stop: StopRule,
    mut observe: F,
) -> Result<(Clustering, RunStats), LexVarError>
where
    S: Similarity + ?Sized,
    F: FnMut(&IterationStats, &Clustering),
{
    check_threshold(t)?;
    stop.check()?;
    if neighborhood == 0 {
        return Err(LexVarError::Config("neighborhood must be at least 1".into()));
    }
    let mut words = words.to_vec();
    words.sort_unstable();
    words.dedup();
    let n = words.len();
    let closest: Vec<Option<WordId>> = top_neighbors(&words, sim, neighborhood, t)
        .into_iter()
        .map(|nb| nb.first().map(|&(v, _)| v))
        .collect();

    // Working state: cluster slots may empty out; compacted on output.
    let mut members: Vec<Vec<WordId>> = words.iter().map(|&w| vec![w]).collect();
    let mut centroid: Vec<WordId> = words.clone();
    let mut slot: HashMap<WordId, usize> = words.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let mut stats = RunStats {
        iterations: Vec::new(),
        converged: false,
    };

    let cohesive = |group: &[WordId]| -> Option<WordId> {
        if group.len() == 1 {
            return Some(group[0]);
        }
        let c = find_centroid(group, sim);
        group
            .iter()
            .all(|&w| w == c || sim.similarity_above(w, c, t).is_some())
            .then_some(c)
    };

    for iteration in 1..=stop.max_iters {
        let snapshot = compact(&members, &centroid);
        let bound = evaluation_bound(&snapshot);
        let mut changed = 0;
        for (i, &w) in words.iter().enumerate() {
            let Some(target_word) = closest[i] else { continue };
            let from = slot[&w];
            let to = slot[&target_word];
            if from == to {
                continue;
            }
            let mut grown = members[to].clone();
            let pos = grown.binary_search(&w).unwrap_err();
            grown.insert(pos, w);
            let Some(grown_c) = cohesive(&grown) else { continue };
            let shrunk: Vec<WordId> = members[from].iter().copied().filter(|&x| x != w).collect();
            let shrunk_c = if shrunk.is_empty() {
                None
            } else {
                match cohesive(&shrunk) {
                    Some(c) => Some(c),
                    None => continue,
                }
            };
            members[to] = grown;
            centroid[to] = grown_c;
            members[from] = shrunk;
            if let Some(c) = shrunk_c {
                centroid[from] = c;
            }
            slot.insert(w, to);
            changed += 1;
        }
        let current = compact(&members, &centroid);
        let it = IterationStats {
            iteration,
            changed,
            clusters: current.len(),
            evaluation_bound: bound,
        };
        log::debug!("hierarchical iteration {iteration}: {changed} moved, {} clusters", current.len());
        observe(&it, &current);
        stats.iterations.push(it);
        if changed == 0 || (changed as f64) < stop.epsilon * n as f64 {
            stats.converged = true;
            break;
        }
    }
    Ok((compact(&members, &centroid), stats))
}

fn compact(members: &[Vec<WordId>], centroid: &[WordId]) -> Clustering {
    let clusters = members
        .iter()
        .zip(centroid)
        .filter(|(m, _)| !m.is_empty())
        .map(|(m, &c)| Cluster {
            members: m.clone(),
            centroid: c,
        })
        .collect();
    Clustering::from_clusters(clusters)
}

/// Non-centroid members whose similarity to their centroid is not above
/// `t`.
pub fn threshold_violations<S: Similarity + ?Sized>(
    clustering: &Clustering,
    sim: &S,
    t: f64,
) -> usize {
    clustering
        .clusters()
        .iter()
        .map(|c| {
            c.members
                .iter()
                .filter(|&&w| w != c.centroid && sim.similarity(w, c.centroid) <= t)
                .count()
        })
        .sum()
}
