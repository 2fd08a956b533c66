//! BCubed precision, recall and F-measure against a gold lexicon.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::lexvar::Clustering;
use crate::WordId;

#[derive(Debug, Error, PartialEq)]
pub enum BCubedError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("word {0} is missing from the predicted or gold clustering")]
    MissingWord(WordId),
    #[error("gold file line {line}: {msg}")]
    Tsv { line: usize, msg: String },
}

/// Surface form → gold group label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldStandard {
    groups: BTreeMap<String, String>,
}

impl GoldStandard {
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        GoldStandard {
            groups: pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
        }
    }

    /// Parses `surface<TAB>group_id` lines. A surface listed twice with
    /// different groups is an error.
    pub fn from_tsv(text: &str) -> Result<Self, BCubedError> {
        let mut groups = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| BCubedError::Tsv { line: i + 1, msg };
            let (surface, group) = line
                .split_once('\t')
                .ok_or_else(|| err("expected surface<TAB>group_id".into()))?;
            let (surface, group) = (surface.trim(), group.trim());
            if surface.is_empty() || group.is_empty() {
                return Err(err("empty field".into()));
            }
            if let Some(old) = groups.insert(surface.to_string(), group.to_string()) {
                if old != group {
                    return Err(err(format!("{surface:?} assigned to both {old} and {group}")));
                }
            }
        }
        Ok(GoldStandard { groups })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, g) in &self.groups {
            let _ = writeln!(out, "{s}\t{g}");
        }
        out
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.groups.contains_key(surface)
    }

    pub fn group_of(&self, surface: &str) -> Option<&str> {
        self.groups.get(surface).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.groups.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    /// Gold groups over the vocabulary words that have a label.
    pub fn clustering(&self, vocab: &Vocabulary) -> Clustering {
        let mut by_group: BTreeMap<&str, Vec<WordId>> = BTreeMap::new();
        for e in vocab.entries() {
            if let Some(g) = self.groups.get(&e.surface) {
                by_group.entry(g).or_default().push(e.id);
            }
        }
        Clustering::from_groups(by_group.into_values().collect()).canonicalized()
    }
}

/// Pairwise correctness: 1 iff both words share a predicted cluster and a
/// gold group.
pub fn correctness(
    a: WordId,
    b: WordId,
    pred: &Clustering,
    gold: &Clustering,
) -> Result<u8, BCubedError> {
    let p = |w| pred.cluster_of(w).ok_or(BCubedError::MissingWord(w));
    let g = |w| gold.cluster_of(w).ok_or(BCubedError::MissingWord(w));
    Ok(u8::from(p(a)? == p(b)? && g(a)? == g(b)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Cluster counts after restriction to the evaluated words.
    pub predicted_clusters: usize,
    pub gold_clusters: usize,
    pub singletons: usize,
    pub words: usize,
}

impl EvalReport {
    pub fn to_key_value(&self) -> String {
        format!(
            "precision = {:.6}\nrecall = {:.6}\nf_measure = {:.6}\npredicted_clusters = {}\ngold_clusters = {}\nsingletons = {}\nwords = {}\n",
            self.precision,
            self.recall,
            self.f_measure,
            self.predicted_clusters,
            self.gold_clusters,
            self.singletons,
            self.words
        )
    }

    pub const TSV_HEADER: &'static str =
        "precision\trecall\tf_measure\tpredicted_clusters\tgold_clusters\tsingletons\twords";

    pub fn to_tsv_row(&self) -> String {
        format!(
            "{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
            self.precision,
            self.recall,
            self.f_measure,
            self.predicted_clusters,
            self.gold_clusters,
            self.singletons,
            self.words
        )
    }
}

/// BCubed scores averaged over `eval_set`. Both clusterings are first
/// restricted to `eval_set`, so cluster sizes count evaluated words only.
pub fn bcubed_eval(
    pred: &Clustering,
    gold: &Clustering,
    eval_set: &BTreeSet<WordId>,
) -> Result<EvalReport, BCubedError> {
    if eval_set.is_empty() {
        return Err(BCubedError::EmptyEvalSet);
    }
    for &w in eval_set {
        if pred.cluster_of(w).is_none() || gold.cluster_of(w).is_none() {
            return Err(BCubedError::MissingWord(w));
        }
    }
    let pred = pred.restricted(eval_set);
    let gold = gold.restricted(eval_set);

    let mut cells: HashMap<(usize, usize), u32> = HashMap::new();
    let mut labels = Vec::with_capacity(eval_set.len());
    for &w in eval_set {
        let key = (pred.cluster_of(w).unwrap(), gold.cluster_of(w).unwrap());
        *cells.entry(key).or_default() += 1;
        labels.push(key);
    }
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for key in labels {
        let both = cells[&key] as f64;
        let p = both / pred.clusters()[key.0].len() as f64;
        let r = both / gold.clusters()[key.1].len() as f64;
        p_sum += p;
        r_sum += r;
        f_sum += 2.0 * p * r / (p + r);
    }
    let n = eval_set.len() as f64;
    Ok(EvalReport {
        precision: p_sum / n,
        recall: r_sum / n,
        f_measure: f_sum / n,
        predicted_clusters: pred.len(),
        gold_clusters: gold.len(),
        singletons: pred.singleton_count(),
        words: eval_set.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn part(groups: &[&[WordId]]) -> Clustering {
        Clustering::from_groups(groups.iter().map(|g| g.to_vec()).collect())
    }

    fn all(n: WordId) -> BTreeSet<WordId> {
        (0..n).collect()
    }

    /// Pair-counting definition straight from the formulas.
    fn oracle(pred: &[usize], gold: &[usize]) -> (f64, f64, f64) {
        let n = pred.len();
        let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let mut correct = 0.0;
            let mut same_pred = 0.0;
            let mut same_gold = 0.0;
            for j in 0..n {
                if pred[i] == pred[j] {
                    same_pred += 1.0;
                }
                if gold[i] == gold[j] {
                    same_gold += 1.0;
                }
                if pred[i] == pred[j] && gold[i] == gold[j] {
                    correct += 1.0;
                }
            }
            let p = correct / same_pred;
            let r = correct / same_gold;
            ps += p;
            rs += r;
            fs += 2.0 * p * r / (p + r);
        }
        (ps / n as f64, rs / n as f64, fs / n as f64)
    }

    #[test]
    fn hand_example() {
        let r = bcubed_eval(&part(&[&[0, 1], &[2]]), &part(&[&[0, 1, 2]]), &all(3)).unwrap();
        assert_eq!(r.precision, 1.0);
        assert!((r.recall - 5.0 / 9.0).abs() < 1e-15);
        assert!((r.f_measure - 0.7).abs() < 1e-15);
        assert_eq!(r.predicted_clusters, 2);
        assert_eq!(r.gold_clusters, 1);
        assert_eq!(r.singletons, 1);
    }

    #[test]
    fn identity_and_singletons() {
        let g = part(&[&[0, 1, 2], &[3, 4]]);
        let r = bcubed_eval(&g, &g, &all(5)).unwrap();
        assert_eq!((r.precision, r.recall, r.f_measure), (1.0, 1.0, 1.0));
        let single = part(&[&[0], &[1], &[2], &[3]]);
        let one = part(&[&[0, 1, 2, 3]]);
        let r = bcubed_eval(&single, &one, &all(4)).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 0.25);
    }

    #[test]
    fn restriction_shrinks_denominators() {
        let pred = part(&[&[0, 1, 2]]);
        let gold = part(&[&[0, 1], &[2]]);
        // without word 2 the prediction is perfect
        let r = bcubed_eval(&pred, &gold, &[0, 1].into_iter().collect()).unwrap();
        assert_eq!(r.f_measure, 1.0);
    }

    #[test]
    fn correctness_cases() {
        let pred = part(&[&[0, 1], &[2]]);
        let gold = part(&[&[0, 2], &[1]]);
        assert_eq!(correctness(0, 0, &pred, &gold), Ok(1));
        assert_eq!(correctness(0, 1, &pred, &gold), Ok(0));
        assert_eq!(correctness(0, 2, &pred, &gold), Ok(0));
        assert_eq!(correctness(0, 9, &pred, &gold), Err(BCubedError::MissingWord(9)));
    }

    #[test]
    fn errors() {
        let g = part(&[&[0, 1]]);
        assert_eq!(bcubed_eval(&g, &g, &BTreeSet::new()), Err(BCubedError::EmptyEvalSet));
        assert_eq!(bcubed_eval(&g, &g, &all(3)), Err(BCubedError::MissingWord(2)));
    }

    #[test]
    fn gold_file() {
        let g = GoldStandard::from_tsv("zindagi\t1\nzindagee\t1\nkaun\t2\n\n").unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.group_of("zindagee"), Some("1"));
        assert!(g.contains("kaun"));
        assert_eq!(GoldStandard::from_tsv(&g.to_tsv()).unwrap(), g);
        assert!(matches!(
            GoldStandard::from_tsv("a\t1\nb\n"),
            Err(BCubedError::Tsv { line: 2, .. })
        ));
        assert!(GoldStandard::from_tsv("a\t1\na\t2\n").is_err());
    }

    #[test]
    fn report_formats() {
        let g = part(&[&[0, 1]]);
        let r = bcubed_eval(&g, &g, &all(2)).unwrap();
        assert!(r.to_key_value().contains("f_measure = 1.000000"));
        assert_eq!(r.to_tsv_row().split('\t').count(), EvalReport::TSV_HEADER.split('\t').count());
    }

    fn labels_to_part(labels: &[usize]) -> Clustering {
        let mut groups: BTreeMap<usize, Vec<WordId>> = BTreeMap::new();
        for (w, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(w as WordId);
        }
        Clustering::from_groups(groups.into_values().collect())
    }

    proptest! {
        #[test]
        fn agrees_with_pair_counting(pred in prop::collection::vec(0usize..6, 1..40),
                                     seed in prop::collection::vec(0usize..6, 40)) {
            let gold: Vec<usize> = seed[..pred.len()].to_vec();
            let r = bcubed_eval(&labels_to_part(&pred), &labels_to_part(&gold), &all(pred.len() as WordId)).unwrap();
            let (p, rc, f) = oracle(&pred, &gold);
            prop_assert!((r.precision - p).abs() < 1e-12);
            prop_assert!((r.recall - rc).abs() < 1e-12);
            prop_assert!((r.f_measure - f).abs() < 1e-12);
            prop_assert!(r.f_measure > 0.0 && r.f_measure <= 1.0);

            let swapped = bcubed_eval(&labels_to_part(&gold), &labels_to_part(&pred), &all(pred.len() as WordId)).unwrap();
            prop_assert_eq!(swapped.precision, r.recall);
            prop_assert_eq!(swapped.recall, r.precision);
        }
    }
}
