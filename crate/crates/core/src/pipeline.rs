//! End-to-end glue: corpus → features → clustering → evaluation.

use std::collections::BTreeSet;
use std::sync::Arc;

use anyhow::{bail, Context, Result};

use crate::bcubed::{bcubed_eval, EvalReport, GoldStandard};
use crate::combine::{
    FeatureInputs, FeatureKind, FeatureSet, FeatureWeights, PairCache, Similarity, SimilarityModel,
    WordFeatures,
};
use crate::contextsim::EmbeddingTable;
use crate::corpus::{
    build_vocabulary, extract_contexts, filter_eval_words, ContextFeature, ContextFeatureKind,
    Message, Vocabulary,
};
use crate::lexvar::{
    default_threshold, hierarchical_cluster, init_clusters, lexvar_cluster, Clustering,
    InitStrategy, IterationStats, RunStats, StopRule,
};
use crate::phonetic::{code_ids, UrduPhone};
use crate::stringsim::CostMatrix;
use crate::WordId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    UrduPhone,
    Random { count: usize, seed: u64 },
    Singletons,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    LexVar,
    Hierarchical { neighborhood: usize },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub features: FeatureSet,
    pub weights: FeatureWeights,
    /// `None` picks the vocabulary-size default.
    pub threshold: Option<f64>,
    pub context_size: usize,
    /// Representation of neighbors in the `context` feature.
    pub context_feature: ContextFeatureKind,
    pub encoder: UrduPhone,
    pub init: InitKind,
    pub algorithm: Algorithm,
    pub stop: StopRule,
    /// Minimum distinct previous and next neighbors for an evaluated word.
    pub min_context: usize,
    pub costs: CostMatrix,
    pub embeddings: Option<Arc<EmbeddingTable>>,
    pub cache: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            features: FeatureSet::of(&[
                FeatureKind::Phonetic,
                FeatureKind::String,
                FeatureKind::ContextWord,
            ]),
            weights: FeatureWeights::default(),
            threshold: None,
            context_size: 5,
            context_feature: ContextFeatureKind::WordId,
            encoder: UrduPhone::default(),
            init: InitKind::UrduPhone,
            algorithm: Algorithm::LexVar,
            stop: StopRule::default(),
            min_context: 5,
            costs: CostMatrix::unit(),
            embeddings: None,
            cache: false,
        }
    }
}

/// A corpus with its vocabulary, features and evaluation words computed.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub features: Arc<WordFeatures>,
    pub words: Vec<WordId>,
    pub eval_set: BTreeSet<WordId>,
    pub gold: Option<Clustering>,
}

pub fn prepare(
    messages: &[Message],
    gold: Option<&GoldStandard>,
    cfg: &PipelineConfig,
) -> Result<PreparedCorpus> {
    let vocab = build_vocabulary(messages);
    if vocab.is_empty() {
        bail!("vocabulary: corpus has no messages with two or more tokens");
    }
    let needs_codes = cfg.features.contains(FeatureKind::ContextPhonetic)
        || cfg.context_feature == ContextFeatureKind::UrduPhoneId;
    let codes = needs_codes.then(|| code_ids(&vocab, &cfg.encoder));
    let cluster_ids = if cfg.context_feature == ContextFeatureKind::ClusterId {
        let words: Vec<WordId> = vocab.ids().collect();
        let init = initial_clustering(&vocab, &words, cfg)?;
        let mut ids = vec![0u32; vocab.len()];
        for w in words {
            ids[w as usize] = init.cluster_of(w).expect("partition") as u32;
        }
        Some(ids)
    } else {
        None
    };
    let feature = match cfg.context_feature {
        ContextFeatureKind::WordId => ContextFeature::WordId,
        ContextFeatureKind::UrduPhoneId => ContextFeature::UrduPhoneId(codes.as_deref().unwrap()),
        ContextFeatureKind::ClusterId => ContextFeature::ClusterId(cluster_ids.as_deref().unwrap()),
    };
    let ctx_vocab = extract_contexts(messages, &vocab, cfg.context_size, feature).context("contexts")?;
    let phon_vocab = match &codes {
        Some(c) if cfg.features.contains(FeatureKind::ContextPhonetic) => Some(
            extract_contexts(messages, &vocab, cfg.context_size, ContextFeature::UrduPhoneId(c))
                .context("contexts")?,
        ),
        _ => None,
    };
    let features = WordFeatures::build(FeatureInputs {
        word_contexts: &ctx_vocab,
        phonetic_contexts: phon_vocab.as_ref(),
        encoder: &cfg.encoder,
        embeddings: cfg.embeddings.as_deref(),
        context_size: cfg.context_size,
    });
    let (eval_set, gold) = match gold {
        Some(g) => {
            // distinct-neighbor counts do not depend on the feature kind
            let eval = filter_eval_words(&ctx_vocab, g, cfg.min_context);
            (eval, Some(g.clustering(&vocab)))
        }
        None => (BTreeSet::new(), None),
    };
    Ok(PreparedCorpus {
        words: vocab.ids().collect(),
        vocab: ctx_vocab,
        features: Arc::new(features),
        eval_set,
        gold,
    })
}

pub fn initial_clustering(
    vocab: &Vocabulary,
    words: &[WordId],
    cfg: &PipelineConfig,
) -> Result<Clustering> {
    let strategy = match cfg.init {
        InitKind::UrduPhone => InitStrategy::Encoding(&cfg.encoder),
        InitKind::Random { count, seed } => InitStrategy::Random { count, seed },
        InitKind::Singletons => InitStrategy::Singletons,
    };
    init_clusters(vocab, words, strategy).context("initial clustering")
}

impl PreparedCorpus {
    pub fn model(&self, cfg: &PipelineConfig) -> Result<SimilarityModel> {
        SimilarityModel::new(
            self.features.clone(),
            cfg.features,
            cfg.weights,
            cfg.costs.clone(),
        )
        .context("similarity model")
    }

    pub fn threshold(&self, cfg: &PipelineConfig) -> f64 {
        cfg.threshold.unwrap_or_else(|| default_threshold(self.vocab.len()))
    }

    /// Clusters every vocabulary word.
    pub fn cluster(&self, cfg: &PipelineConfig) -> Result<(Clustering, RunStats)> {
        self.cluster_observed(cfg, |_, _| {})
    }

    pub fn cluster_observed<F>(&self, cfg: &PipelineConfig, observe: F) -> Result<(Clustering, RunStats)>
    where
        F: FnMut(&IterationStats, &Clustering),
    {
        let model = self.model(cfg)?;
        if cfg.cache {
            self.cluster_with(&PairCache::new(model), cfg, observe)
        } else {
            self.cluster_with(&model, cfg, observe)
        }
    }

    /// Clusters with an explicit similarity in place of the configured
    /// model.
    pub fn cluster_with<S, F>(&self, sim: &S, cfg: &PipelineConfig, observe: F) -> Result<(Clustering, RunStats)>
    where
        S: Similarity + ?Sized,
        F: FnMut(&IterationStats, &Clustering),
    {
        let t = self.threshold(cfg);
        let out = match cfg.algorithm {
            Algorithm::LexVar => {
                let init = initial_clustering(&self.vocab, &self.words, cfg)?;
                lexvar_cluster(sim, t, &init, cfg.stop, observe)
            }
            Algorithm::Hierarchical { neighborhood } => {
                hierarchical_cluster(sim, &self.words, t, neighborhood, cfg.stop, observe)
            }
        };
        let (c, stats) = out.context("clustering")?;
        Ok((c.canonicalized(), stats))
    }

    /// BCubed scores of `pred` over the evaluation words.
    pub fn evaluate(&self, pred: &Clustering) -> Result<EvalReport> {
        let Some(gold) = &self.gold else {
            bail!("evaluation: no gold standard supplied");
        };
        bcubed_eval(pred, gold, &self.eval_set).context("evaluation")
    }

    /// Clusters once per threshold in `grid`.
    pub fn threshold_sweep(&self, cfg: &PipelineConfig, grid: &[f64]) -> Result<Vec<(f64, Clustering)>> {
        grid.iter()
            .map(|&t| {
                let run = PipelineConfig {
                    threshold: Some(t),
                    ..cfg.clone()
                };
                let (c, _) = self.cluster(&run)?;
                log::debug!("threshold {t}: {} clusters", c.len());
                Ok((t, c))
            })
            .collect()
    }

    /// Runs every threshold in `grid` and keeps the one whose clustering,
    /// restricted to the evaluation words, has the cluster count closest to
    /// `target`. Ties go to the earlier grid entry.
    pub fn threshold_by_cluster_count(
        &self,
        cfg: &PipelineConfig,
        grid: &[f64],
        target: usize,
    ) -> Result<(f64, Clustering)> {
        let sweep = self.threshold_sweep(cfg, grid)?;
        let i = closest_cluster_count(&sweep, &self.eval_set, target).context("threshold grid is empty")?;
        Ok(sweep.into_iter().nth(i).expect("index from sweep"))
    }

    pub fn run(&self, cfg: &PipelineConfig) -> Result<(Clustering, EvalReport)> {
        let (c, _) = self.cluster(cfg)?;
        let report = self.evaluate(&c)?;
        Ok((c, report))
    }
}

/// Index of the sweep entry whose cluster count over `words` is closest to
/// `target`; ties go to the earlier entry.
pub fn closest_cluster_count(
    sweep: &[(f64, Clustering)],
    words: &BTreeSet<WordId>,
    target: usize,
) -> Option<usize> {
    sweep
        .iter()
        .enumerate()
        .min_by_key(|(i, (_, c))| (c.restricted(words).len().abs_diff(target), *i))
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closest_count_prefers_first_of_ties() {
        let split = |n: u32| Clustering::from_groups((0..n).map(|i| vec![i, i + 10]).collect());
        let sweep = vec![(0.1, split(1)), (0.2, split(3)), (0.3, split(5)), (0.4, split(7))];
        let words: BTreeSet<WordId> = (0..10).collect();
        assert_eq!(closest_cluster_count(&sweep, &words, 4), Some(1));
        assert_eq!(closest_cluster_count(&sweep, &words, 6), Some(2));
        assert_eq!(closest_cluster_count(&sweep, &words, 100), Some(3));
        assert_eq!(closest_cluster_count(&[], &words, 4), None);
    }
}
