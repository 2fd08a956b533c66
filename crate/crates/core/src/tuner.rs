//! Nelder-Mead maximization of BCubed F over feature weights and the
//! clustering threshold, with message-level k-fold cross-validation.

use std::collections::HashMap;
use std::sync::Mutex;

use anyhow::Result;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bcubed::GoldStandard;
use crate::combine::{FeatureKind, FeatureWeights};
use crate::corpus::Message;
use crate::pipeline::{prepare, PipelineConfig, PreparedCorpus};

#[derive(Debug, Error, PartialEq)]
pub enum TuneError {
    #[error("objective is not finite at {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("every fold is degenerate")]
    NoFolds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Stop once every vertex is within `tol` of the best one.
    pub tol: f64,
    pub max_evals: usize,
    pub step: f64,
}

impl NelderMeadConfig {
    pub fn bounded(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        NelderMeadConfig {
            lower,
            upper,
            tol: 1e-9,
            max_evals: 2000,
            step: 0.25,
        }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::bounded(vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best objective value after each iteration.
    pub best_trace: Vec<f64>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Maximizes `f` from `x0`. Points are clamped to the configured box; the
/// initial simplex steps `step` along each axis (backwards when the bound
/// leaves no room forward).
pub fn nelder_mead<F>(f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Result<NelderMeadResult, TuneError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = x0.len();
    if dim == 0 || cfg.lower.len() != dim || cfg.upper.len() != dim {
        return Err(TuneError::Config(format!(
            "dimension {dim} with bounds of length {}/{}",
            cfg.lower.len(),
            cfg.upper.len()
        )));
    }
    let clamp = |x: Vec<f64>| -> Vec<f64> {
        x.into_iter()
            .enumerate()
            .map(|(i, v)| v.clamp(cfg.lower[i], cfg.upper[i]))
            .collect()
    };
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| -> Result<f64, TuneError> {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TuneError::NonFinite { point: x.to_vec() })
        }
    };

    let start = clamp(x0.to_vec());
    let mut points = vec![start.clone()];
    for i in 0..dim {
        let mut p = start.clone();
        p[i] += cfg.step;
        let mut p = clamp(p);
        if p[i] == start[i] {
            p[i] -= cfg.step;
            p = clamp(p);
        }
        points.push(p);
    }
    let values: Vec<f64> = points.par_iter().map(|p| f(p)).collect();
    evals += values.len();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(TuneError::NonFinite { point: points[i].clone() });
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = points.into_iter().zip(values).collect();
    let mut trace = Vec::new();

    loop {
        // best first; stable so earlier vertices win ties
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite"));
        trace.push(simplex[0].1);
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| dist(p, &simplex[0].0))
            .fold(0.0, f64::max);
        if diameter < cfg.tol || evals >= cfg.max_evals {
            break;
        }
        let n = simplex.len();
        let worst = simplex[n - 1].clone();
        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..n - 1].iter().map(|(p, _)| p[i]).sum::<f64>() / (n - 1) as f64)
            .collect();
        let toward = |coef: f64, from: &[f64]| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(from)
                    .map(|(c, x)| c + coef * (x - c))
                    .collect(),
            )
        };

        let xr = toward(-REFLECT, &worst.0);
        let fr = eval(&xr, &mut evals)?;
        if fr > simplex[0].1 {
            let xe = toward(EXPAND, &xr);
            let fe = eval(&xe, &mut evals)?;
            simplex[n - 1] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[n - 2].1 {
            simplex[n - 1] = (xr, fr);
            continue;
        }
        let outside = fr > worst.1;
        let xc = toward(CONTRACT, if outside { &xr } else { &worst.0 });
        let fc = eval(&xc, &mut evals)?;
        if (outside && fc >= fr) || (!outside && fc > worst.1) {
            simplex[n - 1] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        let shrunk: Vec<Vec<f64>> = simplex[1..]
            .iter()
            .map(|(p, _)| clamp(best.iter().zip(p).map(|(b, x)| b + SHRINK * (x - b)).collect()))
            .collect();
        let values: Vec<f64> = shrunk.par_iter().map(|p| f(p)).collect();
        evals += values.len();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TuneError::NonFinite { point: shrunk[i].clone() });
        }
        for (slot, pv) in simplex[1..].iter_mut().zip(shrunk.into_iter().zip(values)) {
            *slot = pv;
        }
    }
    let (x, value) = simplex.swap_remove(0);
    Ok(NelderMeadResult {
        x,
        value,
        evaluations: evals,
        best_trace: trace,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Which parameters the tuner may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSpace {
    pub weights: bool,
    pub threshold: bool,
}

#[derive(Debug, Clone)]
pub struct TuneConfig {
    pub folds: usize,
    pub seed: u64,
    pub search: SearchSpace,
    pub max_evals: usize,
    pub tol: f64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            folds: 10,
            seed: 0,
            search: SearchSpace {
                weights: true,
                threshold: true,
            },
            max_evals: 60,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub held_in_default_f: f64,
    pub held_in_tuned_f: f64,
    pub weights: FeatureWeights,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub weights: FeatureWeights,
    pub threshold: f64,
    /// Mean held-out F of the chosen parameters.
    pub cv_f: f64,
    pub default_cv_f: f64,
    /// Held-out F per evaluated fold for the chosen parameters.
    pub held_out_f: Vec<f64>,
    pub folds: Vec<FoldReport>,
}

impl TuningReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.folds {
            out.push_str(&format!(
                "fold {}\theld_in_default_f = {:.6}\theld_in_tuned_f = {:.6}\tthreshold = {:.6}\tweights = {}\n",
                f.fold,
                f.held_in_default_f,
                f.held_in_tuned_f,
                f.threshold,
                weights_string(&f.weights)
            ));
        }
        out.push_str(&format!("chosen_weights = {}\n", weights_string(&self.weights)));
        out.push_str(&format!("chosen_threshold = {:.6}\n", self.threshold));
        out.push_str(&format!("cv_f = {:.6}\n", self.cv_f));
        out.push_str(&format!("default_cv_f = {:.6}\n", self.default_cv_f));
        out
    }
}

pub fn weights_string(w: &FeatureWeights) -> String {
    FeatureKind::ALL
        .iter()
        .map(|&k| format!("{}={:.6}", k.name(), w.get(k)))
        .collect::<Vec<_>>()
        .join(",")
}

/// Splits message indices into `k` folds after a seeded shuffle.
pub fn split_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, m) in idx.into_iter().enumerate() {
        folds[i % k].push(m);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

struct Fold {
    index: usize,
    held_in: PreparedCorpus,
    held_out: PreparedCorpus,
    /// Corpus keys for the score cache; equal message sets share a key.
    in_key: usize,
    out_key: usize,
}

/// Remembers F per (corpus, weights, resolved threshold). With two folds the
/// held-out half of one fold is the held-in half of the other, and the
/// search starts from the default point, so many scores repeat.
#[derive(Default)]
struct ScoreCache {
    corpora: HashMap<Vec<usize>, usize>,
    scores: Mutex<HashMap<(usize, Vec<u64>, u64), f64>>,
}

impl ScoreCache {
    fn corpus_key(&mut self, messages: Vec<usize>) -> usize {
        let next = self.corpora.len();
        *self.corpora.entry(messages).or_insert(next)
    }

    fn score(&self, key: usize, corpus: &PreparedCorpus, cfg: &PipelineConfig) -> Result<f64> {
        let entry = (
            key,
            FeatureKind::ALL.iter().map(|&k| cfg.weights.get(k).to_bits()).collect(),
            corpus.threshold(cfg).to_bits(),
        );
        if let Some(&f) = self.scores.lock().unwrap().get(&entry) {
            return Ok(f);
        }
        let f = score(corpus, cfg)?;
        self.scores.lock().unwrap().insert(entry, f);
        Ok(f)
    }
}

/// Maps a parameter vector onto the pipeline config.
struct Params<'a> {
    base: &'a PipelineConfig,
    kinds: Vec<FeatureKind>,
    search: SearchSpace,
}

impl Params<'_> {
    fn start(&self, default_t: f64) -> Vec<f64> {
        let mut x: Vec<f64> = self.kinds.iter().map(|&k| self.base.weights.get(k)).collect();
        if self.search.threshold {
            x.push(self.base.threshold.unwrap_or(default_t));
        }
        x
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![0.0; self.kinds.len()];
        let mut hi = vec![4.0; self.kinds.len()];
        if self.search.threshold {
            lo.push(0.0);
            hi.push(1.0);
        }
        (lo, hi)
    }

    fn apply(&self, x: &[f64]) -> PipelineConfig {
        let mut cfg = self.base.clone();
        for (i, &k) in self.kinds.iter().enumerate() {
            cfg.weights.set(k, x[i]);
        }
        if self.search.threshold {
            cfg.threshold = Some(x[self.kinds.len()]);
        }
        cfg
    }
}

/// F of `cfg` on `corpus`; parameter sets the model rejects score 0.
fn score(corpus: &PreparedCorpus, cfg: &PipelineConfig) -> Result<f64> {
    if cfg.weights.validate(cfg.features).is_err() {
        return Ok(0.0);
    }
    if corpus.model(cfg).is_err() {
        return Ok(0.0);
    }
    let started = std::time::Instant::now();
    let f = corpus.run(cfg)?.1.f_measure;
    log::debug!(
        "weights {} threshold {:?}: F {f:.4} in {:.2?}",
        weights_string(&cfg.weights),
        cfg.threshold,
        started.elapsed()
    );
    Ok(f)
}

/// Per fold, tunes on the held-in messages starting from `base`; then picks,
/// among `base` and every fold optimum, the parameters with the best mean
/// held-out F. `base` wins ties.
pub fn optimize_parameters(
    messages: &[Message],
    gold: &GoldStandard,
    base: &PipelineConfig,
    tune: &TuneConfig,
) -> Result<TuningReport> {
    if tune.folds < 2 {
        return Err(TuneError::Config("at least two folds are required".into()).into());
    }
    if tune.folds > messages.len() {
        return Err(TuneError::Config(format!(
            "{} folds for {} messages",
            tune.folds,
            messages.len()
        ))
        .into());
    }
    let split = split_folds(messages.len(), tune.folds, tune.seed);
    let mut cache = ScoreCache::default();
    let mut folds = Vec::new();
    for (index, out_idx) in split.iter().enumerate() {
        let mut is_out = vec![false; messages.len()];
        for &i in out_idx {
            is_out[i] = true;
        }
        let held_in: Vec<Message> = messages
            .iter()
            .zip(&is_out)
            .filter(|(_, &o)| !o)
            .map(|(m, _)| m.clone())
            .collect();
        let held_out: Vec<Message> = out_idx.iter().map(|&i| messages[i].clone()).collect();
        let in_key = cache.corpus_key((0..messages.len()).filter(|&i| !is_out[i]).collect());
        let out_key = cache.corpus_key(out_idx.clone());
        let prepared = prepare(&held_in, Some(gold), base)
            .and_then(|a| Ok((a, prepare(&held_out, Some(gold), base)?)));
        match prepared {
            Ok((a, b)) if !a.eval_set.is_empty() && !b.eval_set.is_empty() => folds.push(Fold {
                index,
                held_in: a,
                held_out: b,
                in_key,
                out_key,
            }),
            Ok(_) => log::warn!("fold {index}: no evaluation words; skipped"),
            Err(e) => log::warn!("fold {index}: {e:#}; skipped"),
        }
    }
    if folds.is_empty() {
        return Err(TuneError::NoFolds.into());
    }

    let params = Params {
        base,
        kinds: if tune.search.weights {
            base.features.iter().collect()
        } else {
            Vec::new()
        },
        search: tune.search,
    };
    let searching = !params.kinds.is_empty() || tune.search.threshold;

    let mut reports = Vec::new();
    let mut candidates = vec![base.clone()];
    for fold in &folds {
        let default_t = fold.held_in.threshold(base);
        let held_in_default_f = cache.score(fold.in_key, &fold.held_in, base)?;
        let (cfg, tuned_f) = if searching {
            let (lo, hi) = params.bounds();
            let nm = NelderMeadConfig {
                tol: tune.tol,
                max_evals: tune.max_evals,
                ..NelderMeadConfig::bounded(lo, hi)
            };
            let objective = |x: &[f64]| cache.score(fold.in_key, &fold.held_in, &params.apply(x)).unwrap_or(f64::NAN);
            let r = nelder_mead(objective, &params.start(default_t), &nm)?;
            if r.value > held_in_default_f {
                (params.apply(&r.x), r.value)
            } else {
                (base.clone(), held_in_default_f)
            }
        } else {
            (base.clone(), held_in_default_f)
        };
        log::info!("fold {}: held-in F {held_in_default_f:.4} -> {tuned_f:.4}", fold.index);
        reports.push(FoldReport {
            fold: fold.index,
            held_in_default_f,
            held_in_tuned_f: tuned_f,
            weights: cfg.weights,
            threshold: fold.held_in.threshold(&cfg),
        });
        candidates.push(cfg);
    }

    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut default_scores = Vec::new();
    for (ci, cand) in candidates.iter().enumerate() {
        let scores: Vec<f64> = folds
            .iter()
            .map(|f| cache.score(f.out_key, &f.held_out, cand))
            .collect::<Result<_>>()?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        if ci == 0 {
            default_scores = scores.clone();
        }
        if best.as_ref().is_none_or(|(_, b, _)| mean > *b) {
            best = Some((ci, mean, scores));
        }
    }
    let (ci, cv_f, held_out_f) = best.expect("at least the base candidate");
    let chosen = &candidates[ci];
    let default_cv_f = default_scores.iter().sum::<f64>() / default_scores.len() as f64;
    Ok(TuningReport {
        weights: chosen.weights,
        threshold: chosen
            .threshold
            .unwrap_or_else(|| folds[0].held_in.threshold(chosen)),
        cv_f,
        default_cv_f,
        held_out_f,
        folds: reports,
    })
}
