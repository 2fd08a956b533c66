//! Unsupervised lexical normalization for text without a standard spelling.
//!
//! The crate discovers groups of spelling variants ("lexical groups") in a
//! corpus by clustering its vocabulary. Word similarity is a weighted
//! combination of a Soundex-style phonetic code (UrduPhone), an
//! LCS/edit-distance string score and a rank-weighted context score.
//! Clusters are found with Lex-Var, a thresholded k-medoids variant, and
//! scored with BCubed precision/recall against a gold lexicon.
//!
//! The modules follow the pipeline order:
//!
//! - [`corpus`]: preprocessing, vocabulary and context extraction
//! - [`phonetic`]: UrduPhone and Soundex encoders
//! - [`stringsim`]: LCS, weighted edit distance, skip-gram Jaccard
//! - [`alignment`]: EM character alignment for learned edit costs
//! - [`contextsim`]: rank-weighted context similarity, embedding cosine
//! - [`combine`]: the weighted feature combiner
//! - [`lexvar`]: Lex-Var and its hierarchical variant
//! - [`bcubed`]: BCubed evaluation
//! - [`tuner`]: Nelder-Mead parameter search with cross-validation
//! - [`pipeline`], [`synth`], [`cli`]: glue, fixtures and the command line

pub mod alignment;
pub mod bcubed;
pub mod cli;
pub mod combine;
pub mod contextsim;
pub mod corpus;
pub mod lexvar;
pub mod phonetic;
pub mod pipeline;
pub mod stringsim;
pub mod synth;
pub mod tuner;

/// Dense vocabulary index of a word.
pub type WordId = u32;

pub use bcubed::{bcubed_eval, EvalReport, GoldStandard};
pub use combine::{FeatureKind, FeatureSet, FeatureWeights, Similarity, SimilarityModel};
pub use corpus::{Message, Vocabulary, WordEntry};
pub use lexvar::{Cluster, Clustering, StopRule};
pub use phonetic::{PhoneticCode, Soundex, UrduPhone};
pub use stringsim::CostMatrix;
