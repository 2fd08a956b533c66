//! Command-line driver.
//!
//! Exit status is 0 on success, 2 on a usage error and 1 when a stage
//! fails; the error message names the stage.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::alignment::{candidate_pairs, costs_from_alignment, em_align, EmConfig};
use crate::bcubed::GoldStandard;
use crate::combine::{FeatureSet, FeatureWeights};
use crate::contextsim::EmbeddingTable;
use crate::corpus::{clean_line, preprocess, read_lines, ContextFeatureKind, Message, PreprocessOptions};
use crate::lexvar::{Clustering, StopRule};
use crate::phonetic::{CodeTable, PhoneticEncoder, Soundex, UrduPhone};
use crate::pipeline::{prepare, Algorithm, InitKind, PipelineConfig};
use crate::stringsim::CostMatrix;
use crate::synth::{generate, SynthConfig};
use crate::tuner::{optimize_parameters, weights_string, SearchSpace, TuneConfig};

#[derive(Debug, Parser)]
#[command(name = "lexnorm", version, about = "Find spelling-variant groups in a noisy corpus")]
#[command(args_override_self = true)]
pub struct Cli {
    /// `key = value` file; keys are flag names without dashes. Flags on the
    /// command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw corpus into one tokenized message per line.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Regex patterns (one per line) removed before cleaning.
        #[arg(long)]
        commands: Option<PathBuf>,
    },
    /// Write the phonetic code of every corpus word.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Scheme::Urduphone)]
        scheme: Scheme,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Learn edit costs from character alignments of near-neighbor pairs.
    LearnCosts {
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Nearest words per word used to form candidate pairs.
        #[arg(long, default_value_t = 100)]
        neighborhood: usize,
        #[arg(long, default_value_t = 10)]
        em_iters: usize,
        /// Also write the character alignment table here.
        #[arg(long)]
        alignments: Option<PathBuf>,
    },
    /// Cluster the corpus vocabulary.
    Cluster {
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write a BCubed report here (needs --gold).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a clustering file against a gold lexicon.
    Evaluate {
        /// Corpus the clustering was built from.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        clustering: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_context: usize,
        #[arg(long, default_value_t = 5)]
        context_size: usize,
        #[arg(long)]
        commands: Option<PathBuf>,
        /// Emit a tab-separated header and row instead of key = value.
        #[arg(long)]
        tsv: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tune weights and threshold with k-fold cross-validation.
    Tune {
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 60)]
        max_evals: usize,
        /// Keep the weights fixed.
        #[arg(long)]
        no_weights: bool,
        /// Keep the threshold fixed.
        #[arg(long)]
        no_threshold: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate the synthetic corpus and its gold lexicon.
    Synth {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = SynthConfig::default().bases)]
        bases: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Urduphone,
    Soundex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Urduphone,
    Random,
    Singletons,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Lexvar,
    Hierarchical,
}

#[derive(Debug, Clone, Args)]
pub struct EncoderArgs {
    /// Code length including the head letter (4-8).
    #[arg(long, default_value_t = 6)]
    pub length: usize,
    /// Ignore an h that follows a consonant.
    #[arg(long)]
    pub h_omission: bool,
    /// Code aspirated digraphs (kh, gh, ...) as single sounds.
    #[arg(long)]
    pub digraphs: bool,
    /// `letters<TAB>code` overrides for the code table.
    #[arg(long)]
    pub code_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub commands: Option<PathBuf>,
    /// Comma-separated: phonetic, string, context, context-phonetic,
    /// embedding, skipgram.
    #[arg(long, default_value = "phonetic,string,context")]
    pub features: String,
    /// Comma-separated name=value weights; unlisted weights are 1.
    #[arg(long, default_value = "")]
    pub weights: String,
    #[arg(long, default_value_t = 5)]
    pub context_size: usize,
    /// word-id, urduphone-id or cluster-id.
    #[arg(long, default_value = "word-id")]
    pub context_feature: String,
    /// word2vec text-format vectors for the embedding feature.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Edit-cost TSV (`src<TAB>tgt<TAB>cost`, `-` for null).
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    /// Similarity threshold; default 0.3, or 0.4 for 20k+ words.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = InitArg::Urduphone)]
    pub init: InitArg,
    /// Cluster count for random initialization (default: one per 4 words).
    #[arg(long)]
    pub init_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Lexvar)]
    pub algorithm: AlgorithmArg,
    /// Neighbors per word for hierarchical clustering.
    #[arg(long, default_value_t = 10)]
    pub neighborhood: usize,
    #[arg(long, default_value_t = 0.001)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 5)]
    pub min_context: usize,
    /// Memoize pair similarities.
    #[arg(long)]
    pub cache: bool,
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match with_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: config: {e:#}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    let result = match cli.workers {
        Some(0) => Err(anyhow!("workers: must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("workers")
            .and_then(|pool| pool.install(|| execute(cli.command))),
        None => execute(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Splices `--key value` pairs from the config file in front of the user's
/// own subcommand flags, so the latter win.
fn with_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = fs::read_to_string(&path).with_context(|| format!("reading {path}"))?;

    let cmd = Cli::command();
    let sub_names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let Some(pos) = strs.iter().position(|a| sub_names.contains(a)) else {
        return Ok(argv);
    };
    let sub = cmd.find_subcommand(&strs[pos]).expect("known subcommand");
    let mut injected: Vec<OsString> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            continue;
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            log::debug!("config key {key} does not apply to {}", sub.get_name());
            continue;
        };
        let takes_value = arg.get_action().takes_values();
        if takes_value {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        } else {
            match value {
                "true" | "1" | "yes" => injected.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                other => bail!("line {}: {key} expects true or false, got {other:?}", n + 1),
            }
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

fn read_text(path: &Path, stage: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("{stage}: reading {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str, stage: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("{stage}: writing {}", p.display())),
        None => io::stdout()
            .write_all(text.as_bytes())
            .with_context(|| format!("{stage}: writing stdout")),
    }
}

fn preprocess_options(commands: Option<&Path>) -> Result<PreprocessOptions> {
    match commands {
        None => Ok(PreprocessOptions::default()),
        Some(p) => {
            let text = read_text(p, "preprocess")?;
            let lines: Vec<&str> = text.lines().collect();
            PreprocessOptions::from_pattern_lines(&lines).context("preprocess")
        }
    }
}

fn raw_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).with_context(|| format!("preprocess: opening {}", path.display()))?;
    read_lines(BufReader::new(file)).context("preprocess")
}

fn load_messages(input: &Path, commands: Option<&Path>) -> Result<Vec<Message>> {
    let opts = preprocess_options(commands)?;
    let msgs = preprocess(&raw_lines(input)?, &opts);
    if msgs.is_empty() {
        bail!("preprocess: no message with two or more tokens in {}", input.display());
    }
    Ok(msgs)
}

fn encoder(args: &EncoderArgs) -> Result<UrduPhone> {
    let mut enc = UrduPhone::default()
        .length(args.length)
        .context("encode")?
        .h_omission(args.h_omission)
        .digraphs(args.digraphs);
    if let Some(p) = &args.code_table {
        let table = CodeTable::with_overrides(&read_text(p, "encode")?).context("encode")?;
        enc = enc.table(table);
    }
    Ok(enc)
}

fn pipeline_config(f: &FeatureArgs, c: Option<&ClusterArgs>) -> Result<PipelineConfig> {
    let features: FeatureSet = f.features.parse().context("features")?;
    if features.is_empty() {
        bail!("features: no feature enabled");
    }
    let weights = FeatureWeights::parse(&f.weights).context("weights")?;
    let context_feature: ContextFeatureKind = f.context_feature.parse().context("context feature")?;
    let costs = match &f.costs {
        Some(p) => CostMatrix::from_tsv(&read_text(p, "costs")?).context("costs")?,
        None => CostMatrix::unit(),
    };
    let embeddings = match &f.embeddings {
        Some(p) => Some(Arc::new(
            EmbeddingTable::parse(&read_text(p, "embeddings")?).context("embeddings")?,
        )),
        None => None,
    };
    let mut cfg = PipelineConfig {
        features,
        weights,
        context_size: f.context_size,
        context_feature,
        encoder: encoder(&f.encoder)?,
        costs,
        embeddings,
        ..PipelineConfig::default()
    };
    if let Some(c) = c {
        cfg.threshold = c.threshold;
        cfg.init = match c.init {
            InitArg::Urduphone => InitKind::UrduPhone,
            InitArg::Singletons => InitKind::Singletons,
            // count resolved once the vocabulary is known
            InitArg::Random => InitKind::Random {
                count: c.init_count.unwrap_or(0),
                seed: c.seed,
            },
        };
        cfg.algorithm = match c.algorithm {
            AlgorithmArg::Lexvar => Algorithm::LexVar,
            AlgorithmArg::Hierarchical => Algorithm::Hierarchical {
                neighborhood: c.neighborhood,
            },
        };
        cfg.stop = StopRule {
            epsilon: c.epsilon,
            max_iters: c.max_iters,
        };
        cfg.min_context = c.min_context;
        cfg.cache = c.cache;
    }
    Ok(cfg)
}

fn resolve_random_count(cfg: &mut PipelineConfig, vocab_size: usize) {
    if let InitKind::Random { count, .. } = &mut cfg.init {
        if *count == 0 {
            *count = (vocab_size / 4).max(1);
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Preprocess { input, output, commands } => {
            let msgs = load_messages(&input, commands.as_deref())?;
            let mut out = String::new();
            for m in msgs {
                out.push_str(&m.tokens.join(" "));
                out.push('\n');
            }
            write_out(output.as_deref(), &out, "preprocess")
        }
        Command::Encode { input, output, scheme, encoder: enc_args } => {
            let opts = PreprocessOptions::default();
            let mut seen = std::collections::BTreeSet::new();
            let mut words = Vec::new();
            for line in raw_lines(&input)? {
                for tok in clean_line(&line, &opts) {
                    if seen.insert(tok.clone()) {
                        words.push(tok);
                    }
                }
            }
            let enc: Box<dyn PhoneticEncoder> = match scheme {
                Scheme::Urduphone => Box::new(encoder(&enc_args)?),
                Scheme::Soundex => Box::new(Soundex),
            };
            let mut out = String::new();
            for w in words {
                match enc.encode(&w) {
                    Ok(code) => out.push_str(&format!("{w}\t{code}\n")),
                    Err(e) => log::warn!("encode: skipping {w:?}: {e}"),
                }
            }
            write_out(output.as_deref(), &out, "encode")
        }
        Command::LearnCosts { features, output, neighborhood, em_iters, alignments } => {
            let cfg = pipeline_config(&features, None)?;
            let msgs = load_messages(&features.input, features.commands.as_deref())?;
            let prepared = prepare(&msgs, None, &cfg)?;
            let model = prepared.model(&cfg)?;
            let pairs = candidate_pairs(&prepared.words, &model, neighborhood).context("candidate pairs")?;
            log::info!("{} candidate pairs", pairs.len());
            let em = em_align(
                &pairs,
                &prepared.vocab,
                &EmConfig {
                    iterations: em_iters,
                    ..EmConfig::default()
                },
            )
            .context("alignment")?;
            if let Some(p) = alignments {
                write_out(Some(&p), &em.table.to_tsv(), "alignment")?;
            }
            write_out(output.as_deref(), &costs_from_alignment(&em.table).to_tsv(), "costs")
        }
        Command::Cluster { features, cluster, gold, output, report } => {
            let mut cfg = pipeline_config(&features, Some(&cluster))?;
            let msgs = load_messages(&features.input, features.commands.as_deref())?;
            let gold = match &gold {
                Some(p) => Some(GoldStandard::from_tsv(&read_text(p, "gold")?).context("gold")?),
                None => None,
            };
            let prepared = prepare(&msgs, gold.as_ref(), &cfg)?;
            resolve_random_count(&mut cfg, prepared.vocab.len());
            let (clustering, stats) = prepared.cluster(&cfg)?;
            log::info!(
                "{} clusters after {} iterations",
                clustering.len(),
                stats.iterations.len()
            );
            write_out(output.as_deref(), &clustering.to_tsv(&prepared.vocab), "output")?;
            if let Some(p) = report {
                if gold.is_none() {
                    bail!("evaluation: --report needs --gold");
                }
                let r = prepared.evaluate(&clustering)?;
                write_out(Some(&p), &r.to_key_value(), "report")?;
            }
            Ok(())
        }
        Command::Evaluate { input, clustering, gold, min_context, context_size, commands, tsv, output } => {
            let msgs = load_messages(&input, commands.as_deref())?;
            let gold = GoldStandard::from_tsv(&read_text(&gold, "gold")?).context("gold")?;
            let cfg = PipelineConfig {
                min_context,
                context_size,
                ..PipelineConfig::default()
            };
            let prepared = prepare(&msgs, Some(&gold), &cfg)?;
            let pred = Clustering::from_tsv(&read_text(&clustering, "clustering")?, &prepared.vocab)
                .context("clustering")?;
            let r = prepared.evaluate(&pred)?;
            let text = if tsv {
                format!("{}\n{}\n", crate::bcubed::EvalReport::TSV_HEADER, r.to_tsv_row())
            } else {
                r.to_key_value()
            };
            write_out(output.as_deref(), &text, "report")
        }
        Command::Tune { features, cluster, gold, folds, max_evals, no_weights, no_threshold, output } => {
            let mut cfg = pipeline_config(&features, Some(&cluster))?;
            let msgs = load_messages(&features.input, features.commands.as_deref())?;
            let gold = GoldStandard::from_tsv(&read_text(&gold, "gold")?).context("gold")?;
            if let InitKind::Random { count: 0, .. } = cfg.init {
                bail!("tune: random initialization needs --init-count");
            }
            resolve_random_count(&mut cfg, 0);
            let tune = TuneConfig {
                folds,
                seed: cluster.seed,
                search: SearchSpace {
                    weights: !no_weights,
                    threshold: !no_threshold,
                },
                max_evals,
                ..TuneConfig::default()
            };
            let report = optimize_parameters(&msgs, &gold, &cfg, &tune).context("tuning")?;
            log::info!("chosen weights {}", weights_string(&report.weights));
            write_out(output.as_deref(), &report.to_text(), "report")
        }
        Command::Synth { corpus, gold, seed, bases } => {
            let fx = generate(&SynthConfig {
                seed,
                bases,
                ..SynthConfig::default()
            });
            write_out(Some(&corpus), &(fx.lines.join("\n") + "\n"), "synth")?;
            write_out(Some(&gold), &fx.gold.to_tsv(), "synth")
        }
    }
}
