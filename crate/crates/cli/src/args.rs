use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "polyprotect",
    version,
    about = "PolyProtect embedding protection: transform, accuracy, inversion attacks, linkability"
)]
pub struct Cli {
    /// Seed for every randomized step; identical seeds give byte-identical
    /// reports.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads for data-parallel stages (default: all cores). Results
    /// do not depend on the worker count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a deterministic synthetic embedding corpus CSV.
    GenCorpus(GenCorpusArgs),
    /// Protect every embedding of a corpus, emitting templates as JSON lines.
    Protect(ProtectArgs),
    /// Compare two template files row by row.
    Compare(CompareArgs),
    /// Generate user-specific parameter sets as a JSON file.
    GenParams(GenParamsArgs),
    /// Verification accuracy over an overlap grid (baseline/normal/sce).
    EvalAccuracy(EvalAccuracyArgs),
    /// Single-template inversion campaign per overlap.
    AttackInvert(AttackArgs),
    /// Record-multiplicity inversion campaigns over a grid of stacked
    /// template counts.
    AttackArm(AttackArmArgs),
    /// Unlinkability evaluation (baseline/naive/strict modes).
    EvalUnlink(EvalUnlinkArgs),
    /// Derive per-overlap full-unlinkability score ranges on the
    /// development split.
    DeriveRange(DeriveRangeArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub subjects: usize,
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub between_std: f64,
    #[arg(long, default_value_t = 0.1)]
    pub within_std: f64,
    /// Scale each sample to unit Euclidean norm.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub unit_normalize: bool,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Corpus input shared by the experiment commands: a CSV plus deterministic
/// partitioning into development/evaluation subjects and reference/query
/// samples.
#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Embedding corpus CSV.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Expected embedding dimensionality (checked on load).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Fraction of subjects assigned to the development split.
    #[arg(long, default_value_t = 0.5)]
    pub dev_fraction: f64,
    /// Per-subject samples used as enrollment references.
    #[arg(long, default_value_t = 5)]
    pub ref_samples: usize,
}

#[derive(Debug, Args)]
pub struct ProtectArgs {
    /// Input corpus CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Expected embedding dimensionality (checked on load).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Overlap for generated parameters.
    #[arg(long, required_unless_present = "params")]
    pub overlap: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value_t = -50)]
    pub coeff_lo: i64,
    #[arg(long, default_value_t = 50)]
    pub coeff_hi: i64,
    /// Existing parameter file (JSON array); one entry per subject.
    #[arg(long, conflicts_with = "gen_params")]
    pub params: Option<PathBuf>,
    /// Generate fresh per-subject parameters instead of loading them.
    #[arg(long, requires = "params_out")]
    pub gen_params: bool,
    /// Where to write generated parameters.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
    /// Output template file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First template file (JSON lines).
    #[arg(long)]
    pub a: PathBuf,
    /// Second template file (JSON lines), compared row by row against the first.
    #[arg(long)]
    pub b: PathBuf,
    /// Optional CSV output (`index,score`); scores print to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenParamsArgs {
    /// Comma-separated owner ids.
    #[arg(long, value_delimiter = ',', conflicts_with = "count")]
    pub owners: Option<Vec<String>>,
    /// Generate this many owners named s0000, s0001, ...
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long)]
    pub overlap: usize,
    #[arg(long, default_value_t = -50)]
    pub coeff_lo: i64,
    #[arg(long, default_value_t = 50)]
    pub coeff_hi: i64,
    /// Output JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Baseline,
    Normal,
    Sce,
}

#[derive(Debug, Args)]
pub struct EvalAccuracyArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub overlaps: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value_t = -50)]
    pub coeff_lo: i64,
    #[arg(long, default_value_t = 50)]
    pub coeff_hi: i64,
    /// FMR operating points for TMR reporting.
    #[arg(long, value_delimiter = ',', default_value = "0.0001,0.001,0.01")]
    pub fmr_targets: Vec<f64>,
    /// Maximum number of ROC points per report.
    #[arg(long, default_value_t = 200)]
    pub roc_points: usize,
    /// Report output directory (one JSON per overlap).
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[allow(clippy::enum_variant_names)] // the dev- prefix is the point: all sources are development data
pub enum DistSource {
    /// Development-split reference embeddings (the attacker's view).
    DevRef,
    /// Development-split query embeddings.
    DevQuery,
    /// The whole development split.
    DevAll,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub overlaps: Vec<usize>,
    /// Number of attacked templates per overlap.
    #[arg(long, default_value_t = 50)]
    pub targets: usize,
    /// Initial guess vectors per target.
    #[arg(long, default_value_t = 100)]
    pub guesses: usize,
    /// Histogram bins for the attacker's element distributions.
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Which development embeddings the attacker fits distributions on.
    #[arg(long, value_enum, default_value_t = DistSource::DevRef)]
    pub dist_source: DistSource,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value_t = -50)]
    pub coeff_lo: i64,
    #[arg(long, default_value_t = 50)]
    pub coeff_hi: i64,
    /// Report output directory (one JSON per overlap/p cell).
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttackArmArgs {
    #[command(flatten)]
    pub attack: AttackArgs,
    /// Stacked template counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub p_values: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnlinkMode {
    /// Raw embeddings, no protection.
    Baseline,
    /// Protected templates, uniformly random parameters.
    Naive,
    /// Protected templates, parameters accepted only inside the derived
    /// score range.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Dev,
    Eval,
}

#[derive(Debug, Args)]
pub struct EvalUnlinkArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub overlaps: Vec<usize>,
    #[arg(long, value_enum)]
    pub mode: UnlinkMode,
    /// Ranges file produced by derive-range (required in strict mode).
    #[arg(long)]
    pub range_file: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub templates_per_subject: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Prior ratio weighting the likelihood ratio.
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// Which subject split to evaluate on.
    #[arg(long, value_enum, default_value_t = SplitArg::Eval)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value_t = -50)]
    pub coeff_lo: i64,
    #[arg(long, default_value_t = 50)]
    pub coeff_hi: i64,
    /// Report output directory (one JSON per overlap).
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DeriveRangeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub overlaps: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub templates_per_subject: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value_t = -50)]
    pub coeff_lo: i64,
    #[arg(long, default_value_t = 50)]
    pub coeff_hi: i64,
    /// Output directory; ranges land in `<out-dir>/ranges.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}
