//! Shared plumbing: error-to-exit-code mapping, corpus loading and
//! partitioning, threshold calibration, and report/params file I/O.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use polyprotect::attack::ThresholdLabel;
use polyprotect::corpus::{
    load_corpus, partition_corpus, Corpus, CorpusPartition, PartitionConfig,
};
use polyprotect::transform::{CoeffRange, ParamSpec, PolyParams, ProtectedTemplate, ScoreRange};
use polyprotect::verify::{run_scenario, threshold_at_fmr, Scenario};

use crate::args::CorpusArgs;

/// Command error split by exit code: configuration problems exit 2, runtime
/// failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl From<polyprotect::Error> for CliError {
    fn from(e: polyprotect::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn coeff_range(lo: i64, hi: i64) -> CliResult<CoeffRange> {
    Ok(CoeffRange::new(lo, hi)?)
}

pub fn param_spec(m: usize, overlap: usize, lo: i64, hi: i64) -> CliResult<ParamSpec> {
    Ok(ParamSpec::new(m, overlap, coeff_range(lo, hi)?)?)
}

pub fn load_and_partition(args: &CorpusArgs) -> CliResult<(Corpus, CorpusPartition)> {
    let corpus = load_corpus(&args.corpus, args.dim)?;
    let partition = partition_corpus(
        &corpus,
        &PartitionConfig {
            dev_fraction: args.dev_fraction,
            reference_samples: args.ref_samples,
        },
    )?;
    Ok((corpus, partition))
}

/// Baseline match thresholds on the development split, calibrated at
/// FMR 0.01% (strict), 0.1% (common), and 1% (lenient).
pub fn baseline_thresholds(
    partition: &CorpusPartition,
    m: usize,
    seed: u64,
) -> CliResult<BTreeMap<ThresholdLabel, f64>> {
    let spec = ParamSpec::new(m, 0, polyprotect::transform::DEFAULT_COEFF_RANGE)?;
    let dev = run_scenario(
        &partition.dev_reference,
        &partition.dev_query,
        spec,
        Scenario::Baseline,
        1,
        seed,
    )?;
    Ok(BTreeMap::from([
        (
            ThresholdLabel::Strict,
            threshold_at_fmr(&dev.impostor, 1e-4)?,
        ),
        (
            ThresholdLabel::Common,
            threshold_at_fmr(&dev.impostor, 1e-3)?,
        ),
        (
            ThresholdLabel::Lenient,
            threshold_at_fmr(&dev.impostor, 1e-2)?,
        ),
    ]))
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_params_file(path: &Path) -> CliResult<Vec<PolyParams>> {
    let params: Vec<PolyParams> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    for p in &params {
        p.validate().map_err(|e| {
            CliError::Config(format!("invalid parameters for owner {}: {e}", p.owner_id))
        })?;
    }
    Ok(params)
}

pub fn read_templates_file(path: &Path) -> CliResult<Vec<ProtectedTemplate>> {
    let reader = BufReader::new(File::open(path)?);
    let mut templates = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: ProtectedTemplate = serde_json::from_str(&line)
            .map_err(|e| CliError::Runtime(format!("template file line {}: {e}", i + 1)))?;
        templates.push(t);
    }
    Ok(templates)
}

/// Per-overlap score ranges, keyed by the overlap as a decimal string.
pub type RangeMap = BTreeMap<String, ScoreRange>;

pub fn write_ranges(path: &Path, ranges: &RangeMap) -> CliResult {
    write_json(path, ranges)
}

pub fn read_ranges(path: &Path) -> CliResult<RangeMap> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
