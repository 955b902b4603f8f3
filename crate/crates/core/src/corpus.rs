//! Embedding corpora: representation, CSV I/O, synthetic generation, and
//! development/evaluation partitioning.
//!
//! The on-disk format is a UTF-8 CSV with header
//! `subject_id,sample_id,v0,...,v{n-1}`, one row per embedding, `.` decimal
//! separator, LF line endings. Values are written with 17 significant digits
//! so that save/load round-trips are lossless for 64-bit floats. Rows are
//! always emitted in canonical order (subject id, then sample id).

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domains, substream};

/// One n-dimensional real feature vector with identity attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub subject_id: String,
    pub sample_id: String,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn new(
        subject_id: impl Into<String>,
        sample_id: impl Into<String>,
        values: Vec<f64>,
    ) -> Self {
        Self {
            subject_id: subject_id.into(),
            sample_id: sample_id.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Which experiment half a corpus belongs to. Development and evaluation
/// splits hold disjoint subjects; thresholds and score ranges are calibrated
/// on development data and applied to evaluation data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Development,
    Evaluation,
}

/// Enrollment (reference) versus probe (query) role within a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Reference,
    Query,
}

/// A set of embeddings of uniform dimensionality, stored in canonical
/// (subject id, sample id) order. `split`/`role` are provenance labels set
/// by the partitioning helpers; freshly generated or loaded corpora carry
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    embeddings: Vec<Embedding>,
    dim: usize,
    pub split: Option<Split>,
    pub role: Option<Role>,
}

impl Corpus {
    /// Builds a corpus, sorting into canonical order and validating the
    /// invariants: uniform dimensionality >= 1, finite values, unique
    /// (subject, sample) keys.
    pub fn new(mut embeddings: Vec<Embedding>) -> Result<Self> {
        let dim = match embeddings.first() {
            Some(e) => e.dim(),
            None => {
                return Err(Error::Domain(
                    "cannot infer dimensionality of an empty corpus; use Corpus::empty".into(),
                ))
            }
        };
        if dim == 0 {
            return Err(Error::Domain(
                "embedding dimensionality must be >= 1".into(),
            ));
        }
        for e in &embeddings {
            if e.dim() != dim {
                return Err(Error::Domain(format!(
                    "inconsistent dimensionality: ({}, {}) has {} values, expected {}",
                    e.subject_id,
                    e.sample_id,
                    e.dim(),
                    dim
                )));
            }
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite value in embedding ({}, {})",
                    e.subject_id, e.sample_id
                )));
            }
        }
        embeddings.sort_by(|a, b| {
            (a.subject_id.as_str(), a.sample_id.as_str())
                .cmp(&(b.subject_id.as_str(), b.sample_id.as_str()))
        });
        for w in embeddings.windows(2) {
            if w[0].subject_id == w[1].subject_id && w[0].sample_id == w[1].sample_id {
                return Err(Error::Domain(format!(
                    "duplicate embedding key ({}, {})",
                    w[0].subject_id, w[0].sample_id
                )));
            }
        }
        Ok(Self {
            embeddings,
            dim,
            split: None,
            role: None,
        })
    }

    /// An empty corpus of known dimensionality.
    pub fn empty(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain(
                "embedding dimensionality must be >= 1".into(),
            ));
        }
        Ok(Self {
            embeddings: Vec::new(),
            dim,
            split: None,
            role: None,
        })
    }

    pub fn with_labels(mut self, split: Option<Split>, role: Option<Role>) -> Self {
        self.split = split;
        self.role = role;
        self
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    /// Embeddings grouped by subject, subjects in sorted order.
    pub fn by_subject(&self) -> BTreeMap<&str, Vec<&Embedding>> {
        let mut map: BTreeMap<&str, Vec<&Embedding>> = BTreeMap::new();
        for e in &self.embeddings {
            map.entry(e.subject_id.as_str()).or_default().push(e);
        }
        map
    }

    /// Sorted unique subject ids.
    pub fn subject_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .embeddings
            .iter()
            .map(|e| e.subject_id.as_str())
            .collect();
        ids.dedup();
        ids
    }
}

/// Configuration for the synthetic-corpus generator: a Gaussian mixture with
/// one class center per subject. The `between_class_std / within_class_std`
/// ratio controls how separable subjects are.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    pub dim: usize,
    pub between_class_std: f64,
    pub within_class_std: f64,
    pub unit_normalize: bool,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.samples_per_subject == 0 || self.dim == 0 {
            return Err(Error::Config(
                "n_subjects, samples_per_subject, and dim must all be positive".into(),
            ));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.between_class_std) || !positive(self.within_class_std) {
            return Err(Error::Config(
                "class std deviations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic synthetic corpus: per subject, a class center drawn from
/// N(0, between_class_std^2) per element; each sample is the center plus
/// N(0, within_class_std^2) noise, optionally scaled to unit Euclidean norm.
/// Each subject uses its own generator substream, so output is independent
/// of evaluation order.
pub fn generate_synthetic_corpus(cfg: &SyntheticConfig) -> Result<Corpus> {
    cfg.validate()?;
    let between = Normal::new(0.0, cfg.between_class_std)
        .map_err(|e| Error::Config(format!("bad between-class std: {e}")))?;
    let within = Normal::new(0.0, cfg.within_class_std)
        .map_err(|e| Error::Config(format!("bad within-class std: {e}")))?;

    let mut embeddings = Vec::with_capacity(cfg.n_subjects * cfg.samples_per_subject);
    for s in 0..cfg.n_subjects {
        let mut rng = substream(cfg.seed, domains::SYNTHESIS, s as u64);
        let center: Vec<f64> = (0..cfg.dim).map(|_| between.sample(&mut rng)).collect();
        for j in 0..cfg.samples_per_subject {
            let mut values: Vec<f64> = center.iter().map(|c| c + within.sample(&mut rng)).collect();
            if cfg.unit_normalize {
                let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for v in &mut values {
                        *v /= norm;
                    }
                }
            }
            embeddings.push(Embedding::new(
                format!("s{s:04}"),
                format!("e{j:03}"),
                values,
            ));
        }
    }
    Corpus::new(embeddings)
}

/// Formats a value with 17 significant digits, enough for a lossless f64
/// round-trip through decimal text.
fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a corpus in the CSV format described in the module docs.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["subject_id".to_string(), "sample_id".to_string()];
    header.extend((0..corpus.dim()).map(|i| format!("v{i}")));
    writer.write_record(&header)?;
    for e in corpus.embeddings() {
        let mut record = vec![e.subject_id.clone(), e.sample_id.clone()];
        record.extend(e.values.iter().map(|v| format_value(*v)));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads a corpus, validating the header shape, per-row dimensionality, and
/// value finiteness. Errors name the offending 1-based line.
pub fn load_corpus(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Corpus> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(BufReader::new(file));

    let headers = reader.headers()?.clone();
    if headers.len() < 3
        || headers.get(0) != Some("subject_id")
        || headers.get(1) != Some("sample_id")
    {
        return Err(Error::Parse {
            line: 1,
            message: "header must be subject_id,sample_id,v0,...".into(),
        });
    }
    let dim = headers.len() - 2;
    for (i, name) in headers.iter().skip(2).enumerate() {
        if name != format!("v{i}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("value column {} must be named v{i}, found {name:?}", i + 2),
            });
        }
    }
    if let Some(expected) = expected_dim {
        if dim != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("corpus has dimensionality {dim}, expected {expected}"),
            });
        }
    }

    let mut embeddings = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(pos) => Error::Parse {
                line: pos.line(),
                message: e.to_string(),
            },
            None => Error::Csv(e),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut values = Vec::with_capacity(dim);
        for (i, field) in record.iter().skip(2).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column v{i}: invalid float {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column v{i}: non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        embeddings.push(Embedding::new(&record[0], &record[1], values));
    }
    if embeddings.is_empty() {
        return Corpus::empty(dim);
    }
    Corpus::new(embeddings)
}

/// How to partition a flat corpus into experiment cells.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Fraction of subjects assigned to the development split.
    pub dev_fraction: f64,
    /// Per-subject samples used as enrollment references; the rest are queries.
    pub reference_samples: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            dev_fraction: 0.5,
            reference_samples: 2,
        }
    }
}

/// The four experiment cells plus role-merged views of each split.
#[derive(Debug, Clone)]
pub struct CorpusPartition {
    pub dev_reference: Corpus,
    pub dev_query: Corpus,
    pub eval_reference: Corpus,
    pub eval_query: Corpus,
    pub development: Corpus,
    pub evaluation: Corpus,
}

/// Splits subjects into disjoint development/evaluation halves (sorted
/// subject order, development first), then splits each subject's samples
/// into reference and query roles (sorted sample order, references first).
pub fn partition_corpus(corpus: &Corpus, cfg: &PartitionConfig) -> Result<CorpusPartition> {
    if !(cfg.dev_fraction > 0.0 && cfg.dev_fraction < 1.0) {
        return Err(Error::Config(
            "dev_fraction must lie strictly between 0 and 1".into(),
        ));
    }
    if cfg.reference_samples == 0 {
        return Err(Error::Config("reference_samples must be positive".into()));
    }
    let by_subject = corpus.by_subject();
    let n_subjects = by_subject.len();
    if n_subjects < 2 {
        return Err(Error::Protocol(
            "partitioning needs at least 2 subjects".into(),
        ));
    }
    let n_dev = ((n_subjects as f64 * cfg.dev_fraction).round() as usize).clamp(1, n_subjects - 1);

    let mut cells: [Vec<Embedding>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for (idx, (subject, samples)) in by_subject.iter().enumerate() {
        if samples.len() <= cfg.reference_samples {
            return Err(Error::Protocol(format!(
                "subject {subject} has {} samples; needs more than reference_samples={}",
                samples.len(),
                cfg.reference_samples
            )));
        }
        let dev = idx < n_dev;
        for (j, e) in samples.iter().enumerate() {
            let reference = j < cfg.reference_samples;
            let cell = match (dev, reference) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            cells[cell].push((*e).clone());
        }
    }
    let [dr, dq, er, eq] = cells;
    let build = |v: Vec<Embedding>, split, role| -> Result<Corpus> {
        let c = if v.is_empty() {
            Corpus::empty(corpus.dim())?
        } else {
            Corpus::new(v)?
        };
        Ok(c.with_labels(Some(split), role))
    };
    let dev_reference = build(dr.clone(), Split::Development, Some(Role::Reference))?;
    let dev_query = build(dq.clone(), Split::Development, Some(Role::Query))?;
    let eval_reference = build(er.clone(), Split::Evaluation, Some(Role::Reference))?;
    let eval_query = build(eq.clone(), Split::Evaluation, Some(Role::Query))?;
    let development = build(dr.into_iter().chain(dq).collect(), Split::Development, None)?;
    let evaluation = build(er.into_iter().chain(eq).collect(), Split::Evaluation, None)?;
    Ok(CorpusPartition {
        dev_reference,
        dev_query,
        eval_reference,
        eval_query,
        development,
        evaluation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            n_subjects: 4,
            samples_per_subject: 3,
            dim: 8,
            between_class_std: 1.0,
            within_class_std: 0.1,
            unit_normalize: false,
            seed: 42,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic_corpus(&small_cfg()).unwrap();
        let b = generate_synthetic_corpus(&small_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_noise_collapses_to_center() {
        let mut cfg = small_cfg();
        cfg.within_class_std = 1e-12;
        let corpus = generate_synthetic_corpus(&cfg).unwrap();
        for group in corpus.by_subject().values() {
            let first = &group[0].values;
            for e in group {
                for (a, b) in first.iter().zip(&e.values) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn unit_normalize_forces_unit_norm() {
        let mut cfg = small_cfg();
        cfg.unit_normalize = true;
        let corpus = generate_synthetic_corpus(&cfg).unwrap();
        for e in corpus.embeddings() {
            let norm = e.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = small_cfg();
        cfg.between_class_std = 0.0;
        assert!(matches!(
            generate_synthetic_corpus(&cfg),
            Err(Error::Config(_))
        ));
        let mut cfg = small_cfg();
        cfg.n_subjects = 0;
        assert!(matches!(
            generate_synthetic_corpus(&cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let corpus = generate_synthetic_corpus(&small_cfg()).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("corpus.csv");
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path, Some(8)).unwrap();
        assert_eq!(corpus.embeddings(), loaded.embeddings());
    }

    #[test]
    fn save_is_canonical_regardless_of_input_order() {
        let corpus = generate_synthetic_corpus(&small_cfg()).unwrap();
        let mut shuffled: Vec<Embedding> = corpus.embeddings().to_vec();
        shuffled.reverse();
        let reordered = Corpus::new(shuffled).unwrap();
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        save_corpus(&corpus, &a).unwrap();
        save_corpus(&reordered, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn empty_corpus_saves_header_only() {
        let corpus = Corpus::empty(3).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        save_corpus(&corpus, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "subject_id,sample_id,v0,v1,v2\n");
        let loaded = load_corpus(&path, None).unwrap();
        assert!(loaded.is_empty());
        assert_eq!(loaded.dim(), 3);
    }

    #[test]
    fn inconsistent_row_dimension_names_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "subject_id,sample_id,v0,v1\na,x,0.5,1.0\nb,y,0.25\n").unwrap();
        match load_corpus(&path, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_value_is_rejected_with_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan.csv");
        std::fs::write(&path, "subject_id,sample_id,v0\na,x,NaN\n").unwrap();
        match load_corpus(&path, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn expected_dim_mismatch_is_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("dim.csv");
        std::fs::write(&path, "subject_id,sample_id,v0,v1\na,x,0.5,1.0\n").unwrap();
        assert!(matches!(
            load_corpus(&path, Some(3)),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let e = Embedding::new("a", "x", vec![1.0]);
        assert!(matches!(
            Corpus::new(vec![e.clone(), e]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn partition_splits_subjects_and_roles() {
        let corpus = generate_synthetic_corpus(&small_cfg()).unwrap();
        let part = partition_corpus(
            &corpus,
            &PartitionConfig {
                dev_fraction: 0.5,
                reference_samples: 1,
            },
        )
        .unwrap();
        assert_eq!(part.dev_reference.subject_ids(), vec!["s0000", "s0001"]);
        assert_eq!(part.eval_reference.subject_ids(), vec!["s0002", "s0003"]);
        assert_eq!(part.dev_reference.len(), 2);
        assert_eq!(part.dev_query.len(), 4);
        assert_eq!(part.development.len(), 6);
        assert_eq!(part.evaluation.len(), 6);
        assert_eq!(part.eval_query.role, Some(Role::Query));
        assert_eq!(part.evaluation.split, Some(Split::Evaluation));
    }

    #[test]
    fn partition_requires_spare_samples() {
        let corpus = generate_synthetic_corpus(&small_cfg()).unwrap();
        let err = partition_corpus(
            &corpus,
            &PartitionConfig {
                dev_fraction: 0.5,
                reference_samples: 3,
            },
        );
        assert!(matches!(err, Err(Error::Protocol(_))));
    }
}
