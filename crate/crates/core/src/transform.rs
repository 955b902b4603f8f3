//! The protection transform and its parameters.
//!
//! An n-dimensional embedding is scanned with windows of width `m` at stride
//! `m - overlap`; window `j` maps to one protected element through a
//! multivariate polynomial with user-specific integer coefficients `C` and
//! exponents `E` (a permutation of `1..=m`):
//!
//! ```text
//! p_{j+1} = c_1 * v_{s+1}^{e_1} + c_2 * v_{s+2}^{e_2} + ... + c_m * v_{s+m}^{e_m},
//! s = j * (m - overlap)
//! ```
//!
//! The input is read as zero beyond its length, which pads a final partial
//! window. Protected templates are compared with a negative cosine distance
//! (`cos - 1`), a similarity score in `[-2, 0]` where `0` means identical
//! direction.
//!
//! Parameter generation comes in two flavors: [`generate_params_naive`]
//! draws uniformly random `C` and `E`, and [`generate_params_strict`]
//! re-draws until the candidate, cross-applied to the same embedding as
//! every previously issued parameter set, scores inside a target range,
//! widening the acceptance window by a tolerance step after every block of
//! failed tries.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Embedding;
use crate::error::{Error, Result};

/// Window width used throughout the experiments.
pub const DEFAULT_M: usize = 5;

/// Default coefficient range.
pub const DEFAULT_COEFF_RANGE: CoeffRange = CoeffRange { lo: -50, hi: 50 };

/// Inclusive integer interval from which coefficients are drawn (zero is
/// always excluded at draw time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoeffRange {
    pub lo: i64,
    pub hi: i64,
}

impl CoeffRange {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::Config(format!(
                "empty coefficient range [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Number of non-zero integers the range can provide.
    pub fn nonzero_count(&self) -> u128 {
        let total = (self.hi as i128 - self.lo as i128 + 1) as u128;
        if self.lo <= 0 && 0 <= self.hi {
            total - 1
        } else {
            total
        }
    }
}

/// User-specific transform parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyParams {
    pub owner_id: String,
    pub m: usize,
    pub overlap: usize,
    #[serde(rename = "C")]
    pub coefficients: Vec<i64>,
    #[serde(rename = "E")]
    pub exponents: Vec<u32>,
}

impl PolyParams {
    pub fn new(
        owner_id: impl Into<String>,
        m: usize,
        overlap: usize,
        coefficients: Vec<i64>,
        exponents: Vec<u32>,
    ) -> Result<Self> {
        let params = Self {
            owner_id: owner_id.into(),
            m,
            overlap,
            coefficients,
            exponents,
        };
        params.validate()?;
        Ok(params)
    }

    /// Structural invariants: `C` has `m` unique non-zero entries, `E` is a
    /// permutation of `1..=m`, and `overlap <= m - 1`.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Domain("m must be >= 1".into()));
        }
        if self.overlap > self.m - 1 {
            return Err(Error::Domain(format!(
                "overlap {} out of range [0, {}]",
                self.overlap,
                self.m - 1
            )));
        }
        if self.coefficients.len() != self.m || self.exponents.len() != self.m {
            return Err(Error::Domain(format!(
                "C and E must each have m={} entries",
                self.m
            )));
        }
        let mut cs = self.coefficients.clone();
        cs.sort_unstable();
        if cs.contains(&0) {
            return Err(Error::Domain("coefficients must be non-zero".into()));
        }
        if cs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("coefficients must be unique".into()));
        }
        let mut es = self.exponents.clone();
        es.sort_unstable();
        if es != (1..=self.m as u32).collect::<Vec<_>>() {
            return Err(Error::Domain(format!(
                "exponents must be a permutation of 1..={}",
                self.m
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.m - self.overlap
    }
}

/// A protected template: the windowed polynomial image of one embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedTemplate {
    pub owner_id: String,
    pub overlap: usize,
    pub source_dim: usize,
    pub values: Vec<f64>,
}

/// A closed score interval within the comparator's `[-2, 0]` output range.
/// Serializes as a two-element array `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRange {
    low: f64,
    high: f64,
}

impl ScoreRange {
    pub const FULL: ScoreRange = ScoreRange {
        low: -2.0,
        high: 0.0,
    };

    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(-2.0 <= low && low <= high && high <= 0.0) {
            return Err(Error::Domain(format!(
                "score range [{low}, {high}] violates -2 <= low <= high <= 0"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    /// Containment check widened by `tol` on both sides.
    pub fn contains_with_tolerance(&self, score: f64, tol: f64) -> bool {
        score >= self.low - tol && score <= self.high + tol
    }
}

impl Serialize for ScoreRange {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        [self.low, self.high].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ScoreRange {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let [low, high] = <[f64; 2]>::deserialize(deserializer)?;
        ScoreRange::new(low, high).map_err(serde::de::Error::custom)
    }
}

/// Number of protected elements produced for an `n`-dimensional input:
/// the count of width-`m` windows at stride `m - overlap` needed to consume
/// all `n` elements, the last window zero-padded if partial.
pub fn output_dimension(n: usize, m: usize, overlap: usize) -> Result<usize> {
    if m == 0 || m > n {
        return Err(Error::Domain(format!("m={m} out of range [1, n={n}]")));
    }
    if overlap > m - 1 {
        return Err(Error::Domain(format!(
            "overlap {overlap} out of range [0, {}]",
            m - 1
        )));
    }
    Ok((n - m).div_ceil(m - overlap) + 1)
}

/// Applies the transform to a raw value slice.
pub fn protect_values(values: &[f64], params: &PolyParams) -> Result<Vec<f64>> {
    params.validate()?;
    let k = output_dimension(values.len(), params.m, params.overlap)?;
    let stride = params.stride();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let start = j * stride;
        let mut acc = 0.0;
        for i in 0..params.m {
            let x = values.get(start + i).copied().unwrap_or(0.0);
            acc += params.coefficients[i] as f64 * x.powi(params.exponents[i] as i32);
        }
        if !acc.is_finite() {
            return Err(Error::NonFiniteWindow { window: j });
        }
        out.push(acc);
    }
    Ok(out)
}

/// Protects an embedding under `params`.
pub fn protect(v: &Embedding, params: &PolyParams) -> Result<ProtectedTemplate> {
    let values = protect_values(&v.values, params)?;
    Ok(ProtectedTemplate {
        owner_id: params.owner_id.clone(),
        overlap: params.overlap,
        source_dim: v.values.len(),
        values,
    })
}

/// Negative cosine distance between raw value vectors: `cos(a, b) - 1`,
/// a similarity in `[-2, 0]`. Errors on zero-norm input (undefined angle).
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "cannot compare vectors of dimension {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    let mut equal = true;
    let mut negated = true;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
        equal &= x == y;
        negated &= x == -y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    // identical and exactly opposite inputs hit the score boundaries exactly,
    // bypassing sqrt rounding
    if equal {
        return Ok(0.0);
    }
    if negated {
        return Ok(-2.0);
    }
    let cos = dot / (na.sqrt() * nb.sqrt());
    Ok((cos - 1.0).clamp(-2.0, 0.0))
}

/// Similarity between two protected templates.
pub fn compare(p: &ProtectedTemplate, q: &ProtectedTemplate) -> Result<f64> {
    cosine_score(&p.values, &q.values)
}

/// Draws `m` unique non-zero coefficients uniformly from `coeff_range` and a
/// uniform random permutation of `1..=m` as exponents.
pub fn generate_params_naive(
    m: usize,
    overlap: usize,
    coeff_range: CoeffRange,
    owner_id: &str,
    rng: &mut impl Rng,
) -> Result<PolyParams> {
    if m == 0 {
        return Err(Error::Config("m must be >= 1".into()));
    }
    if overlap > m - 1 {
        return Err(Error::Config(format!(
            "overlap {overlap} out of range [0, {}]",
            m - 1
        )));
    }
    if coeff_range.nonzero_count() < m as u128 {
        return Err(Error::Config(format!(
            "coefficient range [{}, {}] cannot provide {m} unique non-zero integers",
            coeff_range.lo, coeff_range.hi
        )));
    }
    let mut coefficients: Vec<i64> = Vec::with_capacity(m);
    while coefficients.len() < m {
        let c = rng.random_range(coeff_range.lo..=coeff_range.hi);
        if c != 0 && !coefficients.contains(&c) {
            coefficients.push(c);
        }
    }
    let mut exponents: Vec<u32> = (1..=m as u32).collect();
    exponents.shuffle(rng);
    PolyParams::new(owner_id, m, overlap, coefficients, exponents)
}

/// Shorthand for the generation inputs shared by every experiment: window
/// width, overlap, and coefficient range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub m: usize,
    pub overlap: usize,
    pub coeff_range: CoeffRange,
}

impl ParamSpec {
    pub fn new(m: usize, overlap: usize, coeff_range: CoeffRange) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        if overlap > m - 1 {
            return Err(Error::Config(format!(
                "overlap {overlap} out of range [0, {}]",
                m - 1
            )));
        }
        Ok(Self {
            m,
            overlap,
            coeff_range,
        })
    }

    /// Same spec at a different overlap; used when sweeping overlap grids.
    pub fn with_overlap(mut self, overlap: usize) -> Result<Self> {
        if overlap > self.m - 1 {
            return Err(Error::Config(format!(
                "overlap {overlap} out of range [0, {}]",
                self.m - 1
            )));
        }
        self.overlap = overlap;
        Ok(self)
    }

    pub fn draw(&self, owner_id: &str, rng: &mut impl Rng) -> Result<PolyParams> {
        generate_params_naive(self.m, self.overlap, self.coeff_range, owner_id, rng)
    }
}

/// Tolerance relaxation schedule for strict parameter selection.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RelaxationPolicy {
    /// Candidate draws per tolerance level.
    pub max_tries_per_relaxation: u32,
    /// Widening applied to both range ends after each failed block.
    pub relaxation_step: f64,
}

impl Default for RelaxationPolicy {
    fn default() -> Self {
        Self {
            max_tries_per_relaxation: 100,
            relaxation_step: 0.01,
        }
    }
}

/// Outcome of strict selection: the accepted parameters plus the tolerance
/// in force when they were accepted and the total candidates drawn.
#[derive(Debug, Clone)]
pub struct StrictSelection {
    pub params: PolyParams,
    pub tolerance: f64,
    pub attempts: u64,
}

/// Draws candidate parameters until, for every previously issued set `q`,
/// the score between the candidate's template of `v` and `q`'s template of
/// the same `v` lies within `target_range` (widened by the current
/// tolerance). The deployer is assumed to know previously issued parameter
/// sets but not templates held by other applications, hence the
/// cross-application to the candidate's own embedding.
///
/// Relaxation makes acceptance inevitable for well-formed inputs; a safety
/// cap (tolerance > 2, at which point the widened range spans all scores)
/// turns pathological configurations into an error instead of a hang.
#[allow(clippy::too_many_arguments)]
pub fn generate_params_strict(
    v: &Embedding,
    previous: &[PolyParams],
    target_range: ScoreRange,
    m: usize,
    overlap: usize,
    coeff_range: CoeffRange,
    owner_id: &str,
    relax: RelaxationPolicy,
    rng: &mut impl Rng,
) -> Result<StrictSelection> {
    if relax.max_tries_per_relaxation == 0
        || !relax.relaxation_step.is_finite()
        || relax.relaxation_step <= 0.0
    {
        return Err(Error::Config(
            "relaxation policy must have positive tries and step".into(),
        ));
    }
    let prior_templates: Vec<ProtectedTemplate> = previous
        .iter()
        .map(|q| protect(v, q))
        .collect::<Result<_>>()?;

    let mut tolerance = 0.0;
    let mut attempts: u64 = 0;
    loop {
        for _ in 0..relax.max_tries_per_relaxation {
            attempts += 1;
            let candidate = generate_params_naive(m, overlap, coeff_range, owner_id, rng)?;
            let template = protect(v, &candidate)?;
            let accepted = prior_templates
                .iter()
                .all(|prior| match compare(&template, prior) {
                    Ok(score) => target_range.contains_with_tolerance(score, tolerance),
                    Err(_) => false,
                });
            if accepted {
                return Ok(StrictSelection {
                    params: candidate,
                    tolerance,
                    attempts,
                });
            }
        }
        tolerance += relax.relaxation_step;
        if tolerance > 2.0 {
            return Err(Error::Exhausted(format!(
                "no acceptable parameters after {attempts} attempts (tolerance cap reached)"
            )));
        }
    }
}
