//! Verification-accuracy evaluation.
//!
//! Three scenarios, each producing genuine (same-subject) and impostor
//! (cross-subject) scores over all reference/query pairs:
//!
//! * `baseline`: raw embeddings compared directly;
//! * `normal`: per-subject parameters; references and queries are each
//!   protected with their own subject's parameters;
//! * `sce`: stolen coefficients and exponents, where every query is protected
//!   with the parameters of the reference subject it is compared against,
//!   so impostors present templates built with the target's parameters.
//!
//! A scenario runs for a number of trials with freshly drawn parameters per
//! subject per trial, and the per-trial scores are concatenated. Match
//! thresholds are calibrated on a development split (score >= threshold
//! counts as a match, ties resolve toward matching) and applied to the
//! evaluation split.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Embedding};
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{derive_seed, domains, substream};
use crate::transform::{cosine_score, protect, ParamSpec, PolyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Baseline,
    Normal,
    Sce,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Scenario::Baseline),
            "normal" => Ok(Scenario::Normal),
            "sce" => Ok(Scenario::Sce),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Genuine and impostor score lists, concatenated across trials in trial
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

/// Accuracy summary: TMR at development-calibrated thresholds plus ROC
/// points from the evaluation scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub scenario: Scenario,
    pub overlap: Option<usize>,
    pub n_trials: usize,
    pub tmr_at_fmr: BTreeMap<String, f64>,
    pub roc: Vec<(f64, f64)>,
}

/// Map key for an FMR target, e.g. `0.001`.
pub fn fmr_key(target: f64) -> String {
    format!("{target}")
}

fn check_pair_coverage(reference: &Corpus, query: &Corpus) -> Result<()> {
    if reference.dim() != query.dim() {
        return Err(Error::Protocol(format!(
            "reference dimension {} differs from query dimension {}",
            reference.dim(),
            query.dim()
        )));
    }
    if reference.is_empty() || query.is_empty() {
        return Err(Error::Protocol(
            "reference and query corpora must be non-empty".into(),
        ));
    }
    let ref_subjects: Vec<&str> = reference.subject_ids();
    for q in query.subject_ids() {
        if !ref_subjects.contains(&q) {
            return Err(Error::Protocol(format!(
                "query subject {q} has no reference"
            )));
        }
    }
    Ok(())
}

fn score_pairs(
    reference: &Corpus,
    protected_refs: Option<&[Vec<f64>]>,
    query: &Corpus,
    query_values_for: impl Fn(usize, &str) -> Result<Vec<f64>>,
    genuine: &mut Vec<f64>,
    impostor: &mut Vec<f64>,
) -> Result<()> {
    // iterate references in canonical corpus order, grouped by subject so the
    // query side can be protected once per reference subject
    let mut start = 0;
    let refs = reference.embeddings();
    while start < refs.len() {
        let subject = refs[start].subject_id.as_str();
        let mut end = start;
        while end < refs.len() && refs[end].subject_id == subject {
            end += 1;
        }
        let queries: Vec<Vec<f64>> = query
            .embeddings()
            .iter()
            .enumerate()
            .map(|(qi, _)| query_values_for(qi, subject))
            .collect::<Result<_>>()?;
        for ri in start..end {
            let ref_values: &[f64] = match protected_refs {
                Some(all) => &all[ri],
                None => &refs[ri].values,
            };
            for (qi, q_values) in queries.iter().enumerate() {
                let score = cosine_score(ref_values, q_values)?;
                if query.embeddings()[qi].subject_id == subject {
                    genuine.push(score);
                } else {
                    impostor.push(score);
                }
            }
        }
        start = end;
    }
    Ok(())
}

fn trial_scores(
    reference: &Corpus,
    query: &Corpus,
    spec: ParamSpec,
    scenario: Scenario,
    seed: u64,
    trial: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    match scenario {
        Scenario::Baseline => {
            score_pairs(
                reference,
                None,
                query,
                |qi, _| Ok(query.embeddings()[qi].values.clone()),
                &mut genuine,
                &mut impostor,
            )?;
        }
        Scenario::Normal | Scenario::Sce => {
            let mut rng = substream(seed, domains::SCENARIO_TRIAL, trial as u64);
            // query subjects are a subset of reference subjects (checked up
            // front), so the reference side defines the parameter universe
            let mut params: BTreeMap<&str, PolyParams> = BTreeMap::new();
            for s in reference.subject_ids() {
                params.insert(s, spec.draw(s, &mut rng)?);
            }
            let protect_with = |e: &Embedding, owner: &str| -> Result<Vec<f64>> {
                Ok(protect(e, &params[owner])?.values)
            };
            let protected_refs: Vec<Vec<f64>> = reference
                .embeddings()
                .iter()
                .map(|e| protect_with(e, e.subject_id.as_str()))
                .collect::<Result<_>>()?;
            match scenario {
                Scenario::Normal => {
                    let protected_queries: Vec<Vec<f64>> = query
                        .embeddings()
                        .iter()
                        .map(|e| protect_with(e, e.subject_id.as_str()))
                        .collect::<Result<_>>()?;
                    score_pairs(
                        reference,
                        Some(&protected_refs),
                        query,
                        |qi, _| Ok(protected_queries[qi].clone()),
                        &mut genuine,
                        &mut impostor,
                    )?;
                }
                Scenario::Sce => {
                    score_pairs(
                        reference,
                        Some(&protected_refs),
                        query,
                        |qi, ref_subject| protect_with(&query.embeddings()[qi], ref_subject),
                        &mut genuine,
                        &mut impostor,
                    )?;
                }
                Scenario::Baseline => unreachable!(),
            }
        }
    }
    Ok((genuine, impostor))
}

/// Runs one scenario for `n_trials` trials and concatenates the scores.
/// Trials use independent generator substreams and may execute in parallel;
/// concatenation is in trial order either way.
pub fn run_scenario(
    reference: &Corpus,
    query: &Corpus,
    spec: ParamSpec,
    scenario: Scenario,
    n_trials: usize,
    seed: u64,
) -> Result<ScoreSet> {
    check_pair_coverage(reference, query)?;
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be >= 1".into()));
    }
    let per_trial = exec::map_range(n_trials, |t| {
        trial_scores(reference, query, spec, scenario, seed, t)
    });
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for trial in per_trial {
        let (g, i) = trial?;
        genuine.extend(g);
        impostor.extend(i);
    }
    Ok(ScoreSet { genuine, impostor })
}

/// Smallest observed threshold `t` with `#{impostor >= t} / N <= fmr_target`.
/// A score at the threshold counts as a match. When even the largest score
/// cannot satisfy the target because of ties, the next representable value
/// above it is returned (matching nothing observed).
pub fn threshold_at_fmr(impostor: &[f64], fmr_target: f64) -> Result<f64> {
    if impostor.is_empty() {
        return Err(Error::Calibration(
            "cannot calibrate on an empty impostor set".into(),
        ));
    }
    if !(fmr_target > 0.0 && fmr_target < 1.0) {
        return Err(Error::Config(format!(
            "fmr target {fmr_target} must lie in (0, 1)"
        )));
    }
    let mut sorted = impostor.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        // i is the first occurrence of sorted[i], so n - i scores are >= it
        if (n - i) as f64 / n as f64 <= fmr_target {
            return Ok(sorted[i]);
        }
        let v = sorted[i];
        while i < n && sorted[i] == v {
            i += 1;
        }
    }
    Ok(sorted[n - 1].next_up())
}

/// Fraction of genuine scores at or above `threshold`.
pub fn tmr_at_threshold(genuine: &[f64], threshold: f64) -> Result<f64> {
    if genuine.is_empty() {
        return Err(Error::Calibration(
            "cannot evaluate TMR on an empty genuine set".into(),
        ));
    }
    let matches = genuine.iter().filter(|&&s| s >= threshold).count();
    Ok(matches as f64 / genuine.len() as f64)
}

/// ROC points `(FMR, TMR)` over thresholds drawn from the observed scores
/// (subsampled to at most `n_points`), ordered by increasing FMR.
pub fn roc_points(scores: &ScoreSet, n_points: usize) -> Result<Vec<(f64, f64)>> {
    if scores.genuine.is_empty() || scores.impostor.is_empty() {
        return Err(Error::Calibration(
            "ROC needs non-empty genuine and impostor scores".into(),
        ));
    }
    if n_points < 2 {
        return Err(Error::Config("ROC needs at least 2 points".into()));
    }
    let mut thresholds: Vec<f64> = scores
        .genuine
        .iter()
        .chain(&scores.impostor)
        .copied()
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let picked: Vec<f64> = if thresholds.len() <= n_points {
        thresholds
    } else {
        (0..n_points)
            .map(|i| thresholds[i * (thresholds.len() - 1) / (n_points - 1)])
            .collect()
    };

    let mut genuine = scores.genuine.clone();
    let mut impostor = scores.impostor.clone();
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    let frac_at_or_above = |sorted: &[f64], t: f64| {
        let below = sorted.partition_point(|&s| s < t);
        (sorted.len() - below) as f64 / sorted.len() as f64
    };
    Ok(picked
        .iter()
        .rev()
        .map(|&t| {
            (
                frac_at_or_above(&impostor, t),
                frac_at_or_above(&genuine, t),
            )
        })
        .collect())
}

/// Full accuracy evaluation: thresholds calibrated on the development
/// split's impostor scores, TMR measured on the evaluation split's genuine
/// scores, ROC from the evaluation scores.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_accuracy(
    dev_reference: &Corpus,
    dev_query: &Corpus,
    eval_reference: &Corpus,
    eval_query: &Corpus,
    spec: ParamSpec,
    scenario: Scenario,
    n_trials: usize,
    fmr_targets: &[f64],
    roc_resolution: usize,
    seed: u64,
) -> Result<AccuracyReport> {
    let dev = run_scenario(
        dev_reference,
        dev_query,
        spec,
        scenario,
        n_trials,
        derive_seed(seed, domains::ACCURACY_DEV, 0),
    )?;
    let eval = run_scenario(
        eval_reference,
        eval_query,
        spec,
        scenario,
        n_trials,
        derive_seed(seed, domains::ACCURACY_EVAL, 0),
    )?;
    let mut tmr_at_fmr = BTreeMap::new();
    for &target in fmr_targets {
        let threshold = threshold_at_fmr(&dev.impostor, target)?;
        tmr_at_fmr.insert(fmr_key(target), tmr_at_threshold(&eval.genuine, threshold)?);
    }
    Ok(AccuracyReport {
        scenario,
        overlap: match scenario {
            Scenario::Baseline => None,
            _ => Some(spec.overlap),
        },
        n_trials,
        tmr_at_fmr,
        roc: roc_points(&eval, roc_resolution)?,
    })
}
