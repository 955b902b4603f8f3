//! Full-disclosure inversion campaigns.
//!
//! The attacker knows the transform, the overlap, the user-specific
//! parameters, one or more protected templates of a target embedding, and a
//! representative per-element distribution of embeddings. Recovery is
//! attempted by solving the windowed-polynomial residual system with
//! Levenberg-Marquardt from initial guesses drawn element-wise from those
//! distributions, stacking `k x p` equations when `p` templates of the same
//! embedding are available (a record-multiplicity attack).
//!
//! The true embedding never reaches the solver: [`invert_single`] and
//! [`invert_arm`] see only templates and parameters, while [`run_campaign`]
//! holds the truth solely to score returned solutions against the match
//! thresholds of the unprotected baseline system. A campaign reports
//!
//! * solution rate: fraction of targets where the solver succeeded,
//! * match rate: fraction of solved targets whose recovered embedding
//!   scores at or above a threshold against the truth,
//! * inversion success rate: their product, per threshold.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Embedding};
use crate::dist::ElementDistributions;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{domains, substream};
use crate::solver::{build_inversion_system, solve_lm, SolverConfig, SolverResult};
use crate::transform::{cosine_score, protect, ParamSpec, PolyParams, ProtectedTemplate};

/// Operating points at which recovered embeddings are judged, ordered from
/// the tightest to the loosest threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdLabel {
    Strict,
    Common,
    Lenient,
}

impl ThresholdLabel {
    pub const ALL: [ThresholdLabel; 3] = [
        ThresholdLabel::Strict,
        ThresholdLabel::Common,
        ThresholdLabel::Lenient,
    ];
}

/// Campaign configuration.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Complete guess vectors per target, one independent draw per element.
    pub n_guesses: usize,
    /// Element distributions the guesses are drawn from.
    pub guess_source: ElementDistributions,
    /// Baseline match thresholds, e.g. calibrated at FMR 0.01% / 0.1% / 1%.
    pub thresholds: BTreeMap<ThresholdLabel, f64>,
    pub solver: SolverConfig,
    /// Template counts to stack in record-multiplicity sweeps.
    pub p_range: Vec<usize>,
    pub seed: u64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_guesses == 0 {
            return Err(Error::Config("n_guesses must be >= 1".into()));
        }
        if self.thresholds.is_empty() {
            return Err(Error::Config(
                "at least one match threshold is required".into(),
            ));
        }
        for (&label, &t) in &self.thresholds {
            if !(-2.0..=0.0).contains(&t) {
                return Err(Error::Config(format!(
                    "threshold {label:?} = {t} outside the score range [-2, 0]"
                )));
            }
        }
        if self.p_range.is_empty() || self.p_range.contains(&0) {
            return Err(Error::Config("p_range entries must be >= 1".into()));
        }
        self.solver.validate()
    }
}

/// One attack target: the truth plus the templates and parameters disclosed
/// to the attacker. Templates beyond the stacked count are ignored by lower
/// `p` runs, so the same targets serve a whole record-multiplicity sweep.
#[derive(Debug, Clone)]
pub struct AttackTarget {
    pub embedding: Embedding,
    pub templates: Vec<ProtectedTemplate>,
    pub params: Vec<PolyParams>,
}

/// Builds `n_targets` attack targets from a corpus, each with `p_max`
/// independently drawn parameter sets and templates. Targets cycle over the
/// corpus embeddings when `n_targets` exceeds the corpus size (fresh
/// parameters per target either way).
pub fn prepare_targets(
    corpus: &Corpus,
    n_targets: usize,
    p_max: usize,
    spec: ParamSpec,
    seed: u64,
) -> Result<Vec<AttackTarget>> {
    if corpus.is_empty() {
        return Err(Error::Protocol(
            "cannot draw attack targets from an empty corpus".into(),
        ));
    }
    if n_targets == 0 || p_max == 0 {
        return Err(Error::Config("n_targets and p_max must be >= 1".into()));
    }
    (0..n_targets)
        .map(|i| {
            let embedding = corpus.embeddings()[i % corpus.len()].clone();
            let mut rng = substream(seed, domains::ATTACK_PARAMS, i as u64);
            let mut templates = Vec::with_capacity(p_max);
            let mut params = Vec::with_capacity(p_max);
            for _ in 0..p_max {
                let p = spec.draw(&embedding.subject_id, &mut rng)?;
                templates.push(protect(&embedding, &p)?);
                params.push(p);
            }
            Ok(AttackTarget {
                embedding,
                templates,
                params,
            })
        })
        .collect()
}

/// Draws `n_guesses` complete candidate vectors from the element
/// distributions.
pub fn draw_guesses(
    source: &ElementDistributions,
    n_guesses: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    (0..n_guesses).map(|_| source.sample_vector(rng)).collect()
}

/// Inverts one template. The solver sees the `k`-equation system and the
/// distribution-drawn guesses, nothing else.
pub fn invert_single(
    template: &ProtectedTemplate,
    params: &PolyParams,
    cfg: &AttackConfig,
    rng: &mut impl Rng,
) -> Result<SolverResult> {
    invert_arm(
        std::slice::from_ref(template),
        std::slice::from_ref(params),
        cfg,
        rng,
    )
}

/// Record-multiplicity inversion: stacks the equations of several templates
/// of the same embedding into one system. With one template this is exactly
/// [`invert_single`].
pub fn invert_arm(
    templates: &[ProtectedTemplate],
    params: &[PolyParams],
    cfg: &AttackConfig,
    rng: &mut impl Rng,
) -> Result<SolverResult> {
    cfg.validate()?;
    let first = templates
        .first()
        .ok_or_else(|| Error::Domain("at least one template is required".into()))?;
    if templates.iter().any(|t| t.source_dim != first.source_dim) {
        return Err(Error::Domain(
            "stacked templates must share a source dimension".into(),
        ));
    }
    if templates.iter().any(|t| t.overlap != first.overlap) {
        return Err(Error::Domain(
            "stacked templates must share an overlap".into(),
        ));
    }
    if cfg.guess_source.dim() != first.source_dim {
        return Err(Error::Domain(format!(
            "guess distributions cover {} elements, templates derive from {}",
            cfg.guess_source.dim(),
            first.source_dim
        )));
    }
    let system = build_inversion_system(templates, params, first.source_dim)?;
    let guesses = draw_guesses(&cfg.guess_source, cfg.n_guesses, rng);
    solve_lm(&system, &guesses, &cfg.solver)
}

/// Campaign outcome for one `(overlap, p)` cell. `non_comparable` counts
/// solver successes whose recovered or true vector had zero norm (score
/// undefined, counted as a non-match); it is diagnostic only and stays out
/// of the serialized report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub overlap: usize,
    pub p: usize,
    pub n_targets: usize,
    pub solution_rate: f64,
    pub match_rate: BTreeMap<ThresholdLabel, f64>,
    pub inversion_success_rate: BTreeMap<ThresholdLabel, f64>,
    #[serde(skip)]
    pub non_comparable: usize,
}

enum TargetOutcome {
    Unsolved,
    /// Solved; `None` when the recovery score is undefined (zero norm).
    Solved(Option<f64>),
}

/// Attacks every target with `p` stacked templates and aggregates the rates.
/// Targets run on independent guess substreams (derived from the target
/// index, not from `p`, so sweeps over `p` are paired) and may execute in
/// parallel; aggregation is in target order.
pub fn run_campaign(
    targets: &[AttackTarget],
    p: usize,
    cfg: &AttackConfig,
) -> Result<AttackReport> {
    cfg.validate()?;
    if targets.is_empty() {
        return Err(Error::Protocol(
            "attack campaign needs at least one target".into(),
        ));
    }
    let overlap = targets[0].templates.first().map(|t| t.overlap).unwrap_or(0);
    for t in targets {
        if t.templates.len() < p || t.params.len() < p {
            return Err(Error::Protocol(format!(
                "target {} exposes {} templates, campaign needs p={p}",
                t.embedding.subject_id,
                t.templates.len()
            )));
        }
        if t.templates.iter().any(|tpl| tpl.overlap != overlap) {
            return Err(Error::Protocol("targets mix overlap values".into()));
        }
    }

    let outcomes = exec::map_range(targets.len(), |i| -> Result<TargetOutcome> {
        let target = &targets[i];
        let mut rng = substream(cfg.seed, domains::ATTACK_GUESSES, i as u64);
        let result = invert_arm(&target.templates[..p], &target.params[..p], cfg, &mut rng)?;
        if !result.success {
            return Ok(TargetOutcome::Unsolved);
        }
        // scoring oracle: the only place the true embedding is consulted
        let score = cosine_score(&result.solution, &target.embedding.values).ok();
        Ok(TargetOutcome::Solved(score))
    });

    let mut n_solved = 0usize;
    let mut non_comparable = 0usize;
    let mut matched: BTreeMap<ThresholdLabel, usize> =
        cfg.thresholds.keys().map(|&l| (l, 0)).collect();
    for outcome in outcomes {
        match outcome? {
            TargetOutcome::Unsolved => {}
            TargetOutcome::Solved(score) => {
                n_solved += 1;
                match score {
                    None => non_comparable += 1,
                    Some(s) => {
                        for (&label, &threshold) in &cfg.thresholds {
                            if s >= threshold {
                                *matched.get_mut(&label).unwrap() += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    let solution_rate = n_solved as f64 / targets.len() as f64;
    let mut match_rate = BTreeMap::new();
    let mut inversion_success_rate = BTreeMap::new();
    for (&label, &hits) in &matched {
        let rate = if n_solved == 0 {
            0.0
        } else {
            hits as f64 / n_solved as f64
        };
        match_rate.insert(label, rate);
        inversion_success_rate.insert(label, solution_rate * rate);
    }
    Ok(AttackReport {
        overlap,
        p,
        n_targets: targets.len(),
        solution_rate,
        match_rate,
        inversion_success_rate,
        non_comparable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticConfig};
    use crate::transform::{CoeffRange, DEFAULT_COEFF_RANGE};

    fn synthetic(n_subjects: usize, samples: usize, dim: usize, seed: u64) -> Corpus {
        generate_synthetic_corpus(&SyntheticConfig {
            n_subjects,
            samples_per_subject: samples,
            dim,
            between_class_std: 1.0,
            within_class_std: 0.1,
            unit_normalize: true,
            seed,
        })
        .unwrap()
    }

    fn config(corpus: &Corpus, n_guesses: usize, seed: u64) -> AttackConfig {
        AttackConfig {
            n_guesses,
            guess_source: ElementDistributions::estimate(corpus, 50).unwrap(),
            thresholds: BTreeMap::from([
                (ThresholdLabel::Strict, -0.0005),
                (ThresholdLabel::Common, -0.005),
                (ThresholdLabel::Lenient, -0.05),
            ]),
            solver: SolverConfig::default(),
            p_range: (1..=10).collect(),
            seed,
        }
    }

    fn spec(overlap: usize) -> ParamSpec {
        ParamSpec::new(5, overlap, DEFAULT_COEFF_RANGE).unwrap()
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let corpus = synthetic(3, 2, 16, 1);
        let mut cfg = config(&corpus, 10, 1);
        cfg.n_guesses = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = config(&corpus, 10, 1);
        cfg.thresholds.insert(ThresholdLabel::Common, 0.5);
        assert!(cfg.validate().is_err());
        let mut cfg = config(&corpus, 10, 1);
        cfg.p_range = vec![0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_target_solves_but_never_matches() {
        // all-zero embeddings: templates are zero, guesses are zero, the
        // initial guess is already an exact solution, and the recovery score
        // is undefined and counted as a non-match, tracked distinctly
        let embeddings = (0..3)
            .map(|i| Embedding::new(format!("s{i}"), "e0", vec![0.0; 10]))
            .collect();
        let corpus = Corpus::new(embeddings).unwrap();
        let cfg = config(&corpus, 5, 3);
        let targets = prepare_targets(&corpus, 3, 1, spec(1), 3).unwrap();
        let report = run_campaign(&targets, 1, &cfg).unwrap();
        assert_eq!(report.solution_rate, 1.0);
        assert_eq!(report.non_comparable, 3);
        for label in ThresholdLabel::ALL {
            assert_eq!(report.match_rate[&label], 0.0);
            assert_eq!(report.inversion_success_rate[&label], 0.0);
        }
    }

    #[test]
    fn no_solver_success_gives_all_zero_rates() {
        let corpus = synthetic(3, 2, 16, 31);
        let mut cfg = config(&corpus, 3, 31);
        // unreachable tolerance: every guess stalls, no target solves
        cfg.solver.residual_tolerance = 1e-300;
        cfg.solver.max_iterations = 5;
        let targets = prepare_targets(&corpus, 4, 1, spec(1), 31).unwrap();
        let report = run_campaign(&targets, 1, &cfg).unwrap();
        assert_eq!(report.solution_rate, 0.0);
        for label in ThresholdLabel::ALL {
            assert_eq!(report.match_rate[&label], 0.0);
            assert_eq!(report.inversion_success_rate[&label], 0.0);
        }
    }

    #[test]
    fn perfect_recovery_gives_all_one_rates() {
        // every embedding identical and non-zero: the guess distributions
        // collapse onto the truth, so the first guess solves exactly and the
        // recovery score is 0, above every threshold
        let embeddings = (0..3)
            .map(|i| Embedding::new(format!("s{i}"), "e0", vec![0.25; 12]))
            .collect();
        let corpus = Corpus::new(embeddings).unwrap();
        let cfg = config(&corpus, 2, 37);
        let targets = prepare_targets(&corpus, 3, 1, spec(2), 37).unwrap();
        let report = run_campaign(&targets, 1, &cfg).unwrap();
        assert_eq!(report.solution_rate, 1.0);
        assert_eq!(report.non_comparable, 0);
        for label in ThresholdLabel::ALL {
            assert_eq!(report.match_rate[&label], 1.0);
            assert_eq!(report.inversion_success_rate[&label], 1.0);
        }
    }

    #[test]
    fn arm_with_one_template_is_structurally_single_inversion() {
        let corpus = synthetic(2, 2, 20, 5);
        let targets = prepare_targets(&corpus, 2, 3, spec(2), 5).unwrap();
        let t = &targets[0];
        let single = build_inversion_system(&t.templates[..1], &t.params[..1], 20).unwrap();
        let stacked = build_inversion_system(&t.templates[..1], &t.params[..1], 20).unwrap();
        assert_eq!(single, stacked);

        let cfg = config(&corpus, 4, 5);
        let mut rng_a = substream(5, domains::ATTACK_GUESSES, 0);
        let mut rng_b = substream(5, domains::ATTACK_GUESSES, 0);
        let a = invert_single(&t.templates[0], &t.params[0], &cfg, &mut rng_a).unwrap();
        let b = invert_arm(&t.templates[..1], &t.params[..1], &cfg, &mut rng_b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inconsistent_stack_fails_to_solve() {
        // templates drawn from two different embeddings cannot share a
        // preimage once enough equations are stacked
        let corpus = synthetic(2, 2, 16, 7);
        let a = prepare_targets(&corpus, 1, 10, spec(4), 7)
            .unwrap()
            .remove(0);
        let b_corpus = synthetic(2, 2, 16, 8);
        let b = prepare_targets(&b_corpus, 1, 10, spec(4), 8)
            .unwrap()
            .remove(0);
        let mut templates = a.templates[..5].to_vec();
        templates.extend_from_slice(&b.templates[..5]);
        let mut params = a.params[..5].to_vec();
        params.extend_from_slice(&b.params[..5]);
        let cfg = config(&corpus, 3, 9);
        let mut rng = substream(9, domains::ATTACK_GUESSES, 0);
        let result = invert_arm(&templates, &params, &cfg, &mut rng).unwrap();
        assert!(!result.success);
        assert!(result.residual_norm > cfg.solver.residual_tolerance);
    }

    #[test]
    fn mixed_source_dims_are_rejected() {
        let corpus = synthetic(2, 2, 16, 11);
        let other = synthetic(2, 2, 24, 11);
        let a = prepare_targets(&corpus, 1, 1, spec(1), 1)
            .unwrap()
            .remove(0);
        let b = prepare_targets(&other, 1, 1, spec(1), 1).unwrap().remove(0);
        let cfg = config(&corpus, 2, 1);
        let mut rng = substream(1, domains::ATTACK_GUESSES, 0);
        let err = invert_arm(
            &[a.templates[0].clone(), b.templates[0].clone()],
            &[a.params[0].clone(), b.params[0].clone()],
            &cfg,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn campaign_rates_obey_threshold_nesting_and_product_identity() {
        let corpus = synthetic(6, 3, 24, 13);
        let cfg = config(&corpus, 8, 13);
        let targets = prepare_targets(&corpus, 12, 1, spec(4), 13).unwrap();
        let report = run_campaign(&targets, 1, &cfg).unwrap();
        assert!(report.solution_rate > 0.0, "expected some solver successes");
        let strict = report.match_rate[&ThresholdLabel::Strict];
        let common = report.match_rate[&ThresholdLabel::Common];
        let lenient = report.match_rate[&ThresholdLabel::Lenient];
        assert!(lenient >= common && common >= strict);
        for label in ThresholdLabel::ALL {
            let product = report.solution_rate * report.match_rate[&label];
            assert_eq!(report.inversion_success_rate[&label], product);
        }
    }

    #[test]
    fn campaigns_are_deterministic() {
        let corpus = synthetic(4, 2, 20, 17);
        let cfg = config(&corpus, 5, 17);
        let targets = prepare_targets(&corpus, 6, 2, spec(3), 17).unwrap();
        let a = run_campaign(&targets, 2, &cfg).unwrap();
        let b = run_campaign(&targets, 2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn targets_cycle_when_corpus_is_small() {
        let corpus = synthetic(2, 1, 16, 19);
        let targets = prepare_targets(&corpus, 5, 1, spec(0), 19).unwrap();
        assert_eq!(targets.len(), 5);
        assert_eq!(targets[0].embedding, targets[2].embedding);
        // same embedding, independent parameter draws
        assert_ne!(targets[0].params[0], targets[2].params[0]);
    }

    #[test]
    fn report_json_omits_diagnostics() {
        let corpus = synthetic(3, 2, 16, 23);
        let cfg = config(&corpus, 3, 23);
        let targets = prepare_targets(&corpus, 3, 1, spec(2), 23).unwrap();
        let report = run_campaign(&targets, 1, &cfg).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let field_positions: Vec<usize> = [
            "\"overlap\"",
            "\"p\"",
            "\"n_targets\"",
            "\"solution_rate\"",
            "\"match_rate\"",
            "\"inversion_success_rate\"",
        ]
        .iter()
        .map(|f| json.find(f).unwrap_or_else(|| panic!("missing field {f}")))
        .collect();
        assert!(
            field_positions.windows(2).all(|w| w[0] < w[1]),
            "field order: {json}"
        );
        assert!(!json.contains("non_comparable"));
    }

    #[test]
    fn tiny_coeff_ranges_work_end_to_end() {
        let corpus = synthetic(2, 2, 12, 29);
        let tight = ParamSpec::new(3, 1, CoeffRange::new(-2, 2).unwrap()).unwrap();
        let targets = prepare_targets(&corpus, 2, 2, tight, 29).unwrap();
        let cfg = config(&corpus, 3, 29);
        let report = run_campaign(&targets, 2, &cfg).unwrap();
        assert_eq!(report.n_targets, 2);
        assert_eq!(report.p, 2);
    }
}
