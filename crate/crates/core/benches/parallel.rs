//! Sequential versus rayon-parallel throughput on the two hot loops:
//! batch protection of a corpus and a small inversion campaign.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use polyprotect::attack::{invert_arm, AttackConfig, AttackTarget, ThresholdLabel};
use polyprotect::corpus::{generate_synthetic_corpus, Corpus, SyntheticConfig};
use polyprotect::dist::ElementDistributions;
use polyprotect::exec::{map_range_par, map_range_seq};
use polyprotect::rng::{domains, substream};
use polyprotect::solver::SolverConfig;
use polyprotect::transform::{protect, ParamSpec, DEFAULT_COEFF_RANGE};

fn corpus(dim: usize, seed: u64) -> Corpus {
    generate_synthetic_corpus(&SyntheticConfig {
        n_subjects: 25,
        samples_per_subject: 8,
        dim,
        between_class_std: 1.0,
        within_class_std: 0.1,
        unit_normalize: true,
        seed,
    })
    .unwrap()
}

fn protect_batch(c: &mut Criterion) {
    let corpus = corpus(128, 11);
    let spec = ParamSpec::new(5, 2, DEFAULT_COEFF_RANGE).unwrap();
    let params: Vec<_> = corpus
        .embeddings()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut rng = substream(3, domains::ATTACK_PARAMS, i as u64);
            spec.draw(&e.subject_id, &mut rng).unwrap()
        })
        .collect();

    let mut group = c.benchmark_group("protect_batch");
    let run_seq = || {
        map_range_seq(corpus.len(), |i| {
            protect(&corpus.embeddings()[i], &params[i]).unwrap().values
        })
    };
    let run_par = || {
        map_range_par(corpus.len(), |i| {
            protect(&corpus.embeddings()[i], &params[i]).unwrap().values
        })
    };
    assert_eq!(run_seq(), run_par());
    group.bench_function(BenchmarkId::new("sequential", corpus.len()), |b| {
        b.iter(run_seq)
    });
    group.bench_function(BenchmarkId::new("parallel", corpus.len()), |b| {
        b.iter(run_par)
    });
    group.finish();
}

fn inversion_batch(c: &mut Criterion) {
    let corpus = corpus(64, 13);
    let spec = ParamSpec::new(5, 4, DEFAULT_COEFF_RANGE).unwrap();
    let cfg = AttackConfig {
        n_guesses: 10,
        guess_source: ElementDistributions::estimate(&corpus, 50).unwrap(),
        thresholds: BTreeMap::from([(ThresholdLabel::Common, -0.005)]),
        solver: SolverConfig::default(),
        p_range: vec![1],
        seed: 17,
    };
    let targets: Vec<AttackTarget> =
        polyprotect::attack::prepare_targets(&corpus, 8, 1, spec, 17).unwrap();

    let solve = |i: usize| {
        let t = &targets[i];
        let mut rng = substream(cfg.seed, domains::ATTACK_GUESSES, i as u64);
        invert_arm(&t.templates[..1], &t.params[..1], &cfg, &mut rng)
            .unwrap()
            .success
    };
    let run_seq = || map_range_seq(targets.len(), solve);
    let run_par = || map_range_par(targets.len(), solve);
    assert_eq!(run_seq(), run_par());

    let mut group = c.benchmark_group("inversion_batch");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", targets.len()), |b| {
        b.iter(run_seq)
    });
    group.bench_function(BenchmarkId::new("parallel", targets.len()), |b| {
        b.iter(run_par)
    });
    group.finish();
}

criterion_group!(benches, protect_batch, inversion_batch);
criterion_main!(benches);
