use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};

use polyprotect::attack::{prepare_targets, run_campaign, AttackConfig, ThresholdLabel};
use polyprotect::corpus::{
    generate_synthetic_corpus, load_corpus, save_corpus, Corpus, SyntheticConfig,
};
use polyprotect::dist::ElementDistributions;
use polyprotect::linkability::{
    derive_unlink_range, linkability_curve, mated_protocol, mated_protocol_baseline, ParamMode,
};
use polyprotect::rng::{domains, substream};
use polyprotect::solver::SolverConfig;
use polyprotect::transform::{compare, protect, RelaxationPolicy, ScoreRange};
use polyprotect::verify::{evaluate_accuracy, fmr_key, Scenario};

use crate::args::*;
use crate::pipeline::*;

pub fn gen_corpus(seed: u64, args: &GenCorpusArgs) -> CliResult {
    let corpus = generate_synthetic_corpus(&SyntheticConfig {
        n_subjects: args.subjects,
        samples_per_subject: args.samples,
        dim: args.dim,
        between_class_std: args.between_std,
        within_class_std: args.within_std,
        unit_normalize: args.unit_normalize,
        seed,
    })?;
    save_corpus(&corpus, &args.out)?;
    println!(
        "wrote {} embeddings ({} subjects x {} samples, dim {}) to {}",
        corpus.len(),
        args.subjects,
        args.samples,
        args.dim,
        args.out.display()
    );
    Ok(())
}

pub fn protect_corpus(seed: u64, args: &ProtectArgs) -> CliResult {
    let corpus = load_corpus(&args.input, args.dim)?;
    let by_subject = corpus.by_subject();

    let params_by_owner: BTreeMap<String, polyprotect::transform::PolyParams> =
        if let Some(path) = &args.params {
            read_params_file(path)?
                .into_iter()
                .map(|p| (p.owner_id.clone(), p))
                .collect()
        } else {
            let overlap = args.overlap.ok_or_else(|| {
                CliError::Config("--overlap is required with --gen-params".into())
            })?;
            let spec = param_spec(args.m, overlap, args.coeff_lo, args.coeff_hi)?;
            let mut map = BTreeMap::new();
            for (i, subject) in by_subject.keys().enumerate() {
                let mut rng = substream(seed, domains::PARAM_FILE, i as u64);
                map.insert(subject.to_string(), spec.draw(subject, &mut rng)?);
            }
            map
        };

    for subject in by_subject.keys() {
        if !params_by_owner.contains_key(*subject) {
            return Err(CliError::Config(format!(
                "parameter file has no entry for subject {subject}"
            )));
        }
    }

    let mut writer = BufWriter::new(File::create(&args.out)?);
    let mut count = 0usize;
    for embedding in corpus.embeddings() {
        let template = protect(embedding, &params_by_owner[&embedding.subject_id])?;
        serde_json::to_writer(&mut writer, &template)?;
        writer.write_all(b"\n")?;
        count += 1;
    }
    writer.flush()?;
    println!("wrote {count} templates to {}", args.out.display());

    if args.gen_params {
        let path = args.params_out.as_ref().expect("enforced by clap");
        let all: Vec<_> = params_by_owner.values().cloned().collect();
        write_json(path, &all)?;
        println!("wrote {} parameter sets to {}", all.len(), path.display());
    }
    Ok(())
}

pub fn compare_templates(args: &CompareArgs) -> CliResult {
    let a = read_templates_file(&args.a)?;
    let b = read_templates_file(&args.b)?;
    if a.len() != b.len() {
        return Err(CliError::Config(format!(
            "template files differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let scores: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| compare(x, y))
        .collect::<Result<_, _>>()?;
    match &args.out {
        Some(path) => {
            let mut writer = BufWriter::new(File::create(path)?);
            writer.write_all(b"index,score\n")?;
            for (i, s) in scores.iter().enumerate() {
                writeln!(writer, "{i},{s}")?;
            }
            writer.flush()?;
            println!("wrote {} scores to {}", scores.len(), path.display());
        }
        None => {
            for (i, s) in scores.iter().enumerate() {
                println!("{i}\t{s}");
            }
        }
    }
    Ok(())
}

pub fn gen_params(seed: u64, args: &GenParamsArgs) -> CliResult {
    let owners: Vec<String> = match (&args.owners, args.count) {
        (Some(list), _) => list.clone(),
        (None, Some(n)) => (0..n).map(|i| format!("s{i:04}")).collect(),
        (None, None) => {
            return Err(CliError::Config(
                "provide either --owners or --count".into(),
            ))
        }
    };
    let spec = param_spec(args.m, args.overlap, args.coeff_lo, args.coeff_hi)?;
    let mut all = Vec::with_capacity(owners.len());
    for (i, owner) in owners.iter().enumerate() {
        let mut rng = substream(seed, domains::PARAM_FILE, i as u64);
        all.push(spec.draw(owner, &mut rng)?);
    }
    write_json(&args.out, &all)?;
    println!(
        "wrote {} parameter sets to {}",
        all.len(),
        args.out.display()
    );
    Ok(())
}

pub fn eval_accuracy(seed: u64, args: &EvalAccuracyArgs) -> CliResult {
    let (_, part) = load_and_partition(&args.corpus)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let (scenario, overlaps): (Scenario, Vec<Option<usize>>) = match args.scenario {
        ScenarioArg::Baseline => (Scenario::Baseline, vec![None]),
        ScenarioArg::Normal => (
            Scenario::Normal,
            args.overlaps.iter().map(|&o| Some(o)).collect(),
        ),
        ScenarioArg::Sce => (
            Scenario::Sce,
            args.overlaps.iter().map(|&o| Some(o)).collect(),
        ),
    };

    let header: Vec<String> = args
        .fmr_targets
        .iter()
        .map(|t| format!("TMR@{t}"))
        .collect();
    println!("{:<10} {:<8} {}", "scenario", "overlap", header.join("  "));
    for overlap in overlaps {
        let spec = param_spec(args.m, overlap.unwrap_or(0), args.coeff_lo, args.coeff_hi)?;
        let report = evaluate_accuracy(
            &part.dev_reference,
            &part.dev_query,
            &part.eval_reference,
            &part.eval_query,
            spec,
            scenario,
            args.trials,
            &args.fmr_targets,
            args.roc_points,
            seed,
        )?;
        let name = match overlap {
            Some(o) => format!("accuracy_{}_overlap_{o}.json", scenario_name(scenario)),
            None => "accuracy_baseline.json".to_string(),
        };
        write_json(&args.out_dir.join(&name), &report)?;
        let cells: Vec<String> = args
            .fmr_targets
            .iter()
            .map(|t| format!("{:>9.4}", report.tmr_at_fmr[&fmr_key(*t)]))
            .collect();
        println!(
            "{:<10} {:<8} {}",
            scenario_name(scenario),
            overlap.map_or("-".to_string(), |o| o.to_string()),
            cells.join("  ")
        );
    }
    Ok(())
}

fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::Baseline => "baseline",
        Scenario::Normal => "normal",
        Scenario::Sce => "sce",
    }
}

fn dist_corpus(part: &polyprotect::corpus::CorpusPartition, source: DistSource) -> &Corpus {
    match source {
        DistSource::DevRef => &part.dev_reference,
        DistSource::DevQuery => &part.dev_query,
        DistSource::DevAll => &part.development,
    }
}

fn run_attack_cells(seed: u64, args: &AttackArgs, p_values: &[usize]) -> CliResult {
    let (_, part) = load_and_partition(&args.corpus)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let thresholds = baseline_thresholds(&part, args.m, seed)?;
    let guess_source =
        ElementDistributions::estimate(dist_corpus(&part, args.dist_source), args.bins)?;
    let p_max = *p_values.iter().max().expect("non-empty p grid");
    let cfg = AttackConfig {
        n_guesses: args.guesses,
        guess_source,
        thresholds,
        solver: SolverConfig::default(),
        p_range: p_values.to_vec(),
        seed,
    };
    cfg.validate()?;

    println!(
        "thresholds: strict={:.6} common={:.6} lenient={:.6}",
        cfg.thresholds[&ThresholdLabel::Strict],
        cfg.thresholds[&ThresholdLabel::Common],
        cfg.thresholds[&ThresholdLabel::Lenient],
    );
    println!(
        "{:<8} {:<4} {:<10} {:>8} {:>8} {:>8} {:>8}",
        "overlap", "p", "solution", "strict", "common", "lenient", "nocmp"
    );
    for &overlap in &args.overlaps {
        let spec = param_spec(args.m, overlap, args.coeff_lo, args.coeff_hi)?;
        let targets = prepare_targets(&part.eval_reference, args.targets, p_max, spec, seed)?;
        for &p in p_values {
            let report = run_campaign(&targets, p, &cfg)?;
            // flush each finished cell before starting the next
            write_json(
                &args
                    .out_dir
                    .join(format!("attack_overlap_{overlap}_p_{p}.json")),
                &report,
            )?;
            println!(
                "{:<8} {:<4} {:<10.4} {:>8.4} {:>8.4} {:>8.4} {:>8}",
                overlap,
                p,
                report.solution_rate,
                report.inversion_success_rate[&ThresholdLabel::Strict],
                report.inversion_success_rate[&ThresholdLabel::Common],
                report.inversion_success_rate[&ThresholdLabel::Lenient],
                report.non_comparable,
            );
        }
    }
    Ok(())
}

pub fn attack_invert(seed: u64, args: &AttackArgs) -> CliResult {
    run_attack_cells(seed, args, &[1])
}

pub fn attack_arm(seed: u64, args: &AttackArmArgs) -> CliResult {
    if args.p_values.is_empty() || args.p_values.contains(&0) {
        return Err(CliError::Config("--p-values entries must be >= 1".into()));
    }
    run_attack_cells(seed, &args.attack, &args.p_values)
}

pub fn derive_range(seed: u64, args: &DeriveRangeArgs) -> CliResult {
    let (_, part) = load_and_partition(&args.corpus)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut ranges = RangeMap::new();
    println!("{:<8} {:>10} {:>10}", "overlap", "low", "high");
    for &overlap in &args.overlaps {
        let spec = param_spec(args.m, overlap, args.coeff_lo, args.coeff_hi)?;
        let range = derive_unlink_range(
            &part.development,
            spec,
            args.templates_per_subject,
            args.trials,
            args.bins,
            args.omega,
            seed,
        )?;
        println!(
            "{:<8} {:>10.4} {:>10.4}",
            overlap,
            range.low(),
            range.high()
        );
        ranges.insert(overlap.to_string(), range);
    }
    let path = args.out_dir.join("ranges.json");
    write_ranges(&path, &ranges)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn eval_unlink(seed: u64, args: &EvalUnlinkArgs) -> CliResult {
    let (_, part) = load_and_partition(&args.corpus)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let corpus = match args.split {
        SplitArg::Dev => &part.development,
        SplitArg::Eval => &part.evaluation,
    };

    let ranges: Option<RangeMap> = match args.mode {
        UnlinkMode::Strict => {
            let path = args.range_file.as_ref().ok_or_else(|| {
                CliError::Config("strict mode needs --range-file; run derive-range first".into())
            })?;
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "range file {} not found; run derive-range first",
                    path.display()
                )));
            }
            Some(read_ranges(path)?)
        }
        _ => None,
    };

    println!(
        "{:<9} {:<8} {:>8} {:>22}",
        "mode", "overlap", "d_sys", "unlink_range"
    );
    if matches!(args.mode, UnlinkMode::Baseline) {
        let scores =
            mated_protocol_baseline(corpus, args.templates_per_subject, args.trials, seed)?;
        let report = linkability_curve(&scores, args.bins, args.omega)?;
        write_json(&args.out_dir.join("unlink_baseline.json"), &report)?;
        print_unlink_row("baseline", None, report.d_sys, report.unlink_range);
        return Ok(());
    }

    for &overlap in &args.overlaps {
        let spec = param_spec(args.m, overlap, args.coeff_lo, args.coeff_hi)?;
        let (mode, mode_name, range) = match args.mode {
            UnlinkMode::Naive => (ParamMode::Naive, "naive", None),
            UnlinkMode::Strict => {
                let map = ranges.as_ref().expect("checked above");
                let range = map.get(&overlap.to_string()).copied().ok_or_else(|| {
                    CliError::Config(format!(
                        "range file has no entry for overlap {overlap}; run derive-range with --overlaps {overlap}"
                    ))
                })?;
                (ParamMode::Strict, "strict", Some(range))
            }
            UnlinkMode::Baseline => unreachable!(),
        };
        let scores = mated_protocol(
            corpus,
            spec,
            args.templates_per_subject,
            args.trials,
            mode,
            range,
            RelaxationPolicy::default(),
            seed,
        )?;
        let report = linkability_curve(&scores, args.bins, args.omega)?.with_overlap(overlap);
        write_json(
            &args
                .out_dir
                .join(format!("unlink_{mode_name}_overlap_{overlap}.json")),
            &report,
        )?;
        print_unlink_row(mode_name, Some(overlap), report.d_sys, report.unlink_range);
    }
    Ok(())
}

fn print_unlink_row(mode: &str, overlap: Option<usize>, d_sys: f64, range: ScoreRange) {
    println!(
        "{:<9} {:<8} {:>8.4} {:>22}",
        mode,
        overlap.map_or("-".to_string(), |o| o.to_string()),
        d_sys,
        format!("[{:.4}, {:.4}]", range.low(), range.high()),
    );
}
