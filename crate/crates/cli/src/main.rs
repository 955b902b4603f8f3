mod args;
mod commands;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use pipeline::CliResult;

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(cli.seed, a),
        Command::Protect(a) => commands::protect_corpus(cli.seed, a),
        Command::Compare(a) => commands::compare_templates(a),
        Command::GenParams(a) => commands::gen_params(cli.seed, a),
        Command::EvalAccuracy(a) => commands::eval_accuracy(cli.seed, a),
        Command::AttackInvert(a) => commands::attack_invert(cli.seed, a),
        Command::AttackArm(a) => commands::attack_arm(cli.seed, a),
        Command::EvalUnlink(a) => commands::eval_unlink(cli.seed, a),
        Command::DeriveRange(a) => commands::derive_range(cli.seed, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        // ignore failures: the pool may already be initialized in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
