mod args;
mod cfgfile;
mod commands;

use clap::Parser;
use murk_core::Error;

use crate::args::{Cli, Command};
use crate::cfgfile::ConfigFile;

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

/// Documented exit codes: 2 = configuration, 3 = data, 4 = numeric.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Contract(_) | Error::Dim(_) | Error::Capacity(_) => 2,
        Error::Data(_) | Error::Io { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn run(cli: &Cli) -> murk_core::Result<()> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = cfg.resolve(cli.seed, "seed", 0)?;
    let quiet = cli.quiet || cfg.get("quiet") == Some("true");
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }

    match &cli.command {
        Command::Prepare(a) => commands::prepare::run(a, &cfg, seed, quiet),
        Command::Synth(a) => commands::synth::run(a, &cfg, seed, quiet),
        Command::Pretrain(a) => commands::train_cmd::run_pretrain(a, &cfg, seed, quiet),
        Command::Finetune(a) => commands::train_cmd::run_finetune(a, &cfg, seed, quiet),
        Command::Enhance(a) => commands::enhance::run(a, &cfg, seed, quiet),
        Command::Eval(a) => commands::eval_cmd::run(a, &cfg, seed, quiet),
        Command::Gradcheck(a) => commands::gradcheck_cmd::run(a, &cfg, seed, quiet),
    }
}
