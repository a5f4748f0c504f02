use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsgan::commands::Run;
use dsgan::config::RunConfig;

#[derive(Parser)]
#[command(name = "dsgan", version, about = "Adversarial cleaning of distantly supervised relation data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted false positives
    Synth(Common),
    /// Pre-train the discriminator and generator of each relation
    Pretrain(Common),
    /// Run adversarial training and save the best generator
    Train(Common),
    /// Redistribute rejected entity pairs into the negative set
    Clean(Common),
    /// Compare downstream AUC on raw and cleaned data
    Eval(Common),
    /// Train on equal-size positive sets chosen three ways
    Experiment(Common),
    /// Every step in order
    All(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Process only this relation
    #[arg(long)]
    relation: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (name, args) = match cli.command {
        Command::Synth(a) => ("synth", a),
        Command::Pretrain(a) => ("pretrain", a),
        Command::Train(a) => ("train", a),
        Command::Clean(a) => ("clean", a),
        Command::Eval(a) => ("eval", a),
        Command::Experiment(a) => ("experiment", a),
        Command::All(a) => ("all", a),
    };
    let result = RunConfig::load(&args.config).and_then(|mut config| {
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        Run::new(config, &args.out, args.relation).execute(name)
    });
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dsgan {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
