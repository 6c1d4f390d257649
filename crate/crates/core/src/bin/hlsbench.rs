use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hlsbench::workbench::{validate_dataset, ExperimentConfig, Stage, Workbench};
use hlsbench::{Error, Result};

#[derive(Parser)]
#[command(name = "hlsbench", version, about = "HLS performance-modeling workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Directory holding upstream artifacts; defaults to --out.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate kernels: kernels.jsonl.
    Synth(Common),
    /// Label designs with the oracle: designs.jsonl.
    Dse(Common),
    /// Train the surrogate ensemble: ensemble/.
    TrainEnsemble(Common),
    /// Sample weak labels: weak_designs.jsonl.
    Weaklabel(Common),
    /// Pretrain the model: model/, loss.csv.
    Pretrain(Common),
    /// Fine-tune per held-out program: finetuned/, finetune_loss.csv.
    Finetune(Common),
    /// Few-shot evaluation: eval.csv, eval.json.
    Eval(Common),
    /// best@K design selection: opt.csv, opt.json.
    Optimize(Common),
    /// Summary table: report.csv.
    Report(Common),
    /// Re-check a dataset directory against its manifest.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
}

fn workbench(c: &Common) -> Result<Workbench> {
    let config = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    Workbench::new(config, c.seed, c.input.clone(), c.out.clone())
}

fn run(cmd: Command) -> Result<()> {
    let (stage, common) = match cmd {
        Command::Validate { input } => {
            let m = validate_dataset(&input)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
            return Ok(());
        }
        Command::Synth(c) => (Stage::Synth, c),
        Command::Dse(c) => (Stage::Dse, c),
        Command::TrainEnsemble(c) => (Stage::TrainEnsemble, c),
        Command::Weaklabel(c) => (Stage::Weaklabel, c),
        Command::Pretrain(c) => (Stage::Pretrain, c),
        Command::Finetune(c) => (Stage::Finetune, c),
        Command::Eval(c) => (Stage::Eval, c),
        Command::Optimize(c) => (Stage::Optimize, c),
        Command::Report(c) => (Stage::Report, c),
    };
    let wb = workbench(&common)?;
    match stage {
        Stage::Report => print!("{}", wb.report()?),
        Stage::Eval => println!("geomean mse {}", wb.eval()?.geomean),
        s => wb.run(s)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = match &e {
                Error::Dataset(problems) => serde_json::json!(problems),
                _ => serde_json::Value::Null,
            };
            let report = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
                "details": detail,
            });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
