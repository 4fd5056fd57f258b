use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use segeval_cli::{config::RunConfig, report_run, run_all, CliError, Experiment, RunDir};
use segeval_core::corpus::write_corpus;
use segeval_core::synth::{generate_synthetic_corpus, SyntheticSpec};

#[derive(Parser)]
#[command(name = "segeval", version, about = "Resampling evaluation of morphological segmenters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated substrings of setting ids to restrict to.
    #[arg(long)]
    only: Option<String>,
}

#[derive(Args, Clone)]
struct ReportArgs {
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    only: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample data sets and new test sets.
    Sample(RunArgs),
    /// Make random, adversarial and heuristic splits.
    Split(RunArgs),
    /// Train every model on every random split.
    Train(RunArgs),
    /// Score trained models on test halves and new test sets.
    Eval(RunArgs),
    /// Collect results into analysis.json.
    Analyze(ReportArgs),
    /// Write the CSV and JSON reports (runs the analysis first).
    Report(ReportArgs),
    /// All stages in order.
    Run(RunArgs),
    /// Write a synthetic corpus.
    Synth {
        /// Generator spec (JSON); defaults to the agglutinative preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1500)]
        stem_count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn experiment(args: &RunArgs) -> Result<Experiment, CliError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    Experiment::prepare(config, args.only.as_deref())
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Sample(a) => print_stage("sample", experiment(&a)?.sample()?),
        Command::Split(a) => print_stage("split", experiment(&a)?.split()?),
        Command::Train(a) => print_stage("train", experiment(&a)?.train()?),
        Command::Eval(a) => print_stage("eval", experiment(&a)?.eval()?),
        Command::Analyze(a) => {
            let dir = RunDir::new(a.out);
            let analysis = segeval_cli::analyze_run(&dir, a.only.as_deref())?;
            segeval_cli::store::write_file(&dir.analysis(), &segeval_cli::store::to_json(&analysis))?;
            println!("wrote {}", dir.analysis().display());
        }
        Command::Report(a) => {
            let dir = RunDir::new(a.out);
            report_run(&dir, a.only.as_deref())?;
            println!("wrote reports to {}", dir.reports().display());
        }
        Command::Run(a) => {
            let exp = experiment(&a)?;
            for s in exp.settings.iter().filter(|s| s.skipped.is_some()) {
                eprintln!("skipping {}: {}", s.id, s.skipped.as_deref().unwrap_or_default());
            }
            run_all(&exp, a.only.as_deref())?;
            println!("wrote reports to {}", exp.dir.reports().display());
        }
        Command::Synth { spec, stem_count, seed, out } => {
            let spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
                }
                None => SyntheticSpec::agglutinative(stem_count, seed),
            };
            let text = write_corpus(&generate_synthetic_corpus(&spec));
            match out {
                Some(p) => segeval_cli::store::write_file(&p, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn print_stage(stage: &str, r: segeval_cli::StageReport) {
    println!("{stage}: {} units written, {} already complete", r.done, r.skipped);
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
