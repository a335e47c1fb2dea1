use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imax::experiment::{self, ExperimentConfig, SuiteResult, SweepAxis};
use imax::Error;

/// Long-tailed semi-supervised domain generalization experiments on synthetic domains.
#[derive(Debug, Parser)]
#[command(name = "imax", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Comma-separated seeds, e.g. `0,1,2`.
    #[arg(long, global = true)]
    seed_list: Option<String>,

    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Leave-one-domain-out suite over all seeds.
    Run,
    /// One suite per value of a parameter.
    Sweep {
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Baseline, Shannon and Tsallis marginal variants.
    Ablate,
    /// Converts a CSV table into whitespace-separated plot columns.
    Plotdata {
        input: PathBuf,
        #[arg(long, default_value = "value")]
        value_col: String,
        #[arg(long, default_value = "mean_accuracy")]
        mean_col: String,
        #[arg(long, default_value = "std_accuracy")]
        std_col: String,
    },
    /// Prints the effective configuration.
    Config,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 4,
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn load_config(g: &Global) -> imax::Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = &g.seed_list {
        cfg.set("seeds", seeds)?;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(jobs) = g.jobs {
        cfg.jobs = jobs;
    }
    for o in &g.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("expected KEY=VALUE, got {o:?}")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(label: &str, s: &SuiteResult) {
    println!(
        "{label}: {} runs, accuracy {:.4} ± {:.4} (config {})",
        s.aggregate.runs, s.aggregate.mean_accuracy, s.aggregate.std_accuracy, s.aggregate.config_hash
    );
}

fn divergence_check(suites: &[&SuiteResult]) -> imax::Result<()> {
    let failed: Vec<String> = suites
        .iter()
        .flat_map(|s| &s.records)
        .filter_map(|r| r.diverged.as_ref().map(|d| format!("seed {} heldout {}: {d}", r.seed, r.heldout)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Divergence {
            epoch: 0,
            step: 0,
            detail: format!("{} run(s) diverged; first: {}", failed.len(), failed[0]),
        })
    }
}

fn execute(cli: Cli) -> imax::Result<()> {
    if let Command::Plotdata { input, value_col, mean_col, std_col } = &cli.command {
        let csv = std::fs::read_to_string(input).map_err(|source| Error::Io { path: input.clone(), source })?;
        let rows = experiment::csv_to_plot_rows(&csv, value_col, mean_col, std_col)?;
        let text = experiment::emit_plot_data(value_col, &rows)?;
        match &cli.global.out {
            Some(path) => std::fs::write(path, text).map_err(|source| Error::Io { path: path.clone(), source })?,
            None => print!("{text}"),
        }
        return Ok(());
    }

    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Run => {
            let suite = experiment::run_suite(&cfg)?;
            summarize("run", &suite);
            divergence_check(&[&suite])
        }
        Command::Sweep { axis, values } => {
            let axis: SweepAxis = axis.parse()?;
            let result = experiment::sweep(&cfg, axis, &values)?;
            print!("{}", experiment::emit_plot_data(axis.key(), &result.rows)?);
            divergence_check(&result.suites.iter().collect::<Vec<_>>())
        }
        Command::Ablate => {
            let result = experiment::ablation(&cfg)?;
            print!("{}", result.to_csv());
            divergence_check(&result.suites.iter().collect::<Vec<_>>())
        }
        Command::Config => {
            print!("{}", cfg.to_text());
            println!("# hash {}", cfg.hash());
            Ok(())
        }
        Command::Plotdata { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
