use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bprelab::harness::{
    run_experiment, with_workers, ExperimentConfig, ExperimentKind, ExperimentReport, Relation, RunOptions,
    SeedSource, Timing,
};
use clap::error::ErrorKind;
use clap::Parser;

/// Run one experiment and write its report, CSV tables and timing.
///
/// Exit status: 0 when every verdict passes, 2 when a verdict fails, 1 on error.
#[derive(Debug, Parser)]
#[command(name = "bprelab", version)]
struct Cli {
    /// Experiment kind, e.g. survival or rayleigh-logpop.
    kind: ExperimentKind,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides BPRELAB_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir, then bprelab-out/<kind>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long)]
    workers: Option<usize>,
    /// Run limit-theorem experiments even if the hypothesis gate fails.
    #[arg(long)]
    force: bool,
}

fn resolve_seed(flag: Option<u64>, config: u64) -> Result<(u64, SeedSource), String> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    match std::env::var("BPRELAB_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(|s| (s, SeedSource::Environment))
            .map_err(|_| format!("BPRELAB_SEED='{v}' is not an unsigned 64-bit integer")),
        Err(std::env::VarError::NotPresent) => Ok((config, SeedSource::Config)),
        Err(e) => Err(format!("BPRELAB_SEED: {e}")),
    }
}

fn relation_symbol(r: Relation) -> &'static str {
    match r {
        Relation::AtMost => "<=",
        Relation::AtLeast => ">=",
        Relation::LessThan => "<",
    }
}

fn print_summary(report: &ExperimentReport, out: &Path) {
    for v in &report.verdicts {
        println!(
            "{} {} {} {} {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.statistic,
            relation_symbol(v.relation),
            v.threshold
        );
    }
    println!("report written to {}", out.display());
}

fn run(cli: Cli) -> Result<bool, String> {
    let cfg = ExperimentConfig::load(&cli.config).map_err(|e| e.to_string())?;
    let base_dir = cli.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let seed = resolve_seed(cli.seed, cfg.seed)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(|d| base_dir.join(d)))
        .unwrap_or_else(|| PathBuf::from("bprelab-out").join(cli.kind.tag()));
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err("--workers must be at least 1".into());
    }
    let opts = RunOptions { force: cli.force, seed: Some(seed), base_dir };

    let start = Instant::now();
    let report = with_workers(workers, || run_experiment(cli.kind, &cfg, &opts))
        .and_then(|r| r)
        .map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();

    report.write(&out).map_err(|e| e.to_string())?;
    Timing { kind: cli.kind, workers, seconds }.write(&out).map_err(|e| e.to_string())?;
    print_summary(&report, &out);
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
