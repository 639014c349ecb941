use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use gwrw::{run_experiment, ExperimentConfig, HarnessError, Suite};

/// Runs one experiment suite and writes its result table as CSV.
///
/// Exit status: 0 when every assertion of the suite holds, 2 when one fails,
/// 1 on any error.
#[derive(Debug, Parser)]
#[command(name = "gwrw", version)]
struct Cli {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Suite name; overrides `experiment` in the configuration.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Worker threads; defaults to `workers` in the configuration, then `GWRW_WORKERS`.
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV; overrides `output` in the configuration. Standard output if neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn export_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("gwrw");
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(e) = cli.experiment {
        cfg.experiment = Some(e);
    }
    cfg.validate()?;
    let name = cfg.experiment.clone().ok_or_else(|| {
        HarnessError::Config(
            "no experiment named in the configuration or on the command line".into(),
        )
    })?;
    let suite: Suite = name.parse()?;
    let workers = cli
        .workers
        .or(cfg.workers)
        .unwrap_or_else(gwrw::core::parallel::default_workers)
        .max(1);
    let report = run_experiment(&cfg, suite, workers)?;
    let csv = report.to_csv();
    match cli.out.or_else(|| cfg.output.clone()) {
        Some(path) => {
            fs::write(&path, csv)?;
            for (suffix, content) in &report.exports {
                fs::write(export_path(&path, suffix), content)?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(csv.as_bytes())?;
            for (suffix, content) in &report.exports {
                writeln!(stdout, "# export {suffix}: {}", content.replace('\n', " "))?;
            }
        }
    }
    for c in &report.checks {
        eprintln!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("gwrw: {e}");
            ExitCode::from(1)
        }
    }
}
