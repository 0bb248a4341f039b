use clap::{Args, Parser, Subcommand};
use formation_nmpc::scenario::{
    aggregate_runs, run_table, segment_summaries, simulate_run, simulate_run_partial, write_aggregate, write_summary,
    write_table, RunLog, ScenarioConfig, Segment,
};
use formation_nmpc::Result;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(version, about = "Closed-loop simulation of a centralized formation NMPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write its CSV log.
    Run(Common),
    /// Simulate several seeded runs and write per-run, aggregate and summary CSVs.
    Study(Common),
    /// Repeat the study with and without the shifted warm start.
    Ablate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_warm_start: bool,
    /// Fixed SQP iteration budget per step instead of the wall clock.
    #[arg(long, value_name = "SQP_ITERS")]
    test_mode: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<(ScenarioConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if self.no_warm_start {
            cfg.warm_start = false;
        }
        if self.test_mode.is_some() {
            cfg.test_mode = self.test_mode;
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
        std::fs::create_dir_all(&out)?;
        Ok((cfg, out))
    }
}

fn run_many(cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<RunLog>> {
    std::fs::create_dir_all(dir)?;
    let mut logs = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs {
        let seed = cfg.seed + r as u64;
        let log = simulate_run(cfg, seed)?;
        write_table(&dir.join(format!("run_{seed}.csv")), &run_table(&log))?;
        eprintln!("run {} of {} (seed {seed}) done", r + 1, cfg.runs);
        logs.push(log);
    }
    let agg = aggregate_runs(&logs)?;
    write_aggregate(&dir.join("aggregate.csv"), &agg)?;
    let summaries = segment_summaries(cfg, &logs)?;
    let names: Vec<String> = agg.columns.iter().filter(|c| c.starts_with("err_f")).cloned().collect();
    write_summary(&dir.join("summary.csv"), &summaries, &names)?;
    for s in &summaries {
        let errs: Vec<String> = s.mean_pair_errors.iter().map(|e| format!("{e:.4}")).collect();
        println!(
            "segment {}  window [{:.2}, {:.2}] s  mean pair errors [{}] m  objective {:.4}  cpu {:.2} ms  fallback {:.2}%",
            s.segment.letter(),
            s.window.0,
            s.window.1,
            errs.join(", "),
            s.mean_objective,
            s.mean_cpu_ms,
            100.0 * s.fallback_rate
        );
    }
    Ok(logs)
}

fn mean_objective(logs: &[RunLog], cfg: &ScenarioConfig, segment: Segment) -> f64 {
    let (t0, t1) = (cfg.schedule.start_of(segment), cfg.schedule.end_of(segment));
    let vals: Vec<f64> =
        logs.iter().flat_map(|l| &l.records).filter(|r| r.t >= t0 && r.t < t1).map(|r| r.objective).collect();
    vals.iter().sum::<f64>() / vals.len().max(1) as f64
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, out) = c.resolve()?;
            let path = out.join(format!("run_{}.csv", cfg.seed));
            let log = match simulate_run_partial(&cfg, cfg.seed) {
                Ok(log) => log,
                Err((e, partial)) => {
                    write_table(&path, &run_table(&partial))?;
                    eprintln!("partial log of {} steps written to {}", partial.records.len(), path.display());
                    return Err(e);
                }
            };
            write_table(&path, &run_table(&log))?;
            let fallbacks = log.records.iter().filter(|r| r.fallback).count();
            let cpu = log.records.iter().map(|r| r.cpu_time).sum::<f64>() / log.records.len() as f64;
            println!(
                "{} steps, {} fallbacks, mean solve {:.2} ms -> {}",
                log.records.len(),
                fallbacks,
                cpu * 1e3,
                path.display()
            );
        }
        Command::Study(c) => {
            let (cfg, out) = c.resolve()?;
            run_many(&cfg, &out)?;
        }
        Command::Ablate(c) => {
            let (mut cfg, out) = c.resolve()?;
            cfg.warm_start = true;
            println!("warm start:");
            let warm = run_many(&cfg, &out.join("warm"))?;
            cfg.warm_start = false;
            println!("cold start:");
            let cold = run_many(&cfg, &out.join("cold"))?;
            let (w, k) = (mean_objective(&warm, &cfg, Segment::Turn), mean_objective(&cold, &cfg, Segment::Turn));
            println!("mean objective over the turn: warm {w:.6}, cold {k:.6}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
