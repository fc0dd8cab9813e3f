//! Command-line experiment runner: seeded sessions, hyperparameter sweeps,
//! the head-to-head comparison pipeline, KDE extraction and a self-test
//! suite. Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod config;
mod manifest;
mod selftest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mktsim::harness::{
    comparison_kde, prb_winner_set, prsh_winner_set, run_comparison, run_prb_sweep, run_prsh_sweep,
    write_comparison_csv, write_kde_csv, write_sweep_csv, write_tests_csv, ExperimentConfig,
};
use mktsim::lob::write_tape_csv;
use mktsim::session::{run_session, MarketDynamic, TraderAlgo};
use mktsim::stats::kde_points;

use manifest::RunManifest;

const USAGE: &str = "\
mktsim - continuous double auction simulator and experiment runner

USAGE:
  mktsim <COMMAND> [FLAGS]

COMMANDS:
  session      Run one seeded market session; prints the result as JSON
  sweep-prsh   Hyperparameter sweep for the PRSH hillclimber
  sweep-prb    Hyperparameter sweep for the PRB ensemble learner
  compare      End-to-end comparison: sweeps, winner sets, head-to-head runs
  kde          Kernel density points from a d-sample CSV
  selftest     Run the built-in oracle and calibration checks

FLAGS:
  --dynamic {trend|trendless}  Market dynamic (default: trend)
  --seed N                     Master seed (default: 1)
  --runs N                     Runs: per cell for sweeps, comparison runs
                               for compare (defaults: sweep.runs / 100)
  --duration N                 Session length in seconds (overrides config)
  --out DIR                    Output directory (required for sweep-prsh,
                               sweep-prb, compare, kde)
  --config FILE                Flat key=value config file
  --jobs N                     Worker threads (default: all cores); outputs
                               are identical for any N
  --in FILE                    Input d-sample CSV (kde only)
  --points N                   Number of density points (kde only, default 256)
  --help                       Show this help

CONFIG KEYS (defaults in parentheses):
  duration (1000), ticks_per_second (1), lambda (2.0),
  pop.gvwy/zic/zip/snpr/shvr/prsh/prb (20 each, per side),
  prsh.k (6), prsh.v (128), prsh.m (m3), prsh.elitism (true),
  prb.k (4), prb.v (32), gp.noise (0.1), gp.cap (200),
  snpr.window (0.05), zip.beta_min/max (0.1/0.5),
  zip.gamma_min/max (0.0/0.1), zip.ca (5.0), zip.cr (0.05),
  sweep.runs (100), sweep.prsh.k (2,4,6,8,10,12,14,16),
  sweep.prsh.v (32,64,128,256), sweep.prsh.m (m1,m2,m3),
  sweep.prb.k (2,3,4), sweep.prb.v (32,64,128,256)
";

pub(crate) enum CliError {
    Usage(String),
    Runtime(String),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub(crate) fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let code = match dispatch(&argv) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!();
            eprintln!("{USAGE}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    };
    std::process::exit(code);
}

struct Args {
    dynamic: MarketDynamic,
    seed: u64,
    runs: Option<usize>,
    duration: Option<u32>,
    out: Option<PathBuf>,
    config: Option<PathBuf>,
    jobs: Option<usize>,
    input: Option<PathBuf>,
    points: usize,
}

impl Args {
    fn parse(flags: &[String]) -> Result<Args, CliError> {
        let mut args = Args {
            dynamic: MarketDynamic::trend(),
            seed: 1,
            runs: None,
            duration: None,
            out: None,
            config: None,
            jobs: None,
            input: None,
            points: 256,
        };
        let mut i = 0;
        while i < flags.len() {
            let flag = flags[i].clone();
            let mut value = || -> Result<&String, CliError> {
                i += 1;
                flags
                    .get(i)
                    .ok_or_else(|| usage(format!("{flag} requires a value")))
            };
            match flag.as_str() {
                "--dynamic" => {
                    args.dynamic = value()?.parse().map_err(usage)?;
                }
                "--seed" => {
                    args.seed = parse_num(value()?, "--seed")?;
                }
                "--runs" => {
                    args.runs = Some(parse_num(value()?, "--runs")?);
                }
                "--duration" => {
                    args.duration = Some(parse_num(value()?, "--duration")?);
                }
                "--out" => {
                    args.out = Some(PathBuf::from(value()?));
                }
                "--config" => {
                    args.config = Some(PathBuf::from(value()?));
                }
                "--jobs" => {
                    args.jobs = Some(parse_num(value()?, "--jobs")?);
                }
                "--in" => {
                    args.input = Some(PathBuf::from(value()?));
                }
                "--points" => {
                    args.points = parse_num(value()?, "--points")?;
                }
                other => return Err(usage(format!("unknown flag `{other}`"))),
            }
            i += 1;
        }
        Ok(args)
    }

    fn experiment_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => config::load_config(path).map_err(usage)?,
            None => ExperimentConfig::default(),
        };
        if let Some(duration) = self.duration {
            if duration == 0 {
                return Err(usage("--duration must be positive"));
            }
            cfg.duration_s = duration;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        let dir = self
            .out
            .as_deref()
            .ok_or_else(|| usage("--out DIR is required for this command"))?;
        std::fs::create_dir_all(dir)
            .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, flag: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| usage(format!("{flag}: `{value}` is not a valid number")))
}

fn dispatch(argv: &[String]) -> Result<(), CliError> {
    let command = argv.get(1).map(String::as_str).unwrap_or("--help");
    if command == "--help" || command == "-h" || command == "help" {
        println!("{USAGE}");
        return Ok(());
    }
    if argv.iter().skip(2).any(|a| a == "--help") {
        println!("{USAGE}");
        return Ok(());
    }
    let args = Args::parse(&argv[2..])?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(runtime)?;
    match command {
        "session" => pool.install(|| cmd_session(argv, &args)),
        "sweep-prsh" => pool.install(|| cmd_sweep(argv, &args, SweptAlgo::Prsh)),
        "sweep-prb" => pool.install(|| cmd_sweep(argv, &args, SweptAlgo::Prb)),
        "compare" => pool.install(|| cmd_compare(argv, &args)),
        "kde" => cmd_kde(argv, &args),
        "selftest" => selftest::run(),
        other => Err(usage(format!("unknown command `{other}`"))),
    }
}

fn cmd_session(argv: &[String], args: &Args) -> Result<(), CliError> {
    let cfg = args.experiment_config()?;
    let mut roster = cfg.sweep_roster(TraderAlgo::Prsh(cfg.prsh));
    for side in [mktsim::lob::Side::Bid, mktsim::lob::Side::Ask] {
        for _ in 0..cfg.pop.prb {
            roster.push((side, TraderAlgo::Prb(cfg.prb)));
        }
    }
    let session_cfg = cfg.session_config(roster, args.seed);
    let result = run_session(&session_cfg, args.dynamic).map_err(runtime)?;
    let json = serde_json::to_string_pretty(&result).map_err(runtime)?;
    println!("{json}");

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
        let mut manifest = RunManifest::new(argv, args.seed, &cfg);
        write_text(dir, "session.json", &format!("{json}\n"))?;
        manifest.record("session.json");
        let file = create(dir, "tape.csv")?;
        write_tape_csv(&result.trades, file).map_err(runtime)?;
        manifest.record("tape.csv");
        manifest.write(dir).map_err(runtime)?;
    }
    Ok(())
}

enum SweptAlgo {
    Prsh,
    Prb,
}

fn cmd_sweep(argv: &[String], args: &Args, algo: SweptAlgo) -> Result<(), CliError> {
    let cfg = args.experiment_config()?;
    let dir = args.out_dir()?;
    let runs = args.runs.unwrap_or(cfg.sweep_runs);
    let mut manifest = RunManifest::new(argv, args.seed, &cfg);
    let (report, name) = match algo {
        SweptAlgo::Prsh => (
            run_prsh_sweep(args.dynamic, &cfg, runs, args.seed).map_err(runtime)?,
            "prsh_sweep.csv",
        ),
        SweptAlgo::Prb => (
            run_prb_sweep(args.dynamic, &cfg, runs, args.seed).map_err(runtime)?,
            "prb_sweep.csv",
        ),
    };
    let file = create(dir, name)?;
    write_sweep_csv(&report, file).map_err(runtime)?;
    manifest.record(name);
    manifest.write(dir).map_err(runtime)?;

    let best = &report.cells[report.best];
    println!(
        "{} {}: best cell k={} v={}{} mean={:.2}, winner set size {}",
        report.algo,
        report.dynamic_label,
        best.k,
        best.v,
        best.m.map(|m| format!(" m={m}")).unwrap_or_default(),
        best.mean,
        report.winner_cells().len()
    );
    Ok(())
}

fn cmd_compare(argv: &[String], args: &Args) -> Result<(), CliError> {
    let cfg = args.experiment_config()?;
    let dir = args.out_dir()?;
    let runs = args.runs.unwrap_or(100);
    let mut manifest = RunManifest::new(argv, args.seed, &cfg);

    let prsh_report =
        run_prsh_sweep(args.dynamic, &cfg, cfg.sweep_runs, args.seed).map_err(runtime)?;
    let file = create(dir, "prsh_sweep.csv")?;
    write_sweep_csv(&prsh_report, file).map_err(runtime)?;
    manifest.record("prsh_sweep.csv");

    let prb_report =
        run_prb_sweep(args.dynamic, &cfg, cfg.sweep_runs, args.seed).map_err(runtime)?;
    let file = create(dir, "prb_sweep.csv")?;
    write_sweep_csv(&prb_report, file).map_err(runtime)?;
    manifest.record("prb_sweep.csv");

    let prsh_set = prsh_winner_set(&prsh_report, cfg.prsh.elitism);
    let prb_set = prb_winner_set(&prb_report);
    let report = run_comparison(args.dynamic, &cfg, &prsh_set, &prb_set, runs, args.seed)
        .map_err(runtime)?;
    if report.prb_invariant_violations > 0 {
        return Err(runtime(format!(
            "PRB ensemble invariants violated {} times",
            report.prb_invariant_violations
        )));
    }

    let file = create(dir, "d.csv")?;
    write_comparison_csv(&report, file).map_err(runtime)?;
    manifest.record("d.csv");

    let file = create(dir, "tests.csv")?;
    write_tests_csv(&report, file).map_err(runtime)?;
    manifest.record("tests.csv");

    let kde = comparison_kde(&report, args.points).map_err(runtime)?;
    let file = create(dir, "kde.csv")?;
    write_kde_csv(&kde, file).map_err(runtime)?;
    manifest.record("kde.csv");

    manifest.write(dir).map_err(runtime)?;
    println!(
        "{}: d mean={:.2} std={:.2} over {} runs; ks_p={:.4}, z_p={:.6} ({} PRSH / {} PRB winner cells)",
        report.dynamic_label,
        report.d.mean(),
        report.d.std(),
        report.d.n(),
        report.ks.p_value,
        report.z.p_value,
        prsh_set.len(),
        prb_set.len(),
    );
    Ok(())
}

fn cmd_kde(argv: &[String], args: &Args) -> Result<(), CliError> {
    let input = args
        .input
        .as_deref()
        .ok_or_else(|| usage("kde requires --in FILE"))?;
    let cfg = args.experiment_config()?;
    let dir = args.out_dir()?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| runtime(format!("cannot read {}: {e}", input.display())))?;
    let samples = parse_d_column(&text).map_err(runtime)?;
    let points = kde_points(&samples, args.points).map_err(runtime)?;
    let file = create(dir, "kde.csv")?;
    write_kde_csv(&points, file).map_err(runtime)?;
    let mut manifest = RunManifest::new(argv, args.seed, &cfg);
    manifest.record("kde.csv");
    manifest.write(dir).map_err(runtime)?;
    println!(
        "kde: {} points from {} samples",
        points.len(),
        samples.len()
    );
    Ok(())
}

/// Pulls the `d` column out of a comparison CSV.
fn parse_d_column(text: &str) -> Result<Vec<f64>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty CSV")?;
    let d_index = header
        .split(',')
        .position(|c| c.trim() == "d")
        .ok_or_else(|| format!("no `d` column in header `{header}`"))?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cell = line
            .split(',')
            .nth(d_index)
            .ok_or_else(|| format!("row {}: missing column {d_index}", i + 2))?;
        let value: f64 = cell
            .trim()
            .parse()
            .map_err(|_| format!("row {}: `{cell}` is not a number", i + 2))?;
        samples.push(value);
    }
    if samples.is_empty() {
        return Err("CSV has no data rows".to_string());
    }
    Ok(samples)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    File::create(dir.join(name))
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot create {name}: {e}")))
}

fn write_text(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let mut file = create(dir, name)?;
    file.write_all(content.as_bytes())
        .map_err(|e| runtime(format!("cannot write {name}: {e}")))
}
