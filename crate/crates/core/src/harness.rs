//! Experiment harness: seeded sweeps over learner hyperparameters, the
//! head-to-head profit comparison, and the CSV formats the tooling emits.
//!
//! Every session seed derives from one master seed through a documented
//! splitmix64 chain, so any cell or run can be reproduced in isolation and
//! results do not depend on execution order or thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp;
use crate::lob::Side;
use crate::prb::PrbConfig;
use crate::prsh::{MutationKind, PrshConfig};
use crate::session::{run_session, MarketDynamic, SessionConfig, SessionError, TraderAlgo};
use crate::stats::{
    kde_points, ks_normal_test, mean, sample_std, z_test_greater, z_test_positive_mean, SampleSet,
    StatsError, TestReport,
};
use crate::traders::{AlgoKind, ZipParams, DEFAULT_SNPR_WINDOW};

/// Splitmix64 step.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a session seed from the master seed and a context path:
/// `seed = splitmix64(... splitmix64(splitmix64(master) ^ part_0) ... ^ part_n)`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &part in parts {
        state = splitmix64(state ^ part);
    }
    state
}

/// Seed-path domain tags.
const DOMAIN_SWEEP: u64 = 1;
const DOMAIN_COMPARE: u64 = 2;
const DOMAIN_COMPARE_CFG: u64 = 3;

/// Trader counts per side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationCounts {
    pub gvwy: u32,
    pub zic: u32,
    pub zip: u32,
    pub snpr: u32,
    pub shvr: u32,
    pub prsh: u32,
    pub prb: u32,
}

impl Default for PopulationCounts {
    fn default() -> Self {
        PopulationCounts {
            gvwy: 20,
            zic: 20,
            zip: 20,
            snpr: 20,
            shvr: 20,
            prsh: 20,
            prb: 20,
        }
    }
}

/// Resolved experiment configuration shared by the harness and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub duration_s: u32,
    pub ticks_per_second: u32,
    pub lambda: f64,
    pub pop: PopulationCounts,
    pub prsh: PrshConfig,
    pub prb: PrbConfig,
    pub snpr_window: f64,
    pub zip: ZipParams,
    pub gp_noise: f64,
    pub gp_cap: usize,
    pub sweep_runs: usize,
    pub sweep_prsh_k: Vec<usize>,
    pub sweep_prsh_v: Vec<u32>,
    pub sweep_prsh_m: Vec<MutationKind>,
    pub sweep_prb_k: Vec<usize>,
    pub sweep_prb_v: Vec<u32>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            duration_s: 1000,
            ticks_per_second: 1,
            lambda: 2.0,
            pop: PopulationCounts::default(),
            prsh: PrshConfig {
                k: 6,
                v: 128,
                mutation: MutationKind::M3,
                elitism: true,
            },
            prb: PrbConfig { k: 4, v: 32 },
            snpr_window: DEFAULT_SNPR_WINDOW,
            zip: ZipParams::default(),
            gp_noise: gp::DEFAULT_NOISE,
            gp_cap: gp::DEFAULT_CAP,
            sweep_runs: 100,
            sweep_prsh_k: vec![2, 4, 6, 8, 10, 12, 14, 16],
            sweep_prsh_v: vec![32, 64, 128, 256],
            sweep_prsh_m: vec![MutationKind::M1, MutationKind::M2, MutationKind::M3],
            sweep_prb_k: vec![2, 3, 4],
            sweep_prb_v: vec![32, 64, 128, 256],
        }
    }
}

impl ExperimentConfig {
    /// Builds the session configuration for a given trader roster.
    pub fn session_config(&self, traders: Vec<(Side, TraderAlgo)>, seed: u64) -> SessionConfig {
        SessionConfig {
            duration_s: self.duration_s,
            ticks_per_second: self.ticks_per_second,
            lambda: self.lambda,
            traders,
            seed,
            snpr_window: self.snpr_window,
            zip: self.zip,
            gp_noise: self.gp_noise,
            gp_cap: self.gp_cap,
        }
    }

    /// The five baseline algorithms on both sides, in a fixed order.
    fn baseline_roster(&self) -> Vec<(Side, TraderAlgo)> {
        let mut roster = Vec::new();
        for side in [Side::Bid, Side::Ask] {
            for (algo, count) in [
                (TraderAlgo::Gvwy, self.pop.gvwy),
                (TraderAlgo::Zic, self.pop.zic),
                (TraderAlgo::Zip, self.pop.zip),
                (TraderAlgo::Snpr, self.pop.snpr),
                (TraderAlgo::Shvr, self.pop.shvr),
            ] {
                for _ in 0..count {
                    roster.push((side, algo));
                }
            }
        }
        roster
    }

    /// Roster for a sweep session: baselines plus the swept algorithm.
    pub fn sweep_roster(&self, algo: TraderAlgo) -> Vec<(Side, TraderAlgo)> {
        let count = match algo {
            TraderAlgo::Prsh(_) => self.pop.prsh,
            TraderAlgo::Prb(_) => self.pop.prb,
            _ => 0,
        };
        let mut roster = self.baseline_roster();
        for side in [Side::Bid, Side::Ask] {
            for _ in 0..count {
                roster.push((side, algo));
            }
        }
        roster
    }

    /// Roster for a comparison session: baselines plus both learners, each
    /// trader's hyperparameters drawn uniformly from its winner set.
    pub fn comparison_roster<R: Rng>(
        &self,
        prsh_set: &[PrshConfig],
        prb_set: &[PrbConfig],
        rng: &mut R,
    ) -> Vec<(Side, TraderAlgo)> {
        let mut roster = self.baseline_roster();
        for side in [Side::Bid, Side::Ask] {
            for _ in 0..self.pop.prsh {
                let cfg = prsh_set[rng.random_range(0..prsh_set.len())];
                roster.push((side, TraderAlgo::Prsh(cfg)));
            }
            for _ in 0..self.pop.prb {
                let cfg = prb_set[rng.random_range(0..prb_set.len())];
                roster.push((side, TraderAlgo::Prb(cfg)));
            }
        }
        roster
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("winner set is empty")]
    EmptyWinnerSet,
    #[error("population has no {0} traders")]
    MissingAlgo(AlgoKind),
    #[error("{context}: {source}")]
    Session {
        context: String,
        #[source]
        source: SessionError,
    },
    #[error("{context}: {source}")]
    Stats {
        context: String,
        #[source]
        source: StatsError,
    },
}

/// One hyperparameter cell of a sweep with its sample and test results.
#[derive(Clone, Debug)]
pub struct SweepCellReport {
    pub k: usize,
    pub v: u32,
    pub m: Option<MutationKind>,
    pub samples: SampleSet,
    pub mean: f64,
    pub std: f64,
    pub ks: TestReport,
    pub z_vs_best: TestReport,
    pub in_winner_set: bool,
}

/// Full sweep outcome: per-cell reports plus the argmax cell index.
#[derive(Clone, Debug)]
pub struct SweepReport {
    pub algo: AlgoKind,
    pub dynamic_label: String,
    pub cells: Vec<SweepCellReport>,
    pub best: usize,
}

impl SweepReport {
    /// Cells statistically indistinguishable from the best, including the
    /// best itself.
    pub fn winner_cells(&self) -> Vec<&SweepCellReport> {
        self.cells.iter().filter(|c| c.in_winner_set).collect()
    }
}

fn cell_label(algo: AlgoKind, k: usize, v: u32, m: Option<MutationKind>) -> String {
    match m {
        Some(m) => format!("{algo} k={k} v={v} m={m}"),
        None => format!("{algo} k={k} v={v}"),
    }
}

/// Runs `runs_per_cell` seeded sessions for one cell and returns the mean
/// per-trader profit of the swept algorithm in each run.
fn run_cell(
    cfg: &ExperimentConfig,
    dynamic: MarketDynamic,
    algo: TraderAlgo,
    seed_parts: &[u64],
    runs_per_cell: usize,
    master_seed: u64,
) -> Result<Vec<f64>, HarnessError> {
    let kind = algo.kind();
    let context = || format!("{} sweep cell {:?}", kind, seed_parts);
    let roster = cfg.sweep_roster(algo);
    (0..runs_per_cell)
        .into_par_iter()
        .map(|run| {
            let mut parts = seed_parts.to_vec();
            parts.push(run as u64);
            let seed = derive_seed(master_seed, &parts);
            let session_cfg = cfg.session_config(roster.clone(), seed);
            let result =
                run_session(&session_cfg, dynamic).map_err(|source| HarnessError::Session {
                    context: context(),
                    source,
                })?;
            result
                .mean_profit_of(kind)
                .ok_or(HarnessError::MissingAlgo(kind))
        })
        .collect()
}

/// Builds per-cell test reports and the winner set: the argmax cell plus
/// every cell whose one-sided Z-test against it cannot reject equality.
fn finish_sweep(
    algo: AlgoKind,
    dynamic: MarketDynamic,
    mut cells: Vec<SweepCellReport>,
) -> Result<SweepReport, HarnessError> {
    if cells.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let mut best = 0;
    for (i, cell) in cells.iter().enumerate() {
        if cell.mean > cells[best].mean {
            best = i;
        }
    }
    let best_samples = cells[best].samples.clone();
    for cell in &mut cells {
        let z =
            z_test_greater(&best_samples, &cell.samples).map_err(|source| HarnessError::Stats {
                context: cell.samples.label.clone(),
                source,
            })?;
        cell.in_winner_set = !z.reject_null;
        cell.z_vs_best = z;
    }
    Ok(SweepReport {
        algo,
        dynamic_label: dynamic.label().to_string(),
        cells,
        best,
    })
}

/// Hyperparameter sweep for the hillclimber over the configured
/// `k x v x m` grid.
pub fn run_prsh_sweep(
    dynamic: MarketDynamic,
    cfg: &ExperimentConfig,
    runs_per_cell: usize,
    master_seed: u64,
) -> Result<SweepReport, HarnessError> {
    if cfg.pop.prsh == 0 {
        return Err(HarnessError::MissingAlgo(AlgoKind::Prsh));
    }
    let dyn_code = dynamic_code(dynamic);
    let mut cells = Vec::new();
    for &k in &cfg.sweep_prsh_k {
        for &v in &cfg.sweep_prsh_v {
            for &m in &cfg.sweep_prsh_m {
                let trader_cfg = PrshConfig {
                    k,
                    v,
                    mutation: m,
                    elitism: cfg.prsh.elitism,
                };
                let parts = [DOMAIN_SWEEP, dyn_code, 0, k as u64, v as u64, m as u64];
                let samples = run_cell(
                    cfg,
                    dynamic,
                    TraderAlgo::Prsh(trader_cfg),
                    &parts,
                    runs_per_cell,
                    master_seed,
                )?;
                cells.push(make_cell(AlgoKind::Prsh, k, v, Some(m), samples)?);
            }
        }
    }
    finish_sweep(AlgoKind::Prsh, dynamic, cells)
}

/// Hyperparameter sweep for the ensemble learner over the configured
/// `k x v` grid.
pub fn run_prb_sweep(
    dynamic: MarketDynamic,
    cfg: &ExperimentConfig,
    runs_per_cell: usize,
    master_seed: u64,
) -> Result<SweepReport, HarnessError> {
    if cfg.pop.prb == 0 {
        return Err(HarnessError::MissingAlgo(AlgoKind::Prb));
    }
    let dyn_code = dynamic_code(dynamic);
    let mut cells = Vec::new();
    for &k in &cfg.sweep_prb_k {
        for &v in &cfg.sweep_prb_v {
            let trader_cfg = PrbConfig { k, v };
            let parts = [DOMAIN_SWEEP, dyn_code, 1, k as u64, v as u64, u64::MAX];
            let samples = run_cell(
                cfg,
                dynamic,
                TraderAlgo::Prb(trader_cfg),
                &parts,
                runs_per_cell,
                master_seed,
            )?;
            cells.push(make_cell(AlgoKind::Prb, k, v, None, samples)?);
        }
    }
    finish_sweep(AlgoKind::Prb, dynamic, cells)
}

fn make_cell(
    algo: AlgoKind,
    k: usize,
    v: u32,
    m: Option<MutationKind>,
    samples: Vec<f64>,
) -> Result<SweepCellReport, HarnessError> {
    let label = cell_label(algo, k, v, m);
    let ks = ks_normal_test(&samples).map_err(|source| HarnessError::Stats {
        context: label.clone(),
        source,
    })?;
    Ok(SweepCellReport {
        k,
        v,
        m,
        mean: mean(&samples),
        std: sample_std(&samples),
        samples: SampleSet::new(label, samples),
        ks,
        z_vs_best: TestReport {
            statistic: 0.0,
            p_value: 0.5,
            reject_null: false,
        },
        in_winner_set: true,
    })
}

fn dynamic_code(dynamic: MarketDynamic) -> u64 {
    match dynamic.kind {
        crate::session::DynamicKind::Trend => 0,
        crate::session::DynamicKind::Trendless => 1,
    }
}

/// Winner-set extraction helpers.
pub fn prsh_winner_set(report: &SweepReport, elitism: bool) -> Vec<PrshConfig> {
    report
        .winner_cells()
        .iter()
        .map(|c| PrshConfig {
            k: c.k,
            v: c.v,
            mutation: c.m.expect("hillclimber cells carry a mutation"),
            elitism,
        })
        .collect()
}

pub fn prb_winner_set(report: &SweepReport) -> Vec<PrbConfig> {
    report
        .winner_cells()
        .iter()
        .map(|c| PrbConfig { k: c.k, v: c.v })
        .collect()
}

/// Comparison outcome: the per-run profit differences and the tests run on
/// them.
#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub dynamic_label: String,
    pub d: SampleSet,
    pub ks: TestReport,
    pub z: TestReport,
    pub prb_invariant_violations: u64,
}

/// Head-to-head runs with both learners in the market. Each learner trader
/// draws its hyperparameters uniformly from its winner set, per run; `d`
/// records mean profit of the ensemble learner minus mean profit of the
/// hillclimber, one value per run.
pub fn run_comparison(
    dynamic: MarketDynamic,
    cfg: &ExperimentConfig,
    prsh_set: &[PrshConfig],
    prb_set: &[PrbConfig],
    runs: usize,
    master_seed: u64,
) -> Result<ComparisonReport, HarnessError> {
    if prsh_set.is_empty() || prb_set.is_empty() {
        return Err(HarnessError::EmptyWinnerSet);
    }
    if cfg.pop.prsh == 0 {
        return Err(HarnessError::MissingAlgo(AlgoKind::Prsh));
    }
    if cfg.pop.prb == 0 {
        return Err(HarnessError::MissingAlgo(AlgoKind::Prb));
    }
    let dyn_code = dynamic_code(dynamic);
    let outcomes: Vec<(f64, u64)> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let cfg_seed = derive_seed(master_seed, &[DOMAIN_COMPARE_CFG, dyn_code, run as u64]);
            let mut cfg_rng = ChaCha8Rng::seed_from_u64(cfg_seed);
            let roster = cfg.comparison_roster(prsh_set, prb_set, &mut cfg_rng);
            let seed = derive_seed(master_seed, &[DOMAIN_COMPARE, dyn_code, run as u64]);
            let session_cfg = cfg.session_config(roster, seed);
            let result =
                run_session(&session_cfg, dynamic).map_err(|source| HarnessError::Session {
                    context: format!("comparison run {run}"),
                    source,
                })?;
            let prb = result
                .mean_profit_of(AlgoKind::Prb)
                .ok_or(HarnessError::MissingAlgo(AlgoKind::Prb))?;
            let prsh = result
                .mean_profit_of(AlgoKind::Prsh)
                .ok_or(HarnessError::MissingAlgo(AlgoKind::Prsh))?;
            Ok((prb - prsh, result.prb_invariant_violations))
        })
        .collect::<Result<_, HarnessError>>()?;

    let d: Vec<f64> = outcomes.iter().map(|&(d, _)| d).collect();
    let prb_invariant_violations = outcomes.iter().map(|&(_, v)| v).sum();
    let label = format!("d {}", dynamic.label());
    let ks = ks_normal_test(&d).map_err(|source| HarnessError::Stats {
        context: label.clone(),
        source,
    })?;
    let d = SampleSet::new(label.clone(), d);
    let z = z_test_positive_mean(&d).map_err(|source| HarnessError::Stats {
        context: label,
        source,
    })?;
    Ok(ComparisonReport {
        dynamic_label: dynamic.label().to_string(),
        d,
        ks,
        z,
        prb_invariant_violations,
    })
}

/// Sweep table CSV: one row per cell. The scaled column repeats the mean
/// divided by 1000 for eyeballing against thousand-scaled reports.
pub fn write_sweep_csv<W: Write>(report: &SweepReport, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "e,algo,k,v,m,n,mean,std,ks_p,z_p,in_winner_set,mean_scaled"
    )?;
    for cell in &report.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.4},{:.4},{:.6},{:.6},{},{:.6}",
            report.dynamic_label,
            report.algo,
            cell.k,
            cell.v,
            cell.m.map(|m| m.label()).unwrap_or(""),
            cell.samples.n(),
            cell.mean,
            cell.std,
            cell.ks.p_value,
            cell.z_vs_best.p_value,
            cell.in_winner_set,
            cell.mean / 1000.0,
        )?;
    }
    Ok(())
}

/// Comparison CSV: one row per run.
pub fn write_comparison_csv<W: Write>(
    report: &ComparisonReport,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "e,run,d")?;
    for (run, d) in report.d.samples.iter().enumerate() {
        writeln!(out, "{},{},{:.4}", report.dynamic_label, run, d)?;
    }
    Ok(())
}

/// Test summary CSV for a comparison.
pub fn write_tests_csv<W: Write>(report: &ComparisonReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "e,test,statistic,p_value,reject_null")?;
    writeln!(
        out,
        "{},ks_normal,{:.6},{:.6},{}",
        report.dynamic_label, report.ks.statistic, report.ks.p_value, report.ks.reject_null
    )?;
    writeln!(
        out,
        "{},z_positive_mean,{:.6},{:.6},{}",
        report.dynamic_label, report.z.statistic, report.z.p_value, report.z.reject_null
    )?;
    Ok(())
}

/// Density points CSV.
pub fn write_kde_csv<W: Write>(points: &[(f64, f64)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,density")?;
    for (x, density) in points {
        writeln!(out, "{:.6},{:.9}", x, density)?;
    }
    Ok(())
}

/// Convenience: KDE of a comparison's d-sample.
pub fn comparison_kde(
    report: &ComparisonReport,
    n_points: usize,
) -> Result<Vec<(f64, f64)>, HarnessError> {
    kde_points(&report.d.samples, n_points).map_err(|source| HarnessError::Stats {
        context: report.d.label.clone(),
        source,
    })
}
