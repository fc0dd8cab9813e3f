//! Bandit-over-bandit strategy learner: an ensemble of `k` Gaussian
//! processes with staggered memories drives the inner continuum search,
//! while a Softmax retention rule run at every stage boundary decides which
//! process to forget and replaces it with a fresh one.
//!
//! Within a stage each process owns one `W`-tick sub-window and samples the
//! quoting strategy from its posterior; every executed fill feeds its
//! (strategy, pps) pair to all `k` processes, but the realized profit is
//! credited only to the process that quoted.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gp::{acquire, posterior_grid, GpError, GpObservations, PosteriorGrid};
use crate::lob::Tick;
use crate::prsh::{window_of, ScheduleError};

/// Ensemble hyperparameters: `k` processes and strategy wait time `v`
/// seconds; the sub-window is `W = floor(v_ticks / k)` as for the
/// hillclimber.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrbConfig {
    pub k: usize,
    pub v: u32,
}

impl PrbConfig {
    pub fn new(k: usize, v: u32) -> Result<PrbConfig, ScheduleError> {
        let cfg = PrbConfig { k, v };
        cfg.window_ticks(1)?;
        Ok(cfg)
    }

    pub fn window_ticks(&self, ticks_per_second: u32) -> Result<u64, ScheduleError> {
        if self.k < 2 {
            return Err(ScheduleError::KTooSmall("prb.k", self.k));
        }
        let w = (self.v as u64 * ticks_per_second as u64) / self.k as u64;
        if w == 0 {
            return Err(ScheduleError::EmptyWindow {
                k: self.k,
                v: self.v,
            });
        }
        Ok(w)
    }
}

/// Index of the process owning tick `t`: the `i`-th sub-window of each
/// stage belongs to process `i`.
pub fn active_gp(t: Tick, k: usize, w: u64) -> usize {
    window_of(t, k, w).1
}

/// Softmax weights `e^{mu_i} / sum_j e^{mu_j}`, computed after subtracting
/// the maximum so large profit totals cannot overflow.
pub fn softmax_weights(mu: &[f64]) -> Vec<f64> {
    let max = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = mu.iter().map(|m| (m - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Draws `count` distinct indices without replacement, each round picking
/// proportionally to the remaining weights.
pub fn draw_without_replacement<R: Rng>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut chosen = Vec::with_capacity(count);
    for _ in 0..count.min(weights.len()) {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (pos, &i) in remaining.iter().enumerate() {
            r -= weights[i];
            if r <= 0.0 {
                pick = pos;
                break;
            }
        }
        chosen.push(remaining.remove(pick));
    }
    chosen.sort_unstable();
    chosen
}

/// One Gaussian process of the ensemble with its memory age bookkeeping.
#[derive(Clone, Debug)]
pub struct GpMember {
    /// Unique id within the owning ensemble, for tracking identity across
    /// stage turnovers.
    pub id: u64,
    pub obs: GpObservations,
    pub created_stage: u64,
    pub fills_at_creation: u64,
    cached_grid: Option<PosteriorGrid>,
}

impl GpMember {
    fn new(id: u64, cap: usize, created_stage: u64, fills_at_creation: u64) -> GpMember {
        GpMember {
            id,
            obs: GpObservations::new(cap),
            created_stage,
            fills_at_creation,
            cached_grid: None,
        }
    }

    /// Stages survived so far.
    pub fn age(&self, current_stage: u64) -> u64 {
        current_stage - self.created_stage
    }
}

/// The `k`-process ensemble with per-stage reward and quote accumulators.
#[derive(Clone, Debug)]
pub struct GpEnsemble {
    pub k: usize,
    noise: f64,
    cap: usize,
    pub members: Vec<GpMember>,
    reward: Vec<f64>,
    quotes: Vec<u64>,
    pub stage: u64,
    fills_seen: u64,
    next_id: u64,
    invariant_violations: u64,
}

impl GpEnsemble {
    pub fn new(k: usize, noise: f64, cap: usize) -> GpEnsemble {
        let cap = cap.max(1);
        GpEnsemble {
            k,
            noise,
            cap,
            members: (0..k as u64).map(|i| GpMember::new(i, cap, 0, 0)).collect(),
            reward: vec![0.0; k],
            quotes: vec![0; k],
            stage: 0,
            fills_seen: 0,
            next_id: k as u64,
            invariant_violations: 0,
        }
    }

    /// Samples a strategy from the active process at temperature `tau` and
    /// counts the quote against it. Returns the strategy and the active
    /// process index for later reward attribution.
    pub fn choose_strategy<R: Rng>(
        &mut self,
        t: Tick,
        w: u64,
        tau: f64,
        rng: &mut R,
    ) -> Result<(f64, usize), GpError> {
        let i = active_gp(t, self.k, w);
        let noise = self.noise;
        let member = &mut self.members[i];
        if member.cached_grid.is_none() {
            member.cached_grid = Some(posterior_grid(&member.obs, noise)?);
        }
        let s = acquire(member.cached_grid.as_ref().expect("just filled"), tau, rng);
        self.quotes[i] += 1;
        Ok((s, i))
    }

    /// Books an executed fill: the (strategy, pps) observation goes to
    /// every process; the profit is credited to the process that quoted,
    /// unless its stage has already been retired.
    pub fn observe_fill(
        &mut self,
        s: f64,
        profit: i64,
        pps: f64,
        quote_stage: u64,
        quote_gp: usize,
    ) {
        for member in &mut self.members {
            member.obs.push(s, pps);
            member.cached_grid = None;
        }
        self.fills_seen += 1;
        if quote_stage == self.stage && quote_gp < self.k {
            self.reward[quote_gp] += profit as f64;
        }
        self.check_observation_counts();
    }

    /// Mean reward per quote for each process this stage; zero when the
    /// process never quoted.
    pub fn stage_means(&self) -> Vec<f64> {
        (0..self.k)
            .map(|i| {
                if self.quotes[i] == 0 {
                    0.0
                } else {
                    self.reward[i] / self.quotes[i] as f64
                }
            })
            .collect()
    }

    /// Stage turnover: keep `k - 1` processes drawn by Softmax weight over
    /// the stage means, discard the remaining one, append a fresh empty
    /// process, and zero the accumulators.
    pub fn stage_end<R: Rng>(&mut self, rng: &mut R) {
        let weights = softmax_weights(&self.stage_means());
        let survivors = draw_without_replacement(&weights, self.k - 1, rng);
        let mut kept = Vec::with_capacity(self.k);
        for idx in survivors {
            kept.push(self.members[idx].clone());
        }
        self.stage += 1;
        kept.push(GpMember::new(
            self.next_id,
            self.cap,
            self.stage,
            self.fills_seen,
        ));
        self.next_id += 1;
        self.members = kept;
        self.reward = vec![0.0; self.k];
        self.quotes = vec![0; self.k];
        self.check_structure();
    }

    /// Count of structural invariant breaches observed so far (size,
    /// single fresh member, per-process observation counts).
    pub fn invariant_violations(&self) -> u64 {
        self.invariant_violations
    }

    /// Test hook: overwrite the stage accumulators.
    pub fn force_stage_totals(&mut self, reward: Vec<f64>, quotes: Vec<u64>) {
        assert_eq!(reward.len(), self.k);
        assert_eq!(quotes.len(), self.k);
        self.reward = reward;
        self.quotes = quotes;
    }

    fn check_structure(&mut self) {
        if self.members.len() != self.k {
            self.invariant_violations += 1;
        }
        let fresh = self
            .members
            .iter()
            .filter(|m| m.created_stage == self.stage)
            .count();
        if fresh != 1 {
            self.invariant_violations += 1;
        }
    }

    fn check_observation_counts(&mut self) {
        for member in &self.members {
            let expected = (self.fills_seen - member.fills_at_creation).min(self.cap as u64);
            if member.obs.len() as u64 != expected {
                self.invariant_violations += 1;
            }
        }
    }
}

/// A bandit-over-bandit trader's adaptive state inside a session.
#[derive(Clone, Debug)]
pub struct PrbTrader {
    pub cfg: PrbConfig,
    w: u64,
    total_ticks: u64,
    pub ensemble: GpEnsemble,
}

impl PrbTrader {
    pub fn new(
        cfg: PrbConfig,
        ticks_per_second: u32,
        total_ticks: u64,
        noise: f64,
        cap: usize,
    ) -> Result<PrbTrader, ScheduleError> {
        let w = cfg.window_ticks(ticks_per_second)?;
        Ok(PrbTrader {
            cfg,
            w,
            total_ticks,
            ensemble: GpEnsemble::new(cfg.k, noise, cap),
        })
    }

    pub fn window(&self) -> u64 {
        self.w
    }

    /// Linear explore-to-exploit temperature decay over the session.
    pub fn tau(&self, t: Tick) -> f64 {
        (1.0 - t as f64 / self.total_ticks as f64).clamp(0.0, 1.0)
    }

    /// Runs any stage turnover crossed at tick `t`.
    pub fn on_tick<R: Rng>(&mut self, t: Tick, rng: &mut R) {
        let (stage, _) = window_of(t, self.cfg.k, self.w);
        while self.ensemble.stage < stage {
            self.ensemble.stage_end(rng);
        }
    }

    /// Samples the quote strategy for tick `t`.
    pub fn quote_strategy<R: Rng>(
        &mut self,
        t: Tick,
        rng: &mut R,
    ) -> Result<(f64, u64, usize), GpError> {
        let tau = self.tau(t);
        let stage = self.ensemble.stage;
        let (s, gp) = self.ensemble.choose_strategy(t, self.w, tau, rng)?;
        Ok((s, stage, gp))
    }

    pub fn record_fill(&mut self, s: f64, profit: i64, pps: f64, stage: u64, gp: usize) {
        self.ensemble.observe_fill(s, profit, pps, stage, gp);
    }
}
