//! k-point stochastic hillclimber over the strategy scalar. The session is
//! cut into stages of `k * W` ticks; each stage evaluates `k` strategies in
//! consecutive windows of `W` ticks, then seeds the next stage by mutating
//! the strategy with the best mean profit-per-second.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::Tick;
use crate::przi::{clamp_strategy, StrategySlot};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("{0} must have k >= 2, got {1}")]
    KTooSmall(&'static str, usize),
    #[error("window floor(v/k) vanished for k={k}, v={v}: each strategy needs at least one tick")]
    EmptyWindow { k: usize, v: u32 },
}

/// Mutation rule generating the next stage's strategy set around the
/// incumbent best.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MutationKind {
    /// Gaussian offsets, sigma = 0.05.
    M1,
    /// Gaussian offsets, sigma = 0.15.
    M2,
    /// Alternating uniform offsets in (0, 0.1], half up and half down.
    M3,
}

impl MutationKind {
    pub fn label(self) -> &'static str {
        match self {
            MutationKind::M1 => "m1",
            MutationKind::M2 => "m2",
            MutationKind::M3 => "m3",
        }
    }
}

impl std::fmt::Display for MutationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for MutationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m1" => Ok(MutationKind::M1),
            "m2" => Ok(MutationKind::M2),
            "m3" => Ok(MutationKind::M3),
            other => Err(format!(
                "unknown mutation function `{other}` (expected m1, m2 or m3)"
            )),
        }
    }
}

/// Hillclimber hyperparameters: `k` strategies per stage, strategy wait
/// time `v` seconds, and the mutation rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrshConfig {
    pub k: usize,
    pub v: u32,
    pub mutation: MutationKind,
    /// Keep the incumbent as the first element of each new strategy set.
    pub elitism: bool,
}

impl PrshConfig {
    pub fn new(k: usize, v: u32, mutation: MutationKind) -> Result<PrshConfig, ScheduleError> {
        let cfg = PrshConfig {
            k,
            v,
            mutation,
            elitism: true,
        };
        cfg.window_ticks(1)?;
        Ok(cfg)
    }

    /// Per-strategy window `W = floor(v_ticks / k)`.
    pub fn window_ticks(&self, ticks_per_second: u32) -> Result<u64, ScheduleError> {
        if self.k < 2 {
            return Err(ScheduleError::KTooSmall("prsh.k", self.k));
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

/// Maps a tick to its (stage, slot) coordinates for a stage of `k` windows
/// of `w` ticks each.
pub fn window_of(t: Tick, k: usize, w: u64) -> (u64, usize) {
    let stage_len = k as u64 * w;
    let stage = t / stage_len;
    let slot = ((t % stage_len) / w) as usize;
    (stage, slot)
}

/// Number of stages covering `total_ticks`: `ceil(T / (k * W))`.
pub fn stage_count(total_ticks: u64, k: usize, w: u64) -> u64 {
    let stage_len = k as u64 * w;
    total_ticks.div_ceil(stage_len)
}

/// Generates the stage's strategy set around `s0`: the incumbent first when
/// elitism is on, then mutants per the rule, everything clamped to [-1, 1].
pub fn mutate<R: Rng>(s0: f64, k: usize, m: MutationKind, elitism: bool, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    if elitism {
        out.push(clamp_strategy(s0));
    }
    let mut alternator = 0usize;
    while out.len() < k {
        let s = match m {
            MutationKind::M1 => s0 + sample_normal(0.05, rng),
            MutationKind::M2 => s0 + sample_normal(0.15, rng),
            MutationKind::M3 => {
                let offset = rng.random_range(0.0..=0.1);
                let s = if alternator.is_multiple_of(2) {
                    s0 + offset
                } else {
                    s0 - offset
                };
                alternator += 1;
                s
            }
        };
        out.push(clamp_strategy(s));
    }
    out
}

fn sample_normal<R: Rng>(sigma: f64, rng: &mut R) -> f64 {
    Normal::new(0.0, sigma).expect("valid sigma").sample(rng)
}

/// One stage of the hillclimber: the strategy set and the payoff slot for
/// each of its windows.
#[derive(Clone, Debug)]
pub struct StageState {
    pub stage: u64,
    pub strategies: Vec<f64>,
    pub slots: Vec<StrategySlot>,
}

impl StageState {
    pub fn new(stage: u64, strategies: Vec<f64>, w: u64) -> StageState {
        let stage_start = stage * strategies.len() as u64 * w;
        let slots = strategies
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let start = stage_start + i as u64 * w;
                StrategySlot::new(s, start, start + w)
            })
            .collect();
        StageState {
            stage,
            strategies,
            slots,
        }
    }

    /// Index of the slot with the highest mean pps; ties go to the lowest
    /// index.
    pub fn best_slot(&self) -> usize {
        let mut best = 0;
        for (i, slot) in self.slots.iter().enumerate() {
            if slot.pps() > self.slots[best].pps() {
                best = i;
            }
        }
        best
    }
}

/// Closes a stage and opens the next: the best slot's strategy seeds a
/// fresh mutated set.
pub fn advance_stage<R: Rng>(
    stage: &StageState,
    m: MutationKind,
    elitism: bool,
    w: u64,
    rng: &mut R,
) -> StageState {
    let s_best = stage.strategies[stage.best_slot()];
    let k = stage.strategies.len();
    StageState::new(stage.stage + 1, mutate(s_best, k, m, elitism, rng), w)
}

/// A hillclimbing trader's adaptive state inside a session.
#[derive(Clone, Debug)]
pub struct PrshTrader {
    pub cfg: PrshConfig,
    w: u64,
    pub state: StageState,
}

impl PrshTrader {
    /// Starts from a uniform random incumbent; the first stage already
    /// evaluates mutants of it.
    pub fn new<R: Rng>(
        cfg: PrshConfig,
        ticks_per_second: u32,
        rng: &mut R,
    ) -> Result<PrshTrader, ScheduleError> {
        let w = cfg.window_ticks(ticks_per_second)?;
        let s0 = rng.random_range(-1.0..=1.0);
        let strategies = mutate(s0, cfg.k, cfg.mutation, cfg.elitism, rng);
        Ok(PrshTrader {
            cfg,
            w,
            state: StageState::new(0, strategies, w),
        })
    }

    pub fn window(&self) -> u64 {
        self.w
    }

    /// Advances through any stage boundary crossed at tick `t`.
    pub fn on_tick<R: Rng>(&mut self, t: Tick, rng: &mut R) {
        let (stage, _) = window_of(t, self.cfg.k, self.w);
        while self.state.stage < stage {
            self.state = advance_stage(
                &self.state,
                self.cfg.mutation,
                self.cfg.elitism,
                self.w,
                rng,
            );
        }
    }

    /// The strategy active at tick `t` plus its (stage, slot) coordinates.
    pub fn strategy_at(&self, t: Tick) -> (f64, u64, usize) {
        let (stage, slot) = window_of(t, self.cfg.k, self.w);
        debug_assert_eq!(stage, self.state.stage);
        (self.state.strategies[slot], stage, slot)
    }

    /// Books a fill against the slot that quoted it. Fills whose quote
    /// belongs to an already-closed stage are dropped from pps accounting.
    pub fn record_fill(&mut self, stage: u64, slot: usize, profit: i64, pps: f64) {
        if stage == self.state.stage && slot < self.state.slots.len() {
            self.state.slots[slot].record_fill(profit, pps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn window_arithmetic() {
        let cfg = PrshConfig::new(4, 128, MutationKind::M1).unwrap();
        assert_eq!(cfg.window_ticks(1).unwrap(), 32);
        assert_eq!(stage_count(1000, 4, 32), 8);
    }

    #[test]
    fn window_of_boundaries() {
        let (k, w) = (4, 32);
        assert_eq!(window_of(0, k, w), (0, 0));
        assert_eq!(window_of(k as u64 * w - 1, k, w), (0, k - 1));
        assert_eq!(window_of(k as u64 * w, k, w), (1, 0));
    }

    #[test]
    fn mutate_keeps_k_and_incumbent() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for m in [MutationKind::M1, MutationKind::M2, MutationKind::M3] {
            let set = mutate(0.3, 6, m, true, &mut rng);
            assert_eq!(set.len(), 6);
            assert_eq!(set[0], 0.3);
            assert!(set.iter().all(|s| (-1.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn mutate_m3_splits_up_and_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let set = mutate(0.0, 8, MutationKind::M3, true, &mut rng);
        let up = set[1..].iter().filter(|&&s| s >= 0.0).count();
        let down = set[1..].iter().filter(|&&s| s <= 0.0).count();
        assert!(set[1..].iter().all(|s| s.abs() <= 0.1));
        assert!(up >= 3 && down >= 3, "up {up} down {down}");

        // Without elitism the mutants split exactly in half.
        let set = mutate(0.0, 8, MutationKind::M3, false, &mut rng);
        assert_eq!(set.iter().filter(|&&s| s >= 0.0).count(), 4);
    }

    #[test]
    fn mutate_clamps_at_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let set = mutate(1.0, 4, MutationKind::M2, true, &mut rng);
            assert!(set.iter().all(|&s| s <= 1.0));
        }
    }

    #[test]
    fn mutate_m1_offset_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut offsets = Vec::with_capacity(10_000);
        while offsets.len() < 10_000 {
            for s in mutate(0.0, 2, MutationKind::M1, false, &mut rng) {
                offsets.push(s);
            }
        }
        let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
        let var =
            offsets.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / offsets.len() as f64;
        let std = var.sqrt();
        assert!((std - 0.05).abs() < 0.002, "std {std}");
    }

    #[test]
    fn advance_picks_argmax_with_low_index_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let mut stage = StageState::new(0, vec![-0.5, 0.5], 32);
        stage.slots[0].record_fill(10, 1.0);
        stage.slots[1].record_fill(30, 3.0);
        assert_eq!(stage.best_slot(), 1);
        let next = advance_stage(&stage, MutationKind::M1, true, 32, &mut rng);
        assert_eq!(next.stage, 1);
        assert_eq!(next.strategies[0], 0.5, "elitism keeps the winner");

        let mut tied = StageState::new(0, vec![-0.5, 0.5], 32);
        tied.slots[0].record_fill(20, 2.0);
        tied.slots[1].record_fill(20, 2.0);
        assert_eq!(tied.best_slot(), 0);

        let idle = StageState::new(0, vec![-0.5, 0.5], 32);
        assert_eq!(idle.best_slot(), 0, "all-zero pps keeps the first strategy");
    }

    #[test]
    fn argmax_invariant_under_affine_rescale() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..200 {
            let pps: Vec<f64> = (0..5).map(|_| rng.random_range(-4.0..4.0)).collect();
            let a = rng.random_range(0.1..10.0);
            let b = rng.random_range(-5.0..5.0);
            let argmax = |v: &[f64]| {
                let mut best = 0;
                for i in 0..v.len() {
                    if v[i] > v[best] {
                        best = i;
                    }
                }
                best
            };
            let scaled: Vec<f64> = pps.iter().map(|x| a * x + b).collect();
            assert_eq!(argmax(&pps), argmax(&scaled));
        }
    }

    #[test]
    fn trader_walks_stage_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let cfg = PrshConfig::new(2, 8, MutationKind::M3).unwrap();
        let mut trader = PrshTrader::new(cfg, 1, &mut rng).unwrap();
        assert_eq!(trader.window(), 4);
        trader.on_tick(0, &mut rng);
        let (_, stage, slot) = trader.strategy_at(0);
        assert_eq!((stage, slot), (0, 0));
        trader.on_tick(8, &mut rng);
        let (_, stage, slot) = trader.strategy_at(8);
        assert_eq!((stage, slot), (1, 0));
    }

    #[test]
    fn stale_stage_fill_is_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let cfg = PrshConfig::new(2, 8, MutationKind::M1).unwrap();
        let mut trader = PrshTrader::new(cfg, 1, &mut rng).unwrap();
        trader.on_tick(8, &mut rng);
        trader.record_fill(0, 1, 50, 5.0);
        assert!(trader.state.slots.iter().all(|s| s.fills == 0));
    }

    #[test]
    fn config_validation() {
        assert!(PrshConfig::new(1, 32, MutationKind::M1).is_err());
        assert!(PrshConfig::new(64, 32, MutationKind::M1).is_err());
        assert!(PrshConfig::new(4, 128, MutationKind::M3).is_ok());
    }
}
