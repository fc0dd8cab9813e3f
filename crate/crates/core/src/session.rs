//! Session clock, customer order generation under the two market dynamics,
//! trader population wiring, and profit accounting.
//!
//! A session is a deterministic function of its configuration, dynamic and
//! seed: one seeded RNG drives arrivals, assignments, polling order and
//! every trader's draws in tick order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp;
use crate::lob::{Order, OrderBook, Price, Side, Tick, Trade, TraderId};
use crate::prb::{PrbConfig, PrbTrader};
use crate::prsh::{PrshConfig, PrshTrader, ScheduleError};
use crate::przi::{pps_of_fill, przi_quote};
use crate::traders::{
    gvwy_quote, shvr_quote, snpr_quote, zic_quote, AlgoKind, MarketEvent, ZipParams, ZipState,
    DEFAULT_SNPR_WINDOW,
};

/// The two supply/demand regimes. `noise_enabled = false` freezes the
/// Gaussian perturbation of the range bounds (test hook).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketDynamic {
    pub kind: DynamicKind,
    pub noise_enabled: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicKind {
    Trend,
    Trendless,
}

impl MarketDynamic {
    pub fn trend() -> MarketDynamic {
        MarketDynamic {
            kind: DynamicKind::Trend,
            noise_enabled: true,
        }
    }

    pub fn trendless() -> MarketDynamic {
        MarketDynamic {
            kind: DynamicKind::Trendless,
            noise_enabled: true,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            DynamicKind::Trend => "trend",
            DynamicKind::Trendless => "trendless",
        }
    }
}

impl std::str::FromStr for MarketDynamic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trend" => Ok(MarketDynamic::trend()),
            "trendless" => Ok(MarketDynamic::trendless()),
            other => Err(format!(
                "unknown dynamic `{other}` (expected trend or trendless)"
            )),
        }
    }
}

/// Instantaneous supply/demand range at time `t` seconds. The trending
/// market drifts both bounds at 0.1 pennies per second with N(0, 5) noise;
/// the trendless market holds them fixed with N(0, 20) noise. Each bound
/// gets its own independent draw; bounds are rounded, clamped to the system
/// grid and forced into `low < high`.
pub fn range_at<R: Rng>(dynamic: &MarketDynamic, t: f64, rng: &mut R) -> (Price, Price) {
    let (base_lo, base_hi, sigma) = match dynamic.kind {
        DynamicKind::Trend => (0.1 * t + 100.0, 0.1 * t + 300.0, 5.0),
        DynamicKind::Trendless => (100.0, 300.0, 20.0),
    };
    let (noise_lo, noise_hi) = if dynamic.noise_enabled {
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        (normal.sample(rng), normal.sample(rng))
    } else {
        (0.0, 0.0)
    };
    let mut lo = Price::clamped((base_lo + noise_lo).round() as i64);
    let mut hi = Price::clamped((base_hi + noise_hi).round() as i64);
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    if lo == hi {
        if hi < Price::MAX {
            hi = hi.up();
        } else {
            lo = lo.down();
        }
    }
    (lo, hi)
}

/// Exponential inter-arrival time with mean `1 / lambda` seconds.
pub fn next_arrival_interval<R: Rng>(rng: &mut R, lambda: f64) -> f64 {
    Exp::new(lambda).expect("lambda > 0").sample(rng)
}

/// Profit split of one trade: the buyer earns its limit minus the price,
/// the seller the price minus its limit.
pub fn trade_profit(price: Price, buyer_limit: Price, seller_limit: Price) -> (i64, i64) {
    let buyer = buyer_limit.pennies() as i64 - price.pennies() as i64;
    let seller = price.pennies() as i64 - seller_limit.pennies() as i64;
    (buyer, seller)
}

/// A customer limit order handed to a trader.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerAssignment {
    pub trader_id: TraderId,
    pub side: Side,
    pub limit_price: Price,
    pub issue_time: Tick,
}

/// Per-trader algorithm selection, carrying the learner hyperparameters
/// where applicable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TraderAlgo {
    Gvwy,
    Zic,
    Shvr,
    Snpr,
    Zip,
    Prsh(PrshConfig),
    Prb(PrbConfig),
}

impl TraderAlgo {
    pub fn kind(&self) -> AlgoKind {
        match self {
            TraderAlgo::Gvwy => AlgoKind::Gvwy,
            TraderAlgo::Zic => AlgoKind::Zic,
            TraderAlgo::Shvr => AlgoKind::Shvr,
            TraderAlgo::Snpr => AlgoKind::Snpr,
            TraderAlgo::Zip => AlgoKind::Zip,
            TraderAlgo::Prsh(_) => AlgoKind::Prsh,
            TraderAlgo::Prb(_) => AlgoKind::Prb,
        }
    }
}

/// Session configuration. A session is reproducible from this struct, the
/// dynamic and the seed alone.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Session length in seconds.
    pub duration_s: u32,
    pub ticks_per_second: u32,
    /// Expected customer orders per second.
    pub lambda: f64,
    pub traders: Vec<(Side, TraderAlgo)>,
    pub seed: u64,
    pub snpr_window: f64,
    pub zip: ZipParams,
    pub gp_noise: f64,
    pub gp_cap: usize,
}

impl SessionConfig {
    pub fn new(duration_s: u32, lambda: f64, traders: Vec<(Side, TraderAlgo)>, seed: u64) -> Self {
        SessionConfig {
            duration_s,
            ticks_per_second: 1,
            lambda,
            traders,
            seed,
            snpr_window: DEFAULT_SNPR_WINDOW,
            zip: ZipParams::default(),
            gp_noise: gp::DEFAULT_NOISE,
            gp_cap: gp::DEFAULT_CAP,
        }
    }

    pub fn total_ticks(&self) -> u64 {
        self.duration_s as u64 * self.ticks_per_second as u64
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session duration must be positive")]
    ZeroDuration,
    #[error("arrival rate lambda must be positive, got {0}")]
    InvalidArrivalRate(f64),
    #[error("trader {index}: {source}")]
    BadTraderConfig {
        index: usize,
        #[source]
        source: ScheduleError,
    },
}

/// Report line for one trader.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraderReport {
    pub id: u32,
    pub algo: AlgoKind,
    pub side: Side,
    pub profit: i64,
    pub fills: u32,
}

/// One executed fill with the profit context needed to audit it.
#[derive(Clone, Copy, Debug)]
pub struct FillRecord {
    pub trade: Trade,
    pub buyer_limit: Price,
    pub seller_limit: Price,
    pub buyer_profit: i64,
    pub seller_profit: i64,
    pub buyer_algo: AlgoKind,
    pub seller_algo: AlgoKind,
}

/// Session outcome. The JSON form carries seed, dynamic, per-trader rows
/// and per-algorithm means; the trade tape and audit records stay in-memory
/// (the tape has its own CSV dump).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionResult {
    pub seed: u64,
    pub dynamic: String,
    pub per_trader: Vec<TraderReport>,
    pub per_algo_mean: BTreeMap<String, f64>,
    #[serde(skip)]
    pub trades: Vec<Trade>,
    #[serde(skip)]
    pub fills: Vec<FillRecord>,
    #[serde(skip)]
    pub prb_invariant_violations: u64,
}

impl SessionResult {
    pub fn mean_profit_of(&self, algo: AlgoKind) -> Option<f64> {
        self.per_algo_mean.get(algo.label()).copied()
    }
}

enum Logic {
    Gvwy,
    Zic,
    Shvr,
    Snpr,
    Zip(ZipState),
    Prsh(PrshTrader),
    Prb(PrbTrader),
}

struct Assignment {
    limit: Price,
}

/// Attribution of a live quote for pps accounting: the strategy value that
/// produced it, when, and which stage/slot (or process) it belongs to.
#[derive(Clone, Copy)]
struct QuoteMeta {
    s: f64,
    quote_tick: Tick,
    stage: u64,
    index: usize,
}

struct TraderState {
    id: TraderId,
    side: Side,
    kind: AlgoKind,
    logic: Logic,
    assignment: Option<Assignment>,
    quote_meta: Option<QuoteMeta>,
    profit: i64,
    fills: u32,
}

/// A running market session. [`run_session`] is the one-shot entry point;
/// the struct itself is exposed so tests and tools can script assignments
/// and step the clock by hand.
pub struct Session {
    cfg: SessionConfig,
    dynamic: MarketDynamic,
    rng: ChaCha8Rng,
    book: OrderBook,
    traders: Vec<TraderState>,
    buyers: Vec<usize>,
    sellers: Vec<usize>,
    next_side: Side,
    next_arrival: f64,
    tape: Vec<Trade>,
    fills: Vec<FillRecord>,
    total_ticks: u64,
}

impl Session {
    /// Builds a session. `lambda = 0` disables stochastic arrivals so
    /// assignments can be scripted through [`Session::inject_assignment`].
    pub fn new(cfg: SessionConfig, dynamic: MarketDynamic) -> Result<Session, SessionError> {
        if cfg.duration_s == 0 || cfg.ticks_per_second == 0 {
            return Err(SessionError::ZeroDuration);
        }
        if cfg.lambda < 0.0 || !cfg.lambda.is_finite() {
            return Err(SessionError::InvalidArrivalRate(cfg.lambda));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let total_ticks = cfg.total_ticks();

        let mut traders = Vec::with_capacity(cfg.traders.len());
        let mut buyers = Vec::new();
        let mut sellers = Vec::new();
        for (index, &(side, algo)) in cfg.traders.iter().enumerate() {
            let logic = match algo {
                TraderAlgo::Gvwy => Logic::Gvwy,
                TraderAlgo::Zic => Logic::Zic,
                TraderAlgo::Shvr => Logic::Shvr,
                TraderAlgo::Snpr => Logic::Snpr,
                TraderAlgo::Zip => Logic::Zip(ZipState::new_random(side, &cfg.zip, &mut rng)),
                TraderAlgo::Prsh(prsh_cfg) => Logic::Prsh(
                    PrshTrader::new(prsh_cfg, cfg.ticks_per_second, &mut rng)
                        .map_err(|source| SessionError::BadTraderConfig { index, source })?,
                ),
                TraderAlgo::Prb(prb_cfg) => Logic::Prb(
                    PrbTrader::new(
                        prb_cfg,
                        cfg.ticks_per_second,
                        total_ticks,
                        cfg.gp_noise,
                        cfg.gp_cap,
                    )
                    .map_err(|source| SessionError::BadTraderConfig { index, source })?,
                ),
            };
            match side {
                Side::Bid => buyers.push(index),
                Side::Ask => sellers.push(index),
            }
            traders.push(TraderState {
                id: TraderId(index as u32),
                side,
                kind: algo.kind(),
                logic,
                assignment: None,
                quote_meta: None,
                profit: 0,
                fills: 0,
            });
        }

        let next_arrival = if cfg.lambda > 0.0 {
            next_arrival_interval(&mut rng, cfg.lambda)
        } else {
            f64::INFINITY
        };

        Ok(Session {
            cfg,
            dynamic,
            rng,
            book: OrderBook::new(),
            traders,
            buyers,
            sellers,
            next_side: Side::Bid,
            next_arrival,
            tape: Vec::new(),
            fills: Vec::new(),
            total_ticks,
        })
    }

    /// Draws the next customer order at time `t` seconds: sides alternate
    /// buy, sell, buy, ...; the trader is uniform on that side; the limit
    /// price is uniform on the instantaneous range. Returns `None` when the
    /// chosen side has no traders.
    pub fn next_customer_assignment(
        &mut self,
        t: f64,
        issue_tick: Tick,
    ) -> Option<CustomerAssignment> {
        let side = self.next_side;
        self.next_side = side.opposite();
        let pool = match side {
            Side::Bid => &self.buyers,
            Side::Ask => &self.sellers,
        };
        if pool.is_empty() {
            return None;
        }
        let trader_index = pool[self.rng.random_range(0..pool.len())];
        let (lo, hi) = range_at(&self.dynamic, t, &mut self.rng);
        let limit = Price::new(self.rng.random_range(lo.pennies()..=hi.pennies()))
            .expect("range stays inside system bounds");
        Some(CustomerAssignment {
            trader_id: TraderId(trader_index as u32),
            side,
            limit_price: limit,
            issue_time: issue_tick,
        })
    }

    /// Hands a customer order to its trader, discarding any unfilled prior
    /// assignment and pulling the trader's stale quote off the book.
    pub fn inject_assignment(&mut self, assignment: CustomerAssignment) {
        let idx = assignment.trader_id.0 as usize;
        self.book.cancel(assignment.trader_id);
        let trader = &mut self.traders[idx];
        trader.assignment = Some(Assignment {
            limit: assignment.limit_price,
        });
        trader.quote_meta = None;
    }

    /// Runs the full session clock and returns the result.
    pub fn run(mut self) -> SessionResult {
        for t in 0..self.total_ticks {
            self.step(t);
        }
        self.finish()
    }

    /// One tick: stage turnovers, due arrivals, then one shuffled quote
    /// poll over every trader holding an assignment.
    pub fn step(&mut self, t: Tick) {
        for trader in &mut self.traders {
            match &mut trader.logic {
                Logic::Prsh(p) => p.on_tick(t, &mut self.rng),
                Logic::Prb(p) => p.on_tick(t, &mut self.rng),
                _ => {}
            }
        }

        let dt = 1.0 / self.cfg.ticks_per_second as f64;
        while self.next_arrival < (t + 1) as f64 * dt {
            let at = self.next_arrival;
            if let Some(assignment) = self.next_customer_assignment(at, t) {
                self.inject_assignment(assignment);
            }
            self.next_arrival = at + next_arrival_interval(&mut self.rng, self.cfg.lambda);
        }

        let mut order: Vec<usize> = (0..self.traders.len())
            .filter(|&i| self.traders[i].assignment.is_some())
            .collect();
        order.shuffle(&mut self.rng);
        for idx in order {
            if self.traders[idx].assignment.is_none() {
                continue; // filled earlier in this tick
            }
            if let Some((price, meta)) = self.compute_quote(idx, t) {
                self.submit(idx, price, meta, t);
            }
        }
    }

    /// Finalizes accounting and builds the result.
    pub fn finish(self) -> SessionResult {
        let mut per_algo: BTreeMap<String, (f64, u32)> = BTreeMap::new();
        let per_trader: Vec<TraderReport> = self
            .traders
            .iter()
            .map(|tr| {
                let entry = per_algo
                    .entry(tr.kind.label().to_string())
                    .or_insert((0.0, 0));
                entry.0 += tr.profit as f64;
                entry.1 += 1;
                TraderReport {
                    id: tr.id.0,
                    algo: tr.kind,
                    side: tr.side,
                    profit: tr.profit,
                    fills: tr.fills,
                }
            })
            .collect();
        let per_algo_mean = per_algo
            .into_iter()
            .map(|(k, (sum, count))| (k, sum / count as f64))
            .collect();
        let prb_invariant_violations = self
            .traders
            .iter()
            .map(|tr| match &tr.logic {
                Logic::Prb(p) => p.ensemble.invariant_violations(),
                _ => 0,
            })
            .sum();
        SessionResult {
            seed: self.cfg.seed,
            dynamic: self.dynamic.label().to_string(),
            per_trader,
            per_algo_mean,
            trades: self.tape,
            fills: self.fills,
            prb_invariant_violations,
        }
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    fn compute_quote(&mut self, idx: usize, t: Tick) -> Option<(Price, Option<QuoteMeta>)> {
        let snapshot = self.book.snapshot();
        let trader = &mut self.traders[idx];
        let limit = trader.assignment.as_ref().expect("caller checked").limit;
        let side = trader.side;
        match &mut trader.logic {
            Logic::Gvwy => Some((gvwy_quote(limit, side), None)),
            Logic::Zic => Some((zic_quote(limit, side, &mut self.rng), None)),
            Logic::Shvr => Some((shvr_quote(limit, side, &snapshot), None)),
            Logic::Snpr => snpr_quote(
                limit,
                side,
                &snapshot,
                t,
                self.total_ticks,
                self.cfg.snpr_window,
            )
            .map(|p| (p, None)),
            Logic::Zip(zip) => Some((zip.quote(limit, side), None)),
            Logic::Prsh(prsh) => {
                let (s, stage, slot) = prsh.strategy_at(t);
                let price = przi_quote(s, limit, side, &snapshot, &mut self.rng);
                Some((
                    price,
                    Some(QuoteMeta {
                        s,
                        quote_tick: t,
                        stage,
                        index: slot,
                    }),
                ))
            }
            Logic::Prb(prb) => {
                let (s, stage, gp_index) = prb
                    .quote_strategy(t, &mut self.rng)
                    .expect("finite observations keep the posterior solvable");
                let price = przi_quote(s, limit, side, &snapshot, &mut self.rng);
                Some((
                    price,
                    Some(QuoteMeta {
                        s,
                        quote_tick: t,
                        stage,
                        index: gp_index,
                    }),
                ))
            }
        }
    }

    fn submit(&mut self, idx: usize, price: Price, meta: Option<QuoteMeta>, t: Tick) {
        self.traders[idx].quote_meta = meta;
        let order = Order {
            trader: self.traders[idx].id,
            side: self.traders[idx].side,
            price,
            time: t,
        };
        let outcome = self
            .book
            .submit_and_match(order)
            .expect("quote rules stay inside system bounds");
        match outcome {
            Some(trade) => {
                let buyer_idx = trade.buyer.0 as usize;
                let seller_idx = trade.seller.0 as usize;
                let buyer_limit = self.traders[buyer_idx]
                    .assignment
                    .as_ref()
                    .expect("resting orders imply live assignments")
                    .limit;
                let seller_limit = self.traders[seller_idx]
                    .assignment
                    .as_ref()
                    .expect("resting orders imply live assignments")
                    .limit;
                let (buyer_profit, seller_profit) =
                    trade_profit(trade.price, buyer_limit, seller_limit);
                self.credit(buyer_idx, buyer_profit, t);
                self.credit(seller_idx, seller_profit, t);
                self.fills.push(FillRecord {
                    trade,
                    buyer_limit,
                    seller_limit,
                    buyer_profit,
                    seller_profit,
                    buyer_algo: self.traders[buyer_idx].kind,
                    seller_algo: self.traders[seller_idx].kind,
                });
                self.tape.push(trade);
                self.broadcast(MarketEvent::Trade { price: trade.price });
            }
            None => {
                self.broadcast(MarketEvent::Quote {
                    price,
                    side: self.traders[idx].side,
                });
            }
        }
    }

    fn credit(&mut self, idx: usize, profit: i64, fill_tick: Tick) {
        let trader = &mut self.traders[idx];
        trader.profit += profit;
        trader.fills += 1;
        trader.assignment = None;
        if let Some(meta) = trader.quote_meta.take() {
            let pps = pps_of_fill(
                profit,
                meta.quote_tick,
                fill_tick,
                self.cfg.ticks_per_second,
            );
            match &mut trader.logic {
                Logic::Prsh(p) => p.record_fill(meta.stage, meta.index, profit, pps),
                Logic::Prb(p) => p.record_fill(meta.s, profit, pps, meta.stage, meta.index),
                _ => {}
            }
        }
    }

    /// Notifies every ZIP trader holding an assignment of a market event.
    fn broadcast(&mut self, event: MarketEvent) {
        for trader in &mut self.traders {
            if let Logic::Zip(zip) = &mut trader.logic {
                if let Some(assignment) = &trader.assignment {
                    zip.update(assignment.limit, trader.side, &event, &mut self.rng);
                }
            }
        }
    }
}

/// Runs one session end to end. Requires a positive arrival rate; use
/// [`Session`] directly for scripted setups.
pub fn run_session(
    cfg: &SessionConfig,
    dynamic: MarketDynamic,
) -> Result<SessionResult, SessionError> {
    if cfg.lambda <= 0.0 {
        return Err(SessionError::InvalidArrivalRate(cfg.lambda));
    }
    Ok(Session::new(cfg.clone(), dynamic)?.run())
}
