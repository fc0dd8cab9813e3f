//! Continuous double auction market simulator with adaptive
//! strategy-learning traders.
//!
//! The crate is organized around a price-time-priority [`lob`], a seeded
//! market [`session`] populated by the fixed [`traders`] and the two
//! adaptive learners — the [`prsh`] stochastic hillclimber and the [`prb`]
//! Gaussian-process ensemble, both quoting through the parameterised
//! [`przi`] price mapping — plus a [`stats`] toolkit and the experiment
//! [`harness`] that runs hyperparameter sweeps and the head-to-head
//! comparison.

pub mod gp;
pub mod harness;
pub mod lob;
pub mod prb;
pub mod prsh;
pub mod przi;
pub mod session;
pub mod stats;
pub mod traders;

pub use harness::{
    derive_seed, run_comparison, run_prb_sweep, run_prsh_sweep, ComparisonReport, ExperimentConfig,
    HarnessError, PopulationCounts, SweepReport,
};
pub use lob::{LobSnapshot, Order, OrderBook, Price, Side, Tick, Trade, TraderId};
pub use prb::{GpEnsemble, PrbConfig, PrbTrader};
pub use prsh::{MutationKind, PrshConfig, PrshTrader};
pub use session::{
    run_session, CustomerAssignment, MarketDynamic, Session, SessionConfig, SessionResult,
    TraderAlgo,
};
pub use stats::{SampleSet, TestReport};
pub use traders::AlgoKind;
