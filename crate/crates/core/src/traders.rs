//! The five fixed-strategy trading algorithms: GVWY, ZIC, SHVR, SNPR, ZIP.
//!
//! Each quote rule is loss-free by construction: a buyer never quotes above
//! its limit and a seller never below it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lob::{LobSnapshot, Price, Side, Tick};

/// Fraction of the session during which SNPR lurks before acting.
pub const DEFAULT_SNPR_WINDOW: f64 = 0.05;

/// Algorithm labels used in configuration and results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AlgoKind {
    #[serde(rename = "GVWY")]
    Gvwy,
    #[serde(rename = "ZIC")]
    Zic,
    #[serde(rename = "SHVR")]
    Shvr,
    #[serde(rename = "SNPR")]
    Snpr,
    #[serde(rename = "ZIP")]
    Zip,
    #[serde(rename = "PRSH")]
    Prsh,
    #[serde(rename = "PRB")]
    Prb,
}

impl AlgoKind {
    pub fn label(self) -> &'static str {
        match self {
            AlgoKind::Gvwy => "GVWY",
            AlgoKind::Zic => "ZIC",
            AlgoKind::Shvr => "SHVR",
            AlgoKind::Snpr => "SNPR",
            AlgoKind::Zip => "ZIP",
            AlgoKind::Prsh => "PRSH",
            AlgoKind::Prb => "PRB",
        }
    }
}

impl std::fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// GVWY quotes its limit price, always.
pub fn gvwy_quote(limit: Price, _side: Side) -> Price {
    limit
}

/// ZIC quotes a uniform random price constrained to be loss-free:
/// buyers in `[system_min, limit]`, sellers in `[limit, system_max]`.
pub fn zic_quote<R: Rng>(limit: Price, side: Side, rng: &mut R) -> Price {
    let p = match side {
        Side::Bid => rng.random_range(Price::MIN.pennies()..=limit.pennies()),
        Side::Ask => rng.random_range(limit.pennies()..=Price::MAX.pennies()),
    };
    Price::new(p).expect("range stays inside system bounds")
}

/// SHVR shaves a penny off the best price on its own side, capped at its
/// limit. With an empty side it quotes its own side's passive extreme.
pub fn shvr_quote(limit: Price, side: Side, lob: &LobSnapshot) -> Price {
    match side {
        Side::Bid => match lob.best_bid {
            Some(bid) => bid.up().min(limit),
            None => Price::MIN,
        },
        Side::Ask => match lob.best_ask {
            Some(ask) => ask.down().max(limit),
            None => Price::MAX,
        },
    }
}

/// SNPR lurks until the closing window of the session, then crosses the
/// spread whenever that is loss-free; otherwise it declines to quote.
pub fn snpr_quote(
    limit: Price,
    side: Side,
    lob: &LobSnapshot,
    t: Tick,
    total_ticks: Tick,
    window: f64,
) -> Option<Price> {
    if (t as f64) < (1.0 - window) * total_ticks as f64 {
        return None;
    }
    match side {
        Side::Bid => lob.best_ask.filter(|&ask| ask <= limit),
        Side::Ask => lob.best_bid.filter(|&bid| bid >= limit),
    }
}

/// Per-trader ZIP parameter ranges; the learning constants are drawn once
/// per trader from these intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipParams {
    pub beta_min: f64,
    pub beta_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Upper bound of the absolute target perturbation, in pennies.
    pub ca: f64,
    /// Upper bound of the relative target perturbation.
    pub cr: f64,
}

impl Default for ZipParams {
    fn default() -> Self {
        ZipParams {
            beta_min: 0.1,
            beta_max: 0.5,
            gamma_min: 0.0,
            gamma_max: 0.1,
            ca: 5.0,
            cr: 0.05,
        }
    }
}

/// A market event broadcast to adaptive traders: either an executed trade or
/// a new resting quote on `side`.
#[derive(Clone, Copy, Debug)]
pub enum MarketEvent {
    Trade { price: Price },
    Quote { price: Price, side: Side },
}

/// ZIP learner state: a profit margin adapted with a Widrow-Hoff rule with
/// momentum. Sellers keep margin >= 0, buyers <= 0, so quotes never cross
/// the trader's own limit.
#[derive(Clone, Debug)]
pub struct ZipState {
    pub margin: f64,
    pub beta: f64,
    pub gamma: f64,
    momentum: f64,
    ca: f64,
    cr: f64,
}

impl ZipState {
    pub fn new(margin: f64, beta: f64, gamma: f64) -> ZipState {
        ZipState {
            margin,
            beta,
            gamma,
            momentum: 0.0,
            ca: ZipParams::default().ca,
            cr: ZipParams::default().cr,
        }
    }

    /// Draws per-trader constants. Initial margins start away from zero so
    /// early quotes are not immediately marketable.
    pub fn new_random<R: Rng>(side: Side, params: &ZipParams, rng: &mut R) -> ZipState {
        let magnitude = rng.random_range(0.05..0.35);
        let margin = match side {
            Side::Ask => magnitude,
            Side::Bid => -magnitude,
        };
        ZipState {
            margin,
            beta: rng.random_range(params.beta_min..=params.beta_max),
            gamma: rng.random_range(params.gamma_min..=params.gamma_max),
            momentum: 0.0,
            ca: params.ca,
            cr: params.cr,
        }
    }

    /// Quote price for the current margin: `round(limit * (1 + margin))`.
    pub fn quote(&self, limit: Price, side: Side) -> Price {
        let raw = (limit.pennies() as f64 * (1.0 + self.margin)).round() as i64;
        let p = Price::clamped(raw);
        match side {
            Side::Ask => p.max(limit),
            Side::Bid => p.min(limit),
        }
    }

    /// One Widrow-Hoff step of the quote price toward `target`, then margin
    /// recovery and sign clamping.
    pub fn step_toward(&mut self, limit: Price, side: Side, target: f64) {
        let price = limit.pennies() as f64 * (1.0 + self.margin);
        let delta = self.beta * (target - price);
        self.momentum = self.gamma * self.momentum + (1.0 - self.gamma) * delta;
        let moved = price + self.momentum;
        self.margin = moved / limit.pennies() as f64 - 1.0;
        match side {
            Side::Ask => self.margin = self.margin.max(0.0),
            Side::Bid => self.margin = self.margin.min(0.0),
        }
    }

    /// Applies the ZIP heuristic for one market event. Sellers raise their
    /// margin after trades at or above their own quote and cut it when a
    /// trade or competing ask undercuts them; buyers mirror.
    pub fn update<R: Rng>(&mut self, limit: Price, side: Side, event: &MarketEvent, rng: &mut R) {
        let own = self.quote(limit, side).pennies() as f64;
        let target = match (side, event) {
            (Side::Ask, MarketEvent::Trade { price }) => {
                let q = price.pennies() as f64;
                if own <= q {
                    Some(self.target_up(q, rng))
                } else {
                    Some(self.target_down(q, rng))
                }
            }
            (
                Side::Ask,
                MarketEvent::Quote {
                    price,
                    side: Side::Ask,
                },
            ) => {
                let q = price.pennies() as f64;
                (own > q).then(|| self.target_down(q, rng))
            }
            (Side::Bid, MarketEvent::Trade { price }) => {
                let q = price.pennies() as f64;
                if own >= q {
                    Some(self.target_down(q, rng))
                } else {
                    Some(self.target_up(q, rng))
                }
            }
            (
                Side::Bid,
                MarketEvent::Quote {
                    price,
                    side: Side::Bid,
                },
            ) => {
                let q = price.pennies() as f64;
                (own < q).then(|| self.target_up(q, rng))
            }
            _ => None,
        };
        if let Some(target) = target {
            self.step_toward(limit, side, target);
        }
    }

    fn target_up<R: Rng>(&self, q: f64, rng: &mut R) -> f64 {
        q * (1.0 + rng.random_range(0.0..self.cr)) + rng.random_range(0.0..self.ca)
    }

    fn target_down<R: Rng>(&self, q: f64, rng: &mut R) -> f64 {
        q * (1.0 - rng.random_range(0.0..self.cr)) - rng.random_range(0.0..self.ca)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(v: u32) -> Price {
        Price::new(v).unwrap()
    }

    #[test]
    fn gvwy_quotes_its_limit() {
        assert_eq!(gvwy_quote(p(150), Side::Bid), p(150));
        assert_eq!(gvwy_quote(p(150), Side::Ask), p(150));
    }

    #[test]
    fn zic_never_quotes_through_its_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1_000 {
            assert!(zic_quote(p(150), Side::Bid, &mut rng) <= p(150));
            assert!(zic_quote(p(150), Side::Ask, &mut rng) >= p(150));
        }
    }

    #[test]
    fn zic_buyer_mean_matches_uniform_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let sum: f64 = (0..n)
            .map(|_| zic_quote(p(150), Side::Bid, &mut rng).pennies() as f64)
            .sum();
        let mean = sum / n as f64;
        let expected = (1.0 + 150.0) / 2.0;
        assert!((mean - expected).abs() < 2.0, "mean {mean} vs {expected}");
    }

    #[test]
    fn shvr_shaves_a_penny() {
        let lob = LobSnapshot {
            best_bid: Some(p(120)),
            ..Default::default()
        };
        assert_eq!(shvr_quote(p(150), Side::Bid, &lob), p(121));

        let capped = LobSnapshot {
            best_bid: Some(p(150)),
            ..Default::default()
        };
        assert_eq!(shvr_quote(p(150), Side::Bid, &capped), p(150));
    }

    #[test]
    fn shvr_empty_book_fallback() {
        let empty = LobSnapshot::default();
        assert_eq!(shvr_quote(p(140), Side::Ask, &empty), Price::MAX);
        assert_eq!(shvr_quote(p(140), Side::Bid, &empty), Price::MIN);
    }

    #[test]
    fn snpr_lurks_until_the_close() {
        let lob = LobSnapshot {
            best_ask: Some(p(140)),
            ..Default::default()
        };
        let w = DEFAULT_SNPR_WINDOW;
        assert_eq!(snpr_quote(p(150), Side::Bid, &lob, 500, 1000, w), None);
        assert_eq!(
            snpr_quote(p(150), Side::Bid, &lob, 970, 1000, w),
            Some(p(140))
        );
    }

    #[test]
    fn snpr_never_crosses_at_a_loss() {
        let lob = LobSnapshot {
            best_ask: Some(p(160)),
            ..Default::default()
        };
        assert_eq!(
            snpr_quote(p(150), Side::Bid, &lob, 970, 1000, DEFAULT_SNPR_WINDOW),
            None
        );
    }

    #[test]
    fn zip_quote_formula() {
        let state = ZipState::new(0.2, 0.3, 0.0);
        assert_eq!(state.quote(p(100), Side::Ask), p(120));
    }

    #[test]
    fn zip_single_delta_step() {
        // beta=0.5, gamma=0, quote 120, target 110: delta = 0.5*(110-120) = -5.
        let mut state = ZipState::new(0.2, 0.5, 0.0);
        state.step_toward(p(100), Side::Ask, 110.0);
        assert_eq!(state.quote(p(100), Side::Ask), p(115));
    }

    #[test]
    fn zip_buyer_margin_stays_non_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ZipParams::default();
        let mut state = ZipState::new_random(Side::Bid, &params, &mut rng);
        let limit = p(200);
        for _ in 0..10_000 {
            let price = p(rng.random_range(50..400).min(1000));
            let event = if rng.random::<f64>() < 0.5 {
                MarketEvent::Trade { price }
            } else {
                MarketEvent::Quote {
                    price,
                    side: if rng.random::<f64>() < 0.5 {
                        Side::Bid
                    } else {
                        Side::Ask
                    },
                }
            };
            state.update(limit, Side::Bid, &event, &mut rng);
            assert!(state.margin <= 0.0);
            assert!(state.quote(limit, Side::Bid) <= limit);
        }
    }

    #[test]
    fn zip_seller_margin_stays_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = ZipParams::default();
        let mut state = ZipState::new_random(Side::Ask, &params, &mut rng);
        let limit = p(100);
        for _ in 0..10_000 {
            let price = p(rng.random_range(50..400).min(1000));
            state.update(limit, Side::Ask, &MarketEvent::Trade { price }, &mut rng);
            assert!(state.margin >= 0.0);
            assert!(state.quote(limit, Side::Ask) >= limit);
        }
    }
}
