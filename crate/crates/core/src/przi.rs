//! Parameterised quote generation: a single scalar strategy `s` in [-1, 1]
//! interpolates between quoting the own limit (`s = +1`), a uniform random
//! loss-free price (`s = 0`), and the passive extreme of the admissible
//! interval (`s = -1`). Also holds the profit-per-second payoff accounting
//! shared by the adaptive traders.

use rand::Rng;

use crate::lob::{LobSnapshot, Price, Side, Tick};

/// Cap applied to the shape exponent at `s = +1`, where the tangent blows up.
pub const SHAPE_CAP: f64 = 1e6;

/// Clamps a strategy value to [-1, 1].
pub fn clamp_strategy(s: f64) -> f64 {
    s.clamp(-1.0, 1.0)
}

/// Shape exponent `gamma = tan(pi * (1 + s) / 4)`, capped at [`SHAPE_CAP`].
///
/// `gamma = 0` at `s = -1`, `1` at `s = 0`, and grows without bound toward
/// `s = +1`; drawing `u^gamma` then skews quotes from the passive extreme
/// through uniform to the own limit.
pub fn shape_exponent(s: f64) -> f64 {
    let s = clamp_strategy(s);
    let gamma = (std::f64::consts::PI * (1.0 + s) / 4.0).tan();
    if gamma.is_finite() && gamma < SHAPE_CAP {
        gamma.max(0.0)
    } else {
        SHAPE_CAP
    }
}

/// Draws a quote for strategy `s`. Sellers draw from `[limit, worst_ask]`
/// (system max when the ask side is empty), buyers from
/// `[worst_bid, limit]`; the interval endpoints keep every quote loss-free.
pub fn przi_quote<R: Rng>(
    s: f64,
    limit: Price,
    side: Side,
    lob: &LobSnapshot,
    rng: &mut R,
) -> Price {
    let gamma = shape_exponent(s);
    let (lo, hi) = match side {
        Side::Ask => (limit, lob.worst_ask.unwrap_or(Price::MAX).max(limit)),
        Side::Bid => (lob.worst_bid.unwrap_or(Price::MIN).min(limit), limit),
    };
    if lo == hi {
        return lo;
    }
    // Degenerate anchors are exact: the tail of u^gamma near u = 1 would
    // otherwise let a capped exponent occasionally leak off the limit.
    if gamma >= SHAPE_CAP {
        return match side {
            Side::Ask => lo,
            Side::Bid => hi,
        };
    }
    if gamma == 0.0 {
        return match side {
            Side::Ask => hi,
            Side::Bid => lo,
        };
    }
    let u: f64 = rng.random();
    let x = u.powf(gamma);
    let offset = (x * (hi.pennies() - lo.pennies()) as f64).round() as i64;
    match side {
        Side::Ask => Price::clamped(lo.pennies() as i64 + offset),
        Side::Bid => Price::clamped(hi.pennies() as i64 - offset),
    }
}

/// Profit-per-second for one fill: profit divided by the time the quoting
/// strategy was live, guarded to at least one tick.
pub fn pps_of_fill(profit: i64, quote_tick: Tick, fill_tick: Tick, ticks_per_second: u32) -> f64 {
    let dt_ticks = fill_tick.saturating_sub(quote_tick).max(1);
    profit as f64 * ticks_per_second as f64 / dt_ticks as f64
}

/// One strategy value with its evaluation window and accumulated payoff.
#[derive(Clone, Debug)]
pub struct StrategySlot {
    pub s: f64,
    pub start: Tick,
    pub end: Tick,
    pub profit: i64,
    pub fills: u32,
    pps_samples: Vec<f64>,
}

impl StrategySlot {
    pub fn new(s: f64, start: Tick, end: Tick) -> StrategySlot {
        StrategySlot {
            s,
            start,
            end,
            profit: 0,
            fills: 0,
            pps_samples: Vec::new(),
        }
    }

    pub fn record_fill(&mut self, profit: i64, pps: f64) {
        self.profit += profit;
        self.fills += 1;
        self.pps_samples.push(pps);
    }

    /// Mean of the per-fill pps samples; zero for a slot with no fills.
    pub fn pps(&self) -> f64 {
        slot_pps(&self.pps_samples)
    }

    pub fn samples(&self) -> &[f64] {
        &self.pps_samples
    }
}

/// Mean of per-fill pps samples; zero when empty.
pub fn slot_pps(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        0.0
    } else {
        samples.iter().sum::<f64>() / samples.len() as f64
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
    fn shape_exponent_anchors() {
        assert!((shape_exponent(0.0) - 1.0).abs() < 1e-12);
        assert!(shape_exponent(-1.0).abs() < 1e-12);
        assert_eq!(shape_exponent(1.0), SHAPE_CAP);
    }

    #[test]
    fn seller_plus_one_always_quotes_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let lob = LobSnapshot {
            worst_ask: Some(p(200)),
            ..Default::default()
        };
        for _ in 0..10_000 {
            assert_eq!(przi_quote(1.0, p(100), Side::Ask, &lob, &mut rng), p(100));
        }
    }

    #[test]
    fn seller_minus_one_always_quotes_passive_extreme() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lob = LobSnapshot {
            worst_ask: Some(p(200)),
            ..Default::default()
        };
        for _ in 0..10_000 {
            assert_eq!(przi_quote(-1.0, p(100), Side::Ask, &lob, &mut rng), p(200));
        }
    }

    #[test]
    fn seller_zero_is_uniform_on_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let lob = LobSnapshot {
            worst_ask: Some(p(200)),
            ..Default::default()
        };
        let n = 10_000;
        let mut counts = [0u32; 101];
        let mut sum = 0.0;
        for _ in 0..n {
            let q = przi_quote(0.0, p(100), Side::Ask, &lob, &mut rng);
            sum += q.pennies() as f64;
            counts[(q.pennies() - 100) as usize] += 1;
        }
        let mean = sum / n as f64;
        assert!((mean - 150.0).abs() < 2.0, "mean {mean}");

        // Chi-square uniformity over 101 integer cells. The rounding of
        // u * span gives the two endpoint cells half weight, so test the
        // 99 interior cells against their common expectation.
        let interior: f64 = n as f64 * 99.0 / 100.0;
        let expected = interior / 99.0;
        let stat: f64 = counts[1..100]
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        // 99% point of chi-square with 98 degrees of freedom.
        assert!(stat < 134.64, "chi-square stat {stat}");
    }

    #[test]
    fn quotes_are_loss_free_for_all_strategies() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let lob = LobSnapshot {
            worst_ask: Some(p(400)),
            worst_bid: Some(p(20)),
            ..Default::default()
        };
        for i in 0..=40 {
            let s = -1.0 + i as f64 * 0.05;
            for _ in 0..200 {
                assert!(przi_quote(s, p(150), Side::Ask, &lob, &mut rng) >= p(150));
                assert!(przi_quote(s, p(150), Side::Bid, &lob, &mut rng) <= p(150));
            }
        }
    }

    #[test]
    fn seller_mean_quote_non_increasing_in_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let lob = LobSnapshot {
            worst_ask: Some(p(300)),
            ..Default::default()
        };
        let grid: Vec<f64> = (0..=8).map(|i| -1.0 + i as f64 * 0.25).collect();
        let means: Vec<f64> = grid
            .iter()
            .map(|&s| {
                let total: f64 = (0..1_000)
                    .map(|_| przi_quote(s, p(100), Side::Ask, &lob, &mut rng).pennies() as f64)
                    .sum();
                total / 1_000.0
            })
            .collect();
        for w in means.windows(2) {
            // Allow sampling noise of a couple of pennies.
            assert!(w[1] <= w[0] + 2.0, "means not decreasing: {means:?}");
        }
    }

    #[test]
    fn degenerate_interval_quotes_lo() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let lob = LobSnapshot {
            worst_ask: Some(p(100)),
            ..Default::default()
        };
        assert_eq!(przi_quote(0.3, p(100), Side::Ask, &lob, &mut rng), p(100));
    }

    #[test]
    fn pps_quotient_and_guards() {
        assert_eq!(pps_of_fill(50, 0, 10, 1), 5.0);
        assert_eq!(pps_of_fill(50, 7, 7, 1), 50.0);
        assert_eq!(pps_of_fill(0, 0, 3, 1), 0.0);
        // Sub-second ticks: 10 ticks at 2 ticks/s is 5 seconds.
        assert_eq!(pps_of_fill(50, 0, 10, 2), 10.0);
    }

    #[test]
    fn slot_pps_mean_and_defaults() {
        assert_eq!(slot_pps(&[2.0, 4.0]), 3.0);
        assert_eq!(slot_pps(&[]), 0.0);
        assert_eq!(slot_pps(&[7.5]), 7.5);

        let mut slot = StrategySlot::new(0.0, 0, 32);
        assert_eq!(slot.pps(), 0.0);
        slot.record_fill(20, 2.0);
        slot.record_fill(40, 4.0);
        assert_eq!(slot.pps(), 3.0);
        assert_eq!(slot.profit, 60);
        assert_eq!(slot.fills, 2);
    }

    #[test]
    fn slot_pps_order_invariant() {
        let a = [1.0, 5.0, 2.5, 0.0];
        let mut b = a;
        b.reverse();
        assert!((slot_pps(&a) - slot_pps(&b)).abs() < 1e-12);
    }
}
