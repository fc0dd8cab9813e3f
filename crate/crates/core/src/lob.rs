//! Price-time-priority limit order book for a continuous double auction.
//!
//! All orders are unit quantity and each trader may hold at most one resting
//! order; submitting a new quote replaces the old one before matching. A
//! crossing order executes at the resting order's price.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tick index within a session.
pub type Tick = u64;

/// Integer price in pennies, bounded to the system price grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(u32);

impl Price {
    /// Lowest admissible price on the grid.
    pub const MIN: Price = Price(1);
    /// Highest admissible price on the grid.
    pub const MAX: Price = Price(1000);

    /// Builds a price if `pennies` falls inside the system bounds.
    pub fn new(pennies: u32) -> Option<Price> {
        if (Self::MIN.0..=Self::MAX.0).contains(&pennies) {
            Some(Price(pennies))
        } else {
            None
        }
    }

    /// Builds a price, clamping to the system bounds.
    pub fn clamped(pennies: i64) -> Price {
        Price(pennies.clamp(Self::MIN.0 as i64, Self::MAX.0 as i64) as u32)
    }

    pub fn pennies(self) -> u32 {
        self.0
    }

    /// One penny up, saturating at the system maximum.
    pub fn up(self) -> Price {
        Price((self.0 + 1).min(Self::MAX.0))
    }

    /// One penny down, saturating at the system minimum.
    pub fn down(self) -> Price {
        Price((self.0 - 1).max(Self::MIN.0))
    }
}

impl std::fmt::Display for Price {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Order side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

/// Identifier of a trader within one session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraderId(pub u32);

/// A unit-quantity limit order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Order {
    pub trader: TraderId,
    pub side: Side,
    pub price: Price,
    pub time: Tick,
}

/// An executed fill. The price is always the resting order's price.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub price: Price,
    pub buyer: TraderId,
    pub seller: TraderId,
    pub time: Tick,
}

/// Best/worst prices and depth per side, taken without mutating the book.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LobSnapshot {
    pub best_bid: Option<Price>,
    pub best_ask: Option<Price>,
    pub worst_bid: Option<Price>,
    pub worst_ask: Option<Price>,
    pub bid_depth: usize,
    pub ask_depth: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LobError {
    #[error("order price {0} outside system bounds [{min}, {max}]", min = Price::MIN, max = Price::MAX)]
    PriceOutOfBounds(u32),
}

/// The order book. Bids iterate in descending price, asks ascending; FIFO
/// within a price level.
#[derive(Clone, Debug, Default)]
pub struct OrderBook {
    bids: BTreeMap<Price, VecDeque<Order>>,
    asks: BTreeMap<Price, VecDeque<Order>>,
    resting: HashMap<TraderId, (Side, Price)>,
}

impl OrderBook {
    pub fn new() -> OrderBook {
        OrderBook::default()
    }

    /// Submits an order: removes any prior resting order of the same trader,
    /// then either matches against the opposing best (trade at the resting
    /// price) or rests on the book.
    pub fn submit_and_match(&mut self, order: Order) -> Result<Option<Trade>, LobError> {
        if Price::new(order.price.pennies()).is_none() {
            return Err(LobError::PriceOutOfBounds(order.price.pennies()));
        }
        self.cancel(order.trader);

        let crossed = match order.side {
            Side::Bid => self.best_ask().filter(|&ask| order.price >= ask),
            Side::Ask => self.best_bid().filter(|&bid| order.price <= bid),
        };

        if let Some(level) = crossed {
            let resting = self.pop_front(order.side.opposite(), level);
            let trade = match order.side {
                Side::Bid => Trade {
                    price: resting.price,
                    buyer: order.trader,
                    seller: resting.trader,
                    time: order.time,
                },
                Side::Ask => Trade {
                    price: resting.price,
                    buyer: resting.trader,
                    seller: order.trader,
                    time: order.time,
                },
            };
            Ok(Some(trade))
        } else {
            self.levels_mut(order.side)
                .entry(order.price)
                .or_default()
                .push_back(order);
            self.resting.insert(order.trader, (order.side, order.price));
            Ok(None)
        }
    }

    /// Removes the trader's resting order if present.
    pub fn cancel(&mut self, trader: TraderId) -> bool {
        let Some((side, price)) = self.resting.remove(&trader) else {
            return false;
        };
        let levels = self.levels_mut(side);
        if let Some(queue) = levels.get_mut(&price) {
            queue.retain(|o| o.trader != trader);
            if queue.is_empty() {
                levels.remove(&price);
            }
        }
        true
    }

    pub fn snapshot(&self) -> LobSnapshot {
        LobSnapshot {
            best_bid: self.best_bid(),
            best_ask: self.best_ask(),
            worst_bid: self.bids.keys().next().copied(),
            worst_ask: self.asks.keys().next_back().copied(),
            bid_depth: self.bids.values().map(VecDeque::len).sum(),
            ask_depth: self.asks.values().map(VecDeque::len).sum(),
        }
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    /// Resting bids in descending price order, FIFO within a level.
    pub fn bids(&self) -> impl Iterator<Item = &Order> {
        self.bids.values().rev().flatten()
    }

    /// Resting asks in ascending price order, FIFO within a level.
    pub fn asks(&self) -> impl Iterator<Item = &Order> {
        self.asks.values().flatten()
    }

    fn levels_mut(&mut self, side: Side) -> &mut BTreeMap<Price, VecDeque<Order>> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    fn pop_front(&mut self, side: Side, price: Price) -> Order {
        let levels = self.levels_mut(side);
        let queue = levels.get_mut(&price).expect("level exists");
        let order = queue.pop_front().expect("level non-empty");
        if queue.is_empty() {
            levels.remove(&price);
        }
        self.resting.remove(&order.trader);
        order
    }
}

/// Dumps a trade tape as CSV with columns `time,price,buyer_id,seller_id`.
pub fn write_tape_csv<W: Write>(trades: &[Trade], mut out: W) -> std::io::Result<()> {
    writeln!(out, "time,price,buyer_id,seller_id")?;
    for t in trades {
        writeln!(out, "{},{},{},{}", t.time, t.price, t.buyer.0, t.seller.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(id: u32, side: Side, price: u32, time: Tick) -> Order {
        Order {
            trader: TraderId(id),
            side,
            price: Price::clamped(price as i64),
            time,
        }
    }

    #[test]
    fn crossing_bid_trades_at_resting_ask_price() {
        // Three-order book: asks at 120 and 130, bid at 100.
        let mut book = OrderBook::new();
        book.submit_and_match(order(1, Side::Ask, 120, 0)).unwrap();
        book.submit_and_match(order(2, Side::Ask, 130, 1)).unwrap();
        book.submit_and_match(order(3, Side::Bid, 100, 2)).unwrap();

        let trade = book
            .submit_and_match(order(4, Side::Bid, 125, 3))
            .unwrap()
            .expect("crosses best ask");
        assert_eq!(trade.price, Price::clamped(120));
        assert_eq!(trade.buyer, TraderId(4));
        assert_eq!(trade.seller, TraderId(1));
        // Next best ask is now 130, resting bid untouched.
        assert_eq!(book.best_ask(), Some(Price::clamped(130)));
        assert_eq!(book.best_bid(), Some(Price::clamped(100)));
    }

    #[test]
    fn non_crossing_bid_rests() {
        let mut book = OrderBook::new();
        book.submit_and_match(order(1, Side::Ask, 120, 0)).unwrap();
        let trade = book.submit_and_match(order(2, Side::Bid, 110, 1)).unwrap();
        assert!(trade.is_none());
        assert_eq!(book.best_bid(), Some(Price::clamped(110)));
        assert_eq!(book.best_ask(), Some(Price::clamped(120)));
    }

    #[test]
    fn resubmit_replaces_prior_order() {
        let mut book = OrderBook::new();
        book.submit_and_match(order(1, Side::Bid, 105, 0)).unwrap();
        book.submit_and_match(order(1, Side::Bid, 107, 1)).unwrap();
        let bids: Vec<_> = book.bids().collect();
        assert_eq!(bids.len(), 1);
        assert_eq!(bids[0].price, Price::clamped(107));
    }

    #[test]
    fn fifo_within_price_level() {
        let mut book = OrderBook::new();
        book.submit_and_match(order(1, Side::Ask, 120, 0)).unwrap();
        book.submit_and_match(order(2, Side::Ask, 120, 1)).unwrap();
        let trade = book
            .submit_and_match(order(3, Side::Bid, 120, 2))
            .unwrap()
            .unwrap();
        assert_eq!(
            trade.seller,
            TraderId(1),
            "earlier order at equal price fills first"
        );
    }

    #[test]
    fn cancel_behaviour() {
        let mut book = OrderBook::new();
        assert!(!book.cancel(TraderId(9)));

        book.submit_and_match(order(1, Side::Bid, 110, 0)).unwrap();
        book.submit_and_match(order(2, Side::Bid, 108, 1)).unwrap();
        assert!(book.cancel(TraderId(1)));
        assert_eq!(book.best_bid(), Some(Price::clamped(108)));
        // Other traders' orders unaffected.
        assert_eq!(book.bids().count(), 1);
        assert!(!book.cancel(TraderId(1)));
    }

    #[test]
    fn snapshot_fields() {
        let mut book = OrderBook::new();
        assert_eq!(book.snapshot(), LobSnapshot::default());

        book.submit_and_match(order(1, Side::Bid, 100, 0)).unwrap();
        book.submit_and_match(order(2, Side::Bid, 110, 1)).unwrap();
        book.submit_and_match(order(3, Side::Ask, 130, 2)).unwrap();
        let snap = book.snapshot();
        assert_eq!(snap.best_bid, Some(Price::clamped(110)));
        assert_eq!(snap.worst_bid, Some(Price::clamped(100)));
        assert_eq!(snap.best_ask, Some(Price::clamped(130)));
        assert_eq!(snap.worst_ask, Some(Price::clamped(130)));
        assert_eq!((snap.bid_depth, snap.ask_depth), (2, 1));
    }

    #[test]
    fn snapshot_after_full_cross_drops_traded_level() {
        // Replay: ask 130 rests, bid 130 lifts it, level must vanish.
        let mut book = OrderBook::new();
        book.submit_and_match(order(1, Side::Ask, 130, 0)).unwrap();
        book.submit_and_match(order(2, Side::Bid, 130, 1)).unwrap();
        let snap = book.snapshot();
        assert_eq!(snap.best_ask, None);
        assert_eq!(snap.ask_depth, 0);
        assert_eq!(snap.best_bid, None, "aggressor filled, never rested");
    }

    #[test]
    fn rejects_out_of_bounds_price() {
        let mut book = OrderBook::new();
        let bad = Order {
            trader: TraderId(1),
            side: Side::Bid,
            price: Price(0),
            time: 0,
        };
        assert_eq!(
            book.submit_and_match(bad),
            Err(LobError::PriceOutOfBounds(0))
        );
    }

    #[test]
    fn tape_csv_format() {
        let trades = vec![Trade {
            price: Price::clamped(120),
            buyer: TraderId(4),
            seller: TraderId(1),
            time: 3,
        }];
        let mut buf = Vec::new();
        write_tape_csv(&trades, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "time,price,buyer_id,seller_id\n3,120,4,1\n"
        );
    }
}
