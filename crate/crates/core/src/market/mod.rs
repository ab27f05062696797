//! The synthetic wholesale market and the trading-cycle engine.

mod engine;
mod prices;

pub use engine::{Lfe, PaymentLedger, SimSetup, Simulation, TradingCycle};
pub use prices::{DayPrices, PriceParams, PriceProcess, PRICE_FLOOR};
