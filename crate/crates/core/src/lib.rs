//! Static limit order book equilibrium with N informed traders.

pub mod asymptotics;
pub mod book;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod numerics;
pub mod sameprice;
pub mod signals;

pub use error::{Error, Result};
