use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest total moment order supported by the engines.
pub const MAX_ORDER: usize = 4;

/// Maximum total order `K` of a moment computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Order {
    Third,
    Fourth,
}

impl Order {
    pub const BOTH: [Order; 2] = [Order::Third, Order::Fourth];

    pub fn get(self) -> usize {
        match self {
            Order::Third => 3,
            Order::Fourth => 4,
        }
    }

    /// Number of 3D moments with `p + q + r <= K`.
    pub fn tensor_len(self) -> usize {
        let k = self.get();
        (k + 1) * (k + 2) * (k + 3) / 6
    }
}

impl TryFrom<u32> for Order {
    type Error = Error;

    fn try_from(k: u32) -> Result<Self> {
        match k {
            3 => Ok(Order::Third),
            4 => Ok(Order::Fourth),
            other => Err(Error::UnsupportedOrder(other)),
        }
    }
}

impl From<Order> for u32 {
    fn from(o: Order) -> u32 {
        o.get() as u32
    }
}

impl FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k: u32 = s.trim().parse().map_err(|_| Error::UnsupportedOrder(0))?;
        Order::try_from(k)
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.get())
    }
}
