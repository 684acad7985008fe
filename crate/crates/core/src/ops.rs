//! Arithmetic operation tallies for the moment engines.
//!
//! Engines are generic over [`Counter`]. Timed runs use [`NoCount`], whose
//! methods are empty and vanish after monomorphization; instrumented runs use
//! [`OpCounters`]. Counts are recorded per loop trip (e.g. once per row with
//! the row length) rather than per voxel, but they tally every inner-loop
//! multiplication and addition the engine performs.

use serde::{Deserialize, Serialize};

pub trait Counter {
    fn mul(&mut self, n: u64);
    fn add(&mut self, n: u64);
}

/// Zero-cost counter used on timed paths.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCount;

impl Counter for NoCount {
    #[inline(always)]
    fn mul(&mut self, _n: u64) {}
    #[inline(always)]
    fn add(&mut self, _n: u64) {}
}

/// Multiplication and addition tallies of one engine run.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub multiplications: u64,
    pub additions: u64,
}

impl Counter for OpCounters {
    #[inline]
    fn mul(&mut self, n: u64) {
        self.multiplications = self.multiplications.saturating_add(n);
    }
    #[inline]
    fn add(&mut self, n: u64) {
        self.additions = self.additions.saturating_add(n);
    }
}

impl std::ops::AddAssign for OpCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.mul(rhs.multiplications);
        self.add(rhs.additions);
    }
}
