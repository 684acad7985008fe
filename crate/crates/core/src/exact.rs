//! Checked 128-bit integer arithmetic with operation tallies.

use crate::error::{Error, Result};
use crate::ops::Counter;

/// Wraps a counter; every method checks for overflow and records itself.
pub(crate) struct Exact<'a, C: Counter> {
    counter: &'a mut C,
    context: &'static str,
}

impl<'a, C: Counter> Exact<'a, C> {
    pub(crate) fn new(counter: &'a mut C, context: &'static str) -> Self {
        Exact { counter, context }
    }

    fn overflow(&self) -> Error {
        Error::Overflow(self.context.to_string())
    }

    #[inline]
    pub(crate) fn mul(&mut self, a: i128, b: i128) -> Result<i128> {
        self.counter.mul(1);
        a.checked_mul(b).ok_or_else(|| self.overflow())
    }

    #[inline]
    pub(crate) fn add(&mut self, a: i128, b: i128) -> Result<i128> {
        self.counter.add(1);
        a.checked_add(b).ok_or_else(|| self.overflow())
    }

    #[inline]
    pub(crate) fn sub(&mut self, a: i128, b: i128) -> Result<i128> {
        self.counter.add(1);
        a.checked_sub(b).ok_or_else(|| self.overflow())
    }

    /// Division that must leave no remainder; a remainder means the inputs
    /// were not produced by a consistent integer image.
    pub(crate) fn div_exact(&mut self, a: i128, b: i128, what: &str) -> Result<i128> {
        if a % b != 0 {
            return Err(Error::Inconsistent(format!(
                "{what}: {a} is not divisible by {b}"
            )));
        }
        Ok(a / b)
    }

    /// `sum(terms[i] * coeffs[i])`.
    pub(crate) fn dot(&mut self, terms: &[(i128, i128)]) -> Result<i128> {
        let mut acc = 0i128;
        for &(c, t) in terms {
            let p = if c == 1 {
                t
            } else if c == -1 {
                -t
            } else {
                self.mul(c, t)?
            };
            acc = self.add(acc, p)?;
        }
        Ok(acc)
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> i128 {
    const TABLE: [[i128; 5]; 5] = [
        [1, 0, 0, 0, 0],
        [1, 1, 0, 0, 0],
        [1, 2, 1, 0, 0],
        [1, 3, 3, 1, 0],
        [1, 4, 6, 4, 1],
    ];
    TABLE[n][k]
}
