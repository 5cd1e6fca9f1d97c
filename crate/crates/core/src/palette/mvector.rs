//! M-vectors as a staircase: high entries first, then one partial entry,
//! then ones. Entries are computed positionally; vectors are never stored.

use num_bigint::BigInt;
use serde::Serialize;

use crate::error::{Error, Result};

/// The M-vector of colour `colour` at `level`: length `t`, entries in
/// `[c_prev − 1]`, entry sum `target`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MVectorSpec {
    pub level: usize,
    pub colour: u64,
    pub t: u128,
    pub c_prev: u64,
    pub target: u128,
}

impl MVectorSpec {
    pub fn new(level: usize, colour: u64, t: u128, c_prev: u64, target: u128) -> Result<Self> {
        let top = (c_prev as u128).saturating_sub(1).max(1);
        if c_prev < 2 || target < t || target > t * top {
            return Err(Error::Invariant(format!(
                "M-vector target {target} outside [{t}, {}] at level {level}",
                t * top
            )));
        }
        Ok(MVectorSpec { level, colour, t, c_prev, target })
    }

    fn staircase(&self) -> (u128, u128) {
        let step = (self.c_prev - 2) as u128;
        if step == 0 {
            return (0, 0);
        }
        let excess = self.target - self.t;
        (excess / step, excess % step)
    }

    /// Entry `k ∈ [t]`.
    pub fn entry(&self, k: u128) -> Result<u64> {
        if k == 0 || k > self.t {
            return Err(Error::OutOfRange(format!("M-vector position {k} not in 1..={}", self.t)));
        }
        Ok(self.entry_unchecked(k))
    }

    pub(crate) fn entry_unchecked(&self, k: u128) -> u64 {
        let (q, rem) = self.staircase();
        if k <= q {
            self.c_prev - 1
        } else if k == q + 1 {
            1 + rem as u64
        } else {
            1
        }
    }

    /// `Σ_k w(M_k)` in O(1) calls to `w`.
    pub fn weighted_sum(&self, w: impl Fn(u64) -> BigInt) -> BigInt {
        let (q, rem) = self.staircase();
        if self.c_prev == 2 {
            return w(1) * BigInt::from(self.t);
        }
        let mut total = w(self.c_prev - 1) * BigInt::from(q);
        let mut rest = self.t - q;
        if rest > 0 {
            total += w(1 + rem as u64);
            rest -= 1;
        }
        total + w(1) * BigInt::from(rest)
    }
}

/// Entry `k` of the M-vector described by `spec`.
pub fn m_entry(spec: &MVectorSpec, k: u128) -> Result<u64> {
    spec.entry(k)
}
