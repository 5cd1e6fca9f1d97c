//! The explicit schedule `ε_n`, `K`, `p_n`, `c_n` used for the existence
//! theorem, with certified floors and the per-level growth witness.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use super::{LevelSchedule, PaletteMode};
use crate::arith::{pow2, rational_from_f64, Rational};
use crate::error::{Error, Result};

/// Terms of `Σ n^{−(1+ε_n(1−1/d))}` summed to build `K`.
pub const SERIES_TERMS: u64 = 1_000_000;
const SERIES_SAFETY: f64 = 2.0;
const BRACKET: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct ExplicitSchedule {
    pub schedule: LevelSchedule,
    /// The `K` actually used.
    pub k: BigInt,
    /// `⌈2·D·3^{D+1}·S⌉` from the truncated series.
    pub k_series: BigInt,
    /// `D·3^{dD}`, the floor that keeps `c_n^D ≤ 2^{p_n−p_{n−1}−1}`.
    pub k_floor: BigInt,
    pub series_partial_sum: f64,
    /// `ε_1, …, ε_{n_max}`
    pub eps: Vec<f64>,
}

/// `ε_n = 1/((1−1/d)·log₂log₂(n+100))`
pub fn epsilon(d: usize, n: u64) -> f64 {
    1.0 / ((1.0 - 1.0 / d as f64) * ((n as f64 + 100.0).log2()).log2())
}

/// `Σ_{n ≤ 10^6} n^{−(1+ε_n(1−1/d))}`. Independent of `d` because
/// `ε_n(1−1/d) = 1/log₂log₂(n+100)`.
pub fn series_partial_sum() -> f64 {
    static SUM: OnceLock<f64> = OnceLock::new();
    *SUM.get_or_init(|| {
        (1..=SERIES_TERMS)
            .rev()
            .map(|n| {
                let x = n as f64;
                x.powf(-(1.0 + 1.0 / (x + 100.0).log2().log2()))
            })
            .sum()
    })
}

pub fn bk_schedule(d: usize, n_max: usize) -> Result<ExplicitSchedule> {
    if !(2..=super::MAX_DIM as usize).contains(&d) {
        return Err(Error::Usage(format!("dimension must be in 2..={}, got {d}", super::MAX_DIM)));
    }
    if n_max == 0 {
        return Err(Error::Usage("n_max must be at least 1".into()));
    }
    let big_d = 1u32 << d;
    let s = series_partial_sum();
    let base = BigInt::from(big_d) * num_traits::pow(BigInt::from(3), big_d as usize + 1);
    let k_series = ceil_big(base.to_f64().unwrap_or(f64::INFINITY) * SERIES_SAFETY * s)?;
    let k_floor = BigInt::from(big_d) * num_traits::pow(BigInt::from(3), d * big_d as usize);
    let k = k_series.clone().max(k_floor.clone());

    let mut p = vec![0u32];
    let mut c: Vec<u64> = Vec::with_capacity(n_max);
    let mut eps = Vec::with_capacity(n_max);
    for n in 1..=n_max as u64 {
        let e = epsilon(d, n);
        eps.push(e);
        let f = certified_level_step(&k, d, n, e)?;
        let next = p[p.len() - 1] as u64 + 1 + f;
        if next > super::MAX_P as u64 {
            return Err(Error::Capacity(format!(
                "p_{n} = {next} exceeds {}; reduce n_max below {n}",
                super::MAX_P
            )));
        }
        p.push(next as u32);
        let c_n = if n == 1 {
            3
        } else {
            let grow = 3 * certified_root_floor(n, e / (big_d as f64 * d as f64))?;
            let prev = BigInt::from(c[c.len() - 1]) - 2;
            let cap: BigInt = BigInt::from(big_d) * num_traits::pow(prev, big_d as usize + 1) + 2;
            match cap.to_u64() {
                Some(cap) => grow.min(cap),
                None => grow,
            }
        };
        c.push(c_n);
    }
    let schedule = LevelSchedule::new(d as u32, p, c, PaletteMode::Palette)?;
    Ok(ExplicitSchedule { schedule, k, k_series, k_floor, series_partial_sum: s, eps })
}

fn ceil_big(x: f64) -> Result<BigInt> {
    if !x.is_finite() {
        return Err(Error::Capacity("K is not finite in double precision".into()));
    }
    let r = rational_from_f64(x.ceil());
    Ok(r.to_integer())
}

/// `⌊(1/d)·log₂(K·n^{1+ε})⌋`, certified by comparing `2^{d·f}` with a
/// rational bracket of `K·n^{1+ε}`.
fn certified_level_step(k: &BigInt, d: usize, n: u64, e: f64) -> Result<u64> {
    let log_k = log2_big(k);
    let estimate = (log_k + (1.0 + e) * (n as f64).log2()) / d as f64;
    let f = estimate.floor().max(0.0) as u64;
    let (lo, hi) = bracket_pow(n, e);
    let kn = Rational::from_integer(k * BigInt::from(n));
    let value_lo = &kn * lo;
    let value_hi = &kn * hi;
    let lower = Rational::from_integer(pow2((d as u64 * f) as u32));
    let upper = Rational::from_integer(pow2((d as u64 * (f + 1)) as u32));
    if lower <= value_lo && value_hi < upper {
        return Ok(f);
    }
    // The float estimate may sit one step off; re-derive from the bracket.
    for cand in [f.saturating_sub(1), f + 1] {
        let lower = Rational::from_integer(pow2((d as u64 * cand) as u32));
        let upper = Rational::from_integer(pow2((d as u64 * (cand + 1)) as u32));
        if lower <= value_lo && value_hi < upper {
            return Ok(cand);
        }
    }
    Err(Error::Invariant(format!("could not certify ⌊log₂(K·n^(1+ε))/d⌋ at n = {n}")))
}

/// Rational bracket around `n^ε`.
fn bracket_pow(n: u64, e: f64) -> (Rational, Rational) {
    if n == 1 {
        return (Rational::one(), Rational::one());
    }
    let v = (n as f64).powf(e);
    (rational_from_f64(v * (1.0 - BRACKET)), rational_from_f64(v * (1.0 + BRACKET)))
}

/// `⌊n^x⌋`, refusing values too close to an integer to decide in floating point.
fn certified_root_floor(n: u64, x: f64) -> Result<u64> {
    let v = (n as f64).powf(x);
    let f = v.floor();
    if v - f < BRACKET * v.max(1.0) * 16.0 && n > 1 && f >= 1.0 && (v - f) != 0.0 {
        return Err(Error::Invariant(format!("⌊{n}^{x}⌋ is too close to an integer to certify")));
    }
    Ok(f as u64)
}

fn log2_big(k: &BigInt) -> f64 {
    let bits = k.bits();
    if bits <= 1000 {
        return k.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 60;
    (k >> shift as usize).to_f64().unwrap().log2() + shift as f64
}

/// One level of the growth witness `2^{p_n−p_{n−2}} ≤ 4K^{2/d}n^q`, in log₂ form.
#[derive(Clone, Debug, Serialize)]
pub struct WitnessEntry {
    pub n: usize,
    pub q: f64,
    pub lhs_log2: f64,
    pub rhs_log2: f64,
    pub holds: bool,
    /// Set when `p_{n−2} ≤ 3`, where the inequality is not claimed.
    pub skipped: bool,
}

impl ExplicitSchedule {
    /// Growth witness with `q = 1.01·2(1+ε_{n−1})/d`.
    pub fn asymptotic_witness(&self) -> Vec<WitnessEntry> {
        let d = self.schedule.d() as f64;
        self.witness_with(|eps_prev| 1.01 * 2.0 * (1.0 + eps_prev) / d)
    }

    /// Growth witness for a caller-chosen `q(ε_{n−1})`.
    pub fn witness_with(&self, q_of: impl Fn(f64) -> f64) -> Vec<WitnessEntry> {
        let s = &self.schedule;
        let d = s.d() as f64;
        let log_k = log2_big(&self.k);
        (2..=s.n_max())
            .map(|n| {
                let q = q_of(self.eps[n - 2]);
                let lhs = (s.p(n) - s.p(n - 2)) as f64;
                let rhs = 2.0 + (2.0 / d) * log_k + q * (n as f64).log2();
                let skipped = s.p(n - 2) <= 3 || q <= 2.0 * (1.0 + self.eps[n - 2]) / d;
                WitnessEntry { n, q, lhs_log2: lhs, rhs_log2: rhs, holds: lhs <= rhs, skipped }
            })
            .collect()
    }

    /// `c_n ≥ 3`, and `c_n ≥ c_{n−1}` except where the capped branch is taken.
    pub fn c_profile_ok(&self) -> bool {
        let s = &self.schedule;
        let big_d = s.big_d() as usize;
        (1..=s.n_max()).all(|n| {
            if s.c(n) < 3 {
                return false;
            }
            if n == 1 {
                return true;
            }
            let cap = BigInt::from(s.big_d()) * num_traits::pow(BigInt::from(s.c(n - 1) - 2), big_d + 1) + 2;
            s.c(n) >= s.c(n - 1) || BigInt::from(s.c(n)) == cap
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_is_in_unit_interval() {
        for d in 2..=4 {
            for n in [1u64, 2, 10, 1000] {
                let e = epsilon(d, n);
                assert!(e > 0.0 && e < 1.0, "ε_{n} = {e} at d = {d}");
            }
        }
    }

    #[test]
    fn d2_schedule_values() {
        let bk = bk_schedule(2, 6).unwrap();
        assert_eq!(bk.k, BigInt::from(26244));
        assert_eq!(bk.schedule.p_values(), &[0, 8, 17, 26, 36, 46, 56]);
        assert!(bk.schedule.c_values().iter().all(|&c| c == 3));
        assert!(bk.schedule.validate().passed());
        assert!(bk.c_profile_ok());
    }

    #[test]
    fn level_step_floor_is_exact() {
        // K = 16: ⌊log₂(16)/2⌋ = 2 exactly at n = 1
        assert_eq!(certified_level_step(&BigInt::from(16), 2, 1, 0.5).unwrap(), 2);
        assert_eq!(certified_level_step(&BigInt::from(15), 2, 1, 0.5).unwrap(), 1);
    }

    #[test]
    fn series_sum_is_stable() {
        let s = series_partial_sum();
        assert!((s - 3.744464640814).abs() < 1e-9, "{s}");
    }
}
