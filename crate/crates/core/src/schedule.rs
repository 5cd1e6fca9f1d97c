//! Level schedules `(p_n)`, `(c_n)`: validation, derived per-level
//! quantities and strip blocks.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{pow2, rat, Rational};
use crate::error::{Error, Result};
use crate::geometry::{CubicSet, LatticePoint};

mod bk;
pub use bk::{bk_schedule, ExplicitSchedule, WitnessEntry};

/// Largest `p_n` accepted, so that `2^{p_n+2}` fits a signed 128-bit coordinate.
pub const MAX_P: u32 = 124;
/// Largest `d·(p_n − p_{n−1})`, so that tile counts fit in `u128`.
pub const MAX_TILE_BITS: u64 = 126;
pub const MAX_DIM: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaletteMode {
    /// Full construction: `c_1 = 3`, `c_n ≥ 3`, prefix sums `≤ 1/3`.
    Palette,
    /// Ψ machinery only; `c_n = 2` is allowed.
    Plain,
}

impl fmt::Display for PaletteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PaletteMode::Palette => "palette",
            PaletteMode::Plain => "plain",
        })
    }
}

#[derive(Deserialize)]
struct RawSchedule {
    d: u32,
    p: Vec<u32>,
    c: Vec<u64>,
    #[serde(default = "default_mode")]
    mode: PaletteMode,
}

fn default_mode() -> PaletteMode {
    PaletteMode::Palette
}

impl TryFrom<RawSchedule> for LevelSchedule {
    type Error = Error;
    fn try_from(r: RawSchedule) -> Result<Self> {
        LevelSchedule::new(r.d, r.p, r.c, r.mode)
    }
}

/// `p = (p_0, …, p_{n_max})` and `c = (c_1, …, c_{n_max})`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct LevelSchedule {
    d: u32,
    p: Vec<u32>,
    c: Vec<u64>,
    mode: PaletteMode,
}

impl LevelSchedule {
    /// Checks shape only; constraint violations are reported by [`validate`](Self::validate).
    pub fn new(d: u32, p: Vec<u32>, c: Vec<u64>, mode: PaletteMode) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&d) {
            return Err(Error::InvalidSchedule(format!("dimension must be in 2..={MAX_DIM}, got {d}")));
        }
        if c.is_empty() {
            return Err(Error::InvalidSchedule("c must list at least one level".into()));
        }
        if p.len() != c.len() + 1 {
            return Err(Error::InvalidSchedule(format!(
                "p must have n_max + 1 = {} entries (p_0 … p_n_max), got {}",
                c.len() + 1,
                p.len()
            )));
        }
        if let Some((n, &v)) = p.iter().enumerate().find(|(_, &v)| v > MAX_P) {
            return Err(Error::Capacity(format!(
                "p_{n} = {v} exceeds {MAX_P}; coordinates 2^(p_n+2) must fit 128-bit integers"
            )));
        }
        if let Some(n) = c.iter().position(|&v| v == 0) {
            return Err(Error::InvalidSchedule(format!("c_{} must be positive", n + 1)));
        }
        Ok(LevelSchedule { d, p, c, mode })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("schedule: {e}")))
    }

    /// `{"d":…,"p":[…],"c":[…],"mode":…}` with no whitespace.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serializes")
    }

    pub fn d(&self) -> usize {
        self.d as usize
    }

    /// `D = 2^d`
    pub fn big_d(&self) -> u32 {
        1 << self.d
    }

    pub fn n_max(&self) -> usize {
        self.c.len()
    }

    pub fn mode(&self) -> PaletteMode {
        self.mode
    }

    pub fn p_values(&self) -> &[u32] {
        &self.p
    }

    pub fn c_values(&self) -> &[u64] {
        &self.c
    }

    pub fn p(&self, n: usize) -> u32 {
        self.p[n]
    }

    /// `c_n`, 1-based.
    pub fn c(&self, n: usize) -> u64 {
        self.c[n - 1]
    }

    /// Side `2^{p_{n−1}}` of the colour domain `𝒬_n^d`.
    pub fn cube_side(&self, n: usize) -> i128 {
        1i128 << self.p[n - 1]
    }

    /// Side `2^{p_{n−2}}` of the level-`n` tiles.
    pub fn tile_side(&self, n: usize) -> i128 {
        1i128 << self.p[n - 2]
    }

    /// `g_n = p_{n−1} − p_{n−2}`
    pub fn gap(&self, n: usize) -> u32 {
        self.p[n - 1] - self.p[n - 2]
    }

    /// `c_n^D`, if it fits.
    pub fn c_pow_d(&self, n: usize) -> Option<u128> {
        (self.c(n) as u128).checked_pow(self.big_d())
    }

    pub fn require_level(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_max() {
            return Err(Error::OutOfRange(format!("level {n} not in 1..={}", self.n_max())));
        }
        Ok(())
    }

    /// Every constraint with its exact slack. Never fails; violations are entries.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let d = self.d as i64;
        let big_d = self.big_d();
        let mut push = |level: usize, name: &str, passed: bool, slack: String| {
            checks.push(ConstraintCheck { level, name: name.to_string(), passed, slack });
        };
        push(0, "p_0 = 0", self.p[0] == 0, format!("{}", -(self.p[0] as i64)));

        let mut prefix = Rational::zero();
        let mut prefix_failed = false;
        for n in 1..=self.n_max() {
            let gap = self.p[n] as i64 - self.p[n - 1] as i64;
            push(n, "p_n − p_{n−1} ≥ 2", gap >= 2, (gap - 2).to_string());

            let cd = num_traits::pow(BigInt::from(self.c(n)), big_d as usize);
            let room = if gap >= 1 { pow2((gap - 1) as u32) } else { BigInt::zero() };
            push(n, "c_n^D ≤ 2^{p_n−p_{n−1}−1}", cd <= room, (&room - &cd).to_string());

            let bits = d * gap.max(0);
            push(n, "d·(p_n − p_{n−1}) ≤ 126", bits as u64 <= MAX_TILE_BITS, (MAX_TILE_BITS as i64 - bits).to_string());

            match self.mode {
                PaletteMode::Plain => {
                    if n == 1 {
                        let ok = self.c(1) == 2 || self.c(1) == 3;
                        push(1, "c_1 ∈ {2, 3}", ok, format!("c_1 = {}", self.c(1)));
                    } else {
                        push(n, "c_n ≥ 2", self.c(n) >= 2, (self.c(n) as i64 - 2).to_string());
                    }
                }
                PaletteMode::Palette => {
                    if n == 1 {
                        push(1, "c_1 = 3", self.c(1) == 3, format!("c_1 = {}", self.c(1)));
                    } else {
                        push(n, "c_n ≥ 3", self.c(n) >= 3, (self.c(n) as i64 - 3).to_string());
                        let prev = BigInt::from(self.c(n - 1)) - 2;
                        let cap = BigInt::from(big_d) * num_traits::pow(prev, big_d as usize + 1) + 2;
                        let c_n = BigInt::from(self.c(n));
                        push(n, "c_n ≤ D(c_{n−1}−2)^{D+1}+2", c_n <= cap, (&cap - &c_n).to_string());
                    }
                    if gap >= 1 {
                        let e = (d * (gap - 1)) as u32;
                        prefix += Rational::new(cd.clone(), pow2(e));
                    } else {
                        prefix_failed = true;
                    }
                    let third = rat(1, 3);
                    let ok = !prefix_failed && prefix <= third;
                    let slack = if prefix_failed { "undefined".to_string() } else { (&third - &prefix).to_string() };
                    push(n, "Σ_{i≤n} c_i^D·2^{−d(p_i−p_{i−1}−1)} ≤ 1/3", ok, slack);
                }
            }
        }
        let shape_ok = checks.iter().all(|c| c.passed);
        let mut push = |level: usize, name: &str, passed: bool, slack: String| {
            checks.push(ConstraintCheck { level, name: name.to_string(), passed, slack });
        };
        if shape_ok && self.mode == PaletteMode::Palette {
            for n in 2..=self.n_max() {
                match self.derive_level_unchecked(n) {
                    Ok(lv) => {
                        // h_n (c_n − 2) ≤ (c_{n−1} − 2) 2^{d g_n}
                        let lhs = BigInt::from(lv.h) * (self.c(n) - 2);
                        let rhs = BigInt::from(self.c(n - 1) - 2) * pow2(self.d * lv.g);
                        push(n, "h_n ≤ (c_{n−1}−2)/(c_n−2)·2^{d·g_n}", lhs <= rhs, (&rhs - &lhs).to_string());
                    }
                    Err(e) => push(n, "derived level", false, e.to_string()),
                }
            }
        }
        ValidationReport { mode: self.mode, checks }
    }

    /// `t_n`, `h_n`, `α_n` for `n ≥ 2` with `c_n ≥ 3`.
    pub fn derive_level(&self, n: usize) -> Result<DerivedLevel> {
        if n < 2 || n > self.n_max() {
            return Err(Error::Usage(format!("derived quantities exist for levels 2..={}, got {n}", self.n_max())));
        }
        let report = self.validate();
        if let Some(bad) = report.checks.iter().find(|c| !c.passed && c.level <= n) {
            return Err(Error::Usage(format!(
                "schedule invalid at level {}: {} (slack {})",
                bad.level, bad.name, bad.slack
            )));
        }
        self.derive_level_unchecked(n)
    }

    pub(crate) fn derive_level_unchecked(&self, n: usize) -> Result<DerivedLevel> {
        let c_n = self.c(n);
        if c_n < 3 {
            return Err(Error::Usage(format!("h_n and α_n need c_n ≥ 3; c_{n} = {c_n}")));
        }
        let t = self.kept_tiles(n)?;
        let (h, alpha) = step_mix(t, self.c(n - 1), c_n)?;
        Ok(DerivedLevel { n, t, h, alpha, g: self.gap(n) })
    }

    /// `t_n = 2^{d g_n} − D c_{n−1}^D`
    pub fn kept_tiles(&self, n: usize) -> Result<u128> {
        let bits = self.d * self.gap(n);
        if bits as u64 > MAX_TILE_BITS {
            return Err(Error::Capacity(format!("2^{bits} tiles at level {n}")));
        }
        let strip = self
            .c_pow_d(n - 1)
            .and_then(|v| v.checked_mul(self.big_d() as u128))
            .ok_or_else(|| Error::Capacity(format!("D·c_{}^D overflows", n - 1)))?;
        let total = 1u128 << bits;
        match total.checked_sub(strip) {
            Some(t) if t >= 1 => Ok(t),
            _ => Err(Error::InvalidSchedule(format!("t_{n} = 2^{bits} − {strip} < 1"))),
        }
    }

    /// `R_i^{(n)}`: side `2^{p_{n−1}+1}`, base `(2^{p_{n−1}+1}(i−1), 0, …, 0)`.
    pub fn strip_block(&self, n: usize, i: u128) -> Result<CubicSet> {
        self.require_level(n)?;
        let count = self.c_pow_d(n).ok_or_else(|| Error::Capacity(format!("c_{n}^D overflows")))?;
        if i == 0 || i > count {
            return Err(Error::OutOfRange(format!("strip block index {i} not in 1..={count}")));
        }
        let side = 1i128 << (self.p[n - 1] + 1);
        let offset = side
            .checked_mul((i - 1) as i128)
            .ok_or_else(|| Error::Capacity("strip block offset overflows".into()))?;
        let mut base = vec![0i128; self.d()];
        base[0] = offset;
        CubicSet::new(LatticePoint(base), side)
    }
}

/// `h = ⌈t(c_{n−1}−2)/(c_n−2)⌉` and `α = (c_n−2)h − t(c_{n−1}−2)`.
pub fn step_mix(t: u128, c_prev: u64, c_n: u64) -> Result<(u128, u128)> {
    if c_n < 3 || c_prev < 2 {
        return Err(Error::Usage(format!("step mix needs c_n ≥ 3 and c_(n−1) ≥ 2, got {c_n}, {c_prev}")));
    }
    let need = t
        .checked_mul((c_prev - 2) as u128)
        .ok_or_else(|| Error::Capacity("t_n(c_{n−1}−2) overflows".into()))?;
    let den = (c_n - 2) as u128;
    let h = need.div_ceil(den);
    let alpha = den * h - need;
    Ok((h, alpha))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DerivedLevel {
    pub n: usize,
    pub t: u128,
    pub h: u128,
    pub alpha: u128,
    pub g: u32,
}

impl DerivedLevel {
    /// `S_i = t + min(i−1, α)(h−1) + max(i−1−α, 0)h`
    pub fn target_sum(&self, i: u64) -> u128 {
        target_sum(self.t, self.h, self.alpha, i)
    }
}

pub fn target_sum(t: u128, h: u128, alpha: u128, i: u64) -> u128 {
    let steps = (i - 1) as u128;
    let low = steps.min(alpha);
    let high = steps.saturating_sub(alpha);
    t + low * h.saturating_sub(1) + high * h
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstraintCheck {
    pub level: usize,
    pub name: String,
    pub passed: bool,
    /// Exact slack (`allowed − actual`); negative means violated.
    pub slack: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub mode: PaletteMode,
    pub checks: Vec<ConstraintCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("mode {}\n", self.mode);
        for c in &self.checks {
            out.push_str(&format!(
                "{} level {:>2}  {:<48} slack {}\n",
                if c.passed { "ok  " } else { "FAIL" },
                c.level,
                c.name,
                c.slack
            ));
        }
        out
    }

    pub fn into_error(self) -> Result<()> {
        match self.failures().next() {
            None => Ok(()),
            Some(c) => Err(Error::InvalidSchedule(format!(
                "level {}: {} violated (slack {})",
                c.level, c.name, c.slack
            ))),
        }
    }
}

/// `Π_{l=1}^{m} h_l` with `h_1 = 1`.
pub fn h_product(sched: &LevelSchedule, m: usize) -> Result<BigInt> {
    let mut prod = BigInt::one();
    for l in 2..=m {
        prod *= BigInt::from(sched.derive_level_unchecked(l)?.h);
    }
    Ok(prod)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(d: u32, p: &[u32], c: &[u64], mode: PaletteMode) -> LevelSchedule {
        LevelSchedule::new(d, p.to_vec(), c.to_vec(), mode).unwrap()
    }

    #[test]
    fn plain_c2_schedule_validates() {
        let s = sched(2, &[0, 5, 10, 15], &[2, 2, 2], PaletteMode::Plain);
        let r = s.validate();
        assert!(r.passed(), "{}", r.to_text());
        let tight = r.checks.iter().find(|c| c.name.starts_with("c_n^D") && c.level == 1).unwrap();
        assert_eq!(tight.slack, "0");
    }

    #[test]
    fn palette_c3_schedule_prefix_sums() {
        let s = sched(2, &[0, 8, 16, 24], &[3, 3, 3], PaletteMode::Palette);
        let r = s.validate();
        assert!(r.passed(), "{}", r.to_text());
        let sums: Vec<&ConstraintCheck> = r.checks.iter().filter(|c| c.name.starts_with("Σ")).collect();
        for (m, c) in sums.iter().enumerate() {
            let expected = rat(1, 3) - rat(81 * (m as i64 + 1), 16384);
            assert_eq!(c.slack, expected.to_string());
        }
    }

    #[test]
    fn oversized_palette_fails() {
        let s = sched(2, &[0, 3], &[3], PaletteMode::Plain);
        let r = s.validate();
        assert!(!r.passed());
        let bad: Vec<&str> = r.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(bad, vec!["c_n^D ≤ 2^{p_n−p_{n−1}−1}"]);
        assert_eq!(r.failures().next().unwrap().slack, "-77");
    }

    #[test]
    fn gap_of_one_is_named() {
        let s = sched(2, &[0, 1], &[2], PaletteMode::Plain);
        assert!(s.validate().failures().any(|c| c.name == "p_n − p_{n−1} ≥ 2"));
    }

    #[test]
    fn derive_level_examples() {
        let s = sched(2, &[0, 8, 16], &[3, 3], PaletteMode::Palette);
        let lv = s.derive_level(2).unwrap();
        assert_eq!((lv.t, lv.h, lv.alpha), (65212, 65212, 0));
        assert_eq!(step_mix(10, 4, 6).unwrap(), (5, 0));
        assert_eq!(step_mix(10, 4, 5).unwrap(), (7, 1));
        assert!(matches!(s.derive_level(1), Err(Error::Usage(_))));
        let plain = sched(2, &[0, 5, 10], &[2, 2], PaletteMode::Plain);
        assert!(matches!(plain.derive_level(2), Err(Error::Usage(_))));
    }

    #[test]
    fn target_sums_hit_endpoints() {
        // t=10, c_{n−1}=4, c_n=5: h=7, α=1
        let (t, h, a) = (10u128, 7u128, 1u128);
        assert_eq!(target_sum(t, h, a, 1), 10);
        assert_eq!(target_sum(t, h, a, 2), 16);
        assert_eq!(target_sum(t, h, a, 4), t * 3);
    }

    #[test]
    fn strip_block_examples() {
        let s = sched(2, &[0, 8, 16], &[3, 3], PaletteMode::Palette);
        let b = s.strip_block(1, 1).unwrap();
        assert_eq!((b.base().0.clone(), b.side()), (vec![0, 0], 2));
        let b = s.strip_block(2, 3).unwrap();
        assert_eq!((b.base().0.clone(), b.side()), (vec![1024, 0], 512));
        let s3 = sched(3, &[0, 30], &[3], PaletteMode::Palette);
        assert_eq!(s3.strip_block(1, 1).unwrap().base().0, vec![0, 0, 0]);
        assert!(s.strip_block(1, 82).is_err());
    }

    #[test]
    fn json_round_trip_and_shape_errors() {
        let s = sched(2, &[0, 5, 10], &[2, 2], PaletteMode::Plain);
        let js = s.to_canonical_json();
        assert_eq!(js, r#"{"d":2,"p":[0,5,10],"c":[2,2],"mode":"plain"}"#);
        assert_eq!(LevelSchedule::from_json(&js).unwrap(), s);
        assert!(LevelSchedule::from_json(r#"{"d":2,"p":[0,5],"c":[2,2]}"#).is_err());
        assert!(matches!(
            LevelSchedule::new(2, vec![0, 125], vec![2], PaletteMode::Plain),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn hl_bound_checked_per_level() {
        let s = sched(2, &[0, 8, 16, 24], &[3, 3, 3], PaletteMode::Palette);
        let r = s.validate();
        let hl: Vec<_> = r.checks.iter().filter(|c| c.name.starts_with("h_n")).collect();
        assert_eq!(hl.len(), 2);
        // h_n = t_n = 2^16 − 324 against 2^16
        assert!(hl.iter().all(|c| c.passed && c.slack == "324"));
    }
}
