//! Repetitivity of `Ψ`: every `r`-patch recurs within `R = √d·2^{p_n}` of
//! every lattice point, where `2^{p_{n−2}} < 2r ≤ 2^{p_{n−1}}`.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::patch::{nearest_shift, psi_pattern};
use crate::arith::{pow2, rat_int, rational_to_f64, Rational, Surd};
use crate::error::{Error, Result};
use crate::psi::PsiField;
use crate::schedule::LevelSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SampleSpec {
    pub pairs: usize,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { pairs: 64, seed: 0x5eed }
    }
}

/// The `n ≥ 2` with `2^{p_{n−2}} < 2r ≤ 2^{p_{n−1}}`, if the schedule has one.
pub fn level_for_radius(sched: &LevelSchedule, r: &Surd) -> Option<usize> {
    let two_r = r.scale(&rat_int(2));
    (2..=sched.n_max() + 1).find(|&n| {
        let lo = rat_int(pow2(sched.p(n - 2)));
        let hi = rat_int(pow2(sched.p(n - 1)));
        two_r.cmp_rational(&lo) == Ordering::Greater && two_r.cmp_rational(&hi) != Ordering::Greater
    })
}

/// `√d·2^{p_n}`.
pub fn repetitivity_bound(sched: &LevelSchedule, n: usize) -> Result<Surd> {
    sched.require_level(n)?;
    Ok(Surd::root(rat_int(pow2(sched.p(n))), sched.d() as u32))
}

/// `R(r)` for the radius `r`, with its level.
pub fn bound_for_radius(sched: &LevelSchedule, r: &Surd) -> Result<(usize, Surd)> {
    let n = level_for_radius(sched, r)
        .filter(|&n| n <= sched.n_max())
        .ok_or_else(|| Error::Capacity(format!("radius {r} needs a level beyond {}", sched.n_max())))?;
    Ok((n, repetitivity_bound(sched, n)?))
}

/// Integer radii `r` with `2^{p_{n−2}} < 2r ≤ 2^{p_{n−1}}`: the smallest,
/// the geometric middle and the boundary value.
pub fn radii_for_level(sched: &LevelSchedule, n: usize) -> Vec<i64> {
    if n < 2 || n > sched.n_max() {
        return Vec::new();
    }
    let lo = (1i64 << sched.p(n - 2)) / 2 + 1;
    let hi = (1i64 << sched.p(n - 1)) / 2;
    let mid = (((lo * hi) as f64).sqrt().round() as i64).clamp(lo, hi);
    let mut v = vec![lo, mid, hi];
    v.dedup();
    v
}

#[derive(Clone, Debug, Serialize)]
pub struct PairOutcome {
    pub x: Vec<i128>,
    pub y: Vec<i128>,
    pub witness: Option<Vec<i128>>,
    /// `|w − y| + r` for the witness `w`, which is the nearest one.
    pub minimal_r: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RadiusReport {
    pub r: String,
    pub level: usize,
    pub bound: String,
    pub bound_f64: f64,
    pub pairs: usize,
    pub successes: usize,
    pub worst_minimal_r: f64,
    pub failures: Vec<PairOutcome>,
}

impl RadiusReport {
    pub fn passed(&self) -> bool {
        self.successes == self.pairs
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RepetitivityReport {
    pub seed: u64,
    pub radii: Vec<RadiusReport>,
}

impl RepetitivityReport {
    pub fn passed(&self) -> bool {
        self.radii.iter().all(RadiusReport::passed)
    }
}

/// Samples `(x, y)` pairs and searches for a translate of the `r`-patch at
/// `x` inside `B(y, R(r))`.
pub fn verify_mapping_repetitivity(field: &PsiField, radii: &[i64], spec: SampleSpec) -> Result<RepetitivityReport> {
    let sched = field.engine().schedule();
    let mut out = Vec::new();
    for (ri, &r) in radii.iter().enumerate() {
        let r_s = Surd::int(r);
        let (level, big_r) = bound_for_radius(sched, &r_s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (ri as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let cov = field.coverage();
        let lo = cov.base().coords().to_vec();
        let hi = cov.maximal_corner().0;
        let rr = r as i128;
        if hi[0] - lo[0] < 2 * rr {
            return Err(Error::Capacity(format!("coverage {cov} is too small for r = {r}")));
        }
        let budget = big_r.sub(&r_s);
        let mut report = RadiusReport {
            r: r.to_string(),
            level,
            bound: big_r.to_string(),
            bound_f64: big_r.to_f64(),
            pairs: spec.pairs,
            successes: 0,
            worst_minimal_r: 0.0,
            failures: Vec::new(),
        };
        for _ in 0..spec.pairs {
            let x: Vec<i128> = lo.iter().zip(&hi).map(|(&a, &b)| rng.gen_range(a + rr..=b - rr)).collect();
            let y: Vec<i128> = lo.iter().zip(&hi).map(|(&a, &b)| rng.gen_range(a..=b)).collect();
            let pattern = psi_pattern(field, &x, &r_s)?;
            let centre: Vec<Rational> = y.iter().map(|&v| rat_int(v)).collect();
            let nearest = nearest_shift(field, &pattern, &centre, &budget, field.exec())?;
            let minimal_r = nearest.as_ref().map(|(_, d2)| rational_to_f64(d2).sqrt() + r as f64);
            let witness = nearest.map(|(v, _)| v);
            if let Some(m) = minimal_r {
                report.worst_minimal_r = report.worst_minimal_r.max(m);
            }
            if witness.is_some() {
                report.successes += 1;
            } else {
                report.failures.push(PairOutcome { x, y, witness, minimal_r });
            }
        }
        out.push(report);
    }
    Ok(RepetitivityReport { seed: spec.seed, radii: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityFn;
    use crate::palette::{Engine, EngineOptions};
    use crate::schedule::PaletteMode;
    use std::sync::Arc;

    fn c2() -> LevelSchedule {
        LevelSchedule::new(2, vec![0, 5, 10, 15], vec![2, 2, 2], PaletteMode::Plain).unwrap()
    }

    #[test]
    fn level_for_radius_examples() {
        let s = c2();
        assert_eq!(level_for_radius(&s, &Surd::int(16)), Some(2));
        assert_eq!(level_for_radius(&s, &Surd::int(1)), Some(2));
        assert_eq!(level_for_radius(&s, &Surd::rational(crate::arith::rat(1, 2))), None);
        assert_eq!(level_for_radius(&s, &Surd::int(17)), Some(3));
        assert_eq!(level_for_radius(&s, &Surd::int(512)), Some(3));
        assert_eq!(level_for_radius(&s, &Surd::int(513)), Some(4));
        assert!(bound_for_radius(&s, &Surd::int(513)).is_err());
        let (n, r) = bound_for_radius(&s, &Surd::int(16)).unwrap();
        assert_eq!(n, 2);
        assert!((r.to_f64() - 2f64.sqrt() * 1024.0).abs() < 1e-9);
    }

    #[test]
    fn radii_for_level_stay_in_range() {
        let s = c2();
        assert_eq!(radii_for_level(&s, 2), vec![1, 4, 16]);
        for n in 2..=3 {
            for r in radii_for_level(&s, n) {
                assert_eq!(level_for_radius(&s, &Surd::int(r)), Some(n));
            }
        }
    }

    #[test]
    fn sampled_pairs_succeed_on_small_run() {
        let e = Engine::new(c2(), DensityFn::constant(2, 1.5).unwrap(), EngineOptions::default()).unwrap();
        let f = PsiField::new(Arc::new(e)).unwrap();
        let rep = verify_mapping_repetitivity(&f, &[3], SampleSpec { pairs: 4, seed: 1 }).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.radii[0].worst_minimal_r <= rep.radii[0].bound_f64);
    }
}
