//! Repetitivity of the point set: the `r`-patch of `X` at `x ∈ X` recurs,
//! up to an integer translation, inside `B(y, R̃(r) + r)` with
//! `R̃(r) = R(r + 3√d) + √d − r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::patch::{extract_point_patch, point_pattern, psi_pattern, search_shift};
use super::repetitivity::{bound_for_radius, SampleSpec};
use crate::arith::{dyadic, rat_int, rational_to_f64, Rational, Surd};
use crate::delone::MarkerSets;
use crate::error::{Error, Result};
use crate::psi::PsiField;
use num_bigint::BigInt;
use num_traits::Zero;

/// `R̃(r)` with the level used for `R(r + 3√d)`.
pub fn transferred_bound(field: &PsiField, r: &Rational) -> Result<(usize, Surd)> {
    let d = field.dim() as u32;
    let s = Surd { a: r.clone(), b: rat_int(3), m: d };
    let (level, big_r) = bound_for_radius(field.engine().schedule(), &s)?;
    // √d·2^{p_n} + √d − r
    let sqrt_d = Surd::root(rat_int(1), d);
    Ok((level, big_r.add(&sqrt_d).sub(&Surd::rational(r.clone()))))
}

#[derive(Clone, Debug, Serialize)]
pub struct NetPairOutcome {
    /// Point of `X` and window point, as exact decimals.
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub shift: Option<Vec<i128>>,
    pub exact_match: bool,
    pub psi_witness: bool,
    pub implication_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetRepetitivityReport {
    pub r: String,
    pub seed: u64,
    pub level: usize,
    pub transferred_bound: String,
    pub transferred_bound_f64: f64,
    pub pairs: usize,
    pub successes: usize,
    /// Pairs where a `Ψ`-witness at radius `r + 3√d` existed and its
    /// translate reproduced the `X`-patch within `R̃(r)`.
    pub implications_checked: usize,
    pub implication_failures: usize,
    pub failures: Vec<NetPairOutcome>,
}

impl NetRepetitivityReport {
    pub fn passed(&self) -> bool {
        self.successes == self.pairs && self.implication_failures == 0
    }
}

/// Samples `x ∈ X` and `y` in the coverage and searches integer shifts `v`
/// with `X ∩ B(x+v, r) = (X ∩ B(x, r)) + v` and `|x + v − y| ≤ R̃(r)`.
pub fn verify_net_repetitivity(
    field: &PsiField,
    markers: &MarkerSets,
    r: &Rational,
    spec: SampleSpec,
) -> Result<NetRepetitivityReport> {
    let d = field.dim();
    let (level, tilde) = transferred_bound(field, r)?;
    let s = Surd { a: r.clone(), b: rat_int(3), m: d as u32 };
    let (_, big_r_s) = bound_for_radius(field.engine().schedule(), &s)?;
    let k = markers.scale_log2();
    let unit = 1i128 << k;
    let cov = field.coverage();
    let lo = cov.base().coords().to_vec();
    let hi = cov.maximal_corner().0;
    // keep B(x, r + 3√d + 2) inside the coverage
    let keep = (s.to_f64().ceil() as i128) + 2;
    if hi[0] - lo[0] <= 2 * keep {
        return Err(Error::Capacity(format!("coverage {cov} is too small for r = {r}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut report = NetRepetitivityReport {
        r: r.to_string(),
        seed: spec.seed,
        level,
        transferred_bound: tilde.to_string(),
        transferred_bound_f64: tilde.to_f64(),
        pairs: spec.pairs,
        successes: 0,
        implications_checked: 0,
        implication_failures: 0,
        failures: Vec::new(),
    };
    let tilde_sq = tilde.square();
    for _ in 0..spec.pairs {
        let z: Vec<i128> = lo.iter().zip(&hi).map(|(&a, &b)| rng.gen_range(a + keep..=b - keep)).collect();
        let colour = field.value(&z)?;
        let set = markers.set(colour);
        let m = &set[rng.gen_range(0..set.len())];
        let x: Vec<i128> = z.iter().zip(m).map(|(a, b)| a * unit + b).collect();
        let y: Vec<i128> = lo.iter().zip(&hi).map(|(&a, &b)| rng.gen_range(a * unit..(b + 1) * unit)).collect();

        let x_q: Vec<Rational> = x.iter().map(|&v| dyadic(BigInt::from(v), k)).collect();
        let y_q: Vec<Rational> = y.iter().map(|&v| dyadic(BigInt::from(v), k)).collect();
        let patch = extract_point_patch(field, markers, &x, r)?;
        let pattern = point_pattern(field, markers, &x, r)?;
        let centre: Vec<Rational> = y_q.iter().zip(&x_q).map(|(a, b)| a - b).collect();
        let shift = if pattern.is_empty() {
            // any shift works; take the lattice point nearest the centre
            Some(centre.iter().map(|c| c.round().to_integer().try_into().expect("in range")).collect())
        } else {
            search_shift(field, &pattern, &centre, &tilde, field.exec())?
        };
        let exact_match = match &shift {
            Some(v) => {
                let moved: Vec<i128> = x.iter().zip(v).map(|(a, b)| a + b * unit).collect();
                extract_point_patch(field, markers, &moved, r)?.content == patch.content
            }
            None => false,
        };

        // Ψ-witness at radius r + 3√d from the lattice cells of x and y
        let x_lat: Vec<i128> = x.iter().map(|v| v.div_euclid(unit)).collect();
        let y_lat: Vec<i128> = y.iter().map(|v| v.div_euclid(unit)).collect();
        let psi_pat = psi_pattern(field, &x_lat, &s)?;
        let y_lat_q: Vec<Rational> = y_lat.iter().map(|&v| rat_int(v)).collect();
        let w = search_shift(field, &psi_pat, &y_lat_q, &big_r_s.sub(&s), field.exec())?;
        let mut implication_holds = true;
        if let Some(w) = &w {
            report.implications_checked += 1;
            let v: Vec<i128> = w.iter().zip(&x_lat).map(|(a, b)| a - b).collect();
            let moved: Vec<i128> = x.iter().zip(&v).map(|(a, b)| a + b * unit).collect();
            let same = extract_point_patch(field, markers, &moved, r)?.content == patch.content;
            let dist_sq: Rational = moved
                .iter()
                .zip(&y_q)
                .map(|(&a, b)| {
                    let t = dyadic(BigInt::from(a), k) - b;
                    &t * &t
                })
                .fold(Rational::zero(), |acc, t| acc + t);
            let inside = tilde_sq.cmp_rational(&dist_sq) != std::cmp::Ordering::Less && tilde.signum() >= 0;
            implication_holds = same && inside;
            if !implication_holds {
                report.implication_failures += 1;
            }
        }
        if exact_match {
            report.successes += 1;
        }
        if !exact_match || !implication_holds || w.is_none() {
            report.failures.push(NetPairOutcome {
                x: x_q.iter().map(decimal).collect(),
                y: y_q.iter().map(decimal).collect(),
                shift,
                exact_match,
                psi_witness: w.is_some(),
                implication_holds,
            });
        }
    }
    Ok(report)
}

fn decimal(q: &Rational) -> String {
    crate::arith::dyadic_decimal(q).unwrap_or_else(|| format!("{}", rational_to_f64(q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use crate::density::DensityFn;
    use crate::palette::{Engine, EngineOptions};
    use crate::schedule::{LevelSchedule, PaletteMode};
    use std::sync::Arc;

    fn c2_field() -> PsiField {
        let s = LevelSchedule::new(2, vec![0, 5, 10, 15], vec![2, 2, 2], PaletteMode::Plain).unwrap();
        let e = Engine::new(s, DensityFn::constant(2, 1.5).unwrap(), EngineOptions::default()).unwrap();
        PsiField::new(Arc::new(e)).unwrap()
    }

    #[test]
    fn transferred_bound_formula() {
        let f = c2_field();
        let (n, t) = transferred_bound(&f, &rat_int(4)).unwrap();
        // 4 + 3√2 ≈ 8.24 → level 2, R = √2·2^{10}
        assert_eq!(n, 2);
        let want = 2f64.sqrt() * 1024.0 + 2f64.sqrt() - 4.0;
        assert!((t.to_f64() - want).abs() < 1e-9);
        assert_eq!(t.a, rat_int(-4));
        assert_eq!(t.b, rat_int(1025));
    }

    #[test]
    fn identity_pair_matches() {
        let f = c2_field();
        let m = MarkerSets::standard(2);
        let x = vec![4 * 9 + 2, 4 * -3 + 2];
        let r = rat(5, 2);
        let a = extract_point_patch(&f, &m, &x, &r).unwrap();
        let b = extract_point_patch(&f, &m, &x, &r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_sample_passes() {
        let f = c2_field();
        let rep = verify_net_repetitivity(&f, &MarkerSets::standard(2), &rat_int(2), SampleSpec { pairs: 3, seed: 9 })
            .unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(rep.implications_checked, 3);
    }
}
