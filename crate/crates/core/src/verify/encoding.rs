//! The encoding bound on kept tiles and the mass audit of the excluded strip.
//!
//! For a kept tile `U` of level `n` the colour `φ_{c_n}^{(n)}` restricted to
//! `U` is `φ_α^{(n−1)}`, so `Σ_{x∈U} φ = N(n−1, α)`. The check is
//! `|N(n−1, α) − 2^{dp_{n−1}}∫_{Q_U} ρ| ≤ 2^{dp_{n−2}}/(c_{n−1} − 2)`.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arith::{dyadic, pow2, rat, rational_from_f64, rational_to_f64, Rational};
use crate::error::{Error, Result};
use crate::geometry::DyadicBox;
use crate::palette::{tile_box, Engine};
use crate::schedule::PaletteMode;

/// Slack added on the integral side of the bound.
pub const QUADRATURE_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EncodingMode {
    Exhaustive,
    Sampled { tiles: usize, seed: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct TileViolation {
    pub multi: Vec<u128>,
    pub alpha: u32,
    pub tile_sum: String,
    pub scaled_integral: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EncodingReport {
    pub level: usize,
    pub mode: EncodingMode,
    pub kept_tiles: u128,
    pub tiles_checked: u64,
    /// `2^{dp_{n−2}}/(c_{n−1}−2)`, exact.
    pub bound: String,
    /// Largest `|b_α − τ|·(c_{n−1}−2)`; at most 1 up to the slack.
    pub worst_ratio: f64,
    /// Largest `|μ_n(Q) − ρL(Q)|` and its bound `1/((c_{n−1}−2)|𝒬_n|)`.
    pub worst_normalized_error: f64,
    pub normalized_bound: f64,
    /// `|𝒬_n| = 2^{d·g_n}`.
    pub tile_count: String,
    pub tile_diameter: f64,
    /// `D·c_{n−1}^D / 2^{d·g_n}`, exact.
    pub strip_lebesgue_mass: String,
    pub strip_lebesgue_mass_f64: f64,
    /// `ν(strip) = ∫_{strip} ρ`.
    pub strip_nu_mass: f64,
    /// `ν_n(strip) = strip sum / 2^{dp_{n−1}}`.
    pub strip_nu_n_mass: f64,
    /// `Σ_Q ∫_Q ρ` over kept tiles plus the strip, against `∫_K ρ`
    /// (exhaustive mode only).
    pub mass_balance_error: Option<f64>,
    /// Kept tiles whose grid sum was compared with `N(n−1, α)`.
    pub direct_sums_checked: u64,
    pub direct_sum_mismatches: u64,
    pub violations: Vec<TileViolation>,
}

impl EncodingReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
            && self.direct_sum_mismatches == 0
            && self.mass_balance_error.is_none_or(|e| e <= QUADRATURE_SLACK)
    }
}

const MAX_VIOLATIONS: usize = 20;

pub fn encoding_report(engine: &Engine, n: usize, mode: EncodingMode) -> Result<EncodingReport> {
    let s = engine.schedule();
    if s.mode() != PaletteMode::Palette {
        return Err(Error::Usage("the encoding bound needs palette mode (c_n ≥ 3)".into()));
    }
    if n < 2 || n > s.n_max() {
        return Err(Error::OutOfRange(format!("encoding is checked at levels 2..={}", s.n_max())));
    }
    let d = s.d() as u32;
    let g = s.gap(n);
    let c_prev = s.c(n - 1);
    let per_axis = 1u128 << g;
    let blocks = s.c_pow_d(n - 1).expect("validated");
    let kept = s.kept_tiles(n)?;
    let rho = engine.density();
    let tol = engine.options().quad_tol;
    let cap = engine.options().quad_cap;
    let k = (c_prev - 2) as i64;
    // |b_α − τ| ≤ 1/(c'−2) + slack, in units of 2^{dp_{n−2}}
    let limit = rat(1, k) + rational_from_f64(QUADRATURE_SLACK);
    let tile_scale = 2f64.powi((d * g) as i32);

    let tiles: Vec<Vec<u128>> = match mode {
        EncodingMode::Exhaustive => {
            if kept > engine.options().alpha_budget {
                return Err(Error::Capacity(format!(
                    "level {n} has {kept} kept tiles; α budget is {}",
                    engine.options().alpha_budget
                )));
            }
            engine.alpha_table(n)?;
            let total = per_axis.pow(d);
            (0..total).map(|lex| unlex(lex, per_axis, d as usize)).filter(|m| !in_strip(m, blocks)).collect()
        }
        EncodingMode::Sampled { tiles, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(tiles);
            while out.len() < tiles {
                let m: Vec<u128> = (0..d).map(|_| rng.gen_range(0..per_axis)).collect();
                if !in_strip(&m, blocks) {
                    out.push(m);
                }
            }
            out
        }
    };

    let grids = engine.materialize_level(n).ok();
    let t_side = s.tile_side(n);
    struct Row {
        violation: Option<TileViolation>,
        ratio: f64,
        integral: f64,
        direct: Option<bool>,
    }
    let rows = engine.exec().try_map(0..tiles.len(), |i| -> Result<Row> {
        let m = &tiles[i];
        let alpha = engine.alpha_for_tile(n, m)?;
        let num = engine.shade_numerator(n - 1, alpha as u64)?;
        let b = tile_box(m, g);
        let integral = rho.integrate_box_capped(&b, tol, cap)?;
        let tau = rational_from_f64(integral * tile_scale);
        let b_alpha = dyadic(num.clone(), d * s.p(n - 2));
        let gap = (&b_alpha - &tau).abs();
        let ratio = rational_to_f64(&gap) * k as f64;
        let violation = (gap > limit).then(|| TileViolation {
            multi: m.clone(),
            alpha,
            tile_sum: num.to_string(),
            scaled_integral: integral * 2f64.powi((d * s.p(n - 1)) as i32),
            ratio,
        });
        let direct = grids.as_ref().map(|gr| {
            let g = &gr[s.c(n) as usize - 1];
            let base: Vec<i128> = m.iter().map(|&v| v as i128 * t_side).collect();
            let cube = crate::geometry::CubicSet::new(crate::geometry::LatticePoint(base), t_side).expect("tile");
            let sum: u64 = g.restrict(&cube).iter().map(|&v| v as u64).sum();
            BigInt::from(sum) == num
        });
        Ok(Row { violation, ratio, integral, direct })
    })?;

    let mut worst_ratio = 0f64;
    let mut violations = Vec::new();
    let mut direct_checked = 0u64;
    let mut direct_bad = 0u64;
    let mut kept_integral = 0f64;
    for row in rows {
        worst_ratio = worst_ratio.max(row.ratio);
        kept_integral += row.integral;
        if let Some(v) = row.violation {
            if violations.len() < MAX_VIOLATIONS {
                violations.push(v);
            }
        }
        if let Some(ok) = row.direct {
            direct_checked += 1;
            if !ok {
                direct_bad += 1;
            }
        }
    }

    let strip_leb = Rational::new(BigInt::from(s.big_d()) * BigInt::from(blocks), pow2(d * g));
    let strip_box = strip_box(d as usize, blocks, g);
    let strip_nu = rho.integrate_box_capped(&strip_box, tol, cap)?;
    let strip_sum = engine.strip_sum(n)?;
    let strip_nu_n = rational_to_f64(&dyadic(strip_sum, d * s.p(n - 1)));
    let mass_balance_error = match mode {
        EncodingMode::Exhaustive => {
            let total = rho.integrate_box_capped(&DyadicBox::unit(d as usize), tol, cap)?;
            Some((kept_integral + strip_nu - total).abs())
        }
        EncodingMode::Sampled { .. } => None,
    };
    let tile_count = pow2(d * g);
    Ok(EncodingReport {
        level: n,
        mode,
        kept_tiles: kept,
        tiles_checked: tiles.len() as u64,
        bound: dyadic(pow2(d * s.p(n - 2)), 0).to_string() + &format!("/{k}"),
        worst_ratio,
        worst_normalized_error: worst_ratio / (k as f64 * tile_scale),
        normalized_bound: 1.0 / (k as f64 * tile_scale),
        tile_count: tile_count.to_string(),
        tile_diameter: (d as f64).sqrt() * 2f64.powi(-(g as i32)),
        strip_lebesgue_mass: strip_leb.to_string(),
        strip_lebesgue_mass_f64: rational_to_f64(&strip_leb),
        strip_nu_mass: strip_nu,
        strip_nu_n_mass: strip_nu_n,
        mass_balance_error,
        direct_sums_checked: direct_checked,
        direct_sum_mismatches: direct_bad,
        violations,
    })
}

/// Exact Lebesgue strip masses of consecutive levels, for the trend audit.
pub fn strip_lebesgue_masses(engine: &Engine) -> Vec<(usize, Rational)> {
    let s = engine.schedule();
    (2..=s.n_max())
        .filter_map(|n| {
            let blocks = s.c_pow_d(n - 1)?;
            let d = s.d() as u32;
            Some((n, Rational::new(BigInt::from(s.big_d()) * BigInt::from(blocks), pow2(d * s.gap(n)))))
        })
        .collect()
}

fn unlex(mut lex: u128, per_axis: u128, d: usize) -> Vec<u128> {
    let mut m = vec![0u128; d];
    for q in (0..d).rev() {
        m[q] = lex % per_axis;
        lex /= per_axis;
    }
    m
}

fn in_strip(m: &[u128], blocks: u128) -> bool {
    m[0] < 2 * blocks && m[1..].iter().all(|&v| v < 2)
}

/// The strip image `[0, 2c^D·2^{−g}) × [0, 2·2^{−g})^{d−1}`.
fn strip_box(d: usize, blocks: u128, g: u32) -> DyadicBox {
    let den = pow2(g);
    let mut hi = vec![Rational::new(BigInt::from(2), den.clone()); d];
    hi[0] = Rational::new(BigInt::from(2 * blocks), den);
    DyadicBox::new(vec![Rational::zero(); d], hi).expect("strip box")
}

/// `Σ_{x∈U} Ψ(x)` of a tile image equals `2^{dp_{n−2}}·b_α^{(n−1)}`: the
/// numerator form, as an integer.
pub fn tile_sum(engine: &Engine, n: usize, multi: &[u128]) -> Result<BigInt> {
    let alpha = engine.alpha_for_tile(n, multi)?;
    engine.shade_numerator(n - 1, alpha as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityFn;
    use crate::palette::EngineOptions;
    use crate::schedule::LevelSchedule;

    fn engine(rho: DensityFn) -> Engine {
        let s = LevelSchedule::new(2, vec![0, 8, 16], vec![3, 3], PaletteMode::Palette).unwrap();
        Engine::new(s, rho, EngineOptions::default()).unwrap()
    }

    #[test]
    fn constant_density_level2() {
        let e = engine(DensityFn::constant(2, 1.5).unwrap());
        let rep = encoding_report(&e, 2, EncodingMode::Exhaustive).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        assert_eq!(rep.tiles_checked, 65212);
        assert_eq!(rep.direct_sums_checked, 65212);
        // every tile error ≤ 2^{dp_0}/(c_1−2) = 1
        assert!(rep.worst_ratio <= 1.0);
        assert_eq!(rep.strip_lebesgue_mass, "81/16384");
        assert!((rep.strip_nu_mass - 1.5 * 324.0 / 65536.0).abs() < 1e-12);
    }

    #[test]
    fn plain_mode_is_a_usage_error() {
        let s = LevelSchedule::new(2, vec![0, 5, 10], vec![2, 2], PaletteMode::Plain).unwrap();
        let e = Engine::new(s, DensityFn::constant(2, 1.5).unwrap(), EngineOptions::default()).unwrap();
        assert!(matches!(encoding_report(&e, 2, EncodingMode::Exhaustive), Err(Error::Usage(_))));
    }

    #[test]
    fn sampled_mode_reports_declared_sample() {
        let e = engine(DensityFn::affine(2, 1.0, 1.0, 1).unwrap());
        let rep = encoding_report(&e, 2, EncodingMode::Sampled { tiles: 500, seed: 3 }).unwrap();
        assert_eq!(rep.tiles_checked, 500);
        assert!(rep.mass_balance_error.is_none());
        assert!(rep.passed());
    }
}
