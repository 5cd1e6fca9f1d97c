//! The good sequence of palettes: strip layout of all `D`-tuples, M-vector
//! tiles, exact shades and the density-approximating colour.
//!
//! Colours are evaluated lazily by descent. A level-`n` point either lies in
//! the strip, where block `i` and sub-cube `k` select the tuple component
//! `a_{i,k}`, or in a kept tile, where the M-vector entry (or the tile's `α`
//! for the density colour) selects the level-`n−1` colour.

use std::sync::{Arc, OnceLock};

use dashmap::DashMap;
use num_bigint::BigInt;
use num_traits::Signed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::{dyadic, pow2, rat_int, rational_from_f64, Rational};
use crate::density::{DensityFn, DEFAULT_CELL_CAP, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::geometry::DyadicBox;
use crate::par::Exec;
use crate::schedule::{h_product, LevelSchedule, PaletteMode};

pub mod goodness;
pub mod materialize;
pub mod mvector;

pub use goodness::{check_goodness, check_goodness_grids, GoodnessMode, GoodnessReport};
pub use materialize::Grid;
pub use mvector::{m_entry, MVectorSpec};

pub const DEFAULT_MATERIALIZE_CAP: u64 = 1 << 26;
pub const DEFAULT_ALPHA_BUDGET: u128 = 1 << 20;

/// Colour `index` of palette `level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColourRef {
    pub level: usize,
    pub index: u64,
}

impl ColourRef {
    pub fn new(level: usize, index: u64) -> Self {
        ColourRef { level, index }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineOptions {
    /// Largest grid (cells) that may be materialized.
    pub materialize_cap: u64,
    /// Largest number of tiles whose `α` may be computed for one shade.
    pub alpha_budget: u128,
    pub exec: Exec,
    pub quad_tol: f64,
    pub quad_cap: u64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            materialize_cap: DEFAULT_MATERIALIZE_CAP,
            alpha_budget: DEFAULT_ALPHA_BUDGET,
            exec: Exec::default(),
            quad_tol: DEFAULT_TOL,
            quad_cap: DEFAULT_CELL_CAP,
        }
    }
}

/// A level-`n` tile `T·m + [0,T)^d`, `T = 2^{p_{n−2}}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TileAddress {
    pub level: usize,
    pub multi: Vec<u128>,
    pub strip: bool,
    /// 1-based position among kept tiles in lexicographic order.
    pub ordinal: Option<u128>,
}

/// Per-level constants used by the descent.
#[derive(Clone, Debug)]
pub(crate) struct LevelGeom {
    pub tile: i128,
    pub side: i128,
    pub g: u32,
    pub per_axis: u128,
    pub c_prev: u64,
    pub c: u64,
    /// `c_{n−1}^D`
    pub blocks: u128,
    pub t: u128,
    /// `(h_n, α_n)` when `c_n ≥ 3`.
    pub mix: Option<(u128, u128)>,
}

/// `φ_j^{(1)}(0)` for `j ∈ [c_1]`.
pub fn base_palette(c1: u64) -> Result<Vec<u8>> {
    match c1 {
        2 => Ok(vec![1, 2]),
        3 => Ok(vec![1, 2, 1]),
        _ => Err(Error::InvalidSchedule(format!("c_1 must be 2 or 3, got {c1}"))),
    }
}

/// The `i`-th element (1-based) of `[c]^D` in lexicographic order.
pub fn a_tuple(c: u64, big_d: u32, i: u128) -> Result<Vec<u64>> {
    let count = (c as u128)
        .checked_pow(big_d)
        .ok_or_else(|| Error::Capacity(format!("{c}^{big_d} tuples")))?;
    if i == 0 || i > count {
        return Err(Error::OutOfRange(format!("tuple index {i} not in 1..={count}")));
    }
    Ok((0..big_d).map(|k| tuple_component(c, big_d, i - 1, k)).collect())
}

/// Component `k` (0-based) of tuple `i0` (0-based): a base-`c` digit.
#[inline]
pub(crate) fn tuple_component(c: u64, big_d: u32, i0: u128, k0: u32) -> u64 {
    let place = (c as u128).pow(big_d - 1 - k0);
    ((i0 / place) % c as u128) as u64 + 1
}

/// `sha256(schedule JSON ‖ "\n" ‖ density JSON)`, hex.
pub fn provenance_hash(sched: &LevelSchedule, rho: &DensityFn) -> String {
    let mut h = Sha256::new();
    h.update(sched.to_canonical_json().as_bytes());
    h.update(b"\n");
    h.update(rho.canonical_json().as_bytes());
    hex::encode(h.finalize())
}

/// Lazily evaluated palettes for one schedule and one density. All caches
/// are write-once and shared across threads.
pub struct Engine {
    sched: Arc<LevelSchedule>,
    rho: Arc<DensityFn>,
    opts: EngineOptions,
    hash: String,
    base: Vec<u8>,
    geoms: Vec<Option<LevelGeom>>,
    shades: Vec<OnceLock<Vec<BigInt>>>,
    density_shades: Vec<OnceLock<BigInt>>,
    alpha_tables: Vec<OnceLock<Arc<Vec<u32>>>>,
    alpha_memo: DashMap<(usize, u128), u32>,
    pub(crate) grids: Vec<OnceLock<Arc<Vec<Grid>>>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("schedule", &self.sched).field("hash", &self.hash).finish()
    }
}

impl Engine {
    pub fn new(sched: LevelSchedule, rho: DensityFn, opts: EngineOptions) -> Result<Self> {
        sched.validate().into_error()?;
        if rho.dim() != sched.d() {
            return Err(Error::Usage(format!(
                "density dimension {} ≠ schedule dimension {}",
                rho.dim(),
                sched.d()
            )));
        }
        let base = base_palette(sched.c(1))?;
        let n_max = sched.n_max();
        let mut geoms = vec![None, None];
        for n in 2..=n_max {
            let c = sched.c(n);
            let mix = if c >= 3 { Some(sched.derive_level_unchecked(n).map(|l| (l.h, l.alpha))?) } else { None };
            geoms.push(Some(LevelGeom {
                tile: sched.tile_side(n),
                side: sched.cube_side(n),
                g: sched.gap(n),
                per_axis: 1u128 << sched.gap(n),
                c_prev: sched.c(n - 1),
                c,
                blocks: sched.c_pow_d(n - 1).expect("validated"),
                t: sched.kept_tiles(n)?,
                mix,
            }));
        }
        let hash = provenance_hash(&sched, &rho);
        Ok(Engine {
            sched: Arc::new(sched),
            rho: Arc::new(rho),
            opts,
            hash,
            base,
            geoms,
            shades: (0..=n_max).map(|_| OnceLock::new()).collect(),
            density_shades: (0..=n_max).map(|_| OnceLock::new()).collect(),
            alpha_tables: (0..=n_max).map(|_| OnceLock::new()).collect(),
            alpha_memo: DashMap::new(),
            grids: (0..=n_max).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn schedule(&self) -> &LevelSchedule {
        &self.sched
    }

    pub fn density(&self) -> &DensityFn {
        &self.rho
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    pub fn exec(&self) -> Exec {
        self.opts.exec
    }

    /// Provenance hash of (schedule, density).
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub(crate) fn geom(&self, n: usize) -> &LevelGeom {
        self.geoms[n].as_ref().expect("level ≥ 2")
    }

    fn check_ref(&self, r: &ColourRef) -> Result<()> {
        self.sched.require_level(r.level)?;
        let c = self.sched.c(r.level);
        if r.index == 0 || r.index > c {
            return Err(Error::OutOfRange(format!("colour {} not in 1..={c} at level {}", r.index, r.level)));
        }
        Ok(())
    }

    /// `φ_j^{(n)}(x)` for `x ∈ 𝒬_n^d`.
    pub fn eval_colour(&self, r: &ColourRef, x: &[i128]) -> Result<u8> {
        self.check_ref(r)?;
        let side = self.sched.cube_side(r.level);
        if x.len() != self.sched.d() || x.iter().any(|&v| v < 0 || v >= side) {
            return Err(Error::OutOfRange(format!(
                "point {x:?} outside the level-{} domain {{0..{}}}^{}",
                r.level,
                side - 1,
                self.sched.d()
            )));
        }
        let mut y = x.to_vec();
        let mut j = r.index;
        for n in (2..=r.level).rev() {
            j = self.descend(n, j, &mut y)?;
        }
        Ok(self.base[j as usize - 1])
    }

    /// One descent step: maps `(n, j, y)` to the level-`n−1` colour and
    /// rewrites `y` into that colour's coordinates.
    fn descend(&self, n: usize, j: u64, y: &mut [i128]) -> Result<u64> {
        let geo = self.geom(n);
        let t = geo.tile;
        let big_d = self.sched.big_d();
        let block = 2 * t;
        let in_strip = (y[0] as u128) < (block as u128) * geo.blocks && y[1..].iter().all(|&v| v < block);
        let next = if in_strip {
            let i0 = (y[0] / block) as u128;
            y[0] -= block * i0 as i128;
            let k0 = y.iter().fold(0u32, |acc, &v| (acc << 1) | (v >= t) as u32);
            tuple_component(geo.c_prev, big_d, i0, k0)
        } else {
            let multi: Vec<u128> = y.iter().map(|&v| (v / t) as u128).collect();
            let ordinal = kept_ordinal(geo, &multi).expect("not a strip tile");
            if j < geo.c {
                self.mvector(n, j)?.entry_unchecked(ordinal)
            } else {
                self.alpha_at(n, &multi, ordinal)? as u64
            }
        };
        for v in y.iter_mut() {
            *v %= t;
        }
        Ok(next)
    }

    /// Tile of `x ∈ 𝒬_n^d` at level `n ≥ 2`.
    pub fn tile_address(&self, n: usize, x: &[i128]) -> Result<TileAddress> {
        if n < 2 || n > self.sched.n_max() {
            return Err(Error::OutOfRange(format!("tiles exist at levels 2..={}", self.sched.n_max())));
        }
        let geo = self.geom(n);
        if x.len() != self.sched.d() || x.iter().any(|&v| v < 0 || v >= geo.side) {
            return Err(Error::OutOfRange(format!("point {x:?} outside the level-{n} domain")));
        }
        let multi: Vec<u128> = x.iter().map(|&v| (v / geo.tile) as u128).collect();
        let ordinal = kept_ordinal(geo, &multi);
        Ok(TileAddress { level: n, multi, strip: ordinal.is_none(), ordinal })
    }

    /// M-vector of colour `i < c_n` at level `n ≥ 2`.
    pub fn mvector(&self, n: usize, i: u64) -> Result<MVectorSpec> {
        let geo = self.geom(n);
        if i == 0 || i >= geo.c {
            return Err(Error::OutOfRange(format!("M-vectors exist for colours 1..{} at level {n}", geo.c)));
        }
        let target = match geo.mix {
            Some((h, alpha)) => crate::schedule::target_sum(geo.t, h, alpha, i),
            None => geo.t,
        };
        MVectorSpec::new(n, i, geo.t, geo.c_prev, target)
    }

    /// `α` of a kept tile given by its multi-index.
    pub fn alpha_for_tile(&self, n: usize, multi: &[u128]) -> Result<u32> {
        if n < 2 || n > self.sched.n_max() {
            return Err(Error::OutOfRange(format!("tiles exist at levels 2..={}", self.sched.n_max())));
        }
        let geo = self.geom(n);
        if multi.len() != self.sched.d() || multi.iter().any(|&m| m >= geo.per_axis) {
            return Err(Error::OutOfRange(format!("tile index {multi:?} outside the level-{n} grid")));
        }
        let ordinal = kept_ordinal(geo, multi)
            .ok_or_else(|| Error::Usage(format!("tile {multi:?} lies in the strip and has no α")))?;
        self.alpha_at(n, multi, ordinal)
    }

    fn alpha_at(&self, n: usize, multi: &[u128], ordinal: u128) -> Result<u32> {
        if let Some(table) = self.alpha_tables[n].get() {
            return Ok(table[(ordinal - 1) as usize]);
        }
        if let Some(a) = self.alpha_memo.get(&(n, ordinal)) {
            return Ok(*a);
        }
        let a = self.compute_alpha(n, multi)?;
        self.alpha_memo.insert((n, ordinal), a);
        Ok(a)
    }

    /// Mean of `ρ` over the tile's image `2^{−g}(m + [0,1)^d)`.
    pub fn tile_mean(&self, n: usize, multi: &[u128]) -> Result<f64> {
        let geo = self.geom(n);
        let b = tile_box(multi, geo.g);
        let integral = self.rho.integrate_box_capped(&b, self.opts.quad_tol, self.opts.quad_cap)?;
        Ok(integral * 2f64.powi((self.sched.d() as u32 * geo.g) as i32))
    }

    fn compute_alpha(&self, n: usize, multi: &[u128]) -> Result<u32> {
        let geo = self.geom(n);
        let tau = rational_from_f64(self.tile_mean(n, multi)?);
        let scale = rat_int(pow2(self.sched.d() as u32 * self.sched.p(n - 2)));
        let target = &tau * &scale;
        let mut best: Option<(u32, Rational)> = None;
        for a in 1..geo.c_prev.max(2) {
            let num = rat_int(self.shade_numerator(n - 1, a)?);
            let gap = (&num - &target).abs();
            if best.as_ref().is_none_or(|(_, g)| gap < *g) {
                best = Some((a as u32, gap));
            }
        }
        let (alpha, gap) = best.expect("at least one candidate shade");
        if self.sched.mode() == PaletteMode::Palette {
            let bound = rat_int(h_product(&self.sched, n - 1)?);
            if gap > bound {
                return Err(Error::Invariant(format!(
                    "tile {multi:?} at level {n}: nearest shade is {} away, bound {}",
                    gap / &scale,
                    bound / &scale
                )));
            }
        }
        Ok(alpha)
    }

    /// `α` for every kept tile of level `n`, in ordinal order.
    pub fn alpha_table(&self, n: usize) -> Result<Arc<Vec<u32>>> {
        if n < 2 || n > self.sched.n_max() {
            return Err(Error::OutOfRange(format!("tiles exist at levels 2..={}", self.sched.n_max())));
        }
        if let Some(t) = self.alpha_tables[n].get() {
            return Ok(t.clone());
        }
        let geo = self.geom(n);
        if geo.t > self.opts.alpha_budget {
            return Err(Error::Capacity(format!(
                "level {n} has {} kept tiles; α budget is {}",
                geo.t, self.opts.alpha_budget
            )));
        }
        // Shades of the previous level are shared by every tile.
        for a in 1..geo.c_prev.max(2) {
            self.shade_numerator(n - 1, a)?;
        }
        let total = geo.t + self.sched.big_d() as u128 * geo.blocks;
        const CHUNK: u128 = 4096;
        let chunks = total.div_ceil(CHUNK) as usize;
        let d = self.sched.d();
        let parts = self.exec().try_map(0..chunks, |ci| -> Result<Vec<u32>> {
            let start = ci as u128 * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut out = Vec::new();
            let mut multi = vec![0u128; d];
            for lex in start..end {
                let mut rem = lex;
                for q in (0..d).rev() {
                    multi[q] = rem % geo.per_axis;
                    rem /= geo.per_axis;
                }
                if let Some(ord) = kept_ordinal(geo, &multi) {
                    let a = match self.alpha_memo.get(&(n, ord)) {
                        Some(a) => *a,
                        None => self.compute_alpha(n, &multi)?,
                    };
                    out.push(a);
                }
            }
            Ok(out)
        })?;
        let table: Vec<u32> = parts.into_iter().flatten().collect();
        debug_assert_eq!(table.len() as u128, geo.t);
        let _ = self.alpha_tables[n].set(Arc::new(table));
        Ok(self.alpha_tables[n].get().expect("just set").clone())
    }

    /// Installs a previously computed `α` table, e.g. from an on-disk cache
    /// keyed by [`hash`](Self::hash). Returns `false` if one is already set.
    pub fn install_alpha_table(&self, n: usize, table: Vec<u32>) -> Result<bool> {
        if n < 2 || n > self.sched.n_max() {
            return Err(Error::OutOfRange(format!("tiles exist at levels 2..={}", self.sched.n_max())));
        }
        let geo = self.geom(n);
        if table.len() as u128 != geo.t {
            return Err(Error::Parse(format!("α table has {} entries; level {n} has {}", table.len(), geo.t)));
        }
        let hi = geo.c_prev.max(2) as u32;
        if let Some(a) = table.iter().find(|&&a| a == 0 || a >= hi) {
            return Err(Error::Parse(format!("α value {a} outside 1..{hi}")));
        }
        Ok(self.alpha_tables[n].set(Arc::new(table)).is_ok())
    }

    /// Whether the `α` table of level `n` is already computed.
    pub fn has_alpha_table(&self, n: usize) -> bool {
        self.alpha_tables.get(n).is_some_and(|t| t.get().is_some())
    }

    /// Integer numerator `N(n,j) = Σ_x φ_j^{(n)}(x)`; the shade is `N / 2^{d p_{n−1}}`.
    pub fn shade_numerator(&self, n: usize, j: u64) -> Result<BigInt> {
        self.check_ref(&ColourRef::new(n, j))?;
        if n == 1 {
            return Ok(BigInt::from(self.base[j as usize - 1]));
        }
        let c = self.sched.c(n);
        if j == c {
            return self.density_shade(n);
        }
        Ok(self.shade_table(n)?[j as usize - 1].clone())
    }

    /// `b_j^{(n)}` as an exact rational.
    pub fn shade(&self, r: &ColourRef) -> Result<Rational> {
        let num = self.shade_numerator(r.level, r.index)?;
        Ok(dyadic(num, self.sched.d() as u32 * self.sched.p(r.level - 1)))
    }

    /// `Σ` over the strip `= D·c^{D−1}·Σ_{j'} N(n−1, j')`.
    pub fn strip_sum(&self, n: usize) -> Result<BigInt> {
        let geo = self.geom(n);
        let mut total = BigInt::from(0);
        for jp in 1..=geo.c_prev {
            total += self.shade_numerator(n - 1, jp)?;
        }
        let big_d = self.sched.big_d();
        Ok(total * BigInt::from(big_d) * num_traits::pow(BigInt::from(geo.c_prev), big_d as usize - 1))
    }

    fn shade_table(&self, n: usize) -> Result<&Vec<BigInt>> {
        if let Some(v) = self.shades[n].get() {
            return Ok(v);
        }
        let geo = self.geom(n);
        let strip = self.strip_sum(n)?;
        let prev: Vec<BigInt> =
            (1..geo.c_prev.max(2)).map(|a| self.shade_numerator(n - 1, a)).collect::<Result<_>>()?;
        let table = (1..geo.c)
            .map(|i| {
                let spec = self.mvector(n, i)?;
                Ok(&strip + spec.weighted_sum(|a| prev[a as usize - 1].clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let _ = self.shades[n].set(table);
        Ok(self.shades[n].get().expect("just set"))
    }

    fn density_shade(&self, n: usize) -> Result<BigInt> {
        if let Some(v) = self.density_shades[n].get() {
            return Ok(v.clone());
        }
        let strip = self.strip_sum(n)?;
        let alphas = self.alpha_table(n)?;
        let geo = self.geom(n);
        let prev: Vec<BigInt> =
            (1..geo.c_prev.max(2)).map(|a| self.shade_numerator(n - 1, a)).collect::<Result<_>>()?;
        let mut counts = vec![0u64; prev.len()];
        for &a in alphas.iter() {
            counts[a as usize - 1] += 1;
        }
        let kept: BigInt = counts.iter().zip(&prev).map(|(&k, s)| s * BigInt::from(k)).sum();
        let v = strip + kept;
        let _ = self.density_shades[n].set(v.clone());
        Ok(v)
    }

    /// `Π_{l ≤ m} h_l`, the shade-gap numerator bound at level `m`.
    pub fn h_product(&self, m: usize) -> Result<BigInt> {
        h_product(&self.sched, m)
    }
}

/// The unit-cube image of tile `m` at gap `g`.
pub fn tile_box(multi: &[u128], g: u32) -> DyadicBox {
    let den = pow2(g);
    let lo = multi.iter().map(|&m| Rational::new(BigInt::from(m), den.clone())).collect();
    let hi = multi.iter().map(|&m| Rational::new(BigInt::from(m + 1), den.clone())).collect();
    DyadicBox::new(lo, hi).expect("tile box is well formed")
}

/// 1-based position among kept tiles, or `None` for strip tiles.
pub(crate) fn kept_ordinal(geo: &LevelGeom, multi: &[u128]) -> Option<u128> {
    let strip_len = 2 * geo.blocks;
    let rest = &multi[1..];
    if multi[0] < strip_len && rest.iter().all(|&m| m < 2) {
        return None;
    }
    let lex = multi.iter().fold(0u128, |acc, &m| acc * geo.per_axis + m);
    let tail = rest.len() as u32;
    let mut before = multi[0].min(strip_len) << tail;
    if multi[0] < strip_len {
        for (k, &m) in rest.iter().enumerate() {
            before += m.min(2) << (tail - 1 - k as u32);
            if m >= 2 {
                break;
            }
        }
    }
    Some(lex - before + 1)
}

#[cfg(test)]
mod tests;
