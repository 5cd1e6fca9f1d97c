//! The global colouring `Ψ: ℤ^d → {1,2}` assembled from the nested blocks
//! `s_n + R_1^{(n)}`.
//!
//! For `x` in the block of level `N`, `Ψ(x) = φ_1^{(N+1)}(x − s_N)`. Since
//! `R_1^{(N)}` is strip block 1 of the level-`(N+1)` colour, whose tuple is
//! all ones, this equals `φ_1^{(N)}((x − s_N) mod 2^{p_{N−1}})` and needs
//! only the built levels.

use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{CubicSet, LatticePoint};
use crate::palette::{ColourRef, Engine};
use crate::par::Exec;

/// `Ψ` on the whole coverage, stored densely.
#[derive(Clone, Debug)]
pub struct PsiGrid {
    pub cover: CubicSet,
    pub cells: Vec<u8>,
}

impl PsiGrid {
    pub fn get(&self, x: &[i128]) -> Option<u8> {
        let side = self.cover.side();
        let base = self.cover.base().coords();
        let mut idx = 0usize;
        for (v, b) in x.iter().zip(base) {
            let off = v - b;
            if off < 0 || off >= side {
                return None;
            }
            idx = idx * side as usize + off as usize;
        }
        Some(self.cells[idx])
    }
}

/// A row-major window of `Ψ` values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PsiWindow {
    pub base: Vec<i128>,
    pub side: i128,
    pub cells: Vec<u8>,
}

pub struct PsiField {
    engine: Arc<Engine>,
    shifts: Vec<LatticePoint>,
    covers: Vec<CubicSet>,
    grid: OnceLock<Option<Arc<PsiGrid>>>,
}

impl std::fmt::Debug for PsiField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PsiField").field("coverage", &self.coverage()).finish()
    }
}

impl PsiField {
    pub fn new(engine: Arc<Engine>) -> Result<Self> {
        let s = engine.schedule();
        let d = s.d();
        let mut shifts = vec![LatticePoint::origin(d)];
        let mut covers = Vec::new();
        let mut acc: i128 = 0;
        for n in 1..=s.n_max() {
            if n >= 2 {
                acc = acc
                    .checked_add(1i128 << s.p(n - 1))
                    .ok_or_else(|| Error::Capacity(format!("shift s_{n} overflows")))?;
                shifts.push(LatticePoint::diagonal(d, -acc));
            }
            let side = 1i128
                .checked_shl(s.p(n - 1) + 1)
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::Capacity(format!("block of level {n} overflows")))?;
            covers.push(CubicSet::new(shifts[n - 1].clone(), side)?);
        }
        Ok(PsiField { engine, shifts, covers, grid: OnceLock::new() })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_arc(&self) -> Arc<Engine> {
        self.engine.clone()
    }

    pub fn dim(&self) -> usize {
        self.engine.schedule().d()
    }

    pub fn exec(&self) -> Exec {
        self.engine.exec()
    }

    /// `s_n = −(Σ_{j<n} 2^{p_j})·(1,…,1)`.
    pub fn shift(&self, n: usize) -> Result<LatticePoint> {
        self.engine.schedule().require_level(n)?;
        Ok(self.shifts[n - 1].clone())
    }

    /// `s_n + R_1^{(n)}`.
    pub fn cover(&self, n: usize) -> Result<CubicSet> {
        self.engine.schedule().require_level(n)?;
        Ok(self.covers[n - 1].clone())
    }

    /// The largest built block; `Ψ` is defined exactly here.
    pub fn coverage(&self) -> &CubicSet {
        self.covers.last().expect("at least one level")
    }

    pub fn covers(&self, x: &[i128]) -> bool {
        self.coverage().contains(x)
    }

    /// Smallest `N` with `x ∈ s_N + R_1^{(N)}`.
    pub fn minimal_cover_level(&self, x: &[i128]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::Usage(format!("point has dimension {}, field has {}", x.len(), self.dim())));
        }
        // The blocks are nested, so the first hit is minimal.
        self.covers.iter().position(|c| c.contains(x)).map(|i| i + 1).ok_or_else(|| {
            Error::Capacity(format!(
                "{} lies outside the level-{} block {}; a deeper schedule is needed",
                LatticePoint(x.to_vec()),
                self.covers.len(),
                self.coverage()
            ))
        })
    }

    /// `Ψ(x)` by descent.
    pub fn psi(&self, x: &[i128]) -> Result<u8> {
        let n = self.minimal_cover_level(x)?;
        self.eval_block(n, x)
    }

    /// `φ_1^{(N)}((x − s_N) mod 2^{p_{N−1}})` for `x` in the level-`N` block.
    fn eval_block(&self, n: usize, x: &[i128]) -> Result<u8> {
        let side = self.engine.schedule().cube_side(n);
        let y: Vec<i128> = x.iter().zip(self.shifts[n - 1].coords()).map(|(a, s)| (a - s) % side).collect();
        self.engine.eval_colour(&ColourRef::new(n, 1), &y)
    }

    /// `φ_1^{(M+1)}(x − s_M)` for a covering level `M`. Below the top level
    /// this evaluates the level-`(M+1)` colour directly, strip included.
    pub fn psi_via_level(&self, m: usize, x: &[i128]) -> Result<u8> {
        let cover = self.cover(m)?;
        if !cover.contains(x) {
            return Err(Error::OutOfRange(format!("{} is not in the level-{m} block", LatticePoint(x.to_vec()))));
        }
        if m == self.engine.schedule().n_max() {
            return self.eval_block(m, x);
        }
        let y: Vec<i128> = x.iter().zip(self.shifts[m - 1].coords()).map(|(a, s)| a - s).collect();
        self.engine.eval_colour(&ColourRef::new(m + 1, 1), &y)
    }

    /// Dense `Ψ` on the whole coverage when it has at most `cap` cells.
    pub fn cached_grid(&self) -> Option<Arc<PsiGrid>> {
        self.grid
            .get_or_init(|| {
                let cap = self.engine.options().materialize_cap as u128;
                let cells = self.coverage().cell_count()?;
                if cells > cap {
                    return None;
                }
                match self.build_grid() {
                    Ok(g) => Some(Arc::new(g)),
                    Err(e) => {
                        log::debug!("Ψ grid unavailable: {e}");
                        None
                    }
                }
            })
            .clone()
    }

    fn build_grid(&self) -> Result<PsiGrid> {
        let cover = self.coverage().clone();
        let w = self.window_from_levels(&cover)?;
        Ok(PsiGrid { cover, cells: w.cells })
    }

    /// `Ψ(x)`, from the cached grid when present.
    pub fn value(&self, x: &[i128]) -> Result<u8> {
        if let Some(g) = self.grid.get().and_then(|g| g.as_ref()) {
            if let Some(v) = g.get(x) {
                return Ok(v);
            }
        }
        self.psi(x)
    }

    /// Row-major `Ψ` on a cubic window, `x_1` slowest.
    pub fn psi_window(&self, window: &CubicSet) -> Result<PsiWindow> {
        let cells = window.cell_count().unwrap_or(u128::MAX);
        let cap = self.engine.options().materialize_cap as u128;
        if cells > cap {
            return Err(Error::Capacity(format!("window has {cells} cells; cap is {cap}")));
        }
        if !self.coverage().contains_set(window) {
            return Err(Error::Capacity(format!(
                "window {window} leaves the coverage {}; a deeper schedule is needed",
                self.coverage()
            )));
        }
        if let Some(g) = self.grid.get().and_then(|g| g.as_ref()) {
            return Ok(self.window_from_grid(g, window));
        }
        self.window_from_levels(window)
    }

    fn window_from_grid(&self, g: &PsiGrid, window: &CubicSet) -> PsiWindow {
        let d = self.dim();
        let side = window.side() as usize;
        let mut cells = vec![0u8; side.pow(d as u32)];
        let base = window.base().coords().to_vec();
        let slab = side.pow(d as u32 - 1);
        self.exec().fill_chunks(&mut cells, slab, |i0, out| {
            let mut x = base.clone();
            x[0] += i0 as i128;
            for cell in out.iter_mut() {
                *cell = g.get(&x).expect("window inside coverage");
                advance(&mut x, &base, side as i128);
            }
        });
        PsiWindow { base, side: window.side(), cells }
    }

    /// Window values read from materialized level grids where the cap allows,
    /// falling back to descent.
    fn window_from_levels(&self, window: &CubicSet) -> Result<PsiWindow> {
        let d = self.dim();
        let n_max = self.engine.schedule().n_max();
        let grids: Vec<Option<Arc<Vec<crate::palette::Grid>>>> =
            (1..=n_max).map(|n| self.engine.materialize_level(n).ok()).collect();
        let side = window.side() as usize;
        let base = window.base().coords().to_vec();
        let slab = side.pow(d as u32 - 1);
        let mut cells = vec![0u8; side.pow(d as u32)];
        let failure: OnceLock<Error> = OnceLock::new();
        self.exec().fill_chunks(&mut cells, slab, |i0, out| {
            let mut x = base.clone();
            x[0] += i0 as i128;
            for cell in out.iter_mut() {
                let v = self.minimal_cover_level(&x).and_then(|n| match &grids[n - 1] {
                    Some(g) => {
                        let cs = self.engine.schedule().cube_side(n);
                        let y: Vec<i128> =
                            x.iter().zip(self.shifts[n - 1].coords()).map(|(a, s)| (a - s) % cs).collect();
                        Ok(g[0].get(&y))
                    }
                    None => self.eval_block(n, &x),
                });
                match v {
                    Ok(v) => *cell = v,
                    Err(e) => {
                        let _ = failure.set(e);
                        return;
                    }
                }
                advance(&mut x, &base, side as i128);
            }
        });
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(PsiWindow { base, side: window.side(), cells })
    }

    /// `T_{n,j} = R_{i,k}^{(n)} + s_{n+1}` with the smallest `(i,k)` whose
    /// tuple component is `j`; `Ψ = φ_j^{(n)}(· − bp)` on it.
    pub fn locate_colour_patch(&self, n: usize, j: u64) -> Result<CubicSet> {
        let s = self.engine.schedule();
        if n == 0 || n >= s.n_max() {
            return Err(Error::OutOfRange(format!("colour patches exist for levels 1..{}", s.n_max())));
        }
        if j == 0 || j > s.c(n) {
            return Err(Error::OutOfRange(format!("colour {j} not in 1..={} at level {n}", s.c(n))));
        }
        // Tuple i = j is (1,…,1,j): component D is j and no earlier tuple has j.
        let (i, k) = if j == 1 { (1u128, 1usize) } else { (j as u128, s.big_d() as usize) };
        let block = s.strip_block(n, i)?;
        let sub = block.natural_partition(s.cube_side(n))?[k - 1].clone();
        sub.translate(&self.shifts[n])
    }

    /// `Σ_{x ∈ U} Ψ(x)` over a cubic set, exact.
    pub fn window_sum(&self, window: &CubicSet) -> Result<BigInt> {
        let w = self.psi_window(window)?;
        Ok(BigInt::from(w.cells.iter().map(|&v| v as u64).sum::<u64>()))
    }
}

/// Lexicographic successor of `x` within the cube at `base` (first axis fixed).
fn advance(x: &mut [i128], base: &[i128], side: i128) {
    for k in (1..x.len()).rev() {
        x[k] += 1;
        if x[k] < base[k] + side {
            return;
        }
        x[k] = base[k];
    }
}
