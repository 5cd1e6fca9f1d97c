//! Checks of the two goodness conditions: every tile of a level-`n` colour
//! is a level-`(n−1)` colour (A), and the strip of every colour spells out
//! all `D`-tuples of level-`(n−1)` colours in lexicographic order (B).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::materialize::{Grid, TileTable};
use super::{ColourRef, Engine};
use crate::error::{Error, Result};
use crate::geometry::{CubicSet, LatticePoint};
use crate::schedule::LevelSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GoodnessMode {
    /// Materialize level `n` and compare every cell.
    Direct,
    /// Sample points, descend, and compare with the tile table and the
    /// materialized level `n−1`.
    Descent { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodnessReport {
    pub level: usize,
    pub mode: GoodnessMode,
    pub condition_a: bool,
    pub condition_b: bool,
    /// Cells (direct) or sampled points (descent) compared, per colour.
    pub points_checked: u64,
    pub failures: Vec<String>,
}

impl GoodnessReport {
    pub fn passed(&self) -> bool {
        self.condition_a && self.condition_b
    }
}

const MAX_FAILURES: usize = 20;

pub fn check_goodness(engine: &Engine, n: usize, mode: GoodnessMode) -> Result<GoodnessReport> {
    let s = engine.schedule();
    if n < 2 || n > s.n_max() {
        return Err(Error::Usage(format!("goodness is defined for levels 2..={}", s.n_max())));
    }
    match mode {
        GoodnessMode::Direct => {
            let grids = engine.materialize_level(n)?;
            let prev = engine.materialize_level(n - 1)?;
            Ok(check_goodness_grids(s, n, &grids, &prev))
        }
        GoodnessMode::Descent { samples, seed } => descent_check(engine, n, samples, seed),
    }
}

/// Both conditions on explicit grids; the entry point for fault injection.
pub fn check_goodness_grids(s: &LevelSchedule, n: usize, grids: &[Grid], prev: &[Grid]) -> GoodnessReport {
    let d = s.d();
    let t = s.tile_side(n);
    let mut failures = Vec::new();
    let mut a_ok = true;
    let mut b_ok = true;
    let domain = CubicSet::new(LatticePoint::origin(d), s.cube_side(n)).expect("valid domain");
    let tiles = domain.natural_partition(t).expect("tile side divides the domain");

    for (j, grid) in grids.iter().enumerate() {
        for (idx, tile) in tiles.iter().enumerate() {
            let vals = grid.restrict(tile);
            if !prev.iter().any(|p| p.cells == vals) {
                a_ok = false;
                if failures.len() < MAX_FAILURES {
                    failures.push(format!(
                        "condition (A): colour {} tile #{} at {} matches no level-{} colour",
                        j + 1,
                        idx + 1,
                        tile.base(),
                        n - 1
                    ));
                }
            }
        }
    }

    let big_d = s.big_d() as usize;
    let c_prev = s.c(n - 1);
    let blocks = s.c_pow_d(n - 1).expect("validated");
    for (j, grid) in grids.iter().enumerate() {
        let mut tuple = vec![1u64; big_d];
        for i in 1..=blocks {
            let block = s.strip_block(n - 1, i).expect("block in range");
            for (k, sub) in block.natural_partition(t).expect("halves").iter().enumerate() {
                if grid.restrict(sub) != prev[tuple[k] as usize - 1].cells {
                    b_ok = false;
                    if failures.len() < MAX_FAILURES {
                        failures.push(format!(
                            "condition (B): colour {} block {} sub-cube {} at {} is not colour {} of level {}",
                            j + 1,
                            i,
                            k + 1,
                            sub.base(),
                            tuple[k],
                            n - 1
                        ));
                    }
                }
            }
            for k in (0..big_d).rev() {
                tuple[k] += 1;
                if tuple[k] <= c_prev {
                    break;
                }
                tuple[k] = 1;
            }
        }
    }
    let cells = grids.first().map(|g| g.cells.len() as u64).unwrap_or(0);
    GoodnessReport {
        level: n,
        mode: GoodnessMode::Direct,
        condition_a: a_ok,
        condition_b: b_ok,
        points_checked: cells,
        failures,
    }
}

fn descent_check(engine: &Engine, n: usize, samples: usize, seed: u64) -> Result<GoodnessReport> {
    let s = engine.schedule();
    let d = s.d();
    let prev = engine.materialize_level(n - 1)?;
    let table: TileTable = engine.tile_table(n)?;
    let domain = CubicSet::new(LatticePoint::origin(d), s.cube_side(n))?;
    let t = s.tile_side(n);
    let strip_hi: Vec<i128> = (0..d)
        .map(|q| if q == 0 { 2 * t * s.c_pow_d(n - 1).expect("validated") as i128 } else { 2 * t })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Half of the samples are drawn from the strip so that (B) is exercised.
    let points: Vec<Vec<i128>> = (0..samples)
        .map(|i| {
            (0..d)
                .map(|q| {
                    let hi = if i % 2 == 0 { strip_hi[q] } else { s.cube_side(n) };
                    rng.gen_range(0..hi)
                })
                .collect()
        })
        .collect();
    let c = s.c(n);
    let results = engine.exec().try_map(0..points.len(), |i| -> Result<Vec<String>> {
        let x = &points[i];
        let (idx, tile) = domain.locate(t, x)?;
        let pos = (idx - 1) as usize;
        let local: Vec<i128> = x.iter().zip(tile.base().coords()).map(|(a, b)| a - b).collect();
        let mut out = Vec::new();
        let mut strip_vals = Vec::new();
        for j in 1..=c {
            let got = engine.eval_colour(&ColourRef::new(n, j), x)?;
            let child = table.children[j as usize - 1][pos];
            let want = prev[child as usize - 1].get(&local);
            if got != want {
                let cond = if table.strip[pos] { "(B)" } else { "(A)" };
                out.push(format!(
                    "condition {cond}: colour {j} at {} (tile #{idx}) descends to {got}, tile table gives colour {child} = {want}",
                    LatticePoint(x.clone())
                ));
            }
            if table.strip[pos] {
                strip_vals.push(got);
            }
        }
        if strip_vals.windows(2).any(|w| w[0] != w[1]) {
            out.push(format!("condition (B): strip point {} differs across colours", LatticePoint(x.clone())));
        }
        Ok(out)
    })?;
    let mut failures = Vec::new();
    let mut a_ok = true;
    let mut b_ok = true;
    for msg in results.into_iter().flatten() {
        if msg.starts_with("condition (A)") {
            a_ok = false;
        } else {
            b_ok = false;
        }
        if failures.len() < MAX_FAILURES {
            failures.push(msg);
        }
    }
    Ok(GoodnessReport {
        level: n,
        mode: GoodnessMode::Descent { samples, seed },
        condition_a: a_ok,
        condition_b: b_ok,
        points_checked: samples as u64,
        failures,
    })
}
