//! Dense grids of whole palettes, built level by level from the natural
//! partition, an odometer over `D`-tuples and box-intersection strip
//! detection. This route shares no arithmetic with the descent and serves
//! as its oracle.

use std::sync::Arc;

use num_bigint::BigInt;

use super::{ColourRef, Engine};
use crate::error::{Error, Result};
use crate::geometry::{CubicSet, LatticePoint};

/// Row-major `{1,2}` grid on `{0..side−1}^d`, `x_1` slowest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    pub d: usize,
    pub side: usize,
    pub cells: Vec<u8>,
}

impl Grid {
    pub fn index(&self, x: &[i128]) -> usize {
        x.iter().fold(0usize, |acc, &v| acc * self.side + v as usize)
    }

    pub fn get(&self, x: &[i128]) -> u8 {
        self.cells[self.index(x)]
    }

    pub fn sum(&self) -> BigInt {
        BigInt::from(self.cells.iter().map(|&v| v as u64).sum::<u64>())
    }

    /// Values on `cube`, in row-major order of the cube.
    pub fn restrict(&self, cube: &CubicSet) -> Vec<u8> {
        let s = cube.side() as usize;
        let mut out = Vec::with_capacity(s.pow(self.d as u32));
        let base = cube.base().coords();
        let mut x = base.to_vec();
        loop {
            let start = self.index(&x);
            out.extend_from_slice(&self.cells[start..start + s]);
            let mut k = self.d - 1;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                x[k] += 1;
                if x[k] < base[k] + s as i128 {
                    break;
                }
                x[k] = base[k];
            }
        }
    }
}

/// Which level-`(n−1)` colour fills each level-`n` tile, per colour `j`.
#[derive(Clone, Debug)]
pub struct TileTable {
    pub tiles: Vec<CubicSet>,
    /// `children[j−1][tile]`
    pub children: Vec<Vec<u64>>,
    pub strip: Vec<bool>,
    /// Kept-tile ordinal, 0 for strip tiles.
    pub ordinal: Vec<u128>,
}

impl Engine {
    /// Tile table of level `n ≥ 2`, built from the natural partition.
    pub fn tile_table(&self, n: usize) -> Result<TileTable> {
        let s = self.schedule();
        let d = s.d();
        let big_d = s.big_d() as usize;
        let t = s.tile_side(n);
        let c_prev = s.c(n - 1);
        let c = s.c(n);
        let domain = CubicSet::new(LatticePoint::origin(d), s.cube_side(n))?;
        let tiles = domain.natural_partition(t)?;
        let per_axis = (s.cube_side(n) / t) as usize;

        let mut strip_child: std::collections::HashMap<Vec<i128>, u64> = std::collections::HashMap::new();
        let mut tuple = vec![1u64; big_d];
        let blocks = s.c_pow_d(n - 1).expect("validated");
        for i in 1..=blocks {
            let block = s.strip_block(n - 1, i)?;
            for (k, sub) in block.natural_partition(t)?.into_iter().enumerate() {
                strip_child.insert(sub.base().0.clone(), tuple[k]);
            }
            // odometer over [c_prev]^D, last component fastest
            for k in (0..big_d).rev() {
                tuple[k] += 1;
                if tuple[k] <= c_prev {
                    break;
                }
                tuple[k] = 1;
            }
        }
        let strip_hi: Vec<i128> = (0..d).map(|q| if q == 0 { 2 * t * blocks as i128 } else { 2 * t }).collect();

        let mvecs = (1..c).map(|j| self.mvector(n, j)).collect::<Result<Vec<_>>>()?;
        // Indexed by the running kept-tile counter, not by the descent's ordinal.
        let alphas = self.alpha_table(n)?;
        let mut children = vec![Vec::with_capacity(tiles.len()); c as usize];
        let mut strip = Vec::with_capacity(tiles.len());
        let mut ordinal = Vec::with_capacity(tiles.len());
        let mut kept = 0u128;
        for tile in &tiles {
            let meets = tile.base().coords().iter().zip(&strip_hi).all(|(&b, &h)| b < h);
            if meets {
                let child = *strip_child
                    .get(&tile.base().0)
                    .ok_or_else(|| Error::Invariant(format!("strip tile {tile} is not a sub-cube of any block")))?;
                for ch in children.iter_mut() {
                    ch.push(child);
                }
                strip.push(true);
                ordinal.push(0);
            } else {
                kept += 1;
                for (j, spec) in mvecs.iter().enumerate() {
                    children[j].push(spec.entry(kept)?);
                }
                children[c as usize - 1].push(alphas[(kept - 1) as usize] as u64);
                strip.push(false);
                ordinal.push(kept);
            }
        }
        debug_assert_eq!(tiles.len(), per_axis.pow(d as u32));
        Ok(TileTable { tiles, children, strip, ordinal })
    }

    fn check_cap(&self, n: usize) -> Result<u64> {
        let s = self.schedule();
        let bits = s.d() as u64 * s.p(n - 1) as u64;
        let cap = self.options().materialize_cap;
        if bits >= 63 || (1u64 << bits) > cap {
            return Err(Error::Capacity(format!(
                "level {n} has 2^{bits} cells; materialization cap is {cap}"
            )));
        }
        Ok(1u64 << bits)
    }

    /// Every colour of level `n` as a dense grid.
    pub fn materialize_level(&self, n: usize) -> Result<Arc<Vec<Grid>>> {
        self.schedule().require_level(n)?;
        self.check_cap(n)?;
        if let Some(g) = self.grids[n].get() {
            return Ok(g.clone());
        }
        let d = self.schedule().d();
        let grids = if n == 1 {
            super::base_palette(self.schedule().c(1))?
                .into_iter()
                .map(|v| Grid { d, side: 1, cells: vec![v] })
                .collect()
        } else {
            let prev = self.materialize_level(n - 1)?;
            let table = self.tile_table(n)?;
            self.assemble(n, &prev, &table)
        };
        let _ = self.grids[n].set(Arc::new(grids));
        Ok(self.grids[n].get().expect("just set").clone())
    }

    fn assemble(&self, n: usize, prev: &[Grid], table: &TileTable) -> Vec<Grid> {
        let s = self.schedule();
        let d = s.d();
        let side = s.cube_side(n) as usize;
        let t = s.tile_side(n) as usize;
        let per_axis = side / t;
        let slab = side.pow(d as u32 - 1);
        (0..s.c(n) as usize)
            .map(|j| {
                let mut cells = vec![0u8; side.pow(d as u32)];
                let children = &table.children[j];
                self.exec().fill_chunks(&mut cells, slab, |x0, out| {
                    let mut x = vec![0usize; d];
                    x[0] = x0;
                    for cell in out.iter_mut() {
                        let tile = x.iter().fold(0usize, |acc, &v| acc * per_axis + v / t);
                        let local = x.iter().fold(0usize, |acc, &v| acc * t + v % t);
                        *cell = prev[children[tile] as usize - 1].cells[local];
                        for k in (1..d).rev() {
                            x[k] += 1;
                            if x[k] < side {
                                break;
                            }
                            x[k] = 0;
                        }
                    }
                });
                Grid { d, side, cells }
            })
            .collect()
    }

    /// One colour as a dense grid; fails above the materialization cap.
    pub fn materialize(&self, r: &ColourRef) -> Result<Grid> {
        self.schedule().require_level(r.level)?;
        let c = self.schedule().c(r.level);
        if r.index == 0 || r.index > c {
            return Err(Error::OutOfRange(format!("colour {} not in 1..={c}", r.index)));
        }
        Ok(self.materialize_level(r.level)?[r.index as usize - 1].clone())
    }
}
