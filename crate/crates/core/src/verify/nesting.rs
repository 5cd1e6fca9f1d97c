//! Nested level blocks, their growth margin, level consistency of `Ψ` and
//! the partition of the coverage into colour cubes.

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{CubicSet, LatticePoint};
use crate::psi::PsiField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NestingSpec {
    pub consistency_samples: usize,
    /// Cubes of each partition level compared against the palette.
    pub partition_samples: usize,
    pub seed: u64,
}

impl Default for NestingSpec {
    fn default() -> Self {
        NestingSpec { consistency_samples: 1000, partition_samples: 256, seed: 0x5eed }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelNesting {
    pub level: usize,
    pub block: String,
    pub next_block: Option<String>,
    pub contained: bool,
    /// `2^{p_{n−1}+1} − Σ_{j<n} 2^{p_j}` and `⌈(2/3)·2^{p_{n−1}}⌉`.
    pub margin: String,
    pub growth_bound: String,
    pub growth_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyFailure {
    pub x: Vec<i128>,
    pub minimal_level: usize,
    pub values: Vec<(usize, u8)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionLevel {
    pub level: usize,
    pub cubes_total: String,
    pub cubes_checked: usize,
    /// Cubes where `Ψ` matched no level-`n` colour.
    pub unmatched: Vec<Vec<i128>>,
    /// Set when the level's colours could not be materialized.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NestingReport {
    pub seed: u64,
    pub levels: Vec<LevelNesting>,
    pub consistency_samples: usize,
    pub consistency_comparisons: usize,
    pub consistency_failures: Vec<ConsistencyFailure>,
    pub partition: Vec<PartitionLevel>,
}

impl NestingReport {
    pub fn passed(&self) -> bool {
        self.levels.iter().all(|l| l.contained && l.growth_ok)
            && self.consistency_failures.is_empty()
            && self.partition.iter().all(|p| p.unmatched.is_empty())
    }

    /// Smallest `margin − ⌈(2/3)·2^{p_{n−1}}⌉` over the levels.
    pub fn worst_growth_slack(&self) -> Option<BigInt> {
        self.levels
            .iter()
            .filter_map(|l| {
                let m: BigInt = l.margin.parse().ok()?;
                let b: BigInt = l.growth_bound.parse().ok()?;
                Some(m - b)
            })
            .min()
    }
}

const MAX_LISTED: usize = 20;

pub fn check_nesting(field: &PsiField, spec: NestingSpec) -> Result<NestingReport> {
    let sched = field.engine().schedule();
    let n_max = sched.n_max();
    let mut levels = Vec::new();
    for n in 1..=n_max {
        let block = field.cover(n)?;
        let next = (n < n_max).then(|| field.cover(n + 1)).transpose()?;
        let contained = next.as_ref().is_none_or(|c| c.contains_set(&block));
        let pm1 = BigInt::from(1) << sched.p(n - 1);
        let sum: BigInt = (1..n).map(|j| BigInt::from(1) << sched.p(j)).sum();
        let margin: BigInt = (&pm1 << 1u32) - sum;
        let bound = (&pm1 * 2 + 2) / 3;
        levels.push(LevelNesting {
            level: n,
            block: block.to_string(),
            next_block: next.map(|c| c.to_string()),
            contained,
            growth_ok: margin >= bound,
            margin: margin.to_string(),
            growth_bound: bound.to_string(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut comparisons = 0;
    let mut failures = Vec::new();
    for _ in 0..spec.consistency_samples {
        let level = rng.gen_range(1..=n_max);
        let cover = field.cover(level)?;
        let x: Vec<i128> = cover.base().coords().iter().map(|&b| b + rng.gen_range(0..cover.side())).collect();
        let minimal = field.minimal_cover_level(&x)?;
        let values = (minimal..=n_max)
            .map(|m| Ok((m, field.psi_via_level(m, &x)?)))
            .collect::<Result<Vec<_>>>()?;
        comparisons += values.len().saturating_sub(1);
        if values.windows(2).any(|w| w[0].1 != w[1].1) && failures.len() < MAX_LISTED {
            failures.push(ConsistencyFailure { x, minimal_level: minimal, values });
        }
    }

    let mut partition = Vec::new();
    for n in 1..=n_max {
        partition.push(partition_level(field, n, spec, &mut rng)?);
    }

    Ok(NestingReport {
        seed: spec.seed,
        levels,
        consistency_samples: spec.consistency_samples,
        consistency_comparisons: comparisons,
        consistency_failures: failures,
        partition,
    })
}

/// Cubes of side `2^{p_{n−1}}` based at `s_n + 2^{p_{n−1}}ℤ^d` that lie in
/// the coverage, each compared against every `φ_j^{(n)}`.
fn partition_level(field: &PsiField, n: usize, spec: NestingSpec, rng: &mut ChaCha8Rng) -> Result<PartitionLevel> {
    let engine = field.engine();
    let sched = engine.schedule();
    let d = sched.d();
    let side = sched.cube_side(n);
    let cov = field.coverage();
    let per_axis = cov.side() / side;
    let total = (per_axis as u128).checked_pow(d as u32);
    let mut out = PartitionLevel {
        level: n,
        cubes_total: total.map_or_else(|| format!("{per_axis}^{d}"), |t| t.to_string()),
        cubes_checked: 0,
        unmatched: Vec::new(),
        skipped: None,
    };
    let grids = match engine.materialize_level(n) {
        Ok(g) => g,
        Err(e) => {
            out.skipped = Some(e.to_string());
            return Ok(out);
        }
    };
    let cells = (side as u128).pow(d as u32);
    if cells > engine.options().materialize_cap as u128 {
        out.skipped = Some(format!("cube of {cells} cells exceeds the materialization cap"));
        return Ok(out);
    }
    let picks: Vec<Vec<i128>> = match total {
        Some(t) if t <= spec.partition_samples as u128 => (0..t).map(|lex| unlex(lex, per_axis as u128, d)).collect(),
        _ => (0..spec.partition_samples).map(|_| (0..d).map(|_| rng.gen_range(0..per_axis)).collect()).collect(),
    };
    for m in picks {
        let base: Vec<i128> = m.iter().zip(cov.base().coords()).map(|(&k, &b)| b + k * side).collect();
        let cube = CubicSet::new(LatticePoint(base.clone()), side)?;
        let w = field.psi_window(&cube)?;
        out.cubes_checked += 1;
        if !grids.iter().any(|g| g.cells == w.cells) && out.unmatched.len() < MAX_LISTED {
            out.unmatched.push(base);
        }
    }
    Ok(out)
}

fn unlex(mut lex: u128, per_axis: u128, d: usize) -> Vec<i128> {
    let mut m = vec![0i128; d];
    for q in (0..d).rev() {
        m[q] = (lex % per_axis) as i128;
        lex /= per_axis;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityFn;
    use crate::palette::{Engine, EngineOptions};
    use crate::schedule::{LevelSchedule, PaletteMode};
    use std::sync::Arc;

    fn field(p: Vec<u32>, c: Vec<u64>) -> PsiField {
        let s = LevelSchedule::new(2, p, c, PaletteMode::Plain).unwrap();
        let e = Engine::new(s, DensityFn::constant(2, 1.5).unwrap(), EngineOptions::default()).unwrap();
        PsiField::new(Arc::new(e)).unwrap()
    }

    #[test]
    fn two_level_corner_containment() {
        let f = field(vec![0, 5, 10], vec![2, 2]);
        let rep = check_nesting(&f, NestingSpec { consistency_samples: 50, partition_samples: 16, seed: 1 }).unwrap();
        assert!(rep.passed(), "{rep:?}");
        // level-1 block [0,1]^2 inside the level-2 block [−32, 31]^2
        assert_eq!(f.cover(1).unwrap().base().coords(), &[0, 0]);
        assert_eq!(f.cover(2).unwrap().base().coords(), &[-32, -32]);
        assert_eq!(f.cover(2).unwrap().side(), 64);
    }

    #[test]
    fn growth_margin_at_level_three() {
        let f = field(vec![0, 5, 10, 15], vec![2, 2, 2]);
        let rep = check_nesting(&f, NestingSpec { consistency_samples: 10, partition_samples: 4, seed: 2 }).unwrap();
        // 2^{11} − 2^5 − 2^{10} = 992 ≥ ⌈2048/3⌉ = 683
        assert_eq!(rep.levels[2].margin, "992");
        assert_eq!(rep.levels[2].growth_bound, "683");
        assert!(rep.passed());
    }

    #[test]
    fn single_level_is_vacuous() {
        let f = field(vec![0, 5], vec![2]);
        let rep = check_nesting(&f, NestingSpec::default()).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.consistency_comparisons, 0);
    }
}
