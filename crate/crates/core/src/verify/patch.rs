//! Patches and translate search.
//!
//! Every search reduces to: find the lexicographically first `v ∈ ℤ^d` with
//! `|v − centre| ≤ budget` such that `Ψ(p + v) = Ψ(p)` on a list of pattern
//! cells `p`. Candidates that would read outside the coverage are skipped.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::arith::{dyadic, rat_int, rational_to_f64, Rational, Surd};
use crate::delone::MarkerSets;
use crate::error::{Error, Result};
use crate::geometry::{ball_offsets, LatticePoint};
use crate::par::Exec;
use crate::psi::PsiField;

/// Pattern cell `p` with required value `Ψ(p + v)`.
pub type PatternCell = (Vec<i128>, u8);

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum PatchContent {
    /// `z ↦ Ψ(centre + z)` on `ℤ^d ∩ B(0,r)`, offsets lexicographic.
    Lattice { offsets: Vec<Vec<i128>>, values: Vec<u8> },
    /// `X ∩ B(centre, r) − centre`, numerators over `2^scale_log2`, sorted.
    Points { scale_log2: u32, points: Vec<Vec<i128>> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Patch {
    pub centre: Vec<String>,
    pub radius: String,
    pub content: PatchContent,
}

/// Looks up `Ψ`, preferring the cached coverage grid.
pub(crate) struct PsiLookup<'a> {
    field: &'a PsiField,
    grid: Option<std::sync::Arc<crate::psi::PsiGrid>>,
}

impl<'a> PsiLookup<'a> {
    pub(crate) fn new(field: &'a PsiField) -> Self {
        PsiLookup { field, grid: field.cached_grid() }
    }

    /// `None` outside the coverage.
    pub(crate) fn get(&self, x: &[i128]) -> Option<u8> {
        match &self.grid {
            Some(g) => g.get(x),
            None => {
                if !self.field.covers(x) {
                    return None;
                }
                self.field.psi(x).ok()
            }
        }
    }
}

/// The `Ψ`-patch at lattice point `x` with radius `r`.
pub fn extract_psi_patch(field: &PsiField, x: &[i128], r: &Surd) -> Result<Patch> {
    let offsets: Vec<Vec<i128>> = ball_offsets(field.dim(), r)?.into_iter().map(|p| p.0).collect();
    let lookup = PsiLookup::new(field);
    let mut values = Vec::with_capacity(offsets.len());
    for z in &offsets {
        let y: Vec<i128> = x.iter().zip(z).map(|(a, b)| a + b).collect();
        values.push(lookup.get(&y).ok_or_else(|| coverage_error(field, &y))?);
    }
    Ok(Patch {
        centre: x.iter().map(|v| v.to_string()).collect(),
        radius: r.to_string(),
        content: PatchContent::Lattice { offsets, values },
    })
}

fn coverage_error(field: &PsiField, y: &[i128]) -> Error {
    Error::Capacity(format!("{} lies outside the coverage {}", LatticePoint(y.to_vec()), field.coverage()))
}

/// `X ∩ B(x, r) − x` for a dyadic point `x` given as numerators over
/// `2^{markers.scale_log2()}`.
pub fn extract_point_patch(field: &PsiField, markers: &MarkerSets, x: &[i128], r: &Rational) -> Result<Patch> {
    let k = markers.scale_log2();
    let unit = 1i128 << k;
    let lookup = PsiLookup::new(field);
    let mut points = Vec::new();
    let in_ball = |u: &[i128], colour: u8| -> Vec<Vec<i128>> {
        markers
            .set(colour)
            .iter()
            .map(|m| u.iter().zip(m).map(|(a, b)| a * unit + b).collect::<Vec<i128>>())
            .filter(|p| in_open_ball(p, x, r, k))
            .collect()
    };
    for u in cells_near(x, r, unit) {
        let (one, two) = (in_ball(&u, 1), in_ball(&u, 2));
        // cells whose colour does not change the patch need no lookup
        let chosen = if one == two {
            one
        } else {
            match lookup.get(&u).ok_or_else(|| coverage_error(field, &u))? {
                1 => one,
                _ => two,
            }
        };
        points.extend(chosen.into_iter().map(|p| p.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<i128>>()));
    }
    points.sort();
    Ok(Patch {
        centre: x.iter().map(|&v| dyadic(BigInt::from(v), k).to_string()).collect(),
        radius: r.to_string(),
        content: PatchContent::Points { scale_log2: k, points },
    })
}

/// Cells whose closed cube may meet `B(x, r)`, lexicographic.
fn cells_near(x: &[i128], r: &Rational, unit: i128) -> Vec<Vec<i128>> {
    let reach = (r.ceil().to_integer().to_i128().unwrap_or(0)) + 1;
    let lo: Vec<i128> = x.iter().map(|&v| v.div_euclid(unit) - reach).collect();
    let hi: Vec<i128> = x.iter().map(|&v| v.div_euclid(unit) + reach).collect();
    let mut out = Vec::new();
    let mut u = lo.clone();
    loop {
        out.push(u.clone());
        let mut q = u.len();
        loop {
            if q == 0 {
                return out;
            }
            q -= 1;
            u[q] += 1;
            if u[q] <= hi[q] {
                break;
            }
            u[q] = lo[q];
        }
    }
}

/// `|p − x| < r` with `p`, `x` numerators over `2^k`.
fn in_open_ball(p: &[i128], x: &[i128], r: &Rational, k: u32) -> bool {
    let d2: i128 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    let lhs = dyadic(BigInt::from(d2), 2 * k);
    lhs < r * r
}

/// Cells `u` near `x` where colours 1 and 2 put different marker subsets
/// into `B(x, r)`; `X ∩ B(x+v, r) = X ∩ B(x, r) + v` holds iff
/// `Ψ(u+v) = Ψ(u)` on exactly these cells.
pub fn constraining_cells(markers: &MarkerSets, x: &[i128], r: &Rational) -> Vec<Vec<i128>> {
    let k = markers.scale_log2();
    let unit = 1i128 << k;
    let subset = |u: &[i128], colour: u8| -> Vec<Vec<i128>> {
        markers
            .set(colour)
            .iter()
            .map(|m| u.iter().zip(m).map(|(a, b)| a * unit + b).collect::<Vec<i128>>())
            .filter(|p| in_open_ball(p, x, r, k))
            .collect()
    };
    cells_near(x, r, unit).into_iter().filter(|u| subset(u, 1) != subset(u, 2)).collect()
}

/// Pattern for matching the `Ψ`-patch at lattice point `x`.
pub fn psi_pattern(field: &PsiField, x: &[i128], r: &Surd) -> Result<Vec<PatternCell>> {
    let patch = extract_psi_patch(field, x, r)?;
    match patch.content {
        PatchContent::Lattice { offsets, values } => Ok(offsets.into_iter().zip(values).collect()),
        PatchContent::Points { .. } => unreachable!("lattice patch"),
    }
}

/// Pattern for matching the `X`-patch at `x` under integer translation.
pub fn point_pattern(field: &PsiField, markers: &MarkerSets, x: &[i128], r: &Rational) -> Result<Vec<PatternCell>> {
    let lookup = PsiLookup::new(field);
    constraining_cells(markers, x, r)
        .into_iter()
        .map(|u| {
            let v = lookup.get(&u).ok_or_else(|| coverage_error(field, &u))?;
            Ok((u, v))
        })
        .collect()
}

/// Closed-ball membership `|v − c|² ≤ b²`, float fast path with an exact
/// fallback near the boundary.
struct BallTest {
    centre: Vec<Rational>,
    centre_f: Vec<f64>,
    budget_sq: Surd,
    budget_sq_f: f64,
}

impl BallTest {
    fn new(centre: &[Rational], budget: &Surd) -> Option<Self> {
        if budget.signum() < 0 {
            return None;
        }
        let budget_sq = budget.square();
        Some(BallTest {
            centre_f: centre.iter().map(rational_to_f64).collect(),
            centre: centre.to_vec(),
            budget_sq_f: budget_sq.to_f64(),
            budget_sq,
        })
    }

    fn partial_f(&self, v: &[i128]) -> f64 {
        v.iter().zip(&self.centre_f).map(|(&a, c)| (a as f64 - c).powi(2)).sum()
    }

    fn contains(&self, v: &[i128]) -> bool {
        let f = self.partial_f(v);
        let slack = 1e-9 * (1.0 + self.budget_sq_f);
        if f < self.budget_sq_f - slack {
            return true;
        }
        if f > self.budget_sq_f + slack {
            return false;
        }
        let exact: Rational = v
            .iter()
            .zip(&self.centre)
            .map(|(&a, c)| {
                let t = rat_int(a) - c;
                &t * &t
            })
            .fold(Rational::zero(), |s, t| s + t);
        self.budget_sq.cmp_rational(&exact) != Ordering::Less
    }

    /// Integer range of axis `q` given the squared distance already used.
    fn axis_range(&self, q: usize, used: f64) -> (i128, i128) {
        let rem = (self.budget_sq_f - used).max(0.0).sqrt() + 1.0;
        ((self.centre_f[q] - rem).floor() as i128, (self.centre_f[q] + rem).ceil() as i128)
    }
}

/// Cells of the rarer value first, so mismatching candidates fail early.
fn rare_first(pattern: &[PatternCell]) -> Vec<PatternCell> {
    let twos = pattern.iter().filter(|c| c.1 == 2).count();
    let rare = if 2 * twos <= pattern.len() { 2 } else { 1 };
    let mut ordered = pattern.to_vec();
    ordered.sort_by_key(|c| c.1 != rare);
    ordered
}

/// Lexicographically first `v` with `|v − centre| ≤ budget` and
/// `Ψ(p + v) = val` for every pattern cell.
pub fn search_shift(
    field: &PsiField,
    pattern: &[PatternCell],
    centre: &[Rational],
    budget: &Surd,
    exec: Exec,
) -> Result<Option<Vec<i128>>> {
    let d = field.dim();
    if centre.len() != d {
        return Err(Error::Usage("search centre has the wrong dimension".into()));
    }
    let Some(ball) = BallTest::new(centre, budget) else {
        return Ok(None);
    };
    if pattern.is_empty() {
        return Err(Error::Usage("empty pattern".into()));
    }
    let ordered = rare_first(pattern);
    let pattern = ordered.as_slice();
    let lookup = PsiLookup::new(field);
    let cov = field.coverage();
    let cov_lo = cov.base().coords();
    let cov_hi: Vec<i128> = cov.maximal_corner().0;
    // v keeps every pattern cell inside the coverage
    let mut v_lo = vec![i128::MIN; d];
    let mut v_hi = vec![i128::MAX; d];
    for (p, _) in pattern {
        for q in 0..d {
            v_lo[q] = v_lo[q].max(cov_lo[q] - p[q]);
            v_hi[q] = v_hi[q].min(cov_hi[q] - p[q]);
        }
    }
    let (r0, r1) = ball.axis_range(0, 0.0);
    let lo0 = r0.max(v_lo[0]);
    let hi0 = r1.min(v_hi[0]);
    if lo0 > hi0 {
        return Ok(None);
    }
    let hit = exec.find_first(lo0..hi0 + 1, |v0| {
        let mut v = vec![0i128; d];
        v[0] = v0;
        scan(&ball, &lookup, pattern, &v_lo, &v_hi, &mut v, 1)
    });
    Ok(hit)
}

fn scan(
    ball: &BallTest,
    lookup: &PsiLookup<'_>,
    pattern: &[PatternCell],
    v_lo: &[i128],
    v_hi: &[i128],
    v: &mut Vec<i128>,
    q: usize,
) -> Option<Vec<i128>> {
    let d = v.len();
    if q == d {
        if !ball.contains(v) {
            return None;
        }
        let ok = pattern.iter().all(|(p, val)| {
            let y: Vec<i128> = p.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
            lookup.get(&y) == Some(*val)
        });
        return ok.then(|| v.clone());
    }
    let used = ball.partial_f(&v[..q]);
    let (a, b) = ball.axis_range(q, used);
    for x in a.max(v_lo[q])..=b.min(v_hi[q]) {
        v[q] = x;
        if let Some(hit) = scan(ball, lookup, pattern, v_lo, v_hi, v, q + 1) {
            return Some(hit);
        }
    }
    None
}

/// The matching `v` closest to `centre` (ties: lexicographically first),
/// within `budget`. Returns `v` and `|v − centre|²`.
pub fn nearest_shift(
    field: &PsiField,
    pattern: &[PatternCell],
    centre: &[Rational],
    budget: &Surd,
    exec: Exec,
) -> Result<Option<(Vec<i128>, Rational)>> {
    let d = field.dim();
    let Some(ball) = BallTest::new(centre, budget) else {
        return Ok(None);
    };
    let ordered = rare_first(pattern);
    let pattern = ordered.as_slice();
    let lookup = PsiLookup::new(field);
    let round: Vec<i128> = centre
        .iter()
        .map(|c| c.round().to_integer().to_i128().expect("centre within range"))
        .collect();
    let half = crate::arith::rat(1, 2);
    let mut best: Option<(Vec<i128>, Rational)> = None;
    for ring in 0i128.. {
        // every cell of ring ρ is at least ρ − 1/2 from the centre
        let gap = (rat_int(ring) - &half).max(Rational::zero());
        let gap_sq = &gap * &gap;
        if let Some((_, b)) = &best {
            if gap_sq > *b {
                break;
            }
        }
        if budget.square().cmp_rational(&gap_sq) == Ordering::Less {
            break;
        }
        let cells = ring_cells(&round, ring, d);
        let hits = exec.map(0..cells.len(), |i| {
            let v = &cells[i];
            if !ball.contains(v) {
                return None;
            }
            let ok = pattern.iter().all(|(p, val)| {
                let y: Vec<i128> = p.iter().zip(v).map(|(a, b)| a + b).collect();
                lookup.get(&y) == Some(*val)
            });
            ok.then(|| {
                let dist: Rational = v
                    .iter()
                    .zip(centre)
                    .map(|(&a, c)| {
                        let t = rat_int(a) - c;
                        &t * &t
                    })
                    .fold(Rational::zero(), |s, t| s + t);
                (v.clone(), dist)
            })
        });
        for (v, dist) in hits.into_iter().flatten() {
            let better = match &best {
                None => true,
                Some((bv, bd)) => dist < *bd || (dist == *bd && v < *bv),
            };
            if better {
                best = Some((v, dist));
            }
        }
    }
    Ok(best)
}

fn ring_cells(centre: &[i128], ring: i128, d: usize) -> Vec<Vec<i128>> {
    let mut out = Vec::new();
    let mut off = vec![-ring; d];
    loop {
        if off.iter().any(|o| o.abs() == ring) {
            out.push(centre.iter().zip(&off).map(|(c, o)| c + o).collect());
        }
        let mut q = d;
        loop {
            if q == 0 {
                return out;
            }
            q -= 1;
            off[q] += 1;
            if off[q] <= ring {
                break;
            }
            off[q] = -ring;
        }
    }
}

/// Some `w` with `B(w, r) ⊆ B(y, R)` whose `Ψ`-patch equals that of `x`;
/// lexicographically first.
pub fn find_patch_translate(field: &PsiField, x: &[i128], r: &Surd, y: &[i128], big_r: &Surd) -> Result<Option<Vec<i128>>> {
    let pattern = psi_pattern(field, x, r)?;
    let centre: Vec<Rational> = y.iter().map(|&v| rat_int(v)).collect();
    search_shift(field, &pattern, &centre, &big_r.sub(r), field.exec())
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
    fn tiny_radius_gives_single_cell() {
        let f = c2_field();
        let p = extract_psi_patch(&f, &[5, 7], &Surd::int(1)).unwrap();
        match p.content {
            PatchContent::Lattice { offsets, values } => {
                assert_eq!(offsets, vec![vec![0, 0]]);
                assert_eq!(values, vec![f.psi(&[5, 7]).unwrap()]);
            }
            _ => panic!("lattice patch expected"),
        }
    }

    #[test]
    fn patch_matches_window_excerpt() {
        let f = c2_field();
        let r = Surd::int(4);
        let p = extract_psi_patch(&f, &[-10, 3], &r).unwrap();
        let PatchContent::Lattice { offsets, values } = p.content else { panic!() };
        for (z, v) in offsets.iter().zip(values) {
            assert_eq!(f.psi(&[-10 + z[0], 3 + z[1]]).unwrap(), v);
        }
        assert_eq!(extract_psi_patch(&f, &[-10, 3], &r).unwrap(), extract_psi_patch(&f, &[-10, 3], &r).unwrap());
    }

    #[test]
    fn identity_translate_is_found() {
        let f = c2_field();
        let r = Surd::int(3);
        let w = find_patch_translate(&f, &[40, -17], &r, &[40, -17], &Surd::int(3)).unwrap();
        assert_eq!(w, Some(vec![40, -17]));
        // R < r: no ball fits
        let none = find_patch_translate(&f, &[40, -17], &r, &[40, -17], &Surd::int(2)).unwrap();
        assert_eq!(none, None);
    }

    #[test]
    fn search_is_lexicographically_first() {
        let f = c2_field();
        let r = Surd::int(2);
        let pattern = psi_pattern(&f, &[0, 0], &r).unwrap();
        let centre = vec![rat_int(100), rat_int(100)];
        let budget = Surd::int(40);
        let seq = search_shift(&f, &pattern, &centre, &budget, Exec::Sequential).unwrap().unwrap();
        let par = search_shift(&f, &pattern, &centre, &budget, Exec::default()).unwrap().unwrap();
        assert_eq!(seq, par);
        // brute force
        let mut first = None;
        'outer: for a in 60..=140i128 {
            for b in 60..=140i128 {
                if (a - 100).pow(2) + (b - 100).pow(2) > 1600 {
                    continue;
                }
                if pattern.iter().all(|(p, v)| f.psi(&[p[0] + a, p[1] + b]).unwrap() == *v) {
                    first = Some(vec![a, b]);
                    break 'outer;
                }
            }
        }
        assert_eq!(Some(seq), first);
    }

    #[test]
    fn nearest_shift_is_closest() {
        let f = c2_field();
        let pattern = psi_pattern(&f, &[3, 3], &Surd::int(3)).unwrap();
        let centre = vec![rat(201, 2), rat_int(-50)];
        let (v, dist) = nearest_shift(&f, &pattern, &centre, &Surd::int(80), Exec::default()).unwrap().unwrap();
        let mut best = None::<Rational>;
        for a in 20..=181i128 {
            for b in -130..=30i128 {
                let dd = (rat_int(a) - &centre[0]).pow(2) + (rat_int(b) - &centre[1]).pow(2);
                if dd > rat_int(6400) {
                    continue;
                }
                if pattern.iter().all(|(p, val)| f.psi(&[p[0] + a, p[1] + b]).unwrap() == *val) {
                    if best.as_ref().is_none_or(|bd| dd < *bd) {
                        best = Some(dd);
                    }
                }
            }
        }
        assert_eq!(Some(dist.clone()), best);
        assert!(pattern.iter().all(|(p, val)| f.psi(&[p[0] + v[0], p[1] + v[1]]).unwrap() == *val));
    }

    #[test]
    fn constraining_cells_decide_point_patches() {
        let f = c2_field();
        let m = MarkerSets::standard(2);
        let x = vec![4 * 7 + 2, 4 * 3 + 2];
        let r = rat_int(2);
        let cells = constraining_cells(&m, &x, &r);
        assert!(!cells.is_empty());
        let patch = extract_point_patch(&f, &m, &x, &r).unwrap();
        // scan translates; patch equality must coincide with Ψ agreement on the cells
        for a in -40..40i128 {
            for b in -5..5i128 {
                let y = vec![x[0] + 4 * a, x[1] + 4 * b];
                let other = extract_point_patch(&f, &m, &y, &r).unwrap();
                let agree = cells.iter().all(|u| f.psi(u).unwrap() == f.psi(&[u[0] + a, u[1] + b]).unwrap());
                assert_eq!(agree, patch.content == other.content, "shift ({a},{b})");
            }
        }
    }
}
