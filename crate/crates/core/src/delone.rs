//! The point set `X = ⋃_z z + T_{Ψ(z)}` and its Delone constants.
//!
//! Coordinates are exact dyadic rationals, stored as integer numerators over
//! a common denominator `2^k`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::arith::{dyadic, rat_int, Rational};
use crate::error::{Error, Result};
use crate::geometry::DyadicBox;
use crate::par::Exec;
use crate::psi::PsiField;

/// Markers placed in a unit cell according to `Ψ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MarkerSets {
    d: usize,
    scale_log2: u32,
    /// Numerators over `2^scale_log2`, for colours 1 and 2.
    sets: [Vec<Vec<i128>>; 2],
}

impl MarkerSets {
    /// `T_1 = {1/2}^d`, `T_2 = {1/4, 3/4} × {1/2}^{d−1}`.
    pub fn standard(d: usize) -> Self {
        let t1 = vec![vec![2i128; d]];
        let mut a = vec![2i128; d];
        let mut b = vec![2i128; d];
        a[0] = 1;
        b[0] = 3;
        MarkerSets { d, scale_log2: 2, sets: [t1, vec![a, b]] }
    }

    /// Custom markers; each set must be non-empty, dyadic, free of repeats
    /// and strictly inside the open unit cube.
    pub fn custom(d: usize, t1: &[Vec<Rational>], t2: &[Vec<Rational>]) -> Result<Self> {
        let mut k = 1u32;
        for p in t1.iter().chain(t2) {
            if p.len() != d {
                return Err(Error::Usage(format!("marker has dimension {}, expected {d}", p.len())));
            }
            for c in p {
                let den = c.denom();
                if (den & (den - BigInt::one())) != BigInt::zero() {
                    return Err(Error::Domain(format!("marker coordinate {c} is not dyadic")));
                }
                k = k.max(den.bits() as u32 - 1);
            }
        }
        if k > 60 {
            return Err(Error::Capacity(format!("marker denominators up to 2^{k}")));
        }
        let scale = rat_int(BigInt::one() << k);
        let convert = |set: &[Vec<Rational>]| -> Result<Vec<Vec<i128>>> {
            if set.is_empty() {
                return Err(Error::Domain("marker sets must be non-empty".into()));
            }
            let mut out: Vec<Vec<i128>> = set
                .iter()
                .map(|p| p.iter().map(|c| (c * &scale).to_integer().to_i128().expect("bounded")).collect())
                .collect();
            out.sort();
            let n = out.len();
            out.dedup();
            if out.len() != n {
                return Err(Error::Domain("marker set has a repeated point".into()));
            }
            let top = 1i128 << k;
            if out.iter().flatten().any(|&c| c <= 0 || c >= top) {
                return Err(Error::Domain("markers must lie strictly inside (0,1)^d".into()));
            }
            Ok(out)
        };
        Ok(MarkerSets { d, scale_log2: k, sets: [convert(t1)?, convert(t2)?] })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn scale_log2(&self) -> u32 {
        self.scale_log2
    }

    pub fn set(&self, colour: u8) -> &[Vec<i128>] {
        &self.sets[colour as usize - 1]
    }

    /// `min_m min{sep(T_m), Dist(T_m, ∂[0,1]^d)}` squared; positive for
    /// every accepted marker pair.
    pub fn separation_condition_sq(&self) -> Rational {
        let top = 1i128 << self.scale_log2;
        let mut best: Option<i128> = None;
        let mut take = |v: i128| best = Some(best.map_or(v, |b| b.min(v)));
        for set in &self.sets {
            for (i, p) in set.iter().enumerate() {
                for &c in p {
                    let w = c.min(top - c);
                    take(w * w);
                }
                for q in &set[i + 1..] {
                    take(dist_sq(p, q));
                }
            }
        }
        dyadic(BigInt::from(best.expect("non-empty markers")), 2 * self.scale_log2)
    }
}

fn dist_sq(a: &[i128], b: &[i128]) -> i128 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Points of `X` inside a half-open window, sorted lexicographically.
#[derive(Clone, Debug, Serialize)]
pub struct PointWindow {
    pub d: usize,
    pub scale_log2: u32,
    pub window: DyadicBox,
    pub hash: String,
    /// Numerators over `2^scale_log2`.
    pub points: Vec<Vec<i128>>,
}

impl PointWindow {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec<Rational> {
        self.points[i].iter().map(|&v| dyadic(BigInt::from(v), self.scale_log2)).collect()
    }

    pub fn point_f64(&self, i: usize) -> Vec<f64> {
        let s = (1u64 << self.scale_log2) as f64;
        self.points[i].iter().map(|&v| v as f64 / s).collect()
    }
}

/// Smallest integer `m` with `m ≥ q·2^k`.
fn scaled_ceil(q: &Rational, k: u32) -> Result<i128> {
    let v = q * rat_int(BigInt::one() << k);
    v.ceil().to_integer().to_i128().ok_or_else(|| Error::Capacity(format!("window bound {q} too large")))
}

/// Integer bounds `[lo, hi)` of the window in units of `2^{−k}`.
fn scaled_bounds(window: &DyadicBox, k: u32) -> Result<Vec<(i128, i128)>> {
    window.lo().iter().zip(window.hi()).map(|(l, h)| Ok((scaled_ceil(l, k)?, scaled_ceil(h, k)?))).collect()
}

/// `⋃_z (z + T_{Ψ(z)}) ∩ window`, half-open on every axis.
pub fn points_in_window(field: &PsiField, markers: &MarkerSets, window: &DyadicBox) -> Result<PointWindow> {
    let d = field.dim();
    if window.dim() != d || markers.dim() != d {
        return Err(Error::Usage(format!("window and markers must have dimension {d}")));
    }
    let k = markers.scale_log2();
    let hash = field.engine().hash().to_string();
    if window.is_degenerate() {
        return Ok(PointWindow { d, scale_log2: k, window: window.clone(), hash, points: Vec::new() });
    }
    let bounds = scaled_bounds(window, k)?;
    let unit = 1i128 << k;
    // cells whose closed cube meets the window
    let cells: Vec<(i128, i128)> =
        bounds.iter().map(|&(l, h)| (Integer::div_floor(&l, &unit) - 1, Integer::div_floor(&(h - 1), &unit) + 1)).collect();
    let rows = (cells[0].1 - cells[0].0 + 1) as usize;
    let parts = field.exec().try_map(0..rows, |r| -> Result<Vec<Vec<i128>>> {
        let mut out = Vec::new();
        let mut z: Vec<i128> = cells.iter().map(|c| c.0).collect();
        z[0] += r as i128;
        loop {
            let colour = field.value(&z)?;
            for m in markers.set(colour) {
                let p: Vec<i128> = z.iter().zip(m).map(|(zi, mi)| zi * unit + mi).collect();
                if p.iter().zip(&bounds).all(|(&v, &(l, h))| v >= l && v < h) {
                    out.push(p);
                }
            }
            let mut q = d - 1;
            loop {
                if q == 0 {
                    return Ok(out);
                }
                z[q] += 1;
                if z[q] <= cells[q].1 {
                    break;
                }
                z[q] = cells[q].0;
                q -= 1;
            }
        }
    })?;
    let mut points: Vec<Vec<i128>> = parts.into_iter().flatten().collect();
    points.sort();
    Ok(PointWindow { d, scale_log2: k, window: window.clone(), hash, points })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeloneConstants {
    /// Squared minimum distance between points in the evaluation region.
    pub separation_sq: Rational,
    /// Squared largest probe-to-nearest-point distance.
    pub covering_sq: Rational,
    pub separation: f64,
    pub covering_radius: f64,
    pub region: DyadicBox,
    pub interior_points: usize,
    pub probes: u64,
}

/// Separation and covering radius on the window shrunk by `margin`.
/// Probes sit on a grid of spacing `1/4`.
pub fn delone_constants(pw: &PointWindow, margin: &Rational) -> Result<DeloneConstants> {
    let d = pw.d;
    if margin * margin < rat_int(d as i64) {
        return Err(Error::Usage(format!("margin {margin} is below √{d}")));
    }
    let region = pw
        .window
        .shrink(margin)
        .ok_or_else(|| Error::Degenerate(format!("window {} leaves no region after margin {margin}", pw.window)))?;
    let k = pw.scale_log2.max(2);
    let lift = 1i128 << (k - pw.scale_log2);
    let unit = 1i128 << k;
    let pts: Vec<Vec<i128>> = pw.points.iter().map(|p| p.iter().map(|v| v * lift).collect()).collect();
    let bounds = scaled_bounds(&region, k)?;
    let inside = |p: &[i128]| p.iter().zip(&bounds).all(|(&v, &(l, h))| v >= l && v < h);
    let interior: Vec<usize> = (0..pts.len()).filter(|&i| inside(&pts[i])).collect();
    if pts.len() < 2 || interior.len() < 2 {
        return Err(Error::Degenerate(format!("{} interior points; need at least 2", interior.len())));
    }
    let mut buckets: HashMap<Vec<i128>, Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        buckets.entry(cell_of(p, unit)).or_default().push(i);
    }
    let interior_set: std::collections::HashSet<usize> = interior.iter().copied().collect();

    let seps = Exec::default().map(0..interior.len(), |ii| {
        let i = interior[ii];
        nearest(&pts, &buckets, &pts[i], unit, d, |j| j != i && interior_set.contains(&j))
    });
    let sep = seps.into_iter().flatten().min().ok_or_else(|| Error::Degenerate("no point pairs".into()))?;

    let step = unit / 4;
    let axes: Vec<Vec<i128>> = bounds.iter().map(|&(l, h)| probe_axis(l, h, step)).collect();
    let probes: u64 = axes.iter().map(|a| a.len() as u64).product();
    let rows = axes[0].len();
    let covers = Exec::default().map(0..rows, |r| {
        let mut worst = 0i128;
        let mut idx = vec![0usize; d];
        idx[0] = r;
        loop {
            let q: Vec<i128> = idx.iter().enumerate().map(|(a, &i)| axes[a][i]).collect();
            let best = nearest(&pts, &buckets, &q, unit, d, |_| true).unwrap_or(i128::MAX);
            worst = worst.max(best);
            let mut a = d - 1;
            loop {
                if a == 0 {
                    return worst;
                }
                idx[a] += 1;
                if idx[a] < axes[a].len() {
                    break;
                }
                idx[a] = 0;
                a -= 1;
            }
        }
    });
    let cover = covers.into_iter().max().unwrap_or(0);
    if cover == i128::MAX {
        return Err(Error::Degenerate("a probe has no point in reach".into()));
    }
    let separation_sq = dyadic(BigInt::from(sep), 2 * k);
    let covering_sq = dyadic(BigInt::from(cover), 2 * k);
    Ok(DeloneConstants {
        separation: crate::arith::rational_to_f64(&separation_sq).sqrt(),
        covering_radius: crate::arith::rational_to_f64(&covering_sq).sqrt(),
        separation_sq,
        covering_sq,
        region,
        interior_points: interior.len(),
        probes,
    })
}

fn probe_axis(lo: i128, hi: i128, step: i128) -> Vec<i128> {
    let first = Integer::div_ceil(&lo, &step) * step;
    (0..).map(|i| first + i * step).take_while(|&v| v < hi).collect()
}

fn cell_of(p: &[i128], unit: i128) -> Vec<i128> {
    p.iter().map(|v| Integer::div_floor(v, &unit)).collect()
}

/// Squared distance from `q` to the nearest accepted point, scanning cells
/// in L∞ rings until no closer point can exist.
fn nearest(
    pts: &[Vec<i128>],
    buckets: &HashMap<Vec<i128>, Vec<usize>>,
    q: &[i128],
    unit: i128,
    d: usize,
    accept: impl Fn(usize) -> bool,
) -> Option<i128> {
    let centre = cell_of(q, unit);
    let mut best: Option<i128> = None;
    for ring in 0i128.. {
        // Points in ring `ring` are at least `(ring − 1)` cells away.
        let gap = (ring - 1).max(0) * unit;
        if best.is_some_and(|b| gap * gap > b) || ring > 64 {
            break;
        }
        for_each_ring_cell(&centre, ring, d, |cell| {
            if let Some(ids) = buckets.get(cell) {
                for &j in ids {
                    if accept(j) {
                        let v = dist_sq(&pts[j], q);
                        best = Some(best.map_or(v, |b| b.min(v)));
                    }
                }
            }
        });
    }
    best
}

fn for_each_ring_cell(centre: &[i128], ring: i128, d: usize, mut f: impl FnMut(&Vec<i128>)) {
    let mut off = vec![-ring; d];
    let mut cell = vec![0i128; d];
    loop {
        if off.iter().any(|o| o.abs() == ring) {
            for q in 0..d {
                cell[q] = centre[q] + off[q];
            }
            f(&cell);
        }
        let mut q = d;
        loop {
            if q == 0 {
                return;
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
    fn unit_window_at_origin() {
        let f = c2_field();
        let pw = points_in_window(&f, &MarkerSets::standard(2), &DyadicBox::unit(2)).unwrap();
        assert_eq!(pw.point(0), vec![rat(1, 2), rat(1, 2)]);
        assert_eq!(pw.len(), 1);
    }

    #[test]
    fn degenerate_window_is_empty() {
        let f = c2_field();
        let b = DyadicBox::from_ints(&[0, 0], &[0, 5]).unwrap();
        assert!(points_in_window(&f, &MarkerSets::standard(2), &b).unwrap().is_empty());
    }

    #[test]
    fn cell_counts_follow_psi() {
        let f = c2_field();
        let b = DyadicBox::from_ints(&[-20, -20], &[20, 20]).unwrap();
        let pw = points_in_window(&f, &MarkerSets::standard(2), &b).unwrap();
        let mut counts: HashMap<Vec<i128>, usize> = HashMap::new();
        for p in &pw.points {
            *counts.entry(cell_of(p, 4)).or_default() += 1;
        }
        for x in -20..20 {
            for y in -20..20 {
                let want = f.psi(&[x, y]).unwrap() as usize;
                assert_eq!(counts.get(&vec![x, y]).copied().unwrap_or(0), want);
            }
        }
        assert!(pw.points.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn colour_two_cell_has_points_half_apart() {
        let m = MarkerSets::standard(2);
        assert_eq!(dist_sq(&m.set(2)[0], &m.set(2)[1]), 4);
        assert_eq!(m.separation_condition_sq(), rat(1, 16));
    }

    #[test]
    fn brute_force_constants_on_small_window() {
        let f = c2_field();
        let b = DyadicBox::from_ints(&[-8, -8], &[8, 8]).unwrap();
        let pw = points_in_window(&f, &MarkerSets::standard(2), &b).unwrap();
        let dc = delone_constants(&pw, &rat_int(2)).unwrap();
        assert_eq!(dc.separation_sq, rat(1, 4));
        assert!(dc.covering_sq <= rat(9 * 2, 16));
        // brute force over all interior pairs
        let inside: Vec<&Vec<i128>> =
            pw.points.iter().filter(|p| p.iter().all(|&v| (-24..24).contains(&v))).collect();
        let mut best = i128::MAX;
        for (i, p) in inside.iter().enumerate() {
            for q in &inside[i + 1..] {
                best = best.min(dist_sq(p, q));
            }
        }
        assert_eq!(dyadic(BigInt::from(best), 4), dc.separation_sq);
    }

    #[test]
    fn constants_need_points_and_margin() {
        let f = c2_field();
        let b = DyadicBox::from_ints(&[0, 0], &[1, 1]).unwrap();
        let pw = points_in_window(&f, &MarkerSets::standard(2), &b).unwrap();
        assert!(matches!(delone_constants(&pw, &rat_int(2)), Err(Error::Degenerate(_))));
        assert!(matches!(delone_constants(&pw, &rat_int(1)), Err(Error::Usage(_))));
    }

    #[test]
    fn custom_markers_are_validated() {
        let half = rat(1, 2);
        let ok = MarkerSets::custom(2, &[vec![half.clone(), half.clone()]], &[
            vec![rat(1, 8), half.clone()],
            vec![rat(7, 8), half.clone()],
        ])
        .unwrap();
        assert_eq!(ok.scale_log2(), 3);
        assert_eq!(ok.separation_condition_sq(), rat(1, 64));
        assert!(MarkerSets::custom(2, &[vec![rat(0, 1), half.clone()]], &[vec![half.clone(), half.clone()]]).is_err());
        assert!(MarkerSets::custom(2, &[vec![rat(1, 3), half.clone()]], &[vec![half.clone(), half.clone()]]).is_err());
        assert!(MarkerSets::custom(2, &[vec![half.clone(), half.clone()]], &[]).is_err());
    }
}
