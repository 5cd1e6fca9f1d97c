//! Cubic sets on ℤ^d, their lexicographically ordered natural partitions,
//! open lattice balls and axis-aligned dyadic boxes.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{rat_int, Rational, Surd};
use crate::error::{Error, Result};

/// A point of ℤ^d. Coordinates are 128-bit; arithmetic that can overflow is checked.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint(pub Vec<i128>);

impl LatticePoint {
    pub fn new(coords: Vec<i128>) -> Self {
        LatticePoint(coords)
    }

    pub fn origin(d: usize) -> Self {
        LatticePoint(vec![0; d])
    }

    /// `v·(1,…,1)`
    pub fn diagonal(d: usize, v: i128) -> Self {
        LatticePoint(vec![v; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i128] {
        &self.0
    }

    pub fn checked_add(&self, other: &LatticePoint) -> Result<LatticePoint> {
        zip_checked(self, other, i128::checked_add)
    }

    pub fn checked_sub(&self, other: &LatticePoint) -> Result<LatticePoint> {
        zip_checked(self, other, i128::checked_sub)
    }

    pub fn norm_sq(&self) -> i128 {
        self.0.iter().map(|c| c * c).sum()
    }
}

fn zip_checked(
    a: &LatticePoint,
    b: &LatticePoint,
    op: fn(i128, i128) -> Option<i128>,
) -> Result<LatticePoint> {
    assert_eq!(a.dim(), b.dim(), "dimension mismatch");
    a.0.iter()
        .zip(&b.0)
        .map(|(&x, &y)| op(x, y).ok_or_else(|| Error::Capacity(format!("coordinate overflow in {a} ± {b}"))))
        .collect::<Result<Vec<_>>>()
        .map(LatticePoint)
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<i128>> for LatticePoint {
    fn from(v: Vec<i128>) -> Self {
        LatticePoint(v)
    }
}

/// `∏ {x_i, …, x_i + s − 1}` for a base point `x` and sidelength `s ≥ 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CubicSet {
    base: LatticePoint,
    side: i128,
}

impl CubicSet {
    pub fn new(base: LatticePoint, side: i128) -> Result<Self> {
        if side < 1 {
            return Err(Error::Domain(format!("cubic set sidelength must be ≥ 1, got {side}")));
        }
        if base.dim() == 0 {
            return Err(Error::Domain("cubic set needs dimension ≥ 1".into()));
        }
        base.0
            .iter()
            .try_for_each(|c| c.checked_add(side).map(|_| ()))
            .ok_or_else(|| Error::Capacity(format!("cubic set {base}+[0,{side}) overflows")))?;
        Ok(CubicSet { base, side })
    }

    pub fn base(&self) -> &LatticePoint {
        &self.base
    }

    pub fn side(&self) -> i128 {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Number of lattice points, if it fits in `u128`.
    pub fn cell_count(&self) -> Option<u128> {
        (self.side as u128).checked_pow(self.dim() as u32)
    }

    pub fn maximal_corner(&self) -> LatticePoint {
        LatticePoint(self.base.0.iter().map(|b| b + self.side - 1).collect())
    }

    pub fn contains(&self, x: &[i128]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.base.0).all(|(&c, &b)| c >= b && c - b < self.side)
    }

    pub fn contains_set(&self, other: &CubicSet) -> bool {
        self.contains(other.base.coords()) && self.contains(other.maximal_corner().coords())
    }

    pub fn translate(&self, v: &LatticePoint) -> Result<CubicSet> {
        CubicSet::new(self.base.checked_add(v)?, self.side)
    }

    fn check_divides(&self, r: i128) -> Result<i128> {
        if r < 1 || self.side % r != 0 {
            return Err(Error::Divisibility { part: r, whole: self.side });
        }
        Ok(self.side / r)
    }

    /// The `r`-natural partition, ordered lexicographically in the multi-index
    /// `(x_1, …, x_d)` with `x_1` most significant.
    pub fn natural_partition(&self, r: i128) -> Result<Vec<CubicSet>> {
        let per_axis = self.check_divides(r)?;
        let total = (per_axis as u128)
            .checked_pow(self.dim() as u32)
            .filter(|&t| t <= 1 << 28)
            .ok_or_else(|| Error::Capacity(format!("natural partition with {per_axis}^{} members", self.dim())))?;
        let d = self.dim();
        let mut out = Vec::with_capacity(total as usize);
        let mut idx = vec![0i128; d];
        for _ in 0..total {
            let base = LatticePoint(
                idx.iter().zip(&self.base.0).map(|(&m, &b)| b + m * r).collect(),
            );
            out.push(CubicSet { base, side: r });
            // odometer, last axis fastest
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(out)
    }

    /// 1-based position of the member of the `r`-natural partition containing
    /// `x`, together with that member.
    pub fn locate(&self, r: i128, x: &[i128]) -> Result<(u128, CubicSet)> {
        let per_axis = self.check_divides(r)?;
        if !self.contains(x) {
            return Err(Error::OutOfRange(format!(
                "{} is not in the cube {}+[0,{})^d",
                LatticePoint(x.to_vec()),
                self.base,
                self.side
            )));
        }
        let mut index: u128 = 0;
        let mut base = Vec::with_capacity(self.dim());
        for (&c, &b) in x.iter().zip(&self.base.0) {
            let m = (c - b) / r;
            index = index
                .checked_mul(per_axis as u128)
                .and_then(|i| i.checked_add(m as u128))
                .ok_or_else(|| Error::Capacity("partition index overflow".into()))?;
            base.push(b + m * r);
        }
        Ok((index + 1, CubicSet { base: LatticePoint(base), side: r }))
    }
}

impl fmt::Display for CubicSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+[0,{})^{}", self.base, self.side, self.dim())
    }
}

/// All `z ∈ ℤ^d` with `|z − center| < radius` (open Euclidean ball), in
/// lexicographic order.
pub fn lattice_ball(center: &[Rational], radius: &Surd) -> Result<Vec<LatticePoint>> {
    if radius.signum() <= 0 {
        return Err(Error::Domain(format!("ball radius must be positive, got {radius}")));
    }
    let d = center.len();
    let r_sq = radius.square();
    let r_hi: BigInt = radius.floor() + 1;
    let ranges: Vec<(i128, i128)> = center
        .iter()
        .map(|c| {
            let lo = (c - rat_int(r_hi.clone())).floor().to_integer();
            let hi = (c + rat_int(r_hi.clone())).ceil().to_integer();
            Ok((to_i128(&lo)?, to_i128(&hi)?))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut z: Vec<i128> = ranges.iter().map(|r| r.0).collect();
    loop {
        let dist_sq: Rational = z
            .iter()
            .zip(center)
            .map(|(&zi, ci)| {
                let diff = rat_int(zi) - ci;
                &diff * &diff
            })
            .fold(Rational::zero(), |acc, t| acc + t);
        if r_sq.cmp_rational(&dist_sq) == Ordering::Greater {
            out.push(LatticePoint(z.clone()));
        }
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            z[k] += 1;
            if z[k] <= ranges[k].1 {
                break;
            }
            z[k] = ranges[k].0;
        }
    }
}

/// Offsets `z` with `|z|² < r²` for a surd radius, as a lexicographic list.
pub fn ball_offsets(d: usize, radius: &Surd) -> Result<Vec<LatticePoint>> {
    lattice_ball(&vec![Rational::zero(); d], radius)
}

fn to_i128(v: &BigInt) -> Result<i128> {
    v.to_i128().ok_or_else(|| Error::Capacity(format!("{v} exceeds 128-bit coordinates")))
}

/// Axis-aligned region `∏ [lo_i, hi_i)` with exact rational bounds.
/// Degenerate boxes (`lo_i = hi_i` for some `i`) are allowed and empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicBox {
    lo: Vec<Rational>,
    hi: Vec<Rational>,
}

impl DyadicBox {
    pub fn new(lo: Vec<Rational>, hi: Vec<Rational>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Domain("box bounds must have equal, non-zero dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Domain("box needs lo ≤ hi in every coordinate".into()));
        }
        Ok(DyadicBox { lo, hi })
    }

    pub fn from_ints(lo: &[i64], hi: &[i64]) -> Result<Self> {
        DyadicBox::new(lo.iter().map(|&v| rat_int(v)).collect(), hi.iter().map(|&v| rat_int(v)).collect())
    }

    /// The unit cube `[0,1)^d`.
    pub fn unit(d: usize) -> Self {
        DyadicBox { lo: vec![Rational::zero(); d], hi: vec![rat_int(1); d] }
    }

    pub fn lo(&self) -> &[Rational] {
        &self.lo
    }

    pub fn hi(&self) -> &[Rational] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l == h)
    }

    pub fn volume(&self) -> Rational {
        self.lo.iter().zip(&self.hi).fold(rat_int(1), |acc, (l, h)| acc * (h - l))
    }

    pub fn contains(&self, x: &[Rational]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(c, (l, h))| c >= l && c < h)
    }

    /// Box shrunk by `m` on every side; `None` if nothing remains.
    pub fn shrink(&self, m: &Rational) -> Option<DyadicBox> {
        let lo: Vec<Rational> = self.lo.iter().map(|l| l + m).collect();
        let hi: Vec<Rational> = self.hi.iter().map(|h| h - m).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return None;
        }
        Some(DyadicBox { lo, hi })
    }

    pub fn lo_f64(&self) -> Vec<f64> {
        self.lo.iter().map(crate::arith::rational_to_f64).collect()
    }

    pub fn hi_f64(&self) -> Vec<f64> {
        self.hi.iter().map(crate::arith::rational_to_f64).collect()
    }
}

impl fmt::Display for DyadicBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.lo.iter().zip(&self.hi).map(|(l, h)| format!("[{l},{h})")).collect();
        write!(f, "{}", parts.join("×"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{parse_rational, rat};
    use proptest::prelude::*;

    fn cube(base: &[i128], side: i128) -> CubicSet {
        CubicSet::new(LatticePoint(base.to_vec()), side).unwrap()
    }

    fn bases(v: &[CubicSet]) -> Vec<Vec<i128>> {
        v.iter().map(|c| c.base().0.clone()).collect()
    }

    #[test]
    fn maximal_corner_examples() {
        assert_eq!(cube(&[0, 0], 1).maximal_corner().0, vec![0, 0]);
        assert_eq!(cube(&[3, -2], 4).maximal_corner().0, vec![6, 1]);
        assert_eq!(cube(&[0, 0, 0], 2).maximal_corner().0, vec![1, 1, 1]);
    }

    #[test]
    fn natural_partition_examples() {
        let p = cube(&[0, 0], 2).natural_partition(1).unwrap();
        assert_eq!(bases(&p), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        let p = cube(&[0, 0], 4).natural_partition(4).unwrap();
        assert_eq!(p, vec![cube(&[0, 0], 4)]);
        let p = cube(&[8, 0], 4).natural_partition(2).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p[0].base().0, vec![8, 0]);
        assert_eq!(p[3].base().0, vec![10, 2]);
    }

    #[test]
    fn natural_partition_rejects_non_divisor() {
        assert_eq!(
            cube(&[0, 0], 6).natural_partition(4),
            Err(Error::Divisibility { part: 4, whole: 6 })
        );
    }

    #[test]
    fn locate_examples() {
        let (i, s) = cube(&[0, 0], 2).locate(1, &[1, 0]).unwrap();
        assert_eq!((i, s.base().0.clone()), (3, vec![1, 0]));
        assert_eq!(cube(&[0, 0], 4).locate(4, &[3, 3]).unwrap().0, 1);
        let (i, s) = cube(&[0, 0], 4).locate(2, &[2, 3]).unwrap();
        assert_eq!((i, s.base().0.clone()), (4, vec![2, 2]));
        assert!(matches!(cube(&[0, 0], 4).locate(2, &[4, 0]), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn lattice_ball_examples() {
        let origin = vec![rat_int(0), rat_int(0)];
        let b = lattice_ball(&origin, &Surd::int(1)).unwrap();
        assert_eq!(b, vec![LatticePoint(vec![0, 0])]);
        let b = lattice_ball(&origin, &Surd::rational(rat(3, 2))).unwrap();
        let got: Vec<Vec<i128>> = b.into_iter().map(|p| p.0).collect();
        assert_eq!(got.len(), 9);
        let b = lattice_ball(&origin, &Surd::root(rat_int(1), 2)).unwrap();
        let got: Vec<Vec<i128>> = b.into_iter().map(|p| p.0).collect();
        assert_eq!(got, vec![vec![-1, 0], vec![0, -1], vec![0, 0], vec![0, 1], vec![1, 0]]);
        let half = vec![rat(1, 2), rat(1, 2)];
        let b = lattice_ball(&half, &Surd::rational(parse_rational("0.8").unwrap())).unwrap();
        let got: Vec<Vec<i128>> = b.into_iter().map(|p| p.0).collect();
        assert_eq!(got, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert!(lattice_ball(&origin, &Surd::int(0)).is_err());
    }

    #[test]
    fn lattice_ball_with_surd_radius() {
        // radius 2 + 3√2 ≈ 6.243; (6,0) is inside, (4,5) has |z|² = 41 > 38.97
        let r = Surd { a: rat_int(2), b: rat_int(3), m: 2 };
        let ball = ball_offsets(2, &r).unwrap();
        assert!(ball.contains(&LatticePoint(vec![6, 0])));
        assert!(!ball.contains(&LatticePoint(vec![4, 5])));
        assert!(ball.contains(&LatticePoint(vec![3, 5])));
    }

    #[test]
    fn degenerate_box_is_empty() {
        let b = DyadicBox::from_ints(&[0, 0], &[0, 4]).unwrap();
        assert!(b.is_degenerate());
        assert!(DyadicBox::from_ints(&[1, 0], &[0, 4]).is_err());
        assert_eq!(DyadicBox::unit(3).volume(), rat_int(1));
    }

    /// Exhaustive disjointness/cover and locate∘partition identity for small cubes.
    #[test]
    fn partition_is_exact_cover_small_cases() {
        for d in 1..=3usize {
            for per_axis in 1..=8i128 {
                if (per_axis as u64).pow(d as u32) > 4096 {
                    continue;
                }
                for r in [1i128, 2, 3] {
                    let s = cube(&vec![-5; d], per_axis * r);
                    let parts = s.natural_partition(r).unwrap();
                    assert_eq!(parts.len() as i128, per_axis.pow(d as u32));
                    let mut counts = std::collections::HashMap::new();
                    for (idx, p) in parts.iter().enumerate() {
                        for_each_point(p, |x| {
                            *counts.entry(x.to_vec()).or_insert(0) += 1;
                            let (li, ls) = s.locate(r, x).unwrap();
                            assert_eq!(li as usize, idx + 1);
                            assert_eq!(&ls, p);
                        });
                    }
                    assert_eq!(counts.len() as u128, s.cell_count().unwrap());
                    assert!(counts.values().all(|&c| c == 1));
                }
            }
        }
    }

    fn for_each_point(c: &CubicSet, mut f: impl FnMut(&[i128])) {
        let d = c.dim();
        let mut x = c.base().0.clone();
        loop {
            f(&x);
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                x[k] += 1;
                if x[k] < c.base().0[k] + c.side() {
                    break;
                }
                x[k] = c.base().0[k];
            }
        }
    }

    proptest! {
        #[test]
        fn ball_matches_bounding_box_filter(
            cx in -40i64..40, cy in -40i64..40, den in 1i64..5,
            rn in 1i64..80, rd in 1i64..4,
        ) {
            let center = vec![rat(cx, den), rat(cy, den)];
            let radius = rat(rn, rd);
            prop_assume!(radius <= rat_int(20));
            let ball = lattice_ball(&center, &Surd::rational(radius.clone())).unwrap();
            // brute force over a generous square using floats on exact squares
            let mut brute = Vec::new();
            for x in -70i128..=70 {
                for y in -70i128..=70 {
                    let dx = rat_int(x) - &center[0];
                    let dy = rat_int(y) - &center[1];
                    if &dx * &dx + &dy * &dy < &radius * &radius {
                        brute.push(LatticePoint(vec![x, y]));
                    }
                }
            }
            prop_assert_eq!(ball, brute);
        }

        #[test]
        fn locate_inverts_partition(bx in -100i128..100, by in -100i128..100, k in 1i128..6, r in 1i128..5, px in 0i128..1000, py in 0i128..1000) {
            let s = cube(&[bx, by], k * r);
            let x = [bx + px % (k * r), by + py % (k * r)];
            let (idx, sub) = s.locate(r, &x).unwrap();
            prop_assert!(sub.contains(&x));
            let parts = s.natural_partition(r).unwrap();
            prop_assert_eq!(&parts[(idx - 1) as usize], &sub);
        }
    }
}
