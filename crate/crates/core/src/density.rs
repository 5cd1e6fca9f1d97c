//! Target densities `ρ: [0,1]^d → [4/3, 5/3]` and their integrals over boxes.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::arith::{parse_rational, rational_to_f64, Rational};
use crate::error::{Error, Result};
use crate::geometry::DyadicBox;

pub const RANGE_LO: f64 = 4.0 / 3.0;
pub const RANGE_HI: f64 = 5.0 / 3.0;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_CELL_CAP: u64 = 1 << 24;

/// Config-file form: `{"kind": …, "params": {…}, "depth": k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
}

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Constant(f64),
    /// `a + b·x_axis`, clipped to the range.
    Affine { a: f64, b: f64, axis: usize },
    /// `lo` on cells with even `Σ⌊2^k x_i⌋`, `hi` on odd ones.
    Checkerboard { lo: f64, hi: f64 },
    /// `3/2 + Σ_{l=1}^{k} (1/6)·2^{−l}·(−1)^{Σ⌊2^l x_i⌋}`
    Oscillating,
    /// Row-major values on the `2^k` grid, `x_1` slowest.
    Table(Arc<Vec<f64>>),
    Custom(Evaluator),
}

/// An evaluable, integrable density. Piecewise-constant kinds on a dyadic
/// grid integrate exactly; the affine kind integrates in closed form.
#[derive(Clone)]
pub struct DensityFn {
    d: usize,
    kind: Kind,
    /// Grid depth for piecewise-constant kinds.
    depth: Option<u32>,
    canonical: String,
}

impl fmt::Debug for DensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityFn({})", self.canonical)
    }
}

fn param(spec: &DensitySpec, key: &str) -> Result<Option<(Rational, f64)>> {
    let Some(v) = spec.params.get(key) else { return Ok(None) };
    let q = match v {
        Value::Number(n) => parse_rational(&n.to_string()),
        Value::String(s) => parse_rational(s),
        _ => None,
    }
    .ok_or_else(|| Error::Parse(format!("density parameter {key:?} must be a number or \"a/b\"")))?;
    let f = rational_to_f64(&q);
    Ok(Some((q, f)))
}

fn require(spec: &DensitySpec, key: &str) -> Result<(Rational, f64)> {
    param(spec, key)?.ok_or_else(|| Error::Parse(format!("density kind {:?} needs parameter {key:?}", spec.kind)))
}

fn check_range(name: &str, v: f64) -> Result<()> {
    if !(RANGE_LO - 1e-12..=RANGE_HI + 1e-12).contains(&v) {
        return Err(Error::Domain(format!("{name} = {v} lies outside [4/3, 5/3]")));
    }
    Ok(())
}

impl DensityFn {
    pub fn constant(d: usize, value: f64) -> Result<Self> {
        check_range("constant value", value)?;
        Ok(DensityFn {
            d,
            kind: Kind::Constant(value),
            depth: Some(0),
            canonical: json!({"kind": "constant", "params": {"value": value}}).to_string(),
        })
    }

    pub fn affine(d: usize, a: f64, b: f64, axis: usize) -> Result<Self> {
        if axis == 0 || axis > d {
            return Err(Error::Domain(format!("affine axis must be in 1..={d}, got {axis}")));
        }
        Ok(DensityFn {
            d,
            kind: Kind::Affine { a, b, axis: axis - 1 },
            depth: None,
            canonical: json!({"kind": "affine", "params": {"a": a, "b": b, "axis": axis}}).to_string(),
        })
    }

    pub fn checkerboard(d: usize, depth: u32, lo: f64, hi: f64) -> Result<Self> {
        check_range("checkerboard lo", lo)?;
        check_range("checkerboard hi", hi)?;
        Ok(DensityFn {
            d,
            kind: Kind::Checkerboard { lo, hi },
            depth: Some(depth),
            canonical: json!({"kind": "checkerboard", "params": {"lo": lo, "hi": hi}, "depth": depth}).to_string(),
        })
    }

    pub fn oscillating(d: usize, depth: u32) -> Result<Self> {
        Ok(DensityFn {
            d,
            kind: Kind::Oscillating,
            depth: Some(depth),
            canonical: json!({"kind": "oscillating", "depth": depth}).to_string(),
        })
    }

    /// `values` has `2^{d·depth}` entries, row-major with `x_1` slowest.
    pub fn table(d: usize, depth: u32, values: Vec<f64>) -> Result<Self> {
        let expected = 1usize
            .checked_shl(d as u32 * depth)
            .filter(|_| d as u32 * depth < 40)
            .ok_or_else(|| Error::Capacity(format!("table of depth {depth} in dimension {d}")))?;
        if values.len() != expected {
            return Err(Error::Parse(format!("table needs {expected} values, found {}", values.len())));
        }
        for (i, &v) in values.iter().enumerate() {
            check_range(&format!("table value #{i}"), v)?;
        }
        let mut h = Sha256::new();
        for v in &values {
            h.update(v.to_le_bytes());
        }
        let digest = hex::encode(h.finalize());
        Ok(DensityFn {
            d,
            kind: Kind::Table(Arc::new(values)),
            depth: Some(depth),
            canonical: json!({"kind": "table", "depth": depth, "params": {"sha256": digest}}).to_string(),
        })
    }

    /// Arbitrary evaluator; integrated by adaptive midpoint refinement.
    /// `label` enters the provenance hash.
    pub fn custom(d: usize, label: &str, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        DensityFn {
            d,
            kind: Kind::Custom(Arc::new(f)),
            depth: None,
            canonical: json!({"kind": "custom", "params": {"label": label}}).to_string(),
        }
    }

    /// Build from a config spec. Table paths resolve against `base_dir`.
    pub fn from_spec(spec: &DensitySpec, d: usize, base_dir: &Path) -> Result<Self> {
        match spec.kind.as_str() {
            "constant" => {
                let value = param(spec, "value")?.map(|v| v.1).unwrap_or(1.5);
                DensityFn::constant(d, value)
            }
            "affine" | "affine-clipped" => {
                let a = require(spec, "a")?.1;
                let b = require(spec, "b")?.1;
                let axis = param(spec, "axis")?.map(|v| v.1 as usize).unwrap_or(1);
                DensityFn::affine(d, a, b, axis)
            }
            "checkerboard" | "dyadic-checkerboard" => {
                let lo = param(spec, "lo")?.map(|v| v.1).unwrap_or(RANGE_LO);
                let hi = param(spec, "hi")?.map(|v| v.1).unwrap_or(RANGE_HI);
                DensityFn::checkerboard(d, spec.depth.unwrap_or(1), lo, hi)
            }
            "oscillating" => DensityFn::oscillating(d, spec.depth.unwrap_or(4)),
            "table" => {
                let path = spec
                    .params
                    .get("path")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Parse("table density needs params.path".into()))?;
                let text = std::fs::read_to_string(base_dir.join(path))?;
                let (depth, values) = parse_table(&text)?;
                if let Some(want) = spec.depth {
                    if want != depth {
                        return Err(Error::Parse(format!("table header depth {depth} ≠ spec depth {want}")));
                    }
                }
                DensityFn::table(d, depth, values)
            }
            other => Err(Error::Parse(format!(
                "unknown density kind {other:?} (constant, affine, checkerboard, oscillating, table)"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Compact JSON identifying the density; part of every provenance hash.
    pub fn canonical_json(&self) -> &str {
        &self.canonical
    }

    /// Grid depth when the density is piecewise constant on dyadic cells.
    pub fn exact_depth(&self) -> Option<u32> {
        self.depth
    }

    fn raw(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Constant(v) => *v,
            Kind::Affine { a, b, axis } => a + b * x[*axis],
            Kind::Checkerboard { lo, hi } => {
                if cell_parity(x, self.depth.unwrap_or(0)) {
                    *hi
                } else {
                    *lo
                }
            }
            Kind::Oscillating => {
                let mut v = 1.5;
                for l in 1..=self.depth.unwrap_or(0) {
                    let sign = if cell_parity(x, l) { -1.0 } else { 1.0 };
                    v += sign * (1.0 / 6.0) * (0.5f64).powi(l as i32);
                }
                v
            }
            Kind::Table(values) => {
                let k = self.depth.unwrap_or(0);
                let n = 1usize << k;
                let idx = x.iter().fold(0usize, |acc, &xi| acc * n + cell_index(xi, k) as usize);
                values[idx]
            }
            Kind::Custom(f) => f(x),
        }
    }

    /// `ρ(x)` for `x ∈ [0,1]^d`, clamped to `[4/3, 5/3]`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d || x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain(format!("density evaluated outside [0,1]^{}: {x:?}", self.d)));
        }
        Ok(self.clamped(x))
    }

    fn clamped(&self, x: &[f64]) -> f64 {
        let v = self.raw(x);
        if v < RANGE_LO || v > RANGE_HI {
            log::warn!("density value {v} at {x:?} clamped to [4/3, 5/3]");
            v.clamp(RANGE_LO, RANGE_HI)
        } else {
            v
        }
    }

    /// `∫_box ρ`. Exact for piecewise-constant kinds on aligned or unaligned
    /// boxes and for the affine kind; adaptive midpoint otherwise.
    pub fn integrate_box(&self, b: &DyadicBox, tol: f64) -> Result<f64> {
        self.integrate_box_capped(b, tol, DEFAULT_CELL_CAP)
    }

    pub fn integrate_box_capped(&self, b: &DyadicBox, tol: f64, cap: u64) -> Result<f64> {
        if b.dim() != self.d {
            return Err(Error::Domain(format!("box dimension {} ≠ density dimension {}", b.dim(), self.d)));
        }
        let zero = Rational::from_integer(0.into());
        let one = Rational::from_integer(1.into());
        if b.lo().iter().any(|l| *l < zero) || b.hi().iter().any(|h| *h > one) {
            return Err(Error::Domain(format!("box {b} is not inside the unit cube")));
        }
        if b.is_degenerate() {
            return Ok(0.0);
        }
        let lo = b.lo_f64();
        let hi = b.hi_f64();
        match &self.kind {
            Kind::Constant(v) => Ok(v.clamp(RANGE_LO, RANGE_HI) * volume(&lo, &hi)),
            Kind::Affine { a, b: slope, axis } => {
                let others: f64 = (0..self.d).filter(|k| k != axis).map(|k| hi[k] - lo[k]).product();
                Ok(others * clipped_linear_integral(*a, *slope, lo[*axis], hi[*axis]))
            }
            Kind::Custom(_) => self.adaptive(&lo, &hi, tol, cap),
            _ => self.piecewise(&lo, &hi, cap),
        }
    }

    /// Sum of value × overlap over the grid cells meeting the box.
    fn piecewise(&self, lo: &[f64], hi: &[f64], cap: u64) -> Result<f64> {
        let k = self.depth.unwrap_or(0);
        let n = (1u64 << k) as f64;
        let axes: Vec<Vec<(f64, f64)>> = (0..self.d)
            .map(|q| {
                let first = (lo[q] * n).floor() as u64;
                let last = ((hi[q] * n).ceil() as u64).max(first + 1);
                (first..last)
                    .filter_map(|i| {
                        let a = (i as f64 / n).max(lo[q]);
                        let b = ((i + 1) as f64 / n).min(hi[q]);
                        (b > a).then(|| ((i as f64 + 0.5) / n, b - a))
                    })
                    .collect()
            })
            .collect();
        let cells: u64 = axes.iter().map(|a| a.len() as u64).product();
        if cells > cap {
            return Err(Error::Capacity(format!("box meets {cells} density cells (cap {cap})")));
        }
        let mut total = 0.0;
        let mut idx = vec![0usize; self.d];
        let mut mid = vec![0.0; self.d];
        'outer: loop {
            let mut w = 1.0;
            for q in 0..self.d {
                let (m, len) = axes[q][idx[q]];
                mid[q] = m;
                w *= len;
            }
            total += w * self.clamped(&mid);
            for q in (0..self.d).rev() {
                idx[q] += 1;
                if idx[q] < axes[q].len() {
                    continue 'outer;
                }
                idx[q] = 0;
            }
            break;
        }
        Ok(total)
    }

    /// Tensor midpoint rule on `2^{d·k}` cells, doubling `k` until two
    /// successive estimates agree to `tol` relatively.
    fn adaptive(&self, lo: &[f64], hi: &[f64], tol: f64, cap: u64) -> Result<f64> {
        let vol = volume(lo, hi);
        let mut prev = vol * self.clamped(&lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<_>>());
        let mut k = 1u32;
        loop {
            let per_axis = 1u64 << k;
            let cells = per_axis.checked_pow(self.d as u32).unwrap_or(u64::MAX);
            if cells > cap {
                return Err(Error::Integration { estimate: prev, cells });
            }
            let mut total = 0.0;
            let mut idx = vec![0u64; self.d];
            let mut x = vec![0.0; self.d];
            for _ in 0..cells {
                for q in 0..self.d {
                    x[q] = lo[q] + (hi[q] - lo[q]) * (idx[q] as f64 + 0.5) / per_axis as f64;
                }
                total += self.clamped(&x);
                for q in (0..self.d).rev() {
                    idx[q] += 1;
                    if idx[q] < per_axis {
                        break;
                    }
                    idx[q] = 0;
                }
            }
            let est = total * vol / cells as f64;
            if (est - prev).abs() <= tol * est.abs().max(f64::MIN_POSITIVE) {
                return Ok(est);
            }
            prev = est;
            k += 1;
        }
    }
}

fn volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(a, b)| b - a).product()
}

/// Index of the depth-`k` dyadic cell holding `x`; `x = 1` joins the last cell.
fn cell_index(x: f64, k: u32) -> u64 {
    let n = 1u64 << k;
    ((x * n as f64).floor() as u64).min(n - 1)
}

fn cell_parity(x: &[f64], k: u32) -> bool {
    x.iter().map(|&xi| cell_index(xi, k)).sum::<u64>() % 2 == 1
}

/// `∫_l^h clamp(a + b·x, 4/3, 5/3) dx`
fn clipped_linear_integral(a: f64, b: f64, l: f64, h: f64) -> f64 {
    if b == 0.0 {
        return (h - l) * a.clamp(RANGE_LO, RANGE_HI);
    }
    // Breakpoints where the line crosses the clip levels.
    let mut cuts = vec![l, h];
    for level in [RANGE_LO, RANGE_HI] {
        let x = (level - a) / b;
        if x > l && x < h {
            cuts.push(x);
        }
    }
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.windows(2)
        .map(|w| {
            let (x0, x1) = (w[0], w[1]);
            let m = 0.5 * (x0 + x1);
            let v = a + b * m;
            if v <= RANGE_LO {
                RANGE_LO * (x1 - x0)
            } else if v >= RANGE_HI {
                RANGE_HI * (x1 - x0)
            } else {
                (x1 - x0) * (a + b * m)
            }
        })
        .sum()
}

/// Table file: a `depth k` header line, then `2^{d·k}` whitespace-separated
/// values (decimals or `a/b`). `#` starts a comment.
pub fn parse_table(text: &str) -> Result<(u32, Vec<f64>)> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace());
    match tokens.next() {
        Some("depth") => {}
        _ => return Err(Error::Parse("table file must start with \"depth <k>\"".into())),
    }
    let depth: u32 = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse("table depth must be a non-negative integer".into()))?;
    let values = tokens
        .map(|t| {
            parse_rational(t)
                .map(|q| rational_to_f64(&q))
                .ok_or_else(|| Error::Parse(format!("bad table value {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((depth, values))
}
