//! Raster and point-list export.

use std::fmt::Write as _;

use num_bigint::BigInt;
use serde::Serialize;

use crate::arith::{dyadic, dyadic_decimal};
use crate::delone::PointWindow;
use crate::error::{Error, Result};
use crate::palette::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum PgmFormat {
    /// ASCII.
    P2,
    /// Binary.
    #[default]
    P5,
}

impl std::str::FromStr for PgmFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P2" => Ok(PgmFormat::P2),
            "P5" => Ok(PgmFormat::P5),
            _ => Err(Error::Parse(format!("unknown PGM format {s:?}; use P2 or P5"))),
        }
    }
}

/// `palette_L{n}_C{j}.pgm`
pub fn pgm_file_name(level: usize, colour: u64) -> String {
    format!("palette_L{level}_C{colour}.pgm")
}

fn grey(v: u8) -> u8 {
    if v == 1 {
        0
    } else {
        255
    }
}

/// Renders a colour grid; columns follow `x_1`, rows follow `x_2`. For
/// `d > 2` the slice `x_3 = … = x_d = 0` is drawn.
pub fn pgm_bytes(grid: &Grid, hash: &str, format: PgmFormat) -> Result<Vec<u8>> {
    let s = grid.side;
    let (w, h) = if grid.d == 1 { (s, 1) } else { (s, s) };
    let mut idx = vec![0i128; grid.d];
    let mut pixels = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            idx[0] = col as i128;
            if grid.d >= 2 {
                idx[1] = row as i128;
            }
            pixels.push(grey(grid.get(&idx)));
        }
    }
    let magic = match format {
        PgmFormat::P2 => "P2",
        PgmFormat::P5 => "P5",
    };
    let mut out = format!("{magic}\n# hash {hash}\n{w} {h}\n255\n").into_bytes();
    match format {
        PgmFormat::P5 => out.extend_from_slice(&pixels),
        PgmFormat::P2 => {
            let mut text = String::new();
            for row in pixels.chunks(w) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                text += &line.join(" ");
                text.push('\n');
            }
            out.extend_from_slice(text.as_bytes());
        }
    }
    Ok(out)
}

/// Width, height and greys of a PGM image produced by [`pgm_bytes`].
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::Parse(format!("PGM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?.to_string());
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let body = &bytes[pos + 1..];
    let px = match fields[0].as_str() {
        "P5" => body.get(..w * h).ok_or_else(|| bad("short body"))?.to_vec(),
        "P2" => std::str::from_utf8(body)
            .map_err(|_| bad("body"))?
            .split_ascii_whitespace()
            .map(|t| t.parse::<u8>().map_err(|_| bad("pixel")))
            .collect::<Result<Vec<u8>>>()?,
        m => return Err(bad(&format!("magic {m}"))),
    };
    if px.len() != w * h {
        return Err(bad("pixel count"));
    }
    Ok((w, h, px))
}

/// Header `x1,…,xd`, one point per row with exact decimal coordinates.
pub fn points_csv(pw: &PointWindow) -> String {
    let mut out = (1..=pw.d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for p in &pw.points {
        let row: Vec<String> = p
            .iter()
            .map(|&v| dyadic_decimal(&dyadic(BigInt::from(v), pw.scale_log2)).expect("dyadic"))
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct PointsMeta {
    pub hash: String,
    pub dimension: usize,
    pub window_lo: Vec<String>,
    pub window_hi: Vec<String>,
    pub points: usize,
}

impl PointsMeta {
    pub fn new(pw: &PointWindow) -> Self {
        let show = |q: &crate::arith::Rational| dyadic_decimal(q).unwrap_or_else(|| q.to_string());
        PointsMeta {
            hash: pw.hash.clone(),
            dimension: pw.d,
            window_lo: pw.window.lo().iter().map(show).collect(),
            window_hi: pw.window.hi().iter().map(show).collect(),
            points: pw.len(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data") + "\n"
    }
}
