//! The run configuration: one JSON document, overridden by flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use delone_core::density::DensitySpec;
use delone_core::schedule::bk_schedule;
use delone_core::{DensityFn, Error, LevelSchedule, Result};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BkSpec {
    pub d: usize,
    pub n_max: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Explicit(LevelSchedule),
    Bk { bk_schedule: BkSpec },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    pub materialize: Option<u64>,
    pub alpha_budget: Option<u128>,
    pub quad_cells: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    /// Lower and upper corners as decimal or `a/b` strings or numbers.
    pub lo: Vec<serde_json::Value>,
    pub hi: Vec<serde_json::Value>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: Option<ScheduleSpec>,
    pub density: Option<DensitySpec>,
    pub window: Option<Window>,
    pub level: Option<usize>,
    pub radii: Option<Vec<i64>>,
    pub net_radii: Option<Vec<i64>>,
    pub pairs: Option<usize>,
    pub net_pairs: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub caps: Option<Caps>,
    pub format: Option<String>,
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.output = cfg.output.map(|o| cfg.base_dir.join(o));
        Ok(cfg)
    }

    pub fn schedule(&self) -> Result<LevelSchedule> {
        match &self.schedule {
            Some(ScheduleSpec::Explicit(s)) => Ok(s.clone()),
            Some(ScheduleSpec::Bk { bk_schedule: b }) => Ok(bk_schedule(b.d, b.n_max)?.schedule),
            None => Err(Error::Parse("config has no schedule".into())),
        }
    }

    pub fn density(&self, d: usize) -> Result<DensityFn> {
        match &self.density {
            Some(spec) => DensityFn::from_spec(spec, d, &self.base_dir),
            None => DensityFn::constant(d, 1.5),
        }
    }
}

/// A coordinate given as a JSON number or an exact `a/b` or decimal string.
pub fn parse_coord(v: &serde_json::Value) -> Result<delone_core::Rational> {
    let text = match v {
        serde_json::Value::Number(n) => n.to_string(),
        serde_json::Value::String(s) => s.clone(),
        other => return Err(Error::Parse(format!("window coordinate {other} is not a number"))),
    };
    delone_core::arith::parse_rational(&text).ok_or_else(|| Error::Parse(format!("bad coordinate {text:?}")))
}
