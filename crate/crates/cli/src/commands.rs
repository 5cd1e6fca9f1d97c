use std::path::{Path, PathBuf};
use std::sync::Arc;

use delone_core::delone::{points_in_window, MarkerSets};
use delone_core::density::DensitySpec;
use delone_core::export::{pgm_bytes, pgm_file_name, points_csv, PgmFormat, PointsMeta};
use delone_core::palette::{check_goodness, check_goodness_grids, GoodnessMode, GoodnessReport};
use delone_core::schedule::bk_schedule;
use delone_core::verify::encoding::strip_lebesgue_masses;
use delone_core::verify::{
    check_nesting, encoding_report, radii_for_level, verify_mapping_repetitivity, verify_net_repetitivity,
    EncodingMode, NestingSpec, Report, SampleSpec, Section,
};
use delone_core::{DyadicBox, Engine, EngineOptions, Error, PaletteMode, PsiField};

use crate::config::{parse_coord, RunConfig, ScheduleSpec};
use crate::{Common, Failure, PointsArgs, RenderArgs, VerifyArgs, Which};

type CmdResult = Result<(), Failure>;

const DEFAULT_SEED: u64 = 0x5eed;
const DEFAULT_DESCENT_SAMPLES: usize = 10_000;
const DEFAULT_CONSISTENCY_SAMPLES: usize = 1_000;
const DEFAULT_NET_RADII: [i64; 2] = [2, 4];

fn config_error(m: impl Into<String>) -> Failure {
    Failure::Config(m.into())
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Operational(format!("{}: {e}", path.display()))
}

/// Config file merged with the flag overrides.
fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &c.schedule {
        let text = std::fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
        let spec: ScheduleSpec =
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
        cfg.schedule = Some(spec);
    }
    if let Some(p) = &c.density {
        let text = std::fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
        let spec: DensitySpec =
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
        cfg.density = Some(spec);
        cfg.base_dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
    }
    if let Some(o) = &c.out {
        cfg.output = Some(o.clone());
    }
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    let caps = cfg.caps.get_or_insert_with(Default::default);
    if let Some(m) = c.materialize_cap {
        caps.materialize = Some(m);
    }
    if let Some(a) = c.alpha_budget {
        caps.alpha_budget = Some(a);
    }
    Ok(cfg)
}

fn init_threads(threads: Option<usize>) -> CmdResult {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Operational(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

struct Setup {
    cfg: RunConfig,
    engine: Arc<Engine>,
    cache: Option<PathBuf>,
}

fn setup(c: &Common) -> Result<Setup, Failure> {
    init_threads(c.threads)?;
    let cfg = load_config(c)?;
    let sched = cfg.schedule()?;
    let report = sched.validate();
    if !report.passed() {
        let names: Vec<String> =
            report.failures().map(|f| format!("level {}: {} (slack {})", f.level, f.name, f.slack)).collect();
        return Err(config_error(format!("schedule is invalid: {}", names.join("; "))));
    }
    let rho = cfg.density(sched.d())?;
    let mut opts = EngineOptions::default();
    if let Some(caps) = &cfg.caps {
        if let Some(m) = caps.materialize {
            opts.materialize_cap = m;
        }
        if let Some(a) = caps.alpha_budget {
            opts.alpha_budget = a;
        }
        if let Some(q) = caps.quad_cells {
            opts.quad_cap = q;
        }
    }
    let engine = Arc::new(Engine::new(sched, rho, opts)?);
    let cache = c.cache_dir.clone();
    if let Some(dir) = &cache {
        load_alpha_cache(&engine, dir);
    }
    Ok(Setup { cfg, engine, cache })
}

fn alpha_cache_path(dir: &Path, engine: &Engine, n: usize) -> PathBuf {
    dir.join(format!("alpha_{}_L{n}.json", engine.hash()))
}

fn load_alpha_cache(engine: &Engine, dir: &Path) {
    for n in 2..=engine.schedule().n_max() {
        let path = alpha_cache_path(dir, engine, n);
        let Ok(text) = std::fs::read_to_string(&path) else { continue };
        match serde_json::from_str::<Vec<u32>>(&text).map_err(|e| Error::Parse(e.to_string())) {
            Ok(table) => {
                if let Err(e) = engine.install_alpha_table(n, table) {
                    log::warn!("ignoring cache {}: {e}", path.display());
                }
            }
            Err(e) => log::warn!("ignoring cache {}: {e}", path.display()),
        }
    }
}

fn store_alpha_cache(engine: &Engine, dir: &Path) {
    if let Err(e) = std::fs::create_dir_all(dir) {
        log::warn!("cache directory {}: {e}", dir.display());
        return;
    }
    for n in 2..=engine.schedule().n_max() {
        let path = alpha_cache_path(dir, engine, n);
        if !engine.has_alpha_table(n) || path.exists() {
            continue;
        }
        if let Ok(table) = engine.alpha_table(n) {
            let text = serde_json::to_string(table.as_slice()).expect("plain data");
            if let Err(e) = std::fs::write(&path, text) {
                log::warn!("cache {}: {e}", path.display());
            }
        }
    }
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

pub fn validate(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let sched = cfg.schedule()?;
    let report = sched.validate();
    print!("{}", report.to_text());
    if let Some(ScheduleSpec::Bk { bk_schedule: b }) = &cfg.schedule {
        let ex = bk_schedule(b.d, b.n_max)?;
        println!("K = {} (series {}, floor {})", ex.k, ex.k_series, ex.k_floor);
        for w in ex.asymptotic_witness() {
            let state = if w.skipped {
                "skipped"
            } else if w.holds {
                "ok"
            } else {
                "FAIL"
            };
            println!("witness n={} q={:.4} log2 lhs {} rhs {:.3} {state}", w.n, w.q, w.lhs_log2, w.rhs_log2);
        }
    }
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<String> =
            report.failures().map(|f| format!("level {}: {} (slack {})", f.level, f.name, f.slack)).collect();
        Err(Failure::Operational(format!("constraint violated: {}", names.join("; "))))
    }
}

fn parse_corner(s: &str) -> Result<Vec<delone_core::Rational>, Failure> {
    s.split(',')
        .map(|t| parse_coord(&serde_json::Value::String(t.trim().to_string())).map_err(Failure::from))
        .collect()
}

pub fn points(a: &PointsArgs) -> CmdResult {
    let Setup { cfg, engine, cache } = setup(&a.common)?;
    let (lo, hi) = match (&a.lo, &a.hi, &cfg.window) {
        (Some(lo), Some(hi), _) => (parse_corner(lo)?, parse_corner(hi)?),
        (None, None, Some(w)) => (
            w.lo.iter().map(parse_coord).collect::<Result<Vec<_>, _>>()?,
            w.hi.iter().map(parse_coord).collect::<Result<Vec<_>, _>>()?,
        ),
        _ => return Err(config_error("points needs a window: --lo and --hi, or \"window\" in the config")),
    };
    let window = DyadicBox::new(lo, hi)?;
    let field = PsiField::new(engine.clone())?;
    let markers = MarkerSets::standard(field.dim());
    let pw = points_in_window(&field, &markers, &window)?;
    let dir = output_dir(&cfg)?;
    write(&dir.join("points.csv"), points_csv(&pw))?;
    write(&dir.join("points.meta.json"), PointsMeta::new(&pw).to_json())?;
    println!("{} points written to {}", pw.len(), dir.join("points.csv").display());
    if let Some(dir) = cache {
        store_alpha_cache(&engine, &dir);
    }
    Ok(())
}

pub fn render(a: &RenderArgs) -> CmdResult {
    let Setup { cfg, engine, cache } = setup(&a.common)?;
    let level = a.level.or(cfg.level).ok_or_else(|| config_error("render needs --level or \"level\""))?;
    engine.schedule().require_level(level)?;
    let format: PgmFormat = a.format.as_deref().or(cfg.format.as_deref()).unwrap_or("P5").parse()?;
    let grids = engine.materialize_level(level)?;
    let dir = output_dir(&cfg)?;
    for (j, g) in grids.iter().enumerate() {
        let path = dir.join(pgm_file_name(level, j as u64 + 1));
        write(&path, pgm_bytes(g, engine.hash(), format)?)?;
        println!("{}", path.display());
    }
    if let Some(dir) = cache {
        store_alpha_cache(&engine, &dir);
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs) -> CmdResult {
    let Setup { cfg, engine, cache } = setup(&a.common)?;
    let sched = engine.schedule().clone();
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let run = |w: Which| a.which == Which::All || a.which == w;
    if a.which == Which::Encoding && sched.mode() != PaletteMode::Palette {
        return Err(config_error("the encoding check needs a palette-mode schedule (c_1 = 3, c_n ≥ 3)"));
    }
    let fault = a.inject_fault.as_deref();
    let mut report = Report::new(engine.hash());
    let field = PsiField::new(engine.clone())?;

    if run(Which::Goodness) {
        let samples = a.samples.or(cfg.samples).unwrap_or(DEFAULT_DESCENT_SAMPLES);
        for n in 2..=sched.n_max() {
            report.push(goodness_section(&engine, n, samples, seed, fault == Some("palette"))?);
        }
    }
    if run(Which::Repetitivity) {
        let radii = if !a.radii.is_empty() {
            a.radii.clone()
        } else {
            cfg.radii.clone().unwrap_or_else(|| radii_for_level(&sched, 2))
        };
        let pairs = a.pairs.or(cfg.pairs).unwrap_or(SampleSpec::default().pairs);
        let rep = verify_mapping_repetitivity(&field, &radii, SampleSpec { pairs, seed })?;
        let slack = rep.radii.iter().map(|r| r.bound_f64 - r.worst_minimal_r).fold(f64::INFINITY, f64::min);
        let mut sec = Section::new("repetitivity", rep.passed(), &rep).seed(seed).slack(slack);
        for r in &rep.radii {
            sec = sec.line(format!(
                "r={} level {} R={} ({:.3}): {}/{} found, worst distance+r {:.3}",
                r.r, r.level, r.bound, r.bound_f64, r.successes, r.pairs, r.worst_minimal_r
            ));
        }
        report.push(sec);
    }
    if run(Which::NetRepetitivity) {
        let radii = if !a.net_radii.is_empty() {
            a.net_radii.clone()
        } else {
            cfg.net_radii.clone().unwrap_or(DEFAULT_NET_RADII.to_vec())
        };
        let pairs = a.pairs.or(cfg.net_pairs).unwrap_or(32);
        let markers = MarkerSets::standard(sched.d());
        let mut passed = true;
        let mut lines = Vec::new();
        let mut details = Vec::new();
        for r in radii {
            let rep =
                verify_net_repetitivity(&field, &markers, &delone_core::arith::rat_int(r), SampleSpec { pairs, seed })?;
            passed &= rep.passed();
            lines.push(format!(
                "r={r} level {} R̃={} ({:.3}): {}/{} exact, implication {}/{}",
                rep.level,
                rep.transferred_bound,
                rep.transferred_bound_f64,
                rep.successes,
                rep.pairs,
                rep.implications_checked - rep.implication_failures,
                rep.implications_checked
            ));
            details.push(rep);
        }
        let mut sec = Section::new("net-repetitivity", passed, &details).seed(seed);
        for l in lines {
            sec = sec.line(l);
        }
        report.push(sec);
    }
    if run(Which::Encoding) {
        if sched.mode() == PaletteMode::Palette {
            let samples = a.samples.or(cfg.samples).unwrap_or(DEFAULT_DESCENT_SAMPLES);
            for n in 2..=sched.n_max() {
                report.push(encoding_section(&engine, n, samples, seed)?);
            }
            report.push(strip_trend_section(&engine));
        } else {
            report.push(Section::new("encoding", true, &()).line("skipped: plain-mode schedule"));
        }
    }
    if run(Which::Nesting) {
        let samples = a.samples.or(cfg.samples).unwrap_or(DEFAULT_CONSISTENCY_SAMPLES);
        let spec = NestingSpec { consistency_samples: samples, seed, ..NestingSpec::default() };
        let rep = check_nesting(&field, spec)?;
        let mut sec = Section::new("nesting", rep.passed(), &rep).seed(seed);
        if let Some(s) = rep.worst_growth_slack() {
            sec = sec.slack(s.to_string().parse().unwrap_or(f64::NAN));
        }
        for l in &rep.levels {
            sec = sec.line(format!(
                "level {}: block {} contained {} margin {} ≥ {} {}",
                l.level, l.block, l.contained, l.margin, l.growth_bound, l.growth_ok
            ));
        }
        sec = sec.line(format!(
            "level consistency: {} samples, {} comparisons, {} failures",
            rep.consistency_samples,
            rep.consistency_comparisons,
            rep.consistency_failures.len()
        ));
        for p in &rep.partition {
            sec = sec.line(match &p.skipped {
                Some(why) => format!("partition level {}: skipped ({why})", p.level),
                None => format!(
                    "partition level {}: {} of {} cubes match a colour, {} unmatched",
                    p.level,
                    p.cubes_checked - p.unmatched.len(),
                    p.cubes_checked,
                    p.unmatched.len()
                ),
            });
        }
        report.push(sec);
    }
    if let Some(f) = fault.filter(|&f| f != "palette") {
        report.inject_fault(f);
    }

    let dir = output_dir(&cfg)?;
    let text = report.to_text();
    write(&dir.join("report.txt"), &text)?;
    write(&dir.join("report.json"), report.to_json())?;
    print!("{text}");
    if let Some(dir) = cache {
        store_alpha_cache(&engine, &dir);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification(report.failed_names().join(", ")))
    }
}

fn goodness_section(engine: &Engine, n: usize, samples: usize, seed: u64, corrupt: bool) -> Result<Section, Failure> {
    let direct = match (engine.materialize_level(n), engine.materialize_level(n - 1)) {
        (Ok(g), Ok(p)) => Some((g, p)),
        (Err(e), _) | (_, Err(e)) if e.is_operational() => None,
        (Err(e), _) | (_, Err(e)) => return Err(e.into()),
    };
    let rep: GoodnessReport = match direct {
        Some((grids, prev)) => {
            let mut grids = grids.as_ref().clone();
            if corrupt && n == 2 {
                let c = &mut grids[0].cells[0];
                *c = 3 - *c;
            }
            check_goodness_grids(engine.schedule(), n, &grids, &prev)
        }
        None => check_goodness(engine, n, GoodnessMode::Descent { samples, seed })?,
    };
    let name = format!("goodness L{n}");
    let mut sec = Section::new(&name, rep.passed(), &rep)
        .line(format!("mode {:?}, {} points per colour", rep.mode, rep.points_checked))
        .line(format!("condition (A): {}", if rep.condition_a { "holds" } else { "violated" }))
        .line(format!("condition (B): {}", if rep.condition_b { "holds" } else { "violated" }));
    if let GoodnessMode::Descent { seed, .. } = rep.mode {
        sec = sec.seed(seed);
    }
    if !rep.condition_a {
        sec.name = format!("{name} condition (A)");
    } else if !rep.condition_b {
        sec.name = format!("{name} condition (B)");
    }
    for f in rep.failures.iter().take(5) {
        sec = sec.line(f.clone());
    }
    Ok(sec)
}

fn encoding_section(engine: &Engine, n: usize, samples: usize, seed: u64) -> Result<Section, Failure> {
    let kept = engine.schedule().kept_tiles(n)?;
    let mode = if kept <= engine.options().alpha_budget {
        EncodingMode::Exhaustive
    } else {
        EncodingMode::Sampled { tiles: samples, seed }
    };
    let rep = encoding_report(engine, n, mode)?;
    let mut sec = Section::new(format!("encoding L{n}"), rep.passed(), &rep)
        .slack(1.0 - rep.worst_ratio)
        .line(format!("{:?}: {} of {} kept tiles", rep.mode, rep.tiles_checked, rep.kept_tiles))
        .line(format!("bound {}, worst |b_α − τ|·(c'−2) = {:.6}", rep.bound, rep.worst_ratio))
        .line(format!(
            "normalized error {:.3e} ≤ {:.3e}",
            rep.worst_normalized_error, rep.normalized_bound
        ))
        .line(format!(
            "strip: Lebesgue {} , ν {:.6e}, ν_n {:.6e}; tile diameter {:.3e}",
            rep.strip_lebesgue_mass, rep.strip_nu_mass, rep.strip_nu_n_mass, rep.tile_diameter
        ))
        .line(format!(
            "direct sums {} checked, {} mismatched",
            rep.direct_sums_checked, rep.direct_sum_mismatches
        ));
    if let Some(e) = rep.mass_balance_error {
        sec = sec.line(format!("mass balance error {e:.3e}"));
    }
    if let EncodingMode::Sampled { seed, .. } = mode {
        sec = sec.seed(seed);
    }
    Ok(sec)
}

fn strip_trend_section(engine: &Engine) -> Section {
    let masses = strip_lebesgue_masses(engine);
    let monotone = masses.windows(2).all(|w| w[1].1 <= w[0].1);
    let mut sec = Section::new("encoding strip trend", monotone, &masses.iter().map(|(n, m)| (n, m.to_string())).collect::<Vec<_>>());
    for (n, m) in &masses {
        sec = sec.line(format!("level {n}: excluded Lebesgue mass {m}"));
    }
    sec
}
