//! The `run` subcommand: RIRs, rendering, sweeps and artifact emission.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use log::{info, warn};
use sha2::{Digest, Sha256};
use vastzones::metrics::{acoustic_contrast_db, aggregate, clamp_sentinel, nsdp_db, tir_db};
use vastzones::percept::BarkSpreadingModel;
use vastzones::pipeline::{design_static, render, Method, Programs, RenderOutput, RenderedField};
use vastzones::room::{PointKind, RirSet, SceneGeometry, Zone};
use vastzones::vast::{default_v_grid, sweep, SweepRow, DEFAULT_MU_GRID};

use crate::cache::{load_or_generate, CacheStatus};
use crate::config::{LoadedConfig, MetricPoints};
use crate::output::{num, OutputWriter};
use crate::signals::{load_programs, ZonePrograms};
use crate::validate::validate;

pub const METRICS_HEADER: [&str; 10] =
    ["method", "v", "mu", "zone", "signal", "metric", "mean", "ci_half_width", "n_points", "excluded"];
pub const SWEEP_HEADER: [&str; 9] = ["program", "v", "mu", "s_b", "s_d", "lagrangian", "ac_db", "q_l2_norm", "error"];
pub const MASKING_HEADER: [&str; 5] = ["program", "point", "segment", "hz", "db"];

pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub failures: usize,
}

struct MethodResult {
    method: Method,
    elapsed: Duration,
    outcome: Result<RenderOutput>,
}

fn ms(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

fn metric_kind(points: MetricPoints) -> PointKind {
    match points {
        MetricPoints::Monitor => PointKind::Monitor,
        MetricPoints::Control => PointKind::Control,
    }
}

fn design_label(method: Method, field: &RenderedField) -> (String, String, String) {
    match field.params {
        Some(p) => (format!("{}_v{}_mu{}", method.name(), p.v, p.mu), p.v.to_string(), num(p.mu)),
        None => (method.name().to_string(), String::new(), String::new()),
    }
}

fn summary_row(method: Method, field: &RenderedField, zone: &str, signal: &str, metric: &str, values: &[f64]) -> Vec<String> {
    let (_, v, mu) = design_label(method, field);
    let a = aggregate(values);
    // All values infinite: report the sentinel instead of an empty mean.
    let mean = if a.n_points == 0 { values.first().map_or(f64::NAN, |&x| clamp_sentinel(x)) } else { a.mean };
    vec![
        method.name().into(),
        v,
        mu,
        zone.into(),
        signal.into(),
        metric.into(),
        num(mean),
        a.ci_half_width.map(num).unwrap_or_default(),
        a.n_points.to_string(),
        a.excluded.to_string(),
    ]
}

fn metric_rows(method: Method, field: &RenderedField, scene: &SceneGeometry, kind: PointKind) -> Result<Vec<Vec<String>>> {
    let w = field.metric_window;
    let mut rows = Vec::new();
    for prog in &field.programs {
        let zone = prog.zone;
        let bright: Vec<usize> = scene.indices(zone, kind).collect();
        let dark: Vec<usize> = scene.indices(zone.other(), kind).collect();
        let p_b: Vec<&Vec<f64>> = bright.iter().map(|&m| &prog.reproduced[m]).collect();
        let p_d: Vec<&Vec<f64>> = dark.iter().map(|&m| &prog.reproduced[m]).collect();
        let ac = acoustic_contrast_db(&p_b, &p_d, w)?;
        let mut row = summary_row(method, field, zone.name(), zone.name(), "ac_db", &[ac]);
        row[6] = num(clamp_sentinel(ac));
        row[8] = (bright.len() + dark.len()).to_string();
        rows.push(row);
        let mut nsdp = Vec::with_capacity(bright.len());
        for &m in &bright {
            let mut d = prog.desired[m].clone();
            d.resize(prog.reproduced[m].len(), 0.0);
            nsdp.push(nsdp_db(&prog.reproduced[m], &d, w, m)?);
        }
        rows.push(summary_row(method, field, zone.name(), zone.name(), "nsdp_db", &nsdp));
    }
    if let (Some(a), Some(b)) = (field.program(Zone::Alpha), field.program(Zone::Beta)) {
        for (own, other) in [(a, b), (b, a)] {
            let tir: Vec<f64> = scene
                .indices(own.zone, kind)
                .map(|m| tir_db(&own.reproduced[m], &other.reproduced[m], w))
                .collect::<vastzones::Result<_>>()?;
            rows.push(summary_row(method, field, own.zone.name(), "both", "tir_db", &tir));
        }
    }
    Ok(rows)
}

fn sweep_rows(program: Zone, rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
            vec![
                program.name().into(),
                r.v.to_string(),
                num(r.mu),
                opt(r.powers.map(|p| p.s_b)),
                opt(r.powers.map(|p| p.s_d)),
                opt(r.powers.map(|p| p.lagrangian)),
                opt(r.contrast.map(|c| clamp_sentinel(c.value()))),
                opt(r.q_l2_norm),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

fn run_sweep(cfg: &LoadedConfig, programs: &Programs, rirs: &RirSet, scene: &SceneGeometry) -> Result<Vec<Vec<String>>> {
    let s = cfg.config.sweep.as_ref().expect("sweep configured");
    let method = Method::parse(&s.method)?;
    let scenario = cfg.config.scenario(method);
    let lj = rirs.sources() * scenario.j_len;
    let v_grid = s.v_grid.clone().unwrap_or_else(|| default_v_grid(lj));
    let mu_grid = s.mu_grid.clone().unwrap_or_else(|| DEFAULT_MU_GRID.to_vec());
    let (designs, _, _) = design_static(programs, rirs, scene, &scenario, &BarkSpreadingModel::default())?;
    let mut out = Vec::new();
    for d in designs {
        let rows = match &d.jd {
            Some(jd) => sweep(jd, &d.design.r_b, d.design.sigma_d_sq, &d.eval, &v_grid, &mu_grid)?,
            None => v_grid
                .iter()
                .flat_map(|&v| {
                    mu_grid.iter().map(move |&mu| SweepRow {
                        v,
                        mu,
                        powers: None,
                        contrast: None,
                        q_l2_norm: None,
                        error: Some("silent program".into()),
                    })
                })
                .collect(),
        };
        out.extend(sweep_rows(d.zone, &rows));
    }
    Ok(out)
}

fn write_fields(
    out: &mut OutputWriter,
    method: Method,
    field: &RenderedField,
    fs: u32,
) -> Result<()> {
    let (label, _, _) = design_label(method, field);
    for prog in &field.programs {
        let ch: Vec<&[f64]> = prog.reproduced.iter().map(Vec::as_slice).collect();
        out.wav(&format!("wav/{label}_{}_reproduced.wav", prog.zone.name()), &ch, fs)?;
    }
    let ch: Vec<&[f64]> = field.superposed.iter().map(Vec::as_slice).collect();
    out.wav(&format!("wav/{label}_superposed.wav"), &ch, fs)
}

fn write_desired(out: &mut OutputWriter, field: &RenderedField, fs: u32) -> Result<()> {
    for prog in &field.programs {
        let ch: Vec<&[f64]> = prog.desired.iter().map(Vec::as_slice).collect();
        out.wav(&format!("wav/desired_{}.wav", prog.zone.name()), &ch, fs)?;
    }
    Ok(())
}

pub fn run(cfg: &LoadedConfig, opts: &RunOptions) -> Result<RunSummary> {
    let report = validate(cfg);
    if report.errors() > 0 {
        bail!("invalid configuration {}\n{report}", cfg.path.display());
    }
    for f in report.findings.iter().filter(|f| f.level == crate::validate::Level::Warning) {
        warn!("{}", f.message);
    }
    let c = &cfg.config;
    let room = c.room_spec()?;
    let scene = c.scene()?;
    let zone_programs: ZonePrograms = load_programs(cfg)?;
    let programs = Programs { alpha: zone_programs.alpha.as_deref(), beta: zone_programs.beta.as_deref() };

    let t = Instant::now();
    let (rirs, cache) = load_or_generate(opts.cache_dir.as_deref(), &scene, &room, c.room.rir_taps, c.room.max_order)?;
    let rir_time = t.elapsed();
    info!("RIRs ready: M = {}, L = {}, K = {} ({} ms)", rirs.points(), rirs.sources(), rirs.taps(), ms(rir_time));

    let model = BarkSpreadingModel::default();
    let mut results = Vec::new();
    for method in c.methods()? {
        info!("rendering {}", method.name());
        let t = Instant::now();
        let outcome = render(&programs, &rirs, &scene, &c.scenario(method), &model).map_err(anyhow::Error::from);
        if let Err(e) = &outcome {
            warn!("{} failed: {e:#}", method.name());
        }
        results.push(MethodResult { method, elapsed: t.elapsed(), outcome });
    }

    let sweep_result = c.sweep.as_ref().map(|_| {
        info!("sweeping (V, mu)");
        let t = Instant::now();
        let r = run_sweep(cfg, &programs, &rirs, &scene);
        if let Err(e) = &r {
            warn!("sweep failed: {e:#}");
        }
        (r, t.elapsed())
    });

    let out_dir = opts.out.clone().unwrap_or_else(|| c.output_dir().to_path_buf());
    let mut out = OutputWriter::new(&out_dir)?;
    let kind = metric_kind(c.scene.metric_points);
    let fs = room.sample_rate;

    let mut metrics = Vec::new();
    let mut failures = 0;
    let mut manifest = String::new();
    writeln!(manifest, "vastzones run manifest")?;
    writeln!(manifest, "config: {}", cfg.path.display())?;
    writeln!(manifest, "config_sha256: {}", sha256_hex(cfg.text.as_bytes()))?;
    writeln!(manifest, "seed: {}", c.seed)?;
    writeln!(manifest, "samples: {} at {} Hz", zone_programs.len(), fs)?;
    if let Some(g) = zone_programs.calibration_gain {
        writeln!(manifest, "calibration_gain_beta: {}", num(g))?;
    }
    writeln!(manifest, "geometry: L = {}, M = {}, K = {}", rirs.sources(), rirs.points(), rirs.taps())?;
    writeln!(manifest, "rir_cache: {}", cache_line(&cache))?;
    writeln!(manifest, "rir_ms: {}", ms(rir_time))?;

    let mut desired_written = false;
    for r in &results {
        writeln!(manifest, "[{}]", r.method.name())?;
        match &r.outcome {
            Ok(o) => {
                let rep = &o.report;
                writeln!(manifest, "status: ok")?;
                writeln!(manifest, "segments: {}", rep.segments)?;
                writeln!(manifest, "fallbacks: {}", rep.fallbacks)?;
                writeln!(manifest, "silent_segments: {}", rep.silent_segments)?;
                let t = &rep.timings;
                writeln!(
                    manifest,
                    "timing_ms: masking {} stats {} gevd {} filtering {} total {}",
                    ms(t.masking),
                    ms(t.stats),
                    ms(t.gevd),
                    ms(t.filtering),
                    ms(r.elapsed)
                )?;
                for field in &o.fields {
                    metrics.extend(metric_rows(r.method, field, &scene, kind)?);
                    if c.output.wav {
                        if !desired_written {
                            write_desired(&mut out, field, fs)?;
                            desired_written = true;
                        }
                        write_fields(&mut out, r.method, field, fs)?;
                    }
                }
                if !o.masking.is_empty() {
                    let rows: Vec<Vec<String>> = o
                        .masking
                        .iter()
                        .flat_map(|rec| {
                            let head = [rec.program.name().to_string(), rec.point.to_string(), rec.curve.segment_index.to_string()];
                            rec.curve
                                .frequencies()
                                .into_iter()
                                .zip(rec.curve.db())
                                .map(move |(hz, db)| head.iter().cloned().chain([num(hz), num(db)]).collect())
                        })
                        .collect();
                    out.csv(&format!("masking_{}.csv", r.method.name()), &MASKING_HEADER, &rows)?;
                }
            }
            Err(e) => {
                failures += 1;
                writeln!(manifest, "status: failed: {}", one_line(e))?;
            }
        }
    }
    out.csv("metrics.csv", &METRICS_HEADER, &metrics)?;

    let mut sweep_ok = false;
    if let Some((r, elapsed)) = sweep_result {
        writeln!(manifest, "[sweep]")?;
        match r {
            Ok(rows) => {
                let failed = rows.iter().filter(|row| !row[8].is_empty()).count();
                writeln!(manifest, "status: ok")?;
                writeln!(manifest, "cells: {} ({failed} failed)", rows.len())?;
                writeln!(manifest, "timing_ms: {}", ms(elapsed))?;
                out.csv("sweep.csv", &SWEEP_HEADER, &rows)?;
                sweep_ok = true;
            }
            Err(e) => {
                failures += 1;
                writeln!(manifest, "status: failed: {}", one_line(&e))?;
            }
        }
    }

    let files = out.manifest("run_manifest.txt", manifest)?;
    if results.iter().all(|r| r.outcome.is_err()) && !sweep_ok {
        bail!("every method failed; see {}", out_dir.join("run_manifest.txt").display());
    }
    Ok(RunSummary { out_dir, files, failures })
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn cache_line(s: &CacheStatus) -> String {
    match s {
        CacheStatus::Disabled => "disabled".into(),
        CacheStatus::Hit(p) => format!("hit {}", p.display()),
        CacheStatus::Stored(p) => format!("stored {}", p.display()),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(crate::cache::CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}
