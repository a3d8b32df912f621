//! End-to-end rendering of one or two zone programs.
//!
//! A program is an input signal whose desired field is the virtual source
//! reproduced in its own (bright) zone and silence in the other. Programs are
//! rendered independently and superposed.
//!
//! Static methods design one filter bank per program from whole-signal
//! statistics. The adaptive method designs one bank per windowed segment:
//! segments of `N` samples hop by `N / 2`, the first starting `N / 2` samples
//! before the signal, and each segment is weighted by `g^2` (analysis times
//! synthesis sine window), filtered by that segment's bank with a linear
//! convolution and overlap-added. A constant bank therefore reproduces plain
//! convolution exactly.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::eig::{joint_diagonalize_with_fallback, JointDiag};
use crate::metrics::MetricWindow;
use crate::percept::{averaged_masking_curve, weighting_filter, MaskingCurve, MaskingModel};
use crate::room::{PointKind, RirSet, SceneGeometry, Zone};
use crate::signal::{add_at, FftConvolver, Segmenter};
use crate::stats::{
    build_stats, build_uncontrolled, rank_condition, weighted_desired, ObservationWindow, SpatialStats, WeightingSet,
};
use crate::vast::{solve_vast, ControlFilterBank, VastParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    NoControl,
    Vast,
    PVast,
    ApVast,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::NoControl => "no_control",
            Method::Vast => "vast",
            Method::PVast => "p_vast",
            Method::ApVast => "ap_vast",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "no_control" => Ok(Method::NoControl),
            "vast" => Ok(Method::Vast),
            "p_vast" => Ok(Method::PVast),
            "ap_vast" => Ok(Method::ApVast),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?}; expected no_control, vast, p_vast or ap_vast"
            ))),
        }
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, Method::PVast | Method::ApVast)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub method: Method,
    /// Filter designs to render; they share statistics and eigenpairs.
    pub params: Vec<VastParams>,
    /// Control filter length `J`.
    pub j_len: usize,
    pub segment_length: usize,
    pub overlap: usize,
    /// Perceptual weighting for `p_vast` and `ap_vast`.
    pub weighting: bool,
    /// Weighting FIR length, odd; capped at `segment_length - 1`.
    pub weighting_taps: usize,
    /// Keep every segment's filter bank in the output (adaptive method only).
    pub keep_segment_filters: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            method: Method::Vast,
            params: vec![VastParams::new(1, 1.0)],
            j_len: 240,
            segment_length: 960,
            overlap: 480,
            weighting: true,
            weighting_taps: crate::percept::DEFAULT_WEIGHTING_TAPS,
            keep_segment_filters: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self, l_count: usize) -> Result<()> {
        if self.j_len == 0 {
            return Err(Error::InvalidArgument("J must be >= 1".into()));
        }
        if self.method != Method::NoControl {
            if self.params.is_empty() {
                return Err(Error::InvalidArgument("at least one (V, mu) pair is required".into()));
            }
            for p in &self.params {
                p.validate(l_count * self.j_len)?;
            }
        }
        if self.method.is_weighted() || self.method == Method::ApVast {
            if self.segment_length % 2 != 0 || self.segment_length < 2 {
                return Err(Error::InvalidArgument(format!("segment length {} must be even", self.segment_length)));
            }
            if self.overlap * 2 != self.segment_length {
                return Err(Error::InvalidArgument(format!(
                    "overlap must be half the segment length ({}), got {}",
                    self.segment_length / 2,
                    self.overlap
                )));
            }
        }
        if self.method.is_weighted() && self.weighting && self.weighting_taps % 2 == 0 {
            return Err(Error::InvalidArgument(format!("weighting taps must be odd, got {}", self.weighting_taps)));
        }
        Ok(())
    }

    fn effective_taps(&self) -> usize {
        self.weighting_taps.min(self.segment_length - 1)
    }
}

/// Input signals per zone; a zone without a program stays silent.
#[derive(Debug, Clone, Copy)]
pub struct Programs<'a> {
    pub alpha: Option<&'a [f64]>,
    pub beta: Option<&'a [f64]>,
}

impl<'a> Programs<'a> {
    pub fn both(alpha: &'a [f64], beta: &'a [f64]) -> Self {
        Self { alpha: Some(alpha), beta: Some(beta) }
    }

    pub fn single(zone: Zone, x: &'a [f64]) -> Self {
        match zone {
            Zone::Alpha => Self { alpha: Some(x), beta: None },
            Zone::Beta => Self { alpha: None, beta: Some(x) },
        }
    }

    pub fn get(&self, zone: Zone) -> Option<&'a [f64]> {
        match zone {
            Zone::Alpha => self.alpha,
            Zone::Beta => self.beta,
        }
    }

    pub fn list(&self) -> Vec<(Zone, &'a [f64])> {
        [Zone::Alpha, Zone::Beta].into_iter().filter_map(|z| self.get(z).map(|x| (z, x))).collect()
    }

    fn signal_len(&self) -> Result<usize> {
        let lens: Vec<usize> = self.list().iter().map(|(_, x)| x.len()).collect();
        match lens.first() {
            None => Err(Error::InvalidArgument("no program to render".into())),
            Some(&n) if n == 0 => Err(Error::InvalidArgument("empty input signal".into())),
            Some(&n) if lens.iter().any(|&m| m != n) => {
                Err(Error::DimensionMismatch("zone programs must have equal length".into()))
            }
            Some(&n) => Ok(n),
        }
    }
}

/// Fields of one program at every receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramField {
    /// Bright zone of the program.
    pub zone: Zone,
    pub desired: Vec<Vec<f64>>,
    pub reproduced: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedField {
    /// `None` for the uncontrolled baseline.
    pub params: Option<VastParams>,
    pub programs: Vec<ProgramField>,
    /// Sum of all programs' reproduced fields per receiver.
    pub superposed: Vec<Vec<f64>>,
    pub metric_window: MetricWindow,
}

impl RenderedField {
    pub fn program(&self, zone: Zone) -> Option<&ProgramField> {
        self.programs.iter().find(|p| p.zone == zone)
    }

    pub fn len(&self) -> usize {
        self.superposed.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub masking: Duration,
    pub stats: Duration,
    pub gevd: Duration,
    pub filtering: Duration,
}

impl StageTimings {
    fn add(&mut self, other: &StageTimings) {
        self.masking += other.masking;
        self.stats += other.stats;
        self.gevd += other.gevd;
        self.filtering += other.filtering;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: Method,
    /// Designs per program: 1 for static methods, `I` for the adaptive one.
    pub segments: usize,
    /// Designs that needed diagonal loading of `R_D`.
    pub fallbacks: usize,
    /// Designs skipped because `r_B` was zero.
    pub silent_segments: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskingRecord {
    pub program: Zone,
    pub point: usize,
    pub curve: MaskingCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFilters {
    pub program: Zone,
    pub params: VastParams,
    pub filters: Vec<ControlFilterBank>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// One field per entry of `ScenarioConfig::params` (one for the baseline).
    pub fields: Vec<RenderedField>,
    pub report: RunReport,
    /// Averaged curves per control point for `p_vast`; per-segment curves of
    /// the first bright control point for `ap_vast`.
    pub masking: Vec<MaskingRecord>,
    pub segment_filters: Vec<SegmentFilters>,
}

/// Number of adaptive segments for a signal of `len` samples.
pub fn ap_vast_segment_count(len: usize, segment_length: usize, overlap: usize) -> usize {
    (len + overlap).div_ceil(segment_length - overlap)
}

/// Start of the first adaptive segment.
pub fn ap_vast_first_start(overlap: usize) -> isize {
    -(overlap as isize)
}

fn zone_points(scene: &SceneGeometry, zone: Zone) -> Vec<usize> {
    scene.indices(zone, PointKind::Control).chain(scene.indices(zone, PointKind::Monitor)).collect()
}

fn control_points(scene: &SceneGeometry, zone: Zone) -> Vec<usize> {
    scene.indices(zone, PointKind::Control).collect()
}

/// `h_mz * x` at every receiver in `bright_points`, zeros elsewhere; all of
/// length `len(x) + K - 1`.
pub fn desired_field(x: &[f64], rirs: &RirSet, bright_points: &[usize]) -> Result<Vec<Vec<f64>>> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty input signal".into()));
    }
    if let Some(&bad) = bright_points.iter().find(|&&m| m >= rirs.points()) {
        return Err(Error::DimensionMismatch(format!("point {bad} has no RIRs")));
    }
    let len = x.len() + rirs.taps() - 1;
    let fft = FftConvolver::new(len);
    let xs = fft.spectrum(x);
    Ok((0..rirs.points())
        .into_par_iter()
        .map(|m| {
            if !bright_points.contains(&m) {
                return vec![0.0; len];
            }
            let mut s = fft.spectrum(rirs.h_virtual(m));
            for (a, b) in s.iter_mut().zip(&xs) {
                *a *= b;
            }
            fft.inverse(s, len)
        })
        .collect())
}

/// Loudspeaker signals `q_l * x`, each `len(x) + J - 1` samples.
pub fn apply_filters(x: &[f64], bank: &ControlFilterBank) -> Vec<Vec<f64>> {
    let fft = FftConvolver::new(x.len() + bank.j_len() - 1);
    (0..bank.l_count()).map(|l| fft.convolve(x, bank.filter(l))).collect()
}

/// `p_m = sum_l h_ml * u_l` at every receiver, truncated or padded to `out_len`.
pub fn propagate(u: &[Vec<f64>], rirs: &RirSet, out_len: usize) -> Result<Vec<Vec<f64>>> {
    if u.len() != rirs.sources() {
        return Err(Error::DimensionMismatch(format!(
            "{} loudspeaker signals for {} sources",
            u.len(),
            rirs.sources()
        )));
    }
    let u_len = u.iter().map(Vec::len).max().unwrap_or(0);
    let fft = FftConvolver::new(u_len + rirs.taps() - 1);
    let spectra: Vec<_> = u.par_iter().map(|s| fft.spectrum(s)).collect();
    Ok((0..rirs.points())
        .into_par_iter()
        .map(|m| {
            let mut acc = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); fft.size()];
            for (l, us) in spectra.iter().enumerate() {
                let h = fft.spectrum(rirs.h(m, l));
                for ((a, b), c) in acc.iter_mut().zip(&h).zip(us) {
                    *a += b * c;
                }
            }
            let mut out = fft.inverse(acc, out_len.min(fft.size()));
            out.resize(out_len, 0.0);
            out
        })
        .collect())
}

/// Overlap-adds `g^2`-weighted segments of `x`, each filtered by its own bank.
/// `banks[i]` filters the segment starting at `first_start + i * hop`.
pub fn wola_filter(
    x: &[f64],
    segmenter: &Segmenter,
    first_start: isize,
    banks: &[ControlFilterBank],
) -> Result<Vec<Vec<f64>>> {
    let first = banks.first().ok_or_else(|| Error::InvalidArgument("no segment filters".into()))?;
    let (l_count, j_len) = (first.l_count(), first.j_len());
    if banks.iter().any(|b| b.l_count() != l_count || b.j_len() != j_len) {
        return Err(Error::DimensionMismatch("segment filter banks differ in shape".into()));
    }
    let n = segmenter.segment_length();
    let fft = FftConvolver::new(n + j_len - 1);
    let mut out = vec![vec![0.0; x.len() + j_len - 1]; l_count];
    for (i, bank) in banks.iter().enumerate() {
        let start = segmenter.frame_start(first_start, i);
        let mut frame = segmenter.extract(x, start);
        segmenter.apply_window(&mut frame);
        segmenter.apply_window(&mut frame);
        if frame.iter().all(|&v| v == 0.0) {
            continue;
        }
        let spec = fft.spectrum(&frame);
        for (l, o) in out.iter_mut().enumerate() {
            let mut s = fft.spectrum(bank.filter(l));
            for (a, b) in s.iter_mut().zip(&spec) {
                *a *= b;
            }
            add_at(o, start, &fft.inverse(s, n + j_len - 1));
        }
    }
    Ok(out)
}

/// Statistics and eigenpairs of one static design.
#[derive(Debug, Clone)]
pub struct StaticDesign {
    pub zone: Zone,
    /// Statistics the filters are designed on (weighted for `p_vast`).
    pub design: SpatialStats,
    /// Unweighted statistics for contrast evaluation.
    pub eval: SpatialStats,
    /// `None` when `r_B` is zero and every filter is zero.
    pub jd: Option<JointDiag>,
    pub fallback: bool,
}

fn check_rank(rirs: &RirSet, scene: &SceneGeometry, zone: Zone, n_obs: usize, j_len: usize) -> Result<()> {
    let m_d = scene.indices(zone.other(), PointKind::Control).len();
    let diag = rank_condition(None, m_d, n_obs, rirs.taps(), rirs.sources(), j_len);
    if !diag.satisfied {
        return Err(Error::RankCondition { available: diag.available, required: diag.required });
    }
    Ok(())
}

fn stats_for(
    x: &[f64],
    rirs: &RirSet,
    scene: &SceneGeometry,
    zone: Zone,
    j_len: usize,
    weighting: Option<&WeightingSet>,
    window: ObservationWindow,
) -> Result<SpatialStats> {
    let bright = control_points(scene, zone);
    let dark = control_points(scene, zone.other());
    let resp_b = build_uncontrolled(x, rirs, &bright, j_len, weighting, window)?;
    let resp_d = build_uncontrolled(x, rirs, &dark, j_len, weighting, window)?;
    let desired = weighted_desired(x, rirs, &bright, weighting, window)?;
    build_stats(&desired, &resp_b, &resp_d)
}

/// Desired signal of each receiver's own zone program, if that zone has one.
fn maskers(programs: &Programs, rirs: &RirSet, scene: &SceneGeometry) -> Result<Vec<Option<Vec<f64>>>> {
    let mut out: Vec<Option<Vec<f64>>> = vec![None; rirs.points()];
    for (zone, x) in programs.list() {
        let pts = zone_points(scene, zone);
        let d = desired_field(x, rirs, &pts)?;
        for (m, dm) in d.into_iter().enumerate() {
            if pts.contains(&m) {
                out[m] = Some(dm);
            }
        }
    }
    Ok(out)
}

fn segment_curve(
    model: &dyn MaskingModel,
    masker: Option<&Vec<f64>>,
    segmenter: &Segmenter,
    start: isize,
    index: usize,
    fs: u32,
) -> Result<MaskingCurve> {
    let n = segmenter.segment_length();
    match masker {
        Some(d) => {
            let mut frame = segmenter.extract(d, start);
            segmenter.apply_window(&mut frame);
            model.masking_curve(&frame, fs, index)
        }
        None => Ok(MaskingCurve::quiet(n / 2 + 1, fs, index)),
    }
}

/// Weighting filters from curves averaged over all segments, per control point.
fn averaged_weighting(
    len: usize,
    points: &[usize],
    maskers: &[Option<Vec<f64>>],
    config: &ScenarioConfig,
    fs: u32,
    model: &dyn MaskingModel,
) -> Result<(WeightingSet, Vec<(usize, MaskingCurve)>)> {
    let seg = Segmenter::sine(config.segment_length, config.overlap)?;
    let first = ap_vast_first_start(config.overlap);
    let count = ap_vast_segment_count(len, config.segment_length, config.overlap);
    let curves: Vec<(usize, MaskingCurve)> = points
        .par_iter()
        .map(|&m| {
            let per_segment = (0..count)
                .map(|i| segment_curve(model, maskers[m].as_ref(), &seg, seg.frame_start(first, i), i, fs))
                .collect::<Result<Vec<_>>>()?;
            Ok((m, averaged_masking_curve(&per_segment)?))
        })
        .collect::<Result<_>>()?;
    let mut set = WeightingSet::new();
    for (m, c) in &curves {
        set.insert(*m, weighting_filter(c, config.effective_taps())?.taps);
    }
    Ok((set, curves))
}

fn design_filters(
    design: &StaticDesign,
    params: &[VastParams],
    l_count: usize,
    j_len: usize,
) -> Result<Vec<ControlFilterBank>> {
    match &design.jd {
        None => Ok(params.iter().map(|_| ControlFilterBank::zeros(l_count, j_len)).collect()),
        Some(jd) => params.iter().map(|&p| solve_vast(jd, &design.design.r_b, p, l_count)).collect(),
    }
}

fn diagonalize(stats: &SpatialStats) -> Result<(Option<JointDiag>, bool)> {
    if stats.r_b.iter().all(|&v| v == 0.0) {
        return Ok((None, false));
    }
    let (jd, fallback) = joint_diagonalize_with_fallback(stats)?;
    Ok((Some(jd), fallback))
}

/// Whole-signal statistics and eigenpairs for every program of a static
/// method (`vast` or `p_vast`).
pub fn design_static(
    programs: &Programs,
    rirs: &RirSet,
    scene: &SceneGeometry,
    config: &ScenarioConfig,
    model: &dyn MaskingModel,
) -> Result<(Vec<StaticDesign>, Vec<MaskingRecord>, StageTimings)> {
    let len = programs.signal_len()?;
    let mut timings = StageTimings::default();
    let window = ObservationWindow::new(0, len);
    let weighted = config.method == Method::PVast && config.weighting;
    let maskers = if weighted { maskers(programs, rirs, scene)? } else { Vec::new() };
    let mut designs = Vec::new();
    let mut records = Vec::new();
    for (zone, x) in programs.list() {
        check_rank(rirs, scene, zone, len, config.j_len)?;
        let t = Instant::now();
        let eval = stats_for(x, rirs, scene, zone, config.j_len, None, window)?;
        timings.stats += t.elapsed();
        let design = if weighted {
            let mut pts = control_points(scene, zone);
            pts.extend(control_points(scene, zone.other()));
            let t = Instant::now();
            let (set, curves) = averaged_weighting(len, &pts, &maskers, config, rirs.sample_rate(), model)?;
            timings.masking += t.elapsed();
            records.extend(curves.into_iter().map(|(point, curve)| MaskingRecord { program: zone, point, curve }));
            let t = Instant::now();
            let s = stats_for(x, rirs, scene, zone, config.j_len, Some(&set), window)?;
            timings.stats += t.elapsed();
            s
        } else {
            eval.clone()
        };
        let t = Instant::now();
        let (jd, fallback) = diagonalize(&design)?;
        timings.gevd += t.elapsed();
        designs.push(StaticDesign { zone, design, eval, jd, fallback });
    }
    Ok((designs, records, timings))
}

fn assemble_fields(
    per_program: Vec<(Zone, Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)>,
    params: &[Option<VastParams>],
    out_len: usize,
    metric_window: MetricWindow,
) -> Vec<RenderedField> {
    (0..params.len())
        .map(|k| {
            let mut superposed = vec![vec![0.0; out_len]; per_program[0].1.len()];
            let programs = per_program
                .iter()
                .map(|(zone, desired, reproduced)| {
                    for (s, r) in superposed.iter_mut().zip(&reproduced[k]) {
                        for (a, b) in s.iter_mut().zip(r) {
                            *a += b;
                        }
                    }
                    let desired = desired
                        .iter()
                        .map(|d| {
                            let mut d = d.clone();
                            d.resize(out_len, 0.0);
                            d
                        })
                        .collect();
                    ProgramField { zone: *zone, desired, reproduced: reproduced[k].clone() }
                })
                .collect();
            RenderedField { params: params[k], programs, superposed, metric_window }
        })
        .collect()
}

fn output_len(len: usize, rirs: &RirSet, j_len: usize) -> usize {
    len + rirs.taps() + j_len - 2
}

/// Renders `no_control`, `vast` or `p_vast`.
pub fn render_static(
    programs: &Programs,
    rirs: &RirSet,
    scene: &SceneGeometry,
    config: &ScenarioConfig,
    model: &dyn MaskingModel,
) -> Result<RenderOutput> {
    if config.method == Method::ApVast {
        return Err(Error::InvalidArgument("render_static does not handle ap_vast".into()));
    }
    config.validate(rirs.sources())?;
    let len = programs.signal_len()?;
    let l_count = rirs.sources();
    let out_len = output_len(len, rirs, config.j_len);
    let (designs, masking, mut timings, params): (Vec<StaticDesign>, _, _, Vec<Option<VastParams>>) =
        if config.method == Method::NoControl {
            (Vec::new(), Vec::new(), StageTimings::default(), vec![None])
        } else {
            let (d, m, t) = design_static(programs, rirs, scene, config, model)?;
            (d, m, t, config.params.iter().map(|&p| Some(p)).collect())
        };
    let mut per_program = Vec::new();
    for (k, (zone, x)) in programs.list().into_iter().enumerate() {
        let desired = desired_field(x, rirs, &zone_points(scene, zone))?;
        let banks = match designs.get(k) {
            None => vec![ControlFilterBank::delta(l_count, config.j_len)],
            Some(d) => design_filters(d, &config.params, l_count, config.j_len)?,
        };
        let t = Instant::now();
        let reproduced = banks
            .iter()
            .map(|b| propagate(&apply_filters(x, b), rirs, out_len))
            .collect::<Result<Vec<_>>>()?;
        timings.filtering += t.elapsed();
        per_program.push((zone, desired, reproduced));
    }
    let report = RunReport {
        method: config.method,
        segments: usize::from(config.method != Method::NoControl),
        fallbacks: designs.iter().filter(|d| d.fallback).count(),
        silent_segments: designs.iter().filter(|d| d.jd.is_none()).count(),
        timings,
    };
    Ok(RenderOutput {
        fields: assemble_fields(per_program, &params, out_len, MetricWindow::full(out_len)),
        report,
        masking,
        segment_filters: Vec::new(),
    })
}

struct SegmentResult {
    banks: Vec<ControlFilterBank>,
    fallback: bool,
    silent: bool,
    curve: Option<MaskingCurve>,
    timings: StageTimings,
}

#[allow(clippy::too_many_arguments)]
fn design_segment(
    x: &[f64],
    rirs: &RirSet,
    scene: &SceneGeometry,
    zone: Zone,
    maskers: &[Option<Vec<f64>>],
    config: &ScenarioConfig,
    seg: &Segmenter,
    i: usize,
    model: &dyn MaskingModel,
) -> Result<SegmentResult> {
    let start = seg.frame_start(ap_vast_first_start(config.overlap), i);
    let window = ObservationWindow::new(start, config.segment_length);
    let mut timings = StageTimings::default();
    let bright = control_points(scene, zone);
    let mut curve = None;
    let weighting = if config.weighting {
        let t = Instant::now();
        let mut set = WeightingSet::new();
        let mut pts = bright.clone();
        pts.extend(control_points(scene, zone.other()));
        for &m in &pts {
            let c = segment_curve(model, maskers[m].as_ref(), seg, start, i, rirs.sample_rate())?;
            set.insert(m, weighting_filter(&c, config.effective_taps())?.taps);
            if m == bright[0] {
                curve = Some(c);
            }
        }
        timings.masking = t.elapsed();
        Some(set)
    } else {
        None
    };
    let t = Instant::now();
    let stats = stats_for(x, rirs, scene, zone, config.j_len, weighting.as_ref(), window)?;
    timings.stats = t.elapsed();
    let t = Instant::now();
    let (jd, fallback) = diagonalize(&stats)?;
    timings.gevd = t.elapsed();
    let silent = jd.is_none();
    let design = StaticDesign { zone, eval: stats.clone(), design: stats, jd, fallback };
    let banks = design_filters(&design, &config.params, rirs.sources(), config.j_len)?;
    Ok(SegmentResult { banks, fallback, silent, curve, timings })
}

/// Renders `ap_vast`: one design per segment and program.
pub fn render_ap_vast(
    programs: &Programs,
    rirs: &RirSet,
    scene: &SceneGeometry,
    config: &ScenarioConfig,
    model: &dyn MaskingModel,
) -> Result<RenderOutput> {
    if config.method != Method::ApVast {
        return Err(Error::InvalidArgument("render_ap_vast needs method ap_vast".into()));
    }
    config.validate(rirs.sources())?;
    let len = programs.signal_len()?;
    let seg = Segmenter::sine(config.segment_length, config.overlap)?;
    let count = ap_vast_segment_count(len, config.segment_length, config.overlap);
    let first = ap_vast_first_start(config.overlap);
    let out_len = output_len(len, rirs, config.j_len);
    let maskers = if config.weighting { maskers(programs, rirs, scene)? } else { Vec::new() };

    let mut timings = StageTimings::default();
    let mut fallbacks = 0;
    let mut silent_segments = 0;
    let mut masking = Vec::new();
    let mut segment_filters = Vec::new();
    let mut per_program = Vec::new();
    for (zone, x) in programs.list() {
        check_rank(rirs, scene, zone, config.segment_length, config.j_len)?;
        let results = (0..count)
            .into_par_iter()
            .map(|i| design_segment(x, rirs, scene, zone, &maskers, config, &seg, i, model))
            .collect::<Result<Vec<_>>>()?;
        for (i, r) in results.iter().enumerate() {
            timings.add(&r.timings);
            fallbacks += usize::from(r.fallback);
            silent_segments += usize::from(r.silent);
            if let Some(c) = &r.curve {
                let point = scene.indices(zone, PointKind::Control).start;
                masking.push(MaskingRecord { program: zone, point, curve: MaskingCurve { segment_index: i, ..c.clone() } });
            }
        }
        let t = Instant::now();
        let mut reproduced = Vec::with_capacity(config.params.len());
        for (k, &params) in config.params.iter().enumerate() {
            let banks: Vec<ControlFilterBank> = results.iter().map(|r| r.banks[k].clone()).collect();
            let u = wola_filter(x, &seg, first, &banks)?;
            reproduced.push(propagate(&u, rirs, out_len)?);
            if config.keep_segment_filters {
                segment_filters.push(SegmentFilters { program: zone, params, filters: banks });
            }
        }
        timings.filtering += t.elapsed();
        let desired = desired_field(x, rirs, &zone_points(scene, zone))?;
        per_program.push((zone, desired, reproduced));
    }
    let n = config.segment_length;
    let metric_window = if out_len > 2 * n { MetricWindow::new(n, out_len - n) } else { MetricWindow::full(out_len) };
    let params: Vec<Option<VastParams>> = config.params.iter().map(|&p| Some(p)).collect();
    Ok(RenderOutput {
        fields: assemble_fields(per_program, &params, out_len, metric_window),
        report: RunReport { method: Method::ApVast, segments: count, fallbacks, silent_segments, timings },
        masking,
        segment_filters,
    })
}

/// Dispatches on `config.method`.
pub fn render(
    programs: &Programs,
    rirs: &RirSet,
    scene: &SceneGeometry,
    config: &ScenarioConfig,
    model: &dyn MaskingModel,
) -> Result<RenderOutput> {
    match config.method {
        Method::ApVast => render_ap_vast(programs, rirs, scene, config, model),
        _ => render_static(programs, rirs, scene, config, model),
    }
}
