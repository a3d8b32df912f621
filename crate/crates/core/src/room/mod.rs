//! Scene geometry and synthetic room impulse responses.
//!
//! Two generators are provided: a free-field one (direct path only) and the
//! Allen–Berkley image-source method for shoebox rooms. Both realize each
//! propagation path as a band-limited impulse: a Hann-windowed sinc centred
//! on the fractional delay `d / c * fs` with amplitude `1 / (4 pi d)`.

mod container;
mod geometry;

pub use container::{read_rir_set, write_rir_set, RIR_MAGIC};
pub use geometry::{CircularLayout, PointKind, SceneGeometry, Zone};

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::{Error, Result};

pub type Point3 = [f64; 3];

/// Half-width, in taps, of the windowed-sinc fractional delay kernel.
pub const SINC_HALF_WIDTH: usize = 32;

/// How the uniform wall reflection coefficient is derived from T60.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbsorptionModel {
    /// `1 - beta^2 = 24 ln(10) V / (c S T60)`.
    Sabine,
    /// `beta^2 = exp(-24 ln(10) V / (c S T60))`.
    Eyring,
    /// Solves for the `beta` whose direction-averaged image-source energy
    /// decay reaches -60 dB at T60. Axial paths reflect less often than the
    /// mean, so this sits below the Eyring value in regular rooms.
    #[default]
    ImageSource,
}

const DECAY_QUADRATURE: usize = 128;

/// `kappa = -ln(beta^2)` such that the backward-integrated decay of
/// `E_u[exp(-kappa c t g(u))]`, `g(u) = sum |u_i| / L_i`, is `1e-6` at `t60`.
fn image_source_decay_rate(dims: &Point3, c: f64, t60: f64) -> f64 {
    let n = DECAY_QUADRATURE;
    let mut g = Vec::with_capacity(n * n);
    for i in 0..n {
        let theta = (i as f64 + 0.5) / n as f64 * PI / 2.0;
        for j in 0..n {
            let phi = (j as f64 + 0.5) / n as f64 * PI / 2.0;
            let u = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            let gu: f64 = (0..3).map(|d| u[d] / dims[d]).sum();
            g.push((gu, theta.sin()));
        }
    }
    let norm: f64 = g.iter().map(|&(gu, w)| w / gu).sum();
    let ratio = |kappa: f64| g.iter().map(|&(gu, w)| w * (-kappa * c * t60 * gu).exp() / gu).sum::<f64>() / norm;
    let target = 1e-6;
    let (mut lo, mut hi) = (0.0, 1.0);
    while ratio(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    /// Shoebox extent in meters; `None` for an unbounded (anechoic) space.
    pub dimensions: Option<Point3>,
    pub t60: f64,
    pub speed_of_sound: f64,
    pub sample_rate: u32,
    pub absorption: AbsorptionModel,
    /// Cutoff of the first-order DC blocker applied to image-source
    /// responses. All-positive reflections otherwise pile up energy near DC
    /// and stretch the late decay.
    pub highpass_hz: Option<f64>,
}

pub const DEFAULT_HIGHPASS_HZ: f64 = 25.0;

impl RoomSpec {
    pub fn anechoic(sample_rate: u32) -> Self {
        Self {
            dimensions: None,
            t60: 0.0,
            speed_of_sound: 343.0,
            sample_rate,
            absorption: AbsorptionModel::default(),
            highpass_hz: None,
        }
    }

    pub fn shoebox(dimensions: Point3, t60: f64, sample_rate: u32) -> Self {
        Self {
            dimensions: Some(dimensions),
            t60,
            speed_of_sound: 343.0,
            sample_rate,
            absorption: AbsorptionModel::default(),
            highpass_hz: Some(DEFAULT_HIGHPASS_HZ),
        }
    }

    pub fn is_anechoic(&self) -> bool {
        self.dimensions.is_none() || self.t60 == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return Err(Error::InvalidArgument("speed of sound must be positive".into()));
        }
        if !(self.t60 >= 0.0 && self.t60.is_finite()) {
            return Err(Error::InvalidArgument("t60 must be a nonnegative number of seconds".into()));
        }
        if let Some(fc) = self.highpass_hz {
            if !(fc > 0.0 && fc < self.sample_rate as f64 / 2.0) {
                return Err(Error::InvalidArgument(format!(
                    "high-pass cutoff {fc} Hz must lie strictly between 0 and Nyquist"
                )));
            }
        }
        if let Some(dims) = self.dimensions {
            if dims.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
                return Err(Error::InvalidArgument(format!(
                    "room dimensions must be strictly positive, got {dims:?}"
                )));
            }
        }
        Ok(())
    }

    /// Uniform wall reflection coefficient matching `t60` for this room.
    pub fn reflection_coefficient(&self) -> Result<f64> {
        let dims = self.dimensions.ok_or_else(|| {
            Error::InfeasibleAbsorption("an unbounded room has no walls".into())
        })?;
        if !(self.t60 > 0.0) {
            return Err(Error::InfeasibleAbsorption("t60 must be positive".into()));
        }
        let volume = dims[0] * dims[1] * dims[2];
        let surface = 2.0 * (dims[0] * dims[1] + dims[0] * dims[2] + dims[1] * dims[2]);
        let x = 24.0 * std::f64::consts::LN_10 * volume / (self.speed_of_sound * surface * self.t60);
        let beta = match self.absorption {
            AbsorptionModel::Sabine => {
                if x > 1.0 {
                    return Err(Error::InfeasibleAbsorption(format!(
                        "Sabine absorption {x:.3} exceeds 1; t60 = {} s is too short for a {volume:.1} m^3 room",
                        self.t60
                    )));
                }
                (1.0 - x).sqrt()
            }
            AbsorptionModel::Eyring => (-0.5 * x).exp(),
            AbsorptionModel::ImageSource => {
                (-0.5 * image_source_decay_rate(&dims, self.speed_of_sound, self.t60)).exp()
            }
        };
        if !(beta > 0.0) {
            return Err(Error::InfeasibleAbsorption(format!(
                "reflection coefficient underflows for t60 = {} s",
                self.t60
            )));
        }
        Ok(beta)
    }
}

/// Room impulse responses for every (receiver, loudspeaker) pair plus the
/// virtual source. Receivers follow [`SceneGeometry::receivers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct RirSet {
    points: usize,
    sources: usize,
    taps: usize,
    sample_rate: u32,
    h: Vec<f64>,
    h_virtual: Vec<f64>,
}

impl RirSet {
    /// Builds a set from flat row-major buffers `[m][l][k]` and `[m][k]`.
    pub fn from_parts(
        points: usize,
        sources: usize,
        taps: usize,
        sample_rate: u32,
        h: Vec<f64>,
        h_virtual: Vec<f64>,
    ) -> Result<Self> {
        if taps == 0 || points == 0 || sources == 0 {
            return Err(Error::InvalidArgument("RIR set needs M, L, K >= 1".into()));
        }
        if h.len() != points * sources * taps || h_virtual.len() != points * taps {
            return Err(Error::DimensionMismatch(format!(
                "expected {} + {} samples, got {} + {}",
                points * sources * taps,
                points * taps,
                h.len(),
                h_virtual.len()
            )));
        }
        if h.iter().chain(&h_virtual).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("RIRs must be finite".into()));
        }
        Ok(Self { points, sources, taps, sample_rate, h, h_virtual })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Response from loudspeaker `l` to receiver `m`.
    pub fn h(&self, m: usize, l: usize) -> &[f64] {
        let start = (m * self.sources + l) * self.taps;
        &self.h[start..start + self.taps]
    }

    /// Response from the virtual source to receiver `m`.
    pub fn h_virtual(&self, m: usize) -> &[f64] {
        &self.h_virtual[m * self.taps..(m + 1) * self.taps]
    }

    pub fn raw(&self) -> (&[f64], &[f64]) {
        (&self.h, &self.h_virtual)
    }
}

/// Adds a band-limited impulse of amplitude `amp` at fractional delay `delay`
/// (in samples). Taps falling outside `buf` are dropped.
pub(crate) fn add_fractional_impulse(buf: &mut [f64], delay: f64, amp: f64) {
    let half = SINC_HALF_WIDTH as f64;
    let first = (delay - half).ceil().max(0.0) as usize;
    let last = (delay + half).floor();
    if last < 0.0 {
        return;
    }
    let last = (last as usize).min(buf.len().saturating_sub(1));
    for (k, slot) in buf.iter_mut().enumerate().take(last + 1).skip(first) {
        let t = k as f64 - delay;
        if t.abs() >= half {
            continue;
        }
        let window = 0.5 * (1.0 + (PI * t / half).cos());
        let sinc = if t == 0.0 { 1.0 } else { (PI * t).sin() / (PI * t) };
        *slot += amp * window * sinc;
    }
}

fn distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Rejects any receiver or source on or outside the walls of a bounded room.
pub fn check_inside(room: &RoomSpec, scene: &SceneGeometry) -> Result<()> {
    let Some(dims) = room.dimensions else {
        return Ok(());
    };
    let inside = |p: &Point3| (0..3).all(|d| p[d] > 0.0 && p[d] < dims[d]);
    for p in scene.receivers().iter().chain(&scene.loudspeakers).chain([&scene.virtual_source]) {
        if !inside(p) {
            return Err(Error::OutsideRoom(*p));
        }
    }
    Ok(())
}

fn direct_path(
    buf: &mut [f64],
    src: &Point3,
    rcv: &Point3,
    room: &RoomSpec,
    point: usize,
    source_index: usize,
) -> Result<()> {
    let d = distance(src, rcv);
    if d == 0.0 {
        return Err(Error::CoincidentPositions { point, source_index });
    }
    let delay = d / room.speed_of_sound * room.sample_rate as f64;
    let needed = (delay + SINC_HALF_WIDTH as f64).ceil() as usize + 1;
    if needed > buf.len() {
        return Err(Error::RirTooShort { point, source_index, needed, available: buf.len() });
    }
    add_fractional_impulse(buf, delay, 1.0 / (4.0 * PI * d));
    Ok(())
}

/// Direct-path responses in free field. The virtual source is reported with
/// `source_index == L` in errors.
pub fn generate_anechoic_rirs(scene: &SceneGeometry, room: &RoomSpec, k_taps: usize) -> Result<RirSet> {
    room.validate()?;
    scene.validate_positions()?;
    synthesize(scene, room, k_taps, |buf, src, rcv, m, l| direct_path(buf, src, rcv, room, m, l))
}

/// Image-source responses up to `max_order` reflections in a shoebox room.
pub fn generate_image_source_rirs(
    scene: &SceneGeometry,
    room: &RoomSpec,
    k_taps: usize,
    max_order: usize,
) -> Result<RirSet> {
    room.validate()?;
    scene.validate_positions()?;
    let dims = room.dimensions.ok_or_else(|| {
        Error::InvalidArgument("the image-source method needs a bounded room".into())
    })?;
    if !(room.t60 > 0.0) {
        return Err(Error::InvalidArgument(
            "t60 = 0 is anechoic; use generate_anechoic_rirs".into(),
        ));
    }
    check_inside(room, scene)?;
    let beta = room.reflection_coefficient()?;
    synthesize(scene, room, k_taps, |buf, src, rcv, m, l| {
        direct_path(buf, src, rcv, room, m, l)?;
        add_reflections(buf, src, rcv, room, &dims, beta, max_order);
        if let Some(fc) = room.highpass_hz {
            dc_block(buf, (-2.0 * PI * fc / room.sample_rate as f64).exp());
        }
        Ok(())
    })
}

/// `y[n] = x[n] - x[n-1] + r y[n-1]`, in place.
fn dc_block(buf: &mut [f64], r: f64) {
    let (mut px, mut py) = (0.0, 0.0);
    for v in buf.iter_mut() {
        let y = *v - px + r * py;
        px = *v;
        py = y;
        *v = y;
    }
}

fn synthesize<F>(scene: &SceneGeometry, room: &RoomSpec, k_taps: usize, path: F) -> Result<RirSet>
where
    F: Fn(&mut [f64], &Point3, &Point3, usize, usize) -> Result<()> + Sync,
{
    if k_taps == 0 {
        return Err(Error::InvalidArgument("k_taps must be >= 1".into()));
    }
    let receivers = scene.receivers();
    let sources = scene.loudspeakers.len();
    let mut h = vec![0.0; receivers.len() * sources * k_taps];
    h.par_chunks_mut(k_taps).enumerate().try_for_each(|(idx, buf)| {
        let (m, l) = (idx / sources, idx % sources);
        path(buf, &scene.loudspeakers[l], &receivers[m], m, l)
    })?;
    let mut h_virtual = vec![0.0; receivers.len() * k_taps];
    h_virtual.par_chunks_mut(k_taps).enumerate().try_for_each(|(m, buf)| {
        path(buf, &scene.virtual_source, &receivers[m], m, sources)
    })?;
    RirSet::from_parts(receivers.len(), sources, k_taps, room.sample_rate, h, h_virtual)
}

/// Adds every image of order 1..=max_order (the direct path is order 0).
fn add_reflections(
    buf: &mut [f64],
    src: &Point3,
    rcv: &Point3,
    room: &RoomSpec,
    dims: &Point3,
    beta: f64,
    max_order: usize,
) {
    let fs = room.sample_rate as f64;
    let c = room.speed_of_sound;
    let max_delay = (buf.len() + SINC_HALF_WIDTH) as f64;
    let order = max_order as i64;
    let n_max = (order + 1) / 2 + 1;

    // Per axis: (offset, reflection count) for every mirrored coordinate.
    let axis = |d: usize| {
        let mut terms = Vec::new();
        for n in -n_max..=n_max {
            for q in 0..2i64 {
                let refl = (n - q).abs() + n.abs();
                if refl > order {
                    continue;
                }
                let offset = (1 - 2 * q) as f64 * src[d] - rcv[d] + 2.0 * n as f64 * dims[d];
                terms.push((offset, refl));
            }
        }
        terms
    };
    let (xs, ys, zs) = (axis(0), axis(1), axis(2));
    for &(dx, rx) in &xs {
        for &(dy, ry) in &ys {
            if rx + ry > order {
                continue;
            }
            for &(dz, rz) in &zs {
                let total = rx + ry + rz;
                if total == 0 || total > order {
                    continue;
                }
                let d = (dx * dx + dy * dy + dz * dz).sqrt();
                let delay = d / c * fs;
                if delay - SINC_HALF_WIDTH as f64 >= max_delay {
                    continue;
                }
                let amp = beta.powi(total as i32) / (4.0 * PI * d);
                add_fractional_impulse(buf, delay, amp);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_pair(src: Point3, rcv: Point3) -> SceneGeometry {
        SceneGeometry {
            loudspeakers: vec![src],
            control_alpha: vec![rcv],
            control_beta: vec![],
            monitor_alpha: vec![],
            monitor_beta: vec![],
            virtual_source: src,
        }
    }

    fn peak(h: &[f64]) -> (usize, f64) {
        h.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v.abs() > acc.1.abs() { (i, v) } else { acc })
    }

    #[test]
    fn integer_delay_lands_on_tap() {
        let room = RoomSpec::anechoic(16000);
        let scene = single_pair([0.0, 0.0, 0.0], [343.0, 0.0, 0.0]);
        let rirs = generate_anechoic_rirs(&scene, &room, 16100).unwrap();
        let (k, v) = peak(rirs.h(0, 0));
        assert_eq!(k, 16000);
        assert!((v - 1.0 / (4.0 * PI * 343.0)).abs() < 1e-15);
    }

    #[test]
    fn amplitude_follows_inverse_distance() {
        let room = RoomSpec::anechoic(16000);
        let near = generate_anechoic_rirs(&single_pair([0.0; 3], [3.43, 0.0, 0.0]), &room, 512).unwrap();
        let far = generate_anechoic_rirs(&single_pair([0.0; 3], [6.86, 0.0, 0.0]), &room, 512).unwrap();
        // 3.43 m and 6.86 m are 160 and 320 samples: integer delays, so the
        // peak tap carries the full amplitude.
        let ratio = peak(near.h(0, 0)).1 / peak(far.h(0, 0)).1;
        assert!((ratio - 2.0).abs() < 1e-9, "ratio {ratio}");
    }

    #[test]
    fn equidistant_receivers_match() {
        let room = RoomSpec::anechoic(16000);
        let mut scene = single_pair([0.0; 3], [1.3, 0.7, 0.2]);
        scene.control_beta = vec![[0.7, 1.3, 0.2]];
        let rirs = generate_anechoic_rirs(&scene, &room, 256).unwrap();
        for (a, b) in rirs.h(0, 0).iter().zip(rirs.h(1, 0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delay_beyond_taps_names_pair() {
        let room = RoomSpec::anechoic(16000);
        let scene = single_pair([0.0; 3], [10.0, 0.0, 0.0]);
        match generate_anechoic_rirs(&scene, &room, 100) {
            Err(Error::RirTooShort { point: 0, source_index: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coincident_positions_rejected() {
        let room = RoomSpec::anechoic(16000);
        let scene = single_pair([1.0; 3], [1.0; 3]);
        assert!(matches!(
            generate_anechoic_rirs(&scene, &room, 100),
            Err(Error::CoincidentPositions { .. })
        ));
    }

    #[test]
    fn anechoic_has_single_lobe_group() {
        let room = RoomSpec::anechoic(16000);
        let rirs = generate_anechoic_rirs(&single_pair([0.0; 3], [1.234, 0.0, 0.0]), &room, 256).unwrap();
        let nz: Vec<usize> = rirs.h(0, 0).iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        assert!(nz.len() <= 2 * SINC_HALF_WIDTH + 1);
        assert!(nz.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn order_zero_matches_anechoic() {
        let scene = single_pair([1.0, 1.5, 1.2], [3.1, 2.2, 1.7]);
        let mut room = RoomSpec::shoebox([5.0, 4.0, 3.0], 0.3, 16000);
        room.highpass_hz = None;
        let ism = generate_image_source_rirs(&scene, &room, 400, 0).unwrap();
        let free = generate_anechoic_rirs(&scene, &room, 400).unwrap();
        for (a, b) in ism.raw().0.iter().zip(free.raw().0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_t60_rejected_for_image_source() {
        let scene = single_pair([1.0, 1.5, 1.2], [3.1, 2.2, 1.7]);
        let room = RoomSpec::shoebox([5.0, 4.0, 3.0], 0.0, 16000);
        assert!(generate_image_source_rirs(&scene, &room, 400, 3).is_err());
    }

    #[test]
    fn highpass_removes_low_frequency_buildup() {
        let scene = single_pair([1.0, 1.5, 1.2], [3.1, 2.2, 1.7]);
        let mut room = RoomSpec::shoebox([5.0, 4.0, 3.0], 0.3, 8000);
        let filtered = generate_image_source_rirs(&scene, &room, 2000, 12).unwrap();
        room.highpass_hz = None;
        let raw = generate_image_source_rirs(&scene, &room, 2000, 12).unwrap();
        let dc = |h: &[f64]| h.iter().sum::<f64>().abs();
        assert!(dc(filtered.h(0, 0)) < 0.1 * dc(raw.h(0, 0)));
        room.highpass_hz = Some(4000.0);
        assert!(room.validate().is_err());
    }

    #[test]
    fn absorption_models_ordered() {
        let mut room = RoomSpec::shoebox([5.0, 5.0, 5.0], 0.2, 8000);
        let mut beta = Vec::new();
        for model in [AbsorptionModel::Sabine, AbsorptionModel::ImageSource, AbsorptionModel::Eyring] {
            room.absorption = model;
            beta.push(room.reflection_coefficient().unwrap());
        }
        assert!(beta[0] < beta[1] && beta[1] < beta[2], "{beta:?}");
        room.t60 = 0.4;
        assert!(room.reflection_coefficient().unwrap() > beta[1]);
    }

    #[test]
    fn sabine_infeasible_for_tiny_t60() {
        let scene = single_pair([1.0, 1.5, 1.2], [3.1, 2.2, 1.7]);
        let mut room = RoomSpec::shoebox([5.0, 4.0, 3.0], 0.01, 16000);
        room.absorption = AbsorptionModel::Sabine;
        assert!(matches!(
            generate_image_source_rirs(&scene, &room, 400, 3),
            Err(Error::InfeasibleAbsorption(_))
        ));
    }

    #[test]
    fn image_source_is_reciprocal() {
        let room = RoomSpec::shoebox([4.0, 5.0, 3.0], 0.25, 8000);
        let a = generate_image_source_rirs(&single_pair([1.0, 1.2, 1.4], [2.9, 3.7, 1.1]), &room, 1200, 8).unwrap();
        let b = generate_image_source_rirs(&single_pair([2.9, 3.7, 1.1], [1.0, 1.2, 1.4]), &room, 1200, 8).unwrap();
        for (x, y) in a.h(0, 0).iter().zip(b.h(0, 0)) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn positions_outside_room_rejected() {
        let room = RoomSpec::shoebox([4.0, 5.0, 3.0], 0.25, 8000);
        let scene = single_pair([1.0, 1.2, 1.4], [4.5, 3.7, 1.1]);
        assert!(matches!(generate_image_source_rirs(&scene, &room, 1200, 2), Err(Error::OutsideRoom(_))));
    }
}
