use vastzones::room::{generate_image_source_rirs, AbsorptionModel, RoomSpec, SceneGeometry};

fn scene() -> SceneGeometry {
    SceneGeometry {
        loudspeakers: vec![[1.3, 1.7, 2.1]],
        control_alpha: vec![[3.6, 3.1, 1.4]],
        control_beta: vec![],
        monitor_alpha: vec![],
        monitor_beta: vec![],
        virtual_source: [2.2, 4.1, 2.9],
    }
}

/// Reverberation time from a -5..-25 dB line fit of the backward-integrated
/// energy decay, extrapolated to -60 dB.
fn t60_from_decay(h: &[f64], fs: f64) -> f64 {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for n in (0..h.len()).rev() {
        acc += h[n] * h[n];
        edc[n] = acc;
    }
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .map(|(n, &e)| (n as f64 / fs, 10.0 * (e / edc[0]).log10()))
        .filter(|&(_, db)| (-25.0..=-5.0).contains(&db))
        .collect();
    let n = pts.len() as f64;
    let (mt, md) = pts.iter().fold((0.0, 0.0), |(a, b), &(t, d)| (a + t / n, b + d / n));
    let cov: f64 = pts.iter().map(|&(t, d)| (t - mt) * (d - md)).sum();
    let var: f64 = pts.iter().map(|&(t, _)| (t - mt).powi(2)).sum();
    -60.0 / (cov / var)
}

#[test]
fn decay_matches_target_t60() {
    let room = RoomSpec::shoebox([5.0, 5.0, 5.0], 0.2, 8000);
    assert_eq!(room.absorption, AbsorptionModel::ImageSource);
    let rirs = generate_image_source_rirs(&scene(), &room, 2800, 32).unwrap();
    let t60 = t60_from_decay(rirs.h(0, 0), 8000.0);
    assert!((0.16..=0.24).contains(&t60), "estimated T60 {t60:.3} s");
}

#[test]
fn longer_target_decays_slower() {
    let short = RoomSpec::shoebox([5.0, 5.0, 5.0], 0.15, 8000);
    let long = RoomSpec::shoebox([5.0, 5.0, 5.0], 0.3, 8000);
    let a = generate_image_source_rirs(&scene(), &short, 2800, 24).unwrap();
    let b = generate_image_source_rirs(&scene(), &long, 2800, 24).unwrap();
    assert!(t60_from_decay(b.h(0, 0), 8000.0) > t60_from_decay(a.h(0, 0), 8000.0));
}
