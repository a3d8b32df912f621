use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vastzones::metrics::{acoustic_contrast_db, aggregate, tir_db};
use vastzones::percept::BarkSpreadingModel;
use vastzones::pipeline::{render, Method, Programs, RenderedField, ScenarioConfig};
use vastzones::room::{
    generate_image_source_rirs, read_rir_set, write_rir_set, CircularLayout, PointKind, RirSet, RoomSpec,
    SceneGeometry, Zone,
};
use vastzones::vast::VastParams;

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| r.random_range(-0.5..0.5)).collect()
}

fn setup() -> (SceneGeometry, RirSet) {
    let layout = CircularLayout {
        center: [2.0, 2.0, 1.2],
        loudspeakers: 6,
        radius: 1.2,
        zone_distance: 1.0,
        grid_spacing: 0.08,
        control_grid: 3,
        monitor_grid: 2,
        virtual_speaker: 4,
        virtual_offset: 0.4,
    };
    let scene = layout.build().unwrap();
    let room = RoomSpec::shoebox([4.0, 4.0, 2.5], 0.12, 8000);
    (scene.clone(), generate_image_source_rirs(&scene, &room, 640, 5).unwrap())
}

fn monitor_contrast(f: &RenderedField, scene: &SceneGeometry, zone: Zone) -> f64 {
    let p = &f.program(zone).unwrap().reproduced;
    let b: Vec<&Vec<f64>> = scene.indices(zone, PointKind::Monitor).map(|m| &p[m]).collect();
    let d: Vec<&Vec<f64>> = scene.indices(zone.other(), PointKind::Monitor).map(|m| &p[m]).collect();
    acoustic_contrast_db(&b, &d, f.metric_window).unwrap()
}

fn mean_tir(f: &RenderedField, scene: &SceneGeometry, zone: Zone) -> f64 {
    let own = &f.program(zone).unwrap().reproduced;
    let other = &f.program(zone.other()).unwrap().reproduced;
    let vals: Vec<f64> = scene
        .indices(zone, PointKind::Monitor)
        .map(|m| tir_db(&own[m], &other[m], f.metric_window).unwrap())
        .collect();
    aggregate(&vals).mean
}

#[test]
fn symmetric_baseline_has_balanced_tir() {
    let (scene, rirs) = setup();
    let xa = noise(48000, 1);
    let mut xb = noise(48000, 2);
    let gain = (xa.iter().map(|v| v * v).sum::<f64>() / xb.iter().map(|v| v * v).sum::<f64>()).sqrt();
    xb.iter_mut().for_each(|v| *v *= gain);
    let config = ScenarioConfig { method: Method::NoControl, j_len: 16, ..ScenarioConfig::default() };
    let out = render(&Programs::both(&xa, &xb), &rirs, &scene, &config, &BarkSpreadingModel::default()).unwrap();
    let f = &out.fields[0];
    assert!(mean_tir(f, &scene, Zone::Alpha).abs() < 0.5);
    assert!(mean_tir(f, &scene, Zone::Beta).abs() < 0.5);
}

#[test]
fn every_method_beats_the_baseline_contrast() {
    let (scene, rirs) = setup();
    let xa = noise(6000, 3);
    let xb = noise(6000, 4);
    let programs = Programs::both(&xa, &xb);
    let model = BarkSpreadingModel::default();
    let base = ScenarioConfig { j_len: 16, segment_length: 256, overlap: 128, ..ScenarioConfig::default() };
    let none = render(&programs, &rirs, &scene, &ScenarioConfig { method: Method::NoControl, ..base.clone() }, &model)
        .unwrap();
    let ac0 = monitor_contrast(&none.fields[0], &scene, Zone::Alpha);
    for method in [Method::Vast, Method::PVast, Method::ApVast] {
        let config = ScenarioConfig { method, params: vec![VastParams::new(1, 1.0)], ..base.clone() };
        let out = render(&programs, &rirs, &scene, &config, &model).unwrap();
        let f = &out.fields[0];
        for zone in [Zone::Alpha, Zone::Beta] {
            let ac = monitor_contrast(f, &scene, zone);
            assert!(ac > ac0 + 3.0, "{}: {ac:.1} dB vs baseline {ac0:.1} dB", method.name());
        }
        assert_eq!(out.report.fallbacks, 0);
    }
}

#[test]
fn container_round_trip_through_a_file() {
    let (_, rirs) = setup();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rirs.vzrir");
    write_rir_set(std::io::BufWriter::new(std::fs::File::create(&path).unwrap()), &rirs).unwrap();
    let back = read_rir_set(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, rirs);
}
