//! Experiment description: TOML file plus `--override key=value` edits.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use vastzones::pipeline::{Method, ScenarioConfig};
use vastzones::room::{AbsorptionModel, CircularLayout, Point3, RoomSpec, SceneGeometry};
use vastzones::vast::VastParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub room: RoomSection,
    #[serde(default)]
    pub scene: SceneSection,
    pub signals: SignalsSection,
    #[serde(default)]
    pub method: MethodSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dimensions {
    Shoebox(Point3),
    /// Only `"unbounded"` is accepted.
    Keyword(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Absorption {
    #[default]
    ImageSource,
    Eyring,
    Sabine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSection {
    pub dimensions: Dimensions,
    #[serde(default)]
    pub t60: f64,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
    pub sample_rate: u32,
    /// RIR length `K`.
    pub rir_taps: usize,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    #[serde(default)]
    pub absorption: Absorption,
    /// 0 disables the high-pass.
    #[serde(default = "default_highpass")]
    pub highpass_hz: f64,
}

fn default_speed_of_sound() -> f64 {
    343.0
}

fn default_max_order() -> usize {
    10
}

fn default_highpass() -> f64 {
    vastzones::room::DEFAULT_HIGHPASS_HZ
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricPoints {
    #[default]
    Monitor,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    /// Defaults to the middle of the room floor plan at 1.5 m height.
    pub center: Option<Point3>,
    pub loudspeakers: usize,
    pub radius: f64,
    pub zone_distance: f64,
    pub grid_spacing: f64,
    pub control_grid: usize,
    pub monitor_grid: usize,
    pub virtual_speaker: usize,
    pub virtual_offset: f64,
    pub metric_points: MetricPoints,
}

impl Default for SceneSection {
    fn default() -> Self {
        let d = CircularLayout::default();
        Self {
            center: None,
            loudspeakers: d.loudspeakers,
            radius: d.radius,
            zone_distance: d.zone_distance,
            grid_spacing: d.grid_spacing,
            control_grid: d.control_grid,
            monitor_grid: d.monitor_grid,
            virtual_speaker: d.virtual_speaker,
            virtual_offset: d.virtual_offset,
            metric_points: MetricPoints::Monitor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSource {
    /// Mono WAV; relative paths are resolved against the config file.
    pub wav: Option<PathBuf>,
    /// Seeded Gaussian white noise of this duration instead of a file.
    pub noise_seconds: Option<f64>,
    #[serde(default = "default_noise_rms")]
    pub noise_rms: f64,
}

fn default_noise_rms() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsSection {
    pub alpha: Option<ProgramSource>,
    pub beta: Option<ProgramSource>,
    /// Scale the beta program to the energy of the alpha program.
    #[serde(default = "yes")]
    pub calibrate_energy: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    pub v: usize,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSection {
    pub methods: Vec<String>,
    pub designs: Vec<Design>,
    pub j: usize,
    pub segment_length: usize,
    pub overlap: usize,
    pub weighting: bool,
    pub weighting_taps: usize,
}

impl Default for MethodSection {
    fn default() -> Self {
        let d = ScenarioConfig::default();
        Self {
            methods: ["no_control", "vast", "p_vast", "ap_vast"].map(String::from).to_vec(),
            designs: d.params.iter().map(|p| Design { v: p.v, mu: p.mu }).collect(),
            j: d.j_len,
            segment_length: d.segment_length,
            overlap: d.overlap,
            weighting: d.weighting,
            weighting_taps: d.weighting_taps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Defaults to a log-spaced grid over `1..=LJ`.
    pub v_grid: Option<Vec<usize>>,
    pub mu_grid: Option<Vec<f64>>,
    /// `vast` (unweighted statistics) or `p_vast` (averaged-masking weights).
    #[serde(default = "default_sweep_method")]
    pub method: String,
}

fn default_sweep_method() -> String {
    "vast".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub wav: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("vastzones_out"), wav: true }
    }
}

/// A parsed config together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    /// Exact text the config was parsed from, after overrides.
    pub text: String,
}

impl LoadedConfig {
    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir().join(p)
        }
    }
}

pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let raw = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let text = if overrides.is_empty() {
        raw
    } else {
        let mut table: toml::Table =
            toml::from_str(&raw).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        toml::to_string(&table)?
    };
    let config: ExperimentConfig = toml::from_str(&text).map_err(|e| {
        if overrides.is_empty() {
            anyhow!("{}: {e}", path.display())
        } else {
            anyhow!("{} (after overrides): {e}", path.display())
        }
    })?;
    Ok(LoadedConfig { config, path: path.to_path_buf(), text })
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// when it does not parse as one.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec.split_once('=').ok_or_else(|| anyhow!("override {spec:?} is not key=value"))?;
    let keys: Vec<&str> = key.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override key {key:?} has an empty component");
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let (last, parents) = keys.split_last().expect("nonempty key");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {key:?}: {k:?} is not a table"))?;
    }
    cur.insert(last.to_string(), parsed);
    Ok(())
}

impl ExperimentConfig {
    pub fn room_spec(&self) -> Result<RoomSpec> {
        let r = &self.room;
        let dimensions = match &r.dimensions {
            Dimensions::Shoebox(d) => Some(*d),
            Dimensions::Keyword(k) if k == "unbounded" => None,
            Dimensions::Keyword(k) => bail!("room.dimensions: expected [x, y, z] or \"unbounded\", got {k:?}"),
        };
        Ok(RoomSpec {
            dimensions,
            t60: r.t60,
            speed_of_sound: r.speed_of_sound,
            sample_rate: r.sample_rate,
            absorption: match r.absorption {
                Absorption::ImageSource => AbsorptionModel::ImageSource,
                Absorption::Eyring => AbsorptionModel::Eyring,
                Absorption::Sabine => AbsorptionModel::Sabine,
            },
            highpass_hz: (r.highpass_hz > 0.0).then_some(r.highpass_hz),
        })
    }

    pub fn layout(&self) -> Result<CircularLayout> {
        let s = &self.scene;
        let center = match (s.center, &self.room.dimensions) {
            (Some(c), _) => c,
            (None, Dimensions::Shoebox(d)) => [d[0] / 2.0, d[1] / 2.0, 1.5f64.min(d[2] / 2.0)],
            (None, _) => [0.0, 0.0, 1.5],
        };
        Ok(CircularLayout {
            center,
            loudspeakers: s.loudspeakers,
            radius: s.radius,
            zone_distance: s.zone_distance,
            grid_spacing: s.grid_spacing,
            control_grid: s.control_grid,
            monitor_grid: s.monitor_grid,
            virtual_speaker: s.virtual_speaker,
            virtual_offset: s.virtual_offset,
        })
    }

    pub fn scene(&self) -> Result<SceneGeometry> {
        Ok(self.layout()?.build()?)
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        if self.method.methods.is_empty() {
            bail!("method.methods is empty");
        }
        self.method.methods.iter().map(|m| Method::parse(m).context("method.methods")).collect()
    }

    pub fn scenario(&self, method: Method) -> ScenarioConfig {
        let m = &self.method;
        ScenarioConfig {
            method,
            params: m.designs.iter().map(|d| VastParams::new(d.v, d.mu)).collect(),
            j_len: m.j,
            segment_length: m.segment_length,
            overlap: m.overlap,
            weighting: m.weighting,
            weighting_taps: m.weighting_taps,
            keep_segment_filters: false,
        }
    }

    pub fn output_dir(&self) -> &Path {
        &self.output.dir
    }
}
