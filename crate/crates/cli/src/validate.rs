//! Config checks shared by `validate` and `run`.

use std::fmt;

use vastzones::pipeline::Method;
use vastzones::room::{check_inside, PointKind, SceneGeometry, Zone};
use vastzones::stats::rank_condition;
use vastzones::vast::VastParams;

use crate::config::LoadedConfig;
use crate::signals::load_programs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Ok,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub level: Level,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub findings: Vec<Finding>,
}

impl Report {
    fn push(&mut self, level: Level, message: impl Into<String>) {
        self.findings.push(Finding { level, message: message.into() });
    }

    fn check<T, E: fmt::Display>(&mut self, what: &str, r: Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => {
                self.push(Level::Ok, what);
                Some(v)
            }
            Err(e) => {
                self.push(Level::Error, format!("{what}: {e}"));
                None
            }
        }
    }

    pub fn errors(&self) -> usize {
        self.findings.iter().filter(|f| f.level == Level::Error).count()
    }

    pub fn warnings(&self) -> usize {
        self.findings.iter().filter(|f| f.level == Level::Warning).count()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for x in &self.findings {
            let tag = match x.level {
                Level::Ok => "ok",
                Level::Warning => "warning",
                Level::Error => "error",
            };
            writeln!(f, "{tag}: {}", x.message)?;
        }
        write!(f, "{} error(s), {} warning(s)", self.errors(), self.warnings())
    }
}

fn check_params(report: &mut Report, what: &str, params: impl IntoIterator<Item = VastParams>, lj: usize) {
    let mut bad = Vec::new();
    for p in params {
        if let Err(e) = p.validate(lj) {
            bad.push(e.to_string());
        }
    }
    if bad.is_empty() {
        report.push(Level::Ok, format!("{what} within V in [1, {lj}], mu >= 0"));
    } else {
        report.push(Level::Error, format!("{what}: {}", bad.join("; ")));
    }
}

fn check_rank(report: &mut Report, scene: &SceneGeometry, method: Method, n_obs: usize, k: usize, l: usize, j: usize) {
    let m_d = scene.indices(Zone::Beta, PointKind::Control).len();
    let diag = rank_condition(None, m_d, n_obs, k, l, j);
    let msg = format!(
        "{}: rank condition M_D min(N, K + J - 1) = {} {} LJ = {}",
        method.name(),
        diag.available,
        if diag.satisfied { ">=" } else { "<" },
        diag.required
    );
    report.push(if diag.satisfied { Level::Ok } else { Level::Warning }, msg);
}

pub fn validate(cfg: &LoadedConfig) -> Report {
    let mut r = Report::default();
    let c = &cfg.config;
    let room = r.check("room", c.room_spec().and_then(|room| Ok(room.validate().map(|_| room)?)));
    if c.room.rir_taps == 0 {
        r.push(Level::Error, "room.rir_taps must be >= 1");
    }
    if room.as_ref().is_some_and(|room| room.dimensions.is_some() && room.t60 == 0.0) {
        r.push(Level::Warning, "room.t60 = 0: rendering anechoic responses inside the bounded room");
    }
    let scene = r.check("scene layout", c.scene());
    if let (Some(room), Some(scene)) = (&room, &scene) {
        r.check("positions inside the room", check_inside(room, scene));
    }
    let methods = r.check("method.methods", c.methods());
    let programs = r.check("signals", load_programs(cfg));

    let Some(scene) = scene else { return r };
    let l = scene.loudspeakers.len();
    let j = c.method.j;
    if j == 0 {
        r.push(Level::Error, "method.j must be >= 1");
        return r;
    }
    let lj = l * j;
    if let Some(methods) = &methods {
        if methods.iter().any(|&m| m != Method::NoControl) {
            if c.method.designs.is_empty() {
                r.push(Level::Error, "method.designs is empty");
            }
            check_params(&mut r, "method.designs", c.method.designs.iter().map(|d| VastParams::new(d.v, d.mu)), lj);
        }
        for &m in methods {
            // Designs were checked above; this covers segmentation and weighting.
            let mut scenario = c.scenario(m);
            scenario.params = vec![VastParams::new(1, 0.0)];
            if let Err(e) = scenario.validate(l) {
                r.push(Level::Error, format!("{}: {e}", m.name()));
            }
        }
        if let Some(programs) = &programs {
            for &m in methods.iter().filter(|&&m| m != Method::NoControl) {
                let n_obs = if m == Method::ApVast { c.method.segment_length } else { programs.len() };
                check_rank(&mut r, &scene, m, n_obs, c.room.rir_taps, l, j);
            }
        }
    }
    if let Some(sweep) = &c.sweep {
        match sweep.method.as_str() {
            "vast" | "p_vast" => r.push(Level::Ok, format!("sweep.method = {}", sweep.method)),
            other => r.push(Level::Error, format!("sweep.method must be vast or p_vast, got {other:?}")),
        }
        if sweep.v_grid.as_ref().is_some_and(Vec::is_empty) || sweep.mu_grid.as_ref().is_some_and(Vec::is_empty) {
            r.push(Level::Error, "sweep grids must be nonempty");
        }
        let v_grid = sweep.v_grid.clone().unwrap_or_else(|| vec![1]);
        let mu_grid = sweep.mu_grid.clone().unwrap_or_else(|| vec![0.0]);
        let cells = v_grid.iter().flat_map(|&v| mu_grid.iter().map(move |&mu| VastParams::new(v, mu)));
        check_params(&mut r, "sweep grid", cells, lj);
    }
    r
}
