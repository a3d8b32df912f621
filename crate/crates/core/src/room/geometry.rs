use std::f64::consts::PI;
use std::ops::Range;

use super::Point3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Zone {
    Alpha,
    Beta,
}

impl Zone {
    pub fn other(self) -> Zone {
        match self {
            Zone::Alpha => Zone::Beta,
            Zone::Beta => Zone::Alpha,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Zone::Alpha => "alpha",
            Zone::Beta => "beta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointKind {
    /// Used to design the control filters.
    Control,
    /// Used only for evaluation.
    Monitor,
}

/// Loudspeakers, per-zone control and monitor points, and the virtual source.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub loudspeakers: Vec<Point3>,
    pub control_alpha: Vec<Point3>,
    pub control_beta: Vec<Point3>,
    pub monitor_alpha: Vec<Point3>,
    pub monitor_beta: Vec<Point3>,
    pub virtual_source: Point3,
}

impl SceneGeometry {
    /// All receivers in the order used by [`super::RirSet`]: control alpha,
    /// control beta, monitor alpha, monitor beta.
    pub fn receivers(&self) -> Vec<Point3> {
        let mut out = Vec::with_capacity(self.receiver_count());
        out.extend_from_slice(&self.control_alpha);
        out.extend_from_slice(&self.control_beta);
        out.extend_from_slice(&self.monitor_alpha);
        out.extend_from_slice(&self.monitor_beta);
        out
    }

    pub fn receiver_count(&self) -> usize {
        self.control_alpha.len() + self.control_beta.len() + self.monitor_alpha.len() + self.monitor_beta.len()
    }

    /// Receiver indices of one zone's control or monitor points.
    pub fn indices(&self, zone: Zone, kind: PointKind) -> Range<usize> {
        let ca = self.control_alpha.len();
        let cb = self.control_beta.len();
        let ma = self.monitor_alpha.len();
        let mb = self.monitor_beta.len();
        match (kind, zone) {
            (PointKind::Control, Zone::Alpha) => 0..ca,
            (PointKind::Control, Zone::Beta) => ca..ca + cb,
            (PointKind::Monitor, Zone::Alpha) => ca + cb..ca + cb + ma,
            (PointKind::Monitor, Zone::Beta) => ca + cb + ma..ca + cb + ma + mb,
        }
    }

    /// Zone that receiver `m` belongs to.
    pub fn zone_of(&self, m: usize) -> Zone {
        for kind in [PointKind::Control, PointKind::Monitor] {
            for zone in [Zone::Alpha, Zone::Beta] {
                if self.indices(zone, kind).contains(&m) {
                    return zone;
                }
            }
        }
        panic!("receiver index {m} out of range");
    }

    /// Requires at least one loudspeaker and one control point per zone.
    pub fn validate(&self) -> Result<()> {
        if self.control_alpha.is_empty() || self.control_beta.is_empty() {
            return Err(Error::InvalidArgument("each zone needs at least one control point".into()));
        }
        self.validate_positions()
    }

    /// Finite positions, at least one loudspeaker and one receiver.
    pub fn validate_positions(&self) -> Result<()> {
        if self.loudspeakers.is_empty() || self.receiver_count() == 0 {
            return Err(Error::InvalidArgument("scene needs a loudspeaker and a receiver".into()));
        }
        let finite = |p: &Point3| p.iter().all(|v| v.is_finite());
        if !self.receivers().iter().chain(&self.loudspeakers).all(finite) || !finite(&self.virtual_source) {
            return Err(Error::InvalidArgument("positions must be finite".into()));
        }
        Ok(())
    }
}

/// Planar two-zone layout: a circular loudspeaker array with two square
/// control grids placed symmetrically about the array centre, monitor points
/// in between the control points, and a virtual source just outside the array.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularLayout {
    pub center: Point3,
    pub loudspeakers: usize,
    pub radius: f64,
    /// Distance between the two zone centres.
    pub zone_distance: f64,
    pub grid_spacing: f64,
    /// Control grid is `control_grid x control_grid` points.
    pub control_grid: usize,
    pub monitor_grid: usize,
    /// 0-based loudspeaker the virtual source sits behind.
    pub virtual_speaker: usize,
    /// Radial distance of the virtual source beyond that loudspeaker.
    pub virtual_offset: f64,
}

impl Default for CircularLayout {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0, 1.5],
            loudspeakers: 8,
            radius: 2.0,
            zone_distance: 2.0,
            grid_spacing: 0.05,
            control_grid: 5,
            monitor_grid: 4,
            virtual_speaker: 6,
            virtual_offset: 0.5,
        }
    }
}

impl CircularLayout {
    pub fn build(&self) -> Result<SceneGeometry> {
        if self.loudspeakers == 0 || self.control_grid == 0 {
            return Err(Error::InvalidArgument("layout needs loudspeakers and control points".into()));
        }
        if self.virtual_speaker >= self.loudspeakers {
            return Err(Error::InvalidArgument(format!(
                "virtual source loudspeaker {} out of range",
                self.virtual_speaker
            )));
        }
        let [cx, cy, cz] = self.center;
        let angle = |l: usize| 2.0 * PI * l as f64 / self.loudspeakers as f64;
        let on_circle = |r: f64, a: f64| [cx + r * a.cos(), cy + r * a.sin(), cz];
        let loudspeakers = (0..self.loudspeakers).map(|l| on_circle(self.radius, angle(l))).collect();
        let virtual_source = on_circle(self.radius + self.virtual_offset, angle(self.virtual_speaker));

        // Zone alpha on the negative x side, beta mirrored on the positive side.
        let grid = |x0: f64, n: usize| -> Vec<Point3> {
            let half = (n as f64 - 1.0) / 2.0;
            let mut pts = Vec::with_capacity(n * n);
            for iy in 0..n {
                for ix in 0..n {
                    let x = x0 + (ix as f64 - half) * self.grid_spacing;
                    let y = cy + (iy as f64 - half) * self.grid_spacing;
                    pts.push([x, y, cz]);
                }
            }
            pts
        };
        // Mirror alpha's grid to guarantee bit-exact symmetry about x = cx.
        let mirror = |pts: &[Point3]| -> Vec<Point3> {
            pts.iter().map(|p| [2.0 * cx - p[0], p[1], p[2]]).collect()
        };
        let xa = cx - self.zone_distance / 2.0;
        let control_alpha = grid(xa, self.control_grid);
        let monitor_alpha = grid(xa, self.monitor_grid);
        Ok(SceneGeometry {
            loudspeakers,
            control_beta: mirror(&control_alpha),
            monitor_beta: mirror(&monitor_alpha),
            control_alpha,
            monitor_alpha,
            virtual_source,
        })
    }
}
