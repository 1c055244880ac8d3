use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lane-change geometry: a quintic lateral shift over `length_m` of travel,
/// starting `start_m` after the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneChange {
    pub shift_m: f64,
    pub length_m: f64,
    #[serde(default = "LaneChange::default_start")]
    pub start_m: f64,
}

impl LaneChange {
    fn default_start() -> f64 {
        5.0
    }

    fn sigma(&self, s: f64) -> f64 {
        ((s - self.start_m) / self.length_m).clamp(0.0, 1.0)
    }

    /// Lateral position of the path at arc length `s`.
    pub fn lateral(&self, s: f64) -> f64 {
        let x = self.sigma(s);
        self.shift_m * x.powi(3) * (10.0 - 15.0 * x + 6.0 * x * x)
    }

    /// Path heading `atan(dY/ds)`.
    pub fn heading(&self, s: f64) -> f64 {
        let x = self.sigma(s);
        let slope = self.shift_m / self.length_m * 30.0 * x * x * (1.0 - x) * (1.0 - x);
        slope.atan()
    }
}

impl Default for LaneChange {
    fn default() -> Self {
        Self {
            shift_m: 3.5,
            length_m: 40.0,
            start_m: Self::default_start(),
        }
    }
}

/// Per-step road curvature plus the reference path for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub rho: Vec<f64>,
    pub heading: Vec<f64>,
    pub lateral: Vec<f64>,
}

impl ReferenceTrajectory {
    pub fn straight(horizon: usize) -> Self {
        Self {
            rho: vec![0.0; horizon],
            heading: vec![0.0; horizon],
            lateral: vec![0.0; horizon],
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// Curvature at step `k`, zero past the end.
    pub fn rho_at(&self, k: usize) -> f64 {
        self.rho.get(k).copied().unwrap_or(0.0)
    }
}

/// Samples a lane change at speed `v` and period `t_c`. `rho(k)` is the
/// exact mean curvature over step `k`, i.e. the heading change across the
/// step divided by the distance travelled, so the summed heading change
/// telescopes to zero.
pub fn gen_lane_change(shape: &LaneChange, v: f64, t_c: f64, horizon: usize) -> Result<ReferenceTrajectory> {
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !(positive(shape.shift_m) && positive(shape.length_m) && positive(v) && positive(t_c)) {
        return Err(Error::InvalidParameter(format!(
            "lane change needs positive shift, length, speed and period (got {}, {}, {v}, {t_c})",
            shape.shift_m, shape.length_m
        )));
    }
    if !(shape.start_m.is_finite() && shape.start_m >= 0.0) {
        return Err(Error::InvalidParameter("lane change start must be non-negative".into()));
    }
    let ds = v * t_c;
    let s = |k: usize| k as f64 * ds;
    Ok(ReferenceTrajectory {
        rho: (0..horizon)
            .map(|k| (shape.heading(s(k + 1)) - shape.heading(s(k))) / ds)
            .collect(),
        heading: (0..horizon).map(|k| shape.heading(s(k))).collect(),
        lateral: (0..horizon).map(|k| shape.lateral(s(k))).collect(),
    })
}
