use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ContinuousLti;
use crate::error::{Error, Result};

/// Linear single-track parameters. State ordering is `[beta, r, psi_L, y_L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateralParams {
    /// Front axle cornering stiffness (N/rad).
    pub c_f: f64,
    /// Rear axle cornering stiffness (N/rad).
    pub c_r: f64,
    /// CG to front axle (m).
    pub l_f: f64,
    /// CG to rear axle (m).
    pub l_r: f64,
    /// Preview distance (m).
    pub l_s: f64,
    /// Mass (kg).
    pub m: f64,
    /// Yaw inertia (kg m^2).
    pub i_z: f64,
    /// Longitudinal speed (m/s).
    pub v: f64,
}

impl LateralParams {
    /// A-class hatchback used in the desk simulation.
    pub const fn simulation_vehicle() -> Self {
        Self {
            c_f: 35696.0,
            c_r: 32299.0,
            l_f: 1.1,
            l_r: 1.25,
            l_s: 2.5,
            m: 850.8,
            i_z: 750.0,
            v: 5.0,
        }
    }

    /// SUV used in the field test.
    pub const fn field_test_vehicle() -> Self {
        Self {
            c_f: 121100.0,
            c_r: 199831.0,
            l_f: 1.17,
            l_r: 1.48,
            l_s: 3.0,
            m: 1570.0,
            i_z: 2700.0,
            v: 3.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("c_f", self.c_f),
            ("c_r", self.c_r),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("l_s", self.l_s),
            ("m", self.m),
            ("i_z", self.i_z),
            ("v", self.v),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Continuous-time lateral error dynamics `x' = A_c x + B_c delta + P_rc rho`.
pub fn build_lateral_continuous(p: &LateralParams) -> Result<ContinuousLti> {
    p.validate()?;
    let LateralParams {
        c_f,
        c_r,
        l_f,
        l_r,
        l_s,
        m,
        i_z,
        v,
    } = *p;
    let cross = c_r * l_r - c_f * l_f;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        -(c_f + c_r) / (m * v), -1.0 + cross / (m * v * v), 0.0, 0.0,
        cross / i_z, -(c_f * l_f * l_f + c_r * l_r * l_r) / (v * i_z), 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        v, l_s, v, 0.0,
    ]);
    let b = DMatrix::from_column_slice(4, 1, &[c_f / (m * v), c_f * l_f / i_z, 0.0, 0.0]);
    let p_r = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, -v, -v * l_s]);
    ContinuousLti::new(a, b, p_r)
}

/// Three-state variant with the slip angle dropped (`beta = 0`), state
/// `[r, psi_L, y_L]`.
pub fn build_lateral_reduced(p: &LateralParams) -> Result<ContinuousLti> {
    let full = build_lateral_continuous(p)?;
    let keep = [1, 2, 3];
    let a = full.a.select_rows(&keep).select_columns(&keep);
    let b = full.b.select_rows(&keep);
    let p_r = full.p_r.select_rows(&keep);
    ContinuousLti::new(a, b, p_r)
}
