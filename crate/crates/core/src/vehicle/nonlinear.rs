use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::LateralParams;
use crate::error::{Error, Result};

/// Single-track truth model with arctangent tire saturation.
///
/// Axle force is `c * alpha_sat * atan(alpha / alpha_sat)`, which tends to the
/// linear law `c * alpha` as `alpha_sat` grows. Kinematic rows are the same as
/// the linear model, so the saturation is the only structural nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearTruthParams {
    pub lateral: LateralParams,
    /// Slip angle scale of the tire saturation (rad).
    pub alpha_sat: f64,
    /// RK4 sub-steps per control period.
    pub substeps: usize,
}

impl NonlinearTruthParams {
    pub const DEFAULT_ALPHA_SAT: f64 = 0.08;
    pub const DEFAULT_SUBSTEPS: usize = 32;

    pub fn new(lateral: LateralParams, alpha_sat: f64) -> Result<Self> {
        let p = Self {
            lateral,
            alpha_sat,
            substeps: Self::DEFAULT_SUBSTEPS,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.lateral.validate()?;
        if !(self.alpha_sat.is_finite() && self.alpha_sat > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tire saturation must be positive, got {}",
                self.alpha_sat
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("RK4 needs at least one sub-step".into()));
        }
        Ok(())
    }

    fn tire_force(&self, stiffness: f64, slip: f64) -> f64 {
        stiffness * self.alpha_sat * (slip / self.alpha_sat).atan()
    }

    /// Continuous-time derivative for steering `delta` and curvature `rho`.
    pub fn derivative(&self, x: &[f64; 4], delta: f64, rho: f64) -> [f64; 4] {
        let LateralParams {
            c_f,
            c_r,
            l_f,
            l_r,
            l_s,
            m,
            i_z,
            v,
        } = self.lateral;
        let [beta, r, psi, _] = *x;
        let alpha_f = delta - beta - l_f * r / v;
        let alpha_r = -beta + l_r * r / v;
        let f_f = self.tire_force(c_f, alpha_f);
        let f_r = self.tire_force(c_r, alpha_r);
        [
            (f_f + f_r) / (m * v) - r,
            (l_f * f_f - l_r * f_r) / i_z,
            r - v * rho,
            v * beta + l_s * r + v * psi - v * l_s * rho,
        ]
    }
}

/// Advances the saturating single-track model by one control period `t_c`
/// with input and curvature held constant.
pub fn step_nonlinear_truth(
    x: &DVector<f64>,
    u: f64,
    rho: f64,
    p: &NonlinearTruthParams,
    t_c: f64,
) -> Result<DVector<f64>> {
    if x.len() != 4 {
        return Err(Error::Dimension(format!(
            "single-track state has 4 entries, got {}",
            x.len()
        )));
    }
    let h = t_c / p.substeps as f64;
    let mut s = [x[0], x[1], x[2], x[3]];
    let axpy = |s: &[f64; 4], k: &[f64; 4], a: f64| -> [f64; 4] {
        [s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2], s[3] + a * k[3]]
    };
    for _ in 0..p.substeps {
        let k1 = p.derivative(&s, u, rho);
        let k2 = p.derivative(&axpy(&s, &k1, h / 2.0), u, rho);
        let k3 = p.derivative(&axpy(&s, &k2, h / 2.0), u, rho);
        let k4 = p.derivative(&axpy(&s, &k3, h), u, rho);
        for i in 0..4 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(DVector::from_column_slice(&s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{build_lateral_continuous, discretize_zoh};
    use nalgebra::DMatrix;

    fn params(alpha_sat: f64) -> NonlinearTruthParams {
        NonlinearTruthParams::new(LateralParams::simulation_vehicle(), alpha_sat).unwrap()
    }

    #[test]
    fn equilibrium_at_origin() {
        let out = step_nonlinear_truth(&DVector::zeros(4), 0.0, 0.0, &params(0.08), 0.05).unwrap();
        assert_eq!(out, DVector::zeros(4));
    }

    #[test]
    fn small_signals_match_linear_zoh() {
        let p = params(1e6);
        let cont = build_lateral_continuous(&p.lateral).unwrap();
        let lin = discretize_zoh(&cont, &DMatrix::identity(4, 4), 0.05).unwrap();
        let x = DVector::from_column_slice(&[3e-5, -7e-5, 5e-5, 1e-4]);
        let u = 4e-5;
        let rho = -2e-5;
        let nl = step_nonlinear_truth(&x, u, rho, &p, 0.05).unwrap();
        let linear = lin.step(&x, &DVector::from_element(1, u), rho);
        let rel = (&nl - &linear).norm() / linear.norm();
        assert!(rel < 1e-6, "relative mismatch {rel}");
    }

    #[test]
    fn saturation_reduces_yaw_moment() {
        let p = params(0.02);
        let lin = params(1e9);
        let x = [0.0; 4];
        // Steering far beyond the saturation slip angle.
        let sat = p.derivative(&x, 0.3, 0.0)[1];
        let linear = lin.derivative(&x, 0.3, 0.0)[1];
        assert!(sat > 0.0 && sat.abs() < linear.abs());
    }

    #[test]
    fn rejects_bad_saturation() {
        assert!(NonlinearTruthParams::new(LateralParams::simulation_vehicle(), 0.0).is_err());
    }
}
