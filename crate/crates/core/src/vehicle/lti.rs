use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Continuous plant `x' = A_c x + B_c u + P_rc rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLti {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Feed-forward (curvature) input column, n x 1.
    pub p_r: DMatrix<f64>,
}

impl ContinuousLti {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, p_r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || p_r.nrows() != n || p_r.ncols() != 1 {
            return Err(Error::Dimension(format!(
                "continuous model: A {}x{}, B {}x{}, P_r {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                p_r.nrows(),
                p_r.ncols()
            )));
        }
        Ok(Self { a, b, p_r })
    }
}

/// Sampled plant `x(k+1) = A x(k) + B u(k) + P_r rho(k)`, `y = C x`.
///
/// Construction checks that `A` is invertible (the predictor uses negative
/// powers of `A`), that `(A, B)` is controllable and `(A, C)` observable.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLti {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    p_r: DMatrix<f64>,
    t_c: f64,
}

impl DiscreteLti {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, p_r: DMatrix<f64>, t_c: f64) -> Result<Self> {
        if !(t_c.is_finite() && t_c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample time must be positive, got {t_c}"
            )));
        }
        let n = a.nrows();
        if !a.is_square()
            || n == 0
            || b.nrows() != n
            || b.ncols() == 0
            || c.ncols() != n
            || c.nrows() == 0
            || p_r.nrows() != n
            || p_r.ncols() != 1
        {
            return Err(Error::Dimension(format!(
                "discrete model: A {}x{}, B {}x{}, C {}x{}, P_r {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                p_r.nrows(),
                p_r.ncols()
            )));
        }
        linalg::inverse(&a).map_err(|_| {
            Error::Singular("discrete state matrix A is not invertible; the predictor needs A^-1".into())
        })?;
        if !linalg::is_controllable(&a, &b) {
            return Err(Error::InvalidParameter("(A, B) is not controllable".into()));
        }
        if !linalg::is_observable(&a, &c) {
            return Err(Error::InvalidParameter("(A, C) is not observable".into()));
        }
        Ok(Self { a, b, c, p_r, t_c })
    }

    /// Convenience constructor with `C = I` and no feed-forward input.
    pub fn state_feedback(a: DMatrix<f64>, b: DMatrix<f64>, t_c: f64) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, b, DMatrix::identity(n, n), DMatrix::zeros(n, 1), t_c)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn p_r(&self) -> &DMatrix<f64> {
        &self.p_r
    }
    pub fn t_c(&self) -> f64 {
        self.t_c
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Nominal one-step map `A x + B u + P_r rho`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, rho: f64) -> DVector<f64> {
        &self.a * x + &self.b * u + self.p_r.column(0) * rho
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }
}

/// Zero-order-hold discretization through the exponential of the augmented
/// matrix `[[A_c, B_c, P_rc], [0, 0, 0]] * T_c`.
pub fn discretize_zoh(cont: &ContinuousLti, c: &DMatrix<f64>, t_c: f64) -> Result<DiscreteLti> {
    if !(t_c.is_finite() && t_c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample time must be positive, got {t_c}"
        )));
    }
    let n = cont.a.nrows();
    let m = cont.b.ncols();
    let size = n + m + 1;
    let mut aug = DMatrix::<f64>::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(&cont.a);
    aug.view_mut((0, n), (n, m)).copy_from(&cont.b);
    aug.view_mut((0, n + m), (n, 1)).copy_from(&cont.p_r);
    let phi = linalg::expm(&(aug * t_c))?;
    let a = phi.view((0, 0), (n, n)).into_owned();
    let b = phi.view((0, n), (n, m)).into_owned();
    let p_r = phi.view((0, n + m), (n, 1)).into_owned();
    DiscreteLti::new(a, b, c.clone(), p_r, t_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{build_lateral_continuous, LateralParams};
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_dynamics_integrate() {
        let c = ContinuousLti::new(scalar(0.0), scalar(1.0), scalar(0.0)).unwrap();
        let d = discretize_zoh(&c, &scalar(1.0), 0.05).unwrap();
        assert_eq!(d.a()[(0, 0)], 1.0);
        assert_relative_eq!(d.b()[(0, 0)], 0.05, max_relative = 1e-15);
    }

    #[test]
    fn scalar_closed_form() {
        for (a, b, t) in [(-2.0, 3.0, 0.05), (0.7, -1.5, 0.2), (-40.0, 0.5, 0.01)] {
            let c = ContinuousLti::new(scalar(a), scalar(b), scalar(0.0)).unwrap();
            let d = discretize_zoh(&c, &scalar(1.0), t).unwrap();
            let ea: f64 = f64::exp(a * t);
            assert_relative_eq!(d.a()[(0, 0)], ea, max_relative = 1e-13);
            assert_relative_eq!(d.b()[(0, 0)], b * (ea - 1.0) / a, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_sample_time() {
        let c = ContinuousLti::new(scalar(-1.0), scalar(1.0), scalar(0.0)).unwrap();
        assert!(discretize_zoh(&c, &scalar(1.0), 0.0).is_err());
        assert!(discretize_zoh(&c, &scalar(1.0), -0.1).is_err());
    }

    #[test]
    fn lateral_plant_is_well_formed() {
        let c = build_lateral_continuous(&LateralParams::simulation_vehicle()).unwrap();
        let d = discretize_zoh(&c, &DMatrix::identity(4, 4), 0.05).unwrap();
        assert_eq!((d.n(), d.m(), d.p()), (4, 1, 4));
        // Heading and lateral offset integrate: two unit eigenvalues.
        assert_relative_eq!(linalg::spectral_radius(d.a()), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn uncontrollable_pair_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(DiscreteLti::state_feedback(a, b, 0.1).is_err());
    }
}
