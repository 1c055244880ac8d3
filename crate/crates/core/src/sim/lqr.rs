use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

const MAX_ITER: usize = 100_000;
const TOL: f64 = 1e-12;

/// Discrete LQR gain by fixed-point iteration of the Riccati equation.
///
/// Returns `K` for the law `u = K x` (the negative of the usual
/// `(R + B'PB)^-1 B'PA`).
pub fn dlqr(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "dlqr: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for _ in 0..MAX_ITER {
        let s = r + &bt * &p * b;
        let s_inv = linalg::inverse(&s).map_err(|_| Error::Singular("R + B'PB is singular".into()))?;
        let next = q + &at * &p * a - &at * &p * b * &s_inv * &bt * &p * a;
        let next = (&next + next.transpose()) * 0.5;
        let diff = linalg::max_abs(&(&next - &p));
        p = next;
        if !diff.is_finite() {
            break;
        }
        if diff <= TOL * linalg::max_abs(&p).max(1.0) {
            let s = r + &bt * &p * b;
            let gain = linalg::inverse(&s)? * &bt * &p * a;
            return Ok(-gain);
        }
    }
    Err(Error::RiccatiNonConvergence(MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_dynamics_need_no_feedback() {
        assert_eq!(dlqr(&s(0.0), &s(1.0), &s(1.0), &s(1.0)).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn scalar_golden_ratio() {
        // P = 1 + P - P^2 / (1 + P)  =>  P^2 - P - 1 = 0.
        let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
        let k = dlqr(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert_relative_eq!(k[(0, 0)], -phi / (1.0 + phi), max_relative = 1e-10);
    }

    #[test]
    fn shape_mismatch() {
        assert!(dlqr(&s(1.0), &DMatrix::zeros(2, 1), &s(1.0), &s(1.0)).is_err());
    }
}
