use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::DiscreteLti;
use crate::error::{Error, Result};
use crate::linalg;

/// Norm-bounded structured uncertainty `(dA, dB) = gamma E Delta(k) (H_A, H_B)`
/// with `Delta(k)^T Delta(k) <= I`.
///
/// `gamma_tilde` and `e_tilde` describe the averaged uncertainty seen over an
/// output-delay window; they default to `gamma` and `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyModel {
    pub gamma: f64,
    pub e: DMatrix<f64>,
    pub h_a: DMatrix<f64>,
    pub h_b: DMatrix<f64>,
    pub gamma_tilde: f64,
    pub e_tilde: DMatrix<f64>,
}

impl UncertaintyModel {
    pub fn new(gamma: f64, e: DMatrix<f64>, h_a: DMatrix<f64>, h_b: DMatrix<f64>) -> Result<Self> {
        let e_tilde = e.clone();
        Self::with_averaged(gamma, e, h_a, h_b, gamma, e_tilde)
    }

    pub fn with_averaged(
        gamma: f64,
        e: DMatrix<f64>,
        h_a: DMatrix<f64>,
        h_b: DMatrix<f64>,
        gamma_tilde: f64,
        e_tilde: DMatrix<f64>,
    ) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) || !(gamma_tilde.is_finite() && gamma_tilde >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "uncertainty gains must be non-negative, got gamma={gamma}, gamma_tilde={gamma_tilde}"
            )));
        }
        if h_a.nrows() != h_b.nrows() || e.ncols() == 0 || e_tilde.nrows() != e.nrows() {
            return Err(Error::Dimension(format!(
                "uncertainty: E {}x{}, H_A {}x{}, H_B {}x{}, E~ {}x{}",
                e.nrows(),
                e.ncols(),
                h_a.nrows(),
                h_a.ncols(),
                h_b.nrows(),
                h_b.ncols(),
                e_tilde.nrows(),
                e_tilde.ncols()
            )));
        }
        Ok(Self {
            gamma,
            e,
            h_a,
            h_b,
            gamma_tilde,
            e_tilde,
        })
    }

    /// `E = I`, `H_A = I`, `H_B = 0`.
    pub fn structured_identity(gamma: f64, n: usize, m: usize) -> Self {
        Self::new(
            gamma,
            DMatrix::identity(n, n),
            DMatrix::identity(n, n),
            DMatrix::zeros(n, m),
        )
        .expect("identity structure is well formed")
    }

    pub fn nominal(n: usize, m: usize) -> Self {
        Self::structured_identity(0.0, n, m)
    }

    pub fn check_against(&self, model: &DiscreteLti) -> Result<()> {
        if self.e.nrows() != model.n() || self.h_a.ncols() != model.n() || self.h_b.ncols() != model.m() {
            return Err(Error::Dimension(format!(
                "uncertainty structure does not fit an n={}, m={} plant",
                model.n(),
                model.m()
            )));
        }
        Ok(())
    }

    /// Rows of `Delta(k)` (columns of `E`).
    pub fn delta_rows(&self) -> usize {
        self.e.ncols()
    }

    /// Columns of `Delta(k)` (rows of `H_A`).
    pub fn delta_cols(&self) -> usize {
        self.h_a.nrows()
    }

    /// `(gamma E Delta H_A, gamma E Delta H_B)` for a given `Delta`.
    pub fn perturbation(&self, delta: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let left = &self.e * delta * self.gamma;
        (&left * &self.h_a, &left * &self.h_b)
    }

    /// Draws `Delta(k)`: a Gaussian matrix scaled to unit spectral norm, then
    /// by a uniform magnitude in `[0, 1]`.
    pub fn sample_delta<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let (r, q) = (self.delta_rows(), self.delta_cols());
        let raw = DMatrix::from_fn(r, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let scale: f64 = rng.random::<f64>();
        let norm = linalg::spectral_norm(&raw);
        if norm == 0.0 {
            return DMatrix::zeros(r, q);
        }
        raw * (scale / norm)
    }
}

/// Samples `(dA(k), dB(k))`. Draws are i.i.d. across steps, so `k` only
/// labels the call.
pub fn sample_uncertainty<R: Rng + ?Sized>(
    unc: &UncertaintyModel,
    _k: i64,
    rng: &mut R,
) -> (DMatrix<f64>, DMatrix<f64>) {
    if unc.gamma == 0.0 {
        return (
            DMatrix::zeros(unc.e.nrows(), unc.h_a.ncols()),
            DMatrix::zeros(unc.e.nrows(), unc.h_b.ncols()),
        );
    }
    let delta = unc.sample_delta(rng);
    unc.perturbation(&delta)
}

/// `(A + dA) x + (B + dB) u + P_r rho` for a given perturbation.
pub fn step_with_perturbation(
    model: &DiscreteLti,
    x: &DVector<f64>,
    u: &DVector<f64>,
    rho: f64,
    perturbation: &(DMatrix<f64>, DMatrix<f64>),
) -> DVector<f64> {
    let (da, db) = perturbation;
    model.step(x, u, rho) + da * x + db * u
}

/// One step of the uncertain linear plant. The caller supplies the already
/// delayed input `u(k - d_k^I)`.
pub fn step_linear_truth<R: Rng + ?Sized>(
    model: &DiscreteLti,
    x: &DVector<f64>,
    u: &DVector<f64>,
    rho: f64,
    unc: &UncertaintyModel,
    k: i64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if x.len() != model.n() || u.len() != model.m() {
        return Err(Error::Dimension(format!(
            "step: x has {} entries (n={}), u has {} (m={})",
            x.len(),
            model.n(),
            u.len(),
            model.m()
        )));
    }
    let pert = sample_uncertainty(unc, k, rng);
    Ok(step_with_perturbation(model, x, u, rho, &pert))
}
