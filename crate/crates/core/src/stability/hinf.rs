use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 1024;

/// Coefficients of a matrix polynomial in `z^-1`: `(f, M_f)` stands for
/// `M_f z^-f`.
pub type PolyTerms = Vec<(usize, DMatrix<f64>)>;

/// H-infinity norm of `sum_f M_f z^-f`, taken as the largest singular value
/// over `grid` equally spaced points on the unit circle (starting at
/// `theta = 0`). An empty polynomial has norm 0.
pub fn hinf_norm_poly(coeffs: &[(usize, DMatrix<f64>)], grid: usize) -> Result<f64> {
    if coeffs.is_empty() {
        return Ok(0.0);
    }
    if grid == 0 {
        return Err(Error::InvalidParameter(
            "H-infinity grid needs at least one point".into(),
        ));
    }
    let shape = coeffs[0].1.shape();
    let mut merged: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
    for (f, m) in coeffs {
        if m.shape() != shape {
            return Err(Error::Dimension(format!(
                "polynomial coefficients disagree in shape: {:?} vs {:?}",
                shape,
                m.shape()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite polynomial coefficient".into()));
        }
        *merged.entry(*f).or_insert_with(|| DMatrix::zeros(shape.0, shape.1)) += m;
    }
    let terms: Vec<(usize, DMatrix<Complex64>)> = merged
        .into_iter()
        .map(|(f, m)| (f, m.map(|v| Complex64::new(v, 0.0))))
        .collect();

    let mut best = 0.0_f64;
    for j in 0..grid {
        let theta = 2.0 * PI * j as f64 / grid as f64;
        let mut acc = DMatrix::<Complex64>::zeros(shape.0, shape.1);
        for (f, m) in &terms {
            let phase = Complex64::from_polar(1.0, -theta * *f as f64);
            acc += m * phase;
        }
        let sigma = if shape.0 == 1 && shape.1 == 1 {
            acc[(0, 0)].norm()
        } else {
            acc.singular_values().max()
        };
        best = best.max(sigma);
    }
    Ok(best)
}

/// `sum_{f=lo}^{hi} M z^-f` as a term list (empty when `lo > hi`).
pub fn run_of_terms(m: &DMatrix<f64>, lo: i64, hi: i64) -> PolyTerms {
    (lo.max(0)..=hi).map(|f| (f as usize, m.clone())).collect()
}
