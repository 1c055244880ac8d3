//! Dense linear-algebra helpers shared by the model, predictor and stability code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// Matrix exponential by scaling and squaring with a degree-6 Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expm needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let norm = inf_norm(a);
    if !norm.is_finite() {
        return Err(Error::ExpmNonConvergence(norm));
    }
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    if squarings > 1000 {
        return Err(Error::ExpmNonConvergence(norm));
    }
    let scaled = a / 2f64.powi(squarings);

    let mut numer = DMatrix::<f64>::identity(n, n);
    let mut denom = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for (k, c) in PADE6.iter().enumerate().skip(1) {
        term = &term * &scaled;
        numer += &term * *c;
        if k % 2 == 0 {
            denom += &term * *c;
        } else {
            denom -= &term * *c;
        }
    }
    let mut out = denom.lu().solve(&numer).ok_or(Error::ExpmNonConvergence(norm))?;
    for _ in 0..squarings {
        out = &out * &out;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::ExpmNonConvergence(norm));
    }
    Ok(out)
}

/// Integer matrix power by repeated squaring. Negative exponents invert first.
pub fn matrix_power(a: &DMatrix<f64>, j: i64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "matrix power needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let base = if j < 0 { inverse(a)? } else { a.clone() };
    let mut exp = j.unsigned_abs();
    let mut acc = DMatrix::<f64>::identity(a.nrows(), a.nrows());
    let mut sq = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = &acc * &sq;
        }
        exp >>= 1;
        if exp > 0 {
            sq = &sq * &sq;
        }
    }
    Ok(acc)
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{}x{} matrix is not invertible", a.nrows(), a.ncols())))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("inverse has non-finite entries".into()));
    }
    Ok(inv)
}

pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Numerical rank with a tolerance relative to the largest singular value.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let tol = sv.max() * 1e-12 * (a.nrows().max(a.ncols()) as f64);
    sv.iter().filter(|s| **s > tol).count()
}

pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for i in 0..n {
        out.view_mut((0, i * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    out
}

pub fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    rank(&controllability_matrix(a, b)) == a.nrows()
}

pub fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    rank(&controllability_matrix(&a.transpose(), &c.transpose())) == a.nrows()
}

pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Singular(e.to_string()))
}

/// Builds a matrix from row vectors, checking that all rows have equal length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn vec_max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
