use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::interconnect::FeedbackForm;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

fn check_symmetric(p: &DMatrix<f64>) -> Result<()> {
    let scale = p.amax().max(1.0);
    if !p.is_square() || (p - p.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::InvalidParameter("P must be a symmetric matrix".into()));
    }
    Ok(())
}

/// The block matrix
/// `[[-b^2 P, 0, A'P, C'], [*, -I, B'P, D'], [*, *, -P, 0], [*, *, *, -I]]`.
pub fn assemble_mi(form: &FeedbackForm, p: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    check_symmetric(p)?;
    let (n, w, y) = (form.states(), form.inputs(), form.outputs());
    if p.nrows() != n {
        return Err(Error::Dimension(format!(
            "P is {}x{}, the system has {n} states",
            p.nrows(),
            p.ncols()
        )));
    }
    let size = 2 * n + w + y;
    let mut mi = DMatrix::zeros(size, size);
    let (o1, o2, o3) = (n, n + w, 2 * n + w);
    let pa = p * &form.a_bar;
    let pb = p * &form.b_bar;
    mi.view_mut((0, 0), (n, n)).copy_from(&(p * (-beta * beta)));
    mi.view_mut((0, o2), (n, n)).copy_from(&pa.transpose());
    mi.view_mut((0, o3), (n, y)).copy_from(&form.c_bar.transpose());
    mi.view_mut((o1, o1), (w, w))
        .copy_from(&(-DMatrix::<f64>::identity(w, w)));
    mi.view_mut((o1, o2), (w, n)).copy_from(&pb.transpose());
    mi.view_mut((o1, o3), (w, y)).copy_from(&form.d_bar.transpose());
    mi.view_mut((o2, 0), (n, n)).copy_from(&pa);
    mi.view_mut((o2, o1), (n, w)).copy_from(&pb);
    mi.view_mut((o2, o2), (n, n)).copy_from(&(-p));
    mi.view_mut((o3, 0), (y, n)).copy_from(&form.c_bar);
    mi.view_mut((o3, o1), (y, w)).copy_from(&form.d_bar);
    mi.view_mut((o3, o3), (y, y))
        .copy_from(&(-DMatrix::<f64>::identity(y, y)));
    debug_assert!((&mi - mi.transpose()).amax() <= SYMMETRY_TOL * mi.amax().max(1.0));
    Ok(mi)
}

fn top_eigenpair(m: DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(m);
    let idx = eig.eigenvalues.imax();
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).into_owned())
}

/// Largest eigenvalue of the matrix-inequality block matrix; negative means
/// `(P, beta)` certifies robust stability with decay rate `beta`.
pub fn check_mi(form: &FeedbackForm, p: &DMatrix<f64>, beta: f64) -> Result<f64> {
    let mi = assemble_mi(form, p, beta)?;
    Ok(top_eigenpair(mi).0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCertificate {
    pub p: Vec<Vec<f64>>,
    pub beta: f64,
    pub margin: f64,
    pub d_o_set: Vec<usize>,
    pub min_eig_p: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibilityReport {
    pub beta: f64,
    /// Best worst-case margin reached (non-negative).
    pub margin: f64,
    pub d_o_set: Vec<usize>,
    /// Output delay whose instance had the largest margin at the best `P`.
    pub worst_d_o: usize,
    /// Largest `||D||_2` over the instances; values `>= 1` rule out any `P`.
    pub feedthrough_norm: f64,
    pub iterations: usize,
    pub best_p: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SearchOutcome {
    Certified(StabilityCertificate),
    Infeasible(InfeasibilityReport),
}

impl SearchOutcome {
    pub fn is_certified(&self) -> bool {
        matches!(self, Self::Certified(_))
    }

    pub fn margin(&self) -> f64 {
        match self {
            Self::Certified(c) => c.margin,
            Self::Infeasible(r) => r.margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub max_iter: usize,
    /// Lower eigenvalue bound enforced on `P`.
    pub epsilon: f64,
    /// Stop early once the worst margin is at or below this value.
    pub target_margin: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            epsilon: 1e-6,
            target_margin: -1e-3,
        }
    }
}

fn project_psd(p: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let sym = (p + p.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    eig.eigenvalues.iter_mut().for_each(|v| *v = v.max(eps));
    let out = eig.recompose();
    (&out + out.transpose()) * 0.5
}

/// Worst margin over the set, its index, and a subgradient of the worst
/// instance's top eigenvalue with respect to `P`.
fn worst_case(forms: &[FeedbackForm], p: &DMatrix<f64>, beta: f64) -> Result<(f64, usize, DMatrix<f64>)> {
    let n = p.nrows();
    let mut worst: Option<(f64, usize, DVector<f64>)> = None;
    for (idx, form) in forms.iter().enumerate() {
        let (lam, v) = top_eigenpair(assemble_mi(form, p, beta)?);
        if worst.as_ref().is_none_or(|(w, _, _)| lam > *w) {
            worst = Some((lam, idx, v));
        }
    }
    let (lam, idx, v) = worst.expect("non-empty system set");
    let form = &forms[idx];
    let w = form.inputs();
    let v1 = v.rows(0, n).into_owned();
    let v2 = v.rows(n, w).into_owned();
    let v3 = v.rows(n + w, n).into_owned();
    let a = &form.a_bar * &v1 + &form.b_bar * &v2;
    let grad = &v1 * v1.transpose() * (-beta * beta) + &a * v3.transpose() + &v3 * a.transpose() - &v3 * v3.transpose();
    Ok((lam, idx, grad))
}

/// Projected subgradient descent on the worst-case largest eigenvalue over
/// all instances, seeking one `P` that satisfies every matrix inequality.
pub fn search_feasible_p(systems: &[(usize, FeedbackForm)], beta: f64, opts: SearchOptions) -> Result<SearchOutcome> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "decay rate must lie in (0, 1], got {beta}"
        )));
    }
    let Some((_, first)) = systems.first() else {
        return Err(Error::InvalidParameter("no systems to certify".into()));
    };
    let (n, w, y) = (first.states(), first.inputs(), first.outputs());
    if systems
        .iter()
        .any(|(_, f)| f.states() != n || f.inputs() != w || f.outputs() != y)
    {
        return Err(Error::Dimension("systems in the set disagree in dimensions".into()));
    }
    let forms: Vec<FeedbackForm> = systems.iter().map(|(_, f)| f.clone()).collect();
    let d_o_set: Vec<usize> = systems.iter().map(|(d, _)| *d).collect();

    let mut p = DMatrix::<f64>::identity(n, n);
    let (mut lam, mut idx, mut grad) = worst_case(&forms, &p, beta)?;
    let mut best = (lam, idx, p.clone());
    let mut iterations = 0;
    // Target level for the Polyak step, lowered whenever it is reached.
    let mut level_gap = lam.abs().max(1e-3);
    let mut since_improvement = 0;
    while iterations < opts.max_iter && best.0 > opts.target_margin {
        iterations += 1;
        let g2 = grad.norm_squared();
        if g2 == 0.0 {
            break;
        }
        let level = best.0 - level_gap;
        let step = (lam - level) / g2;
        p = project_psd(&(&p - &grad * step), opts.epsilon);
        (lam, idx, grad) = worst_case(&forms, &p, beta)?;
        if lam < best.0 {
            if lam <= level {
                level_gap *= 1.5;
            }
            best = (lam, idx, p.clone());
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= 20 {
                level_gap *= 0.5;
                since_improvement = 0;
            }
        }
        if iterations % 500 == 0 {
            debug!("P search: iteration {iterations}, best margin {:.3e}", best.0);
        }
    }

    let (margin, worst_idx, p_best) = best;
    let rows = crate::linalg::to_rows(&p_best);
    if margin < 0.0 {
        let min_eig_p = SymmetricEigen::new(p_best.clone()).eigenvalues.min();
        Ok(SearchOutcome::Certified(StabilityCertificate {
            p: rows,
            beta,
            margin,
            d_o_set,
            min_eig_p,
            iterations,
        }))
    } else {
        Ok(SearchOutcome::Infeasible(InfeasibilityReport {
            beta,
            margin,
            worst_d_o: d_o_set[worst_idx],
            d_o_set,
            feedthrough_norm: forms.iter().map(FeedbackForm::feedthrough_norm).fold(0.0, f64::max),
            iterations,
            best_p: rows,
        }))
    }
}
