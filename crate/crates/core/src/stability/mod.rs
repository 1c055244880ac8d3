//! Delay-free interconnected representation of the predictor-observer loop
//! and the matrix-inequality robust stability test on it.

mod hinf;
mod interconnect;
mod lmi;

pub use hinf::{hinf_norm_poly, run_of_terms, PolyTerms, DEFAULT_GRID};
pub use interconnect::{
    build_all_output_delays, build_interconnected, build_interconnected_with_grid, upsilon, Block, BlockLayout,
    FeedbackForm, InterconnectedSystem,
};
pub use lmi::{
    assemble_mi, check_mi, search_feasible_p, InfeasibilityReport, SearchOptions, SearchOutcome, StabilityCertificate,
};

use crate::error::Result;
use crate::linalg;
use crate::predictor::{matrix_power, Gains};
use crate::vehicle::DiscreteLti;

/// Spectral radii of the controller loop `A + F K` and of the observer error
/// loop `A - L A^d C A^-d`.
pub fn spectral_margins(model: &DiscreteLti, gains: &Gains, d_o: usize) -> Result<(f64, f64)> {
    let a = model.a();
    let ctrl = a + &gains.f * &gains.k;
    let d = d_o as i64;
    let obs = a - &gains.l * matrix_power(a, d)? * model.c() * matrix_power(a, -d)?;
    Ok((linalg::spectral_radius(&ctrl), linalg::spectral_radius(&obs)))
}

/// Builds every output-delay instance and searches for a common `P`.
pub fn certify(
    model: &DiscreteLti,
    unc: &crate::vehicle::UncertaintyModel,
    gains: &Gains,
    bounds: &crate::delay::DelayBounds,
    beta: f64,
    grid: usize,
    opts: SearchOptions,
) -> Result<SearchOutcome> {
    let systems: Vec<(usize, FeedbackForm)> = build_all_output_delays(model, unc, gains, bounds, grid)?
        .into_iter()
        .map(|s| (s.d_o, s.form))
        .collect();
    search_feasible_p(&systems, beta, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelayBounds;
    use crate::vehicle::UncertaintyModel;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar_setup(k: f64, l: f64) -> (DiscreteLti, Gains) {
        let model = DiscreteLti::state_feedback(s(0.5), s(1.0), 0.05).unwrap();
        let gains = Gains::new(&model, &DelayBounds::zero(), s(k), s(l)).unwrap();
        (model, gains)
    }

    #[test]
    fn margins_examples() {
        let (model, gains) = scalar_setup(0.0, 0.0);
        let (c, o) = spectral_margins(&model, &gains, 0).unwrap();
        assert_eq!((c, o), (0.5, 0.5));
        let (model, gains) = scalar_setup(-0.2, 0.3);
        let (c, o) = spectral_margins(&model, &gains, 0).unwrap();
        assert_relative_eq!(c, 0.3, epsilon = 1e-15);
        assert_relative_eq!(o, 0.2, epsilon = 1e-15);
        let (model, gains) = scalar_setup(-0.5, 0.0);
        assert_eq!(spectral_margins(&model, &gains, 0).unwrap().0, 0.0);
    }

    #[test]
    fn builder_is_deterministic() {
        let (model, gains) = scalar_setup(-0.2, 0.3);
        let bounds = DelayBounds::new((1, 2), (0, 0)).unwrap();
        let gains = Gains::new(&model, &bounds, gains.k, gains.l).unwrap();
        let unc = UncertaintyModel::structured_identity(0.05, 1, 1);
        let a = build_interconnected(&model, &unc, &gains, &bounds, 0).unwrap();
        let b = build_interconnected(&model, &unc, &gains, &bounds, 0).unwrap();
        assert_eq!(a, b);
    }
}
