//! Plant models for the lateral control task: the linear single-track model,
//! its zero-order-hold discretization, norm-bounded uncertainty and a
//! saturating-tire surrogate used as the truth model.

mod lateral;
mod lti;
mod nonlinear;
mod uncertainty;

pub use lateral::{build_lateral_continuous, build_lateral_reduced, LateralParams};
pub use lti::{discretize_zoh, ContinuousLti, DiscreteLti};
pub use nonlinear::{step_nonlinear_truth, NonlinearTruthParams};
pub use uncertainty::{sample_uncertainty, step_linear_truth, step_with_perturbation, UncertaintyModel};
