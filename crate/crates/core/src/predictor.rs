//! Predictor-observer controller that compensates a measurable output delay
//! and an unmeasured, bounded input delay.
//!
//! The observer tracks the transformed state
//! `Z(k) = x(k) + Phi_k(h1) + Phi_k(h2)`, which for a constant input delay `h`
//! equals `A^-h x(k+h)`: acting on `Z` means acting on the state at the time
//! the command reaches the actuator. The output delay is read from the
//! measurement timestamp; only the input-delay bounds are known.

use std::collections::VecDeque;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::delay::{DelayBounds, TimestampedMeasurement};
use crate::error::{Error, Result};
use crate::linalg;
use crate::vehicle::DiscreteLti;

pub use crate::linalg::matrix_power;

const POWER_CONDITION_WARNING: f64 = 1e8;

/// Precomputed `A^j` for `|j| <= depth`.
#[derive(Debug, Clone)]
pub struct PowerTable {
    pos: Vec<DMatrix<f64>>,
    neg: Vec<DMatrix<f64>>,
}

impl PowerTable {
    pub fn new(a: &DMatrix<f64>, depth: usize) -> Result<Self> {
        let n = a.nrows();
        let inv = linalg::inverse(a)?;
        let mut pos = Vec::with_capacity(depth + 1);
        let mut neg = Vec::with_capacity(depth + 1);
        pos.push(DMatrix::identity(n, n));
        neg.push(DMatrix::identity(n, n));
        for j in 1..=depth {
            pos.push(&pos[j - 1] * a);
            neg.push(&neg[j - 1] * &inv);
        }
        Ok(Self { pos, neg })
    }

    pub fn depth(&self) -> usize {
        self.pos.len() - 1
    }

    /// `A^j`. Panics when `|j|` exceeds the table depth.
    pub fn pow(&self, j: i64) -> &DMatrix<f64> {
        let idx = j.unsigned_abs() as usize;
        assert!(idx <= self.depth(), "power {j} beyond table depth {}", self.depth());
        if j >= 0 {
            &self.pos[idx]
        } else {
            &self.neg[idx]
        }
    }
}

/// Past inputs, most recent first: `past(1) = u(k-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputHistory {
    recent: VecDeque<DVector<f64>>,
    window: usize,
}

impl InputHistory {
    pub fn zeros(m: usize, window: usize) -> Self {
        Self {
            recent: std::iter::repeat_n(DVector::zeros(m), window).collect(),
            window,
        }
    }

    /// From `[u(k-1), u(k-2), ...]`.
    pub fn from_recent(inputs: Vec<DVector<f64>>) -> Self {
        let window = inputs.len();
        Self {
            recent: inputs.into(),
            window,
        }
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    /// `u(k - j)` for `j >= 1`.
    pub fn past(&self, j: usize) -> Result<&DVector<f64>> {
        if j == 0 {
            return Err(Error::InsufficientHistory("u(k) is not part of the history".into()));
        }
        self.recent.get(j - 1).ok_or_else(|| {
            Error::InsufficientHistory(format!("u(k-{j}) requested, {} inputs stored", self.recent.len()))
        })
    }

    /// Appends `u(k)`; afterwards `past(1)` returns it.
    pub fn push(&mut self, u: DVector<f64>) {
        self.recent.push_front(u);
        self.recent.truncate(self.window);
    }
}

/// `F = (A^-h1 + A^-h2) B / 2`.
pub fn compute_f(a: &DMatrix<f64>, b: &DMatrix<f64>, h1: usize, h2: usize) -> Result<DMatrix<f64>> {
    let lo = matrix_power(a, -(h1 as i64))?;
    let hi = matrix_power(a, -(h2 as i64))?;
    Ok((lo + hi) * b * 0.5)
}

/// `Phi_k(h) = 1/2 sum_{i=0}^{h-1} A^{-i-1} B u(k-h+i)`.
pub fn phi(history: &InputHistory, h: usize, powers: &PowerTable, b: &DMatrix<f64>) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(b.nrows());
    for i in 0..h {
        let u = history.past(h - i)?;
        acc += powers.pow(-(i as i64) - 1) * (b * u);
    }
    Ok(acc * 0.5)
}

/// Output-delay prediction term with the unknown input delay replaced by the
/// average of its two bounds:
/// `1/2 sum_{i<d} A^{d-i-1} B (u(k-d+i-h1) + u(k-d+i-h2))`.
pub fn omega_bar(
    history: &InputHistory,
    d_o: usize,
    h1: usize,
    h2: usize,
    powers: &PowerTable,
    b: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(b.nrows());
    for i in 0..d_o {
        let lag = d_o - i;
        let u_sum = history.past(lag + h1)? + history.past(lag + h2)?;
        acc += powers.pow((d_o - i - 1) as i64) * (b * u_sum);
    }
    Ok(acc * 0.5)
}

/// Same sum with the true per-step input delays, i.e. with the inputs that
/// actually reached the plant. Used by the measured-delay comparison
/// controller only.
pub(crate) fn omega_measured(
    applied: &InputHistory,
    d_o: usize,
    powers: &PowerTable,
    b: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(b.nrows());
    for i in 0..d_o {
        acc += powers.pow((d_o - i - 1) as i64) * (b * applied.past(d_o - i)?);
    }
    Ok(acc)
}

/// Ground-truth transformed state `Z(k) = x(k) + Phi_k(h1) + Phi_k(h2)`.
pub fn artstein_oracle(
    x: &DVector<f64>,
    history: &InputHistory,
    h1: usize,
    h2: usize,
    powers: &PowerTable,
    b: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    Ok(x + phi(history, h1, powers, b)? + phi(history, h2, powers, b)?)
}

/// `u(k-d) - 1/2 (u(k-h1) + u(k-h2))` for a scalar input sequence indexed by
/// step; this is `tau/2 * w_d(k)` in the interconnected model.
pub fn delay_averaging_residual(u: &[f64], k: usize, d: usize, h1: usize, h2: usize) -> f64 {
    u[k - d] - 0.5 * (u[k - h1] + u[k - h2])
}

/// Maps a state-feedback gain `K_x` to a gain on the transformed state,
/// `K_x * 2 (A^-h1 + A^-h2)^-1`, so that `K_z Z(k)` applies `K_x` to the
/// predicted arrival state. The closed-loop matrix `A + F K_z` is then
/// similar to `A + B K_x`.
pub fn lift_state_gain(k_x: &DMatrix<f64>, powers: &PowerTable, h1: usize, h2: usize) -> Result<DMatrix<f64>> {
    let s = powers.pow(-(h1 as i64)) + powers.pow(-(h2 as i64));
    let inv = linalg::inverse(&s).map_err(|_| Error::Singular("A^-h1 + A^-h2 is not invertible".into()))?;
    Ok(k_x * inv * 2.0)
}

/// Controller gain `K` (m x n), observer gain `L` (n x p) and the derived
/// input matrix `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

impl Gains {
    pub fn new(model: &DiscreteLti, bounds: &DelayBounds, k: DMatrix<f64>, l: DMatrix<f64>) -> Result<Self> {
        if k.shape() != (model.m(), model.n()) || l.shape() != (model.n(), model.p()) {
            return Err(Error::Dimension(format!(
                "gains: K is {:?} (want {:?}), L is {:?} (want {:?})",
                k.shape(),
                (model.m(), model.n()),
                l.shape(),
                (model.n(), model.p())
            )));
        }
        let f = compute_f(model.a(), model.b(), bounds.h1_i, bounds.h2_i)?;
        Ok(Self { k, l, f })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub z_hat: DVector<f64>,
    pub history: InputHistory,
    /// Last innovation `A^d ybar - C Zhat`.
    pub last_innovation: Option<DVector<f64>>,
    pub last_prediction: Option<DVector<f64>>,
}

/// `u = K Zhat`.
pub fn control_input(st: &PredictorState, k: &DMatrix<f64>) -> DVector<f64> {
    k * &st.z_hat
}

#[derive(Debug, Clone)]
pub struct PredictorObserver {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    bounds: DelayBounds,
    gains: Gains,
    powers: PowerTable,
    arrival_map: Option<DMatrix<f64>>,
}

impl PredictorObserver {
    pub fn new(model: &DiscreteLti, bounds: DelayBounds, gains: Gains) -> Result<Self> {
        let depth = bounds.h2_o + bounds.h2_i + 1;
        let powers = PowerTable::new(model.a(), depth)?;
        let cond = linalg::condition_number(powers.pow(depth as i64));
        if cond > POWER_CONDITION_WARNING {
            warn!("cond(A^{depth}) = {cond:.3e}; predictor sums may lose precision");
        }
        let f = compute_f(model.a(), model.b(), bounds.h1_i, bounds.h2_i)?;
        if linalg::max_abs(&(&f - &gains.f)) > 1e-12 * linalg::max_abs(&f).max(1.0) {
            return Err(Error::InvalidParameter(
                "gain F does not match (A^-h1 + A^-h2) B / 2 for these bounds".into(),
            ));
        }
        let s = powers.pow(-(bounds.h1_i as i64)) + powers.pow(-(bounds.h2_i as i64));
        let arrival_map = linalg::inverse(&s).ok().map(|inv| inv * 2.0);
        Ok(Self {
            a: model.a().clone(),
            b: model.b().clone(),
            c: model.c().clone(),
            bounds,
            gains,
            powers,
            arrival_map,
        })
    }

    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn bounds(&self) -> &DelayBounds {
        &self.bounds
    }

    pub fn powers(&self) -> &PowerTable {
        &self.powers
    }

    /// Input window `h2_O + h2_I + 2`, enough for the deepest term
    /// `u(k - d_O - h2_I)`.
    pub fn history_window(&self) -> usize {
        self.bounds.h2_o + self.bounds.h2_i + 2
    }

    pub fn initial_state(&self, z_hat: DVector<f64>) -> PredictorState {
        PredictorState {
            z_hat,
            history: InputHistory::zeros(self.b.ncols(), self.history_window()),
            last_innovation: None,
            last_prediction: None,
        }
    }

    /// Initial estimate lifted from a first measurement through `C^+`.
    pub fn initial_state_from_measurement(&self, y0: &DVector<f64>) -> Result<PredictorState> {
        let z = linalg::pseudo_inverse(&self.c)? * y0;
        Ok(self.initial_state(z))
    }

    fn checked_output_delay(&self, y: &TimestampedMeasurement<DVector<f64>>, k: i64) -> Result<usize> {
        let age = y.age_at(k);
        if age < 0 || !self.bounds.contains_output(age as usize) {
            return Err(Error::DelayOutOfBounds {
                delay: age.max(0) as usize,
                lo: self.bounds.h1_o,
                hi: self.bounds.h2_o,
            });
        }
        Ok(age as usize)
    }

    /// Delay-corrected output
    /// `ybar = y + C A^-d (Phi(h1) + Phi(h2) + OmegaBar(d))`, with `d` read
    /// from the measurement timestamp.
    pub fn y_bar(&self, y: &TimestampedMeasurement<DVector<f64>>, k: i64, st: &PredictorState) -> Result<DVector<f64>> {
        let d_o = self.checked_output_delay(y, k)?;
        let (h1, h2) = (self.bounds.h1_i, self.bounds.h2_i);
        let correction = phi(&st.history, h1, &self.powers, &self.b)?
            + phi(&st.history, h2, &self.powers, &self.b)?
            + omega_bar(&st.history, d_o, h1, h2, &self.powers, &self.b)?;
        Ok(&y.value + &self.c * (self.powers.pow(-(d_o as i64)) * correction))
    }

    /// Variant of [`Self::y_bar`] that knows the inputs actually applied to
    /// the plant (hence the true input delays).
    pub(crate) fn y_bar_measured_input(
        &self,
        y: &TimestampedMeasurement<DVector<f64>>,
        k: i64,
        st: &PredictorState,
        applied: &InputHistory,
    ) -> Result<DVector<f64>> {
        let d_o = self.checked_output_delay(y, k)?;
        let (h1, h2) = (self.bounds.h1_i, self.bounds.h2_i);
        let correction = phi(&st.history, h1, &self.powers, &self.b)?
            + phi(&st.history, h2, &self.powers, &self.b)?
            + omega_measured(applied, d_o, &self.powers, &self.b)?;
        Ok(&y.value + &self.c * (self.powers.pow(-(d_o as i64)) * correction))
    }

    /// `Zhat(k+1) = A Zhat + F u(k) + L (A^d ybar - C Zhat)`; `u(k)` joins the
    /// input history.
    pub fn predictor_step(
        &self,
        st: &PredictorState,
        u_k: &DVector<f64>,
        ybar: &DVector<f64>,
        d_o: usize,
    ) -> PredictorState {
        let innovation = self.powers.pow(d_o as i64) * ybar - &self.c * &st.z_hat;
        let z_next = &self.a * &st.z_hat + &self.gains.f * u_k + &self.gains.l * &innovation;
        let mut history = st.history.clone();
        history.push(u_k.clone());
        PredictorState {
            z_hat: z_next,
            history,
            last_innovation: Some(innovation),
            last_prediction: st.last_prediction.clone(),
        }
    }

    pub fn control_input(&self, st: &PredictorState) -> DVector<f64> {
        control_input(st, &self.gains.k)
    }

    /// `2 (A^-h1 + A^-h2)^-1 Zhat(k)`: the estimate of the state at the time
    /// the current command reaches the actuator.
    pub fn predict_arrival_state(&self, st: &PredictorState) -> Result<DVector<f64>> {
        let map = self
            .arrival_map
            .as_ref()
            .ok_or_else(|| Error::Singular("A^-h1 + A^-h2 is not invertible".into()))?;
        Ok(map * &st.z_hat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn sv(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn scalar_observer(a: f64, b: f64, l: f64, k: f64, bounds: DelayBounds) -> PredictorObserver {
        let model = DiscreteLti::state_feedback(s(a), s(b), 0.05).unwrap();
        let gains = Gains::new(&model, &bounds, s(k), s(l)).unwrap();
        PredictorObserver::new(&model, bounds, gains).unwrap()
    }

    fn history(recent: &[f64]) -> InputHistory {
        InputHistory::from_recent(recent.iter().map(|v| sv(*v)).collect())
    }

    #[test]
    fn f_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.2, 0.0, 0.9]);
        let b = DMatrix::from_row_slice(2, 1, &[0.3, 1.0]);
        assert_eq!(compute_f(&a, &b, 0, 0).unwrap(), b);
        assert_relative_eq!(compute_f(&s(2.0), &s(1.0), 1, 2).unwrap()[(0, 0)], 0.375);
        let f = compute_f(&a, &b, 3, 3).unwrap();
        let expect = matrix_power(&a, -3).unwrap() * &b;
        assert!(linalg::max_abs(&(f - expect)) < 1e-14);
        assert!(compute_f(&DMatrix::zeros(2, 2), &b, 0, 1).is_err());
    }

    #[test]
    fn phi_examples() {
        let p = PowerTable::new(&s(2.0), 4).unwrap();
        let b = s(1.0);
        assert_eq!(phi(&history(&[0.0; 4]), 3, &p, &b).unwrap()[0], 0.0);
        assert_eq!(phi(&history(&[5.0]), 0, &p, &b).unwrap()[0], 0.0);
        // u(k-1) = 8, u(k-2) = 4
        assert_relative_eq!(phi(&history(&[8.0, 4.0]), 2, &p, &b).unwrap()[0], 2.0);
        assert!(phi(&history(&[8.0]), 2, &p, &b).is_err());
    }

    #[test]
    fn omega_bar_examples() {
        let p = PowerTable::new(&s(1.0), 4).unwrap();
        let b = s(1.0);
        let h = history(&[3.0, 1.0, 2.0]);
        assert_eq!(omega_bar(&h, 0, 0, 2, &p, &b).unwrap()[0], 0.0);
        assert_eq!(omega_bar(&history(&[0.0; 6]), 2, 1, 3, &p, &b).unwrap()[0], 0.0);
        assert_eq!(omega_bar(&h, 1, 0, 0, &p, &b).unwrap()[0], 3.0);
        assert!(omega_bar(&h, 2, 1, 2, &p, &b).is_err());
    }

    #[test]
    fn y_bar_examples() {
        let bounds = DelayBounds::new((0, 0), (0, 2)).unwrap();
        let obs = scalar_observer(1.0, 1.0, 0.5, -1.0, bounds);
        let mut st = obs.initial_state(sv(0.0));
        let y = TimestampedMeasurement {
            value: sv(5.0),
            origin_step: 9,
        };
        assert_eq!(obs.y_bar(&y, 10, &st).unwrap()[0], 5.0);
        let y0 = TimestampedMeasurement {
            value: sv(5.0),
            origin_step: 10,
        };
        assert_eq!(obs.y_bar(&y0, 10, &st).unwrap()[0], 5.0);
        st.history.push(sv(3.0));
        assert_eq!(obs.y_bar(&y, 10, &st).unwrap()[0], 8.0);
        // Age 3 is outside [0, 2].
        let stale = TimestampedMeasurement {
            value: sv(5.0),
            origin_step: 7,
        };
        assert!(matches!(
            obs.y_bar(&stale, 10, &st),
            Err(Error::DelayOutOfBounds { delay: 3, .. })
        ));
    }

    #[test]
    fn predictor_step_examples() {
        let bounds = DelayBounds::zero();
        let obs = scalar_observer(1.0, 1.0, 0.5, -1.0, bounds);
        let st = obs.initial_state(sv(2.0));
        let next = obs.predictor_step(&st, &sv(1.0), &sv(4.0), 0);
        assert_relative_eq!(next.z_hat[0], 4.0);
        assert_eq!(next.history.past(1).unwrap()[0], 1.0);

        let zero = obs.initial_state(sv(0.0));
        assert_eq!(obs.predictor_step(&zero, &sv(0.0), &sv(0.0), 0).z_hat[0], 0.0);

        let open = scalar_observer(0.7, 2.0, 0.0, -1.0, bounds);
        let st = open.initial_state(sv(3.0));
        let next = open.predictor_step(&st, &sv(0.5), &sv(100.0), 0);
        assert_relative_eq!(next.z_hat[0], 0.7 * 3.0 + 2.0 * 0.5, max_relative = 1e-15);
    }

    #[test]
    fn control_examples() {
        let st = PredictorState {
            z_hat: sv(3.0),
            history: InputHistory::zeros(1, 1),
            last_innovation: None,
            last_prediction: None,
        };
        assert_eq!(control_input(&st, &s(-2.0))[0], -6.0);
        let zero = PredictorState { z_hat: sv(0.0), ..st };
        assert_eq!(control_input(&zero, &s(-2.0))[0], 0.0);
    }

    #[test]
    fn arrival_prediction_examples() {
        let st = |z: f64| PredictorState {
            z_hat: sv(z),
            history: InputHistory::zeros(1, 1),
            last_innovation: None,
            last_prediction: None,
        };
        let obs = scalar_observer(2.0, 1.0, 0.0, 0.0, DelayBounds::zero());
        assert_relative_eq!(obs.predict_arrival_state(&st(3.0)).unwrap()[0], 3.0);
        let obs = scalar_observer(2.0, 1.0, 0.0, 0.0, DelayBounds::new((1, 2), (0, 0)).unwrap());
        assert_relative_eq!(
            obs.predict_arrival_state(&st(3.0)).unwrap()[0],
            8.0,
            max_relative = 1e-14
        );
        let obs = scalar_observer(2.0, 1.0, 0.0, 0.0, DelayBounds::new((3, 3), (0, 0)).unwrap());
        assert_relative_eq!(
            obs.predict_arrival_state(&st(1.5)).unwrap()[0],
            12.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn artstein_examples() {
        let p = PowerTable::new(&s(2.0), 4).unwrap();
        let b = s(1.0);
        let x = sv(1.0);
        assert_eq!(artstein_oracle(&x, &history(&[0.0; 3]), 2, 3, &p, &b).unwrap()[0], 1.0);
        assert_eq!(artstein_oracle(&x, &history(&[9.0]), 0, 0, &p, &b).unwrap()[0], 1.0);
        assert_relative_eq!(
            artstein_oracle(&x, &history(&[8.0, 4.0]), 2, 2, &p, &b).unwrap()[0],
            5.0
        );
    }

    #[test]
    fn mismatched_f_rejected() {
        let model = DiscreteLti::state_feedback(s(2.0), s(1.0), 0.05).unwrap();
        let bounds = DelayBounds::new((1, 2), (0, 0)).unwrap();
        let mut gains = Gains::new(&model, &bounds, s(-0.1), s(0.1)).unwrap();
        gains.f = s(1.0);
        assert!(PredictorObserver::new(&model, bounds, gains).is_err());
    }

    #[test]
    fn lifted_gain_closed_loop_is_similar() {
        let a = DMatrix::from_row_slice(2, 2, &[1.05, 0.1, 0.0, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.5]);
        let k = DMatrix::from_row_slice(1, 2, &[-0.9, -0.6]);
        let p = PowerTable::new(&a, 6).unwrap();
        let kz = lift_state_gain(&k, &p, 2, 5).unwrap();
        let f = compute_f(&a, &b, 2, 5).unwrap();
        let lhs = linalg::spectral_radius(&(&a + &f * &kz));
        let rhs = linalg::spectral_radius(&(&a + &b * &k));
        assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
    }
}
