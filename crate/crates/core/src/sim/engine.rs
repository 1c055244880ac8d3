use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{ControllerKind, Scenario, Truth, ZhatInit};
use super::log::{LogMeta, SimulationLog, StepRecord};
use crate::delay::DelayChannel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::predictor::{Gains, InputHistory, PredictorObserver, PredictorState};
use crate::vehicle::{sample_uncertainty, step_nonlinear_truth, step_with_perturbation};

const STREAM_OUTPUT_DELAY: u64 = 1;
const STREAM_INPUT_DELAY: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_UNCERTAINTY: u64 = 4;

/// Per-step delays of one run, in step order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayTraces {
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

/// Each random source gets its own stream so that, for a given seed, delay
/// sequences do not depend on the controller.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

enum Controller {
    Predictor {
        obs: Box<PredictorObserver>,
        state: Option<PredictorState>,
        init: ZhatInit,
        /// Feedback inputs that reached the plant, for the measured-delay
        /// variant.
        applied: Option<InputHistory>,
    },
    Static {
        gain: DMatrix<f64>,
    },
}

struct Output {
    u: DVector<f64>,
    z_hat: Option<DVector<f64>>,
    x_pred: Option<DVector<f64>>,
}

impl Controller {
    fn new(sc: &Scenario, kind: ControllerKind) -> Result<Self> {
        match kind {
            ControllerKind::Lqr => {
                let c_pinv = linalg::pseudo_inverse(sc.model.c())?;
                Ok(Self::Static {
                    gain: sc.lqr_gain()? * c_pinv,
                })
            }
            ControllerKind::Proposed | ControllerKind::MeasuredDelayPredictor => {
                let (k, l) = sc.predictor_gains()?;
                let gains = Gains::new(&sc.model, &sc.bounds, k, l)?;
                let obs = PredictorObserver::new(&sc.model, sc.bounds, gains)?;
                let applied = (kind == ControllerKind::MeasuredDelayPredictor)
                    .then(|| InputHistory::zeros(sc.model.m(), obs.history_window()));
                Ok(Self::Predictor {
                    obs: Box::new(obs),
                    state: None,
                    init: sc.config.zhat_init,
                    applied,
                })
            }
        }
    }

    fn compute(&mut self, meas: &crate::delay::TimestampedMeasurement<DVector<f64>>, k: i64) -> Result<Output> {
        match self {
            Self::Static { gain } => Ok(Output {
                u: &*gain * &meas.value,
                z_hat: None,
                x_pred: None,
            }),
            Self::Predictor {
                obs,
                state,
                init,
                applied,
            } => {
                let st = match state.take() {
                    Some(st) => st,
                    None => match init {
                        ZhatInit::Measurement => obs.initial_state_from_measurement(&meas.value)?,
                        ZhatInit::Zero => obs.initial_state(DVector::zeros(obs.state_dim())),
                    },
                };
                let d_o = meas.age_at(k) as usize;
                let ybar = match applied {
                    Some(hist) => obs.y_bar_measured_input(meas, k, &st, hist)?,
                    None => obs.y_bar(meas, k, &st)?,
                };
                let u = obs.control_input(&st);
                let x_pred = obs.predict_arrival_state(&st)?;
                let z_hat = st.z_hat.clone();
                let mut next = obs.predictor_step(&st, &u, &ybar, d_o);
                next.last_prediction = Some(x_pred.clone());
                *state = Some(next);
                Ok(Output {
                    u,
                    z_hat: Some(z_hat),
                    x_pred: Some(x_pred),
                })
            }
        }
    }

    fn record_applied(&mut self, u: &DVector<f64>) {
        if let Self::Predictor {
            applied: Some(hist), ..
        } = self
        {
            hist.push(u.clone());
        }
    }
}

/// Runs the configured controller with the configured seed.
pub fn run_closed_loop(sc: &Scenario) -> Result<SimulationLog> {
    run_with(sc, sc.config.controller, sc.config.seed, None)
}

/// One closed-loop run. With `replay`, delays come from the given traces
/// instead of the seeded draws.
pub fn run_with(sc: &Scenario, kind: ControllerKind, seed: u64, replay: Option<&DelayTraces>) -> Result<SimulationLog> {
    let model = &sc.model;
    let horizon = sc.config.horizon;
    let t_c = sc.config.t_c;
    if let Truth::Nonlinear(_) = sc.truth {
        if model.m() != 1 {
            return Err(Error::Config(
                "the nonlinear truth model takes a single steering input".into(),
            ));
        }
    }
    let mut controller = Controller::new(sc, kind)?;

    let mut out_ch = DelayChannel::new(sc.bounds.h1_o, sc.bounds.h2_o, model.output(&sc.x0))?;
    let mut in_ch = DelayChannel::new(sc.bounds.h1_i, sc.bounds.h2_i, DVector::zeros(model.m()))?;
    if let Some(traces) = replay {
        if traces.input.len() < horizon || traces.output.len() < horizon {
            return Err(Error::Config(format!(
                "replayed traces are shorter than the horizon {horizon} (input {}, output {})",
                traces.input.len(),
                traces.output.len()
            )));
        }
        out_ch.replay_trace(traces.output.clone())?;
        in_ch.replay_trace(traces.input.clone())?;
    }
    let mut rng_out = stream(seed, STREAM_OUTPUT_DELAY);
    let mut rng_in = stream(seed, STREAM_INPUT_DELAY);
    let mut rng_noise = stream(seed, STREAM_NOISE);
    let mut rng_unc = stream(seed, STREAM_UNCERTAINTY);

    let mut x = sc.x0.clone();
    let mut records = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let k = step as i64;
        let rho = sc.reference.rho_at(step);

        let mut y = model.output(&x);
        for (yi, std) in y.iter_mut().zip(&sc.noise_std) {
            if *std > 0.0 {
                *yi += std * rng_noise.sample::<f64, _>(StandardNormal);
            }
        }
        out_ch.push(k, y)?;
        let meas = out_ch.sample_delayed(k, &mut rng_out)?;
        let d_o = meas.age_at(k) as usize;

        let Output { u, z_hat, x_pred } = controller.compute(&meas, k)?;

        in_ch.push(k, u.clone())?;
        let delivered = in_ch.sample_delayed(k, &mut rng_in)?;
        let d_i = delivered.age_at(k) as usize;
        controller.record_applied(&delivered.value);
        let u_applied = &delivered.value + &sc.ff_gain * rho;

        records.push(StepRecord {
            k: step,
            t: step as f64 * t_c,
            x: x.clone(),
            u_applied: u_applied.clone(),
            u_computed: u,
            d_o,
            d_i,
            z_hat,
            x_pred,
            y_meas: meas.value,
            rho_ref: rho,
        });

        let pert = sample_uncertainty(&sc.unc, k, &mut rng_unc);
        x = match &sc.truth {
            Truth::Linear => step_with_perturbation(model, &x, &u_applied, rho, &pert),
            Truth::Nonlinear(p) => {
                step_nonlinear_truth(&x, u_applied[0], rho, p, t_c)? + &pert.0 * &x + &pert.1 * &u_applied
            }
        };
    }

    Ok(SimulationLog {
        meta: LogMeta {
            seed,
            config_hash: sc.config_hash.clone(),
            controller: kind.name().to_string(),
            state_names: sc.state_names.clone(),
            offset_index: sc.offset_index,
            heading_index: sc.heading_index,
        },
        output_delays: records.iter().map(|r| r.d_o).collect(),
        input_delays: records.iter().map(|r| r.d_i).collect(),
        records,
    })
}

impl SimulationLog {
    pub fn traces(&self) -> DelayTraces {
        DelayTraces {
            input: self.input_delays.clone(),
            output: self.output_delays.clone(),
        }
    }
}
