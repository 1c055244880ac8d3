use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lqr::dlqr;
use super::reference::{gen_lane_change, LaneChange, ReferenceTrajectory};
use crate::delay::DelayBounds;
use crate::error::{Error, Result};
use crate::linalg;
use crate::predictor::{lift_state_gain, PowerTable};
use crate::stability::{SearchOptions, DEFAULT_GRID};
use crate::vehicle::{
    build_lateral_continuous, build_lateral_reduced, discretize_zoh, DiscreteLti, LateralParams, NonlinearTruthParams,
    UncertaintyModel,
};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthModel {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Predictor-observer needing only the output delay.
    Proposed,
    /// Static gain on the delayed measurement.
    Lqr,
    /// Predictor that also knows the inputs actually applied.
    MeasuredDelayPredictor,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Lqr => "lqr",
            Self::MeasuredDelayPredictor => "measured-delay-predictor",
        }
    }

    pub fn uses_predictor(self) -> bool {
        !matches!(self, Self::Lqr)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Self::Proposed),
            "lqr" => Ok(Self::Lqr),
            "measured-delay-predictor" => Ok(Self::MeasuredDelayPredictor),
            other => Err(Error::Config(format!("unknown controller '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZhatInit {
    /// `C^+ y` of the first received measurement.
    Measurement,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    /// Four-state single-track model `[beta, r, psi_L, y_L]`.
    Lateral,
    /// Three-state model without slip angle `[r, psi_L, y_L]`.
    LateralReduced,
    /// Raw discrete matrices.
    Matrices,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehiclePreset {
    Simulation,
    FieldTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub kind: PlantKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<VehiclePreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<LateralParams>,
    /// Tire saturation slip angle of the nonlinear truth model (rad).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_sat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    /// Output matrix; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Rows>,
    /// Curvature input column for `matrices` plants, n x 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_r: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_state: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_state: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    /// `[h1_I, h2_I]`.
    pub input: [usize; 2],
    /// `[h1_O, h2_O]`.
    pub output: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyConfig {
    #[serde(default)]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_a: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_b: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_tilde: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation per output channel; empty means noise-free.
    #[serde(default)]
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainPreset {
    /// Desk-simulation gains for the four-state plant.
    DeskSim,
    /// Field-test gains for the three-state plant.
    FieldTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrWeights {
    /// Diagonal of Q.
    pub q: Vec<f64>,
    /// Diagonal of R.
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<GainPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_lqr: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr_weights: Option<LqrWeights>,
    /// Use `K_lqr 2 (A^-h1 + A^-h2)^-1` as the predictor gain.
    #[serde(default)]
    pub lift_lqr_gain: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Straight,
    LaneChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_m: Option<f64>,
    /// Path speed for `matrices` plants (lateral plants use their own `v`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    /// Steady-state steering that cancels the curvature input, added on the
    /// vehicle side for every controller.
    #[serde(default = "default_true")]
    pub feedforward: bool,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            kind: ReferenceKind::Straight,
            shift_m: None,
            length_m: None,
            start_m: None,
            speed: None,
            feedforward: true,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    #[serde(default = "BatchConfig::default_trials")]
    pub trials: usize,
    #[serde(default = "BatchConfig::default_controllers")]
    pub controllers: Vec<ControllerKind>,
}

impl BatchConfig {
    fn default_trials() -> usize {
        10
    }

    fn default_controllers() -> Vec<ControllerKind> {
        vec![ControllerKind::Proposed, ControllerKind::Lqr]
    }
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            trials: Self::default_trials(),
            controllers: Self::default_controllers(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default = "StabilityConfig::default_beta")]
    pub beta: f64,
    #[serde(default = "StabilityConfig::default_grid")]
    pub grid: usize,
    #[serde(default = "StabilityConfig::default_max_iter")]
    pub max_iter: usize,
}

impl StabilityConfig {
    fn default_beta() -> f64 {
        1.0
    }

    fn default_grid() -> usize {
        DEFAULT_GRID
    }

    fn default_max_iter() -> usize {
        SearchOptions::default().max_iter
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            max_iter: self.max_iter,
            ..SearchOptions::default()
        }
    }
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            beta: Self::default_beta(),
            grid: Self::default_grid(),
            max_iter: Self::default_max_iter(),
        }
    }
}

fn default_t_c() -> f64 {
    0.05
}

fn default_controller() -> ControllerKind {
    ControllerKind::Proposed
}

fn default_truth() -> TruthModel {
    TruthModel::Linear
}

fn default_zhat_init() -> ZhatInit {
    ZhatInit::Measurement
}

/// Everything a run needs, as read from one TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon: usize,
    #[serde(default = "default_t_c")]
    pub t_c: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_truth")]
    pub truth: TruthModel,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default = "default_zhat_init")]
    pub zhat_init: ZhatInit,
    pub plant: PlantConfig,
    pub delays: DelayConfig,
    #[serde(default)]
    pub uncertainty: UncertaintyConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub gains: GainsConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub batch: BatchConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Reference gains for the four-state desk simulation.
pub mod desk_sim {
    pub const K_LQR: [f64; 4] = [-0.0309, -0.0210, -0.5149, -0.1810];
    pub const K: [f64; 4] = [-0.0303, -0.0221, -0.696, -0.1810];
    #[rustfmt::skip]
    pub const L: [f64; 16] = [
        -0.5483, -0.006, 0.0, 0.0,
        0.0197, -0.6681, 0.0, 0.0,
        0.0011, 0.0184, 0.25, 0.0,
        0.1275, 0.0474, 0.25, 0.25,
    ];
}

/// Reference gains for the three-state field-test plant.
pub mod field_test {
    pub const K_LQR: [f64; 3] = [-0.0249, -0.7709, -0.2594];
    pub const K: [f64; 3] = [-0.0249, -0.7709, -0.2594];
    #[rustfmt::skip]
    pub const L: [f64; 9] = [
        -0.6545, 0.0, 0.0,
        -0.0141, 0.3, 0.0,
        0.0492, 0.15, 0.3,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Linear,
    Nonlinear(NonlinearTruthParams),
}

/// A validated configuration with all matrices built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: DiscreteLti,
    pub truth: Truth,
    pub unc: UncertaintyModel,
    pub bounds: DelayBounds,
    pub noise_std: Vec<f64>,
    /// Predictor gain.
    pub k: Option<DMatrix<f64>>,
    pub l: Option<DMatrix<f64>>,
    /// Baseline static gain.
    pub k_lqr: Option<DMatrix<f64>>,
    pub reference: ReferenceTrajectory,
    /// Feed-forward steering per unit curvature (m x 1).
    pub ff_gain: DVector<f64>,
    pub x0: DVector<f64>,
    pub state_names: Vec<String>,
    pub offset_index: usize,
    pub heading_index: usize,
    pub config_hash: String,
}

fn matrix(rows: &Rows, what: &str) -> Result<DMatrix<f64>> {
    linalg::from_rows(rows).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn expect_shape(m: &DMatrix<f64>, shape: (usize, usize), what: &str) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::Config(format!("{what} is {:?}, expected {shape:?}", m.shape())));
    }
    Ok(())
}

fn diag(values: &[f64], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if values.len() != n {
        return Err(Error::Config(format!(
            "{what} needs {n} diagonal entries, got {}",
            values.len()
        )));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let cfg = &config;
        if !(cfg.t_c.is_finite() && cfg.t_c > 0.0) {
            return Err(Error::Config(format!("t_c must be positive, got {}", cfg.t_c)));
        }
        let bounds = DelayBounds::new(
            (cfg.delays.input[0], cfg.delays.input[1]),
            (cfg.delays.output[0], cfg.delays.output[1]),
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        if cfg.horizon <= bounds.h2_o + bounds.h2_i {
            return Err(Error::Config(format!(
                "horizon {} must exceed h2_O + h2_I = {}",
                cfg.horizon,
                bounds.h2_o + bounds.h2_i
            )));
        }

        let plant = &cfg.plant;
        let lateral = plant.params.unwrap_or(match plant.vehicle {
            Some(VehiclePreset::FieldTest) => LateralParams::field_test_vehicle(),
            _ => LateralParams::simulation_vehicle(),
        });
        let (model, state_names, speed) = match plant.kind {
            PlantKind::Lateral | PlantKind::LateralReduced => {
                if plant.a.is_some() || plant.b.is_some() || plant.p_r.is_some() {
                    return Err(Error::Config("raw matrices only apply to plant kind 'matrices'".into()));
                }
                let (cont, names): (_, &[&str]) = if plant.kind == PlantKind::Lateral {
                    (build_lateral_continuous(&lateral)?, &["beta", "r", "psi_L", "y_L"])
                } else {
                    (build_lateral_reduced(&lateral)?, &["r", "psi_L", "y_L"])
                };
                let n = cont.a.nrows();
                let c = match &plant.c {
                    Some(rows) => matrix(rows, "plant.c")?,
                    None => DMatrix::identity(n, n),
                };
                let model = discretize_zoh(&cont, &c, cfg.t_c)?;
                (
                    model,
                    names.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                    Some(lateral.v),
                )
            }
            PlantKind::Matrices => {
                let (Some(a), Some(b)) = (&plant.a, &plant.b) else {
                    return Err(Error::Config("plant kind 'matrices' needs a and b".into()));
                };
                let a = matrix(a, "plant.a")?;
                let b = matrix(b, "plant.b")?;
                let n = a.nrows();
                let c = match &plant.c {
                    Some(rows) => matrix(rows, "plant.c")?,
                    None => DMatrix::identity(n, n),
                };
                let p_r = match &plant.p_r {
                    Some(rows) => matrix(rows, "plant.p_r")?,
                    None => DMatrix::zeros(n, 1),
                };
                let model = DiscreteLti::new(a, b, c, p_r, cfg.t_c)?;
                let names = (1..=n).map(|i| format!("x_{i}")).collect();
                (model, names, cfg.reference.speed)
            }
        };
        let (n, m, p) = (model.n(), model.m(), model.p());

        let truth = match cfg.truth {
            TruthModel::Linear => Truth::Linear,
            TruthModel::Nonlinear => {
                if plant.kind != PlantKind::Lateral {
                    return Err(Error::Config(
                        "the nonlinear truth model needs plant kind 'lateral'".into(),
                    ));
                }
                let mut params = NonlinearTruthParams::new(
                    lateral,
                    plant.alpha_sat.unwrap_or(NonlinearTruthParams::DEFAULT_ALPHA_SAT),
                )?;
                params.substeps = plant.substeps.unwrap_or(NonlinearTruthParams::DEFAULT_SUBSTEPS);
                params.validate()?;
                Truth::Nonlinear(params)
            }
        };

        let u = &cfg.uncertainty;
        let e =
            u.e.as_ref()
                .map(|r| matrix(r, "uncertainty.e"))
                .transpose()?
                .unwrap_or(DMatrix::identity(n, n));
        let h_a = u
            .h_a
            .as_ref()
            .map(|r| matrix(r, "uncertainty.h_a"))
            .transpose()?
            .unwrap_or(DMatrix::identity(n, n));
        let h_b = u
            .h_b
            .as_ref()
            .map(|r| matrix(r, "uncertainty.h_b"))
            .transpose()?
            .unwrap_or(DMatrix::zeros(h_a.nrows(), m));
        let e_tilde = u
            .e_tilde
            .as_ref()
            .map(|r| matrix(r, "uncertainty.e_tilde"))
            .transpose()?
            .unwrap_or(e.clone());
        let unc = UncertaintyModel::with_averaged(u.gamma, e, h_a, h_b, u.gamma_tilde.unwrap_or(u.gamma), e_tilde)
            .map_err(|err| Error::Config(err.to_string()))?;
        unc.check_against(&model)
            .map_err(|err| Error::Config(err.to_string()))?;

        let noise_std = if cfg.noise.std.is_empty() {
            vec![0.0; p]
        } else {
            cfg.noise.std.clone()
        };
        if noise_std.len() != p || noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config(format!("noise.std needs {p} non-negative entries")));
        }

        let (k, l, k_lqr) = resolve_gains(&cfg.gains, &model, &bounds)?;

        let reference = match cfg.reference.kind {
            ReferenceKind::Straight => ReferenceTrajectory::straight(cfg.horizon),
            ReferenceKind::LaneChange => {
                let v = speed
                    .ok_or_else(|| Error::Config("lane change on a 'matrices' plant needs reference.speed".into()))?;
                let defaults = LaneChange::default();
                let shape = LaneChange {
                    shift_m: cfg.reference.shift_m.unwrap_or(defaults.shift_m),
                    length_m: cfg.reference.length_m.unwrap_or(defaults.length_m),
                    start_m: cfg.reference.start_m.unwrap_or(defaults.start_m),
                };
                gen_lane_change(&shape, v, cfg.t_c, cfg.horizon).map_err(|e| Error::Config(e.to_string()))?
            }
        };

        let offset_index = plant.offset_state.unwrap_or(n - 1);
        let heading_index = plant.heading_state.unwrap_or(n.saturating_sub(2));
        if offset_index >= n || heading_index >= n {
            return Err(Error::Config(format!("metric state indices must be below n={n}")));
        }
        let ff_gain = if cfg.reference.feedforward {
            feedforward_gain(&model, offset_index)?
        } else {
            DVector::zeros(m)
        };

        let x0 = match &cfg.initial_state {
            Some(v) if v.len() == n => DVector::from_column_slice(v),
            Some(v) => return Err(Error::Config(format!("initial_state has {} entries, n={n}", v.len()))),
            None => DVector::zeros(n),
        };

        if !(cfg.stability.beta > 0.0 && cfg.stability.beta <= 1.0) {
            return Err(Error::Config(format!(
                "stability.beta must lie in (0, 1], got {}",
                cfg.stability.beta
            )));
        }
        if cfg.stability.grid == 0 {
            return Err(Error::Config("stability.grid must be positive".into()));
        }

        let config_hash = config.hash()?;
        Ok(Self {
            model,
            truth,
            unc,
            bounds,
            noise_std,
            k,
            l,
            k_lqr,
            reference,
            ff_gain,
            x0,
            state_names,
            offset_index,
            heading_index,
            config_hash,
            config,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config(ScenarioConfig::load(path)?)
    }

    /// Predictor gains `(K, L)`, or a configuration error when missing.
    pub fn predictor_gains(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match (&self.k, &self.l) {
            (Some(k), Some(l)) => Ok((k.clone(), l.clone())),
            _ => Err(Error::Config("the predictor controller needs gains k and l".into())),
        }
    }

    pub fn lqr_gain(&self) -> Result<DMatrix<f64>> {
        self.k_lqr
            .clone()
            .ok_or_else(|| Error::Config("the lqr controller needs k_lqr (or lqr_weights)".into()))
    }
}

type ResolvedGains = (Option<DMatrix<f64>>, Option<DMatrix<f64>>, Option<DMatrix<f64>>);

fn resolve_gains(g: &GainsConfig, model: &DiscreteLti, bounds: &DelayBounds) -> Result<ResolvedGains> {
    let (n, m, p) = (model.n(), model.m(), model.p());
    let (mut k, mut l, mut k_lqr) = (None, None, None);
    match g.preset {
        Some(GainPreset::DeskSim) => {
            if (n, m, p) != (4, 1, 4) {
                return Err(Error::Config(
                    "preset desk_sim needs a four-state plant with C = I".into(),
                ));
            }
            k = Some(DMatrix::from_row_slice(1, 4, &desk_sim::K));
            l = Some(DMatrix::from_row_slice(4, 4, &desk_sim::L));
            k_lqr = Some(DMatrix::from_row_slice(1, 4, &desk_sim::K_LQR));
        }
        Some(GainPreset::FieldTest) => {
            if (n, m, p) != (3, 1, 3) {
                return Err(Error::Config(
                    "preset field_test needs a three-state plant with C = I".into(),
                ));
            }
            k = Some(DMatrix::from_row_slice(1, 3, &field_test::K));
            l = Some(DMatrix::from_row_slice(3, 3, &field_test::L));
            k_lqr = Some(DMatrix::from_row_slice(1, 3, &field_test::K_LQR));
        }
        None => {}
    }
    if let Some(w) = &g.lqr_weights {
        let q = diag(&w.q, n, "lqr_weights.q")?;
        let r = diag(&w.r, m, "lqr_weights.r")?;
        k_lqr = Some(dlqr(model.a(), model.b(), &q, &r)?);
    }
    if let Some(rows) = &g.k_lqr {
        k_lqr = Some(matrix(rows, "gains.k_lqr")?);
    }
    if let Some(rows) = &g.k {
        k = Some(matrix(rows, "gains.k")?);
    }
    if let Some(rows) = &g.l {
        l = Some(matrix(rows, "gains.l")?);
    }
    if g.lift_lqr_gain {
        if g.k.is_some() {
            return Err(Error::Config("gains.k and lift_lqr_gain are mutually exclusive".into()));
        }
        let base = k_lqr
            .as_ref()
            .ok_or_else(|| Error::Config("lift_lqr_gain needs an LQR gain".into()))?;
        expect_shape(base, (m, n), "gains.k_lqr")?;
        let powers = PowerTable::new(model.a(), bounds.h2_i)?;
        k = Some(lift_state_gain(base, &powers, bounds.h1_i, bounds.h2_i)?);
    }
    for (gain, shape, what) in [
        (&k, (m, n), "gains.k"),
        (&k_lqr, (m, n), "gains.k_lqr"),
        (&l, (n, p), "gains.l"),
    ] {
        if let Some(g) = gain {
            expect_shape(g, shape, what)?;
        }
    }
    Ok((k, l, k_lqr))
}

/// Input per unit curvature that holds the plant at an equilibrium with the
/// tracked offset at zero: solves `(A - I) x + B u = -P_r` with
/// `x[offset] = 0` in the least-squares sense.
pub fn feedforward_gain(model: &DiscreteLti, offset_index: usize) -> Result<DVector<f64>> {
    let (n, m) = (model.n(), model.m());
    if linalg::max_abs(model.p_r()) == 0.0 {
        return Ok(DVector::zeros(m));
    }
    let free: Vec<usize> = (0..n).filter(|&i| i != offset_index).collect();
    let a_minus_i = model.a() - DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(n, free.len() + m);
    for (col, &i) in free.iter().enumerate() {
        lhs.set_column(col, &a_minus_i.column(i));
    }
    lhs.view_mut((0, free.len()), (n, m)).copy_from(model.b());
    let sol = linalg::pseudo_inverse(&lhs)? * (-model.p_r());
    Ok(sol.view((free.len(), 0), (m, 1)).column(0).into_owned())
}
