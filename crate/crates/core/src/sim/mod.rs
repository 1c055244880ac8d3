//! Closed-loop lane-change scenarios: configuration, reference generation,
//! the LQR baseline, the simulation loop, logs, metrics and batches.

mod batch;
mod config;
mod engine;
mod log;
mod lqr;
mod metrics;
mod reference;

pub use batch::{batch_runs, trial_seeds, BatchResult, TrialResult};
pub use config::{
    desk_sim, feedforward_gain, field_test, BatchConfig, ControllerKind, DelayConfig, GainPreset, GainsConfig,
    LqrWeights, NoiseConfig, PlantConfig, PlantKind, ReferenceConfig, ReferenceKind, Scenario, ScenarioConfig,
    StabilityConfig, Truth, TruthModel, UncertaintyConfig, VehiclePreset, ZhatInit,
};
pub use engine::{run_closed_loop, run_with, DelayTraces};
pub use log::{LogMeta, SimulationLog, StepRecord};
pub use lqr::dlqr;
pub use metrics::{compute_metrics, summarize, Metrics, MetricsSummary, Quartiles, DIVERGENCE_THRESHOLD};
pub use reference::{gen_lane_change, LaneChange, ReferenceTrajectory};
