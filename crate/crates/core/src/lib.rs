//! Malicious-user detection for cooperative spectrum sensing.
//!
//! Secondary users report channel energy levels to a fusion centre. Some of
//! them falsify their reports. This crate simulates the reports under
//! Rayleigh fading, flags suspicious users with five robust outlier
//! techniques (mean difference, MAD, Sn, Qn and the medcouple adjusted
//! boxplot), fuses the surviving reports by averaging, and scores each
//! technique by correct-detection counts and detection-probability sweeps.
//!
//! Module map:
//!
//! - [`estimators`]: scale and skewness estimators, quartiles, fences.
//! - [`sim`]: scenario configuration, fading, energy detector, attacks.
//! - [`detection`]: exclusion thresholds and the iterative refinement loop.
//! - [`fusion`]: averaging fusion, Pd/Pfa sweeps, correct-detection scores.
//! - [`config`] and [`harness`]: TOML configs, scenario runs, CSV output.

pub mod config;
pub mod detection;
pub mod error;
pub mod estimators;
pub mod fusion;
pub mod harness;
pub mod sim;

pub use config::{load_config, parse_config};
pub use detection::{
    classify_reports, detect_instant, iterative_threshold, lower_threshold, DetectorParams,
    StopReason, ThresholdMethod, ThresholdResult,
};
pub use error::{Error, Result};
pub use estimators::{
    adjusted_fences, mad, mean_difference, medcouple, qn_estimator, quartiles, sn_estimator,
    MedcoupleFences, Sample,
};
pub use fusion::{
    correct_detection_count, detection_probability, fuse_average, roc_sweep, DetectionMetrics,
    DetectionScore, FusionOutcome, RocPoint, Scheme,
};
pub use harness::{evaluate_scenario, run_scenario, sweep, RunManifest, RunOptions};
pub use sim::{
    apply_attack, rayleigh_gain, sense_energy, simulate_instant, AttackKind, AttackModel,
    ObservationInstant, ScenarioConfig, SensingReport, SensingStatistic, Simulator,
};
