//! Secondary-user energy reports under Rayleigh block fading, plus the
//! falsification models applied by malicious users.
//!
//! Every observation instant draws from its own ChaCha stream keyed by
//! `(master_seed, instant_index)`, so instants can be produced in any order
//! or in parallel and still reproduce bit-exactly.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Sample;

/// Deterministic random source used throughout the simulator.
pub type RandomStream = ChaCha8Rng;

/// Stream for one observation instant of a scenario.
pub fn instant_stream(master_seed: u64, instant_index: usize) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(instant_index as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Reports a scaled-down noise-only level so the PU looks absent.
    AlwaysNo,
    /// Inflates the honest level so the PU looks present.
    AlwaysYes,
    Honest,
}

impl AttackKind {
    pub fn default_severity(self) -> f64 {
        match self {
            AttackKind::AlwaysNo => 0.5,
            AttackKind::AlwaysYes => 2.0,
            AttackKind::Honest => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackSpec {
    kind: AttackKind,
    #[serde(default)]
    severity: Option<f64>,
}

/// Falsification applied by every malicious user of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "AttackSpec", into = "AttackSpec")]
pub struct AttackModel {
    pub kind: AttackKind,
    /// `beta` for always-no, `gamma` for always-yes.
    pub severity: f64,
}

impl From<AttackSpec> for AttackModel {
    fn from(spec: AttackSpec) -> Self {
        AttackModel {
            kind: spec.kind,
            severity: spec.severity.unwrap_or(spec.kind.default_severity()),
        }
    }
}

impl From<AttackModel> for AttackSpec {
    fn from(model: AttackModel) -> Self {
        AttackSpec {
            kind: model.kind,
            severity: Some(model.severity),
        }
    }
}

impl AttackModel {
    pub fn always_no(beta: f64) -> Self {
        AttackModel {
            kind: AttackKind::AlwaysNo,
            severity: beta,
        }
    }

    pub fn always_yes(gamma: f64) -> Self {
        AttackModel {
            kind: AttackKind::AlwaysYes,
            severity: gamma,
        }
    }

    pub fn honest() -> Self {
        AttackModel {
            kind: AttackKind::Honest,
            severity: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.severity;
        let ok = s.is_finite()
            && match self.kind {
                AttackKind::AlwaysNo => s > 0.0 && s < 1.0,
                AttackKind::AlwaysYes => s > 1.0,
                AttackKind::Honest => s > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::config(
                "attack.severity",
                format!("{s} is out of range for {:?}", self.kind),
            ))
        }
    }
}

impl Default for AttackModel {
    fn default() -> Self {
        AttackModel::always_no(0.5)
    }
}

/// Evenly spaced global decision thresholds for ROC sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdGrid {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid {
            start: 0.8,
            stop: 1.4,
            steps: 61,
        }
    }
}

impl ThresholdGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let span = self.stop - self.start;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| self.start + span * (i as f64) / last)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::config("threshold_grid", "bounds must be finite"));
        }
        if self.steps == 0 {
            return Err(Error::config("threshold_grid.steps", "must be positive"));
        }
        if self.steps > 1 && self.stop <= self.start {
            return Err(Error::config(
                "threshold_grid.stop",
                "must exceed start when steps > 1",
            ));
        }
        Ok(())
    }
}

fn default_n_su() -> usize {
    50
}
fn default_snr_db() -> f64 {
    -10.0
}
fn default_samples() -> usize {
    1000
}
fn default_instants() -> usize {
    50
}
fn default_pu_prob() -> f64 {
    1.0
}
fn default_k() -> f64 {
    3.0
}
fn default_iterations() -> usize {
    10
}
fn default_tolerance() -> f64 {
    1e-6
}

/// Full experiment parameterisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_n_su")]
    pub n_su: usize,
    #[serde(default)]
    pub n_malicious: usize,
    /// Average received SNR in dB.
    #[serde(default = "default_snr_db")]
    pub snr_db: f64,
    #[serde(default = "default_samples")]
    pub samples_per_sensing: usize,
    #[serde(default = "default_instants")]
    pub n_instants: usize,
    #[serde(default = "default_pu_prob")]
    pub pu_present_prob: f64,
    #[serde(default)]
    pub attack: AttackModel,
    #[serde(default = "default_k")]
    pub method_multiplier_k: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub threshold_tolerance: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub threshold_grid: ThresholdGrid,
    /// Also exclude reports above the upper threshold.
    #[serde(default)]
    pub two_sided_exclusion: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_su: default_n_su(),
            n_malicious: 0,
            snr_db: default_snr_db(),
            samples_per_sensing: default_samples(),
            n_instants: default_instants(),
            pu_present_prob: default_pu_prob(),
            attack: AttackModel::default(),
            method_multiplier_k: default_k(),
            max_iterations: default_iterations(),
            threshold_tolerance: default_tolerance(),
            master_seed: 0,
            threshold_grid: ThresholdGrid::default(),
            two_sided_exclusion: false,
        }
    }
}

impl ScenarioConfig {
    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        if self.n_su == 0 {
            return Err(Error::config("n_su", "must be positive"));
        }
        if self.n_malicious >= self.n_su {
            return Err(Error::config(
                "n_malicious",
                format!("{} must be below n_su = {}", self.n_malicious, self.n_su),
            ));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("snr_db", "must be finite"));
        }
        if self.samples_per_sensing == 0 {
            return Err(Error::config("samples_per_sensing", "must be positive"));
        }
        if self.n_instants == 0 {
            return Err(Error::config("n_instants", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.pu_present_prob) {
            return Err(Error::config("pu_present_prob", "must lie in [0, 1]"));
        }
        self.attack.validate()?;
        if !(self.method_multiplier_k.is_finite() && self.method_multiplier_k > 0.0) {
            return Err(Error::config("method_multiplier_k", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations", "must be positive"));
        }
        if !(self.threshold_tolerance.is_finite() && self.threshold_tolerance > 0.0) {
            return Err(Error::config("threshold_tolerance", "must be positive"));
        }
        self.threshold_grid.validate()
    }

    /// Ids of the malicious users; fixed for the whole scenario.
    pub fn malicious_ids(&self) -> BTreeSet<usize> {
        (0..self.n_malicious).collect()
    }
}

/// One secondary user's report at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingReport {
    pub su_id: usize,
    pub reported_level: f64,
    /// Pre-falsification level; ground truth only.
    pub honest_level: f64,
    pub is_malicious: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationInstant {
    pub instant_index: usize,
    pub pu_present: bool,
    pub reports: Vec<SensingReport>,
}

impl ObservationInstant {
    pub fn levels(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.reported_level).collect()
    }

    pub fn sample(&self) -> Result<Sample> {
        Sample::new(self.levels())
    }

    pub fn malicious_ids(&self) -> BTreeSet<usize> {
        self.reports
            .iter()
            .filter(|r| r.is_malicious)
            .map(|r| r.su_id)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }
}

/// Circularly-symmetric complex Gaussian gain with `E|h|^2 = 1`.
pub fn rayleigh_gain<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Normalised energy statistic `(1/M) sum |sqrt(snr) h s[m] 1{pu} + n[m]|^2`.
///
/// `s` is a unit-modulus random-phase PU waveform and `n` unit-variance
/// complex white noise, so the expectation is `1` without the PU and
/// `1 + snr |h|^2` with it.
pub fn sense_energy<R: Rng + ?Sized>(
    pu_present: bool,
    gain: Complex64,
    snr_linear: f64,
    m_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(snr_linear >= 0.0 && snr_linear.is_finite()) {
        return Err(Error::invalid(format!(
            "snr must be a non-negative finite linear ratio, got {snr_linear}"
        )));
    }
    if m_samples == 0 {
        return Err(Error::invalid("energy detector needs at least one sample"));
    }
    let amplitude = gain * snr_linear.sqrt();
    let mut energy = 0.0;
    for _ in 0..m_samples {
        let nr: f64 = rng.sample(StandardNormal);
        let ni: f64 = rng.sample(StandardNormal);
        let mut y = Complex64::new(nr, ni) * FRAC_1_SQRT_2;
        if pu_present {
            let phase: f64 = rng.random::<f64>() * TAU;
            y += amplitude * Complex64::from_polar(1.0, phase);
        }
        energy += y.norm_sqr();
    }
    Ok(energy / m_samples as f64)
}

/// Pluggable per-user sensing statistic.
pub trait SensingStatistic: Send + Sync {
    fn measure(
        &self,
        pu_present: bool,
        gain: Complex64,
        snr_linear: f64,
        rng: &mut RandomStream,
    ) -> Result<f64>;
}

/// Default statistic: the normalised energy detector over `samples`
/// complex baseband samples.
#[derive(Debug, Clone, Copy)]
pub struct EnergyDetector {
    pub samples: usize,
}

impl SensingStatistic for EnergyDetector {
    fn measure(
        &self,
        pu_present: bool,
        gain: Complex64,
        snr_linear: f64,
        rng: &mut RandomStream,
    ) -> Result<f64> {
        sense_energy(pu_present, gain, snr_linear, self.samples, rng)
    }
}

/// Level reported by a user given its honest measurement.
///
/// Always-no users report `beta` times a fresh noise-only measurement;
/// always-yes users scale the honest level by `gamma`.
pub fn apply_attack(
    honest_level: f64,
    attack: &AttackModel,
    statistic: &dyn SensingStatistic,
    rng: &mut RandomStream,
) -> Result<f64> {
    if honest_level.is_nan() || honest_level < 0.0 {
        return Err(Error::invalid(format!(
            "honest level must be non-negative, got {honest_level}"
        )));
    }
    match attack.kind {
        AttackKind::Honest => Ok(honest_level),
        AttackKind::AlwaysYes => Ok(attack.severity * honest_level),
        AttackKind::AlwaysNo => {
            let noise_only = statistic.measure(false, Complex64::new(0.0, 0.0), 0.0, rng)?;
            Ok(attack.severity * noise_only)
        }
    }
}

/// Scenario simulator with a configurable sensing statistic.
pub struct Simulator<'a> {
    config: &'a ScenarioConfig,
    statistic: Box<dyn SensingStatistic + 'a>,
}

impl<'a> Simulator<'a> {
    /// Uses the energy detector with `config.samples_per_sensing` samples.
    pub fn new(config: &'a ScenarioConfig) -> Result<Self> {
        let samples = config.samples_per_sensing;
        Self::with_statistic(config, EnergyDetector { samples })
    }

    pub fn with_statistic<S: SensingStatistic + 'a>(
        config: &'a ScenarioConfig,
        statistic: S,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Simulator {
            config,
            statistic: Box::new(statistic),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        self.config
    }

    pub fn instant(&self, instant_index: usize) -> Result<ObservationInstant> {
        let cfg = self.config;
        if instant_index >= cfg.n_instants {
            return Err(Error::invalid(format!(
                "instant {instant_index} is outside 0..{}",
                cfg.n_instants
            )));
        }
        let mut rng = instant_stream(cfg.master_seed, instant_index);
        let pu_present = rng.random::<f64>() < cfg.pu_present_prob;
        let snr = cfg.snr_linear();
        let mut reports = Vec::with_capacity(cfg.n_su);
        for su_id in 0..cfg.n_su {
            let gain = rayleigh_gain(&mut rng);
            let honest_level = self.statistic.measure(pu_present, gain, snr, &mut rng)?;
            let is_malicious = su_id < cfg.n_malicious;
            let reported_level = if is_malicious {
                apply_attack(honest_level, &cfg.attack, self.statistic.as_ref(), &mut rng)?
            } else {
                honest_level
            };
            reports.push(SensingReport {
                su_id,
                reported_level,
                honest_level,
                is_malicious,
            });
        }
        Ok(ObservationInstant {
            instant_index,
            pu_present,
            reports,
        })
    }

    /// All instants in index order.
    pub fn run(&self, parallel: bool) -> Result<Vec<ObservationInstant>> {
        let n = self.config.n_instants;
        if parallel {
            (0..n).into_par_iter().map(|i| self.instant(i)).collect()
        } else {
            (0..n).map(|i| self.instant(i)).collect()
        }
    }
}

/// Simulates one instant with the default energy detector.
pub fn simulate_instant(
    config: &ScenarioConfig,
    instant_index: usize,
) -> Result<ObservationInstant> {
    Simulator::new(config)?.instant(instant_index)
}
