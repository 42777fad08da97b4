//! Exclusion thresholds built from the robust estimators, the iterative
//! refinement loop, and report classification.
//!
//! A report is flagged when its level is strictly below the lower
//! threshold. For MAD, Sn, Qn and MD the threshold is `location - k * sigma`
//! with a Gaussian-consistent scale; for the medcouple it is the adjusted
//! lower fence and `k` is unused.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, Sample, MAD_CONSISTENCY, MD_CONSISTENCY};
use crate::sim::{ObservationInstant, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    Medcouple,
    MeanDifference,
    Mad,
    Sn,
    Qn,
}

impl ThresholdMethod {
    /// Column order used by every output table.
    pub const ALL: [ThresholdMethod; 5] = [
        ThresholdMethod::Medcouple,
        ThresholdMethod::MeanDifference,
        ThresholdMethod::Mad,
        ThresholdMethod::Sn,
        ThresholdMethod::Qn,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ThresholdMethod::Medcouple => "mc",
            ThresholdMethod::MeanDifference => "md",
            ThresholdMethod::Mad => "mad",
            ThresholdMethod::Sn => "sn",
            ThresholdMethod::Qn => "qn",
        }
    }

    /// Smallest sample the underlying estimator accepts.
    pub fn min_sample_len(self) -> usize {
        match self {
            ThresholdMethod::MeanDifference | ThresholdMethod::Mad => 1,
            ThresholdMethod::Sn | ThresholdMethod::Qn => 2,
            ThresholdMethod::Medcouple => 3,
        }
    }
}

impl fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ThresholdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ThresholdMethod::ALL
            .into_iter()
            .find(|m| m.short_name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

/// Parameters of the iterative exclusion loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub k: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub two_sided: bool,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            k: 3.0,
            max_iterations: 10,
            tolerance: 1e-6,
            two_sided: false,
        }
    }
}

impl DetectorParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        DetectorParams {
            k: cfg.method_multiplier_k,
            max_iterations: cfg.max_iterations,
            tolerance: cfg.threshold_tolerance,
            two_sided: cfg.two_sided_exclusion,
        }
    }

    pub fn single_pass(k: f64) -> Self {
        DetectorParams {
            k,
            max_iterations: 1,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::invalid(format!(
                "k must be positive, got {}",
                self.k
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        Ok(())
    }
}

/// Why the iterative loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The excluded set did not change.
    Converged,
    /// Two successive thresholds differed by less than the tolerance.
    Tolerance,
    MaxIterations,
    /// Another round would leave too few values for the estimator.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub method: ThresholdMethod,
    pub lower_threshold: f64,
    /// Only populated for two-sided exclusion.
    pub upper_threshold: Option<f64>,
    pub iterations_used: usize,
    pub threshold_trace: Vec<f64>,
    /// Indices into the sample (equal to `su_id` for simulated instants).
    pub excluded_ids: BTreeSet<usize>,
    pub n_reports: usize,
    pub stop: StopReason,
}

impl ThresholdResult {
    pub fn truncated(&self) -> bool {
        self.stop == StopReason::Truncated
    }
}

/// `(lower, upper)` exclusion bounds for one pass.
fn bounds(sample: &Sample, method: ThresholdMethod, k: f64) -> Result<(f64, f64)> {
    let (center, sigma) = match method {
        ThresholdMethod::Medcouple => {
            let f = estimators::adjusted_fences(sample)?;
            return Ok((f.lower_fence, f.upper_fence));
        }
        ThresholdMethod::MeanDifference => (
            estimators::mean(sample)?,
            MD_CONSISTENCY * estimators::mean_difference(sample)?,
        ),
        ThresholdMethod::Mad => (
            estimators::median(sample)?,
            MAD_CONSISTENCY * estimators::mad(sample)?,
        ),
        ThresholdMethod::Sn => (
            estimators::median(sample)?,
            estimators::sn_estimator(sample)?,
        ),
        ThresholdMethod::Qn => (
            estimators::median(sample)?,
            estimators::qn_estimator(sample)?,
        ),
    };
    Ok((center - k * sigma, center + k * sigma))
}

/// Single-pass lower exclusion threshold.
pub fn lower_threshold(sample: &Sample, method: ThresholdMethod, k: f64) -> Result<f64> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid(format!("k must be positive, got {k}")));
    }
    bounds(sample, method, k).map(|(lo, _)| lo)
}

/// Upper counterpart of [`lower_threshold`], used for two-sided exclusion.
pub fn upper_threshold(sample: &Sample, method: ThresholdMethod, k: f64) -> Result<f64> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid(format!("k must be positive, got {k}")));
    }
    bounds(sample, method, k).map(|(_, hi)| hi)
}

/// Repeatedly recomputes the threshold on the reports that survived the
/// previous round.
///
/// Each round evaluates the estimator on the currently retained values and
/// then re-partitions the full sample against the new threshold, so the
/// excluded set is always exactly the values below the final threshold.
/// The loop stops when the excluded set is unchanged, when two successive
/// thresholds are within `tolerance`, or after `max_iterations` rounds. A
/// round that would leave fewer values than the estimator needs is
/// discarded and the result is marked truncated.
pub fn iterative_threshold(
    sample: &Sample,
    method: ThresholdMethod,
    params: &DetectorParams,
) -> Result<ThresholdResult> {
    params.validate()?;
    let values = sample.values();
    let n = values.len();
    let min_len = method.min_sample_len();
    if n < min_len {
        return Err(Error::invalid(format!(
            "{method} needs at least {min_len} reports, got {n}"
        )));
    }

    let mut retained: Vec<f64> = values.to_vec();
    let mut excluded: BTreeSet<usize> = BTreeSet::new();
    let mut trace: Vec<f64> = Vec::new();
    let mut upper: Option<f64> = None;
    let mut stop = StopReason::MaxIterations;

    for round in 1..=params.max_iterations {
        let current = Sample::new(std::mem::take(&mut retained))?;
        let (lo, hi) = match bounds(&current, method, params.k) {
            Ok(b) => b,
            Err(e) if round == 1 => return Err(e),
            Err(_) => {
                stop = StopReason::Truncated;
                break;
            }
        };
        let rejects = |v: f64| v < lo || (params.two_sided && v > hi);
        let next_excluded: BTreeSet<usize> = (0..n).filter(|&i| rejects(values[i])).collect();
        let kept = n - next_excluded.len();
        if kept < min_len && round > 1 {
            stop = StopReason::Truncated;
            break;
        }

        let previous = trace.last().copied();
        let unchanged = next_excluded == excluded;
        trace.push(lo);
        upper = params.two_sided.then_some(hi);
        excluded = next_excluded;
        retained = (0..n)
            .filter(|i| !excluded.contains(i))
            .map(|i| values[i])
            .collect();

        if kept < min_len {
            stop = StopReason::Truncated;
            break;
        }
        if unchanged {
            stop = StopReason::Converged;
            break;
        }
        if previous.is_some_and(|p| (lo - p).abs() < params.tolerance) {
            stop = StopReason::Tolerance;
            break;
        }
    }

    Ok(ThresholdResult {
        method,
        lower_threshold: *trace.last().expect("at least one round completes"),
        upper_threshold: upper,
        iterations_used: trace.len(),
        threshold_trace: trace,
        excluded_ids: excluded,
        n_reports: n,
        stop,
    })
}

/// Runs [`iterative_threshold`] over an instant's reported levels.
pub fn detect_instant(
    instant: &ObservationInstant,
    method: ThresholdMethod,
    params: &DetectorParams,
) -> Result<ThresholdResult> {
    let mut result = iterative_threshold(&instant.sample()?, method, params)?;
    result.excluded_ids = result
        .excluded_ids
        .iter()
        .map(|&i| instant.reports[i].su_id)
        .collect();
    Ok(result)
}

/// Users flagged malicious by `result` for this instant.
pub fn classify_reports(
    instant: &ObservationInstant,
    result: &ThresholdResult,
) -> Result<BTreeSet<usize>> {
    if instant.len() != result.n_reports {
        return Err(Error::invalid(format!(
            "threshold result covers {} reports but the instant has {}",
            result.n_reports,
            instant.len()
        )));
    }
    Ok(result.excluded_ids.clone())
}
