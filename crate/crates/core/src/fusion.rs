//! Averaging fusion at the control centre and the evaluation metrics:
//! correct-detection counts and detection-probability sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;

use crate::detection::{detect_instant, DetectorParams, ThresholdMethod, ThresholdResult};
use crate::error::{Error, Result};
use crate::sim::ObservationInstant;

/// An exclusion method, or the with-malicious baseline that keeps every
/// report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Method(ThresholdMethod),
    WithMalicious,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Method(m) => m.short_name(),
            Scheme::WithMalicious => "wm",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<ThresholdMethod> for Scheme {
    fn from(m: ThresholdMethod) -> Self {
        Scheme::Method(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionOutcome {
    pub fused_level: f64,
    pub decided_present: bool,
    pub global_threshold: f64,
}

/// Mean reported level over the users not in `excluded`.
pub fn fuse_average(instant: &ObservationInstant, excluded: &BTreeSet<usize>) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in instant
        .reports
        .iter()
        .filter(|r| !excluded.contains(&r.su_id))
    {
        sum += r.reported_level;
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid(format!(
            "instant {} has every report excluded",
            instant.instant_index
        )));
    }
    Ok(sum / count as f64)
}

/// Global PU decision: present iff the fused level reaches the threshold.
pub fn decide(
    instant: &ObservationInstant,
    excluded: &BTreeSet<usize>,
    global_threshold: f64,
) -> Result<FusionOutcome> {
    let fused_level = fuse_average(instant, excluded)?;
    Ok(FusionOutcome {
        fused_level,
        decided_present: fused_level >= global_threshold,
        global_threshold,
    })
}

/// Per-instant outcome of applying one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantEvaluation {
    pub instant_index: usize,
    pub pu_present: bool,
    pub flagged: BTreeSet<usize>,
    pub truth: BTreeSet<usize>,
    pub fused_level: f64,
    /// `None` for the with-malicious baseline.
    pub threshold: Option<ThresholdResult>,
}

fn evaluate_one(
    instant: &ObservationInstant,
    scheme: Scheme,
    params: &DetectorParams,
) -> Result<InstantEvaluation> {
    let threshold = match scheme {
        Scheme::Method(m) => Some(detect_instant(instant, m, params)?),
        Scheme::WithMalicious => None,
    };
    let flagged = threshold
        .as_ref()
        .map(|t| t.excluded_ids.clone())
        .unwrap_or_default();
    Ok(InstantEvaluation {
        instant_index: instant.instant_index,
        pu_present: instant.pu_present,
        fused_level: fuse_average(instant, &flagged)?,
        truth: instant.malicious_ids(),
        flagged,
        threshold,
    })
}

/// Applies `scheme` to every instant; output order follows the input.
pub fn evaluate(
    instants: &[ObservationInstant],
    scheme: Scheme,
    params: &DetectorParams,
    parallel: bool,
) -> Result<Vec<InstantEvaluation>> {
    if parallel {
        instants
            .par_iter()
            .map(|i| evaluate_one(i, scheme, params))
            .collect()
    } else {
        instants
            .iter()
            .map(|i| evaluate_one(i, scheme, params))
            .collect()
    }
}

fn decision_rate<'a>(
    fused: impl Iterator<Item = &'a InstantEvaluation>,
    global_threshold: f64,
) -> Option<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for e in fused {
        total += 1;
        if e.fused_level >= global_threshold {
            hits += 1;
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Fraction of PU-present instants decided present.
pub fn pd_from_evaluations(evals: &[InstantEvaluation], global_threshold: f64) -> Result<f64> {
    decision_rate(evals.iter().filter(|e| e.pu_present), global_threshold)
        .ok_or_else(|| Error::invalid("no instant has the primary user present"))
}

/// Fraction of PU-absent instants decided present, if any are absent.
pub fn pfa_from_evaluations(evals: &[InstantEvaluation], global_threshold: f64) -> Option<f64> {
    decision_rate(evals.iter().filter(|e| !e.pu_present), global_threshold)
}

pub fn detection_probability(
    instants: &[ObservationInstant],
    scheme: Scheme,
    global_threshold: f64,
    params: &DetectorParams,
) -> Result<f64> {
    if !instants.iter().any(|i| i.pu_present) {
        return Err(Error::invalid("no instant has the primary user present"));
    }
    pd_from_evaluations(
        &evaluate(instants, scheme, params, false)?,
        global_threshold,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub pd: f64,
    /// Undefined when every instant has the PU present.
    pub pfa: Option<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("threshold grid is empty"));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("threshold grid has non-finite points"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("threshold grid must be strictly ascending"));
    }
    Ok(())
}

pub fn roc_from_evaluations(evals: &[InstantEvaluation], grid: &[f64]) -> Result<Vec<RocPoint>> {
    check_grid(grid)?;
    grid.iter()
        .map(|&threshold| {
            Ok(RocPoint {
                threshold,
                pd: pd_from_evaluations(evals, threshold)?,
                pfa: pfa_from_evaluations(evals, threshold),
            })
        })
        .collect()
}

/// Detection probability at each point of an ascending threshold grid.
pub fn roc_sweep(
    instants: &[ObservationInstant],
    scheme: Scheme,
    grid: &[f64],
    params: &DetectorParams,
) -> Result<Vec<RocPoint>> {
    check_grid(grid)?;
    roc_from_evaluations(&evaluate(instants, scheme, params, false)?, grid)
}

/// How often a scheme identified the malicious users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionScore {
    /// Instants whose flagged set equals the true malicious set.
    pub correct_setmatch: usize,
    /// Instants that flagged the right number of users.
    pub correct_countmatch: usize,
    /// flagged count -> number of instants.
    pub flag_histogram: BTreeMap<usize, usize>,
    pub n_instants: usize,
}

pub fn score_evaluations(evals: &[InstantEvaluation]) -> DetectionScore {
    let mut score = DetectionScore {
        correct_setmatch: 0,
        correct_countmatch: 0,
        flag_histogram: BTreeMap::new(),
        n_instants: evals.len(),
    };
    for e in evals {
        if e.flagged == e.truth {
            score.correct_setmatch += 1;
        }
        if e.flagged.len() == e.truth.len() {
            score.correct_countmatch += 1;
        }
        *score.flag_histogram.entry(e.flagged.len()).or_default() += 1;
    }
    score
}

/// Number of instants where `method` flagged exactly the malicious users.
pub fn correct_detection_count(
    instants: &[ObservationInstant],
    method: ThresholdMethod,
    params: &DetectorParams,
) -> Result<DetectionScore> {
    Ok(score_evaluations(&evaluate(
        instants,
        Scheme::Method(method),
        params,
        false,
    )?))
}

/// Full evaluation of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMetrics {
    pub scheme: Scheme,
    pub score: DetectionScore,
    pub pd_curve: Vec<RocPoint>,
}

pub fn detection_metrics(
    evals: &[InstantEvaluation],
    scheme: Scheme,
    grid: &[f64],
) -> Result<DetectionMetrics> {
    let pd_curve = if evals.iter().any(|e| e.pu_present) {
        roc_from_evaluations(evals, grid)?
    } else {
        Vec::new()
    };
    Ok(DetectionMetrics {
        scheme,
        score: score_evaluations(evals),
        pd_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SensingReport;

    fn instant(levels: &[f64], n_mal: usize, pu_present: bool) -> ObservationInstant {
        ObservationInstant {
            instant_index: 0,
            pu_present,
            reports: levels
                .iter()
                .enumerate()
                .map(|(su_id, &l)| SensingReport {
                    su_id,
                    reported_level: l,
                    honest_level: l,
                    is_malicious: su_id < n_mal,
                })
                .collect(),
        }
    }

    #[test]
    fn fuse_examples() {
        let all_c = instant(&[2.5; 6], 0, true);
        assert_eq!(fuse_average(&all_c, &BTreeSet::new()).unwrap(), 2.5);
        let three = instant(&[1.0, 2.0, 3.0], 0, true);
        assert_eq!(fuse_average(&three, &BTreeSet::from([2])).unwrap(), 1.5);
        assert!(fuse_average(&three, &BTreeSet::from([0, 1, 2])).is_err());
    }

    #[test]
    fn decision_boundary_is_inclusive() {
        let three = instant(&[1.0, 2.0, 3.0], 0, true);
        let out = decide(&three, &BTreeSet::new(), 2.0).unwrap();
        assert!(out.decided_present);
        assert!(
            !decide(&three, &BTreeSet::new(), 2.0 + 1e-12)
                .unwrap()
                .decided_present
        );
    }

    #[test]
    fn pd_boundaries() {
        let insts = vec![
            instant(&[1.0, 1.1, 1.2], 0, true),
            instant(&[0.9, 1.0, 1.3], 0, true),
        ];
        let p = DetectorParams::default();
        assert_eq!(
            detection_probability(&insts, Scheme::WithMalicious, -1.0, &p).unwrap(),
            1.0
        );
        assert_eq!(
            detection_probability(&insts, Scheme::WithMalicious, 10.0, &p).unwrap(),
            0.0
        );
        let absent = vec![instant(&[1.0, 1.1, 1.2], 0, false)];
        assert!(detection_probability(&absent, Scheme::WithMalicious, 1.0, &p).is_err());
    }

    #[test]
    fn roc_grid_checks() {
        let insts = vec![instant(&[1.0, 1.1, 1.2], 0, true)];
        let p = DetectorParams::default();
        assert!(roc_sweep(&insts, Scheme::WithMalicious, &[], &p).is_err());
        assert!(roc_sweep(&insts, Scheme::WithMalicious, &[1.0, 0.5], &p).is_err());
        assert!(roc_sweep(&insts, Scheme::WithMalicious, &[1.0, 1.0], &p).is_err());
        let one = roc_sweep(&insts, Scheme::WithMalicious, &[1.05], &p).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(
            one[0].pd,
            detection_probability(&insts, Scheme::WithMalicious, 1.05, &p).unwrap()
        );
        assert_eq!(one[0].pfa, None);
    }

    #[test]
    fn set_match_is_strict() {
        let mk = |flagged: &[usize]| InstantEvaluation {
            instant_index: 0,
            pu_present: true,
            flagged: flagged.iter().copied().collect(),
            truth: BTreeSet::from([0, 1]),
            fused_level: 1.0,
            threshold: None,
        };
        let s = score_evaluations(&[mk(&[0, 1]), mk(&[0, 1, 2]), mk(&[0, 5])]);
        assert_eq!(s.correct_setmatch, 1);
        assert_eq!(s.correct_countmatch, 2);
        assert_eq!(s.flag_histogram, BTreeMap::from([(2, 2), (3, 1)]));
        assert_eq!(s.flag_histogram.values().sum::<usize>(), s.n_instants);
    }

    #[test]
    fn vacuous_correctness_without_attackers() {
        let insts: Vec<_> = (0..5).map(|_| instant(&[1.0; 8], 0, true)).collect();
        let s = correct_detection_count(&insts, ThresholdMethod::Mad, &DetectorParams::default())
            .unwrap();
        assert_eq!(s.correct_setmatch, 5);
    }
}
