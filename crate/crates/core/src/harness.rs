//! Scenario execution and CSV emission.
//!
//! Output files (`\n` line endings, reals with 17 significant digits):
//!
//! | file              | columns                                                       |
//! |-------------------|---------------------------------------------------------------|
//! | `thresholds.csv`  | `instant,method,threshold,iterations`                         |
//! | `flag_counts.csv` | `method,flagged_count,occurrences`                            |
//! | `table1.csv`      | `n_malicious,method,correct_setmatch,correct_countmatch,n_instants` |
//! | `roc.csv`         | `method,threshold,pd,pfa`                                     |
//! | `manifest.json`   | config digest, seed, tool version, every file with its SHA-256 |
//!
//! Rows are ordered by instant and then by method, independent of how the
//! work was scheduled.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::{DetectorParams, ThresholdMethod};
use crate::error::{Error, Result};
use crate::fusion::{detection_metrics, evaluate, DetectionMetrics, InstantEvaluation, Scheme};
use crate::sim::{ObservationInstant, ScenarioConfig, Simulator};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const THRESHOLDS_HEADER: [&str; 4] = ["instant", "method", "threshold", "iterations"];
pub const FLAG_COUNTS_HEADER: [&str; 3] = ["method", "flagged_count", "occurrences"];
pub const TABLE1_HEADER: [&str; 5] = [
    "n_malicious",
    "method",
    "correct_setmatch",
    "correct_countmatch",
    "n_instants",
];
pub const ROC_HEADER: [&str; 4] = ["method", "threshold", "pd", "pfa"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub master_seed: u64,
    pub artifact_paths: Vec<Artifact>,
    pub tool_version: String,
}

/// Everything computed for one scenario, before serialisation.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub instants: Vec<ObservationInstant>,
    /// One entry per requested method, in request order.
    pub methods: Vec<(ThresholdMethod, Vec<InstantEvaluation>)>,
    pub baseline: Vec<InstantEvaluation>,
    pub grid: Vec<f64>,
}

impl ScenarioReport {
    pub fn evaluations(&self, method: ThresholdMethod) -> Option<&[InstantEvaluation]> {
        self.methods
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, e)| e.as_slice())
    }

    /// Metrics for every method followed by the with-malicious baseline.
    pub fn metrics(&self) -> Result<Vec<DetectionMetrics>> {
        let mut out: Vec<DetectionMetrics> = self
            .methods
            .iter()
            .map(|(m, evals)| detection_metrics(evals, Scheme::Method(*m), &self.grid))
            .collect::<Result<_>>()?;
        out.push(detection_metrics(
            &self.baseline,
            Scheme::WithMalicious,
            &self.grid,
        )?);
        Ok(out)
    }

    pub fn metrics_for(&self, scheme: Scheme) -> Result<DetectionMetrics> {
        let evals = match scheme {
            Scheme::WithMalicious => &self.baseline[..],
            Scheme::Method(m) => self
                .evaluations(m)
                .ok_or_else(|| Error::invalid(format!("method {m} was not evaluated")))?,
        };
        detection_metrics(evals, scheme, &self.grid)
    }
}

fn dedup_methods(methods: &[ThresholdMethod]) -> Vec<ThresholdMethod> {
    let mut out = Vec::new();
    for &m in methods {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// Simulates every instant and applies each method plus the baseline.
pub fn evaluate_scenario(
    config: &ScenarioConfig,
    methods: &[ThresholdMethod],
    options: RunOptions,
) -> Result<ScenarioReport> {
    let methods = dedup_methods(methods);
    if methods.is_empty() {
        return Err(Error::config("methods", "at least one method is required"));
    }
    let instants = Simulator::new(config)?.run(options.parallel)?;
    let params = DetectorParams::from_config(config);
    let evaluated = methods
        .iter()
        .map(|&m| {
            Ok((
                m,
                evaluate(&instants, Scheme::Method(m), &params, options.parallel)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let baseline = evaluate(&instants, Scheme::WithMalicious, &params, options.parallel)?;
    let report = ScenarioReport {
        config: config.clone(),
        instants,
        methods: evaluated,
        baseline,
        grid: config.threshold_grid.points(),
    };
    check_invariants(&report)?;
    Ok(report)
}

fn check_invariants(report: &ScenarioReport) -> Result<()> {
    let n = report.config.n_instants;
    for (method, evals) in &report.methods {
        if evals.len() != n {
            return Err(Error::Invariant(format!(
                "{method}: {} evaluations for {n} instants",
                evals.len()
            )));
        }
        for e in evals {
            let t = e
                .threshold
                .as_ref()
                .ok_or_else(|| Error::Invariant(format!("{method}: missing threshold result")))?;
            if t.iterations_used != t.threshold_trace.len() {
                return Err(Error::Invariant(format!(
                    "{method}: iteration count disagrees with trace at instant {}",
                    e.instant_index
                )));
            }
            let inst = &report.instants[e.instant_index];
            for &id in &e.flagged {
                let level = inst.reports[id].reported_level;
                let above_upper = t.upper_threshold.is_some_and(|u| level > u);
                if !(level < t.lower_threshold || above_upper) {
                    return Err(Error::Invariant(format!(
                        "{method}: user {id} flagged at instant {} but inside the thresholds",
                        e.instant_index
                    )));
                }
            }
        }
    }
    for m in report.metrics()? {
        if m.score.flag_histogram.values().sum::<usize>() != n {
            return Err(Error::Invariant(format!(
                "{}: flag histogram does not cover every instant",
                m.scheme
            )));
        }
        if m.pd_curve.windows(2).any(|w| w[1].pd > w[0].pd) {
            return Err(Error::Invariant(format!(
                "{}: detection probability increases with threshold",
                m.scheme
            )));
        }
    }
    Ok(())
}

/// Seventeen significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let run = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
        w.write_record(header)?;
        fill(w)?;
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(|e| Error::Invariant(format!("csv encoding failed: {e}")))?;
    w.into_inner()
        .map_err(|e| Error::Invariant(format!("csv encoding failed: {e}")))
}

pub fn thresholds_csv(report: &ScenarioReport) -> Result<Vec<u8>> {
    csv_bytes(&THRESHOLDS_HEADER, |w| {
        for i in 0..report.instants.len() {
            for (method, evals) in &report.methods {
                let t = evals[i].threshold.as_ref().expect("method evaluation");
                w.write_record([
                    i.to_string(),
                    method.short_name().to_string(),
                    format_real(t.lower_threshold),
                    t.iterations_used.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn flag_counts_csv(metrics: &[DetectionMetrics]) -> Result<Vec<u8>> {
    csv_bytes(&FLAG_COUNTS_HEADER, |w| {
        for m in metrics.iter().filter(|m| m.scheme != Scheme::WithMalicious) {
            for (count, occ) in &m.score.flag_histogram {
                w.write_record([m.scheme.name(), &count.to_string(), &occ.to_string()])?;
            }
        }
        Ok(())
    })
}

fn table1_rows(n_malicious: usize, metrics: &[DetectionMetrics]) -> Vec<[String; 5]> {
    metrics
        .iter()
        .filter(|m| m.scheme != Scheme::WithMalicious)
        .map(|m| {
            [
                n_malicious.to_string(),
                m.scheme.name().to_string(),
                m.score.correct_setmatch.to_string(),
                m.score.correct_countmatch.to_string(),
                m.score.n_instants.to_string(),
            ]
        })
        .collect()
}

pub fn table1_csv(blocks: &[(usize, Vec<DetectionMetrics>)]) -> Result<Vec<u8>> {
    csv_bytes(&TABLE1_HEADER, |w| {
        for (n_mal, metrics) in blocks {
            for row in table1_rows(*n_mal, metrics) {
                w.write_record(&row)?;
            }
        }
        Ok(())
    })
}

pub fn roc_csv(metrics: &[DetectionMetrics]) -> Result<Vec<u8>> {
    csv_bytes(&ROC_HEADER, |w| {
        for m in metrics {
            for p in &m.pd_curve {
                w.write_record([
                    m.scheme.name().to_string(),
                    format_real(p.threshold),
                    format_real(p.pd),
                    p.pfa.map(format_real).unwrap_or_default(),
                ])?;
            }
        }
        Ok(())
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct OutputDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutputDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn finish(mut self, config_digest: String, master_seed: u64) -> Result<RunManifest> {
        let manifest = RunManifest {
            config_digest,
            master_seed,
            artifact_paths: std::mem::take(&mut self.artifacts),
            tool_version: TOOL_VERSION.to_string(),
        };
        let mut json = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Invariant(format!("manifest encoding failed: {e}")))?;
        json.push(b'\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

#[derive(Serialize)]
struct DigestInput<'a> {
    config: &'a ScenarioConfig,
    methods: Vec<&'static str>,
    malicious_counts: Option<&'a [usize]>,
}

/// SHA-256 over the canonical JSON of the resolved configuration.
pub fn config_digest(
    config: &ScenarioConfig,
    methods: &[ThresholdMethod],
    malicious_counts: Option<&[usize]>,
) -> String {
    let input = DigestInput {
        config,
        methods: dedup_methods(methods)
            .iter()
            .map(|m| m.short_name())
            .collect(),
        malicious_counts,
    };
    sha256_hex(&serde_json::to_vec(&input).expect("config serialises"))
}

fn write_scenario(
    out: &mut OutputDir,
    prefix: &str,
    report: &ScenarioReport,
) -> Result<Vec<DetectionMetrics>> {
    let metrics = report.metrics()?;
    out.write(&format!("{prefix}thresholds.csv"), &thresholds_csv(report)?)?;
    out.write(
        &format!("{prefix}flag_counts.csv"),
        &flag_counts_csv(&metrics)?,
    )?;
    Ok(metrics)
}

/// Runs one scenario and writes its CSV files and manifest into `out_dir`.
pub fn run_scenario(
    config: &ScenarioConfig,
    methods: &[ThresholdMethod],
    out_dir: &Path,
    options: RunOptions,
) -> Result<RunManifest> {
    let report = evaluate_scenario(config, methods, options)?;
    let mut out = OutputDir::create(out_dir)?;
    let metrics = write_scenario(&mut out, "", &report)?;
    out.write(
        "table1.csv",
        &table1_csv(&[(config.n_malicious, metrics.clone())])?,
    )?;
    out.write("roc.csv", &roc_csv(&metrics)?)?;
    out.finish(config_digest(config, methods, None), config.master_seed)
}

/// Seed of the sub-scenario with `n_malicious` attackers.
pub fn derive_seed(master_seed: u64, n_malicious: usize) -> u64 {
    // splitmix64 finaliser over the combined key
    let mut z = master_seed ^ (n_malicious as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-scenario configuration used by [`sweep`] for one attacker count.
pub fn sweep_config(base: &ScenarioConfig, n_malicious: usize) -> ScenarioConfig {
    ScenarioConfig {
        n_malicious,
        master_seed: derive_seed(base.master_seed, n_malicious),
        ..base.clone()
    }
}

/// One scenario per attacker count, each under `m<count>/`, with an
/// aggregated `table1.csv` at the top level.
pub fn sweep(
    config_base: &ScenarioConfig,
    malicious_counts: &[usize],
    methods: &[ThresholdMethod],
    out_dir: &Path,
    options: RunOptions,
) -> Result<RunManifest> {
    if malicious_counts.is_empty() {
        return Err(Error::config("malicious", "at least one count is required"));
    }
    let mut configs = Vec::with_capacity(malicious_counts.len());
    for &count in malicious_counts {
        let cfg = sweep_config(config_base, count);
        cfg.validate()?;
        configs.push(cfg);
    }
    let mut out = OutputDir::create(out_dir)?;
    let mut blocks = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let report = evaluate_scenario(cfg, methods, options)?;
        let prefix = format!("m{}/", cfg.n_malicious);
        let metrics = write_scenario(&mut out, &prefix, &report)?;
        out.write(&format!("{prefix}roc.csv"), &roc_csv(&metrics)?)?;
        blocks.push((cfg.n_malicious, metrics));
    }
    out.write("table1.csv", &table1_csv(&blocks)?)?;
    out.finish(
        config_digest(config_base, methods, Some(malicious_counts)),
        config_base.master_seed,
    )
}
