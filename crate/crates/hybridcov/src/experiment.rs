//! Config-driven Monte-Carlo experiments.
//!
//! A [`Preset`] bundles a scenario with sweep and trial defaults; a JSON
//! config picks a preset and may override the knobs. [`run_experiment`]
//! evaluates every (algorithm, sweep point) cell over seeded trials and
//! aggregates each metric to mean and standard error; [`emit_csv`] writes the
//! result table. Output is byte-reproducible: every trial derives its own RNG
//! stream from the run seed, and reductions happen in fixed trial order, so
//! the worker thread count never changes the bytes.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::analysis::{
    mc_cdf, paired_ds_dc, rho_ds_upper_bound, success_prob_per_iteration, AnalysisError,
    CoherenceParams, EmpiricalCdf, MetricKind, SupportAlgorithm,
};
use crate::channel::{
    build_dictionary, draw_channel, draw_mimo_channel, draw_wideband_channel, Dictionary,
    MimoDims, ScenarioConfig, ScenarioError, WidebandDims, WidebandRealization,
};
use crate::metrics::{metric_report_low_rank, LowRank, MetricReport};
use crate::numerics::{mul_vec, select_columns, CMat, CVec, Hermitian, NumericsError};
use crate::recovery::{comp, dcomp, dsomp, omp, somp, wb_dcomp, CovarianceEstimate};
use crate::sensing::{draw_mimo_frame, KronAggregateOperator, MimoMode, SensingEnsemble};
use crate::simulate::{simulate_mimo, simulate_narrowband, simulate_wideband};

/// Failures surfaced while loading a config or running an experiment.
#[derive(Debug, Error)]
pub enum ExperimentError {
    /// Unreadable or malformed config file.
    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },
    /// A resolved spec field broke an invariant.
    #[error("invalid spec: {0}")]
    Invalid(#[from] ScenarioError),
    /// Numerical failure inside a trial.
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    /// Result emission failed.
    #[error("write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    /// A CSV file did not match the documented layout.
    #[error("csv: {0}")]
    Csv(String),
}

impl From<AnalysisError> for ExperimentError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Argument(s) => ExperimentError::Invalid(s),
            AnalysisError::Numerics(n) => ExperimentError::Numerics(n),
        }
    }
}

fn bad(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError {
        field,
        reason: reason.into(),
    }
}

/// Named experiment bundles. The `figN` presets are fixed scenario/sweep
/// combinations (see [`Preset::describe`]); `custom` runs the efficiency
/// pipeline on a user-supplied scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6a,
    Fig6b,
    Fig7,
    Fig8,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 9] = [
        Preset::Fig2,
        Preset::Fig3,
        Preset::Fig4,
        Preset::Fig5,
        Preset::Fig6a,
        Preset::Fig6b,
        Preset::Fig7,
        Preset::Fig8,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6a => "fig6a",
            Preset::Fig6b => "fig6b",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
            Preset::Custom => "custom",
        }
    }

    /// One-line synopsis for `list-presets`.
    pub fn describe(self) -> &'static str {
        match self {
            Preset::Fig2 => {
                "fixed-frame selection-ratio CDF summaries vs snapshots and preselection (N=64, M=8, L=8)"
            }
            Preset::Fig3 => {
                "time-varying selection-ratio CDF summaries with the closed-form limit bound (N=64, M=8, L=8)"
            }
            Preset::Fig4 => {
                "paired last-iteration comparison of the two time-varying selection cores (L_o = L-1)"
            }
            Preset::Fig5 => {
                "conditional per-iteration success rates of dsomp and dcomp (N=64, M=8, L=8)"
            }
            Preset::Fig6a => {
                "narrowband efficiency sweep over snapshots with M=16 RF chains (N=64, D=256, L=8, SNR 10 dB)"
            }
            Preset::Fig6b => {
                "narrowband efficiency sweep over snapshots with M=8 RF chains (N=64, D=256, L=8, SNR 10 dB)"
            }
            Preset::Fig7 => {
                "MIMO efficiency sweep comparing the four training schedules (64x64 arrays, 8 RF chains, SNR 0 dB)"
            }
            Preset::Fig8 => {
                "wideband efficiency sweep: direct comp/dcomp vs wb-dcomp (K=128, N_cp=32, SNR 0 dB)"
            }
            Preset::Custom => {
                "user-supplied scenario; runs the efficiency pipeline matching its architecture"
            }
        }
    }

    fn is_analysis(self) -> bool {
        matches!(
            self,
            Preset::Fig2 | Preset::Fig3 | Preset::Fig4 | Preset::Fig5
        )
    }

    /// Fully-populated default spec; `None` for `custom`, which has no
    /// defaults and must come from a config file.
    pub fn spec(self) -> Option<ExperimentSpec> {
        let analysis = ScenarioConfig {
            n: 64,
            m: 8,
            d: 64,
            l: 8,
            t: 64,
            snr_db: 0.0, // placeholder; analysis runs are noiseless
            on_grid: true,
            mimo: None,
            wideband: None,
        };
        let narrowband = |m: usize| ScenarioConfig {
            n: 64,
            m,
            d: 256,
            l: 8,
            t: 100,
            snr_db: 10.0,
            on_grid: false,
            mimo: None,
            wideband: None,
        };
        let base = |scenario: ScenarioConfig,
                    algorithms: &[Algorithm],
                    trials: usize,
                    t_sweep: &[usize],
                    snr_db: f64| ExperimentSpec {
            preset: self,
            scenario,
            algorithms: algorithms.to_vec(),
            trials,
            t_sweep: t_sweep.to_vec(),
            snr_sweep: vec![snr_db],
            seed: 0,
            output_path: None,
        };
        Some(match self {
            Preset::Fig2 => base(analysis.clone(), &[], 500, &[1, 4, 8, 64], 0.0),
            Preset::Fig3 => {
                let mut s = analysis.clone();
                s.t = 1024;
                base(s, &[], 500, &[1, 4, 8, 64, 1024], 0.0)
            }
            Preset::Fig4 => base(analysis.clone(), &[], 500, &[1, 4, 8, 64], 0.0),
            Preset::Fig5 => base(analysis, &[], 500, &[64], 0.0),
            Preset::Fig6a => base(
                narrowband(16),
                &Algorithm::NARROWBAND,
                100,
                &[4, 10, 20, 50, 100],
                10.0,
            ),
            Preset::Fig6b => base(
                narrowband(8),
                &Algorithm::NARROWBAND,
                100,
                &[4, 10, 20, 50, 100],
                10.0,
            ),
            Preset::Fig7 => {
                let scenario = ScenarioConfig {
                    n: 64,
                    m: 8,
                    d: 256,
                    l: 8,
                    t: 50,
                    snr_db: 0.0,
                    on_grid: false,
                    mimo: Some(MimoDims {
                        n_t: 64,
                        m_t: 8,
                        d_t: 256,
                        n_r: 64,
                        m_r: 8,
                        d_r: 256,
                    }),
                    wideband: None,
                };
                base(scenario, &[], 50, &[10, 25, 50], 0.0)
            }
            Preset::Fig8 => {
                let scenario = ScenarioConfig {
                    n: 64,
                    m: 8,
                    d: 256,
                    l: 8,
                    t: 64,
                    snr_db: 0.0,
                    on_grid: false,
                    mimo: None,
                    wideband: Some(WidebandDims { k: 128, n_cp: 32 }),
                };
                base(scenario, &Algorithm::WIDEBAND, 100, &[4, 16, 64], 0.0)
            }
            Preset::Custom => return None,
        })
    }
}

/// Estimator labels accepted in configs and written to the CSV `algorithm`
/// column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Omp,
    Somp,
    Comp,
    Dsomp,
    Dcomp,
    WbDcomp,
}

impl Algorithm {
    /// Fixed-frame narrowband baselines plus the two time-varying estimators.
    pub const NARROWBAND: [Algorithm; 5] = [
        Algorithm::Omp,
        Algorithm::Somp,
        Algorithm::Comp,
        Algorithm::Dsomp,
        Algorithm::Dcomp,
    ];

    /// Direct extensions and the combined wideband estimator.
    pub const WIDEBAND: [Algorithm; 3] = [Algorithm::Comp, Algorithm::Dcomp, Algorithm::WbDcomp];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Omp => "omp",
            Algorithm::Somp => "somp",
            Algorithm::Comp => "comp",
            Algorithm::Dsomp => "dsomp",
            Algorithm::Dcomp => "dcomp",
            Algorithm::WbDcomp => "wb-dcomp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Narrowband,
    Mimo,
    Wideband,
}

fn family(scenario: &ScenarioConfig) -> Family {
    if scenario.mimo.is_some() {
        Family::Mimo
    } else if scenario.wideband.is_some() {
        Family::Wideband
    } else {
        Family::Narrowband
    }
}

/// A fully-resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub scenario: ScenarioConfig,
    /// Estimators to run; empty for presets that define their own labels
    /// (analysis presets and MIMO schedule comparisons).
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    /// Snapshot-count sweep; the active axis when it has several points.
    pub t_sweep: Vec<usize>,
    /// SNR sweep in dB; at most one of the two sweeps may have several
    /// points.
    pub snr_sweep: Vec<f64>,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.trials < 1 {
            return Err(bad("trials", "at least one trial required"));
        }
        if self.t_sweep.is_empty() || self.t_sweep.iter().any(|&t| t < 1) {
            return Err(bad("t_sweep", "needs at least one positive snapshot count"));
        }
        if self.snr_sweep.is_empty() || self.snr_sweep.iter().any(|s| !s.is_finite()) {
            return Err(bad("snr_sweep", "needs at least one finite value"));
        }
        if self.t_sweep.len() > 1 && self.snr_sweep.len() > 1 {
            return Err(bad(
                "snr_sweep",
                "only one axis may sweep; fix the other to a single value",
            ));
        }
        self.scenario.validate()?;
        if self.scenario.mimo.is_some() && self.scenario.wideband.is_some() {
            return Err(bad("scenario", "mimo and wideband extensions cannot combine"));
        }
        let mut seen = Vec::new();
        for a in &self.algorithms {
            if seen.contains(a) {
                return Err(bad("algorithms", format!("duplicate entry {}", a.label())));
            }
            seen.push(*a);
        }
        if self.preset.is_analysis() {
            if !self.algorithms.is_empty() {
                return Err(bad("algorithms", "this preset defines its own output labels"));
            }
            if self.snr_sweep.len() != 1 {
                return Err(bad(
                    "snr_sweep",
                    "analysis presets run noiseless; give a single placeholder value",
                ));
            }
            if self.preset == Preset::Fig5 && self.t_sweep.len() != 1 {
                return Err(bad(
                    "t_sweep",
                    "the per-iteration preset sweeps iterations internally; give one snapshot count",
                ));
            }
            return Ok(());
        }
        match family(&self.scenario) {
            Family::Mimo => {
                if !self.algorithms.is_empty() {
                    return Err(bad(
                        "algorithms",
                        "mimo runs compare the four training schedules automatically",
                    ));
                }
            }
            Family::Narrowband => {
                if self.algorithms.is_empty() {
                    return Err(bad("algorithms", "list the estimators to run"));
                }
                if self.algorithms.contains(&Algorithm::WbDcomp) {
                    return Err(bad("algorithms", "wb-dcomp needs a wideband scenario"));
                }
            }
            Family::Wideband => {
                if self.algorithms.is_empty() {
                    return Err(bad("algorithms", "list the estimators to run"));
                }
                if self
                    .algorithms
                    .iter()
                    .any(|a| !Algorithm::WIDEBAND.contains(a))
                {
                    return Err(bad(
                        "algorithms",
                        "wideband runs support comp, dcomp, and wb-dcomp",
                    ));
                }
            }
        }
        Ok(())
    }
}

fn default_schema() -> u32 {
    1
}

/// On-disk config layout (`schema: 1`). Every field except `preset` is
/// optional; omitted fields fall back to the preset defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_schema")]
    schema: u32,
    preset: Preset,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    trials: Option<usize>,
    #[serde(default)]
    scenario: Option<ScenarioConfig>,
    #[serde(default)]
    algorithms: Option<Vec<Algorithm>>,
    #[serde(default)]
    t_sweep: Option<Vec<usize>>,
    #[serde(default)]
    snr_sweep: Option<Vec<f64>>,
    #[serde(default)]
    output_path: Option<PathBuf>,
}

fn config_err(path: &Path, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Reads and resolves a JSON config into a validated [`ExperimentSpec`].
pub fn load_config(path: &Path) -> Result<ExperimentSpec, ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(path, format!("cannot read: {e}")))?;
    if text.trim().is_empty() {
        return Err(config_err(path, "missing root object: the file is empty"));
    }
    let raw: RawConfig =
        serde_json::from_str(&text).map_err(|e| config_err(path, e.to_string()))?;
    if raw.schema != 1 {
        return Err(config_err(
            path,
            format!("unsupported schema version {} (this build reads schema 1)", raw.schema),
        ));
    }
    let mut spec = match raw.preset {
        Preset::Custom => {
            let scenario = raw
                .scenario
                .clone()
                .ok_or_else(|| config_err(path, "scenario: the custom preset needs a scenario object"))?;
            ExperimentSpec {
                preset: Preset::Custom,
                t_sweep: vec![scenario.t],
                snr_sweep: vec![scenario.snr_db],
                scenario,
                algorithms: Vec::new(),
                trials: 100,
                seed: 0,
                output_path: None,
            }
        }
        p => {
            if raw.scenario.is_some() {
                return Err(config_err(
                    path,
                    "scenario: only the custom preset accepts an explicit scenario",
                ));
            }
            p.spec().expect("non-custom presets carry defaults")
        }
    };
    if let Some(a) = raw.algorithms {
        spec.algorithms = a;
    }
    if let Some(t) = raw.trials {
        spec.trials = t;
    }
    if let Some(s) = raw.seed {
        spec.seed = s;
    }
    if let Some(v) = raw.t_sweep {
        spec.t_sweep = v;
    }
    if let Some(v) = raw.snr_sweep {
        spec.snr_sweep = v;
    }
    if let Some(o) = raw.output_path {
        spec.output_path = Some(o);
    }
    spec.validate().map_err(ExperimentError::Invalid)?;
    Ok(spec)
}

/// One aggregated output row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub preset: String,
    pub algorithm: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Aggregated experiment output. When `failure` is set the run stopped early:
/// `rows` holds everything completed up to that point plus a final marker row
/// whose `metric` is `error`.
#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failure: Option<String>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn binomial_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

struct RowSink<'a> {
    preset: &'static str,
    seed: u64,
    rows: &'a mut Vec<ResultRow>,
}

impl RowSink<'_> {
    fn push(
        &mut self,
        algorithm: &str,
        sweep_name: &str,
        sweep_value: f64,
        metric: &str,
        mean: f64,
        stderr: f64,
        trials: usize,
    ) {
        self.rows.push(ResultRow {
            preset: self.preset.to_string(),
            algorithm: algorithm.to_string(),
            sweep_name: sweep_name.to_string(),
            sweep_value,
            metric: metric.to_string(),
            mean,
            stderr,
            trials,
            seed: self.seed,
        });
    }

    /// Summary rows for one empirical CDF: the sample mean and the fraction
    /// of draws strictly below one.
    fn push_cdf(&mut self, algorithm: &str, sweep_name: &str, sweep_value: f64, cdf: &EmpiricalCdf) {
        let n = cdf.values.len();
        let (mean, se) = mean_stderr(&cdf.values);
        self.push(algorithm, sweep_name, sweep_value, "rho_mean", mean, se, n);
        let p = cdf.prob_below(1.0);
        self.push(
            algorithm,
            sweep_name,
            sweep_value,
            "rho_pr_lt_1",
            p,
            binomial_stderr(p, n),
            n,
        );
    }
}

fn aborted(
    mut rows: Vec<ResultRow>,
    spec: &ExperimentSpec,
    sweep_name: &str,
    sweep_value: f64,
    err: ExperimentError,
) -> ResultTable {
    rows.push(ResultRow {
        preset: spec.preset.name().to_string(),
        algorithm: "error".to_string(),
        sweep_name: sweep_name.to_string(),
        sweep_value,
        metric: "error".to_string(),
        mean: f64::NAN,
        stderr: f64::NAN,
        trials: 0,
        seed: spec.seed,
    });
    ResultTable {
        rows,
        failure: Some(err.to_string()),
    }
}

/// Runs a validated spec to completion. Config-level problems come back as
/// `Err`; numerical failures inside trials stop the run early and are
/// reported through [`ResultTable::failure`] alongside the partial rows, so
/// completed work is never discarded. If several parallel trials fail, the
/// recorded message is the one from the earliest trial index.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable, ExperimentError> {
    spec.validate()?;
    Ok(match spec.preset {
        Preset::Fig2 => run_fig2(spec),
        Preset::Fig3 => run_fig3(spec),
        Preset::Fig4 => run_fig4(spec),
        Preset::Fig5 => run_fig5(spec),
        _ => run_eta(spec),
    })
}

fn coherence_params(s: &ScenarioConfig, l_o: usize, t: usize) -> CoherenceParams {
    CoherenceParams {
        n: s.n,
        m: s.m,
        l: s.l,
        l_o,
        t,
    }
}

/// Fixed-frame ratio summaries: a snapshot sweep at `L_o = 0`, the
/// many-snapshot limit recorded at snapshot count 0, and a preselection sweep
/// comparing the single-snapshot case against the limit.
fn run_fig2(spec: &ExperimentSpec) -> ResultTable {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::new();
    for &t in &spec.t_sweep {
        let params = coherence_params(&spec.scenario, 0, t);
        match mc_cdf(MetricKind::S, params, spec.trials, &mut rng) {
            Ok(cdf) => {
                let mut sink = sink(spec, &mut rows);
                sink.push_cdf("somp", "snapshots", t as f64, &cdf);
            }
            Err(e) => return aborted(rows, spec, "snapshots", t as f64, e.into()),
        }
    }
    let limit_params = coherence_params(&spec.scenario, 0, 1);
    match mc_cdf(MetricKind::SLimit, limit_params, spec.trials, &mut rng) {
        Ok(cdf) => sink(spec, &mut rows).push_cdf("somp-limit", "snapshots", 0.0, &cdf),
        Err(e) => return aborted(rows, spec, "snapshots", 0.0, e.into()),
    }
    for &l_o in &[0usize, 3, 7] {
        let single = coherence_params(&spec.scenario, l_o, 1);
        match mc_cdf(MetricKind::S, single, spec.trials, &mut rng) {
            Ok(cdf) => sink(spec, &mut rows).push_cdf("omp", "preselected", l_o as f64, &cdf),
            Err(e) => return aborted(rows, spec, "preselected", l_o as f64, e.into()),
        }
        match mc_cdf(MetricKind::SLimit, single, spec.trials, &mut rng) {
            Ok(cdf) => {
                sink(spec, &mut rows).push_cdf("somp-limit", "preselected", l_o as f64, &cdf)
            }
            Err(e) => return aborted(rows, spec, "preselected", l_o as f64, e.into()),
        }
    }
    ResultTable {
        rows,
        failure: None,
    }
}

fn sink<'a>(spec: &ExperimentSpec, rows: &'a mut Vec<ResultRow>) -> RowSink<'a> {
    RowSink {
        preset: spec.preset.name(),
        seed: spec.seed,
        rows,
    }
}

/// Time-varying ratio summaries per preselection size, with the closed-form
/// limit bound recorded at snapshot count 0.
fn run_fig3(spec: &ExperimentSpec) -> ResultTable {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::new();
    let s = &spec.scenario;
    for &l_o in &[0usize, 7] {
        let label = format!("dsomp-lo{l_o}");
        for &t in &spec.t_sweep {
            match mc_cdf(MetricKind::Ds, coherence_params(s, l_o, t), spec.trials, &mut rng) {
                Ok(cdf) => sink(spec, &mut rows).push_cdf(&label, "snapshots", t as f64, &cdf),
                Err(e) => return aborted(rows, spec, "snapshots", t as f64, e.into()),
            }
        }
        match rho_ds_upper_bound(s.n, s.m, s.l, l_o) {
            Ok(b) => sink(spec, &mut rows).push(&label, "snapshots", 0.0, "rho_limit_bound", b, 0.0, 1),
            Err(e) => return aborted(rows, spec, "snapshots", 0.0, e.into()),
        }
    }
    ResultTable {
        rows,
        failure: None,
    }
}

/// Last-iteration paired draws of the two time-varying ratios.
fn run_fig4(spec: &ExperimentSpec) -> ResultTable {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::new();
    let l_o = spec.scenario.l - 1;
    for &t in &spec.t_sweep {
        let params = coherence_params(&spec.scenario, l_o, t);
        match paired_ds_dc(params, spec.trials, &mut rng) {
            Ok(draws) => {
                let ds: Vec<f64> = draws.iter().map(|d| d.rho_ds).collect();
                let dc: Vec<f64> = draws.iter().map(|d| d.rho_dc).collect();
                for (label, vals) in [("dsomp", &ds), ("dcomp", &dc)] {
                    let (mean, se) = mean_stderr(vals);
                    let mut s = sink(spec, &mut rows);
                    s.push(label, "snapshots", t as f64, "rho_mean", mean, se, vals.len());
                    let p = vals.iter().filter(|&&v| v < 1.0).count() as f64 / vals.len() as f64;
                    s.push(
                        label,
                        "snapshots",
                        t as f64,
                        "rho_pr_lt_1",
                        p,
                        binomial_stderr(p, vals.len()),
                        vals.len(),
                    );
                }
            }
            Err(e) => return aborted(rows, spec, "snapshots", t as f64, e.into()),
        }
    }
    ResultTable {
        rows,
        failure: None,
    }
}

/// Conditional success rate at each greedy iteration for both time-varying
/// estimators; the `trials` column carries the number of conditioning
/// attempts that reached the iteration.
fn run_fig5(spec: &ExperimentSpec) -> ResultTable {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::new();
    let s = &spec.scenario;
    let t = spec.t_sweep[0];
    for (algo, label) in [
        (SupportAlgorithm::Dsomp, "dsomp"),
        (SupportAlgorithm::Dcomp, "dcomp"),
    ] {
        match success_prob_per_iteration(algo, s.n, s.m, s.l, t, spec.trials, &mut rng) {
            Ok(iters) => {
                let mut sk = sink(spec, &mut rows);
                for k in 0..s.l {
                    sk.push(
                        label,
                        "iteration",
                        (k + 1) as f64,
                        "success_prob",
                        iters.rates[k],
                        binomial_stderr(iters.rates[k], iters.attempts[k]),
                        iters.attempts[k],
                    );
                }
            }
            Err(e) => return aborted(rows, spec, "iteration", 0.0, e.into()),
        }
    }
    ResultTable {
        rows,
        failure: None,
    }
}

#[derive(Debug, Clone, Copy)]
struct SweepPoint {
    value: f64,
    t: usize,
    snr_db: f64,
}

fn sweep_points(spec: &ExperimentSpec) -> (&'static str, Vec<SweepPoint>) {
    if spec.snr_sweep.len() > 1 {
        let t = spec.t_sweep[0];
        let points = spec
            .snr_sweep
            .iter()
            .map(|&snr_db| SweepPoint {
                value: snr_db,
                t,
                snr_db,
            })
            .collect();
        ("snr_db", points)
    } else {
        let snr_db = spec.snr_sweep[0];
        let points = spec
            .t_sweep
            .iter()
            .map(|&t| SweepPoint {
                value: t as f64,
                t,
                snr_db,
            })
            .collect();
        ("snapshots", points)
    }
}

/// Efficiency experiments: one metric report per (trial, algorithm), trials
/// parallelized with per-trial seeds `seed XOR global trial index`, rows
/// grouped per algorithm in sweep order.
fn run_eta(spec: &ExperimentSpec) -> ResultTable {
    let fam = family(&spec.scenario);
    let labels: Vec<String> = match fam {
        Family::Mimo => MimoMode::ALL
            .iter()
            .map(|m| format!("mode{}", m.index()))
            .collect(),
        _ => spec
            .algorithms
            .iter()
            .map(|a| a.label().to_string())
            .collect(),
    };
    type TrialFn = Box<dyn Fn(&ScenarioConfig, u64) -> Result<Vec<MetricReport>, ExperimentError> + Sync>;
    let trial: TrialFn = match fam {
        Family::Narrowband => {
            let dict = build_dictionary(spec.scenario.n, spec.scenario.d);
            let algos = spec.algorithms.clone();
            Box::new(move |cfg, seed| narrowband_trial(cfg, &dict, &algos, seed))
        }
        Family::Wideband => {
            let dict = build_dictionary(spec.scenario.n, spec.scenario.d);
            let algos = spec.algorithms.clone();
            Box::new(move |cfg, seed| wideband_trial(cfg, &dict, &algos, seed))
        }
        Family::Mimo => {
            let dims = spec.scenario.mimo.expect("validated mimo scenario");
            let dict_t = build_dictionary(dims.n_t, dims.d_t);
            let dict_r = build_dictionary(dims.n_r, dims.d_r);
            Box::new(move |cfg, seed| mimo_trial(cfg, &dims, &dict_t, &dict_r, seed))
        }
    };
    let (axis, points) = sweep_points(spec);
    let mut completed: Vec<(f64, Vec<Vec<MetricReport>>)> = Vec::new();
    let mut failure: Option<(f64, ExperimentError)> = None;
    let mut global = 0u64;
    for point in points {
        let mut cfg = spec.scenario.clone();
        cfg.t = point.t;
        cfg.snr_db = point.snr_db;
        let seeds: Vec<u64> = (0..spec.trials as u64).map(|k| spec.seed ^ (global + k)).collect();
        global += spec.trials as u64;
        let outcomes: Vec<Result<Vec<MetricReport>, ExperimentError>> =
            seeds.par_iter().map(|&s| trial(&cfg, s)).collect();
        let mut reports = Vec::with_capacity(outcomes.len());
        let mut err = None;
        for o in outcomes {
            match o {
                Ok(r) => reports.push(r),
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        match err {
            None => completed.push((point.value, reports)),
            Some(e) => {
                failure = Some((point.value, e));
                break;
            }
        }
    }
    let mut rows = Vec::new();
    for (ai, label) in labels.iter().enumerate() {
        for (value, reports) in &completed {
            let etas: Vec<f64> = reports.iter().map(|r| r[ai].eta).collect();
            let losses: Vec<f64> = reports.iter().map(|r| r[ai].rate_loss_pct).collect();
            let mut sk = sink(spec, &mut rows);
            let (mean, se) = mean_stderr(&etas);
            sk.push(label, axis, *value, "eta", mean, se, etas.len());
            let (mean, se) = mean_stderr(&losses);
            sk.push(label, axis, *value, "rate_loss_pct", mean, se, losses.len());
        }
    }
    match failure {
        Some((value, e)) => aborted(rows, spec, axis, value, e),
        None => ResultTable {
            rows,
            failure: None,
        },
    }
}

/// Channel covariance estimate in factored form: dictionary columns on the
/// recovered support times the principal square root of the core block.
fn low_rank_estimate(est: CovarianceEstimate, dict: &Dictionary) -> Result<LowRank, NumericsError> {
    let basis = select_columns(dict.matrix(), &est.support);
    LowRank::from_core(&basis, &Hermitian::new(est.core))
}

/// Per-snapshot sparse recovery followed by covariance averaging: the factor
/// stacks one reconstructed channel per snapshot, scaled so the implied
/// covariance is the snapshot average.
fn omp_covariance(
    phi: &CMat,
    ys: &[CVec],
    dict: &Dictionary,
    l: usize,
) -> Result<LowRank, NumericsError> {
    let t = ys.len();
    let scale = 1.0 / (t as f64).sqrt();
    let mut f = CMat::zeros((dict.antennas(), t));
    for (c, y) in ys.iter().enumerate() {
        let sa = omp(phi, y, l)?;
        let basis = select_columns(dict.matrix(), &sa.support);
        let h = mul_vec(&basis, sa.gains.column(0));
        for (i, v) in h.iter().enumerate() {
            f[[i, c]] = v * scale;
        }
    }
    Ok(LowRank::new(f))
}

/// One narrowband trial: a shared channel draw measured through both a fixed
/// and a time-varying sensing ensemble, so fixed-frame and time-varying
/// estimators see the same propagation realization. Both ensembles are drawn
/// whether or not the algorithm list uses them, keeping every estimator's
/// input independent of which competitors run alongside it.
fn narrowband_trial(
    cfg: &ScenarioConfig,
    dict: &Dictionary,
    algos: &[Algorithm],
    seed: u64,
) -> Result<Vec<MetricReport>, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = draw_channel(cfg, dict, &mut rng);
    let ens_fixed = SensingEnsemble::draw(dict, cfg.m, cfg.t, false, &mut rng)?;
    let ens_tv = SensingEnsemble::draw(dict, cfg.m, cfg.t, true, &mut rng)?;
    let ms_fixed = simulate_narrowband(&ch, &ens_fixed, cfg.snr_db, &mut rng);
    let ms_tv = simulate_narrowband(&ch, &ens_tv, cfg.snr_db, &mut rng);
    let truth = LowRank::new(ch.steering.clone());
    let phi = &ens_fixed.frame(0).phi;
    let y_cols = ms_fixed.columns();
    let ys_fixed = ms_fixed.frame_vectors();
    let phis_tv = ens_tv.phis(cfg.t);
    let ys_tv = ms_tv.frame_vectors();
    algos
        .iter()
        .map(|a| {
            let est = match a {
                Algorithm::Omp => omp_covariance(phi, &ys_fixed, dict, cfg.l)?,
                Algorithm::Somp => {
                    low_rank_estimate(somp(phi, &y_cols, cfg.l)?.into_covariance(), dict)?
                }
                Algorithm::Comp => low_rank_estimate(comp(phi, &y_cols, cfg.l)?, dict)?,
                Algorithm::Dsomp => {
                    low_rank_estimate(dsomp(&phis_tv, &ys_tv, cfg.l)?.into_covariance(), dict)?
                }
                Algorithm::Dcomp => low_rank_estimate(dcomp(&phis_tv, &ys_tv, cfg.l)?, dict)?,
                Algorithm::WbDcomp => unreachable!("validated algorithm set"),
            };
            metric_report_low_rank(&est, &truth, cfg.l, cfg.snr_db).map_err(ExperimentError::from)
        })
        .collect()
}

/// Per-path factor weights: dictionary response scaled by the root-mean
/// subcarrier tap power, so the factored product is the frequency-averaged
/// covariance.
fn wideband_truth_factor(wb: &WidebandRealization) -> CMat {
    let k = wb.taps.ncols();
    let mut b = wb.channel.steering.clone();
    for (path, mut col) in b.columns_mut().into_iter().enumerate() {
        let power = (0..k).map(|kk| wb.taps[[path, kk]].norm_sqr()).sum::<f64>() / k as f64;
        let w = power.sqrt();
        col.mapv_inplace(|z| z * w);
    }
    b
}

fn columns_matrix(cols: &[CVec]) -> CMat {
    CMat::from_shape_fn((cols[0].len(), cols.len()), |(i, j)| cols[j][i])
}

/// One wideband trial. `comp` runs on every subcarrier column through one
/// fixed frame; `dcomp` treats each (frame, subcarrier) column as its own
/// snapshot of the frame's matrix; `wb-dcomp` averages over frequency per
/// frame before the across-frame recursion.
fn wideband_trial(
    cfg: &ScenarioConfig,
    dict: &Dictionary,
    algos: &[Algorithm],
    seed: u64,
) -> Result<Vec<MetricReport>, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wb = draw_wideband_channel(cfg, dict, &mut rng);
    let ens_fixed = SensingEnsemble::draw(dict, cfg.m, cfg.t, false, &mut rng)?;
    let ens_tv = SensingEnsemble::draw(dict, cfg.m, cfg.t, true, &mut rng)?;
    let ms_fixed = simulate_wideband(&wb, &ens_fixed, cfg.snr_db, &mut rng);
    let ms_tv = simulate_wideband(&wb, &ens_tv, cfg.snr_db, &mut rng);
    let truth = LowRank::new(wideband_truth_factor(&wb));
    let phi_fixed = &ens_fixed.frame(0).phi;
    let flat_fixed = columns_matrix(&ms_fixed.flattened_columns());
    let phis_tv = ens_tv.phis(cfg.t);
    let flat_tv = ms_tv.flattened_columns();
    let k = cfg.wideband.expect("validated wideband scenario").k;
    algos
        .iter()
        .map(|a| {
            let est = match a {
                Algorithm::Comp => comp(phi_fixed, &flat_fixed, cfg.l)?,
                Algorithm::Dcomp => {
                    let per_column: Vec<&CMat> = phis_tv
                        .iter()
                        .flat_map(|p| std::iter::repeat(p).take(k))
                        .collect();
                    dcomp(&per_column, &flat_tv, cfg.l)?
                }
                Algorithm::WbDcomp => wb_dcomp(&phis_tv, &ms_tv.frames, cfg.l)?,
                _ => unreachable!("validated algorithm set"),
            };
            let lr = low_rank_estimate(est, dict)?;
            metric_report_low_rank(&lr, &truth, cfg.l, cfg.snr_db).map_err(ExperimentError::from)
        })
        .collect()
}

/// Columns `conj(tx_l) (x) rx_l`, one per path; spans the vectorized-channel
/// covariance.
fn paired_kron_columns(tx: &CMat, rx: &CMat) -> CMat {
    let (n_t, l) = tx.dim();
    let n_r = rx.nrows();
    CMat::from_shape_fn((n_t * n_r, l), |(i, c)| {
        tx[[i / n_r, c]].conj() * rx[[i % n_r, c]]
    })
}

/// Vectorized-dictionary columns for flat support indices `tx * d_r + rx`.
fn mimo_support_columns(support: &[usize], dict_t: &Dictionary, dict_r: &Dictionary) -> CMat {
    let n_r = dict_r.antennas();
    let d_r = dict_r.len();
    let rows = dict_t.antennas() * n_r;
    CMat::from_shape_fn((rows, support.len()), |(i, c)| {
        let j = support[c];
        dict_t.matrix()[[i / n_r, j / d_r]].conj() * dict_r.matrix()[[i % n_r, j % d_r]]
    })
}

/// One MIMO trial: a shared channel draw trained under all four schedules,
/// each estimated by the covariance-core estimator on the structured
/// aggregate operator. Reports follow [`MimoMode::ALL`] order.
fn mimo_trial(
    cfg: &ScenarioConfig,
    dims: &MimoDims,
    dict_t: &Dictionary,
    dict_r: &Dictionary,
    seed: u64,
) -> Result<Vec<MetricReport>, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = draw_mimo_channel(cfg, dict_t, dict_r, &mut rng);
    let truth = LowRank::new(paired_kron_columns(&ch.tx_steering, &ch.rx_steering));
    MimoMode::ALL
        .iter()
        .map(|&mode| {
            let frames = (0..cfg.t)
                .map(|_| draw_mimo_frame(dims, mode, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            let ms = simulate_mimo(&ch, mode, &frames, cfg.snr_db, &mut rng)?;
            let ops: Vec<KronAggregateOperator> = frames
                .iter()
                .map(|f| KronAggregateOperator::build(f, mode, dict_t, dict_r))
                .collect();
            let est = dcomp(&ops, &ms.frame_vectors(), cfg.l)?;
            let basis = mimo_support_columns(&est.support, dict_t, dict_r);
            let lr = LowRank::from_core(&basis, &Hermitian::new(est.core))?;
            metric_report_low_rank(&lr, &truth, cfg.l, cfg.snr_db).map_err(ExperimentError::from)
        })
        .collect()
}

pub const CSV_HEADER: &str = "preset,algorithm,sweep_name,sweep_value,metric,mean,stderr,trials,seed";

/// Renders the table as CSV; floats print in shortest round-trip form.
pub fn csv_string(table: &ResultTable) -> String {
    let mut out = String::with_capacity(64 * (table.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.preset,
            r.algorithm,
            r.sweep_name,
            r.sweep_value,
            r.metric,
            r.mean,
            r.stderr,
            r.trials,
            r.seed
        ));
    }
    out
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<(), ExperimentError> {
    std::fs::write(path, csv_string(table)).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Parses CSV produced by [`csv_string`] back into rows. The failure flag is
/// not recoverable from the file; any marker rows come back as plain rows.
pub fn parse_csv(text: &str) -> Result<ResultTable, ExperimentError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(ExperimentError::Csv(format!(
                "bad header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(ExperimentError::Csv(format!(
                "line {}: expected 9 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64, ExperimentError> {
            s.parse()
                .map_err(|_| ExperimentError::Csv(format!("line {}: bad {what} {s:?}", lineno + 2)))
        };
        rows.push(ResultRow {
            preset: fields[0].to_string(),
            algorithm: fields[1].to_string(),
            sweep_name: fields[2].to_string(),
            sweep_value: num(fields[3], "sweep_value")?,
            metric: fields[4].to_string(),
            mean: num(fields[5], "mean")?,
            stderr: num(fields[6], "stderr")?,
            trials: fields[7].parse().map_err(|_| {
                ExperimentError::Csv(format!("line {}: bad trials {:?}", lineno + 2, fields[7]))
            })?,
            seed: fields[8].parse().map_err(|_| {
                ExperimentError::Csv(format!("line {}: bad seed {:?}", lineno + 2, fields[8]))
            })?,
        });
    }
    Ok(ResultTable {
        rows,
        failure: None,
    })
}
