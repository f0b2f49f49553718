//! Coherence diagnostics for greedy support selection.
//!
//! Each greedy iteration picks the dictionary column with the largest
//! selection statistic. After projecting out the columns that were already
//! resolved, the ratio of the strongest *off*-support statistic to the
//! strongest remaining *on*-support one decides the next step: the iteration
//! succeeds exactly when that ratio stays below one. This module evaluates
//! those ratios for concrete draws ([`rho_ds`], [`rho_dc`]), the fixed-frame
//! many-snapshot limit ([`rho_s_limit`]), and the closed-form limit bound
//! ([`rho_ds_upper_bound`]), and wraps them in Monte-Carlo machinery for
//! empirical CDFs and conditional per-iteration success rates.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    build_dictionary, cn_unit, draw_channel, draw_support, Dictionary, ScenarioConfig,
    ScenarioError,
};
use crate::numerics::{
    adjoint, adjoint_mul, adjoint_mul_vec, cholesky, cholesky_solve, gram, matmul, mul_vec,
    projector, select_columns, CMat, CVec, NumericsError, C64,
};
use crate::recovery::{dcomp, dsomp};
use crate::sensing::SensingEnsemble;
use crate::simulate::simulate_narrowband;

/// Argument or numerical failure raised by the coherence machinery.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Argument(#[from] ScenarioError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn bad(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError {
        field,
        reason: reason.into(),
    }
}

/// Which coherence statistic a Monte-Carlo run samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Fixed-frame many-snapshot limit; the snapshot count plays no role.
    SLimit,
    /// Fixed-frame ratio at a finite snapshot count: one shared frame, fresh
    /// gains per snapshot.
    S,
    /// Per-draw ratio with time-varying frames.
    Ds,
    /// Covariance-core variant of [`MetricKind::Ds`].
    Dc,
    /// Closed-form limit bound; constant across trials.
    DsBound,
}

/// Problem dimensions shared by the coherence metrics. The analysis grid is
/// always confined to `n` columns, so `n` doubles as the dictionary size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoherenceParams {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub l_o: usize,
    pub t: usize,
}

impl CoherenceParams {
    /// Checks the dimensions a sampling run for `kind` relies on.
    pub fn validate(&self, kind: MetricKind) -> Result<(), ScenarioError> {
        if kind == MetricKind::DsBound {
            return rho_ds_upper_bound(self.n, self.m, self.l, self.l_o).map(|_| ());
        }
        if self.m == 0 {
            return Err(bad("m", "needs at least one measurement row"));
        }
        if self.l == 0 || self.l > self.n {
            return Err(bad("l", "support size must lie in 1..=n"));
        }
        if self.l_o >= self.l {
            return Err(bad("l_o", "preselected subset must be strictly smaller than the support"));
        }
        if self.t == 0 && kind != MetricKind::SLimit {
            return Err(bad("t", "needs at least one snapshot"));
        }
        Ok(())
    }
}

/// One sampled coherence value together with the dimensions it was drawn at.
#[derive(Debug, Clone, Copy)]
pub struct CoherenceSample {
    pub value: f64,
    pub kind: MetricKind,
    pub params: CoherenceParams,
}

impl CoherenceSample {
    /// Values are ratios of sums of squared magnitudes (or the closed-form
    /// bound), so anything non-finite or negative marks a degenerate draw.
    pub fn new(value: f64, kind: MetricKind, params: CoherenceParams) -> Self {
        assert!(
            value.is_finite() && value >= 0.0,
            "coherence sample {value} out of range"
        );
        Self {
            value,
            kind,
            params,
        }
    }
}

fn check_sets(s: &[usize], s_o: &[usize], cols: usize) -> Result<(), ScenarioError> {
    if s.is_empty() || s.iter().any(|&j| j >= cols) {
        return Err(bad("s", "support indices must be non-empty and fit the frame width"));
    }
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(bad("s", "support indices must be distinct"));
    }
    if s_o.len() >= s.len() {
        return Err(bad("s_o", "preselected set must be strictly smaller than the support"));
    }
    let mut seen = Vec::with_capacity(s_o.len());
    for j in s_o {
        if !s.contains(j) || seen.contains(j) {
            return Err(bad("s_o", "preselected indices must be distinct members of the support"));
        }
        seen.push(*j);
    }
    Ok(())
}

fn check_frames(phis: &[CMat]) -> Result<(usize, usize), ScenarioError> {
    let first = phis
        .first()
        .ok_or_else(|| bad("phis", "needs at least one frame"))?;
    let dim = first.dim();
    if phis.iter().any(|p| p.dim() != dim) {
        return Err(bad("phis", "all frames must share the same dimensions"));
    }
    Ok(dim)
}

fn check_gains(g: &CMat, l: usize, t: usize) -> Result<(), ScenarioError> {
    if g.nrows() != l || g.ncols() != t {
        return Err(bad("g", format!("gains must be {l}x{t}, one row per support entry")));
    }
    Ok(())
}

/// Splits `s` into the dictionary indices outside `s_o` and their row
/// positions within `s` (for addressing the aligned gain rows).
fn active_split(s: &[usize], s_o: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut idx = Vec::with_capacity(s.len() - s_o.len());
    let mut rows = Vec::with_capacity(s.len() - s_o.len());
    for (r, &j) in s.iter().enumerate() {
        if !s_o.contains(&j) {
            idx.push(j);
            rows.push(r);
        }
    }
    (idx, rows)
}

/// Component of `v` inside the span of the columns of `basis`; zero when the
/// basis is empty.
fn span_component(basis: &CMat, v: &CVec) -> Result<CVec, NumericsError> {
    if basis.ncols() == 0 {
        return Ok(Array1::zeros(v.len()));
    }
    let chol = cholesky(&gram(basis))?;
    let rhs = adjoint_mul_vec(basis, v.view()).insert_axis(Axis(1));
    let coef = cholesky_solve(&chol, &rhs);
    Ok(mul_vec(basis, coef.column(0)))
}

/// Projects every column of `m` onto the orthogonal complement of the span
/// of its `s_o`-indexed columns. An empty `s_o` returns the input unchanged.
pub fn project_out_columns(m: &CMat, s_o: &[usize]) -> Result<CMat, NumericsError> {
    if s_o.is_empty() {
        return Ok(m.clone());
    }
    let basis = select_columns(m, s_o);
    let chol = cholesky(&gram(&basis))?;
    let coef = cholesky_solve(&chol, &adjoint_mul(&basis, m));
    Ok(m - &matmul(&basis, &coef))
}

fn score_ratio(scores: &[f64], s: &[usize], s_o: &[usize]) -> f64 {
    let off = scores
        .iter()
        .enumerate()
        .filter(|(j, _)| !s.contains(j))
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let on = s
        .iter()
        .filter(|j| !s_o.contains(j))
        .map(|&j| scores[j])
        .fold(0.0, f64::max);
    off / on
}

fn ds_scores<'a, I>(
    phis: I,
    cols: usize,
    s: &[usize],
    s_o: &[usize],
    g: &CMat,
) -> Result<Vec<f64>, NumericsError>
where
    I: Iterator<Item = &'a CMat>,
{
    let (active, rows) = active_split(s, s_o);
    let mut scores = vec![0.0; cols];
    for (t, phi) in phis.enumerate() {
        let basis = select_columns(phi, s_o);
        let gains: CVec = rows.iter().map(|&r| g[(r, t)]).collect();
        let v = mul_vec(&select_columns(phi, &active), gains.view());
        let inside = span_component(&basis, &v)?;
        let u = &v - &inside;
        let z = adjoint_mul_vec(phi, u.view());
        for (sc, zi) in scores.iter_mut().zip(z.iter()) {
            *sc += zi.norm_sqr();
        }
    }
    Ok(scores)
}

fn dc_scores<'a, I>(
    phis: I,
    cols: usize,
    s: &[usize],
    s_o: &[usize],
    g: &CMat,
) -> Result<Vec<f64>, NumericsError>
where
    I: Iterator<Item = &'a CMat>,
{
    let mut scores = vec![0.0; cols];
    for (t, phi) in phis.enumerate() {
        let gains: CVec = (0..s.len()).map(|r| g[(r, t)]).collect();
        let v = mul_vec(&select_columns(phi, s), gains.view());
        let z = adjoint_mul_vec(phi, v.view());
        for (sc, zi) in scores.iter_mut().zip(z.iter()) {
            *sc += zi.norm_sqr();
        }
        if !s_o.is_empty() {
            let basis = select_columns(phi, s_o);
            let a = span_component(&basis, &v)?;
            let za = adjoint_mul_vec(phi, a.view());
            for (sc, zi) in scores.iter_mut().zip(za.iter()) {
                *sc -= zi.norm_sqr();
            }
        }
    }
    Ok(scores)
}

/// Selection ratio for time-varying frames after `s_o` has been resolved.
///
/// `g` carries one gain row per entry of `s` (in the same order) and one
/// column per frame. In the noiseless case the value is below one exactly
/// when the next deflation-style greedy selection on the same data stays
/// inside `s`.
pub fn rho_ds(s: &[usize], s_o: &[usize], phis: &[CMat], g: &CMat) -> Result<f64, AnalysisError> {
    let (_, cols) = check_frames(phis)?;
    check_sets(s, s_o, cols)?;
    check_gains(g, s.len(), phis.len())?;
    let scores = ds_scores(phis.iter(), cols, s, s_o, g)?;
    Ok(score_ratio(&scores, s, s_o))
}

/// Many-snapshot limit of the selection ratio for one fixed frame: gains
/// average out and only the deflated cross-column energies
/// `sum_i |psi_j^H psi_i|^2` remain.
pub fn rho_s_limit(s: &[usize], s_o: &[usize], phi: &CMat) -> Result<f64, AnalysisError> {
    check_sets(s, s_o, phi.ncols())?;
    let psi = project_out_columns(phi, s_o)?;
    let (active, _) = active_split(s, s_o);
    let cross = adjoint_mul(&psi, &select_columns(&psi, &active));
    let scores: Vec<f64> = cross
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|z| z.norm_sqr()).sum())
        .collect();
    Ok(score_ratio(&scores, s, s_o))
}

/// Covariance-core selection ratio: per frame the statistic is the quadratic
/// form of `phi_j` in `v v^H - (P v)(P v)^H` with `v` the noiseless
/// measurement and `P` the projector onto the resolved columns.
pub fn rho_dc(s: &[usize], s_o: &[usize], phis: &[CMat], g: &CMat) -> Result<f64, AnalysisError> {
    let (_, cols) = check_frames(phis)?;
    check_sets(s, s_o, cols)?;
    check_gains(g, s.len(), phis.len())?;
    let scores = dc_scores(phis.iter(), cols, s, s_o, g)?;
    Ok(score_ratio(&scores, s, s_o))
}

/// Closed-form bound on the many-snapshot limit of [`rho_ds`]; depends only
/// on the dimensions and always lies in `(0, 1]`.
pub fn rho_ds_upper_bound(n: usize, m: usize, l: usize, l_o: usize) -> Result<f64, ScenarioError> {
    if n == m {
        return Err(bad("n", "limit bound degenerates when n equals m"));
    }
    if n < m {
        return Err(bad("m", "measurement rows must stay below the antenna count"));
    }
    if m < l {
        return Err(bad("l", "support size cannot exceed the measurement rows"));
    }
    if l_o >= l {
        return Err(bad("l_o", "preselected subset must be strictly smaller than the support"));
    }
    let num = (m as i64 - n as i64) + ((m - l_o) as i64) * ((n - l_o - 1) as i64);
    let den = ((n - m) * (l - l_o)) as f64;
    Ok(1.0 / (1.0 + num as f64 / den))
}

/// Per-frame trace gap between the gain-averaged covariance-core and
/// deflation-core statistics, restricted to the unresolved support columns.
/// The gap equals twice the real trace of a product of two Gram matrices, so
/// it is nonnegative up to rounding for every frame.
pub fn selection_core_trace_gap(
    phi: &CMat,
    s: &[usize],
    s_o: &[usize],
) -> Result<f64, AnalysisError> {
    check_sets(s, s_o, phi.ncols())?;
    if s_o.is_empty() {
        return Ok(0.0);
    }
    let (active, _) = active_split(s, s_o);
    let c = select_columns(phi, &active);
    let cc = matmul(&c, &adjoint(&c));
    let p = projector(&select_columns(phi, s_o))?;
    let pcp = matmul(&matmul(&p, &cc), &p);
    let q_dc = &cc - &pcp;
    let complement = &Array2::<C64>::eye(phi.nrows()) - &p;
    let q_ds = matmul(&matmul(&complement, &cc), &complement);
    let diff = &q_dc - &q_ds;
    let quad = adjoint_mul(&c, &matmul(&diff, &c));
    Ok(quad.diag().iter().map(|z| z.re).sum())
}

/// Raw sorted Monte-Carlo samples of a coherence statistic. The table is
/// unbinned so distribution comparisons stay exact.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    pub kind: MetricKind,
    pub params: CoherenceParams,
    /// Ascending sample values.
    pub values: Vec<f64>,
    /// `probabilities[i]` is the empirical CDF at `values[i]`.
    pub probabilities: Vec<f64>,
}

impl EmpiricalCdf {
    /// Fraction of samples strictly below `x`.
    pub fn prob_below(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v < x) as f64 / self.values.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample standard deviation (`n - 1` normalisation); zero for a single
    /// sample.
    pub fn std_dev(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    pub fn samples(&self) -> impl Iterator<Item = CoherenceSample> + '_ {
        self.values
            .iter()
            .map(move |&v| CoherenceSample::new(v, self.kind, self.params))
    }
}

fn draw_subset<R: Rng + ?Sized>(s: &[usize], l_o: usize, rng: &mut R) -> Vec<usize> {
    let picks = rand::seq::index::sample(rng, s.len(), l_o);
    let mut out: Vec<usize> = picks.iter().map(|r| s[r]).collect();
    out.sort_unstable();
    out
}

fn draw_gains<R: Rng + ?Sized>(l: usize, t: usize, rng: &mut R) -> CMat {
    CMat::from_shape_fn((l, t), |_| cn_unit(rng))
}

/// Draws one coherence sample: a uniform support, a uniform preselected
/// subset, fresh whitened frames, and unit-variance gains, in that order.
pub fn draw_coherence_sample<R: Rng + ?Sized>(
    kind: MetricKind,
    params: CoherenceParams,
    dict: &Dictionary,
    rng: &mut R,
) -> Result<CoherenceSample, AnalysisError> {
    params.validate(kind)?;
    debug_assert_eq!(dict.len(), params.n, "analysis confines the grid to n columns");
    let value = match kind {
        MetricKind::DsBound => rho_ds_upper_bound(params.n, params.m, params.l, params.l_o)?,
        MetricKind::SLimit => {
            let s = draw_support(params.n, params.l, rng);
            let s_o = draw_subset(&s, params.l_o, rng);
            let ens = SensingEnsemble::draw(dict, params.m, 1, false, rng)?;
            rho_s_limit(&s, &s_o, &ens.frame(0).phi)?
        }
        MetricKind::S | MetricKind::Ds | MetricKind::Dc => {
            let s = draw_support(params.n, params.l, rng);
            let s_o = draw_subset(&s, params.l_o, rng);
            let time_varying = kind != MetricKind::S;
            let ens = SensingEnsemble::draw(dict, params.m, params.t, time_varying, rng)?;
            let g = draw_gains(params.l, params.t, rng);
            let frames = (0..params.t).map(|k| &ens.frame(k).phi);
            let scores = if kind == MetricKind::Dc {
                dc_scores(frames, params.n, &s, &s_o, &g)?
            } else {
                ds_scores(frames, params.n, &s, &s_o, &g)?
            };
            score_ratio(&scores, &s, &s_o)
        }
    };
    Ok(CoherenceSample::new(value, kind, params))
}

fn trial_seeds<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Vec<u64> {
    (0..trials).map(|_| rng.random()).collect()
}

/// Monte-Carlo CDF of a coherence statistic. Trials run in parallel, each on
/// an RNG stream derived from one upfront draw, and are re-assembled in trial
/// order so the result does not depend on scheduling.
pub fn mc_cdf<R: Rng + ?Sized>(
    kind: MetricKind,
    params: CoherenceParams,
    trials: usize,
    rng: &mut R,
) -> Result<EmpiricalCdf, AnalysisError> {
    assert!(trials >= 1, "needs at least one trial");
    params.validate(kind)?;
    let dict = build_dictionary(params.n, params.n);
    let seeds = trial_seeds(trials, rng);
    let mut values = seeds
        .into_par_iter()
        .map(|seed| {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(seed);
            draw_coherence_sample(kind, params, &dict, &mut trial_rng).map(|s| s.value)
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    values.sort_by(f64::total_cmp);
    let probabilities = (1..=trials).map(|i| i as f64 / trials as f64).collect();
    Ok(EmpiricalCdf {
        kind,
        params,
        values,
        probabilities,
    })
}

/// Both time-varying ratios evaluated on one shared draw, plus the worst
/// per-frame [`selection_core_trace_gap`] across the draw's frames.
#[derive(Debug, Clone, Copy)]
pub struct PairedCoherenceDraw {
    pub rho_ds: f64,
    pub rho_dc: f64,
    pub min_core_trace_gap: f64,
}

/// Samples [`rho_ds`] and [`rho_dc`] on identical supports, frames, and
/// gains, trial by trial, for paired comparisons.
pub fn paired_ds_dc<R: Rng + ?Sized>(
    params: CoherenceParams,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<PairedCoherenceDraw>, AnalysisError> {
    assert!(trials >= 1, "needs at least one trial");
    params.validate(MetricKind::Ds)?;
    let dict = build_dictionary(params.n, params.n);
    let seeds = trial_seeds(trials, rng);
    seeds
        .into_par_iter()
        .map(|seed| {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(seed);
            let s = draw_support(params.n, params.l, &mut trial_rng);
            let s_o = draw_subset(&s, params.l_o, &mut trial_rng);
            let ens = SensingEnsemble::draw(&dict, params.m, params.t, true, &mut trial_rng)?;
            let g = draw_gains(params.l, params.t, &mut trial_rng);
            let ds = score_ratio(
                &ds_scores((0..params.t).map(|k| &ens.frame(k).phi), params.n, &s, &s_o, &g)?,
                &s,
                &s_o,
            );
            let dc = score_ratio(
                &dc_scores((0..params.t).map(|k| &ens.frame(k).phi), params.n, &s, &s_o, &g)?,
                &s,
                &s_o,
            );
            let mut gap = f64::INFINITY;
            for k in 0..params.t {
                gap = gap.min(selection_core_trace_gap(&ens.frame(k).phi, &s, &s_o)?);
            }
            Ok(PairedCoherenceDraw {
                rho_ds: ds,
                rho_dc: dc,
                min_core_trace_gap: gap,
            })
        })
        .collect()
}

/// Which deflation-style estimator a success-probability run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportAlgorithm {
    Dsomp,
    Dcomp,
}

/// Conditional per-iteration success rates: `rates[k]` is the fraction of
/// trials whose `k`-th selection lay in the true support, among the trials
/// whose previous `k` selections were all correct (`attempts[k]` of them).
/// Iterations no trial reaches report a rate of zero.
#[derive(Debug, Clone)]
pub struct IterationSuccess {
    pub rates: Vec<f64>,
    pub attempts: Vec<usize>,
}

/// Runs noiseless on-grid recoveries with time-varying frames and scores
/// each greedy iteration under the conditional protocol above.
pub fn success_prob_per_iteration<R: Rng + ?Sized>(
    algorithm: SupportAlgorithm,
    n: usize,
    m: usize,
    l: usize,
    t: usize,
    trials: usize,
    rng: &mut R,
) -> Result<IterationSuccess, AnalysisError> {
    assert!(trials >= 1, "needs at least one trial");
    // The run is noiseless by construction (the simulator is handed an
    // infinite SNR below); the config's own snr_db is never consulted.
    let cfg = ScenarioConfig {
        n,
        m,
        d: n,
        l,
        t,
        snr_db: 0.0,
        on_grid: true,
        mimo: None,
        wideband: None,
    };
    cfg.validate()?;
    let dict = build_dictionary(n, n);
    let seeds = trial_seeds(trials, rng);
    let runs = seeds
        .into_par_iter()
        .map(|seed| {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = draw_channel(&cfg, &dict, &mut trial_rng);
            let ens = SensingEnsemble::draw(&dict, m, t, true, &mut trial_rng)?;
            let ms = simulate_narrowband(&ch, &ens, f64::INFINITY, &mut trial_rng);
            let phis = ens.phis(t);
            let ys = ms.frame_vectors();
            let selections = match algorithm {
                SupportAlgorithm::Dsomp => dsomp(&phis, &ys, l)?.support,
                SupportAlgorithm::Dcomp => dcomp(&phis, &ys, l)?.support,
            };
            Ok::<_, AnalysisError>((ch.support, selections))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut hits = vec![0usize; l];
    let mut attempts = vec![0usize; l];
    for (support, selections) in &runs {
        for (k, sel) in selections.iter().enumerate() {
            attempts[k] += 1;
            if support.contains(sel) {
                hits[k] += 1;
            } else {
                break;
            }
        }
    }
    let rates = hits
        .iter()
        .zip(&attempts)
        .map(|(&h, &a)| if a == 0 { 0.0 } else { h as f64 / a as f64 })
        .collect();
    Ok(IterationSuccess { rates, attempts })
}
