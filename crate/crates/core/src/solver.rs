//! Constrained KL-regularized preference optimization.
//!
//! Each training step estimates a soft-min lower bound of the secondary
//! preference rates, moves the dual prices λ, recomputes the closed-form
//! importance ratios and takes one behavioral-cloning step toward them.
//! Thresholds and the reference policy are refreshed every `t0` steps.

use crate::domain::{
    log_softmax, softmax_unchecked, DualState, Mode, Policy, PolicyShape, PreferenceDataset,
    PreferenceRecord, Snapshot, TrainResult,
};
use crate::error::{MopoError, Result};
use crate::pareto::{thresholds_from_front, ObjectivePoint, ParetoFront};
use crate::synth::augment_symmetric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::VecDeque;

/// ρ exponents beyond this magnitude are clamped before `exp`.
pub const EXPONENT_CLAMP: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ThresholdMode {
    /// `b = β ⊙ Ĝ` of a lagged snapshot, refreshed on the schedule.
    Adaptive,
    /// `b` stays at its initial value.
    Fixed,
    /// `b` from the insertion-index rule on a supplied front, then fixed.
    ParetoProp {
        front: ParetoFront,
        pi0: ObjectivePoint,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BSchedule {
    /// Refresh from the snapshot `t0` steps back, every `t0` steps.
    EveryT0,
    /// Refresh from the previous step's policy, every step.
    EveryStep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyUpdate {
    /// Cross-entropy to the closed-form target under the reference
    /// distribution; gradient `π_ψ − π*` per context row.
    Expectation,
    /// Mini-batch form `−(1/B) Σ ρ(y_j) ln π_ψ(y_j)`.
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Extraction {
    ClosedForm,
    BcGradient { eta: f64, steps: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tau: f64,
    pub epsilon: f64,
    /// One entry per constraint, or a single entry broadcast to all.
    pub beta: Vec<f64>,
    pub t0: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub batches_per_step: usize,
    pub eta: f64,
    pub seed: u64,
    /// `None`: apply the threshold rule to the reference policy at step 0.
    pub b_init: Option<Vec<f64>>,
    pub policy_shape: PolicyShape,
    pub threshold_mode: ThresholdMode,
    pub b_schedule: BSchedule,
    pub lagged_reference: bool,
    pub policy_update: PolicyUpdate,
    pub chi_init: f64,
    pub lambda_init: f64,
    pub lambda_max: f64,
    /// Train on the symmetric augmentation of the input.
    pub augment: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: 0.1,
            epsilon: 0.15,
            beta: vec![0.9995],
            t0: 500,
            epochs: 20_000,
            batch_size: 12,
            batches_per_step: 1,
            eta: 0.015,
            seed: 0,
            b_init: None,
            policy_shape: PolicyShape::Bandit { n: 3 },
            threshold_mode: ThresholdMode::Adaptive,
            b_schedule: BSchedule::EveryT0,
            lagged_reference: true,
            policy_update: PolicyUpdate::Expectation,
            chi_init: 1.0,
            lambda_init: 0.0,
            lambda_max: 1e6,
            augment: true,
        }
    }
}

impl SolverConfig {
    /// Fixed thresholds taken from the reference policy, no KL slack and a
    /// fixed reference: the run targets the constrained problem itself.
    pub fn constrained(shape: PolicyShape) -> Self {
        SolverConfig {
            epsilon: 0.0,
            threshold_mode: ThresholdMode::Fixed,
            lagged_reference: false,
            policy_shape: shape,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MopoError::Config(m.to_string()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be nonnegative");
        }
        if self.beta.is_empty() || self.beta.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return bad("beta entries must lie in (0,1)");
        }
        if self.t0 == 0 {
            return bad("t0 must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 || self.batches_per_step == 0 {
            return bad("batch size and batch count must be positive");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.chi_init >= 0.0) || !(self.lambda_init >= 0.0) || !(self.lambda_max > 0.0) {
            return bad("multiplier initial values must be nonnegative");
        }
        self.policy_shape
            .validate()
            .map_err(|e| MopoError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    fn beta_for(&self, k: usize) -> f64 {
        if self.beta.len() == 1 {
            self.beta[0]
        } else {
            self.beta[k]
        }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-cell empirical means of the indicators over records whose first
/// element falls in the cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    pub shape: PolicyShape,
    pub counts: Vec<usize>,
    pub mean_p: Vec<f64>,
    /// `mean_q[c][k]`.
    pub mean_q: Vec<Vec<f64>>,
    pub n_records: usize,
}

impl CellStats {
    pub fn from_dataset(d: &PreferenceDataset, shape: PolicyShape) -> Result<Self> {
        check_shape(d, shape)?;
        let kq = d.k_objectives - 1;
        let n = shape.n_cells();
        let mut counts = vec![0usize; n];
        let mut sp = vec![0.0; n];
        let mut sq = vec![vec![0.0; kq]; n];
        for r in &d.records {
            let c = shape.cell_of(r);
            counts[c] += 1;
            sp[c] += r.primary() as u8 as f64;
            for (k, &q) in r.secondary().iter().enumerate() {
                sq[c][k] += q as u8 as f64;
            }
        }
        let mean_p = sp
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        let mean_q = sq
            .into_iter()
            .zip(&counts)
            .map(|(v, &c)| {
                v.into_iter()
                    .map(|s| if c > 0 { s / c as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(CellStats {
            shape,
            counts,
            mean_p,
            mean_q,
            n_records: d.len(),
        })
    }
}

fn check_shape(d: &PreferenceDataset, shape: PolicyShape) -> Result<()> {
    shape.validate()?;
    match (d.mode, shape) {
        (Mode::Bandit { n_actions }, PolicyShape::Bandit { n }) if n == n_actions => Ok(()),
        (Mode::Contextual, PolicyShape::Grid { .. }) => Ok(()),
        _ => Err(MopoError::InvalidArgument(format!(
            "policy shape {shape:?} does not fit dataset mode {:?}",
            d.mode
        ))),
    }
}

/// Closed-form importance ratios per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoTable {
    /// Unclamped `τ⁻¹ m − 1`; cells without data have m = 0, hence −1.
    pub exponents: Vec<f64>,
    /// `exp` of the exponent clamped to ±50.
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
    pub clamped: usize,
}

impl RhoTable {
    /// Table with the given ratios; zero ratios get exponent −∞.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(MopoError::InvalidArgument("ratios must be finite and >= 0".into()));
        }
        Ok(RhoTable {
            exponents: values.iter().map(|v| v.ln()).collect(),
            observed: vec![true; values.len()],
            values,
            clamped: 0,
        })
    }
}

/// `ρ(a) = exp(τ⁻¹ (m_p(a) + λᵀ m_q(a)) − 1)`.
pub fn rho_star(lambda: &[f64], stats: &CellStats, tau: f64) -> RhoTable {
    let n = stats.counts.len();
    let mut exponents = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    let mut clamped = 0;
    for c in 0..n {
        let seen = stats.counts[c] > 0;
        let e = if seen {
            let m = stats.mean_p[c]
                + lambda
                    .iter()
                    .zip(&stats.mean_q[c])
                    .map(|(l, q)| l * q)
                    .sum::<f64>();
            m / tau - 1.0
        } else {
            -1.0
        };
        if e.abs() > EXPONENT_CLAMP {
            clamped += 1;
        }
        exponents.push(e);
        values.push(e.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP).exp());
        observed.push(seen);
    }
    RhoTable {
        exponents,
        values,
        observed,
        clamped,
    }
}

/// Per-constraint weighted values `z[k][j] = ρ_j · q_jk` of one mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub z: Vec<Vec<f64>>,
}

impl Batch {
    pub fn from_records(rho: &[f64], records: &[&PreferenceRecord]) -> Self {
        let kq = records.first().map_or(0, |r| r.k() - 1);
        let z = (0..kq)
            .map(|k| {
                records
                    .iter()
                    .zip(rho)
                    .map(|(r, p)| p * r.secondary()[k] as u8 as f64)
                    .collect()
            })
            .collect();
        Batch { z }
    }
}

/// Returns `(χ ln mean exp(−z/χ), derivative w.r.t. χ)`; χ = 0 is the
/// soft-min limit.
fn soft_min_term(chi: f64, z: &[f64]) -> (f64, f64) {
    let zmin = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let n = z.len() as f64;
    if chi <= 0.0 {
        let ties = z.iter().filter(|&&v| v == zmin).count() as f64;
        return (-zmin, (ties / n).ln());
    }
    // a_j = −(z_j − zmin)/χ ≤ 0
    let mut s = 0.0;
    let mut s_az = 0.0;
    for &v in z {
        let a = -(v - zmin) / chi;
        let e = a.exp();
        s += e;
        s_az += e * (-a);
    }
    let log_mean = (s / n).ln();
    (-zmin + chi * log_mean, log_mean + s_az / s)
}

/// Ĵ(χ) averaged over batches, with its gradient.
pub fn chi_loss(chi: &[f64], batches: &[Batch], epsilon: f64) -> (f64, Vec<f64>) {
    let m = batches.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; chi.len()];
    for b in batches {
        for (k, &c) in chi.iter().enumerate() {
            let (v, dv) = soft_min_term(c, &b.z[k]);
            loss += (v + c * epsilon) / m;
            grad[k] += (dv + epsilon) / m;
        }
    }
    (loss, grad)
}

/// `L_k = −χ_k ln mean exp(−z/χ_k) − χ_k ε`, averaged over batches.
pub fn lower_bound(chi: &[f64], batches: &[Batch], epsilon: f64) -> Vec<f64> {
    let m = batches.len() as f64;
    let mut out = vec![0.0; chi.len()];
    for b in batches {
        for (k, &c) in chi.iter().enumerate() {
            let (v, _) = soft_min_term(c, &b.z[k]);
            out[k] += (-v - c * epsilon) / m;
        }
    }
    out
}

/// Projected semi-gradient step `λ ← clamp(λ + η (b − L), 0, λ_max)`.
pub fn lambda_step(state: &DualState, lower: &[f64], eta: f64, lambda_max: f64) -> Vec<f64> {
    state
        .lambda
        .iter()
        .zip(&state.b)
        .zip(lower)
        .map(|((l, b), lb)| (l + eta * (b - lb)).clamp(0.0, lambda_max))
        .collect()
}

/// `(1/N) Σ ρ_i 𝕀_p − τ ρ_i ln ρ_i` with one ratio per record.
pub fn f_hat(rho: &[f64], records: &[PreferenceRecord], tau: f64) -> f64 {
    let n = records.len() as f64;
    records
        .iter()
        .zip(rho)
        .map(|(r, &p)| p * r.primary() as u8 as f64 - tau * xlogx(p))
        .sum::<f64>()
        / n
}

/// `(1/N) Σ ρ_i 𝕀_q` per constraint.
pub fn g_hat(rho: &[f64], records: &[PreferenceRecord]) -> Vec<f64> {
    let kq = records.first().map_or(0, |r| r.k() - 1);
    let n = records.len() as f64;
    (0..kq)
        .map(|k| {
            records
                .iter()
                .zip(rho)
                .map(|(r, &p)| p * r.secondary()[k] as u8 as f64)
                .sum::<f64>()
                / n
        })
        .collect()
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// F̂ and Ĝ from per-cell ratios and cell statistics.
fn objectives_from_cells(rho: &[f64], stats: &CellStats, tau: f64) -> (f64, Vec<f64>) {
    let n = stats.n_records as f64;
    let kq = stats.mean_q.first().map_or(0, |v| v.len());
    let mut f = 0.0;
    let mut g = vec![0.0; kq];
    for c in 0..rho.len() {
        let cnt = stats.counts[c] as f64;
        if cnt == 0.0 {
            continue;
        }
        f += cnt * (rho[c] * stats.mean_p[c] - tau * xlogx(rho[c]));
        for k in 0..kq {
            g[k] += cnt * rho[c] * stats.mean_q[c][k];
        }
    }
    (f / n, g.into_iter().map(|v| v / n).collect())
}

/// Per-row closed-form policy logits `log π_ref + exponent`, normalized.
fn closed_form_logits(ref_logp: &[f64], exponents: &[f64], cols: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ref_logp.len());
    for (row, (r, e)) in ref_logp.chunks(cols).zip(exponents.chunks(cols)).enumerate() {
        let raw: Vec<f64> = r.iter().zip(e).map(|(a, b)| a + b).collect();
        if raw.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(MopoError::DegenerateRho { row });
        }
        let ls = log_softmax(&raw);
        let top = ls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.extend(ls.into_iter().map(|v| v.max(top - 1000.0)));
    }
    Ok(out)
}

/// Recover a normalized policy from importance ratios.
pub fn extract_policy(rho: &RhoTable, reference: &Policy, mode: Extraction) -> Result<Policy> {
    let shape = reference.shape();
    if rho.exponents.len() != shape.n_cells() {
        return Err(MopoError::DimMismatch {
            expected: shape.n_cells(),
            got: rho.exponents.len(),
        });
    }
    let cols = shape.cols();
    let ref_logp: Vec<f64> = reference.logits().chunks(cols).flat_map(log_softmax).collect();
    let target = closed_form_logits(&ref_logp, &rho.exponents, cols)?;
    match mode {
        Extraction::ClosedForm => Policy::from_logits(shape, target),
        Extraction::BcGradient { eta, steps } => {
            let target_p: Vec<f64> = target.chunks(cols).flat_map(softmax_unchecked).collect();
            let mut psi = reference.logits().to_vec();
            for _ in 0..steps {
                bc_expectation_step(&mut psi, &target_p, cols, eta);
            }
            Policy::from_logits(shape, psi)
        }
    }
}

fn bc_expectation_step(psi: &mut [f64], target_p: &[f64], cols: usize, eta: f64) {
    for (row, t) in psi.chunks_mut(cols).zip(target_p.chunks(cols)) {
        let p = softmax_unchecked(row);
        for ((v, pi), ti) in row.iter_mut().zip(&p).zip(t) {
            *v -= eta * (pi - ti);
        }
    }
}

/// `−Σ_a w_a ln π_ψ(a)` for one row and its gradient `(Σw) π − w`.
pub fn bc_loss(logits: &[f64], weights: &[f64]) -> (f64, Vec<f64>) {
    let lp = log_softmax(logits);
    let p = softmax_unchecked(logits);
    let total: f64 = weights.iter().sum();
    let loss = -weights.iter().zip(&lp).map(|(w, l)| w * l).sum::<f64>();
    let grad = p.iter().zip(weights).map(|(pi, w)| total * pi - w).collect();
    (loss, grad)
}

/// `b_k = β_k · g_k`.
pub fn update_constraints(beta: &[f64], g_prev: &[f64]) -> Vec<f64> {
    g_prev
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let bk = if beta.len() == 1 { beta[0] } else { beta[k] };
            bk * g
        })
        .collect()
}

/// The most recent policy snapshots, indexed by step.
#[derive(Clone, Debug)]
pub struct PolicyHistory {
    shape: PolicyShape,
    first_step: usize,
    depth: usize,
    logits: VecDeque<Vec<f64>>,
}

impl PolicyHistory {
    /// Keeps the last `depth + 1` snapshots, starting with `initial` at step 0.
    pub fn new(initial: &Policy, depth: usize) -> Self {
        let mut logits = VecDeque::with_capacity(depth + 1);
        logits.push_back(initial.logits().to_vec());
        PolicyHistory {
            shape: initial.shape(),
            first_step: 0,
            depth,
            logits,
        }
    }

    /// Appends the snapshot for the next step.
    pub fn push(&mut self, logits: &[f64]) {
        self.logits.push_back(logits.to_vec());
        if self.logits.len() > self.depth + 1 {
            self.logits.pop_front();
            self.first_step += 1;
        }
    }

    pub fn latest_step(&self) -> usize {
        self.first_step + self.logits.len() - 1
    }

    pub fn get(&self, step: usize) -> Option<Policy> {
        let i = step.checked_sub(self.first_step)?;
        let l = self.logits.get(i)?;
        Policy::from_logits(self.shape, l.clone()).ok()
    }
}

/// The snapshot from `t − t0` steps ago, to become the new reference.
pub fn update_reference(history: &PolicyHistory, t: usize, t0: usize) -> Result<Policy> {
    if t0 == 0 || t % t0 != 0 || t < t0 {
        return Err(MopoError::HistoryUnderflow {
            needed: t.saturating_sub(t0),
        });
    }
    history
        .get(t - t0)
        .ok_or(MopoError::HistoryUnderflow { needed: t - t0 })
}

/// Mean of `|λ_k| · (b_k − L_k)` over the last `window` steps, using
/// window-averaged λ and residuals.
pub fn complementary_slackness(history: &[Snapshot], window: usize) -> f64 {
    let w = window.min(history.len()).max(1);
    let tail = &history[history.len() - w..];
    let kq = tail[0].lambda.len();
    (0..kq)
        .map(|k| {
            let lam = tail.iter().map(|s| s.lambda[k]).sum::<f64>() / w as f64;
            let res = tail
                .iter()
                .map(|s| s.b[k] - s.lower_bound[k])
                .sum::<f64>()
                / w as f64;
            (lam * res).abs()
        })
        .fold(0.0, f64::max)
}

fn row_log_softmax(logits: &[f64], cols: usize) -> Vec<f64> {
    logits.chunks(cols).flat_map(log_softmax).collect()
}

fn divergence(step: usize, what: &str, last: Option<&Snapshot>) -> MopoError {
    MopoError::NumericalDivergence {
        step,
        what: what.to_string(),
        last_good: last.cloned().map(Box::new),
    }
}

/// Runs the training loop; bitwise deterministic given the config.
pub fn train(config: &SolverConfig, dataset: &PreferenceDataset) -> Result<TrainResult> {
    config.validate()?;
    let shape = config.policy_shape;
    check_shape(dataset, shape)?;
    if dataset.is_empty() {
        return Err(MopoError::EmptyInput("dataset".into()));
    }
    let data = if config.augment {
        augment_symmetric(dataset)
    } else {
        dataset.clone()
    };
    let kq = data.k_objectives - 1;
    if config.beta.len() != 1 && config.beta.len() != kq {
        return Err(MopoError::Config(format!(
            "beta has {} entries for {kq} constraints",
            config.beta.len()
        )));
    }
    let beta: Vec<f64> = (0..kq).map(|k| config.beta_for(k)).collect();
    let n = data.len();
    let cols = shape.cols();
    let cells: Vec<usize> = data.records.iter().map(|r| shape.cell_of(r)).collect();
    let stats = CellStats::from_dataset(&data, shape)?;
    let reference0 = Policy::uniform(shape)?;
    let ref0_logp = row_log_softmax(reference0.logits(), cols);
    let mut ref_logp = ref0_logp.clone();

    let ratio_to_ref0 = |logp: &[f64]| -> Vec<f64> {
        logp.iter().zip(&ref0_logp).map(|(a, b)| (a - b).exp()).collect()
    };

    let b0 = match (&config.threshold_mode, &config.b_init) {
        (ThresholdMode::ParetoProp { front, pi0 }, _) => thresholds_from_front(front, pi0)?,
        (_, Some(b)) => {
            if b.len() != kq {
                return Err(MopoError::Config(format!(
                    "b_init has {} entries for {kq} constraints",
                    b.len()
                )));
            }
            b.clone()
        }
        (_, None) => {
            let (_, g_ref) = objectives_from_cells(&vec![1.0; shape.n_cells()], &stats, config.tau);
            update_constraints(&beta, &g_ref)
        }
    };
    let mut state = DualState {
        lambda: vec![config.lambda_init; kq],
        chi: vec![config.chi_init; kq],
        b: b0,
        tau: config.tau,
        epsilon: config.epsilon,
        beta: beta.clone(),
        t0: config.t0,
        step: 0,
    };

    let mut psi = reference0.logits().to_vec();
    let mut history = PolicyHistory::new(&reference0, config.t0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rho = rho_star(&state.lambda, &stats, config.tau);
    let mut target_logp = closed_form_logits(&ref_logp, &rho.exponents, cols)?;
    let mut rho_bar = ratio_to_ref0(&target_logp);
    let mut clamp_events = rho.clamped;
    let mut lambda_cap_hits = 0;
    let mut snapshots: Vec<Snapshot> = Vec::with_capacity(config.epochs);
    let adaptive = matches!(config.threshold_mode, ThresholdMode::Adaptive);

    for t in 1..=config.epochs {
        state.step = t;
        let last = snapshots.last();
        if adaptive && config.b_schedule == BSchedule::EveryStep {
            let prev = ratio_to_ref0(&row_log_softmax(&psi, cols));
            let (_, g) = objectives_from_cells(&prev, &stats, config.tau);
            state.b = update_constraints(&beta, &g);
        }

        let mut batches = Vec::with_capacity(config.batches_per_step);
        let mut batch_idx = Vec::with_capacity(config.batches_per_step * config.batch_size);
        for _ in 0..config.batches_per_step {
            let idx: Vec<usize> = (0..config.batch_size).map(|_| rng.gen_range(0..n)).collect();
            let recs: Vec<&PreferenceRecord> = idx.iter().map(|&i| &data.records[i]).collect();
            let r: Vec<f64> = idx.iter().map(|&i| rho_bar[cells[i]]).collect();
            batches.push(Batch::from_records(&r, &recs));
            batch_idx.extend(idx);
        }

        let (_, grad) = chi_loss(&state.chi, &batches, config.epsilon);
        for (c, g) in state.chi.iter_mut().zip(&grad) {
            *c -= config.eta * g;
        }
        state.project();
        let (loss, _) = chi_loss(&state.chi, &batches, config.epsilon);
        let lower = lower_bound(&state.chi, &batches, config.epsilon);
        if !loss.is_finite() || lower.iter().any(|v| !v.is_finite()) {
            return Err(divergence(t, "lower bound", last));
        }

        state.lambda = lambda_step(&state, &lower, config.eta, config.lambda_max);
        if state.lambda.iter().any(|&l| l >= config.lambda_max) {
            lambda_cap_hits += 1;
        }

        rho = rho_star(&state.lambda, &stats, config.tau);
        clamp_events += rho.clamped;
        target_logp = closed_form_logits(&ref_logp, &rho.exponents, cols)?;
        rho_bar = ratio_to_ref0(&target_logp);

        match config.policy_update {
            PolicyUpdate::Expectation => {
                let target_p: Vec<f64> = target_logp.iter().map(|v| v.exp()).collect();
                bc_expectation_step(&mut psi, &target_p, cols, config.eta);
            }
            PolicyUpdate::Sampled => {
                let mut grad = vec![0.0; psi.len()];
                let rows: Vec<Vec<f64>> = psi.chunks(cols).map(softmax_unchecked).collect();
                let m = batch_idx.len() as f64;
                for &i in &batch_idx {
                    let c = cells[i];
                    let (row, col) = (c / cols, c % cols);
                    let w = rho_bar[c] / m;
                    for (j, p) in rows[row].iter().enumerate() {
                        let hit = if j == col { 1.0 } else { 0.0 };
                        grad[row * cols + j] += w * (p - hit);
                    }
                }
                for (v, g) in psi.iter_mut().zip(&grad) {
                    *v -= config.eta * g;
                }
            }
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(divergence(t, "policy logits", last));
        }
        history.push(&psi);

        if t % config.t0 == 0 {
            let snap = update_reference(&history, t, config.t0)?;
            let snap_logp = row_log_softmax(snap.logits(), cols);
            if adaptive && config.b_schedule == BSchedule::EveryT0 {
                let (_, g) = objectives_from_cells(&ratio_to_ref0(&snap_logp), &stats, config.tau);
                state.b = update_constraints(&beta, &g);
            }
            if config.lagged_reference {
                ref_logp = snap_logp;
                target_logp = closed_form_logits(&ref_logp, &rho.exponents, cols)?;
                rho_bar = ratio_to_ref0(&target_logp);
            }
        }

        let policy_logp = row_log_softmax(&psi, cols);
        let rho_pi = ratio_to_ref0(&policy_logp);
        let (f, g) = objectives_from_cells(&rho_pi, &stats, config.tau);
        let probs: Vec<f64> = policy_logp.iter().map(|v| v.exp()).collect();
        let mut marginal = vec![0.0; cols];
        let mut kl = 0.0;
        for (r, row) in probs.chunks(cols).enumerate() {
            for (j, p) in row.iter().enumerate() {
                marginal[j] += p / shape.rows() as f64;
                if *p > 0.0 {
                    kl += p * (policy_logp[r * cols + j] - ref0_logp[r * cols + j]);
                }
            }
        }
        snapshots.push(Snapshot {
            step: t,
            probs: marginal,
            lambda: state.lambda.clone(),
            chi: state.chi.clone(),
            b: state.b.clone(),
            chi_loss: loss,
            f_hat: f,
            g_hat: g,
            lower_bound: lower,
            kl_to_ref: (kl / shape.rows() as f64).max(0.0),
        });
    }

    Ok(TrainResult {
        final_policy: Policy::from_logits(shape, psi)?,
        history: snapshots,
        seed: config.seed,
        config_hash: config.hash(),
        clamp_events,
        lambda_cap_hits,
    })
}

/// Best grid point of the 2-simplex at resolution 1/200 for a three-action
/// bandit dataset under a uniform reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub probs: Vec<f64>,
    pub objective: f64,
    pub g: Vec<f64>,
}

pub const ORACLE_RESOLUTION: usize = 200;

pub fn brute_force_oracle(dataset: &PreferenceDataset, tau: f64, b: &[f64]) -> Result<OracleSolution> {
    if dataset.mode != (Mode::Bandit { n_actions: 3 }) {
        return Err(MopoError::InvalidArgument("oracle needs a 3-action bandit dataset".into()));
    }
    if dataset.is_empty() {
        return Err(MopoError::EmptyInput("dataset".into()));
    }
    let kq = dataset.k_objectives - 1;
    if b.len() != kq {
        return Err(MopoError::DimMismatch {
            expected: kq,
            got: b.len(),
        });
    }
    let shape = PolicyShape::Bandit { n: 3 };
    let stats = CellStats::from_dataset(dataset, shape)?;
    let res = ORACLE_RESOLUTION;
    let mut best: Option<OracleSolution> = None;
    let mut least_violation = f64::INFINITY;
    for i in 0..=res {
        for j in 0..=(res - i) {
            let k = res - i - j;
            let probs = vec![i as f64 / res as f64, j as f64 / res as f64, k as f64 / res as f64];
            let rho: Vec<f64> = probs.iter().map(|p| p * 3.0).collect();
            let (f, g) = objectives_from_cells(&rho, &stats, tau);
            let violation = b
                .iter()
                .zip(&g)
                .map(|(bk, gk)| bk - gk)
                .fold(0.0, f64::max);
            if violation > 1e-12 {
                least_violation = least_violation.min(violation);
                continue;
            }
            if best.as_ref().map_or(true, |s| f > s.objective) {
                best = Some(OracleSolution {
                    probs,
                    objective: f,
                    g,
                });
            }
        }
    }
    best.ok_or(MopoError::Infeasible {
        max_violation: least_violation,
    })
}

/// F̂ and Ĝ of a bandit policy on a dataset under a uniform reference.
pub fn evaluate_bandit(
    policy: &Policy,
    dataset: &PreferenceDataset,
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    let shape = policy.shape();
    check_shape(dataset, shape)?;
    let n = shape.cols() as f64;
    let probs = policy.probabilities();
    let rho: Vec<f64> = dataset
        .records
        .iter()
        .map(|r| probs[shape.cell_of(r)] * n)
        .collect();
    Ok((f_hat(&rho, &dataset.records, tau), g_hat(&rho, &dataset.records)))
}
