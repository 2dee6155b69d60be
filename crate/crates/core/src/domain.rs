//! Shared value types: preference records and datasets, policies over a
//! finite action set or a context×action grid, and the solver's dual state.

use crate::error::{MopoError, Result};
use serde::{Deserialize, Serialize};

/// Whether records carry a context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Context-free bandit over actions `0..n_actions`.
    Bandit { n_actions: usize },
    /// Contexts and actions are reals in `[0,1]`.
    Contextual,
}

/// One labeled comparison. `indicators[k]` is true iff `y` beats `y_prime`
/// under objective `k`. The last objective is the primary one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    /// `None` in bandit mode.
    pub context: Option<f64>,
    pub y: f64,
    pub y_prime: f64,
    pub indicators: Vec<bool>,
}

impl PreferenceRecord {
    pub fn bandit(y: usize, y_prime: usize, indicators: &[bool]) -> Self {
        PreferenceRecord {
            context: None,
            y: y as f64,
            y_prime: y_prime as f64,
            indicators: indicators.to_vec(),
        }
    }

    pub fn contextual(x: f64, y: f64, y_prime: f64, indicators: &[bool]) -> Self {
        PreferenceRecord {
            context: Some(x),
            y,
            y_prime,
            indicators: indicators.to_vec(),
        }
    }

    pub fn k(&self) -> usize {
        self.indicators.len()
    }

    /// Indicator of the primary (last) objective.
    pub fn primary(&self) -> bool {
        *self.indicators.last().expect("record with no indicators")
    }

    /// Indicators of the first K-1 objectives.
    pub fn secondary(&self) -> &[bool] {
        &self.indicators[..self.indicators.len().saturating_sub(1)]
    }

    /// The same comparison seen from the other side, every bit flipped.
    pub fn swapped(&self) -> Self {
        PreferenceRecord {
            context: self.context,
            y: self.y_prime,
            y_prime: self.y,
            indicators: self.indicators.iter().map(|b| !b).collect(),
        }
    }

    /// Action index of `y` in bandit mode.
    pub fn action(&self) -> usize {
        self.y as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    pub records: Vec<PreferenceRecord>,
    pub k_objectives: usize,
    pub mode: Mode,
}

impl PreferenceDataset {
    /// Validates the shared-K and context invariants.
    pub fn new(records: Vec<PreferenceRecord>, k_objectives: usize, mode: Mode) -> Result<Self> {
        if k_objectives == 0 {
            return Err(MopoError::InvalidArgument("K must be positive".into()));
        }
        for r in &records {
            if r.k() != k_objectives {
                return Err(MopoError::DimMismatch {
                    expected: k_objectives,
                    got: r.k(),
                });
            }
            match mode {
                Mode::Bandit { n_actions } => {
                    if r.context.is_some() {
                        return Err(MopoError::InvalidArgument(
                            "bandit records must not carry a context".into(),
                        ));
                    }
                    for a in [r.y, r.y_prime] {
                        if a < 0.0 || a.fract() != 0.0 || a as usize >= n_actions {
                            return Err(MopoError::InvalidArgument(format!(
                                "action {a} outside 0..{n_actions}"
                            )));
                        }
                    }
                }
                Mode::Contextual => {
                    let x = r.context.ok_or_else(|| {
                        MopoError::InvalidArgument("contextual record without context".into())
                    })?;
                    for v in [x, r.y, r.y_prime] {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(MopoError::DomainError { x, y: v });
                        }
                    }
                }
            }
        }
        Ok(PreferenceDataset {
            records,
            k_objectives,
            mode,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Softmax with max-shift. Rejects non-finite logits.
pub fn softmax_probs(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(MopoError::NonFiniteInput("logit".into()));
    }
    if logits.is_empty() {
        return Err(MopoError::EmptyInput("logits".into()));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

/// KL(p‖q) with `0·ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(MopoError::DimMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(MopoError::SupportMismatch(format!(
                    "q[{i}] = {qi} where p[{i}] = {pi}"
                )));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// Distribution over `n` actions, stored as logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub logits: Vec<f64>,
}

impl TabularPolicy {
    pub fn uniform(n: usize) -> Self {
        TabularPolicy {
            logits: vec![0.0; n],
        }
    }

    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        softmax_probs(&logits)?;
        Ok(TabularPolicy { logits })
    }

    /// Logits are log-probabilities of `probs`; zero entries are rejected.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(MopoError::InvalidArgument(
                "probabilities must be strictly positive".into(),
            ));
        }
        Ok(TabularPolicy {
            logits: probs.iter().map(|p| p.ln()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.logits.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax_unchecked(&self.logits)
    }
}

/// One softmax row per context bin over uniform action bins on `[0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    pub bx: usize,
    pub by: usize,
    /// Row-major `bx × by`.
    pub logits: Vec<f64>,
}

impl GridPolicy {
    pub fn uniform(bx: usize, by: usize) -> Result<Self> {
        Self::from_logits(bx, by, vec![0.0; bx * by])
    }

    pub fn from_logits(bx: usize, by: usize, logits: Vec<f64>) -> Result<Self> {
        if bx < 1 || by < 2 {
            return Err(MopoError::InvalidArgument(format!(
                "grid needs bx >= 1 and by >= 2, got {bx}x{by}"
            )));
        }
        if logits.len() != bx * by {
            return Err(MopoError::DimMismatch {
                expected: bx * by,
                got: logits.len(),
            });
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(MopoError::NonFiniteInput("logit".into()));
        }
        Ok(GridPolicy { bx, by, logits })
    }

    pub fn row_probabilities(&self, i: usize) -> Vec<f64> {
        softmax_unchecked(&self.logits[i * self.by..(i + 1) * self.by])
    }

    pub fn x_bin(&self, x: f64) -> usize {
        bin_of(x, self.bx)
    }

    pub fn y_bin(&self, y: f64) -> usize {
        bin_of(y, self.by)
    }

    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.bx as f64
    }

    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.by as f64
    }
}

pub(crate) fn bin_of(v: f64, n: usize) -> usize {
    ((v * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Layout of a policy's parameter table: `rows` contexts × `cols` actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyShape {
    Bandit { n: usize },
    Grid { bx: usize, by: usize },
}

impl PolicyShape {
    pub fn rows(&self) -> usize {
        match *self {
            PolicyShape::Bandit { .. } => 1,
            PolicyShape::Grid { bx, .. } => bx,
        }
    }

    pub fn cols(&self) -> usize {
        match *self {
            PolicyShape::Bandit { n } => n,
            PolicyShape::Grid { by, .. } => by,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Cell of the record's first element.
    pub fn cell_of(&self, r: &PreferenceRecord) -> usize {
        match *self {
            PolicyShape::Bandit { n } => r.action().min(n - 1),
            PolicyShape::Grid { bx, by } => {
                bin_of(r.context.unwrap_or(0.0), bx) * by + bin_of(r.y, by)
            }
        }
    }

    /// Cell of the record's second element.
    pub fn cell_of_prime(&self, r: &PreferenceRecord) -> usize {
        match *self {
            PolicyShape::Bandit { n } => (r.y_prime as usize).min(n - 1),
            PolicyShape::Grid { bx, by } => {
                bin_of(r.context.unwrap_or(0.0), bx) * by + bin_of(r.y_prime, by)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicyShape::Bandit { n } if n < 1 => {
                Err(MopoError::InvalidArgument("bandit needs n >= 1".into()))
            }
            PolicyShape::Grid { bx, by } if bx < 1 || by < 2 => Err(MopoError::InvalidArgument(
                format!("grid needs bx >= 1 and by >= 2, got {bx}x{by}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    Tabular(TabularPolicy),
    Grid(GridPolicy),
}

impl Policy {
    pub fn uniform(shape: PolicyShape) -> Result<Self> {
        shape.validate()?;
        Ok(match shape {
            PolicyShape::Bandit { n } => Policy::Tabular(TabularPolicy::uniform(n)),
            PolicyShape::Grid { bx, by } => Policy::Grid(GridPolicy::uniform(bx, by)?),
        })
    }

    pub fn from_logits(shape: PolicyShape, logits: Vec<f64>) -> Result<Self> {
        Ok(match shape {
            PolicyShape::Bandit { n } => {
                if logits.len() != n {
                    return Err(MopoError::DimMismatch {
                        expected: n,
                        got: logits.len(),
                    });
                }
                Policy::Tabular(TabularPolicy::from_logits(logits)?)
            }
            PolicyShape::Grid { bx, by } => Policy::Grid(GridPolicy::from_logits(bx, by, logits)?),
        })
    }

    pub fn shape(&self) -> PolicyShape {
        match self {
            Policy::Tabular(p) => PolicyShape::Bandit { n: p.n() },
            Policy::Grid(g) => PolicyShape::Grid { bx: g.bx, by: g.by },
        }
    }

    pub fn logits(&self) -> &[f64] {
        match self {
            Policy::Tabular(p) => &p.logits,
            Policy::Grid(g) => &g.logits,
        }
    }

    /// Row-wise softmax, flattened row-major.
    pub fn probabilities(&self) -> Vec<f64> {
        let cols = self.shape().cols();
        self.logits()
            .chunks(cols)
            .flat_map(softmax_unchecked)
            .collect()
    }

    /// Action marginal with contexts weighted uniformly.
    pub fn action_marginal(&self) -> Vec<f64> {
        let shape = self.shape();
        let (rows, cols) = (shape.rows(), shape.cols());
        let p = self.probabilities();
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c] += p[r * cols + c] / rows as f64;
            }
        }
        out
    }

    /// Mean over context rows of KL(self‖other).
    pub fn kl_to(&self, other: &Policy) -> Result<f64> {
        let shape = self.shape();
        if shape != other.shape() {
            return Err(MopoError::InvalidArgument("policy shapes differ".into()));
        }
        let cols = shape.cols();
        let (p, q) = (self.probabilities(), other.probabilities());
        let mut total = 0.0;
        for (pr, qr) in p.chunks(cols).zip(q.chunks(cols)) {
            total += kl_divergence(pr, qr)?;
        }
        Ok(total / shape.rows() as f64)
    }
}

/// Live multipliers and schedule parameters of the solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub chi: Vec<f64>,
    pub b: Vec<f64>,
    pub tau: f64,
    pub epsilon: f64,
    pub beta: Vec<f64>,
    pub t0: usize,
    pub step: usize,
}

impl DualState {
    /// Clamps multipliers onto the nonnegative orthant.
    pub fn project(&mut self) {
        for v in self.lambda.iter_mut().chain(self.chi.iter_mut()) {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
    }
}

/// Per-step training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    /// Action probabilities (bandit) or the context-averaged action marginal (grid).
    pub probs: Vec<f64>,
    pub lambda: Vec<f64>,
    pub chi: Vec<f64>,
    pub b: Vec<f64>,
    pub chi_loss: f64,
    pub f_hat: f64,
    pub g_hat: Vec<f64>,
    pub lower_bound: Vec<f64>,
    pub kl_to_ref: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub final_policy: Policy,
    pub history: Vec<Snapshot>,
    pub seed: u64,
    pub config_hash: String,
    /// Number of ρ exponents that hit the ±50 clamp.
    pub clamp_events: usize,
    /// Steps on which some λ_k was capped at the configured maximum.
    pub lambda_cap_hits: usize,
}
