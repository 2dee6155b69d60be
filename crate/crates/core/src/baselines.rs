//! Comparison methods: DPO on single-label data and the analytic
//! constrained policy that maximizes r₁ subject to r₂ ≥ b per context.

use crate::domain::{
    log_softmax, softmax_unchecked, Mode, Policy, PolicyShape, PreferenceDataset, Snapshot,
    TabularPolicy,
};
use crate::error::{MopoError, Result};
use crate::pareto::{x_grid, y_grid, ObjectivePoint};
use crate::synth::{sigmoid, RewardModel, RewardSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpoConfig {
    pub beta_dpo: f64,
    pub eta: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub policy_shape: PolicyShape,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig {
            beta_dpo: 0.1,
            eta: 0.01,
            steps: 20_000,
            batch_size: 12,
            seed: 0,
            policy_shape: PolicyShape::Grid { bx: 4, by: 16 },
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_dpo > 0.0 && self.beta_dpo.is_finite()) {
            return Err(MopoError::Config("beta_dpo must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(MopoError::Config("eta must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(MopoError::Config("batch size must be positive".into()));
        }
        self.policy_shape
            .validate()
            .map_err(|e| MopoError::Config(e.to_string()))
    }
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// `−ln σ(β [ln π(y_w)/π_ref(y_w) − ln π(y_l)/π_ref(y_l)])` with its
/// gradient with respect to the policy logits.
pub fn dpo_loss_grad(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    winner: usize,
    loser: usize,
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = policy.n();
    if reference.n() != n {
        return Err(MopoError::DimMismatch {
            expected: n,
            got: reference.n(),
        });
    }
    if winner >= n || loser >= n {
        return Err(MopoError::InvalidArgument(format!(
            "action index outside 0..{n}"
        )));
    }
    let rp = reference.probabilities();
    if rp[winner] <= 0.0 || rp[loser] <= 0.0 {
        return Err(MopoError::SupportMismatch(
            "reference assigns zero probability to a compared action".into(),
        ));
    }
    let lp = log_softmax(&policy.logits);
    let lr = log_softmax(&reference.logits);
    let h = beta * ((lp[winner] - lr[winner]) - (lp[loser] - lr[loser]));
    let loss = softplus(-h);
    let mut grad = vec![0.0; n];
    if winner != loser {
        let s = -beta * sigmoid(-h);
        grad[winner] += s;
        grad[loser] -= s;
    }
    Ok((loss, grad))
}

pub fn dpo_loss(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    winner: usize,
    loser: usize,
    beta: f64,
) -> Result<f64> {
    dpo_loss_grad(policy, reference, winner, loser, beta).map(|(l, _)| l)
}

/// Mini-batch gradient descent on the mean DPO loss against a uniform
/// reference. Records carry one label: `y` won iff the indicator is set.
pub fn train_dpo(dataset: &PreferenceDataset, config: &DpoConfig) -> Result<Policy> {
    train_dpo_traced(dataset, config).map(|(p, _)| p)
}

/// [`train_dpo`] plus one history snapshot per step in the solver's layout.
/// Constraint fields are empty; `f_hat` holds the mean mini-batch DPO loss.
pub fn train_dpo_traced(
    dataset: &PreferenceDataset,
    config: &DpoConfig,
) -> Result<(Policy, Vec<Snapshot>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(MopoError::EmptyInput("dataset".into()));
    }
    if dataset.k_objectives != 1 {
        return Err(MopoError::InvalidArgument(format!(
            "DPO needs single-label records, got K={}",
            dataset.k_objectives
        )));
    }
    let shape = config.policy_shape;
    match (dataset.mode, shape) {
        (Mode::Bandit { n_actions }, PolicyShape::Bandit { n }) if n == n_actions => {}
        (Mode::Contextual, PolicyShape::Grid { .. }) => {}
        _ => {
            return Err(MopoError::InvalidArgument(
                "policy shape does not fit dataset mode".into(),
            ))
        }
    }
    let cols = shape.cols();
    let pairs: Vec<(usize, usize, usize)> = dataset
        .records
        .iter()
        .map(|r| {
            let (a, b) = (shape.cell_of(r), shape.cell_of_prime(r));
            let (w, l) = if r.primary() { (a, b) } else { (b, a) };
            (w / cols, w % cols, l % cols)
        })
        .collect();
    let reference = TabularPolicy::uniform(cols);
    let mut logits = vec![0.0; shape.n_cells()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let m = config.batch_size as f64;
    let uniform = Policy::uniform(shape)?;
    let mut history = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let mut grad = vec![0.0; logits.len()];
        let mut loss = 0.0;
        for _ in 0..config.batch_size {
            let (row, w, l) = pairs[rng.gen_range(0..pairs.len())];
            let row_policy = TabularPolicy {
                logits: logits[row * cols..(row + 1) * cols].to_vec(),
            };
            let (lv, g) = dpo_loss_grad(&row_policy, &reference, w, l, config.beta_dpo)?;
            loss += lv / m;
            for (j, gj) in g.into_iter().enumerate() {
                grad[row * cols + j] += gj / m;
            }
        }
        for (v, g) in logits.iter_mut().zip(&grad) {
            *v -= config.eta * g;
        }
        let policy = Policy::from_logits(shape, logits.clone())?;
        history.push(Snapshot {
            step,
            probs: policy.action_marginal(),
            lambda: Vec::new(),
            chi: Vec::new(),
            b: Vec::new(),
            chi_loss: 0.0,
            f_hat: loss,
            g_hat: Vec::new(),
            lower_bound: Vec::new(),
            kl_to_ref: policy.kl_to(&uniform)?,
        });
    }
    Ok((Policy::from_logits(shape, logits)?, history))
}

/// Deterministic policy `x ↦ argmax r₁(x, y)` subject to `r₂(x, y) ≥ b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopPolicy {
    pub b: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Bins where no y satisfies the constraint; these take the r₂ maximizer.
    pub infeasible: Vec<bool>,
    pub point: ObjectivePoint,
}

pub fn cop_policy(set: RewardSet, b: f64, grid: usize) -> Result<CopPolicy> {
    if grid < 64 {
        return Err(MopoError::InvalidArgument(format!(
            "COP grid must be at least 64, got {grid}"
        )));
    }
    let [m1, m2] = RewardModel::pair(set);
    let xs = x_grid(grid);
    let ys = y_grid(grid);
    let mut ychosen = Vec::with_capacity(grid);
    let mut infeasible = Vec::with_capacity(grid);
    let (mut s1, mut s2) = (0.0, 0.0);
    for &x in &xs {
        let mut best: Option<(f64, f64)> = None;
        let mut fallback = (f64::NEG_INFINITY, 0.0);
        for &y in &ys {
            let (a, c) = (m1.value(x, y), m2.value(x, y));
            if c > fallback.0 {
                fallback = (c, y);
            }
            if c >= b && best.map_or(true, |(v, _)| a > v) {
                best = Some((a, y));
            }
        }
        let y = match best {
            Some((_, y)) => {
                infeasible.push(false);
                y
            }
            None => {
                infeasible.push(true);
                fallback.1
            }
        };
        ychosen.push(y);
        s1 += m1.value(x, y);
        s2 += m2.value(x, y);
    }
    let n = xs.len() as f64;
    Ok(CopPolicy {
        b,
        x: xs,
        y: ychosen,
        infeasible,
        point: ObjectivePoint::new(vec![s1 / n, s2 / n]),
    })
}

/// `n_b` thresholds spanning the range of r₂ on the grid.
pub fn cop_sweep(set: RewardSet, n_b: usize, grid: usize) -> Result<Vec<CopPolicy>> {
    if n_b < 2 {
        return Err(MopoError::InvalidArgument("sweep needs at least 2 thresholds".into()));
    }
    let m2 = RewardModel::new(set, 2);
    let xs = x_grid(grid.max(1));
    let ys = y_grid(grid.max(2));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in &xs {
        for &y in &ys {
            let v = m2.value(x, y);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (0..n_b)
        .map(|i| cop_policy(set, lo + (hi - lo) * i as f64 / (n_b - 1) as f64, grid))
        .collect()
}

/// Probability table of a DPO-trained policy, for reports.
pub fn policy_table(policy: &Policy) -> Vec<Vec<f64>> {
    let cols = policy.shape().cols();
    policy.logits().chunks(cols).map(softmax_unchecked).collect()
}
