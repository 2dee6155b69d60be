//! Synthetic rewards, Bradley-Terry labeling and dataset builders.

use crate::domain::{Mode, PreferenceDataset, PreferenceRecord};
use crate::error::{MopoError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardSet {
    A,
    B,
}

impl std::str::FromStr for RewardSet {
    type Err = MopoError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(RewardSet::A),
            "B" | "b" => Ok(RewardSet::B),
            _ => Err(MopoError::Config(format!("unknown reward set {s:?}"))),
        }
    }
}

impl std::fmt::Display for RewardSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RewardSet::A => write!(f, "A"),
            RewardSet::B => write!(f, "B"),
        }
    }
}

/// One analytic reward r_k(x, y) on `[0,1]²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardModel {
    pub set: RewardSet,
    /// 1 or 2.
    pub objective: u8,
}

impl RewardModel {
    pub fn new(set: RewardSet, objective: u8) -> Self {
        assert!(objective == 1 || objective == 2, "objective must be 1 or 2");
        RewardModel { set, objective }
    }

    /// Both objectives of a set, in order.
    pub fn pair(set: RewardSet) -> [RewardModel; 2] {
        [RewardModel::new(set, 1), RewardModel::new(set, 2)]
    }

    /// Formula value without domain checks.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match (self.set, self.objective) {
            (RewardSet::A, 1) => x.exp() + y.sqrt() - y,
            (RewardSet::A, _) => -x.sin() - y * y,
            (RewardSet::B, 1) => (x + y) * (x + y),
            (RewardSet::B, _) => ((1.0 + x) / (1.0 + y)).ln(),
        }
    }
}

pub fn eval_reward(model: RewardModel, x: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(MopoError::DomainError { x, y });
    }
    Ok(model.value(x, y))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BtForm {
    /// r / (r + r'), positive rewards only.
    Ratio,
    /// exp(r) / (exp(r) + exp(r')).
    #[default]
    Logistic,
}

impl std::str::FromStr for BtForm {
    type Err = MopoError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(BtForm::Ratio),
            "logistic" => Ok(BtForm::Logistic),
            _ => Err(MopoError::Config(format!("unknown Bradley-Terry form {s:?}"))),
        }
    }
}

/// Probability that the item with reward `r` beats the one with `r_prime`.
pub fn bt_prob(r: f64, r_prime: f64, form: BtForm) -> Result<f64> {
    if !r.is_finite() || !r_prime.is_finite() {
        return Err(MopoError::NonFiniteInput("reward".into()));
    }
    match form {
        BtForm::Ratio => {
            if r <= 0.0 || r_prime <= 0.0 {
                return Err(MopoError::InvalidRatioForm { r, r_prime });
            }
            Ok(r / (r + r_prime))
        }
        BtForm::Logistic => Ok(sigmoid(r - r_prime)),
    }
}

pub(crate) fn sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Draws a winner; `true` means `y` wins.
pub fn sample_preference<R: Rng + ?Sized>(
    rng: &mut R,
    x: f64,
    y: f64,
    y_prime: f64,
    model: RewardModel,
    form: BtForm,
) -> Result<bool> {
    let p = bt_prob(eval_reward(model, x, y)?, eval_reward(model, x, y_prime)?, form)?;
    Ok(rng.gen::<f64>() < p)
}

/// The four single-label variants plus the two-label dataset they share
/// triples with.
#[derive(Clone, Debug, PartialEq)]
pub struct MotivatingDatasets {
    /// Labeled by r₁.
    pub d1: PreferenceDataset,
    /// Labeled by r₂.
    pub d2: PreferenceDataset,
    /// Records where the r₁ and r₂ labels agree.
    pub dj: PreferenceDataset,
    /// Labeled by w·r₁ + (1−w)·r₂.
    pub dc: PreferenceDataset,
    /// Both labels, indicators ordered (r₁, r₂).
    pub joint: PreferenceDataset,
}

/// Per-record stream of the build RNG.
pub(crate) fn record_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn build_motivating_datasets(
    n: usize,
    seed: u64,
    set: RewardSet,
    w: f64,
    form: BtForm,
) -> Result<MotivatingDatasets> {
    if n == 0 {
        return Err(MopoError::InvalidArgument("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(MopoError::InvalidArgument(format!("w={w} outside [0,1]")));
    }
    let [m1, m2] = RewardModel::pair(set);
    let (mut d1, mut d2, mut dj, mut dc, mut joint) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let mut rng = record_rng(seed, i);
        let x: f64 = rng.gen();
        let y: f64 = rng.gen();
        let yp: f64 = rng.gen();
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let (a1, b1) = (m1.value(x, y), m1.value(x, yp));
        let (a2, b2) = (m2.value(x, y), m2.value(x, yp));
        let l1 = u1 < bt_prob(a1, b1, form)?;
        let l2 = u2 < bt_prob(a2, b2, form)?;
        // DC reuses the r₁ uniform so that w = 1 reproduces D1 exactly.
        let lc = u1 < bt_prob(w * a1 + (1.0 - w) * a2, w * b1 + (1.0 - w) * b2, form)?;
        d1.push(PreferenceRecord::contextual(x, y, yp, &[l1]));
        d2.push(PreferenceRecord::contextual(x, y, yp, &[l2]));
        if l1 == l2 {
            dj.push(PreferenceRecord::contextual(x, y, yp, &[l1]));
        }
        dc.push(PreferenceRecord::contextual(x, y, yp, &[lc]));
        joint.push(PreferenceRecord::contextual(x, y, yp, &[l1, l2]));
    }
    Ok(MotivatingDatasets {
        d1: PreferenceDataset::new(d1, 1, Mode::Contextual)?,
        d2: PreferenceDataset::new(d2, 1, Mode::Contextual)?,
        dj: PreferenceDataset::new(dj, 1, Mode::Contextual)?,
        dc: PreferenceDataset::new(dc, 1, Mode::Contextual)?,
        joint: PreferenceDataset::new(joint, 2, Mode::Contextual)?,
    })
}

/// The five three-action datasets with two objectives.
pub fn canonical_dataset(id: usize) -> Result<PreferenceDataset> {
    const T: bool = true;
    const F: bool = false;
    let triples: &[(usize, usize, [bool; 2])] = match id {
        1 => &[(0, 1, [T, T]), (1, 2, [T, T]), (0, 2, [T, T])],
        2 => &[(0, 1, [T, T]), (0, 2, [T, F]), (1, 2, [F, F])],
        3 => &[(0, 1, [T, T]), (0, 2, [T, F]), (1, 2, [T, F])],
        4 => &[(0, 1, [T, F]), (0, 2, [F, T]), (1, 2, [F, F])],
        5 => &[(0, 1, [T, T]), (1, 0, [F, T])],
        _ => return Err(MopoError::UnknownDataset(id)),
    };
    let records = triples
        .iter()
        .map(|(a, b, ind)| PreferenceRecord::bandit(*a, *b, ind))
        .collect();
    PreferenceDataset::new(records, 2, Mode::Bandit { n_actions: 3 })
}

/// Originals followed by their swapped, bit-flipped twins.
pub fn augment_symmetric(d: &PreferenceDataset) -> PreferenceDataset {
    let mut records = d.records.clone();
    records.extend(d.records.iter().map(PreferenceRecord::swapped));
    PreferenceDataset {
        records,
        k_objectives: d.k_objectives,
        mode: d.mode,
    }
}

/// Three-action, two-objective bandit data in which every unordered action
/// pair is compared `reps` times. Each (pair, objective) gets its own win
/// probability drawn from U[0,1]; labels are Bernoulli draws from it.
pub fn random_bandit_dataset(seed: u64, reps: usize) -> Result<PreferenceDataset> {
    if reps == 0 {
        return Err(MopoError::InvalidArgument("reps must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(3 * reps);
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let p: [f64; 2] = [rng.gen(), rng.gen()];
        for _ in 0..reps {
            let ind = [rng.gen::<f64>() < p[0], rng.gen::<f64>() < p[1]];
            records.push(PreferenceRecord::bandit(a, b, &ind));
        }
    }
    PreferenceDataset::new(records, 2, Mode::Bandit { n_actions: 3 })
}
