//! Dominance, Pareto fronts, insertion-index thresholds, a scalarization-sweep
//! ground-truth front for the synthetic reward sets, and proximity metrics.

use crate::domain::{GridPolicy, Policy};
use crate::error::{MopoError, Result};
use crate::synth::{RewardModel, RewardSet};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub values: Vec<f64>,
}

impl ObjectivePoint {
    pub fn new(values: Vec<f64>) -> Self {
        ObjectivePoint { values }
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }
}

impl From<Vec<f64>> for ObjectivePoint {
    fn from(values: Vec<f64>) -> Self {
        ObjectivePoint { values }
    }
}

/// Mutually non-dominated points plus per-objective ascending views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<ObjectivePoint>,
    pub sorted: Vec<Vec<f64>>,
}

impl ParetoFront {
    fn from_points(points: Vec<ObjectivePoint>) -> Self {
        let k = points.first().map_or(0, |p| p.k());
        let sorted = (0..k)
            .map(|j| {
                let mut v: Vec<f64> = points.iter().map(|p| p.values[j]).collect();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        ParetoFront { points, sorted }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Strict dominance: no worse anywhere, better somewhere.
pub fn dominates(u: &ObjectivePoint, v: &ObjectivePoint) -> Result<bool> {
    if u.k() != v.k() {
        return Err(MopoError::DimMismatch {
            expected: u.k(),
            got: v.k(),
        });
    }
    Ok(dominates_unchecked(&u.values, &v.values))
}

fn dominates_unchecked(u: &[f64], v: &[f64]) -> bool {
    let mut strict = false;
    for (a, b) in u.iter().zip(v) {
        if a < b {
            return false;
        }
        if a > b {
            strict = true;
        }
    }
    strict
}

/// Non-dominated subset, exact duplicates collapsed, first-seen order kept.
pub fn pareto_front(points: &[ObjectivePoint]) -> Result<ParetoFront> {
    let first = points
        .first()
        .ok_or_else(|| MopoError::EmptyInput("points".into()))?;
    let k = first.k();
    for p in points {
        if p.k() != k {
            return Err(MopoError::DimMismatch {
                expected: k,
                got: p.k(),
            });
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(MopoError::NonFiniteInput("objective value".into()));
        }
    }
    let mut kept: Vec<ObjectivePoint> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let dominated = points
            .iter()
            .any(|q| dominates_unchecked(&q.values, &p.values));
        let duplicate = points[..i].iter().any(|q| q.values == p.values);
        if !dominated && !duplicate {
            kept.push(p.clone());
        }
    }
    Ok(ParetoFront::from_points(kept))
}

/// Smallest `j` with `list[j] >= alpha`, or `list.len()` when none.
pub fn insertion_index(list: &[f64], alpha: f64) -> Result<usize> {
    if list.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(MopoError::NotSorted);
    }
    Ok(list.partition_point(|&v| v < alpha))
}

/// `b_k = P_k(max(0, j_k − 1))` for the first K−1 objectives.
pub fn thresholds_from_front(front: &ParetoFront, pi0: &ObjectivePoint) -> Result<Vec<f64>> {
    if front.is_empty() {
        return Err(MopoError::EmptyInput("front".into()));
    }
    let k = front.sorted.len();
    if pi0.k() != k {
        return Err(MopoError::DimMismatch {
            expected: k,
            got: pi0.k(),
        });
    }
    (0..k.saturating_sub(1))
        .map(|j| {
            let list = &front.sorted[j];
            let idx = insertion_index(list, pi0.values[j])?;
            Ok(list[idx.saturating_sub(1).min(list.len() - 1)])
        })
        .collect()
}

/// Evaluation grid: `nx` context bin centers and an inclusive `ny`-point action grid.
pub fn x_grid(nx: usize) -> Vec<f64> {
    (0..nx).map(|i| (i as f64 + 0.5) / nx as f64).collect()
}

pub fn y_grid(ny: usize) -> Vec<f64> {
    (0..ny).map(|j| j as f64 / (ny - 1) as f64).collect()
}

/// One point of the scalarization sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub w: f64,
    pub point: ObjectivePoint,
}

/// Raw sweep over w ∈ linspace(0, 1, w_steps) of deterministic argmax policies.
pub fn scalarization_sweep(
    set: RewardSet,
    grid_x: usize,
    grid_y: usize,
    w_steps: usize,
) -> Result<Vec<SweepPoint>> {
    if grid_x < 16 || grid_y < 16 || w_steps < 2 {
        return Err(MopoError::InvalidArgument(format!(
            "front needs grids >= 16 and w_steps >= 2, got {grid_x}, {grid_y}, {w_steps}"
        )));
    }
    let [m1, m2] = RewardModel::pair(set);
    let xs = x_grid(grid_x);
    let ys = y_grid(grid_y);
    let table: Vec<Vec<(f64, f64)>> = xs
        .iter()
        .map(|&x| ys.iter().map(|&y| (m1.value(x, y), m2.value(x, y))).collect())
        .collect();
    let mut out = Vec::with_capacity(w_steps);
    for s in 0..w_steps {
        let w = s as f64 / (w_steps - 1) as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for row in &table {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (j, &(a, b)) in row.iter().enumerate() {
                let v = w * a + (1.0 - w) * b;
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            s1 += row[best].0;
            s2 += row[best].1;
        }
        out.push(SweepPoint {
            w,
            point: ObjectivePoint::new(vec![s1 / xs.len() as f64, s2 / xs.len() as f64]),
        });
    }
    Ok(out)
}

pub fn ground_truth_front(
    set: RewardSet,
    grid_x: usize,
    grid_y: usize,
    w_steps: usize,
) -> Result<ParetoFront> {
    let sweep = scalarization_sweep(set, grid_x, grid_y, w_steps)?;
    let pts: Vec<ObjectivePoint> = sweep.into_iter().map(|s| s.point).collect();
    pareto_front(&pts)
}

/// Expected rewards of a policy with `x_points` context quadrature nodes
/// mapped onto the policy's rows and actions at the policy's bin centers.
/// A tabular policy is read as a context-free grid over `[0,1]`.
pub fn policy_objective_point(
    policy: &Policy,
    models: &[RewardModel],
    x_points: usize,
) -> Result<ObjectivePoint> {
    let grid = match policy {
        Policy::Grid(g) => g.clone(),
        Policy::Tabular(t) => GridPolicy::from_logits(1, t.n(), t.logits.clone())?,
    };
    if x_points == 0 {
        return Err(MopoError::InvalidArgument("x_points must be positive".into()));
    }
    let rows: Vec<Vec<f64>> = (0..grid.bx).map(|i| grid.row_probabilities(i)).collect();
    let xs = x_grid(x_points);
    let values = models
        .iter()
        .map(|m| {
            let mut total = 0.0;
            for &x in &xs {
                let probs = &rows[grid.x_bin(x)];
                let mut e = 0.0;
                for (j, p) in probs.iter().enumerate() {
                    e += p * m.value(x, grid.y_center(j));
                }
                total += e;
            }
            total / xs.len() as f64
        })
        .collect();
    Ok(ObjectivePoint::new(values))
}

/// Distance in raw objective units: 0 when `p` is not dominated by the
/// front, else the smallest Chebyshev gap to a dominating front point.
pub fn dominated_distance_raw(p: &ObjectivePoint, front: &ParetoFront) -> f64 {
    let scale = vec![1.0; p.k()];
    scaled_distance(p, front, &scale)
}

/// [`dominated_distance_raw`] after min-max scaling each objective over the
/// front points together with `p`. Zero-width objectives keep unit scale.
pub fn dominated_distance(p: &ObjectivePoint, front: &ParetoFront) -> f64 {
    let k = p.k();
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let it = front.points.iter().map(|f| f.values[j]).chain([p.values[j]]);
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    scaled_distance(p, front, &scale)
}

fn scaled_distance(p: &ObjectivePoint, front: &ParetoFront, scale: &[f64]) -> f64 {
    front
        .points
        .iter()
        .filter(|f| f.k() == p.k() && dominates_unchecked(&f.values, &p.values))
        .map(|f| {
            f.values
                .iter()
                .zip(&p.values)
                .zip(scale)
                .map(|((a, b), s)| (a - b) / s)
                .fold(0.0, f64::max)
        })
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))))
        .unwrap_or(0.0)
}
