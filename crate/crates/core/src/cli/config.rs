//! Flat `key = value` configuration with section headers.
//!
//! ```text
//! [experiment]
//! kind = "sanity"
//! seeds = [0, 1, 2, 3, 4]
//! taus = [0.1, 0.5, 1.0]
//!
//! [solver]
//! preset = "constrained"
//! epochs = 20000
//! ```
//!
//! Every key is optional; absent keys take the defaults of the experiment kind.

use crate::baselines::DpoConfig;
use crate::domain::PolicyShape;
use crate::error::{MopoError, Result};
use crate::solver::{sha256_hex, BSchedule, PolicyUpdate, SolverConfig, ThresholdMode};
use crate::synth::{BtForm, RewardSet};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Motivating,
    Sanity,
    ParetoApproach,
    Ablation,
}

impl std::str::FromStr for ExperimentKind {
    type Err = MopoError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "motivating" => Ok(ExperimentKind::Motivating),
            "sanity" => Ok(ExperimentKind::Sanity),
            "pareto-approach" => Ok(ExperimentKind::ParetoApproach),
            "ablation" => Ok(ExperimentKind::Ablation),
            _ => Err(MopoError::Config(format!(
                "unknown experiment {s:?} (motivating, sanity, pareto-approach, ablation)"
            ))),
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Motivating => "motivating",
            ExperimentKind::Sanity => "sanity",
            ExperimentKind::ParetoApproach => "pareto-approach",
            ExperimentKind::Ablation => "ablation",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Option<ExperimentKind>,
    pub seeds: Option<Vec<u64>>,
    pub taus: Option<Vec<f64>>,
    /// Keep every n-th history row in CSV exports.
    pub history_every: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// `canonical:<id>`, `motivating:<set>:<d1|d2|dj|dc|joint>`, `random:<seed>` or a CSV path.
    pub dataset: Option<String>,
    pub canonical: Option<Vec<usize>>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub sets: Option<Vec<String>>,
    pub w: Option<f64>,
    pub bt_form: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// `adaptive` (Algorithm defaults) or `constrained` (fixed thresholds, ε = 0).
    pub preset: Option<String>,
    pub epsilon: Option<f64>,
    pub beta: Option<Vec<f64>>,
    pub t0: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub batches_per_step: Option<usize>,
    pub eta: Option<f64>,
    pub b_init: Option<Vec<f64>>,
    pub threshold_mode: Option<String>,
    pub b_schedule: Option<String>,
    pub lagged_reference: Option<bool>,
    pub policy_update: Option<String>,
    pub chi_init: Option<f64>,
    pub lambda_init: Option<f64>,
    pub lambda_max: Option<f64>,
    pub augment: Option<bool>,
    pub grid_bx: Option<usize>,
    pub grid_by: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoSection {
    pub beta_dpo: Option<f64>,
    pub eta: Option<f64>,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub front_grid: Option<usize>,
    pub w_steps: Option<usize>,
    pub cop_grid: Option<usize>,
    pub cop_thresholds: Option<usize>,
    pub x_points: Option<usize>,
}

/// Raw file contents, all keys optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub solver: SolverSection,
    pub dpo: DpoSection,
    pub eval: EvalSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| MopoError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MopoError::io(path, e))?;
        Self::parse(&text).map_err(|e| MopoError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved experiment parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub taus: Vec<f64>,
    pub history_every: usize,
    pub dataset: Option<String>,
    pub canonical: Vec<usize>,
    pub n: usize,
    pub data_seed: u64,
    pub sets: Vec<RewardSet>,
    pub w: f64,
    pub bt_form: BtForm,
    pub solver: SolverConfig,
    pub dpo: DpoConfig,
    pub front_grid: usize,
    pub w_steps: usize,
    pub cop_grid: usize,
    pub cop_thresholds: usize,
    pub x_points: usize,
}

fn parse_enum<T>(v: &Option<String>, f: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>> {
    match v {
        None => Ok(None),
        Some(s) => f(s)
            .map(Some)
            .ok_or_else(|| MopoError::Config(format!("unknown {what} {s:?}"))),
    }
}

impl ExperimentConfig {
    /// Defaults of `kind` overridden by whatever `file` sets.
    pub fn resolve(kind: ExperimentKind, file: &ConfigFile) -> Result<Self> {
        let e = &file.experiment;
        let d = &file.data;
        let s = &file.solver;
        let grid_default = (4, 16);
        let preset_default = match kind {
            ExperimentKind::Sanity => "constrained",
            _ => "adaptive",
        };
        let preset = s.preset.clone().unwrap_or_else(|| preset_default.to_string());
        let contextual = matches!(
            kind,
            ExperimentKind::Motivating | ExperimentKind::ParetoApproach
        ) || d
            .dataset
            .as_deref()
            .is_some_and(|v| v.starts_with("motivating"));
        let shape = if contextual {
            PolicyShape::Grid {
                bx: s.grid_bx.unwrap_or(grid_default.0),
                by: s.grid_by.unwrap_or(grid_default.1),
            }
        } else {
            PolicyShape::Bandit { n: 3 }
        };
        let mut solver = match preset.as_str() {
            "adaptive" => SolverConfig {
                policy_shape: shape,
                ..SolverConfig::default()
            },
            "constrained" => SolverConfig::constrained(shape),
            other => return Err(MopoError::Config(format!("unknown solver preset {other:?}"))),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = s.$field.clone() {
                    solver.$field = v;
                }
            };
        }
        set!(epsilon);
        set!(beta);
        set!(t0);
        set!(epochs);
        set!(batch_size);
        set!(batches_per_step);
        set!(eta);
        set!(lagged_reference);
        set!(chi_init);
        set!(lambda_init);
        set!(lambda_max);
        set!(augment);
        if s.b_init.is_some() {
            solver.b_init = s.b_init.clone();
        }
        if let Some(m) = parse_enum(
            &s.threshold_mode,
            |v| match v {
                "adaptive" => Some(ThresholdMode::Adaptive),
                "fixed" => Some(ThresholdMode::Fixed),
                _ => None,
            },
            "threshold_mode",
        )? {
            solver.threshold_mode = m;
        }
        if let Some(m) = parse_enum(
            &s.b_schedule,
            |v| match v {
                "every-t0" => Some(BSchedule::EveryT0),
                "every-step" => Some(BSchedule::EveryStep),
                _ => None,
            },
            "b_schedule",
        )? {
            solver.b_schedule = m;
        }
        if let Some(m) = parse_enum(
            &s.policy_update,
            |v| match v {
                "expectation" => Some(PolicyUpdate::Expectation),
                "sampled" => Some(PolicyUpdate::Sampled),
                _ => None,
            },
            "policy_update",
        )? {
            solver.policy_update = m;
        }
        let taus = e.taus.clone().unwrap_or_else(|| match kind {
            ExperimentKind::Motivating => vec![0.1],
            ExperimentKind::ParetoApproach => vec![0.1, 1.0],
            _ => vec![0.1, 0.5, 1.0],
        });
        if let Some(&t) = taus.first() {
            solver.tau = t;
        }
        solver.validate()?;

        let dpo_defaults = DpoConfig {
            policy_shape: shape,
            ..DpoConfig::default()
        };
        let dpo = DpoConfig {
            beta_dpo: file.dpo.beta_dpo.unwrap_or(dpo_defaults.beta_dpo),
            eta: file.dpo.eta.unwrap_or(dpo_defaults.eta),
            steps: file.dpo.steps.unwrap_or(dpo_defaults.steps),
            batch_size: file.dpo.batch_size.unwrap_or(dpo_defaults.batch_size),
            seed: 0,
            policy_shape: shape,
        };
        dpo.validate()?;

        let seeds = e.seeds.clone().unwrap_or_else(|| match kind {
            ExperimentKind::Sanity | ExperimentKind::Ablation => (0..5).collect(),
            _ => vec![0],
        });
        if seeds.is_empty() {
            return Err(MopoError::Config("seeds must not be empty".into()));
        }
        if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0)) {
            return Err(MopoError::Config("taus must be nonempty and positive".into()));
        }
        let sets = d
            .sets
            .clone()
            .unwrap_or_else(|| vec!["A".into(), "B".into()])
            .iter()
            .map(|v| v.parse())
            .collect::<Result<Vec<RewardSet>>>()?;
        let bt_form = d.bt_form.as_deref().unwrap_or("logistic").parse()?;
        let w = d.w.unwrap_or(0.5);
        if !(0.0..=1.0).contains(&w) {
            return Err(MopoError::Config(format!("w={w} outside [0,1]")));
        }
        let canonical = d.canonical.clone().unwrap_or_else(|| (1..=5).collect());
        if canonical.iter().any(|&i| !(1..=5).contains(&i)) {
            return Err(MopoError::Config("canonical ids must lie in 1..=5".into()));
        }
        let n = d.n.unwrap_or(1000);
        if n == 0 {
            return Err(MopoError::Config("n must be positive".into()));
        }
        let ev = &file.eval;
        let cfg = ExperimentConfig {
            kind,
            seeds,
            taus,
            history_every: e.history_every.unwrap_or(100).max(1),
            dataset: d.dataset.clone(),
            canonical,
            n,
            data_seed: d.seed.unwrap_or(0),
            sets,
            w,
            bt_form,
            solver,
            dpo,
            front_grid: ev.front_grid.unwrap_or(200),
            w_steps: ev.w_steps.unwrap_or(201),
            cop_grid: ev.cop_grid.unwrap_or(200),
            cop_thresholds: ev.cop_thresholds.unwrap_or(21),
            x_points: ev.x_points.unwrap_or(200),
        };
        if cfg.front_grid < 16 || cfg.w_steps < 2 || cfg.cop_grid < 64 || cfg.cop_thresholds < 2 {
            return Err(MopoError::Config(
                "eval grids: front_grid >= 16, w_steps >= 2, cop_grid >= 64, cop_thresholds >= 2"
                    .into(),
            ));
        }
        Ok(cfg)
    }

    /// Kind from the file when present, else `fallback`.
    pub fn from_file(file: &ConfigFile, fallback: ExperimentKind) -> Result<Self> {
        Self::resolve(file.experiment.kind.unwrap_or(fallback), file)
    }

    /// Replaces every seed list with a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self.data_seed = seed;
        self
    }

    /// SHA-256 of the canonical JSON of the resolved parameters.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
