//! Experiment orchestration: runs, aggregation, figures and manifests.

use super::config::{ExperimentConfig, ExperimentKind};
use super::csvio::{
    emit_csv, fmt_sig9, history_columns, history_rows, Cell, COP_COLUMNS, FRONT_COLUMNS,
    METRICS_COLUMNS,
};
use super::svg::{emit_svg_lines, emit_svg_scatter, Axes, Series, Style};
use crate::baselines::{cop_sweep, train_dpo, DpoConfig};
use crate::domain::{Mode, Policy, PolicyShape, PreferenceDataset, TrainResult};
use crate::error::{MopoError, Result};
use crate::pareto::{
    dominated_distance, pareto_front, policy_objective_point, scalarization_sweep, ObjectivePoint,
    ParetoFront, SweepPoint,
};
use crate::solver::{train, BSchedule, PolicyUpdate, SolverConfig, ThresholdMode};
use crate::synth::{build_motivating_datasets, canonical_dataset, RewardModel, RewardSet};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Output directory under construction. Files land in a sibling
/// `<out>.partial` directory and move into `<out>` on [`Staging::commit`];
/// dropping without a commit deletes the staging directory.
pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    files: Vec<String>,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        let name = out
            .file_name()
            .ok_or_else(|| MopoError::Config(format!("bad output directory {}", out.display())))?
            .to_string_lossy()
            .into_owned();
        let dir = out.with_file_name(format!("{name}.partial"));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| MopoError::io(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| MopoError::io(&dir, e))?;
        Ok(Staging {
            out: out.to_path_buf(),
            dir,
            files: Vec::new(),
            committed: false,
        })
    }

    /// Path of a new file in the staging directory.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Writes `manifest.json` and moves every file into the output directory.
    pub fn commit<T: Serialize>(mut self, command: &str, hash: &str, config: &T) -> Result<PathBuf> {
        let mut files = self.files.clone();
        files.sort();
        let manifest = serde_json::json!({
            "command": command,
            "config_hash": hash,
            "config": config,
            "files": files,
        });
        let path = self.file("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| MopoError::io(&path, e))?;
        std::fs::create_dir_all(&self.out).map_err(|e| MopoError::io(&self.out, e))?;
        for f in &self.files {
            let (from, to) = (self.dir.join(f), self.out.join(f));
            std::fs::rename(&from, &to).map_err(|e| MopoError::io(&to, e))?;
        }
        std::fs::remove_dir_all(&self.dir).map_err(|e| MopoError::io(&self.dir, e))?;
        self.committed = true;
        Ok(self.out.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.dir);
        }
    }
}

/// Maps `f` over `items` on worker threads; results keep input order.
pub fn par_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    let f = &f;
    let parts: Vec<Result<Vec<R>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<R>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn tau_label(tau: f64) -> String {
    fmt_sig9(tau)
}

/// Importance-weighted win rate of each objective under a uniform reference.
pub fn win_rates(policy: &Policy, data: &PreferenceDataset) -> Vec<f64> {
    let shape = policy.shape();
    let probs = policy.probabilities();
    let cols = shape.cols() as f64;
    let n = data.len().max(1) as f64;
    let mut out = vec![0.0; data.k_objectives];
    for r in &data.records {
        let rho = probs[shape.cell_of(r)] * cols;
        for (o, &i) in out.iter_mut().zip(&r.indicators) {
            if i {
                *o += rho / n;
            }
        }
    }
    out
}

/// One metrics row.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub run_id: String,
    pub dominated_distance: Option<f64>,
    pub kl_to_ref: Option<f64>,
    pub win_rates: Vec<f64>,
    pub rewards: Option<ObjectivePoint>,
}

impl Metrics {
    pub fn row(&self) -> Vec<Cell> {
        let opt = |v: Option<f64>| v.map_or(Cell::Empty, Cell::Float);
        vec![
            Cell::Text(self.run_id.clone()),
            opt(self.dominated_distance),
            opt(self.kl_to_ref),
            opt(self.win_rates.first().copied()),
            opt(self.win_rates.get(1).copied()),
            opt(self.rewards.as_ref().map(|p| p.values[0])),
            opt(self.rewards.as_ref().map(|p| p.values[1])),
        ]
    }
}

fn policy_metrics(
    run_id: String,
    policy: &Policy,
    data: &PreferenceDataset,
    set: Option<(RewardSet, &ParetoFront)>,
    x_points: usize,
) -> Result<Metrics> {
    let kl = policy.kl_to(&Policy::uniform(policy.shape())?)?;
    let (dist, rewards) = match set {
        Some((s, front)) => {
            let p = policy_objective_point(policy, &RewardModel::pair(s), x_points)?;
            (Some(dominated_distance(&p, front)), Some(p))
        }
        None => (None, None),
    };
    Ok(Metrics {
        run_id,
        dominated_distance: dist,
        kl_to_ref: Some(kl),
        win_rates: win_rates(policy, data),
        rewards,
    })
}

fn write_metrics(staging: &mut Staging, name: &str, rows: &[Metrics]) -> Result<()> {
    let rows: Vec<Vec<Cell>> = rows.iter().map(Metrics::row).collect();
    emit_csv(&staging.file(name), METRICS_COLUMNS, &rows)
}

/// Sweep points that lie on the front, in sweep order, first occurrence only.
pub fn front_rows(sweep: &[SweepPoint], front: &ParetoFront) -> Vec<Vec<Cell>> {
    let mut seen: Vec<&ObjectivePoint> = Vec::new();
    let mut rows = Vec::new();
    for s in sweep {
        if front.points.contains(&s.point) && !seen.contains(&&s.point) {
            seen.push(&s.point);
            rows.push(vec![
                Cell::Float(s.w),
                Cell::Float(s.point.values[0]),
                Cell::Float(s.point.values[1]),
            ]);
        }
    }
    rows
}

pub fn front_for(cfg: &ExperimentConfig, set: RewardSet) -> Result<(Vec<SweepPoint>, ParetoFront)> {
    let sweep = scalarization_sweep(set, cfg.front_grid, cfg.front_grid, cfg.w_steps)?;
    let pts: Vec<ObjectivePoint> = sweep.iter().map(|s| s.point.clone()).collect();
    let front = pareto_front(&pts)?;
    Ok((sweep, front))
}

fn front_series(front: &ParetoFront) -> Series {
    let mut pts: Vec<(f64, f64)> = front
        .points
        .iter()
        .map(|p| (p.values[0], p.values[1]))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Series::new("ground-truth front", pts, Style::Line)
}

fn solver_for(cfg: &ExperimentConfig, tau: f64, seed: u64) -> SolverConfig {
    SolverConfig {
        tau,
        seed,
        ..cfg.solver.clone()
    }
}

fn history_file(
    staging: &mut Staging,
    name: &str,
    runs: &[(u64, &TrainResult)],
    every: usize,
) -> Result<()> {
    let first = runs.first().expect("at least one run").1;
    let last = first.history.last().expect("nonempty history");
    let cols = history_columns(last.probs.len(), last.lambda.len());
    let mut rows = Vec::new();
    for (seed, r) in runs {
        rows.extend(history_rows(&r.history, *seed, every));
    }
    emit_csv(&staging.file(name), &cols, &rows)
}

/// Mean ± one standard deviation of each action probability over runs.
fn curve_series(runs: &[&TrainResult], every: usize) -> Vec<Series> {
    let steps: Vec<usize> = runs[0]
        .history
        .iter()
        .enumerate()
        .filter(|(i, s)| s.step % every == 0 || *i + 1 == runs[0].history.len())
        .map(|(i, _)| i)
        .collect();
    let n_actions = runs[0].history[0].probs.len();
    let m = runs.len() as f64;
    (0..n_actions)
        .map(|j| {
            let mut pts = Vec::with_capacity(steps.len());
            let mut band = Vec::with_capacity(steps.len());
            for &i in &steps {
                let vals: Vec<f64> = runs.iter().map(|r| r.history[i].probs[j]).collect();
                let mean = vals.iter().sum::<f64>() / m;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
                let x = runs[0].history[i].step as f64;
                pts.push((x, mean));
                band.push((x, mean - var.sqrt(), mean + var.sqrt()));
            }
            Series::new(format!("y{}", j + 1), pts, Style::Line).with_band(band)
        })
        .collect()
}

fn log(quiet: bool, msg: &str) {
    if !quiet {
        eprintln!("{msg}");
    }
}

/// Runs `cfg` and writes its artifacts to `out`. Returns the directory.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, quiet: bool) -> Result<PathBuf> {
    let mut staging = Staging::new(out)?;
    match cfg.kind {
        ExperimentKind::Sanity => sanity(cfg, &mut staging, quiet)?,
        ExperimentKind::ParetoApproach => pareto_approach(cfg, &mut staging, quiet)?,
        ExperimentKind::Motivating => motivating(cfg, &mut staging, quiet)?,
        ExperimentKind::Ablation => ablation(cfg, &mut staging, quiet)?,
    }
    staging.commit(&format!("repro {}", cfg.kind), &cfg.hash(), cfg)
}

fn bandit_solver(cfg: &ExperimentConfig, n: usize) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.solver.policy_shape = PolicyShape::Bandit { n };
    c
}

fn sanity(cfg: &ExperimentConfig, staging: &mut Staging, quiet: bool) -> Result<()> {
    let cfg = &bandit_solver(cfg, 3);
    let mut jobs = Vec::new();
    for &id in &cfg.canonical {
        for &tau in &cfg.taus {
            for &seed in &cfg.seeds {
                jobs.push((id, tau, seed));
            }
        }
    }
    log(quiet, &format!("sanity: {} runs", jobs.len()));
    let results = par_map(&jobs, |&(id, tau, seed)| {
        train(&solver_for(cfg, tau, seed), &canonical_dataset(id)?)
    })?;
    let mut metrics = Vec::new();
    let mut summary = Vec::new();
    let ns = cfg.seeds.len();
    for (c, chunk) in results.chunks(ns).enumerate() {
        let (id, tau, _) = jobs[c * ns];
        let label = format!("D{id}_tau{}", tau_label(tau));
        let runs: Vec<(u64, &TrainResult)> = cfg.seeds.iter().copied().zip(chunk).collect();
        history_file(staging, &format!("history_{label}.csv"), &runs, cfg.history_every)?;
        let refs: Vec<&TrainResult> = chunk.iter().collect();
        emit_svg_lines(
            &curve_series(&refs, cfg.history_every),
            &Axes::new(
                format!("D{id}, tau = {}", tau_label(tau)),
                "step",
                "action probability",
            ),
            &staging.file(&format!("curves_{label}.svg")),
        )?;
        let data = canonical_dataset(id)?;
        let mut mean = [0.0; 3];
        let mut kl = 0.0;
        for (seed, r) in &runs {
            let m = policy_metrics(format!("{label}_seed{seed}"), &r.final_policy, &data, None, 0)?;
            kl += m.kl_to_ref.unwrap_or(0.0) / ns as f64;
            for (a, p) in mean.iter_mut().zip(r.final_policy.probabilities()) {
                *a += p / ns as f64;
            }
            metrics.push(m);
        }
        let mut row = vec![Cell::Text(format!("D{id}")), Cell::Float(tau)];
        row.extend(mean.iter().map(|&v| Cell::Float(v)));
        row.push(Cell::Float(kl));
        summary.push(row);
    }
    write_metrics(staging, "metrics.csv", &metrics)?;
    emit_csv(&staging.file("sanity_summary.csv"), SANITY_SUMMARY_COLUMNS, &summary)
}

/// Header of the sanity summary.
pub const SANITY_SUMMARY_COLUMNS: &[&str] =
    &["dataset", "tau", "mean_p_1", "mean_p_2", "mean_p_3", "mean_kl_to_ref"];

fn contextual_solver(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    if !matches!(c.solver.policy_shape, PolicyShape::Grid { .. }) {
        c.solver.policy_shape = PolicyShape::Grid { bx: 4, by: 16 };
    }
    c.dpo.policy_shape = c.solver.policy_shape;
    c
}

fn pareto_approach(cfg: &ExperimentConfig, staging: &mut Staging, quiet: bool) -> Result<()> {
    let cfg = &contextual_solver(cfg);
    let mut metrics = Vec::new();
    for &set in &cfg.sets {
        let data = build_motivating_datasets(cfg.n, cfg.data_seed, set, cfg.w, cfg.bt_form)?.joint;
        let (sweep, front) = front_for(cfg, set)?;
        emit_csv(&staging.file(&format!("front_{set}.csv")), FRONT_COLUMNS, &front_rows(&sweep, &front))?;
        let mut jobs = Vec::new();
        for &tau in &cfg.taus {
            for &seed in &cfg.seeds {
                jobs.push((tau, seed));
            }
        }
        log(quiet, &format!("pareto-approach set {set}: {} runs", jobs.len()));
        let results = par_map(&jobs, |&(tau, seed)| train(&solver_for(cfg, tau, seed), &data))?;
        let reference = Policy::uniform(cfg.solver.policy_shape)?;
        let ref_point = policy_objective_point(&reference, &RewardModel::pair(set), cfg.x_points)?;
        let mut series = vec![
            front_series(&front),
            Series::new(
                "reference policy",
                vec![(ref_point.values[0], ref_point.values[1])],
                Style::Markers,
            ),
        ];
        let ns = cfg.seeds.len();
        for (c, chunk) in results.chunks(ns).enumerate() {
            let tau = jobs[c * ns].0;
            let label = format!("{set}_tau{}", tau_label(tau));
            let runs: Vec<(u64, &TrainResult)> = cfg.seeds.iter().copied().zip(chunk).collect();
            history_file(staging, &format!("history_{label}.csv"), &runs, cfg.history_every)?;
            let mut pts = Vec::new();
            for (seed, r) in &runs {
                let m = policy_metrics(
                    format!("{label}_seed{seed}"),
                    &r.final_policy,
                    &data,
                    Some((set, &front)),
                    cfg.x_points,
                )?;
                let p = m.rewards.as_ref().expect("rewards computed");
                pts.push((p.values[0], p.values[1]));
                metrics.push(m);
            }
            series.push(Series::new(
                format!("MOPO tau = {}", tau_label(tau)),
                pts,
                Style::Markers,
            ));
        }
        emit_svg_scatter(
            &series,
            &Axes::new(format!("Reward set {set}"), "r1", "r2"),
            &staging.file(&format!("pareto_{set}.svg")),
        )?;
    }
    write_metrics(staging, "metrics.csv", &metrics)
}

fn motivating(cfg: &ExperimentConfig, staging: &mut Staging, quiet: bool) -> Result<()> {
    let cfg = &contextual_solver(cfg);
    let tau = cfg.taus[0];
    let mut metrics = Vec::new();
    for &set in &cfg.sets {
        let ds = build_motivating_datasets(cfg.n, cfg.data_seed, set, cfg.w, cfg.bt_form)?;
        let (sweep, front) = front_for(cfg, set)?;
        emit_csv(&staging.file(&format!("front_{set}.csv")), FRONT_COLUMNS, &front_rows(&sweep, &front))?;
        let variants = [("D1", &ds.d1), ("D2", &ds.d2), ("DJ", &ds.dj), ("DC", &ds.dc)];
        let mut jobs = Vec::new();
        for (vi, _) in variants.iter().enumerate() {
            for &seed in &cfg.seeds {
                jobs.push((vi, seed));
            }
        }
        log(quiet, &format!("motivating set {set}: {} DPO runs", jobs.len()));
        let dpo = par_map(&jobs, |&(vi, seed)| {
            train_dpo(variants[vi].1, &DpoConfig { seed, ..cfg.dpo.clone() })
        })?;
        let mopo = par_map(&cfg.seeds, |&seed| train(&solver_for(cfg, tau, seed), &ds.joint))?;
        let cops = cop_sweep(set, cfg.cop_thresholds, cfg.cop_grid)?;

        let mut series = vec![front_series(&front)];
        for (vi, (name, _)) in variants.iter().enumerate() {
            let mut pts = Vec::new();
            for ((_, seed), p) in jobs.iter().zip(&dpo).filter(|((v, _), _)| *v == vi) {
                let m = policy_metrics(
                    format!("{set}_dpo_{name}_seed{seed}"),
                    p,
                    &ds.joint,
                    Some((set, &front)),
                    cfg.x_points,
                )?;
                let r = m.rewards.as_ref().expect("rewards computed");
                pts.push((r.values[0], r.values[1]));
                metrics.push(m);
            }
            series.push(Series::new(format!("DPO on {name}"), pts, Style::Markers));
        }
        let mut cop_rows = Vec::new();
        let mut cop_pts = Vec::new();
        for (i, c) in cops.iter().enumerate() {
            metrics.push(Metrics {
                run_id: format!("{set}_cop_{i}"),
                dominated_distance: Some(dominated_distance(&c.point, &front)),
                kl_to_ref: None,
                win_rates: Vec::new(),
                rewards: Some(c.point.clone()),
            });
            cop_pts.push((c.point.values[0], c.point.values[1]));
            cop_rows.push(vec![
                Cell::Float(c.b),
                Cell::Float(c.point.values[0]),
                Cell::Float(c.point.values[1]),
                Cell::Int(c.infeasible.iter().filter(|v| **v).count() as i64),
            ]);
        }
        emit_csv(&staging.file(&format!("cop_{set}.csv")), COP_COLUMNS, &cop_rows)?;
        series.push(Series::new("COP sweep", cop_pts, Style::Markers));
        let label = format!("{set}_tau{}", tau_label(tau));
        let runs: Vec<(u64, &TrainResult)> = cfg.seeds.iter().copied().zip(&mopo).collect();
        history_file(staging, &format!("history_{label}.csv"), &runs, cfg.history_every)?;
        let mut pts = Vec::new();
        for (seed, r) in &runs {
            let m = policy_metrics(
                format!("{set}_mopo_tau{}_seed{seed}", tau_label(tau)),
                &r.final_policy,
                &ds.joint,
                Some((set, &front)),
                cfg.x_points,
            )?;
            let p = m.rewards.as_ref().expect("rewards computed");
            pts.push((p.values[0], p.values[1]));
            metrics.push(m);
        }
        series.push(Series::new("MOPO", pts, Style::Markers));
        emit_svg_scatter(
            &series,
            &Axes::new(format!("Reward set {set}"), "r1", "r2"),
            &staging.file(&format!("motivating_{set}.svg")),
        )?;
    }
    write_metrics(staging, "metrics.csv", &metrics)
}

/// Header of the ablation summary.
pub const ABLATION_COLUMNS: &[&str] = &[
    "variant",
    "dataset",
    "tau",
    "mean_p_1",
    "mean_p_2",
    "mean_p_3",
    "mean_kl_to_ref",
    "mean_lambda_1",
    "clamp_events",
];

/// Named solver variants derived from the base config.
pub fn ablation_variants(base: &SolverConfig) -> Vec<(&'static str, SolverConfig)> {
    vec![
        ("base", base.clone()),
        (
            "fixed-threshold",
            SolverConfig {
                threshold_mode: ThresholdMode::Fixed,
                ..base.clone()
            },
        ),
        (
            "no-lag",
            SolverConfig {
                lagged_reference: false,
                ..base.clone()
            },
        ),
        (
            "every-step-threshold",
            SolverConfig {
                threshold_mode: ThresholdMode::Adaptive,
                b_schedule: BSchedule::EveryStep,
                ..base.clone()
            },
        ),
        (
            "sampled-update",
            SolverConfig {
                policy_update: PolicyUpdate::Sampled,
                ..base.clone()
            },
        ),
    ]
}

fn ablation(cfg: &ExperimentConfig, staging: &mut Staging, quiet: bool) -> Result<()> {
    let cfg = &bandit_solver(cfg, 3);
    let variants = ablation_variants(&cfg.solver);
    let mut jobs = Vec::new();
    for vi in 0..variants.len() {
        for &id in &cfg.canonical {
            for &tau in &cfg.taus {
                for &seed in &cfg.seeds {
                    jobs.push((vi, id, tau, seed));
                }
            }
        }
    }
    log(quiet, &format!("ablation: {} runs", jobs.len()));
    let results = par_map(&jobs, |&(vi, id, tau, seed)| {
        let c = SolverConfig {
            tau,
            seed,
            ..variants[vi].1.clone()
        };
        train(&c, &canonical_dataset(id)?)
    })?;
    let ns = cfg.seeds.len() as f64;
    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    for (c, chunk) in results.chunks(cfg.seeds.len()).enumerate() {
        let (vi, id, tau, _) = jobs[c * cfg.seeds.len()];
        let data = canonical_dataset(id)?;
        let mut mean = [0.0; 3];
        let (mut kl, mut lam, mut clamps) = (0.0, 0.0, 0usize);
        for (seed, r) in cfg.seeds.iter().zip(chunk) {
            let m = policy_metrics(
                format!("{}_D{id}_tau{}_seed{seed}", variants[vi].0, tau_label(tau)),
                &r.final_policy,
                &data,
                None,
                0,
            )?;
            kl += m.kl_to_ref.unwrap_or(0.0) / ns;
            lam += r.history.last().map_or(0.0, |s| s.lambda[0]) / ns;
            clamps += r.clamp_events;
            for (a, p) in mean.iter_mut().zip(r.final_policy.probabilities()) {
                *a += p / ns;
            }
            metrics.push(m);
        }
        let mut row = vec![
            Cell::Text(variants[vi].0.into()),
            Cell::Text(format!("D{id}")),
            Cell::Float(tau),
        ];
        row.extend(mean.iter().map(|&v| Cell::Float(v)));
        row.extend([Cell::Float(kl), Cell::Float(lam), Cell::Int(clamps as i64)]);
        rows.push(row);
    }
    write_metrics(staging, "metrics.csv", &metrics)?;
    emit_csv(&staging.file("ablation.csv"), ABLATION_COLUMNS, &rows)
}

/// Policy shape that fits `mode`, keeping `preferred` when it already does.
pub fn fit_shape(preferred: PolicyShape, mode: Mode) -> PolicyShape {
    match (mode, preferred) {
        (Mode::Bandit { n_actions }, _) => PolicyShape::Bandit { n: n_actions },
        (Mode::Contextual, PolicyShape::Grid { .. }) => preferred,
        (Mode::Contextual, PolicyShape::Bandit { .. }) => PolicyShape::Grid { bx: 4, by: 16 },
    }
}
