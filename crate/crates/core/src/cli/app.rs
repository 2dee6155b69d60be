//! Command-line front end.

use super::config::{ConfigFile, ExperimentConfig, ExperimentKind};
use super::csvio::{
    emit_csv, fmt_sig9, history_columns, history_rows, read_csv, read_dataset, read_policy,
    write_dataset, write_policy, Cell, COP_COLUMNS, FRONT_COLUMNS, METRICS_COLUMNS,
};
use super::experiments::{
    fit_shape, front_for, front_rows, par_map, run_experiment, win_rates, Metrics, Staging,
};
use crate::baselines::{cop_sweep, train_dpo_traced, DpoConfig};
use crate::domain::{Policy, PreferenceDataset};
use crate::error::{MopoError, Result};
use crate::pareto::{dominated_distance, policy_objective_point};
use crate::solver::{train, SolverConfig};
use crate::synth::{
    build_motivating_datasets, canonical_dataset, random_bandit_dataset, RewardModel, RewardSet,
};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "mopo", version, about = "Multi-objective preference optimization experiments")]
pub struct Cli {
    /// Configuration file (`key = value` with section headers).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Replaces every seed list with this seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mopo,
    Dpo,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the canonical and synthetic datasets as CSV.
    GenData,
    /// Train one method on `[data] dataset`.
    Train {
        #[arg(value_enum)]
        method: Method,
    },
    /// Export the ground-truth front of each reward set.
    Front,
    /// Export the constrained-policy sweep of each reward set.
    Cop,
    /// Score a saved policy against a reward set's front.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        set: String,
    },
    /// Summarize `metrics.csv` in the output directory.
    Report,
    /// Run a full experiment: motivating, sanity, pareto-approach or ablation.
    Repro { experiment: String },
}

/// Process exit code for an error.
pub fn exit_code(e: &MopoError) -> i32 {
    match e {
        MopoError::Config(_) => 2,
        MopoError::NumericalDivergence { .. } => 3,
        _ => 1,
    }
}

fn load_file(cli: &Cli) -> Result<ConfigFile> {
    match &cli.config {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn resolve(cli: &Cli, file: &ConfigFile, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let cfg = match kind {
        Some(k) => ExperimentConfig::resolve(k, file)?,
        None => ExperimentConfig::from_file(file, ExperimentKind::Sanity)?,
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

/// Parses a dataset reference: `canonical:<id>`, `motivating:<set>:<variant>`,
/// `random:<seed>` or a CSV path.
pub fn load_dataset(reference: &str, cfg: &ExperimentConfig) -> Result<(PreferenceDataset, Option<RewardSet>)> {
    let parts: Vec<&str> = reference.split(':').collect();
    let bad = || MopoError::Config(format!("bad dataset reference {reference:?}"));
    match parts.as_slice() {
        ["canonical", id] => Ok((canonical_dataset(id.parse().map_err(|_| bad())?)?, None)),
        ["random", seed] => Ok((random_bandit_dataset(seed.parse().map_err(|_| bad())?, 4)?, None)),
        ["motivating", set, variant] => {
            let set: RewardSet = set.parse()?;
            let ds = build_motivating_datasets(cfg.n, cfg.data_seed, set, cfg.w, cfg.bt_form)?;
            let d = match *variant {
                "d1" => ds.d1,
                "d2" => ds.d2,
                "dj" => ds.dj,
                "dc" => ds.dc,
                "joint" => ds.joint,
                _ => return Err(bad()),
            };
            Ok((d, Some(set)))
        }
        _ => Ok((read_dataset(Path::new(reference))?, None)),
    }
}

fn say(cli: &Cli, msg: &str) {
    if !cli.quiet {
        eprintln!("{msg}");
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let file = load_file(cli)?;
    match &cli.command {
        Command::Repro { experiment } => {
            let kind: ExperimentKind = experiment.parse()?;
            let cfg = resolve(cli, &file, Some(kind))?;
            let dir = run_experiment(&cfg, &cli.out, cli.quiet)?;
            say(cli, &format!("wrote {}", dir.display()));
        }
        Command::GenData => gen_data(cli, &resolve(cli, &file, None)?)?,
        Command::Train { method } => train_cmd(cli, &resolve(cli, &file, None)?, *method)?,
        Command::Front => {
            let cfg = resolve(cli, &file, None)?;
            let mut st = Staging::new(&cli.out)?;
            for &set in &cfg.sets {
                let (sweep, front) = front_for(&cfg, set)?;
                emit_csv(&st.file(&format!("front_{set}.csv")), FRONT_COLUMNS, &front_rows(&sweep, &front))?;
            }
            let dir = st.commit("front", &cfg.hash(), &cfg)?;
            say(cli, &format!("wrote {}", dir.display()));
        }
        Command::Cop => {
            let cfg = resolve(cli, &file, None)?;
            let mut st = Staging::new(&cli.out)?;
            for &set in &cfg.sets {
                let rows: Vec<Vec<Cell>> = cop_sweep(set, cfg.cop_thresholds, cfg.cop_grid)?
                    .iter()
                    .map(|c| {
                        vec![
                            Cell::Float(c.b),
                            Cell::Float(c.point.values[0]),
                            Cell::Float(c.point.values[1]),
                            Cell::Int(c.infeasible.iter().filter(|v| **v).count() as i64),
                        ]
                    })
                    .collect();
                emit_csv(&st.file(&format!("cop_{set}.csv")), COP_COLUMNS, &rows)?;
            }
            let dir = st.commit("cop", &cfg.hash(), &cfg)?;
            say(cli, &format!("wrote {}", dir.display()));
        }
        Command::Eval { policy, set } => {
            let cfg = resolve(cli, &file, None)?;
            let set: RewardSet = set.parse()?;
            let p = read_policy(policy)?;
            let (_, front) = front_for(&cfg, set)?;
            let point = policy_objective_point(&p, &RewardModel::pair(set), cfg.x_points)?;
            println!("r1,r2,dominated_distance");
            println!(
                "{},{},{}",
                fmt_sig9(point.values[0]),
                fmt_sig9(point.values[1]),
                fmt_sig9(dominated_distance(&point, &front))
            );
        }
        Command::Report => report(&cli.out)?,
    }
    Ok(())
}

fn gen_data(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let mut st = Staging::new(&cli.out)?;
    if let Some(reference) = &cfg.dataset {
        let (d, _) = load_dataset(reference, cfg)?;
        write_dataset(&st.file("dataset.csv"), &d)?;
    } else {
        for &id in &cfg.canonical {
            write_dataset(&st.file(&format!("canonical_D{id}.csv")), &canonical_dataset(id)?)?;
        }
        for &set in &cfg.sets {
            let ds = build_motivating_datasets(cfg.n, cfg.data_seed, set, cfg.w, cfg.bt_form)?;
            for (name, d) in [
                ("d1", &ds.d1),
                ("d2", &ds.d2),
                ("dj", &ds.dj),
                ("dc", &ds.dc),
                ("joint", &ds.joint),
            ] {
                write_dataset(&st.file(&format!("motivating_{set}_{name}.csv")), d)?;
            }
        }
    }
    let dir = st.commit("gen-data", &cfg.hash(), cfg)?;
    say(cli, &format!("wrote {}", dir.display()));
    Ok(())
}

fn train_cmd(cli: &Cli, cfg: &ExperimentConfig, method: Method) -> Result<()> {
    let reference = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| MopoError::Config("train needs `dataset` in [data]".into()))?;
    let (data, set) = load_dataset(reference, cfg)?;
    let front = match set {
        Some(s) => Some(front_for(cfg, s)?.1),
        None => None,
    };
    let mut st = Staging::new(&cli.out)?;
    let traced: Vec<(Policy, Vec<crate::domain::Snapshot>)> = match method {
        Method::Mopo => {
            let solver = SolverConfig {
                policy_shape: fit_shape(cfg.solver.policy_shape, data.mode),
                ..cfg.solver.clone()
            };
            par_map(&cfg.seeds, |&seed| {
                train(&SolverConfig { seed, ..solver.clone() }, &data)
                    .map(|r| (r.final_policy, r.history))
            })?
        }
        Method::Dpo => {
            let dpo = DpoConfig {
                policy_shape: fit_shape(cfg.dpo.policy_shape, data.mode),
                ..cfg.dpo.clone()
            };
            par_map(&cfg.seeds, |&seed| {
                train_dpo_traced(&data, &DpoConfig { seed, ..dpo.clone() })
            })?
        }
    };
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for (seed, (_, history)) in cfg.seeds.iter().zip(&traced) {
        if let Some(last) = history.last() {
            cols = history_columns(last.probs.len(), last.lambda.len());
        }
        rows.extend(history_rows(history, *seed, cfg.history_every));
    }
    if !cols.is_empty() {
        emit_csv(&st.file("history.csv"), &cols, &rows)?;
    }
    let policies: Vec<Policy> = traced.into_iter().map(|(p, _)| p).collect();
    let mut metrics = Vec::new();
    for (seed, p) in cfg.seeds.iter().zip(&policies) {
        write_policy(&st.file(&format!("policy_seed{seed}.csv")), p)?;
        let rewards = match set {
            Some(s) => Some(policy_objective_point(p, &RewardModel::pair(s), cfg.x_points)?),
            None => None,
        };
        let dist = match (&rewards, &front) {
            (Some(r), Some(f)) => Some(dominated_distance(r, f)),
            _ => None,
        };
        metrics.push(Metrics {
            run_id: format!("seed{seed}"),
            dominated_distance: dist,
            kl_to_ref: Some(p.kl_to(&Policy::uniform(p.shape())?)?),
            win_rates: win_rates(p, &data),
            rewards,
        });
    }
    let rows: Vec<Vec<Cell>> = metrics.iter().map(Metrics::row).collect();
    emit_csv(&st.file("metrics.csv"), METRICS_COLUMNS, &rows)?;
    let name = match method {
        Method::Mopo => "train mopo",
        Method::Dpo => "train dpo",
    };
    let dir = st.commit(name, &cfg.hash(), cfg)?;
    say(cli, &format!("wrote {}", dir.display()));
    Ok(())
}

/// Groups metrics rows by run id without the `_seedN` suffix and prints
/// per-group means.
fn report(out: &Path) -> Result<()> {
    let path = out.join("metrics.csv");
    let (header, rows) = read_csv(&path)?;
    if header != METRICS_COLUMNS {
        return Err(MopoError::SchemaError(format!("{}: unexpected header", path.display())));
    }
    let mut groups: Vec<(String, Vec<&Vec<String>>)> = Vec::new();
    for r in &rows {
        let id = &r[0];
        let key = match id.rfind("_seed") {
            Some(i) => id[..i].to_string(),
            None => id.clone(),
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mean = |rs: &[&Vec<String>], col: usize| -> String {
        let vals: Vec<f64> = rs.iter().filter_map(|r| r[col].parse().ok()).collect();
        if vals.is_empty() {
            "-".into()
        } else {
            fmt_sig9(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    println!("| group | runs | dominated_distance | kl_to_ref | win_rate_1 | win_rate_2 |");
    println!("|---|---|---|---|---|---|");
    for (k, rs) in &groups {
        println!(
            "| {k} | {} | {} | {} | {} | {} |",
            rs.len(),
            mean(rs, 1),
            mean(rs, 2),
            mean(rs, 3),
            mean(rs, 4)
        );
    }
    Ok(())
}
