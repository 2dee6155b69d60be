//! Acceptance report: one PASS/FAIL line per criterion, followed by the
//! measured numbers. Runs as a plain binary (`harness = false`) so the
//! report shows up in `cargo test` output. A red criterion is reported, not
//! asserted; the process only fails if the harness itself breaks.

use std::process::ExitCode;
use std::time::Instant;

use mopo::baselines::*;
use mopo::cli::config::{ConfigFile, ExperimentConfig, ExperimentKind};
use mopo::cli::experiments::par_map;
use mopo::domain::*;
use mopo::pareto::*;
use mopo::solver::*;
use mopo::synth::*;
use mopo::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAUS: [f64; 3] = [0.1, 0.5, 1.0];
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn print(&self) {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {} ({})", self.id, self.name);
        for d in &self.details {
            println!("    {d}");
        }
    }
}

/// Mean final probabilities and mean KL to uniform over seeds, plus the runs.
struct SanityCell {
    mean: Vec<f64>,
    kl: f64,
    runs: Vec<TrainResult>,
}

fn sanity_runs() -> Result<Vec<Vec<SanityCell>>> {
    let base = ExperimentConfig::resolve(ExperimentKind::Sanity, &ConfigFile::default())?.solver;
    let mut jobs = Vec::new();
    for id in 1..=5usize {
        for &tau in &TAUS {
            for &seed in &SEEDS {
                jobs.push((id, tau, seed));
            }
        }
    }
    let runs = par_map(&jobs, |&(id, tau, seed)| {
        let c = SolverConfig {
            tau,
            seed,
            ..base.clone()
        };
        train(&c, &canonical_dataset(id)?)
    })?;
    let uniform = Policy::uniform(PolicyShape::Bandit { n: 3 })?;
    let mut it = runs.into_iter();
    let mut out = Vec::new();
    for _ in 1..=5 {
        let mut row = Vec::new();
        for _ in TAUS {
            let runs: Vec<TrainResult> = it.by_ref().take(SEEDS.len()).collect();
            let ns = runs.len() as f64;
            let mut mean = vec![0.0; 3];
            let mut kl = 0.0;
            for r in &runs {
                for (m, p) in mean.iter_mut().zip(r.final_policy.probabilities()) {
                    *m += p / ns;
                }
                kl += r.final_policy.kl_to(&uniform)? / ns;
            }
            row.push(SanityCell { mean, kl, runs });
        }
        out.push(row);
    }
    Ok(out)
}

fn criterion_1(cells: &[Vec<SanityCell>], secs: f64) -> Outcome {
    let p = |d: usize| &cells[d - 1][0].mean;
    let fmt = |v: &[f64]| format!("[{:.3}, {:.3}, {:.3}]", v[0], v[1], v[2]);
    let d1 = p(1)[0] >= 0.8;
    let d2 = (p(2)[0] - p(2)[2]).abs() <= 0.1 && p(2)[1] <= 0.15;
    let ratio = p(3)[0] / (p(3)[0] + p(3)[2]);
    let d3 = (0.55..=0.80).contains(&ratio);
    let tv = 0.5 * p(4).iter().map(|v| (v - 1.0 / 3.0).abs()).sum::<f64>();
    let d4 = tv <= 0.15;
    let (lo, hi) = (cells[4][0].mean[2], cells[4][2].mean[2]);
    let d5 = lo < hi;
    let ok = |b: bool| if b { "ok" } else { "MISS" };
    Outcome {
        id: 1,
        name: "sanity behaviors, constrained preset, tau 0.1, 5 seeds",
        pass: d1 && d2 && d3 && d4 && d5,
        details: vec![
            format!("D1 pi {} pi(y1) >= 0.8: {}", fmt(p(1)), ok(d1)),
            format!(
                "D2 pi {} |pi1-pi3| = {:.3} <= 0.1, pi2 <= 0.15: {}",
                fmt(p(2)),
                (p(2)[0] - p(2)[2]).abs(),
                ok(d2)
            ),
            format!("D3 pi {} ratio {:.3} in [0.55, 0.80]: {}", fmt(p(3)), ratio, ok(d3)),
            format!("D4 pi {} TV to uniform {:.4} <= 0.15: {}", fmt(p(4)), tv, ok(d4)),
            format!("D5 pi(y3) tau 0.1 = {lo:.4} < tau 1.0 = {hi:.4}: {}", ok(d5)),
            format!("all sanity runs (75, criteria 1 and 2): {secs:.1} s"),
        ],
    }
}

fn criterion_2(cells: &[Vec<SanityCell>]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for (i, row) in cells.iter().enumerate() {
        let kl: Vec<f64> = row.iter().map(|c| c.kl).collect();
        let ok = kl.windows(2).all(|w| w[1] <= 1.05 * w[0]);
        pass &= ok;
        details.push(format!(
            "D{} KL tau 0.1/0.5/1.0 = {:.5} / {:.5} / {:.5}: {}",
            i + 1,
            kl[0],
            kl[1],
            kl[2],
            if ok { "ok" } else { "MISS" }
        ));
    }
    Outcome {
        id: 2,
        name: "KL non-increasing in tau, 5% slack",
        pass,
        details,
    }
}

fn criterion_3() -> Result<Outcome> {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let rows = par_map(&seeds, |&seed| {
        let d = random_bandit_dataset(seed, 4)?;
        let aug = augment_symmetric(&d);
        let c = SolverConfig {
            chi_init: 1000.0,
            batch_size: 256,
            batches_per_step: 4,
            seed,
            ..SolverConfig::constrained(PolicyShape::Bandit { n: 3 })
        };
        let r = train(&c, &d)?;
        let b = r.history[0].b.clone();
        let o = brute_force_oracle(&aug, c.tau, &b)?;
        let (f, g) = evaluate_bandit(&r.final_policy, &aug, c.tau)?;
        let viol = b.iter().zip(&g).map(|(bk, gk)| bk - gk).fold(0.0, f64::max);
        Ok((o.objective - f, viol))
    })?;
    let secs = start.elapsed().as_secs_f64();
    let worst_gap = rows.iter().map(|r| r.0.abs()).fold(0.0, f64::max);
    let worst_viol = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let pass = worst_gap <= 1e-2 && worst_viol <= 1e-2 && secs < 60.0;
    let mut details: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(i, (g, v))| format!("dataset {i}: oracle - mopo = {g:+.2e}, violation {v:.2e}"))
        .collect();
    details.push(format!(
        "worst |gap| {worst_gap:.2e} <= 1e-2, worst violation {worst_viol:.2e} <= 1e-2, {secs:.1} s < 60 s"
    ));
    Ok(Outcome {
        id: 3,
        name: "oracle equivalence on 10 random bandit datasets",
        pass,
        details,
    })
}

struct SetRuns {
    set: RewardSet,
    front: ParetoFront,
    data: MotivatingDatasets,
    dist: [f64; 2],
    secs: f64,
}

fn pareto_runs() -> Result<Vec<SetRuns>> {
    let cfg = ExperimentConfig::resolve(ExperimentKind::ParetoApproach, &ConfigFile::default())?;
    let mut out = Vec::new();
    for set in [RewardSet::A, RewardSet::B] {
        let start = Instant::now();
        let front = ground_truth_front(set, cfg.front_grid, cfg.front_grid, cfg.w_steps)?;
        let data = build_motivating_datasets(cfg.n, cfg.data_seed, set, cfg.w, cfg.bt_form)?;
        let taus = [0.1, 1.0];
        let dists = par_map(&taus, |&tau| {
            let c = SolverConfig {
                tau,
                seed: 0,
                ..cfg.solver.clone()
            };
            let r = train(&c, &data.joint)?;
            let p = policy_objective_point(&r.final_policy, &RewardModel::pair(set), cfg.x_points)?;
            Ok(dominated_distance(&p, &front))
        })?;
        out.push(SetRuns {
            set,
            front,
            data,
            dist: [dists[0], dists[1]],
            secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

fn criterion_4(sets: &[SetRuns]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for s in sets {
        let ok = s.dist[0] <= 0.07 && s.dist[1] > s.dist[0] && s.secs < 300.0;
        pass &= ok;
        details.push(format!(
            "set {}: distance tau 0.1 = {:.4} <= 0.07, tau 1.0 = {:.4} larger, {:.1} s: {}",
            s.set,
            s.dist[0],
            s.dist[1],
            s.secs,
            if ok { "ok" } else { "MISS" }
        ));
    }
    Outcome {
        id: 4,
        name: "pareto approach on the 4x16 grid policy",
        pass,
        details,
    }
}

fn criterion_5(sets: &[SetRuns]) -> Result<Outcome> {
    let cfg = ExperimentConfig::resolve(ExperimentKind::Motivating, &ConfigFile::default())?;
    let mut pass = true;
    let mut details = Vec::new();
    for s in sets {
        let variants = [
            ("D1", &s.data.d1),
            ("D2", &s.data.d2),
            ("DJ", &s.data.dj),
            ("DC", &s.data.dc),
        ];
        let dpo = par_map(&variants, |(_, d)| {
            let p = train_dpo(d, &cfg.dpo)?;
            let pt = policy_objective_point(&p, &RewardModel::pair(s.set), cfg.x_points)?;
            Ok(dominated_distance(&pt, &s.front))
        })?;
        let cop = cop_sweep(s.set, cfg.cop_thresholds, cfg.cop_grid)?
            .iter()
            .map(|c| dominated_distance(&c.point, &s.front))
            .fold(0.0, f64::max);
        let mopo = s.dist[0];
        let worst = mopo.max(cop);
        let below_all = dpo.iter().all(|&d| worst <= d);
        let margins = dpo.iter().filter(|&&d| d - worst >= 0.02).count();
        let ok = below_all && margins >= 2;
        pass &= ok;
        let dpo_txt: Vec<String> = variants
            .iter()
            .zip(&dpo)
            .map(|((n, _), d)| format!("{n} {d:.4}"))
            .collect();
        details.push(format!(
            "set {}: MOPO {:.4}, COP family max {:.4}, DPO {}; variants with margin >= 0.02: {}: {}",
            s.set,
            mopo,
            cop,
            dpo_txt.join(", "),
            margins,
            if ok { "ok" } else { "MISS" }
        ));
    }
    Ok(Outcome {
        id: 5,
        name: "motivating-example ordering",
        pass,
        details,
    })
}

fn rel_ok(fd: f64, g: f64) -> bool {
    (fd - g).abs() <= 1e-4 * g.abs().max(1e-2)
}

fn nondominated_brute(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        let dominated = points.iter().any(|q| {
            q.iter().zip(p).all(|(a, b)| a >= b) && q.iter().zip(p).any(|(a, b)| a > b)
        });
        if !dominated && !out.contains(p) {
            out.push(p.clone());
        }
    }
    out
}

fn criterion_6(cells: &[Vec<SanityCell>]) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut details = Vec::new();
    let mut pass = true;
    let mut check = |label: String, ok: bool| {
        pass &= ok;
        details.push(format!("{label}: {}", if ok { "ok" } else { "MISS" }));
    };

    let all_runs = cells.iter().flatten().flat_map(|c| &c.runs);
    let (mut neg_l, mut neg_c, mut snaps) = (0usize, 0usize, 0usize);
    for r in all_runs {
        for s in &r.history {
            snaps += 1;
            neg_l += s.lambda.iter().any(|v| !(*v >= 0.0)) as usize;
            neg_c += s.chi.iter().any(|v| !(*v >= 0.0)) as usize;
        }
    }
    check(
        format!("lambda >= 0 and chi >= 0 over {snaps} snapshots ({neg_l} / {neg_c} violations)"),
        neg_l == 0 && neg_c == 0,
    );

    let mut jensen_bad = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..40);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let chi = rng.gen_range(0.0..50.0);
        let eps = rng.gen_range(0.0..0.3);
        let l = lower_bound(&[chi], &[Batch { z: vec![z.clone()] }], eps)[0];
        let mean = z.iter().sum::<f64>() / n as f64;
        jensen_bad += (l > mean + 1e-12) as usize;
    }
    check(format!("Jensen L <= batch mean on 1000 batches ({jensen_bad} violations)"), jensen_bad == 0);

    let (mut chi_bad, mut bc_bad) = (0, 0);
    for _ in 0..100 {
        let n = rng.gen_range(2..20);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
        let chi = rng.gen_range(0.01..20.0);
        let eps = rng.gen_range(0.0..0.3);
        let b = [Batch { z: vec![z] }];
        let (_, g) = chi_loss(&[chi], &b, eps);
        let h = 1e-6 * f64::max(chi, 1.0);
        let fd = (chi_loss(&[chi + h], &b, eps).0 - chi_loss(&[chi - h], &b, eps).0) / (2.0 * h);
        chi_bad += !rel_ok(fd, g[0]) as usize;

        let m = rng.gen_range(2..8);
        let logits: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0)).collect();
        let (_, g) = bc_loss(&logits, &w);
        for j in 0..m {
            let mut up = logits.clone();
            let mut dn = logits.clone();
            up[j] += 1e-6;
            dn[j] -= 1e-6;
            let fd = (bc_loss(&up, &w).0 - bc_loss(&dn, &w).0) / 2e-6;
            bc_bad += !rel_ok(fd, g[j]) as usize;
        }
    }
    check(
        format!("finite differences on 100 points: chi-loss {chi_bad}, BC-loss {bc_bad} misses at rel 1e-4"),
        chi_bad == 0 && bc_bad == 0,
    );

    let slack: Vec<f64> = cells
        .iter()
        .flat_map(|row| row[0].runs.iter().map(|r| complementary_slackness(&r.history, 5000)))
        .collect();
    let worst = slack.iter().cloned().fold(0.0, f64::max);
    check(
        format!("complementary slackness on D1..D5, tau 0.1, last 5000 steps: worst {worst:.2e} <= 1e-3"),
        worst <= 1e-3,
    );

    let mut bt_bad = 0;
    for _ in 0..1000 {
        let (r, rp) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let a = bt_prob(r, rp, BtForm::Logistic)? + bt_prob(rp, r, BtForm::Logistic)?;
        let (q, qp) = (rng.gen_range(1e-6..50.0), rng.gen_range(1e-6..50.0));
        let b = bt_prob(q, qp, BtForm::Ratio)? + bt_prob(qp, q, BtForm::Ratio)?;
        bt_bad += ((a - 1.0).abs() > 1e-12 || (b - 1.0).abs() > 1e-12) as usize;
    }
    check(format!("bt_prob complementarity on 1000 pairs ({bt_bad} violations)"), bt_bad == 0);

    let mut front_bad = 0;
    for i in 0..500 {
        let k = 2 + i % 2;
        let n = rng.gen_range(1..30);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.gen_range(0..8) as f64 / 7.0).collect())
            .collect();
        let ops: Vec<ObjectivePoint> = pts.iter().cloned().map(ObjectivePoint::new).collect();
        let front = pareto_front(&ops)?;
        let got: Vec<Vec<f64>> = front.points.iter().map(|p| p.values.clone()).collect();
        let again = pareto_front(&front.points)?;
        front_bad += (got != nondominated_brute(&pts) || again != front) as usize;
    }
    check(
        format!("pareto_front idempotence and brute-force agreement on 500 sets ({front_bad} misses)"),
        front_bad == 0,
    );

    let c = SolverConfig::constrained(PolicyShape::Bandit { n: 3 });
    let d = canonical_dataset(3)?;
    let a = serde_json::to_string(&train(&c, &d)?).expect("serializable");
    let b = serde_json::to_string(&train(&c, &d)?).expect("serializable");
    check("byte-identical rerun of a full training run".into(), a == b);

    Ok(Outcome {
        id: 6,
        name: "numerical property suite",
        pass,
        details,
    })
}

/// Lexicographic optimum: maximize the last objective, break ties on the
/// others in order. `None` when no point meets the thresholds.
fn constrained_optimum(points: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let k = points[0].len();
    points
        .iter()
        .filter(|p| p.iter().zip(b).all(|(v, bk)| v >= bk))
        .max_by(|p, q| {
            p[k - 1]
                .total_cmp(&q[k - 1])
                .then_with(|| (0..k - 1).fold(std::cmp::Ordering::Equal, |o, j| o.then(p[j].total_cmp(&q[j]))))
        })
        .cloned()
}

fn criterion_7() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut details = Vec::new();
    let mut pass = true;
    for k in [2usize, 3] {
        let (mut instances, mut infeasible, mut dominated, mut tied_dominated) = (0, 0, 0, 0);
        while instances < 500 {
            // values on a 1/20 grid so ties and duplicates occur
            let n = rng.gen_range(3..40);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..k).map(|_| rng.gen_range(0..=20) as f64 / 20.0).collect())
                .collect();
            let ops: Vec<ObjectivePoint> = pts.iter().cloned().map(ObjectivePoint::new).collect();
            let front = pareto_front(&ops)?;
            if front.len() > 10 {
                continue;
            }
            instances += 1;
            let pi0 = ObjectivePoint::new((0..k).map(|_| rng.gen_range(-0.1..1.1)).collect());
            let b = thresholds_from_front(&front, &pi0)?;
            let Some(opt) = constrained_optimum(&pts, &b) else {
                infeasible += 1;
                continue;
            };
            let is_dominated = |p: &Vec<f64>| {
                pts.iter().any(|q| {
                    q.iter().zip(p).all(|(a, c)| a >= c) && q.iter().zip(p).any(|(a, c)| a > c)
                })
            };
            dominated += is_dominated(&opt) as usize;
            // informational: other maximizers of the primary objective alone
            tied_dominated += pts
                .iter()
                .filter(|p| p.iter().zip(&b).all(|(v, bk)| v >= bk))
                .any(|p| p[k - 1] == opt[k - 1] && is_dominated(p)) as usize;
        }
        pass &= dominated == 0;
        details.push(format!(
            "K={k}: {instances} instances (front size <= 10), {infeasible} without a feasible point, \
             {dominated} dominated optima; {tied_dominated} instances also had a dominated tie on the primary objective"
        ));
    }
    Ok(Outcome {
        id: 7,
        name: "threshold rule yields non-dominated constrained optima",
        pass,
        details,
    })
}

fn run() -> Result<Vec<Outcome>> {
    let start = Instant::now();
    let cells = sanity_runs()?;
    let sanity_secs = start.elapsed().as_secs_f64();
    let sets = pareto_runs()?;
    Ok(vec![
        criterion_1(&cells, sanity_secs),
        criterion_2(&cells),
        criterion_3()?,
        criterion_4(&sets),
        criterion_5(&sets)?,
        criterion_6(&cells)?,
        criterion_7()?,
    ])
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters pass arguments; only `--list` matters
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    match run() {
        Ok(outcomes) => {
            println!("acceptance report");
            for o in &outcomes {
                o.print();
            }
            let green = outcomes.iter().filter(|o| o.pass).count();
            println!(
                "acceptance: {green}/{} criteria PASS in {:.1} s",
                outcomes.len(),
                start.elapsed().as_secs_f64()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("acceptance harness error: {e}");
            ExitCode::FAILURE
        }
    }
}
