use mopo::baselines::*;
use mopo::domain::*;
use mopo::pareto::{policy_objective_point, x_grid, y_grid};
use mopo::synth::*;
use mopo::MopoError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
#[allow(clippy::approx_constant)] // the tabulated example value
fn dpo_loss_at_reference_is_ln2() {
    let u = TabularPolicy::uniform(3);
    for beta in [0.1, 1.0, 7.0] {
        let v = dpo_loss(&u, &u, 0, 2, beta).unwrap();
        assert!((v - 0.693147).abs() < 1e-6);
    }
    let skew = TabularPolicy::from_logits(vec![0.4, -0.2, 1.0]).unwrap();
    assert!((dpo_loss(&skew, &skew, 1, 2, 0.5).unwrap() - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn dpo_loss_saturates() {
    let u = TabularPolicy::uniform(2);
    let p = TabularPolicy::from_logits(vec![40.0, -40.0]).unwrap();
    let v = dpo_loss(&p, &u, 0, 1, 1.0).unwrap();
    assert!(v < 1e-30 && v >= 0.0);
    let w = dpo_loss(&p, &u, 1, 0, 1.0).unwrap();
    assert!((w - 80.0).abs() < 1e-9);
}

#[test]
fn dpo_errors() {
    let u = TabularPolicy::uniform(3);
    let zero = TabularPolicy {
        logits: vec![0.0, 0.0, f64::NEG_INFINITY],
    };
    assert!(matches!(
        dpo_loss(&u, &zero, 0, 2, 0.1),
        Err(MopoError::SupportMismatch(_))
    ));
    assert!(dpo_loss(&u, &TabularPolicy::uniform(2), 0, 1, 0.1).is_err());
    assert!(dpo_loss(&u, &u, 0, 3, 0.1).is_err());
}

#[test]
fn dpo_gradient_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let logits: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let refl: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let reference = TabularPolicy::from_logits(refl).unwrap();
        let (w, l) = (rng.gen_range(0..4), rng.gen_range(0..4));
        let beta = 0.05 + rng.gen::<f64>() * 2.0;
        let p = TabularPolicy::from_logits(logits.clone()).unwrap();
        let (_, g) = dpo_loss_grad(&p, &reference, w, l, beta).unwrap();
        for j in 0..4 {
            let h = 1e-6;
            let mut up = logits.clone();
            let mut dn = logits.clone();
            up[j] += h;
            dn[j] -= h;
            let f = |v: Vec<f64>| dpo_loss(&TabularPolicy::from_logits(v).unwrap(), &reference, w, l, beta).unwrap();
            let fd = (f(up) - f(dn)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-4 * g[j].abs().max(1e-2), "{fd} vs {}", g[j]);
        }
    }
}

#[test]
fn full_batch_descent_is_monotone() {
    let pairs = [(0, 1), (0, 2), (1, 2), (2, 1), (0, 1)];
    let u = TabularPolicy::uniform(3);
    let mut logits = vec![0.0; 3];
    let mean_loss = |l: &[f64]| {
        let p = TabularPolicy::from_logits(l.to_vec()).unwrap();
        pairs
            .iter()
            .map(|&(w, lo)| dpo_loss_grad(&p, &u, w, lo, 0.5).unwrap())
            .fold((0.0, vec![0.0; 3]), |(s, mut g), (v, gv)| {
                for (a, b) in g.iter_mut().zip(gv) {
                    *a += b / pairs.len() as f64;
                }
                (s + v / pairs.len() as f64, g)
            })
    };
    let mut prev = f64::INFINITY;
    for _ in 0..500 {
        let (loss, g) = mean_loss(&logits);
        assert!(loss <= prev + 1e-15);
        prev = loss;
        for (v, gj) in logits.iter_mut().zip(g) {
            *v -= 0.5 * gj;
        }
    }
    assert!(prev < 2f64.ln());
}

fn small_dpo(steps: usize) -> DpoConfig {
    DpoConfig {
        steps,
        ..DpoConfig::default()
    }
}

#[test]
fn zero_steps_returns_reference() {
    let ds = build_motivating_datasets(50, 0, RewardSet::A, 0.5, BtForm::Logistic).unwrap();
    let (p, h) = train_dpo_traced(&ds.d1, &small_dpo(0)).unwrap();
    assert_eq!(p, Policy::uniform(PolicyShape::Grid { bx: 4, by: 16 }).unwrap());
    assert!(h.is_empty());
}

#[test]
fn dpo_rejects_bad_input() {
    let ds = build_motivating_datasets(50, 0, RewardSet::A, 0.5, BtForm::Logistic).unwrap();
    let empty = PreferenceDataset::new(vec![], 1, Mode::Contextual).unwrap();
    assert!(matches!(
        train_dpo(&empty, &small_dpo(10)),
        Err(MopoError::EmptyInput(_))
    ));
    assert!(train_dpo(&ds.joint, &small_dpo(10)).is_err());
    let bad = DpoConfig {
        beta_dpo: 0.0,
        ..small_dpo(10)
    };
    assert!(matches!(train_dpo(&ds.d1, &bad), Err(MopoError::Config(_))));
    let bandit = DpoConfig {
        policy_shape: PolicyShape::Bandit { n: 3 },
        ..small_dpo(10)
    };
    assert!(train_dpo(&ds.d1, &bandit).is_err());
}

#[test]
fn dpo_bandit_prefers_winner() {
    let d = PreferenceDataset::new(
        vec![
            PreferenceRecord::bandit(0, 1, &[true]),
            PreferenceRecord::bandit(0, 2, &[true]),
            PreferenceRecord::bandit(2, 1, &[true]),
        ],
        1,
        Mode::Bandit { n_actions: 3 },
    )
    .unwrap();
    let cfg = DpoConfig {
        policy_shape: PolicyShape::Bandit { n: 3 },
        eta: 0.5,
        ..small_dpo(3000)
    };
    let (p, h) = train_dpo_traced(&d, &cfg).unwrap();
    let probs = p.probabilities();
    assert!(probs[0] > probs[2] && probs[2] > probs[1], "{probs:?}");
    assert_eq!(h.len(), 3000);
    assert!(h.last().unwrap().f_hat < h[0].f_hat);
    assert!(h.iter().all(|s| s.kl_to_ref >= 0.0 && s.lambda.is_empty()));
}

#[test]
fn dpo_combined_endpoint_matches_d1() {
    let ds = build_motivating_datasets(300, 4, RewardSet::B, 1.0, BtForm::Logistic).unwrap();
    let cfg = small_dpo(2000);
    assert_eq!(train_dpo(&ds.dc, &cfg).unwrap(), train_dpo(&ds.d1, &cfg).unwrap());
}

#[test]
fn dpo_single_objective_leans_to_its_reward() {
    // set B: r₁ grows with y, r₂ shrinks with y
    let ds = build_motivating_datasets(1000, 0, RewardSet::B, 0.5, BtForm::Logistic).unwrap();
    let cfg = DpoConfig {
        eta: 0.1,
        ..small_dpo(5000)
    };
    let models = RewardModel::pair(RewardSet::B);
    let p1 = policy_objective_point(&train_dpo(&ds.d1, &cfg).unwrap(), &models, 200).unwrap();
    let p2 = policy_objective_point(&train_dpo(&ds.d2, &cfg).unwrap(), &models, 200).unwrap();
    assert!(p1.values[0] > p2.values[0]);
    assert!(p1.values[1] < p2.values[1]);
}

#[test]
fn policy_table_rows_sum_to_one() {
    let p = Policy::from_logits(PolicyShape::Grid { bx: 2, by: 3 }, vec![0.0, 1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
    let t = policy_table(&p);
    assert_eq!(t.len(), 2);
    for row in t {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cop_set_b_unconstrained_is_y_one() {
    let c = cop_policy(RewardSet::B, -1e9, 100).unwrap();
    assert!(c.y.iter().all(|&y| y == 1.0));
    assert!(c.infeasible.iter().all(|v| !v));
    let xs = x_grid(100);
    let e1 = xs.iter().map(|x| (x + 1.0) * (x + 1.0)).sum::<f64>() / 100.0;
    assert!((c.point.values[0] - e1).abs() < 1e-12);
}

#[test]
fn cop_set_b_max_threshold_pins_r2_maximizer() {
    let grid = 100;
    let m2 = RewardModel::new(RewardSet::B, 2);
    let top = x_grid(grid)
        .iter()
        .flat_map(|&x| y_grid(grid).into_iter().map(move |y| m2.value(x, y)))
        .fold(f64::NEG_INFINITY, f64::max);
    let c = cop_policy(RewardSet::B, top, grid).unwrap();
    assert!(c.y.iter().all(|&y| y == 0.0));
}

#[test]
fn cop_r2_monotone_in_threshold() {
    for set in [RewardSet::A, RewardSet::B] {
        let sweep = cop_sweep(set, 21, 100).unwrap();
        assert_eq!(sweep.len(), 21);
        for w in sweep.windows(2) {
            assert!(w[1].b > w[0].b);
            assert!(w[1].point.values[1] >= w[0].point.values[1] - 1e-12);
            assert!(w[1].point.values[0] <= w[0].point.values[0] + 1e-12);
        }
    }
}

fn near_boundary(ys: &[f64], bound: f64) -> bool {
    ys.iter().any(|y| (y - bound).abs() < 1e-9)
}

#[test]
fn cop_matches_analytic_argmax() {
    let grid = 128;
    let ys = y_grid(grid);
    let r1a = |y: f64| y.sqrt() - y;
    for b in [-1.5, -1.0, -0.6, -0.3, -0.05] {
        let c = cop_policy(RewardSet::A, b, grid).unwrap();
        for (i, &x) in c.x.iter().enumerate() {
            // −sin x − y² ≥ b  ⇔  y ≤ √(−sin x − b)
            let slack = -x.sin() - b;
            if slack < 0.0 {
                assert!(c.infeasible[i]);
                assert_eq!(c.y[i], 0.0);
                continue;
            }
            let bound = slack.sqrt();
            if near_boundary(&ys, bound) {
                continue;
            }
            let want = ys
                .iter()
                .filter(|&&y| y <= bound)
                .fold((f64::NEG_INFINITY, 0.0), |acc, &y| if r1a(y) > acc.0 { (r1a(y), y) } else { acc })
                .1;
            assert_eq!(c.y[i], want, "x={x} b={b}");
        }
    }
    for b in [-0.5, 0.0, 0.2, 0.5] {
        let c = cop_policy(RewardSet::B, b, grid).unwrap();
        for (i, &x) in c.x.iter().enumerate() {
            // ln((1+x)/(1+y)) ≥ b  ⇔  y ≤ (1+x)e^{−b} − 1; r₁ increases in y
            let bound = (1.0 + x) * (-b).exp() - 1.0;
            if near_boundary(&ys, bound) {
                continue;
            }
            if bound < 0.0 {
                assert!(c.infeasible[i]);
                assert_eq!(c.y[i], 0.0);
            } else {
                let want = ys.iter().cloned().filter(|&y| y <= bound).fold(0.0, f64::max);
                assert_eq!(c.y[i], want, "x={x} b={b}");
            }
        }
    }
}

#[test]
fn cop_rejects_coarse_grid() {
    assert!(cop_policy(RewardSet::A, 0.0, 32).is_err());
    assert!(cop_sweep(RewardSet::A, 1, 100).is_err());
}
