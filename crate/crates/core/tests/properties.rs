use mopo::cli::csvio::{dataset_csv, fmt_sig9, parse_dataset};
use mopo::domain::*;
use mopo::pareto::*;
use mopo::solver::*;
use mopo::synth::*;
use proptest::prelude::*;

fn brute_nondominated(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
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

fn fd_ok(fd: f64, g: f64) -> bool {
    (fd - g).abs() <= 1e-4 * g.abs().max(1e-2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn bt_complementarity(r in -20.0f64..20.0, rp in -20.0f64..20.0) {
        let a = bt_prob(r, rp, BtForm::Logistic).unwrap();
        let b = bt_prob(rp, r, BtForm::Logistic).unwrap();
        prop_assert!((a + b - 1.0).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn bt_ratio_complementarity(r in 1e-6f64..50.0, rp in 1e-6f64..50.0) {
        let a = bt_prob(r, rp, BtForm::Ratio).unwrap();
        let b = bt_prob(rp, r, BtForm::Ratio).unwrap();
        prop_assert!((a + b - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn front_matches_brute_force(
        raw in prop::collection::vec(prop::collection::vec(0u8..6, 2), 1..25)
    ) {
        // coarse integer grid forces ties and duplicates
        let pts: Vec<Vec<f64>> = raw.iter().map(|v| v.iter().map(|&x| x as f64 / 5.0).collect()).collect();
        let ops: Vec<ObjectivePoint> = pts.iter().cloned().map(ObjectivePoint::new).collect();
        let front = pareto_front(&ops).unwrap();
        let got: Vec<Vec<f64>> = front.points.iter().map(|p| p.values.clone()).collect();
        prop_assert_eq!(&got, &brute_nondominated(&pts));
        let again = pareto_front(&front.points).unwrap();
        prop_assert_eq!(&again, &front);
        for p in &ops {
            let d = dominated_distance(p, &front);
            prop_assert!(d >= 0.0);
            if got.contains(&p.values) {
                prop_assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn front_three_objectives(
        raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..20)
    ) {
        let ops: Vec<ObjectivePoint> = raw.iter().cloned().map(ObjectivePoint::new).collect();
        let front = pareto_front(&ops).unwrap();
        let got: Vec<Vec<f64>> = front.points.iter().map(|p| p.values.clone()).collect();
        prop_assert_eq!(got, brute_nondominated(&raw));
        for (j, view) in front.sorted.iter().enumerate() {
            prop_assert!(view.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(view.len(), front.len());
            prop_assert!(front.points.iter().all(|p| view.contains(&p.values[j])));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_is_distribution(logits in prop::collection::vec(-300.0f64..300.0, 1..12), c in -100.0f64..100.0) {
        let p = softmax_probs(&logits).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
        let q = softmax_probs(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn kl_nonnegative(a in prop::collection::vec(0.01f64..1.0, 2..8), b in prop::collection::vec(0.01f64..1.0, 2..8)) {
        let n = a.len().min(b.len());
        let sa: f64 = a[..n].iter().sum();
        let sb: f64 = b[..n].iter().sum();
        let p: Vec<f64> = a[..n].iter().map(|v| v / sa).collect();
        let q: Vec<f64> = b[..n].iter().map(|v| v / sb).collect();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn insertion_index_matches_scan(mut list in prop::collection::vec(-5.0f64..5.0, 0..12), alpha in -6.0f64..6.0) {
        list.sort_by(f64::total_cmp);
        let scan = list.iter().position(|&v| v >= alpha).unwrap_or(list.len());
        prop_assert_eq!(insertion_index(&list, alpha).unwrap(), scan);
    }

    #[test]
    fn lower_bound_below_mean(
        z in prop::collection::vec(0.0f64..5.0, 1..30),
        chi in 0.0f64..50.0,
    ) {
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let b = [Batch { z: vec![z.clone()] }];
        let l = lower_bound(&[chi], &b, 0.0)[0];
        let min = z.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(l <= mean + 1e-12);
        prop_assert!(l >= min - 1e-12);
        // larger χ never lowers the bound
        let l2 = lower_bound(&[chi + 1.0], &b, 0.0)[0];
        prop_assert!(l2 >= l - 1e-12);
    }

    #[test]
    fn chi_loss_gradient(
        z in prop::collection::vec(0.0f64..4.0, 2..20),
        chi in 0.01f64..20.0,
        eps in 0.0f64..0.3,
    ) {
        let b = [Batch { z: vec![z] }];
        let (_, g) = chi_loss(&[chi], &b, eps);
        let h = 1e-6 * chi.max(1.0);
        let fd = (chi_loss(&[chi + h], &b, eps).0 - chi_loss(&[chi - h], &b, eps).0) / (2.0 * h);
        prop_assert!(fd_ok(fd, g[0]), "{} vs {}", fd, g[0]);
    }

    #[test]
    fn bc_loss_gradient(
        logits in prop::collection::vec(-3.0f64..3.0, 2..8),
        w in prop::collection::vec(0.0f64..2.0, 8),
    ) {
        let w = &w[..logits.len()];
        let (_, g) = bc_loss(&logits, w);
        for j in 0..logits.len() {
            let h = 1e-6;
            let mut up = logits.clone();
            let mut dn = logits.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (bc_loss(&up, w).0 - bc_loss(&dn, w).0) / (2.0 * h);
            prop_assert!(fd_ok(fd, g[j]));
        }
    }

    #[test]
    fn lambda_stays_in_box(l in 0.0f64..10.0, b in -1.0f64..2.0, lb in -1.0f64..2.0, eta in 0.0f64..5.0) {
        let s = DualState {
            lambda: vec![l], chi: vec![1.0], b: vec![b], tau: 0.1, epsilon: 0.0,
            beta: vec![0.9], t0: 1, step: 0,
        };
        let next = lambda_step(&s, &[lb], eta, 8.0)[0];
        prop_assert!((0.0..=8.0).contains(&next));
    }

    #[test]
    fn augmentation_preserves_pairs(seed in 0u64..1000, reps in 1usize..6) {
        let d = random_bandit_dataset(seed, reps).unwrap();
        let a = augment_symmetric(&d);
        prop_assert_eq!(a.len(), 2 * d.len());
        for (orig, twin) in d.records.iter().zip(&a.records[d.len()..]) {
            prop_assert_eq!(twin, &orig.swapped());
            prop_assert_eq!(&twin.swapped(), orig);
        }
    }

    #[test]
    fn dataset_csv_round_trip(seed in 0u64..10_000, n in 1usize..60) {
        let ds = build_motivating_datasets(n, seed, RewardSet::B, 0.5, BtForm::Logistic).unwrap();
        let back = parse_dataset(&dataset_csv(&ds.joint).unwrap()).unwrap();
        prop_assert_eq!(back, ds.joint);
    }

    #[test]
    fn sig9_parses_back(v in prop::num::f64::NORMAL) {
        let s = fmt_sig9(v);
        let p: f64 = s.parse().unwrap();
        prop_assert!((p - v).abs() <= 5e-9 * v.abs(), "{} -> {}", v, s);
    }

    #[test]
    fn rho_star_is_monotone_in_mean(p in 0.0f64..1.0, q in 0.0f64..1.0, tau in 0.05f64..2.0) {
        // more primary wins on a cell never lowers its ratio
        let recs = |win: bool| vec![PreferenceRecord::bandit(0, 1, &[true, win]), PreferenceRecord::bandit(0, 2, &[false, true])];
        let d_lo = PreferenceDataset::new(recs(false), 2, Mode::Bandit { n_actions: 3 }).unwrap();
        let d_hi = PreferenceDataset::new(recs(true), 2, Mode::Bandit { n_actions: 3 }).unwrap();
        let shape = PolicyShape::Bandit { n: 3 };
        let lo = rho_star(&[p + q], &CellStats::from_dataset(&d_lo, shape).unwrap(), tau);
        let hi = rho_star(&[p + q], &CellStats::from_dataset(&d_hi, shape).unwrap(), tau);
        prop_assert!(hi.exponents[0] > lo.exponents[0]);
        prop_assert_eq!(hi.exponents[1], -1.0);
    }
}

#[test]
fn train_multipliers_nonnegative_across_presets() {
    for preset in [SolverConfig::default(), SolverConfig::constrained(PolicyShape::Bandit { n: 3 })] {
        for id in 1..=5 {
            let c = SolverConfig { epochs: 2000, ..preset.clone() };
            let r = train(&c, &canonical_dataset(id).unwrap()).unwrap();
            assert!(r.history.iter().all(|s| s.lambda.iter().chain(&s.chi).all(|v| *v >= 0.0)));
        }
    }
}
