use dihedral::dcp_core::{hadamard_zero_probability, rng_from_seed, y_zero_probability, DcpInstance};
use dihedral::dcp_solvers::*;
use dihedral::subset_sum::{build_qss_model, dot, BruteForce, Representation};
use proptest::prelude::*;

/// Direct `O(|G| N)` evaluation of the final distribution.
fn direct_distribution(k: &[u64], g: &[u64], s: u64, n: u64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for &b in g {
                let x = (dot(b, k) % n as u128) as u64;
                let e = (((s + n - j) % n) as u128 * x as u128 % n as u128) as f64;
                let a = 2.0 * std::f64::consts::PI * e / n as f64;
                re += a.cos();
                im += a.sin();
            }
            (re * re + im * im) / (n as f64 * g.len() as f64)
        })
        .collect()
}

#[test]
fn exact_distribution_matches_direct_sum() {
    let d = exact_output_distribution(&[1, 2], &[0, 1, 2, 3], 3, 8).unwrap();
    let e = direct_distribution(&[1, 2], &[0, 1, 2, 3], 3, 8);
    for (a, b) in d.iter().zip(&e) {
        assert!((a - b).abs() < 1e-12);
    }
    let mut rng = rng_from_seed(5);
    for _ in 0..10 {
        let n = 1u64 << 9;
        let k: Vec<u64> = (0..7).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
        let model = build_qss_model(&k, n, 0.2, 3).unwrap();
        let s = rand::Rng::random_range(&mut rng, 0..n);
        let d = exact_output_distribution(&k, &model.g_set(), s, n).unwrap();
        let e = direct_distribution(&k, &model.g_set(), s, n);
        for (a, b) in d.iter().zip(&e) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((d[s as usize] - model.g() as f64 / n as f64).abs() < 1e-10);
    }
}

#[test]
fn exact_distribution_bound_enforced() {
    assert!(exact_output_distribution(&[1; 20], &vec![0; 1 << 10], 0, 1 << 20).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn secret_probability_is_g_over_n(seed in any::<u64>(), m in 1usize..10, eps in 0.0f64..0.5) {
        let mut rng = rng_from_seed(seed);
        let n = 1u64 << 10;
        let k: Vec<u64> = (0..m).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
        let model = build_qss_model(&k, n, eps, seed).unwrap();
        prop_assume!(model.g() > 0);
        let s = rand::Rng::random_range(&mut rng, 0..n);
        let d = exact_output_distribution(&k, &model.g_set(), s, n).unwrap();
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((d[s as usize] - model.g() as f64 / n as f64).abs() < 1e-9);
    }

    #[test]
    fn lemma4_holds_for_structured_weights(v in 0u64..64, m in 1usize..12, eps in 0.0f64..0.9) {
        let n = 64;
        let k = vec![v; m];
        let model = build_qss_model(&k, n, eps, v).unwrap();
        let big_m = (1u64 << m) as f64;
        prop_assert!(model.g() as f64 >= (1.0 - eps) * (2.0 * big_m - model.z() as f64) - 1e-9);
    }
}

#[test]
fn lemma3_small_case() {
    // N = 8, m = 2: M (1 + (M - 1)/N) = 5.5, by averaging over all 64 weight pairs.
    let mut total = 0;
    for a in 0..8 {
        for b in 0..8 {
            total += z_value(&[a, b], 8);
        }
    }
    assert!((total as f64 / 64.0 - 5.5).abs() < 1e-12);
    let mut rng = rng_from_seed(1);
    let c = verify_lemma_ez(3, 2, 20_000, &mut rng).unwrap();
    assert!((c.analytic - 5.5).abs() < 1e-12);
    assert!(c.within(4.0));
}

#[test]
fn g_bound_tight_for_distinct_sums() {
    let k: Vec<u64> = (0..5).map(|i| 1 << i).collect();
    let model = build_qss_model(&k, 64, 0.0, 0).unwrap();
    assert_eq!(model.g(), 32);
    assert_eq!(model.z(), 32);
}

#[test]
fn step4_acceptance_rate() {
    let n = 1u64 << 10;
    let mut rng = rng_from_seed(77);
    let inst = DcpInstance::new(n, Some(321), 1).unwrap();
    let k: Vec<u64> = (0..9).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
    let model = build_qss_model(&k, n, 0.1, 8).unwrap();
    let p = model.g() as f64 / 512.0;
    let trials = 4000;
    let mut acc = 0;
    for _ in 0..trials {
        let (rec, _) = qss_attempt(&inst, &model, FinalMode::Sampled, &mut rng).unwrap();
        acc += rec.step4_ok as u32;
    }
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    assert!((acc as f64 - trials as f64 * p).abs() < 3.0 * sigma);
}

#[test]
fn sampled_and_exact_modes_agree() {
    let n = 1u64 << 8;
    let inst = DcpInstance::new(n, Some(100), 1).unwrap();
    let mut rng = rng_from_seed(3);
    let k: Vec<u64> = (0..6).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
    let model = build_qss_model(&k, n, 0.0, 8).unwrap();
    let p = model.g() as f64 / n as f64;
    for mode in [FinalMode::Exact, FinalMode::Sampled] {
        let mut hits = 0;
        let mut runs = 0;
        while runs < 3000 {
            let (rec, _) = qss_attempt(&inst, &model, mode, &mut rng).unwrap();
            if rec.step4_ok {
                runs += 1;
                hits += rec.hit as u32;
            }
        }
        let sigma = (3000.0 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - 3000.0 * p).abs() < 4.0 * sigma, "{mode:?}");
    }
}

#[test]
fn qss_small_example() {
    // N = 8, m = 2, k = (1, 2): G = 4 and Pr[j = s] = 1/2.
    let inst = DcpInstance::new(8, Some(6), 0).unwrap();
    let model = build_qss_model(&[1, 2], 8, 0.0, 0).unwrap();
    assert_eq!(model.g(), 4);
    let d = exact_output_distribution(&[1, 2], &model.g_set(), 6, 8).unwrap();
    assert!((d[6] - 0.5).abs() < 1e-12);
    let mut rng = rng_from_seed(0);
    let (rec, _) = qss_attempt(&inst, &model, FinalMode::Exact, &mut rng).unwrap();
    assert!(rec.step4_ok);
}

#[test]
fn qss_solve_queries_are_linear() {
    let mut rng = rng_from_seed(9);
    for seed in 0..20 {
        let mut inst = DcpInstance::new(1 << 10, None, seed).unwrap();
        let r = qss_dcp_solve(&mut inst, 9, QssOptions::ideal(), &mut rng).unwrap();
        assert_eq!(r.recovered_s, Some(inst.secret_for_testing()));
        assert_eq!(r.queries_used, 9 * (r.restarts + 1));
        assert_eq!(r.queries_used, inst.queries());
    }
}

#[test]
fn ettinger_hoyer_recovers_secret() {
    let mut rng = rng_from_seed(11);
    let mut ok = 0;
    for seed in 0..100 {
        let mut inst = DcpInstance::new(1 << 10, None, seed).unwrap();
        let s = ettinger_hoyer(&mut inst, 80, &mut rng).unwrap();
        ok += (s == inst.secret_for_testing()) as u32;
        assert_eq!(inst.queries(), 80);
    }
    assert!(ok >= 90, "{ok}");
}

/// Expected log-likelihood of candidate `c` when the secret is `s`, averaged over
/// labels and both bases.
fn expected_score(s: u64, c: u64, n: u64) -> f64 {
    let mut total = 0.0;
    for k in 0..n {
        let ts = k * s % n;
        let tc = k * c % n;
        for f in [hadamard_zero_probability, y_zero_probability] {
            let (p, q) = (f(ts, n), f(tc, n));
            total += p * q.max(1e-300).ln() + (1.0 - p) * (1.0 - q).max(1e-300).ln();
        }
    }
    total
}

#[test]
fn ettinger_hoyer_true_secret_maximizes_expected_score() {
    let n = 32;
    for s in 0..n {
        let best = expected_score(s, s, n);
        for c in 0..n {
            assert!(expected_score(s, c, n) <= best + 1e-9);
        }
    }
}

#[test]
fn regev_lsb_majority_vote() {
    let mut rng = rng_from_seed(21);
    let mut correct = 0;
    for seed in 0..100 {
        let mut inst = DcpInstance::new(1 << 12, None, seed).unwrap();
        let mut ones = 0;
        for _ in 0..15 {
            let (bit, rep) = regev_lsb(&mut inst, &BruteForce, 256, &mut rng).unwrap();
            assert_eq!(rep.queries_used, 12 * (rep.restarts + 1));
            ones += bit as u32;
        }
        let vote = u64::from(ones > 7);
        correct += (vote == inst.secret_for_testing() & 1) as u32;
    }
    assert!(correct >= 95, "{correct}");
}

#[test]
fn regev_lsb_with_representation_solver() {
    let mut rng = rng_from_seed(2);
    for seed in 0..10 {
        let mut inst = DcpInstance::new(1 << 12, None, seed).unwrap();
        let (bit, _) = regev_lsb(&mut inst, &Representation::default(), 256, &mut rng).unwrap();
        assert_eq!(bit as u64, inst.secret_for_testing() & 1);
    }
}

#[test]
fn regev_lsb_restarts_on_zero_labels() {
    let inst = DcpInstance::new(1 << 6, Some(5), 0).unwrap();
    let qubits: Vec<_> = (0..6).map(|_| dihedral::dcp_core::PhaseVector::single(0, 64)).collect();
    let mut rng = rng_from_seed(0);
    for _ in 0..20 {
        assert_eq!(regev_lsb_attempt(&inst, &qubits, &BruteForce, &mut rng).unwrap(), None);
    }
}

#[test]
fn interpolation_endpoints() {
    let mut rng = rng_from_seed(14);
    for t in [1u32, 6, 13] {
        let mut ok = 0;
        for seed in 0..10 {
            let mut inst = DcpInstance::new(1 << 14, None, seed).unwrap();
            let r = interpolation_solve(&mut inst, t, QssOptions::ideal(), &mut rng).unwrap();
            ok += (r.recovered_s == Some(inst.secret_for_testing())) as u32;
        }
        assert_eq!(ok, 10);
    }
}
