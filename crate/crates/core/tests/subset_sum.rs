use dihedral::dcp_core::rng_from_seed;
use dihedral::subset_sum::*;
use proptest::prelude::*;

fn binom(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn pf_exact_matches_pair_count() {
    for m in 1..=12u32 {
        for w1 in 0..=m {
            for w2 in 0..=(m - w1) {
                let fixed: u64 = (1 << w1) - 1;
                let disjoint = (0..1u64 << m)
                    .filter(|x| x.count_ones() == w2 && x & fixed == 0)
                    .count() as f64;
                let total = binom(m as u64, w2 as u64) as f64;
                let (pf, _) =
                    filtering_probability(w1 as f64 / m as f64, w2 as f64 / m as f64, m as usize).unwrap();
                assert!((pf - disjoint / total).abs() < 1e-9, "m={m} w1={w1} w2={w2}");
            }
        }
    }
}

#[test]
fn pf_rate_converges() {
    let (_, rate) = filtering_probability(0.25, 0.25, 10_000).unwrap();
    assert!((rate - pf_rate(0.25, 0.25)).abs() < 0.01);
}

#[test]
fn sampled_patterns_are_uniform() {
    let mut rng = rng_from_seed(4);
    let list = sample_distribution(0xff, 4, 100_000, &mut rng).unwrap();
    assert!(list.is_valid(&[0; 8]));
    let mut counts = std::collections::HashMap::new();
    for &e in &list.elements {
        *counts.entry(e).or_insert(0u32) += 1;
    }
    assert_eq!(counts.len(), 70);
    let mean = 100_000.0 / 70.0;
    let sigma = (mean * (1.0 - 1.0 / 70.0) as f64).sqrt();
    for &c in counts.values() {
        assert!((c as f64 - mean).abs() < 5.0 * sigma);
    }
    let zero = sample_distribution(0xff, 0, 5, &mut rng).unwrap();
    assert!(zero.elements.iter().all(|&e| e == 0));
    let full = sample_distribution(0xff, 8, 5, &mut rng).unwrap();
    assert!(full.elements.iter().all(|&e| e == 0xff));
}

fn quadratic_merge(l1: &WeightedList, l2: &WeightedList, k: &[u64], c: Condition, w: u32) -> Vec<u64> {
    let mut out = Vec::new();
    for &a in &l1.elements {
        for &b in &l2.elements {
            if a & b == 0 && (a | b).count_ones() == w && c.holds(dot(a | b, k)) {
                out.push(a | b);
            }
        }
    }
    out.sort_unstable();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn merge_filter_matches_quadratic_scan(
        seed in any::<u64>(),
        s1 in 0usize..=1024,
        s2 in 0usize..=1024,
        w1 in 1u32..6,
        w2 in 1u32..6,
        md in 1u64..64,
    ) {
        let mut rng = rng_from_seed(seed);
        let m = 16;
        let k: Vec<u64> = (0..m).map(|_| rand::Rng::random_range(&mut rng, 0..1u64 << 16)).collect();
        let l1 = sample_distribution(0xffff, w1, s1, &mut rng).unwrap();
        let l2 = sample_distribution(0xffff, w2, s2, &mut rng).unwrap();
        let c = Condition::new(md, seed % md).unwrap();
        let mut fast = merge_filter(&l1, &l2, &k, c, w1 + w2).elements;
        fast.sort_unstable();
        prop_assert_eq!(fast, quadratic_merge(&l1, &l2, &k, c, w1 + w2));
    }

    #[test]
    fn brute_force_is_exact(seed in any::<u64>(), m in 1usize..12, n in 2u64..200) {
        let mut rng = rng_from_seed(seed);
        let (inst, planted) = SubsetSumInstance::random_planted(n, m, &mut rng);
        let sols = brute_force_all(&inst).unwrap();
        let direct: Vec<u64> = (0..1u64 << m).filter(|&b| inst.is_solution(b)).collect();
        let mut sorted = direct.clone();
        sorted.sort_by(|&a, &b| lex_cmp(a, b));
        prop_assert_eq!(&sols, &sorted);
        prop_assert!(sols.contains(&planted));
    }

    #[test]
    fn qss_model_is_sound(seed in any::<u64>(), m in 1usize..12, eps in 0.0f64..0.9) {
        let mut rng = rng_from_seed(seed);
        let n = 1u64 << 10;
        let k: Vec<u64> = (0..m).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
        let model = build_qss_model(&k, n, eps, seed).unwrap();
        let a = model.achievable();
        prop_assert_eq!(a - model.g(), (eps * a as f64).floor() as u64);
        prop_assert_eq!(model.entries().iter().map(|e| e.count).sum::<u64>(), 1u64 << m);
        for e in model.entries() {
            if let Some(b) = e.solution {
                prop_assert_eq!((dot(b, &k) % n as u128) as u64, e.v);
            }
        }
        prop_assert_eq!(model.clone(), build_qss_model(&k, n, eps, seed).unwrap());
    }
}

#[test]
fn qss_choice_is_uniform_between_two_solutions() {
    // k = (1, 2, 3): the sum 3 has exactly the solutions {3} and {1, 2}.
    let k = [1u64, 2, 3];
    let mut first = 0;
    for seed in 0..100 {
        let model = build_qss_model(&k, 16, 0.0, seed).unwrap();
        assert_eq!(model.apply(7).is_none(), true);
        if model.apply(3) == Some(0b100) {
            first += 1;
        }
        assert_eq!(model.apply(3), qss_apply(&model, 3));
    }
    assert!((35..=65).contains(&first), "{first}");
}

#[test]
fn reduction_round_trip() {
    let mut rng = rng_from_seed(12);
    let n_bits = 16;
    let modulus = 1u64 << n_bits;
    let (m, t) = (12usize, 5usize);
    let e = m - t;
    for _ in 0..5 {
        let k: Vec<u64> = (0..m)
            .map(|row| {
                let r: u64 = rand::Rng::random_range(&mut rng, 0..modulus);
                if row < e {
                    (r >> (row + 1) << (row + 1)) | 1 << row
                } else {
                    r >> e << e
                }
            })
            .collect();
        for b in 0..1u64 << m {
            let v = (dot(b, &k) % modulus as u128) as u64;
            let red = gaussian_reduce(&k, t, v, modulus).unwrap();
            assert_eq!(red.reduced.k.len(), t);
            let tail = b >> e;
            assert!(red.reduced.is_solution(tail));
            assert_eq!(red.extend(tail), b);
        }
    }
    assert!(gaussian_reduce(&[2, 2], 1, 0, 16).is_err());
}

#[test]
fn reduction_with_powers_of_two() {
    let k: Vec<u64> = (0..8).map(|i| 1 << i).collect();
    let red = gaussian_reduce(&k, 1, 0b1011_0110, 256).unwrap();
    assert_eq!(red.reduced.k.len(), 1);
    assert_eq!(red.reduced.modulus, 2);
    assert_eq!(red.extend(red.reduced.v), 0b1011_0110);
}

#[test]
fn representation_solver_matches_oracle() {
    let mut rng = rng_from_seed(2024);
    let mut matched = 0;
    for _ in 0..100 {
        let (inst, planted) = SubsetSumInstance::random_planted(1 << 20, 20, &mut rng);
        let all = brute_force_all(&inst).unwrap();
        let found = solve_classical_rep(&inst, outer_iterations(1.0 / 16.0), &mut rng);
        assert!(found.iter().all(|b| all.contains(b)));
        assert!(all.contains(&planted));
        if found == all {
            matched += 1;
        }
    }
    assert!(matched >= 95, "{matched}");
}

#[test]
fn representation_solver_without_solutions() {
    let inst = SubsetSumInstance::new(1 << 20, vec![2; 20], 1).unwrap();
    let mut rng = rng_from_seed(1);
    assert!(solve_classical_rep(&inst, 2, &mut rng).is_empty());
    assert!(brute_force_all(&inst).unwrap().is_empty());
}
