use dihedral::cost_models::*;
use dihedral::subset_sum::{log2_binomial, weight_guess_probability};
use proptest::prelude::*;

const TABLE2: [(u32, [f64; 4], [f64; 4]); 5] = [
    (256, [19.0, 76.0, 19.0, 73.0], [11.0, 73.0, 85.0, 61.0]),
    (512, [21.0, 148.0, 21.0, 145.0], [12.0, 134.0, 148.0, 122.0]),
    (896, [23.0, 257.0, 23.0, 254.0], [13.0, 226.0, 240.0, 214.0]),
    (1536, [25.0, 438.0, 25.0, 435.0], [14.0, 378.0, 394.0, 366.0]),
    (2048, [25.0, 583.0, 25.0, 580.0], [14.0, 500.0, 516.0, 488.0]),
];

#[test]
fn simple_sieve_exponents() {
    assert!((sieve_cost_simple(4608).unwrap().queries - 96.0).abs() < 1e-9);
    assert!((sieve_cost_simple(256).unwrap().queries - 512f64.sqrt()).abs() < 1e-12);
    assert!((sieve_cost_simple(2).unwrap().queries - 2.0).abs() < 1e-12);
    let r = sieve_cost_simple(512).unwrap();
    assert!((r.quantum_time - (32.0 + 5.0)).abs() < 1e-9);
}

#[test]
fn precise_sieve_exponents() {
    let (d, c) = (SIEVE_DELTA, sieve_adjust_c());
    assert!((sieve_cost_precise(4608, d, c).unwrap().queries - 99.6).abs() < 0.05);
    assert!((sieve_cost_precise(256, d, c).unwrap().queries - 24.1).abs() < 0.05);
    for n in [16, 100, 4608] {
        let a = sieve_cost_precise(n, 0.0, 0.0).unwrap();
        assert_eq!(a, sieve_cost_simple(n).unwrap());
    }
    assert!(sieve_cost_precise(10, 1.0, c).is_err());
}

proptest! {
    #[test]
    fn precise_sieve_matches_rounded_closed_form(n in 4u32..20_000) {
        let got = sieve_cost_precise(n, SIEVE_DELTA, sieve_adjust_c()).unwrap().queries;
        let closed = 1.029 * (0.76 + (2.0 * n as f64 + 2.30).sqrt());
        prop_assert!((got - closed).abs() < 0.05, "n={} got {} closed {}", n, got, closed);
    }

    #[test]
    fn sum_lemma_bound_holds(alpha in 0.05f64..4.0, n in 1u64..5000) {
        let (lhs, rhs) = sum_lemma_check(alpha, n).unwrap();
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn interpolation_is_monotone(n in 8u32..400, frac in 0.0f64..1.0) {
        let t = 1 + ((n - 3) as f64 * frac) as u32;
        let a = interpolation_cost(n, t, C_DCP, C_QSS_QRACM).unwrap();
        let b = interpolation_cost(n, t + 1, C_DCP, C_QSS_QRACM).unwrap();
        // The sieve term always shrinks; the log2(sqrt(n - t) + t) factor only
        // stops dominating once t exceeds about sqrt(n).
        let sieve = |t: u32| (C_DCP * (n - t) as f64).sqrt();
        prop_assert!(sieve(t + 1) < sieve(t));
        if t as f64 >= 1.1 * (n as f64).sqrt() {
            prop_assert!(b.queries <= a.queries + 1e-12);
        }
        prop_assert!(b.notes[1].log2 > a.notes[1].log2);
        prop_assert!(a.breakdown_gap() < 1e-6);
    }
}

#[test]
fn sum_lemma_examples() {
    let (lhs, rhs) = sum_lemma_check(2.0, 1).unwrap();
    assert!((lhs - 2.0).abs() < 1e-12 && rhs >= 2.0);
    let (lhs, rhs) = sum_lemma_check(2.0, 100).unwrap();
    assert!(lhs <= rhs);
    let (lhs, rhs) = sum_lemma_check(2f64.sqrt(), 4096).unwrap();
    assert!(lhs <= rhs && rhs - lhs <= (3.0 * 64.0f64).log2());
    assert!(sum_lemma_check(0.0, 5).is_err());
}

#[test]
fn table_two_reproduction() {
    for (n, regev, alg4) in TABLE2 {
        let r = table_row(Algorithm::Regev, n).unwrap().rounded();
        assert_eq!(r.queries, regev[0], "regev queries n={n}");
        assert!((r.classical_time - regev[1]).abs() <= 1.0, "regev ct n={n}");
        assert_eq!(r.quantum_time, regev[2]);
        assert_eq!(r.classical_space, regev[3], "regev space n={n}");
        let a = table_row(Algorithm::Alg4Qracm, n).unwrap().rounded();
        assert_eq!([a.queries, a.classical_time, a.classical_space], [alg4[0], alg4[1], alg4[3]], "n={n}");
        assert!((a.quantum_time - alg4[2]).abs() <= 1.0, "alg4 qt n={n}");
    }
}

#[test]
fn table_rows_are_well_formed() {
    for alg in Algorithm::ALL {
        for n in [64, 256, 2048] {
            let r = table_row(alg, n).unwrap();
            assert!(r.breakdown_gap() < 1e-6);
            for x in [r.queries, r.classical_time, r.quantum_time, r.classical_space, r.quantum_space] {
                assert!(x >= 0.0);
            }
        }
        assert!(table_row(alg, 63).is_err());
    }
}

#[test]
fn interpolation_endpoints() {
    let n = 256;
    let lo = interpolation_cost(n, 1, C_DCP, C_QSS_QRACM).unwrap();
    let expect = (2.0 * (n - 1) as f64).sqrt() + (((n - 1) as f64).sqrt() + 1.0).log2();
    assert!((lo.queries - expect).abs() < 1e-12);
    let hi = interpolation_cost(n, n - 1, C_DCP, C_QSS_QRACM).unwrap();
    assert!((hi.queries - ((n - 1) as f64).log2()).abs() < 1.5);
    // Against the table, up to the additive 3 of the table's query formulas.
    let k2 = table_row(Algorithm::Kuperberg2, n).unwrap();
    assert!((lo.queries - (k2.queries - 3.0)).abs() <= 1.5);
    let a4 = table_row(Algorithm::Alg4Qracm, n).unwrap();
    assert!((hi.queries - (a4.queries - 3.0)).abs() <= 1.5);
    assert!(interpolation_cost(n, 0, C_DCP, C_QSS_QRACM).is_err());
    assert!(interpolation_cost(n, n, C_DCP, C_QSS_QRACM).is_err());
}

/// Checks the tree constraints from the reported nodes alone.
fn check_nodes(sol: &TreeSolution, m: f64, exact: bool, tol: f64) {
    let lb = |a: f64, b: f64| {
        if exact {
            log2_binomial(a, b)
        } else {
            a * dihedral::subset_sum::entropy(b / a)
        }
    };
    let pf = |w1: f64, w2: f64| lb(m - w1, w2) - lb(m, w2);
    let n = |name: &str| sol.node(name).unwrap_or_else(|| panic!("missing {name}"));
    for node in sol.nodes.iter().filter(|n| n.name != "L^0") {
        let cap = lb(node.support, node.weight) - node.c;
        assert!(node.ell <= cap + tol, "{} ell {} cap {}", node.name, node.ell, cap);
        assert!(node.ell >= -tol, "{} negative", node.name);
    }
    let (l0, l01, l11) = (n("L^0"), n("L_0^1"), n("L_1^1"));
    assert!((l0.weight - l01.weight - l11.weight).abs() < tol);
    let merged = l01.ell + l11.ell - (m - l01.c) + pf(l01.weight, l11.weight);
    assert!((merged - l0.ell).abs() < tol, "root {} vs {}", merged, l0.ell);
    let (l22, l12) = (n("L_2^2"), n("L_1^2"));
    let expect11 = 2.0 * l22.ell - (l11.c - l22.c) + pf(l22.weight, l22.weight);
    assert!((expect11 - l11.ell).abs() < tol);
    let l02 = n("L_0^2");
    let expect01 = l02.ell + l12.ell - (l01.c - l02.c) + pf(l02.weight, l12.weight);
    assert!((expect01 - l01.ell).abs() < tol);
    assert!((l11.weight - 2.0 * l22.weight).abs() < tol);
    assert!((l01.weight - l02.weight - l12.weight).abs() < tol);
}

#[test]
fn asymptotic_trees() {
    let q = optimize_tree_asymptotic(TreeShape::Qracm).unwrap();
    assert!((q.time - 0.2356).abs() <= 0.001, "qracm {}", q.time);
    check_nodes(&q.solution, 1.0, false, 1e-6);
    let nq = optimize_tree_asymptotic(TreeShape::NoQracm).unwrap();
    assert!((nq.time - 0.4165).abs() <= 0.002, "time {}", nq.time);
    assert!((nq.memory - 0.2324).abs() <= 0.002, "memory {}", nq.memory);
    assert!((nq.solution.c1 - 0.4363).abs() <= 0.005, "c1 {}", nq.solution.c1);
    assert!((nq.solution.node("L_0^1").unwrap().ell - 0.4990).abs() <= 0.005);
    check_nodes(&nq.solution, 1.0, false, 1e-6);
}

#[test]
fn exact_tree_is_consistent() {
    let opts = ExactOptions::default();
    let e = optimize_tree_exact(127, TreeShape::NoQracm, opts).unwrap();
    check_nodes(&e.continuous, 127.0, true, 1e-6 * 127.0);
    check_nodes(&e.rounded, 127.0, true, 1e-6 * 127.0);
    assert!((e.continuous.root_size_log2 - 2.0).abs() < 1e-6);
    assert!(e.rounded.root_size_log2 >= 1.0 - 1e-6);
    let expect = e.rounded.total_steps() - weight_guess_probability(127).log2() + (std::f64::consts::PI / 2.0).log2();
    assert!((e.total - expect).abs() < 1e-9);
    let w = &e.rounded_params;
    assert_eq!(w.w02 + 2 * w.left_leaf_weight + 4 * w.right_leaf_weight, 64);
    assert!(optimize_tree_exact(63, TreeShape::NoQracm, opts).is_err());
}
