//! Modular subset-sum: instances, a brute-force oracle, list merging with filtering,
//! a classical representation solver, the simulated quantum solver and the reduction
//! of triangular configurations.
//!
//! A vector `b in {0,1}^m` is stored as a `u64` mask whose bit `i` is `b_(i+1)`.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dcp_core::{rng_from_seed, submod};
use crate::error::{invalid, Error, Result};

/// Largest dimension accepted by [`brute_force_all`].
pub const BRUTE_FORCE_MAX_M: usize = 28;
/// Largest dimension accepted by [`build_qss_model`].
pub const QSS_MAX_M: usize = 24;

/// `b` as a 0/1 vector `(b_1, ..., b_m)`.
pub fn mask_to_bits(mask: u64, m: usize) -> Vec<u8> {
    (0..m).map(|i| (mask >> i & 1) as u8).collect()
}

pub fn bits_to_mask(bits: &[u8]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (u64::from(b & 1) << i))
}

/// Lexicographic order on `(b_1, ..., b_m)`.
pub fn lex_cmp(a: u64, b: u64) -> Ordering {
    a.reverse_bits().cmp(&b.reverse_bits())
}

/// Integer (not reduced) value of `<b, k>`.
pub fn dot(mask: u64, k: &[u64]) -> u128 {
    let mut s = 0u128;
    let mut rest = mask;
    while rest != 0 {
        let i = rest.trailing_zeros() as usize;
        s += k[i] as u128;
        rest &= rest - 1;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSumInstance {
    pub modulus: u64,
    pub k: Vec<u64>,
    pub v: u64,
}

impl SubsetSumInstance {
    pub fn new(modulus: u64, k: Vec<u64>, v: u64) -> Result<Self> {
        if modulus < 1 {
            return invalid("modulus must be positive");
        }
        if k.is_empty() || k.len() > 64 {
            return invalid("dimension must be between 1 and 64");
        }
        if let Some(&bad) = k.iter().chain(std::iter::once(&v)).find(|&&x| x >= modulus) {
            return Err(Error::LabelBound {
                label: bad,
                bound: modulus,
            });
        }
        Ok(SubsetSumInstance { modulus, k, v })
    }

    /// Uniform weights and a target `<b, k>` for a planted uniform `b`.
    pub fn random_planted<R: Rng + ?Sized>(modulus: u64, m: usize, rng: &mut R) -> (Self, u64) {
        let k: Vec<u64> = (0..m).map(|_| rng.random_range(0..modulus)).collect();
        let b = rng.random_range(0..u64::MAX) & low_mask(m);
        let v = (dot(b, &k) % modulus as u128) as u64;
        (SubsetSumInstance { modulus, k, v }, b)
    }

    pub fn m(&self) -> usize {
        self.k.len()
    }

    pub fn sum(&self, mask: u64) -> u64 {
        (dot(mask, &self.k) % self.modulus as u128) as u64
    }

    pub fn is_solution(&self, mask: u64) -> bool {
        mask & !low_mask(self.m()) == 0 && self.sum(mask) == self.v
    }
}

fn low_mask(m: usize) -> u64 {
    if m >= 64 {
        u64::MAX
    } else {
        (1u64 << m) - 1
    }
}

/// All `(mask, <mask,k> mod n)` over the subsets of coordinates `lo..hi`.
fn half_sums(k: &[u64], lo: usize, hi: usize, n: u64) -> Vec<(u64, u64)> {
    let mut out = vec![(0u64, 0u64)];
    for i in lo..hi {
        let ki = k[i] % n;
        let len = out.len();
        for j in 0..len {
            let (mask, s) = out[j];
            out.push((mask | 1 << i, ((s as u128 + ki as u128) % n as u128) as u64));
        }
    }
    out
}

/// Every solution, in lexicographic order, by meet-in-the-middle.
pub fn brute_force_all(inst: &SubsetSumInstance) -> Result<Vec<u64>> {
    let m = inst.m();
    if m > BRUTE_FORCE_MAX_M {
        return invalid(format!("brute force limited to m <= {BRUTE_FORCE_MAX_M}, got {m}"));
    }
    let n = inst.modulus;
    let half = m / 2;
    let mut left = half_sums(&inst.k, 0, half, n);
    left.sort_unstable_by_key(|&(mask, s)| (s, mask));
    let right = half_sums(&inst.k, half, m, n);
    let mut sols = Vec::new();
    for (rmask, rs) in right {
        let want = submod(inst.v, rs, n);
        let a = left.partition_point(|&(_, s)| s < want);
        for &(lmask, s) in &left[a..] {
            if s != want {
                break;
            }
            sols.push(lmask | rmask);
        }
    }
    sols.sort_unstable_by(|&a, &b| lex_cmp(a, b));
    Ok(sols)
}

/// `log2 C(a, b)` for real arguments, through the log-gamma function.
pub fn log2_binomial(a: f64, b: f64) -> f64 {
    if b < 0.0 || b > a {
        return f64::NEG_INFINITY;
    }
    (libm::lgamma(a + 1.0) - libm::lgamma(b + 1.0) - libm::lgamma(a - b + 1.0))
        / std::f64::consts::LN_2
}

/// Binary entropy in bits.
pub fn entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Limit of `log2(PF)/m` for relative weights `a1`, `a2`:
/// `(1 - a1) h(a2 / (1 - a1)) - h(a2)`.
pub fn pf_rate(a1: f64, a2: f64) -> f64 {
    if a2 <= 0.0 {
        return 0.0;
    }
    if a1 + a2 > 1.0 {
        return f64::NEG_INFINITY;
    }
    (1.0 - a1) * entropy(a2 / (1.0 - a1)) - entropy(a2)
}

/// Probability that a fixed weight-`a1 m` vector and a uniform weight-`a2 m` vector
/// have disjoint supports: `PF = C(m - a1 m, a2 m) / C(m, a2 m)`. Returns the exact
/// probability and `log2(PF)/m`.
pub fn filtering_probability(a1: f64, a2: f64, m: usize) -> Result<(f64, f64)> {
    if m == 0 || !(0.0..=1.0).contains(&a1) || !(0.0..=1.0).contains(&a2) || a1 + a2 > 1.0 + 1e-12 {
        return invalid("need m >= 1 and a1, a2 >= 0 with a1 + a2 <= 1");
    }
    let w1 = a1 * m as f64;
    let w2 = a2 * m as f64;
    if (w1 - w1.round()).abs() > 1e-9 || (w2 - w2.round()).abs() > 1e-9 {
        return invalid("a1 m and a2 m must be integers");
    }
    let lg = log2_binomial(m as f64 - w1.round(), w2.round()) - log2_binomial(m as f64, w2.round());
    Ok((lg.exp2(), lg / m as f64))
}

/// A modular condition `<e, k> = residue (mod modulus)` on integer sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub modulus: u64,
    pub residue: u64,
}

impl Condition {
    pub const NONE: Condition = Condition {
        modulus: 1,
        residue: 0,
    };

    pub fn new(modulus: u64, residue: u64) -> Result<Self> {
        if modulus == 0 || residue >= modulus {
            return invalid("condition needs 0 <= residue < modulus");
        }
        Ok(Condition { modulus, residue })
    }

    pub fn holds(&self, sum: u128) -> bool {
        (sum % self.modulus as u128) as u64 == self.residue
    }
}

/// A list of vectors of one weight, each satisfying the list's condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedList {
    /// Coordinates the vectors live on, as a mask.
    pub support: u64,
    pub weight: u32,
    pub condition: Condition,
    pub elements: Vec<u64>,
}

impl WeightedList {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Checks weights, support and condition of every element.
    pub fn is_valid(&self, k: &[u64]) -> bool {
        self.elements.iter().all(|&e| {
            e & !self.support == 0
                && e.count_ones() == self.weight
                && self.condition.holds(dot(e, k))
        })
    }
}

/// `count` vectors drawn uniformly among the weight-`w` vectors on `support`.
pub fn sample_distribution<R: Rng + ?Sized>(
    support: u64,
    w: u32,
    count: usize,
    rng: &mut R,
) -> Result<WeightedList> {
    let coords: Vec<u32> = (0..64).filter(|&i| support >> i & 1 == 1).collect();
    if w as usize > coords.len() {
        return invalid("weight exceeds the support size");
    }
    let elements = (0..count)
        .map(|_| {
            index::sample(rng, coords.len(), w as usize)
                .iter()
                .fold(0u64, |acc, j| acc | 1 << coords[j])
        })
        .collect();
    Ok(WeightedList {
        support,
        weight: w,
        condition: Condition::NONE,
        elements,
    })
}

/// Joins two lists on `c_out` and keeps the disjoint pairs of total weight
/// `target_weight`. The second list is sorted on its residue mod `c_out.modulus`.
pub fn merge_filter(
    l1: &WeightedList,
    l2: &WeightedList,
    k: &[u64],
    c_out: Condition,
    target_weight: u32,
) -> WeightedList {
    let md = c_out.modulus as u128;
    let mut keyed: Vec<(u64, u64)> = l2
        .elements
        .iter()
        .map(|&e| ((dot(e, k) % md) as u64, e))
        .collect();
    keyed.sort_unstable();
    let mut elements = Vec::new();
    for &e1 in &l1.elements {
        let r1 = (dot(e1, k) % md) as u64;
        let want = submod(c_out.residue, r1, c_out.modulus);
        let a = keyed.partition_point(|&(r, _)| r < want);
        for &(r, e2) in &keyed[a..] {
            if r != want {
                break;
            }
            if e1 & e2 == 0 && (e1 | e2).count_ones() == target_weight {
                elements.push(e1 | e2);
            }
        }
    }
    WeightedList {
        support: l1.support | l2.support,
        weight: target_weight,
        condition: c_out,
        elements,
    }
}

/// All weight-`w` vectors on `support` satisfying `cond`, built by joining the two
/// halves of the support over every split of the weight.
fn build_complete(k: &[u64], support: u64, w: u32, cond: Condition) -> WeightedList {
    let coords: Vec<u32> = (0..64).filter(|&i| support >> i & 1 == 1).collect();
    let h = coords.len() / 2;
    let left_support = coords[..h].iter().fold(0u64, |a, &i| a | 1 << i);
    let right_support = support & !left_support;
    let mut elements = Vec::new();
    for wl in 0..=w.min(h as u32) {
        let wr = w - wl;
        if wr as usize > coords.len() - h {
            continue;
        }
        let left = WeightedList {
            support: left_support,
            weight: wl,
            condition: Condition::NONE,
            elements: all_of_weight(&coords[..h], wl),
        };
        let right = WeightedList {
            support: right_support,
            weight: wr,
            condition: Condition::NONE,
            elements: all_of_weight(&coords[h..], wr),
        };
        elements.extend(merge_filter(&left, &right, k, cond, w).elements);
    }
    WeightedList {
        support,
        weight: w,
        condition: cond,
        elements,
    }
}

fn all_of_weight(coords: &[u32], w: u32) -> Vec<u64> {
    let mut out = Vec::new();
    fn rec(coords: &[u32], w: u32, acc: u64, out: &mut Vec<u64>) {
        if w == 0 {
            out.push(acc);
            return;
        }
        if coords.len() < w as usize {
            return;
        }
        rec(&coords[1..], w - 1, acc | 1 << coords[0], out);
        rec(&coords[1..], w, acc, out);
    }
    rec(coords, w, 0, &mut out);
    out
}

/// Number of representations of a weight-`w` vector and the intermediate modulus
/// used by the two-level tree.
fn representation_shape(w: u32, n: u64) -> (f64, u64) {
    let reps = log2_binomial(w as f64, (w / 2) as f64).exp2();
    let bits = (reps.log2().floor() as i32 - 1).max(0) as u32;
    (reps, (1u64 << bits).min(n).max(1))
}

/// One pass of the representation technique for weight-`w` solutions: `b = e1 + e2`
/// with `|e1| = floor(w/2)`, `|e2| = ceil(w/2)`, `<e1,k> = R (mod M)` for a random `R`.
/// The returned solutions are exact; a given solution is found with probability
/// about `1 - exp(-reps/M)`.
pub fn solve_weighted<R: Rng + ?Sized>(inst: &SubsetSumInstance, w: u32, rng: &mut R) -> Vec<u64> {
    let m = inst.m();
    let n = inst.modulus;
    let support = low_mask(m);
    let (_, md) = representation_shape(w, n);
    let r = rng.random_range(0..md);
    let v_mod = (inst.v as u128 % md as u128) as u64;
    let c1 = Condition { modulus: md, residue: r };
    let c2 = Condition {
        modulus: md,
        residue: submod(v_mod, r, md),
    };
    let e1 = build_complete(&inst.k, support, w / 2, c1);
    let e2 = build_complete(&inst.k, support, w - w / 2, c2);
    let root = Condition {
        modulus: n,
        residue: inst.v,
    };
    let mut sols = merge_filter(&e1, &e2, &inst.k, root, w).elements;
    sols.sort_unstable_by(|&a, &b| lex_cmp(a, b));
    sols.dedup();
    sols
}

/// `p_m = 2^-m C(m, ceil(m/2))`.
pub fn weight_guess_probability(m: usize) -> f64 {
    (log2_binomial(m as f64, m.div_ceil(2) as f64) - m as f64).exp2()
}

/// Re-randomizes by complementing the coordinates in `t`: `k'_i = -k_i` and
/// `v' = v - sum_t k_i`, so that `b = b' xor t`.
fn flip_instance(inst: &SubsetSumInstance, t: u64) -> SubsetSumInstance {
    let n = inst.modulus;
    let k = inst
        .k
        .iter()
        .enumerate()
        .map(|(i, &ki)| if t >> i & 1 == 1 { (n - ki) % n } else { ki })
        .collect();
    let shift = (dot(t, &inst.k) % n as u128) as u64;
    SubsetSumInstance {
        modulus: n,
        k,
        v: submod(inst.v, shift, n),
    }
}

/// Default number of outer iterations for a miss rate `eps_miss`.
pub fn outer_iterations(eps_miss: f64) -> u32 {
    (1.0 / eps_miss).log2().ceil() as u32 + 2
}

/// Classical representation-technique solver. Each outer iteration runs enough
/// re-randomized weight-`ceil(m/2)` passes to find any fixed solution with
/// probability at least 1/2.
pub fn solve_classical_rep<R: Rng + ?Sized>(
    inst: &SubsetSumInstance,
    outer: u32,
    rng: &mut R,
) -> Vec<u64> {
    let m = inst.m();
    let w = m.div_ceil(2) as u32;
    let (reps, md) = representation_shape(w, inst.modulus);
    let q = 1.0 - (-reps / md as f64).exp();
    let p = weight_guess_probability(m);
    let inner = (std::f64::consts::LN_2 / (p * q)).ceil().max(1.0) as u32;
    let mut found = Vec::new();
    for _ in 0..outer * inner {
        let t = rng.random_range(0..u64::MAX) & low_mask(m);
        let flipped = flip_instance(inst, t);
        for b in solve_weighted(&flipped, w, rng) {
            let sol = b ^ t;
            debug_assert!(inst.is_solution(sol));
            found.push(sol);
        }
    }
    found.sort_unstable_by(|&a, &b| lex_cmp(a, b));
    found.dedup();
    found
}

/// A solver returning every solution it finds for an instance.
pub trait ClassicalSolver {
    fn solve_all(&self, inst: &SubsetSumInstance, rng: &mut dyn rand::RngCore) -> Result<Vec<u64>>;
}

/// Exhaustive meet-in-the-middle enumeration.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForce;

impl ClassicalSolver for BruteForce {
    fn solve_all(&self, inst: &SubsetSumInstance, _rng: &mut dyn rand::RngCore) -> Result<Vec<u64>> {
        brute_force_all(inst)
    }
}

/// [`solve_classical_rep`] with a fixed number of outer iterations.
#[derive(Debug, Clone, Copy)]
pub struct Representation {
    pub outer: u32,
}

impl Default for Representation {
    fn default() -> Self {
        Representation {
            outer: outer_iterations(1.0 / 16.0),
        }
    }
}

impl ClassicalSolver for Representation {
    fn solve_all(&self, inst: &SubsetSumInstance, rng: &mut dyn rand::RngCore) -> Result<Vec<u64>> {
        Ok(solve_classical_rep(inst, self.outer, rng))
    }
}

/// One achievable sum of the simulated quantum solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QssEntry {
    pub v: u64,
    /// Number of `b` with `<b,k> = v (mod N)`.
    pub count: u64,
    /// The solution returned for `v`, or `None` if the solver fails on `v`.
    pub solution: Option<u64>,
}

/// Deterministic stand-in for a quantum subset-sum solver: each achievable sum maps
/// to one of its solutions chosen uniformly, except for a `floor(eps A)` subset of
/// sums on which it fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QssModel {
    pub modulus: u64,
    pub k: Vec<u64>,
    pub epsilon: f64,
    pub seed: u64,
    entries: Vec<QssEntry>,
}

pub fn build_qss_model(k: &[u64], modulus: u64, epsilon: f64, seed: u64) -> Result<QssModel> {
    let m = k.len();
    if m == 0 || m > QSS_MAX_M {
        return invalid(format!("quantum solver model needs 1 <= m <= {QSS_MAX_M}, got {m}"));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return invalid("epsilon must lie in [0, 1)");
    }
    if k.iter().any(|&x| x >= modulus) {
        return invalid("weights must be reduced mod N");
    }
    let mut rng = rng_from_seed(seed);
    // Reservoir sampling keeps a uniform solution per sum in one pass.
    let mut seen: HashMap<u64, (u64, u64)> = HashMap::new();
    let mut sum = 0u64;
    for g in 0..1u64 << m {
        if g > 0 {
            // Gray code walk: one coordinate changes per step.
            let i = g.trailing_zeros() as usize;
            let gray = g ^ (g >> 1);
            sum = if gray >> i & 1 == 1 {
                ((sum as u128 + k[i] as u128) % modulus as u128) as u64
            } else {
                submod(sum, k[i], modulus)
            };
        }
        let b = g ^ (g >> 1);
        let e = seen.entry(sum).or_insert((0, b));
        e.0 += 1;
        if e.0 > 1 && rng.random_range(0..e.0) == 0 {
            e.1 = b;
        }
    }
    let mut entries: Vec<QssEntry> = seen
        .into_iter()
        .map(|(v, (count, b))| QssEntry {
            v,
            count,
            solution: Some(b),
        })
        .collect();
    entries.sort_unstable_by_key(|e| e.v);
    let a = entries.len();
    let fails = (epsilon * a as f64).floor() as usize;
    for i in index::sample(&mut rng, a, fails) {
        entries[i].solution = None;
    }
    Ok(QssModel {
        modulus,
        k: k.to_vec(),
        epsilon,
        seed,
        entries,
    })
}

impl QssModel {
    pub fn m(&self) -> usize {
        self.k.len()
    }

    pub fn entries(&self) -> &[QssEntry] {
        &self.entries
    }

    /// `S^Q(v)`.
    pub fn apply(&self, v: u64) -> Option<u64> {
        self.entries
            .binary_search_by_key(&v, |e| e.v)
            .ok()
            .and_then(|i| self.entries[i].solution)
    }

    /// Number of achievable sums.
    pub fn achievable(&self) -> u64 {
        self.entries.len() as u64
    }

    /// `G(k) = #{b : S^Q(<b,k>) = b}`, one per sum the solver handles.
    pub fn g(&self) -> u64 {
        self.entries.iter().filter(|e| e.solution.is_some()).count() as u64
    }

    /// The set `G` itself.
    pub fn g_set(&self) -> Vec<u64> {
        self.entries.iter().filter_map(|e| e.solution).collect()
    }

    /// `Z(k) = sum_b #{b' : <b',k> = <b,k>}`.
    pub fn z(&self) -> u64 {
        self.entries.iter().map(|e| e.count * e.count).sum()
    }

    /// Number of sums with exactly `i` solutions, for `i >= 1` (index 0 unused).
    pub fn collision_profile(&self) -> Vec<u64> {
        let max = self.entries.iter().map(|e| e.count).max().unwrap_or(0) as usize;
        let mut c = vec![0u64; max + 1];
        for e in &self.entries {
            c[e.count as usize] += 1;
        }
        c
    }
}

pub fn qss_apply(model: &QssModel, v: u64) -> Option<u64> {
    model.apply(v)
}

/// Result of [`gaussian_reduce`]: the first `m - t` coordinates are fixed by the low
/// bits of `v`, and the remaining `t` solve a smaller instance modulo `2^(n-m+t)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reduction {
    pub eliminated: usize,
    pub head: u64,
    pub reduced: SubsetSumInstance,
}

impl Reduction {
    /// Full solution from a solution of the reduced instance.
    pub fn extend(&self, tail: u64) -> u64 {
        self.head | tail << self.eliminated
    }

    /// Reduced weights for a configuration, independent of the target.
    pub fn reduced_weights(k: &[u64], t: usize, modulus: u64) -> Vec<u64> {
        let e = k.len() - t;
        let red = modulus >> e;
        k[e..].iter().map(|&x| (x >> e) % red).collect()
    }
}

/// Solves the triangular part of a configuration by elimination. `modulus` must be a
/// power of two `2^n` and `k` must satisfy the configuration shape for `t`.
pub fn gaussian_reduce(k: &[u64], t: usize, v: u64, modulus: u64) -> Result<Reduction> {
    let m = k.len();
    if !modulus.is_power_of_two() {
        return invalid("configuration reduction needs a power-of-two modulus");
    }
    if !crate::sieve::is_configuration(k, t) {
        return invalid("labels do not form a triangular configuration");
    }
    let e = m - t;
    if 1u64 << e > modulus || k.iter().chain(std::iter::once(&v)).any(|&x| x >= modulus) {
        return invalid("configuration does not fit the modulus");
    }
    let mut rest = v;
    let mut head = 0u64;
    for (row, &kr) in k.iter().enumerate().take(e) {
        if rest >> row & 1 == 1 {
            head |= 1 << row;
            rest = submod(rest, kr, modulus);
        }
    }
    debug_assert_eq!(rest % (1u64 << e), 0);
    let red_mod = modulus >> e;
    let reduced = SubsetSumInstance {
        modulus: red_mod,
        k: Reduction::reduced_weights(k, t, modulus),
        v: (rest >> e) % red_mod,
    };
    Ok(Reduction {
        eliminated: e,
        head,
        reduced,
    })
}
