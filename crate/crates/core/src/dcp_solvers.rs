//! End-to-end DCP algorithms on simulated phase vectors: Ettinger-Hoyer, Regev's
//! least-significant-bit routine with a classical subset-sum solver, the quantum
//! subset-sum algorithm and the interpolation algorithm, plus the exact final-state
//! distribution used to check their probability lemmas.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dcp_core::{hadamard_zero_probability, rng_from_seed, y_zero_probability, DcpInstance, PhaseVector};
use crate::error::{invalid, Error, Result};
use crate::sieve::build_config_matrix;
use crate::subset_sum::{
    brute_force_all, build_qss_model, dot, ClassicalSolver, QssModel, Reduction, SubsetSumInstance,
};

/// Bound on `|G| N` for the exact final distribution.
pub const EXACT_DISTRIBUTION_BOUND: u64 = 1 << 28;

/// One Step-4 attempt of the quantum subset-sum algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub g: u64,
    pub m: u32,
    pub step4_ok: bool,
    /// Whether the measured `j` was the secret (false when Step 4 failed).
    pub hit: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub recovered_s: Option<u64>,
    pub queries_used: u64,
    pub restarts: u64,
    pub step4_successes: u64,
    pub step4_attempts: u64,
    pub counters: BTreeMap<String, u64>,
    pub attempts: Vec<AttemptRecord>,
}

impl RunReport {
    fn bump(&mut self, key: &str, by: u64) {
        *self.counters.entry(key.to_string()).or_insert(0) += by;
    }
}

/// Maximum-likelihood secret from `samples` measured phase vectors. Even-indexed samples
/// are measured in the Hadamard basis and odd-indexed ones in the `|0> +- i|1>` basis,
/// since Hadamard statistics alone cannot tell `s` from `-s`. Ties go to the smaller
/// candidate.
pub fn ettinger_hoyer<R: Rng + ?Sized>(inst: &mut DcpInstance, samples: usize, rng: &mut R) -> Result<u64> {
    if samples == 0 {
        return invalid("Ettinger-Hoyer needs at least one sample");
    }
    let n = inst.modulus();
    let mut obs = Vec::with_capacity(samples);
    for i in 0..samples {
        let pv = inst.sample_phase_vector();
        let bit = if i % 2 == 0 {
            inst.measure_hadamard(&pv, rng)?
        } else {
            inst.measure_y(&pv, rng)?
        };
        obs.push((pv.labels()[0], i % 2 == 1, bit));
    }
    let mut best = (f64::NEG_INFINITY, 0u64);
    for cand in 0..n {
        let score: f64 = obs
            .iter()
            .map(|&(k, y, bit)| {
                let theta = ((k as u128 * cand as u128) % n as u128) as u64;
                let p0 = if y {
                    y_zero_probability(theta, n)
                } else {
                    hadamard_zero_probability(theta, n)
                };
                let p = if bit == 0 { p0 } else { 1.0 - p0 };
                p.max(1e-300).ln()
            })
            .sum();
        if score > best.0 {
            best = (score, cand);
        }
    }
    Ok(best.1)
}

/// One attempt of Regev's routine on the given qubits: measure `z = <b,k> mod N/2`,
/// project onto a pair of solutions whose sums differ by `N/2`, and measure the
/// resulting `|psi_(N/2)>` after a Hadamard. `None` means the attempt must restart.
pub fn regev_lsb_attempt<R: Rng + ?Sized>(
    inst: &DcpInstance,
    qubits: &[PhaseVector],
    solver: &dyn ClassicalSolver,
    rng: &mut R,
) -> Result<Option<u8>> {
    if !inst.is_power_of_two() {
        return invalid("Regev's lsb routine needs a power-of-two group order");
    }
    let n = inst.modulus();
    let half = n / 2;
    let m = qubits.len();
    if m == 0 || m > 28 {
        return invalid("need between 1 and 28 qubits");
    }
    if qubits.iter().any(|q| !q.is_single() || q.offsets()[0] != 0) {
        return invalid("expected fresh single-label phase vectors");
    }
    let k: Vec<u64> = qubits.iter().map(|q| q.labels()[0]).collect();
    let star = rng.random_range(0..1u64 << m);
    let z = (dot(star, &k) % half as u128) as u64;
    let kz: Vec<u64> = k.iter().map(|&x| x % half).collect();
    let ss = SubsetSumInstance::new(half, kz, z)?;
    // The post-measurement state is the uniform superposition over every solution.
    let all = brute_force_all(&ss)?;
    let mut rng_dyn = rng_from_seed(rng.random());
    let found = solver.solve_all(&ss, &mut rng_dyn)?;
    let full = |b: u64| (dot(b, &k) % n as u128) as u64;
    let (low, high): (Vec<u64>, Vec<u64>) = found.iter().partition(|&&b| full(b) == z);
    let pairs: Vec<(u64, u64)> = low.into_iter().zip(high).collect();
    let u = all[rng.random_range(0..all.len())];
    let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a == u || b == u) else {
        return Ok(None);
    };
    let pair = PhaseVector::new(vec![full(a), full(b)], vec![0, 0], n)?;
    let qubit = pair.to_qubit()?;
    debug_assert_eq!(qubit.labels()[0], half);
    Ok(Some(inst.measure_hadamard(&qubit, rng)?))
}

/// Regev's routine with a classical solver: draws `n` phase vectors per attempt and
/// restarts until the projection succeeds or `budget` attempts are used.
pub fn regev_lsb<R: Rng + ?Sized>(
    inst: &mut DcpInstance,
    solver: &dyn ClassicalSolver,
    budget: u64,
    rng: &mut R,
) -> Result<(u8, RunReport)> {
    let start = inst.queries();
    let mut report = RunReport::default();
    for attempt in 0..budget.max(1) {
        let qubits: Vec<PhaseVector> = (0..inst.bits()).map(|_| inst.sample_phase_vector()).collect();
        report.step4_attempts += 1;
        if let Some(bit) = regev_lsb_attempt(inst, &qubits, solver, rng)? {
            report.step4_successes += 1;
            report.restarts = attempt;
            report.queries_used = inst.queries() - start;
            report.recovered_s = None;
            report.bump("lsb", bit as u64);
            return Ok((bit, report));
        }
    }
    Err(Error::BudgetExhausted(budget))
}

/// How the final inverse-QFT measurement is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalMode {
    /// Full distribution when `|G| N` is within [`EXACT_DISTRIBUTION_BOUND`], otherwise
    /// rejection sampling.
    Exact,
    /// Rejection sampling from a uniform proposal using `Pr[j] <= G/N`.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QssOptions {
    pub epsilon: f64,
    pub final_mode: FinalMode,
    /// Restart budget; defaults to `64 N^2 / (M (N - M + 1))` attempts.
    pub budget: Option<u64>,
}

impl Default for QssOptions {
    fn default() -> Self {
        QssOptions {
            epsilon: 0.0,
            final_mode: FinalMode::Exact,
            budget: None,
        }
    }
}

impl QssOptions {
    /// The ideal algorithm: the solver never fails.
    pub fn ideal() -> Self {
        QssOptions::default()
    }
}

fn default_budget(n: u64, m: u32) -> u64 {
    let big_m = (1u64 << m) as f64;
    let nf = n as f64;
    let b = 64.0 * nf * nf / (big_m * (nf - big_m + 1.0).max(1.0));
    (b.ceil() as u64).max(64)
}

/// `Pr[j]` for the state `(1/sqrt(N G)) sum_j sum_(b in G) w^((s-j)<b,k>) |j>`.
pub fn exact_output_distribution(k: &[u64], g_set: &[u64], s: u64, n: u64) -> Result<Vec<f64>> {
    if g_set.is_empty() {
        return invalid("G must be nonempty");
    }
    if (g_set.len() as u64).saturating_mul(n) > EXACT_DISTRIBUTION_BOUND {
        return invalid("|G| N exceeds the exact-distribution bound");
    }
    let sums: Vec<u64> = g_set.iter().map(|&b| (dot(b, k) % n as u128) as u64).collect();
    Ok(distribution_from_sums(&sums, s, n))
}

fn distribution_from_sums(sums: &[u64], s: u64, n: u64) -> Vec<f64> {
    let len = n as usize;
    let mut buf = vec![Complex::new(0.0f64, 0.0); len];
    for &x in sums {
        buf[x as usize].re += 1.0;
    }
    // Unnormalized inverse DFT: buf[d] = sum_x c_x w^(d x).
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / (n as f64 * sums.len() as f64);
    (0..n)
        .map(|j| {
            let d = ((s + n - j) % n) as usize;
            buf[d].norm_sqr() * scale
        })
        .collect()
}

/// Amplitude-squared ratio `|sum_G w^(d x)|^2 / G^2` for one `d`.
fn acceptance_ratio(sums: &[u64], d: u64, n: u64) -> f64 {
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for &x in sums {
        let e = ((d as u128 * x as u128) % n as u128) as f64;
        let a = 2.0 * std::f64::consts::PI * e / n as f64;
        re += a.cos();
        im += a.sin();
    }
    (re * re + im * im) / (sums.len() as f64).powi(2)
}

fn sample_final<R: Rng + ?Sized>(sums: &[u64], s: u64, n: u64, mode: FinalMode, rng: &mut R) -> u64 {
    let exact_ok = (sums.len() as u64).saturating_mul(n) <= EXACT_DISTRIBUTION_BOUND;
    if mode == FinalMode::Exact && exact_ok {
        let dist = distribution_from_sums(sums, s, n);
        let w = WeightedIndex::new(&dist).expect("distribution has positive mass");
        return w.sample(rng) as u64;
    }
    loop {
        let j = rng.random_range(0..n);
        let d = (s + n - j) % n;
        if rng.random::<f64>() < acceptance_ratio(sums, d, n) {
            return j;
        }
    }
}

/// Runs Steps 4 and 5 once for the solver on the sums `sums` of the set `G`
/// (`|G|` = `sums.len()`, out of `2^m` vectors). Returns the record and the measured `j`.
fn qss_step<R: Rng + ?Sized>(
    inst: &DcpInstance,
    sums: &[u64],
    m: u32,
    mode: FinalMode,
    rng: &mut R,
) -> (AttemptRecord, Option<u64>) {
    let g = sums.len() as u64;
    let accept = g > 0 && rng.random::<f64>() < g as f64 / (1u64 << m) as f64;
    if !accept {
        return (
            AttemptRecord {
                g,
                m,
                step4_ok: false,
                hit: false,
            },
            None,
        );
    }
    let j = sample_final(sums, inst.secret(), inst.modulus(), mode, rng);
    (
        AttemptRecord {
            g,
            m,
            step4_ok: true,
            hit: inst.is_secret(j),
        },
        Some(j),
    )
}

fn model_sums(model: &QssModel) -> Vec<u64> {
    model
        .entries()
        .iter()
        .filter(|e| e.solution.is_some())
        .map(|e| e.v)
        .collect()
}

/// One attempt of the quantum subset-sum algorithm on a prepared model.
pub fn qss_attempt<R: Rng + ?Sized>(
    inst: &DcpInstance,
    model: &QssModel,
    mode: FinalMode,
    rng: &mut R,
) -> Result<(AttemptRecord, Option<u64>)> {
    if model.modulus != inst.modulus() {
        return invalid("model modulus differs from the instance");
    }
    Ok(qss_step(inst, &model_sums(model), model.m() as u32, mode, rng))
}

/// The quantum subset-sum algorithm: draw `m` phase vectors, build a solver for their
/// labels, and restart until the measured `j` is the secret.
pub fn qss_dcp_solve<R: Rng + ?Sized>(
    inst: &mut DcpInstance,
    m: u32,
    opts: QssOptions,
    rng: &mut R,
) -> Result<RunReport> {
    if m == 0 || m >= inst.bits() {
        return invalid(format!("need 1 <= m < n, got m={m}, n={}", inst.bits()));
    }
    let n = inst.modulus();
    let budget = opts.budget.unwrap_or_else(|| default_budget(n, m));
    let start = inst.queries();
    let mut report = RunReport::default();
    for attempt in 0..budget {
        let k: Vec<u64> = (0..m).map(|_| inst.sample_phase_vector().labels()[0]).collect();
        let model = build_qss_model(&k, n, opts.epsilon, rng.random())?;
        let (rec, j) = qss_attempt(inst, &model, opts.final_mode, rng)?;
        report.step4_attempts += 1;
        report.step4_successes += rec.step4_ok as u64;
        report.attempts.push(rec);
        if rec.hit {
            report.recovered_s = j;
            report.restarts = attempt;
            report.queries_used = inst.queries() - start;
            return Ok(report);
        }
    }
    Err(Error::BudgetExhausted(budget))
}

/// Exact `Z(k) = sum_b #{b' : <b',k> = <b,k> mod N}` by bucketing all sums.
pub fn z_value(k: &[u64], n: u64) -> u64 {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    let mut sums = vec![0u64];
    for &ki in k {
        let len = sums.len();
        for j in 0..len {
            sums.push(((sums[j] as u128 + ki as u128) % n as u128) as u64);
        }
    }
    if n <= 1 << 24 {
        let mut c = vec![0u32; n as usize];
        for &x in &sums {
            c[x as usize] += 1;
        }
        return c.iter().map(|&x| x as u64 * x as u64).sum();
    }
    for x in sums {
        *counts.entry(x).or_insert(0) += 1;
    }
    counts.values().map(|&c| c * c).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCheck {
    pub trials: u64,
    pub empirical: f64,
    pub analytic: f64,
    /// Standard error of the empirical mean.
    pub sigma: f64,
}

impl MeanCheck {
    pub fn within(&self, sigmas: f64) -> bool {
        (self.empirical - self.analytic).abs() <= sigmas * self.sigma.max(1e-12)
    }
}

fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / t;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
    (mean, (var / t).sqrt())
}

/// Empirical mean of `Z(k)` over uniform `k` against `M (1 + (M - 1)/N)`, `N = 2^n`.
pub fn verify_lemma_ez<R: Rng + ?Sized>(n: u32, m: u32, trials: u64, rng: &mut R) -> Result<MeanCheck> {
    if m > 20 || n > 40 || m == 0 || trials == 0 {
        return invalid("need 1 <= m <= 20, n <= 40 and trials >= 1");
    }
    let big_n = 1u64 << n;
    let big_m = (1u64 << m) as f64;
    let zs: Vec<f64> = (0..trials)
        .map(|_| {
            let k: Vec<u64> = (0..m).map(|_| rng.random_range(0..big_n)).collect();
            z_value(&k, big_n) as f64
        })
        .collect();
    let (mean, sigma) = mean_and_error(&zs);
    Ok(MeanCheck {
        trials,
        empirical: mean,
        analytic: big_m * (1.0 + (big_m - 1.0) / big_n as f64),
        sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GBoundCheck {
    pub trials: u64,
    pub violations: u64,
    pub mean_g: f64,
    /// `(1 - eps) M (1 - (M - 1)/N)`.
    pub expected_lower_bound: f64,
    pub sigma: f64,
}

/// Checks `G(k) >= (1 - eps)(2M - Z(k))` on every sampled instance and compares the
/// mean of `G` to its lower bound.
pub fn verify_lemma_g_bound<R: Rng + ?Sized>(
    n: u32,
    m: u32,
    epsilon: f64,
    trials: u64,
    rng: &mut R,
) -> Result<GBoundCheck> {
    if m > 20 || m == 0 || n > 40 || trials == 0 {
        return invalid("need 1 <= m <= 20, n <= 40 and trials >= 1");
    }
    let big_n = 1u64 << n;
    let big_m = (1u64 << m) as f64;
    let mut violations = 0;
    let mut gs = Vec::with_capacity(trials as usize);
    for _ in 0..trials {
        let k: Vec<u64> = (0..m).map(|_| rng.random_range(0..big_n)).collect();
        let model = build_qss_model(&k, big_n, epsilon, rng.random())?;
        let g = model.g() as f64;
        let z = model.z() as f64;
        if g < (1.0 - epsilon) * (2.0 * big_m - z) - 1e-9 {
            violations += 1;
        }
        gs.push(g);
    }
    let (mean, sigma) = mean_and_error(&gs);
    Ok(GBoundCheck {
        trials,
        violations,
        mean_g: mean,
        expected_lower_bound: (1.0 - epsilon) * big_m * (1.0 - (big_m - 1.0) / big_n as f64),
        sigma,
    })
}

/// The interpolation algorithm with `m = n - 1`: build the triangular configuration,
/// solve the `t` hard coordinates with the simulated quantum solver and the rest by
/// elimination, and restart until `j` is the secret.
pub fn interpolation_solve<R: Rng + ?Sized>(
    inst: &mut DcpInstance,
    t: u32,
    opts: QssOptions,
    rng: &mut R,
) -> Result<RunReport> {
    let bits = inst.bits();
    if !inst.is_power_of_two() {
        return invalid("the interpolation algorithm needs a power-of-two group order");
    }
    let m = bits - 1;
    if t < 1 || t > m {
        return invalid(format!("need 1 <= t <= n - 1, got t={t}"));
    }
    let n = inst.modulus();
    let e = m - t;
    let budget = opts.budget.unwrap_or_else(|| default_budget(n, m));
    let start = inst.queries();
    let mut report = RunReport::default();
    for attempt in 0..budget {
        let before = inst.queries();
        let cm = build_config_matrix(inst, m as usize, t as usize, rng)?;
        report.bump("config_queries", inst.queries() - before);
        if cm.vectors.iter().any(|pv| pv.offsets()[0] != 0) {
            return Err(Error::Precondition("configuration qubits carry phase offsets".into()));
        }
        let k = cm.labels();
        let red_mod = n >> e;
        let k_red = Reduction::reduced_weights(&k, t as usize, n);
        let model = build_qss_model(&k_red, red_mod, opts.epsilon, rng.random())?;
        // G = {0,1}^e x G_red: every head is solved exactly by elimination.
        let tails = model.g_set();
        let mut sums = Vec::with_capacity(tails.len() << e);
        for head in 0..1u64 << e {
            for &tail in &tails {
                sums.push((dot(head | tail << e, &k) % n as u128) as u64);
            }
        }
        let (rec, j) = qss_step(inst, &sums, m, opts.final_mode, rng);
        report.step4_attempts += 1;
        report.step4_successes += rec.step4_ok as u64;
        report.attempts.push(rec);
        if rec.hit {
            report.recovered_s = j;
            report.restarts = attempt;
            report.queries_used = inst.queries() - start;
            return Ok(report);
        }
    }
    Err(Error::BudgetExhausted(budget))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element_gives_uniform() {
        let d = exact_output_distribution(&[3, 5], &[0b10], 6, 16).unwrap();
        for p in d {
            assert!((p - 1.0 / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_exact_case() {
        // k = (1, 2), N = 8: four distinct sums, Pr[s] = 4/8.
        let d = exact_output_distribution(&[1, 2], &[0, 1, 2, 3], 5, 8).unwrap();
        assert!((d[5] - 0.5).abs() < 1e-12);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn z_of_single_vector_space() {
        assert_eq!(z_value(&[], 16), 1);
        assert_eq!(z_value(&[0, 0], 16), 16);
    }

    #[test]
    fn zero_samples_rejected() {
        let mut inst = DcpInstance::new(16, Some(3), 0).unwrap();
        assert!(ettinger_hoyer(&mut inst, 0, &mut rng_from_seed(0)).is_err());
    }
}
