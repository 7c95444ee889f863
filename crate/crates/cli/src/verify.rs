use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use dihedral::cost_models::sum_lemma_check;
use dihedral::dcp_core::{rng_from_seed, DcpInstance};
use dihedral::dcp_solvers::{qss_dcp_solve, verify_lemma_ez, verify_lemma_g_bound, QssOptions};
use dihedral::subset_sum::filtering_probability;

use crate::output::{emit_records, sig6, sig6_opt, OutputArgs};
use crate::{CliError, EXIT_FAIL, EXIT_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Lemma {
    /// Mean of Z(k) against M (1 + (M - 1)/N).
    #[value(name = "EZ", alias = "ez")]
    Ez,
    /// G(k) >= (1 - eps)(2M - Z(k)) on every sampled instance.
    #[value(name = "Gbound", alias = "gbound")]
    Gbound,
    /// Hit rate of accepted attempts against G(k)/N, and the mean restart count.
    SuccessProb,
    /// log2 of sum_{i<=n} 2^(alpha sqrt i) against its closed-form bound.
    SumLemma,
    /// Filtering probability against exact disjoint-support counts.
    PfExact,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub lemma: Lemma,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Defaults: 10000 (EZ), 1000 (Gbound, success-prob).
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ratio for sum-lemma.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub check: String,
    pub n: Option<u64>,
    pub m: Option<u32>,
    pub epsilon: Option<f64>,
    pub trials: Option<u64>,
    pub analytic: f64,
    pub empirical: f64,
    pub sigma: Option<f64>,
    pub violations: Option<u64>,
    pub pass: bool,
}

fn need<T>(x: Option<T>, flag: &str) -> Result<T, CliError> {
    x.ok_or_else(|| CliError::Config(format!("missing {flag}")))
}

fn small_n(a: &VerifyArgs) -> Result<u32, CliError> {
    let n = need(a.n, "--n")?;
    if !(2..=40).contains(&n) {
        return Err(CliError::Config("--n must be between 2 and 40".into()));
    }
    Ok(n as u32)
}

fn record(a: &VerifyArgs, check: &str, analytic: f64, empirical: f64, sigma: Option<f64>, pass: bool) -> VerifyRecord {
    VerifyRecord {
        check: check.into(),
        n: a.n,
        m: a.m,
        epsilon: None,
        trials: None,
        analytic: sig6(analytic),
        empirical: sig6(empirical),
        sigma: sig6_opt(sigma),
        violations: None,
        pass,
    }
}

fn success_prob(a: &VerifyArgs) -> Result<Vec<VerifyRecord>, CliError> {
    let n = small_n(a)?;
    let m = a.m.unwrap_or(n - 1);
    let trials = a.trials.unwrap_or(1000);
    let big_n = (1u64 << n) as f64;
    let opts = QssOptions {
        epsilon: a.epsilon,
        ..QssOptions::default()
    };
    let (mut hits, mut expect, mut var, mut attempts, mut restarts) = (0u64, 0.0, 0.0, 0u64, 0u64);
    for i in 0..trials {
        let seed = a.seed.wrapping_add(i);
        let mut inst = DcpInstance::new(1u64 << n, None, seed)?;
        let mut rng = rng_from_seed(seed ^ 0x5eed_0f_d1ed_a1);
        let report = qss_dcp_solve(&mut inst, m, opts, &mut rng)?;
        restarts += report.restarts;
        // G(k)/N is the hit probability once Step 4 has succeeded.
        for rec in report.attempts.iter().filter(|r| r.step4_ok) {
            let p = rec.g as f64 / big_n;
            expect += p;
            var += p * (1.0 - p);
            hits += rec.hit as u64;
            attempts += 1;
        }
    }
    let sigma = var.sqrt();
    let mut hit = record(a, "success-prob", expect, hits as f64, Some(sigma), (hits as f64 - expect).abs() <= 3.0 * sigma.max(1e-12));
    hit.m = Some(m);
    hit.epsilon = Some(a.epsilon);
    hit.trials = Some(attempts);
    let bound = 8.0 / (1.0 - a.epsilon).powi(2);
    let mean = restarts as f64 / trials as f64;
    let mut rs = record(a, "restarts", bound, mean, None, mean <= bound);
    rs.m = Some(m);
    rs.epsilon = Some(a.epsilon);
    rs.trials = Some(trials);
    Ok(vec![hit, rs])
}

/// Largest gap between `filtering_probability` and the exact fraction of weight-`w2`
/// masks disjoint from a fixed weight-`w1` mask, over all `w1 + w2 <= m`.
fn pf_exact(m: u32) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for w1 in 0..=m {
        let fixed = (1u64 << w1) - 1;
        let mut total = vec![0u64; m as usize + 1];
        let mut disjoint = vec![0u64; m as usize + 1];
        for mask in 0..1u64 << m {
            let w = mask.count_ones() as usize;
            total[w] += 1;
            disjoint[w] += (mask & fixed == 0) as u64;
        }
        for w2 in 0..=m - w1 {
            let exact = disjoint[w2 as usize] as f64 / total[w2 as usize] as f64;
            let (pf, _) = filtering_probability(w1 as f64 / m as f64, w2 as f64 / m as f64, m as usize)?;
            worst = worst.max((pf - exact).abs());
        }
    }
    Ok(worst)
}

pub fn run(a: &VerifyArgs) -> Result<i32, CliError> {
    if !(0.0..1.0).contains(&a.epsilon) {
        return Err(CliError::Config("--epsilon must be in [0, 1)".into()));
    }
    if a.trials == Some(0) {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let mut rng = rng_from_seed(a.seed);
    let records = match a.lemma {
        Lemma::Ez => {
            let n = small_n(a)?;
            let m = need(a.m, "--m")?;
            let c = verify_lemma_ez(n, m, a.trials.unwrap_or(10_000), &mut rng)?;
            let mut r = record(a, "EZ", c.analytic, c.empirical, Some(c.sigma), c.within(3.0));
            r.trials = Some(c.trials);
            vec![r]
        }
        Lemma::Gbound => {
            let n = small_n(a)?;
            let m = need(a.m, "--m")?;
            let c = verify_lemma_g_bound(n, m, a.epsilon, a.trials.unwrap_or(1000), &mut rng)?;
            let mut r = record(a, "Gbound", c.expected_lower_bound, c.mean_g, Some(c.sigma), c.violations == 0);
            r.epsilon = Some(a.epsilon);
            r.trials = Some(c.trials);
            r.violations = Some(c.violations);
            vec![r]
        }
        Lemma::SuccessProb => success_prob(a)?,
        Lemma::SumLemma => {
            let alpha = need(a.alpha, "--alpha")?;
            let (lhs, rhs) = sum_lemma_check(alpha, need(a.n, "--n")?)?;
            vec![record(a, "sum-lemma", rhs, lhs, None, lhs <= rhs)]
        }
        Lemma::PfExact => {
            let m = a.m.unwrap_or(12);
            if !(1..=20).contains(&m) {
                return Err(CliError::Config("pf-exact needs 1 <= m <= 20".into()));
            }
            let worst = pf_exact(m)?;
            let mut r = record(a, "pf-exact", 0.0, worst, None, worst <= 1e-12);
            r.m = Some(m);
            vec![r]
        }
    };
    emit_records(&records, &a.out)?;
    Ok(if records.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_FAIL })
}
