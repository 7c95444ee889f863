use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dihedral::dcp_core::{rng_from_seed, DcpInstance};
use dihedral::dcp_solvers::{ettinger_hoyer, interpolation_solve, qss_dcp_solve, regev_lsb, QssOptions};
use dihedral::sieve::{kuperberg1_find_lsb, sieve_to_partial, PartialTarget};
use dihedral::subset_sum::BruteForce;
use dihedral::Error;

use crate::output::{emit_records, sig6, OutputArgs};
use crate::{CliError, EXIT_BUDGET, EXIT_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimAlgorithm {
    EttingerHoyer,
    RegevLsb,
    QssSolve,
    Interpolate,
    Kuperberg1,
    Sieve,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub algorithm: SimAlgorithm,
    /// Group order exponent: N = 2^n.
    #[arg(long)]
    pub n: u32,
    /// Subset-sum size (qss-solve; default n - 1).
    #[arg(long)]
    pub m: Option<u32>,
    /// Hard bits left to the subset-sum solver (interpolate).
    #[arg(long)]
    pub t: Option<u32>,
    /// Failure rate of the simulated quantum subset-sum solver.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    /// Run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; records stay ordered by seed.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Samples for ettinger-hoyer (default 8n).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Restart budget for regev-lsb, qss-solve and interpolate.
    #[arg(long)]
    pub budget: Option<u64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// One run, or the summary row (`kind = "summary"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub kind: String,
    pub seed: Option<u64>,
    pub secret: Option<u64>,
    pub recovered: Option<u64>,
    pub success: Option<bool>,
    /// Queries of the run, or their mean over completed runs.
    pub queries: Option<f64>,
    pub restarts: Option<f64>,
    pub success_rate: Option<f64>,
    /// 95% Wilson interval of the success rate.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub status: String,
}

struct Outcome {
    seed: u64,
    secret: u64,
    result: Result<(Option<u64>, bool, u64), Error>,
    queries: u64,
}

fn run_one(a: &SimulateArgs, seed: u64) -> Outcome {
    let modulus = 1u64.checked_shl(a.n).unwrap_or(0);
    let mut inst = match DcpInstance::new(modulus, None, seed) {
        Ok(i) => i,
        Err(e) => {
            return Outcome {
                seed,
                secret: 0,
                result: Err(e),
                queries: 0,
            }
        }
    };
    let secret = inst.secret_for_testing();
    let mut rng = rng_from_seed(seed ^ 0x5eed_0f_d1ed_a1);
    let opts = QssOptions {
        epsilon: a.epsilon,
        budget: a.budget,
        ..QssOptions::default()
    };
    let result = match a.algorithm {
        SimAlgorithm::EttingerHoyer => ettinger_hoyer(&mut inst, a.samples.unwrap_or(8 * a.n as usize), &mut rng)
            .map(|s| (Some(s), s == secret, 0)),
        SimAlgorithm::RegevLsb => regev_lsb(&mut inst, &BruteForce, a.budget.unwrap_or(64), &mut rng)
            .map(|(b, r)| (Some(b as u64), b as u64 == secret & 1, r.restarts)),
        SimAlgorithm::QssSolve => qss_dcp_solve(&mut inst, a.m.unwrap_or(a.n.saturating_sub(1)), opts, &mut rng)
            .map(|r| (r.recovered_s, r.recovered_s == Some(secret), r.restarts)),
        SimAlgorithm::Interpolate => match a.t {
            None => Err(Error::InvalidParameter("interpolate needs --t".into())),
            Some(t) => interpolation_solve(&mut inst, t, opts, &mut rng)
                .map(|r| (r.recovered_s, r.recovered_s == Some(secret), r.restarts)),
        },
        SimAlgorithm::Kuperberg1 => {
            kuperberg1_find_lsb(&mut inst, None, &mut rng).map(|b| (Some(b as u64), b as u64 == secret & 1, 0))
        }
        SimAlgorithm::Sieve => {
            let half = modulus / 2;
            sieve_to_partial(&mut inst, a.n, PartialTarget::PowerOfTwo, None, &mut rng)
                .and_then(|pv| pv.to_qubit())
                .map(|q| (Some(q.labels()[0]), q.labels()[0] == half, 0))
        }
    };
    Outcome {
        seed,
        secret,
        result,
        queries: inst.queries(),
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::InvalidParameter(_) | Error::Precondition(_))
}

/// 95% Wilson score interval.
fn wilson(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn run(a: &SimulateArgs) -> Result<i32, CliError> {
    if a.trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    if a.n < 2 || a.n > 40 {
        return Err(CliError::Config("--n must be between 2 and 40".into()));
    }
    if !(0.0..1.0).contains(&a.epsilon) {
        return Err(CliError::Config("--epsilon must be in [0, 1)".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        (0..a.trials)
            .into_par_iter()
            .map(|i| run_one(a, a.seed.wrapping_add(i)))
            .collect()
    });
    if let Some(e) = outcomes.iter().find_map(|o| o.result.as_ref().err().filter(|e| is_config_error(e))) {
        return Err(CliError::Config(e.to_string()));
    }

    let mut records = Vec::with_capacity(outcomes.len() + 1);
    let (mut done, mut wins, mut q_sum, mut r_sum) = (0u64, 0u64, 0u64, 0u64);
    for o in &outcomes {
        let rec = match &o.result {
            Ok((recovered, success, restarts)) => {
                done += 1;
                wins += *success as u64;
                q_sum += o.queries;
                r_sum += restarts;
                SimRecord {
                    kind: "run".into(),
                    seed: Some(o.seed),
                    secret: Some(o.secret),
                    recovered: *recovered,
                    success: Some(*success),
                    queries: Some(o.queries as f64),
                    restarts: Some(*restarts as f64),
                    success_rate: None,
                    ci_low: None,
                    ci_high: None,
                    status: "ok".into(),
                }
            }
            Err(e) => SimRecord {
                kind: "run".into(),
                seed: Some(o.seed),
                secret: Some(o.secret),
                recovered: None,
                success: Some(false),
                queries: Some(o.queries as f64),
                restarts: None,
                success_rate: None,
                ci_low: None,
                ci_high: None,
                status: match e {
                    Error::BudgetExhausted(_) => "budget_exhausted".into(),
                    Error::PoolExhausted => "pool_exhausted".into(),
                    other => other.to_string(),
                },
            },
        };
        records.push(rec);
    }
    let (lo, hi) = wilson(wins, a.trials);
    let mean = |s: u64| (done > 0).then(|| sig6(s as f64 / done as f64));
    records.push(SimRecord {
        kind: "summary".into(),
        seed: None,
        secret: None,
        recovered: None,
        success: None,
        queries: mean(q_sum),
        restarts: mean(r_sum),
        success_rate: Some(sig6(wins as f64 / a.trials as f64)),
        ci_low: Some(sig6(lo)),
        ci_high: Some(sig6(hi)),
        status: format!("{done}/{} completed", a.trials),
    });
    emit_records(&records, &a.out)?;
    // Exit 0 only when every run completed.
    Ok(if done == a.trials { EXIT_OK } else { EXIT_BUDGET })
}
