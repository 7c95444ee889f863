use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use dihedral::cost_models::{
    default_fit_range, fit_cost_line, interpolation_cost, optimize_tree_asymptotic, optimize_tree_exact,
    sieve_adjust_c, sieve_cost_precise, sieve_cost_simple, table_row_with, Algorithm, CostReport, ExactOptions,
    TreeShape, C_DCP, C_QSS_NO_QRACM, C_QSS_QRACM, CSIDH_ROWS, KAPPA_R, SIEVE_DELTA,
};

use crate::output::{emit_json, emit_records, sig6, Format, OutputArgs};
use crate::{CliError, EXIT_OK};

#[derive(Debug, Clone, Subcommand)]
pub enum EstimateCmd {
    /// Cost exponents of every algorithm at the CSIDH parameter sizes.
    Table2 {
        /// Round exponents the way the published table does.
        #[arg(long)]
        rounded: bool,
        /// Restart constant of Regev's algorithm.
        #[arg(long, default_value_t = KAPPA_R)]
        kappa: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// The interpolation curve over t, or a single point with --t.
    Interpolation {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        t: Option<u32>,
        /// Selects the subset-sum exponent.
        #[arg(long, default_value = "qracm")]
        shape: TreeShape,
        #[arg(long, default_value_t = C_DCP)]
        c_dcp: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Optimized merging tree (JSON by default).
    Tree(TreeArgs),
    /// Least-squares line through exact tree costs.
    Fit {
        #[arg(long, default_value = "qracm")]
        shape: TreeShape,
        /// Comma-separated values of m (default 128,192,...,1024).
        #[arg(long, value_delimiter = ',')]
        ms: Vec<u32>,
        /// Additive constant of the Grover cost n/2 + offset.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        grover_offset: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Collimation sieve exponents, simple and with constants.
    Sieve {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = SIEVE_DELTA)]
        delta: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TreeArgs {
    #[arg(long, required_unless_present = "asymptotic")]
    pub m: Option<u32>,
    #[arg(long, default_value = "qracm")]
    pub shape: TreeShape,
    /// Required log2 size of the root list.
    #[arg(long, default_value_t = 2.0)]
    pub root: f64,
    /// Leave out the pi/2 factor of each Grover search.
    #[arg(long)]
    pub no_grover_constant: bool,
    /// Count m arithmetic operations per sample.
    #[arg(long)]
    pub ops_per_sample: bool,
    /// Asymptotic exponents (per unit of m) instead of a concrete m.
    #[arg(long)]
    pub asymptotic: bool,
    /// `json` emits the whole tree; `csv` emits one row per node.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub output: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub label: String,
    pub n: u32,
    pub algorithm: String,
    pub queries: f64,
    pub classical_time: f64,
    pub quantum_time: f64,
    pub classical_space: f64,
    pub quantum_space: f64,
}

impl CostRecord {
    fn new(label: &str, n: u32, algorithm: &str, r: &CostReport) -> Self {
        CostRecord {
            label: label.into(),
            n,
            algorithm: algorithm.into(),
            queries: sig6(r.queries),
            classical_time: sig6(r.classical_time),
            quantum_time: sig6(r.quantum_time),
            classical_space: sig6(r.classical_space),
            quantum_space: sig6(r.quantum_space),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationRecord {
    pub n: u32,
    pub t: u32,
    pub queries: f64,
    pub quantum_time: f64,
    pub classical_space: f64,
    pub sieve_term: f64,
    pub subset_sum_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub name: String,
    pub role: String,
    pub ell: f64,
    pub weight: f64,
    pub support: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub shape: String,
    pub m: u32,
    pub total: f64,
    pub slope: f64,
    pub intercept: f64,
    pub crossover: f64,
}

fn table2(rounded: bool, kappa: f64, out: &OutputArgs) -> Result<(), CliError> {
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(CliError::Config("--kappa must be positive".into()));
    }
    let mut rows = Vec::new();
    for (label, n) in CSIDH_ROWS {
        for alg in Algorithm::ALL {
            let r = table_row_with(alg, n, kappa)?;
            let r = if rounded { r.rounded() } else { r };
            rows.push(CostRecord::new(label, n, alg.name(), &r));
        }
    }
    Ok(emit_records(&rows, out)?)
}

fn interpolation(n: u32, t: Option<u32>, shape: TreeShape, c_dcp: f64, out: &OutputArgs) -> Result<(), CliError> {
    let c_qss = match shape {
        TreeShape::Qracm => C_QSS_QRACM,
        TreeShape::NoQracm => C_QSS_NO_QRACM,
    };
    let ts: Vec<u32> = match t {
        Some(t) => vec![t],
        None => (1..n.max(1)).collect(),
    };
    let mut rows = Vec::with_capacity(ts.len());
    for t in ts {
        let r = interpolation_cost(n, t, c_dcp, c_qss)?;
        rows.push(InterpolationRecord {
            n,
            t,
            queries: sig6(r.queries),
            quantum_time: sig6(r.quantum_time),
            classical_space: sig6(r.classical_space),
            sieve_term: sig6(r.notes[0].log2),
            subset_sum_term: sig6(r.notes[1].log2),
        });
    }
    Ok(emit_records(&rows, out)?)
}

fn tree(a: &TreeArgs) -> Result<(), CliError> {
    let out = OutputArgs {
        format: a.format,
        output: a.output.clone(),
    };
    let solution = if a.asymptotic {
        let t = optimize_tree_asymptotic(a.shape)?;
        if a.format == Format::Json {
            return Ok(emit_json(&t, &out)?);
        }
        t.solution
    } else {
        let m = a.m.ok_or_else(|| CliError::Config("missing --m".into()))?;
        let opts = ExactOptions {
            root_size_log2: a.root,
            grover_constant: !a.no_grover_constant,
            ops_per_sample: a.ops_per_sample,
        };
        let t = optimize_tree_exact(m, a.shape, opts)?;
        if a.format == Format::Json {
            return Ok(emit_json(&t, &out)?);
        }
        t.rounded
    };
    let rows: Vec<NodeRecord> = solution
        .nodes
        .iter()
        .map(|n| NodeRecord {
            name: n.name.clone(),
            role: format!("{:?}", n.role).to_ascii_lowercase(),
            ell: sig6(n.ell),
            weight: sig6(n.weight),
            support: sig6(n.support),
            c: sig6(n.c),
        })
        .collect();
    Ok(emit_records(&rows, &out)?)
}

fn fit(shape: TreeShape, ms: &[u32], offset: f64, out: &OutputArgs) -> Result<(), CliError> {
    let ms = if ms.is_empty() { default_fit_range() } else { ms.to_vec() };
    let f = fit_cost_line(shape, &ms, ExactOptions::default())?;
    let rows: Vec<FitRecord> = f
        .points
        .iter()
        .map(|&(m, total)| FitRecord {
            shape: shape.to_string(),
            m,
            total: sig6(total),
            slope: sig6(f.slope),
            intercept: sig6(f.intercept),
            crossover: sig6(f.crossover(offset)),
        })
        .collect();
    Ok(emit_records(&rows, out)?)
}

fn sieve(n: u32, delta: f64, out: &OutputArgs) -> Result<(), CliError> {
    let rows = vec![
        CostRecord::new("simple", n, "sieve", &sieve_cost_simple(n)?),
        CostRecord::new("precise", n, "sieve", &sieve_cost_precise(n, delta, sieve_adjust_c())?),
    ];
    Ok(emit_records(&rows, out)?)
}

pub fn run(cmd: &EstimateCmd) -> Result<i32, CliError> {
    match cmd {
        EstimateCmd::Table2 { rounded, kappa, out } => table2(*rounded, *kappa, out)?,
        EstimateCmd::Interpolation { n, t, shape, c_dcp, out } => interpolation(*n, *t, *shape, *c_dcp, out)?,
        EstimateCmd::Tree(a) => tree(a)?,
        EstimateCmd::Fit {
            shape,
            ms,
            grover_offset,
            out,
        } => fit(*shape, ms, *grover_offset, out)?,
        EstimateCmd::Sieve { n, delta, out } => sieve(*n, *delta, out)?,
    }
    Ok(EXIT_OK)
}
