//! Complexity estimates: the collimation sieve, the subset-sum merging trees
//! (asymptotic and exact), the algorithm cost table and the interpolation curve.
//!
//! Every figure is a log2 exponent.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcp_core::rng_from_seed;
use crate::error::{invalid, Error, Result};
use crate::subset_sum::{entropy, log2_binomial, weight_guess_probability};

/// Sieve exponent constant for the DCP part: queries `2^{sqrt(c_DCP n)}`.
pub const C_DCP: f64 = 2.0;
/// Classical subset-sum exponent used for Regev's algorithm.
pub const C_CSS: f64 = 0.283;
/// Quantum subset-sum exponent with QRACM.
pub const C_QSS_QRACM: f64 = 0.2356;
/// Quantum subset-sum exponent without QRACM.
pub const C_QSS_NO_QRACM: f64 = 0.4165;
/// Restart constant added to Regev's classical time (fitted, see README).
pub const KAPPA_R: f64 = 3.5;
/// Default failure rate of a collimation step.
pub const SIEVE_DELTA: f64 = 0.02;
/// Key sizes of the CSIDH parameter table, with the DCP size `n`.
pub const CSIDH_ROWS: [(&str, u32); 5] = [
    ("CSIDH-512", 256),
    ("CSIDH-1024", 512),
    ("CSIDH-1792", 896),
    ("CSIDH-3072", 1536),
    ("CSIDH-4096", 2048),
];

/// `log2(1 + sqrt(3 / (2 pi)))`, the per-level overhead of the precise sieve analysis.
pub fn sieve_adjust_c() -> f64 {
    (1.0 + (3.0 / (2.0 * PI)).sqrt()).log2()
}

/// `log2(sum 2^x)`; `-inf` for an empty slice.
pub fn log2_sum_exp2(xs: &[f64]) -> f64 {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + xs.iter().map(|x| (x - mx).exp2()).sum::<f64>().log2()
}

fn lse2(a: f64, b: f64) -> f64 {
    a.max(b) + (1.0 + (-(a - b).abs()).exp2()).log2()
}

/// Ceiling used by the rounded table view; tolerates float noise just above an integer.
pub fn round_exponent(x: f64) -> f64 {
    (x - 1e-9).ceil()
}

/// A named log2 term of a cost breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub log2: f64,
}

impl Term {
    fn new(name: impl Into<String>, log2: f64) -> Self {
        Term { name: name.into(), log2 }
    }
}

/// Cost exponents of one algorithm. `notes` breaks `quantum_time` into terms whose
/// log-sum-exp is `quantum_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub queries: f64,
    pub classical_time: f64,
    pub quantum_time: f64,
    pub classical_space: f64,
    pub quantum_space: f64,
    pub notes: Vec<Term>,
}

impl CostReport {
    /// Integer view used for tables.
    pub fn rounded(&self) -> CostReport {
        CostReport {
            queries: round_exponent(self.queries),
            classical_time: round_exponent(self.classical_time),
            quantum_time: round_exponent(self.quantum_time),
            classical_space: round_exponent(self.classical_space),
            quantum_space: round_exponent(self.quantum_space),
            notes: self.notes.clone(),
        }
    }

    /// Gap between `quantum_time` and the log-sum-exp of the breakdown.
    pub fn breakdown_gap(&self) -> f64 {
        let xs: Vec<f64> = self.notes.iter().map(|t| t.log2).collect();
        (log2_sum_exp2(&xs) - self.quantum_time).abs()
    }
}

/// Optimal-time collimation sieve: `2^{sqrt(2n)}` leaves.
pub fn sieve_cost_simple(n: u32) -> Result<CostReport> {
    sieve_cost_precise(n, 0.0, 0.0)
}

/// Sieve cost with per-level overhead `c` and failure rate `delta`:
/// `h = c + sqrt(2n + 4c^2)` levels and `(1 - log2(1 - delta)) h` query exponent.
pub fn sieve_cost_precise(n: u32, delta: f64, c: f64) -> Result<CostReport> {
    if n == 0 {
        return invalid("sieve cost needs n >= 1");
    }
    if !(0.0..1.0).contains(&delta) || c.is_nan() || c < 0.0 {
        return invalid("need 0 <= delta < 1 and c >= 0");
    }
    let h = c + (2.0 * n as f64 + 4.0 * c * c).sqrt();
    let q = (1.0 - (1.0 - delta).log2()) * h;
    let time = q + h.log2();
    Ok(CostReport {
        queries: q,
        classical_time: time,
        quantum_time: time,
        classical_space: q,
        quantum_space: (n as f64).log2(),
        notes: vec![Term::new("sieve", time)],
    })
}

/// Exact `log2 sum_{i=1}^n 2^{alpha sqrt i}` against the closed bound
/// `(2^a / (2^a - 1)) (2 ceil(sqrt n) + 1) 2^{a ceil(sqrt n)}`.
pub fn sum_lemma_check(alpha: f64, n: u64) -> Result<(f64, f64)> {
    if alpha.is_nan() || alpha <= 0.0 || n == 0 {
        return invalid("need alpha > 0 and n >= 1");
    }
    let top = alpha * (n as f64).sqrt();
    let s: f64 = (1..=n).map(|i| (alpha * (i as f64).sqrt() - top).exp2()).sum();
    let lhs = top + s.log2();
    let r = (n as f64).sqrt().ceil();
    let ea = alpha.exp2();
    let rhs = (ea / (ea - 1.0)).log2() + (2.0 * r + 1.0).log2() + alpha * r;
    Ok((lhs, rhs))
}

/// Algorithms of the cost table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kuperberg2,
    Regev,
    EttingerHoyer,
    Alg4Qracm,
    Alg4NoQracm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Kuperberg2,
        Algorithm::Regev,
        Algorithm::EttingerHoyer,
        Algorithm::Alg4Qracm,
        Algorithm::Alg4NoQracm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Kuperberg2 => "kuperberg2",
            Algorithm::Regev => "regev",
            Algorithm::EttingerHoyer => "ettinger_hoyer",
            Algorithm::Alg4Qracm => "alg4_qracm",
            Algorithm::Alg4NoQracm => "alg4_no_qracm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_").to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm `{s}`")))
    }
}

/// Cost row of `alg` at DCP size `n`, with the default restart constant.
pub fn table_row(alg: Algorithm, n: u32) -> Result<CostReport> {
    table_row_with(alg, n, KAPPA_R)
}

/// Cost row with an explicit Regev restart constant `kappa_r`.
pub fn table_row_with(alg: Algorithm, n: u32, kappa_r: f64) -> Result<CostReport> {
    if n < 64 {
        return invalid("table rows need n >= 64");
    }
    let nf = n as f64;
    let lg = nf.log2();
    let (q, ct, qt, space) = match alg {
        Algorithm::Kuperberg2 => {
            let e = (2.0 * nf).sqrt() + 0.5 * lg + 3.0;
            (e, e, e, (2.0 * nf).sqrt())
        }
        Algorithm::Regev => {
            let q = 2.0 * lg + 3.0;
            (q, C_CSS * nf + kappa_r, q, C_CSS * nf)
        }
        Algorithm::EttingerHoyer => {
            let q = lg + 6.5;
            (q, nf, q, lg)
        }
        Algorithm::Alg4Qracm => {
            let s = 0.238 * nf;
            (lg + 3.0, s + 12.0, s + 1.5 * lg + 12.0, s)
        }
        Algorithm::Alg4NoQracm => {
            let s = 0.2324 * nf;
            (lg + 3.0, s, 0.418 * nf + 1.5 * lg + 15.5, s)
        }
    };
    Ok(CostReport {
        queries: q,
        classical_time: ct,
        quantum_time: qt,
        classical_space: space,
        quantum_space: lg,
        notes: vec![Term::new(alg.name(), qt)],
    })
}

/// Interpolation between sieving and subset-sum: `t` hard bits left to the
/// subset-sum solver, the other `n - t` collimated.
pub fn interpolation_cost(n: u32, t: u32, c_dcp: f64, c_qss: f64) -> Result<CostReport> {
    if n < 2 || t == 0 || t >= n {
        return invalid("need 1 <= t <= n - 1");
    }
    if c_dcp.is_nan() || c_dcp <= 0.0 || c_qss.is_nan() || c_qss <= 0.0 {
        return invalid("cost constants must be positive");
    }
    let rest = (n - t) as f64;
    let sieve = (c_dcp * rest).sqrt();
    let queries = sieve + (rest.sqrt() + t as f64).log2();
    let ss = c_qss * t as f64;
    let qt = lse2(queries, ss);
    Ok(CostReport {
        queries,
        classical_time: qt,
        quantum_time: qt,
        classical_space: sieve.max(ss),
        quantum_space: (n as f64).log2(),
        notes: vec![Term::new("sieve", queries), Term::new("subset_sum", ss)],
    })
}

// ---------------------------------------------------------------------------
// Merging trees

/// Tree shape: with quantum random access to classical memory, or with
/// sequential access only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeShape {
    Qracm,
    NoQracm,
}

impl FromStr for TreeShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "qracm" => Ok(TreeShape::Qracm),
            "no_qracm" | "noqracm" => Ok(TreeShape::NoQracm),
            _ => invalid(format!("unknown tree shape `{s}`")),
        }
    }
}

impl fmt::Display for TreeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreeShape::Qracm => "qracm",
            TreeShape::NoQracm => "no_qracm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Stored,
    Sampled,
}

/// One list `L[ell, alpha, c]`. In asymptotic mode every field is relative to `m`;
/// in exact mode `weight`, `support` and `c` are absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNodeParams {
    pub name: String,
    pub ell: f64,
    pub weight: f64,
    pub support: f64,
    pub c: f64,
    pub role: NodeRole,
}

/// Free parameters, both shapes. Entries unused by a shape stay at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TreeVars {
    /// Share of the coordinates carried by `L_1^3` (QRACM shape).
    pub r: f64,
    pub w13: f64,
    pub w03: f64,
    /// Weight of `L_0^2` when sampled directly (sequential-access shape).
    pub w02: f64,
    pub w12: f64,
    pub c02: f64,
    pub c12: f64,
    /// Leaf truncations: `ell = max size - |s|`.
    pub s13: f64,
    pub s03: f64,
    pub s23: f64,
    pub s43: f64,
}

impl TreeVars {
    fn to_vec(self, shape: TreeShape) -> Vec<f64> {
        match shape {
            TreeShape::Qracm => vec![
                self.r, self.w13, self.w03, self.w12, self.c02, self.c12, self.s13, self.s03, self.s23,
                self.s43,
            ],
            TreeShape::NoQracm => vec![self.w02, self.w12, self.c02, self.c12, self.s23, self.s43],
        }
    }

    fn from_slice(shape: TreeShape, x: &[f64]) -> Self {
        match shape {
            TreeShape::Qracm => TreeVars {
                r: x[0],
                w13: x[1],
                w03: x[2],
                w12: x[3],
                c02: x[4],
                c12: x[5],
                s13: x[6],
                s03: x[7],
                s23: x[8],
                s43: x[9],
                ..Default::default()
            },
            TreeShape::NoQracm => TreeVars {
                w02: x[0],
                w12: x[1],
                c02: x[2],
                c12: x[3],
                s23: x[4],
                s43: x[5],
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TreeModel {
    shape: TreeShape,
    /// `m`, or 1 in asymptotic mode.
    m: f64,
    exact: bool,
    /// Total weight of the root solution.
    weight: f64,
    /// Target log2 size of the root list.
    root: f64,
    /// When `c1` is fixed, the root size may drop down to this value.
    root_floor: f64,
}

/// Everything derived from one parameter point.
#[derive(Debug, Clone, Default)]
struct Eval {
    v: TreeVars,
    w11: f64,
    w02: f64,
    w01: f64,
    c1: f64,
    l13: f64,
    l03: f64,
    l23: f64,
    l43: f64,
    l02: f64,
    l12: f64,
    l22: f64,
    l11: f64,
    l01: f64,
    root: f64,
    steps: Vec<(&'static str, f64)>,
    memory: f64,
    /// Sum of squared constraint violations.
    penalty: f64,
    /// Largest single violation.
    violation: f64,
}

impl Eval {
    fn max_step(&self) -> f64 {
        self.steps.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Penalty {
    sq: f64,
    max: f64,
}

impl Penalty {
    fn le(&mut self, a: f64, b: f64) {
        let d = a - b;
        if d > 0.0 || d.is_nan() {
            let d = if d.is_nan() { 1e3 } else { d };
            self.sq += d * d;
            self.max = self.max.max(d);
        }
    }
}

fn half_pos(x: f64) -> f64 {
    (x / 2.0).max(0.0)
}

impl TreeModel {
    fn asymptotic(shape: TreeShape) -> Self {
        TreeModel {
            shape,
            m: 1.0,
            exact: false,
            weight: 0.5,
            root: 0.0,
            root_floor: 0.0,
        }
    }

    fn exact(shape: TreeShape, m: f64, root: f64) -> Self {
        TreeModel {
            shape,
            m,
            exact: true,
            weight: m / 2.0,
            root,
            root_floor: root - 1.0,
        }
    }

    /// `log2 C(a, b)` (exact) or `a h(b/a)` (asymptotic); out-of-range arguments
    /// return a steep negative value so that the optimizer moves away.
    fn lb(&self, a: f64, b: f64) -> f64 {
        if b < 0.0 || b > a || a <= 0.0 {
            let viol = (-b).max(0.0) + (b - a).max(0.0) + (-a).max(0.0);
            return -1e3 * viol - 50.0 * self.m;
        }
        if self.exact {
            log2_binomial(a, b)
        } else {
            a * entropy(b / a)
        }
    }

    /// log2 of the filtering probability of weights `w1`, `w2`.
    fn pf(&self, w1: f64, w2: f64) -> f64 {
        self.lb(self.m - w1, w2) - self.lb(self.m, w2)
    }

    fn comb(&self, a: f64, b: f64) -> f64 {
        if self.exact {
            lse2(a, b)
        } else {
            a.max(b)
        }
    }

    fn eval(&self, v: TreeVars, c1_fixed: Option<f64>) -> Eval {
        match self.shape {
            TreeShape::Qracm => self.eval_qracm(v, c1_fixed),
            TreeShape::NoQracm => self.eval_no_qracm(v, c1_fixed),
        }
    }

    fn eval_qracm(&self, v: TreeVars, c1_fixed: Option<f64>) -> Eval {
        let m = self.m;
        let eps = 1e-4 * m;
        let mut p = Penalty { sq: 0.0, max: 0.0 };
        let w11 = self.weight - v.w13 - v.w03 - v.w12;
        let w02 = v.w13 + v.w03;
        let w01 = w02 + v.w12;
        for x in [v.w13, v.w03, v.w12, w11, v.c02, v.c12] {
            p.le(eps.min(1e-3), x);
        }
        p.le(0.01, v.r);
        p.le(v.r, 0.99);
        p.le(v.w13, v.r * m);
        p.le(v.w03, (1.0 - v.r) * m);

        let l13 = self.lb(v.r * m, v.w13) - v.s13.abs();
        let l03 = self.lb((1.0 - v.r) * m, v.w03) - v.s03.abs();
        let l23 = self.lb(m / 2.0, v.w12 / 2.0) - v.s23.abs();
        let l43 = self.lb(m / 2.0, w11 / 4.0) - v.s43.abs();
        let l02 = l03 + l13 - v.c02;
        let l12 = 2.0 * l23 - v.c02;
        let l22 = 2.0 * l43 - v.c12;
        let p1 = self.pf(w11 / 2.0, w11 / 2.0);
        let p2 = self.pf(w02, v.w12);
        let p3 = self.pf(w01, w11);
        // The root size is linear in c1 with slope -1.
        let k = 2.0 * l22 + v.c12 + p1 + l02 + l12 + v.c02 + p2 - m + p3;
        let c1 = c1_fixed.unwrap_or(k - self.root);
        let root = k - c1;
        if c1_fixed.is_some() {
            p.le(self.root_floor, root);
        }
        let l11 = 2.0 * l22 - (c1 - v.c12) + p1;
        let l01 = l02 + l12 - (c1 - v.c02) + p2;
        for (l, a, c) in [
            (l02, w02, v.c02),
            (l12, v.w12, v.c02),
            (l22, w11 / 2.0, v.c12),
            (l11, w11, c1),
            (l01, w01, c1),
        ] {
            p.le(l, self.lb(m, a) - c);
            p.le(0.0, l);
        }
        for l in [l13, l03, l23, l43] {
            p.le(0.0, l);
        }
        p.le(v.c02, c1);
        p.le(v.c12, c1);
        p.le(c1, m);

        let t0 = half_pos(v.c02 - l13) + half_pos(c1 - v.c02 - l12) - p2 / 2.0
            + half_pos(m - c1 - l11)
            - p3 / 2.0;
        let b12 = l12 + half_pos(v.c02 - l23);
        let b32 = l22 + half_pos(v.c12 - l43);
        let b11 = l11 + half_pos(v.c12 - l43) + half_pos(c1 - v.c12 - l22) - p1 / 2.0;
        let steps = vec![
            ("L_1^3", l13),
            ("L_2^3", l23),
            ("L_3^3", l23),
            ("L_1^2", b12),
            ("L_4^3", l43),
            ("L_5^3", l43),
            ("L_6^3", l43),
            ("L_7^3", l43),
            ("L_2^2", b32),
            ("L_3^2", b32),
            ("L_1^1", b11),
            ("L^0", t0),
        ];
        let memory = [l13, l23, l12, l43, l22, l11].into_iter().fold(f64::NEG_INFINITY, f64::max);
        Eval {
            v,
            w11,
            w02,
            w01,
            c1,
            l13,
            l03,
            l23,
            l43,
            l02,
            l12,
            l22,
            l11,
            l01,
            root,
            steps,
            memory,
            penalty: p.sq,
            violation: p.max,
        }
    }

    fn eval_no_qracm(&self, v: TreeVars, c1_fixed: Option<f64>) -> Eval {
        let m = self.m;
        let eps = 1e-4 * m;
        let mut p = Penalty { sq: 0.0, max: 0.0 };
        let w02 = v.w02;
        let w11 = self.weight - w02 - v.w12;
        let w01 = w02 + v.w12;
        for x in [w02, v.w12, w11, v.c02, v.c12] {
            p.le(eps.min(1e-3), x);
        }
        // L_0^2 is sampled by search over its whole domain, so it is saturated.
        let l02 = self.lb(m, w02) - v.c02;
        let l23 = self.lb(m / 2.0, v.w12 / 2.0) - v.s23.abs();
        let l43 = self.lb(m / 2.0, w11 / 4.0) - v.s43.abs();
        let l12 = 2.0 * l23 - v.c02;
        let l22 = 2.0 * l43 - v.c12;
        let p1 = self.pf(w11 / 2.0, w11 / 2.0);
        let p2 = self.pf(w02, v.w12);
        let p3 = self.pf(w01, w11);
        let k = 2.0 * l22 + v.c12 + p1 + l02 + l12 + v.c02 + p2 - m + p3;
        let c1 = c1_fixed.unwrap_or(k - self.root);
        let root = k - c1;
        if c1_fixed.is_some() {
            p.le(self.root_floor, root);
        }
        let l11 = 2.0 * l22 - (c1 - v.c12) + p1;
        let l01 = l02 + l12 - (c1 - v.c02) + p2;
        for (l, a, c) in [(l12, v.w12, v.c02), (l22, w11 / 2.0, v.c12), (l11, w11, c1), (l01, w01, c1)] {
            p.le(l, self.lb(m, a) - c);
            p.le(0.0, l);
        }
        for l in [l02, l23, l43] {
            p.le(0.0, l);
        }
        p.le(v.c02, c1);
        p.le(v.c12, c1);
        p.le(c1, m);

        // Every lookup into a stored list scans it.
        let t01 = half_pos(c1 - v.c02 - l12) - p2 / 2.0 + self.comb(v.c02 / 2.0, l12);
        let t0 = half_pos(m - c1 - l11) - p3 / 2.0 + self.comb(t01, l11);
        let b12 = l23.max(l12);
        let b22 = l43.max(l22);
        let b11 = l22.max(2.0 * l22 - (c1 - v.c12));
        let steps = vec![
            ("L_1^2", b12),
            ("L_2^2", b22),
            ("L_3^2", b22),
            ("L_1^1", b11),
            ("L^0", t0),
        ];
        let memory = [l23, l43, l12, l22, l11].into_iter().fold(f64::NEG_INFINITY, f64::max);
        Eval {
            v,
            w11,
            w02,
            w01,
            c1,
            l13: 0.0,
            l03: 0.0,
            l23,
            l43,
            l02,
            l12,
            l22,
            l11,
            l01,
            root,
            steps,
            memory,
            penalty: p.sq,
            violation: p.max,
        }
    }

    /// Max step plus a small memory tie-break plus the weighted penalty.
    fn objective(&self, e: &Eval, weight: f64) -> f64 {
        let tie = match self.shape {
            TreeShape::Qracm => 0.0,
            TreeShape::NoQracm => 1e-3 * e.memory,
        };
        let f = e.max_step() + tie + weight * e.penalty / self.m;
        if f.is_finite() {
            f
        } else {
            1e12
        }
    }

    fn nodes(&self, e: &Eval) -> Vec<TreeNodeParams> {
        let m = self.m;
        let half = m / 2.0;
        let node = |name: &str, ell, weight, support, c, role| TreeNodeParams {
            name: name.to_string(),
            ell,
            weight,
            support,
            c,
            role,
        };
        use NodeRole::*;
        let w11 = e.w11;
        let mut out = vec![
            node("L^0", e.root, self.weight, m, m, Sampled),
            node("L_0^1", e.l01, e.w01, m, e.c1, Sampled),
            node("L_1^1", e.l11, w11, m, e.c1, Stored),
        ];
        match self.shape {
            TreeShape::Qracm => {
                let v = e.v;
                out.extend([
                    node("L_0^2", e.l02, e.w02, m, v.c02, Sampled),
                    node("L_1^2", e.l12, v.w12, m, v.c02, Stored),
                    node("L_2^2", e.l22, w11 / 2.0, m, v.c12, Stored),
                    node("L_3^2", e.l22, w11 / 2.0, m, v.c12, Stored),
                    node("L_0^3", e.l03, v.w03, (1.0 - v.r) * m, 0.0, Sampled),
                    node("L_1^3", e.l13, v.w13, v.r * m, 0.0, Stored),
                    node("L_2^3", e.l23, v.w12 / 2.0, half, 0.0, Stored),
                    node("L_3^3", e.l23, v.w12 / 2.0, half, 0.0, Stored),
                ]);
            }
            TreeShape::NoQracm => {
                let v = e.v;
                out.extend([
                    node("L_0^2", e.l02, e.w02, m, v.c02, Sampled),
                    node("L_1^2", e.l12, v.w12, m, v.c02, Stored),
                    node("L_2^2", e.l22, w11 / 2.0, m, v.c12, Stored),
                    node("L_3^2", e.l22, w11 / 2.0, m, v.c12, Stored),
                    node("L_2^3", e.l23, v.w12 / 2.0, half, 0.0, Stored),
                    node("L_3^3", e.l23, v.w12 / 2.0, half, 0.0, Stored),
                ]);
            }
        }
        for i in 4..8 {
            out.push(node(&format!("L_{i}^3"), e.l43, w11 / 4.0, half, 0.0, Stored));
        }
        out
    }

    fn solution(&self, e: &Eval) -> TreeSolution {
        TreeSolution {
            vars: e.v,
            c1: e.c1,
            nodes: self.nodes(e),
            steps: e.steps.iter().map(|&(n, x)| Term::new(n, x)).collect(),
            max_step: e.max_step(),
            memory: e.memory,
            root_size_log2: e.root,
            max_violation: e.violation,
        }
    }
}

/// An optimized tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSolution {
    pub vars: TreeVars,
    pub c1: f64,
    pub nodes: Vec<TreeNodeParams>,
    /// Cost of producing each list.
    pub steps: Vec<Term>,
    pub max_step: f64,
    pub memory: f64,
    pub root_size_log2: f64,
    /// Largest constraint violation at this point.
    pub max_violation: f64,
}

impl TreeSolution {
    pub fn node(&self, name: &str) -> Option<&TreeNodeParams> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// `log2` of the summed cost of every step.
    pub fn total_steps(&self) -> f64 {
        let xs: Vec<f64> = self.steps.iter().map(|t| t.log2).collect();
        log2_sum_exp2(&xs)
    }

    /// Summed cost of the stored lists of the QRACM tree (everything but `L^0`
    /// and the leaves of the right subtree).
    pub fn right_subtree_cost(&self) -> f64 {
        let xs: Vec<f64> = self
            .steps
            .iter()
            .filter(|t| matches!(t.name.as_str(), "L_1^3" | "L_1^2" | "L_2^2" | "L_3^2" | "L_1^1"))
            .map(|t| t.log2)
            .collect();
        log2_sum_exp2(&xs)
    }

    /// Cost of sampling the root.
    pub fn left_branch_cost(&self) -> f64 {
        self.steps.iter().find(|t| t.name == "L^0").map_or(f64::NAN, |t| t.log2)
    }
}

// ---------------------------------------------------------------------------
// Local search

struct FnCost<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for FnCost<F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(p))
    }
}

fn simplex_around(x: &[f64], scale: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![x.to_vec()];
    for i in 0..x.len() {
        let mut y = x.to_vec();
        y[i] += (0.05 * x[i].abs()).max(0.01 * scale);
        pts.push(y);
    }
    pts
}

/// Nelder-Mead, restarted from its own best point until it stops improving.
fn local_search(f: impl Fn(&[f64]) -> f64, x0: Vec<f64>, scale: f64, iters: u64) -> (Vec<f64>, f64) {
    let mut best = x0;
    let mut fbest = f(&best);
    let problem = FnCost(&f);
    for _ in 0..8 {
        let solver = match NelderMead::new(simplex_around(&best, scale)).with_sd_tolerance(1e-15) {
            Ok(s) => s,
            Err(_) => break,
        };
        let Ok(res) = Executor::new(FnCost(&problem.0), solver)
            .configure(|s| s.max_iters(iters))
            .run()
        else {
            break;
        };
        let st = res.state();
        let fx = st.get_best_cost();
        let improved = fx < fbest - 1e-12 * scale.max(1.0);
        if fx < fbest {
            if let Some(p) = st.get_best_param() {
                best = p.clone();
                fbest = fx;
            }
        }
        if !improved {
            break;
        }
    }
    (best, fbest)
}

const PENALTY_WEIGHTS: [f64; 3] = [1e4, 1e6, 1e8];

fn optimize_from(model: &TreeModel, x0: Vec<f64>, c1: Option<f64>, iters: u64) -> (Vec<f64>, f64) {
    let mut x = x0;
    let mut fx = f64::INFINITY;
    for w in PENALTY_WEIGHTS {
        let f = |p: &[f64]| model.objective(&model.eval(TreeVars::from_slice(model.shape, p), c1), w);
        let r = local_search(f, x, model.m, iters);
        x = r.0;
        fx = r.1;
    }
    (x, fx)
}

/// Time slack, relative to `m`, granted to the memory pass of the
/// sequential-access shape. Its time optimum is degenerate: within `1e-4 m` of
/// the optimal time the memory exponent still drops by about `0.004 m`.
pub const MEMORY_PASS_TIME_SLACK: f64 = 1e-4;

/// Second pass for the sequential-access shape: minimize memory with the max
/// step held below `time_cap` (linear exact penalty).
fn minimize_memory(model: &TreeModel, x0: Vec<f64>, time_cap: f64, iters: u64) -> (Vec<f64>, f64) {
    let mut x = x0;
    let mut fx = f64::INFINITY;
    for w in PENALTY_WEIGHTS {
        let f = |p: &[f64]| {
            let e = model.eval(TreeVars::from_slice(model.shape, p), None);
            let over = (e.max_step() - time_cap).max(0.0);
            let g = e.memory + 1e2 * over + w * (e.penalty + over * over) / model.m;
            if g.is_finite() {
                g
            } else {
                1e12
            }
        };
        let r = local_search(f, x, model.m, iters);
        x = r.0;
        fx = r.1;
    }
    (x, fx)
}

/// Picks the lowest cost, then the lexicographically smallest point.
fn pick_best(results: Vec<(Vec<f64>, f64)>) -> (Vec<f64>, f64) {
    results
        .into_iter()
        .filter(|r| r.1.is_finite())
        .min_by(|a, b| {
            a.1.total_cmp(&b.1).then_with(|| {
                a.0.iter()
                    .zip(&b.0)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        })
        .unwrap_or((Vec::new(), f64::INFINITY))
}

/// Best point of a batch of local searches; for the sequential-access shape the
/// near-optimal points are then pushed towards lower memory.
fn finish(model: &TreeModel, results: Vec<(Vec<f64>, f64)>, iters: u64) -> Vec<f64> {
    let (x, fx) = pick_best(results.clone());
    if x.is_empty() || model.shape == TreeShape::Qracm {
        return x;
    }
    let time = model.eval(TreeVars::from_slice(model.shape, &x), None).max_step();
    let cap = time + MEMORY_PASS_TIME_SLACK * model.m;
    let mut starts: Vec<Vec<f64>> = results
        .into_iter()
        .filter(|r| r.1 <= fx + 1e-2 * model.m)
        .map(|r| r.0)
        .collect();
    starts.push(x.clone());
    let second: Vec<(Vec<f64>, f64)> = starts
        .into_par_iter()
        .map(|x0| minimize_memory(model, x0, cap, iters))
        .collect();
    let (y, _) = pick_best(second);
    if y.is_empty() {
        x
    } else {
        y
    }
}

fn random_start(shape: TreeShape, m: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut dirichlet = |k: usize| -> Vec<f64> {
        let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s * m / 2.0).collect()
    };
    let w = dirichlet(match shape {
        TreeShape::Qracm => 4,
        TreeShape::NoQracm => 3,
    });
    let mut rng = rng_from_seed(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut u = |a: f64, b: f64| a + (b - a) * rng.random::<f64>();
    let v = match shape {
        TreeShape::Qracm => TreeVars {
            r: u(0.3, 0.7),
            w13: w[0],
            w03: w[1],
            w12: w[2],
            c02: u(0.1, 0.3) * m,
            c12: u(0.1, 0.3) * m,
            s13: u(0.0, 0.01) * m,
            s03: u(0.0, 0.01) * m,
            s23: u(0.0, 0.01) * m,
            s43: u(0.0, 0.01) * m,
            ..Default::default()
        },
        TreeShape::NoQracm => TreeVars {
            w02: w[0],
            w12: w[1],
            c02: u(0.1, 0.4) * m,
            c12: u(0.05, 0.3) * m,
            s23: u(0.0, 0.02) * m,
            s43: u(0.0, 0.02) * m,
            ..Default::default()
        },
    };
    v.to_vec(shape)
}

const ASYMPTOTIC_STARTS: u64 = 48;
const EXACT_RANDOM_STARTS: u64 = 2;
const EXACT_WARM_STARTS: u64 = 6;
const NM_ITERS: u64 = 20_000;
const EXACT_NM_ITERS: u64 = 6_000;

fn check(model: &TreeModel, e: &Eval) -> Result<()> {
    if !e.max_step().is_finite() || e.violation > 1e-6 * model.m.max(1.0) {
        return Err(Error::NoConvergence(format!(
            "best point {:?}: max step {:.6}, largest constraint violation {:.3e}",
            e.v,
            e.max_step(),
            e.violation
        )));
    }
    Ok(())
}

/// Asymptotic optimum of a tree shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticTree {
    pub shape: TreeShape,
    /// Time exponent divided by `m`.
    pub time: f64,
    /// Memory exponent divided by `m`.
    pub memory: f64,
    pub solution: TreeSolution,
}

fn optimize_asymptotic_uncached(shape: TreeShape) -> Result<AsymptoticTree> {
    let model = TreeModel::asymptotic(shape);
    let results: Vec<(Vec<f64>, f64)> = (0..ASYMPTOTIC_STARTS)
        .into_par_iter()
        .map(|i| optimize_from(&model, random_start(shape, 1.0, 1000 + i), None, NM_ITERS))
        .collect();
    let x = finish(&model, results, NM_ITERS);
    if x.is_empty() {
        return Err(Error::NoConvergence("no finite starting point".into()));
    }
    let e = model.eval(TreeVars::from_slice(shape, &x), None);
    check(&model, &e)?;
    Ok(AsymptoticTree {
        shape,
        time: e.max_step(),
        memory: e.memory,
        solution: model.solution(&e),
    })
}

/// Optimizes the relative parameters of a tree shape (cached per shape).
pub fn optimize_tree_asymptotic(shape: TreeShape) -> Result<AsymptoticTree> {
    static QRACM: OnceLock<Result<AsymptoticTree>> = OnceLock::new();
    static NO_QRACM: OnceLock<Result<AsymptoticTree>> = OnceLock::new();
    let cell = match shape {
        TreeShape::Qracm => &QRACM,
        TreeShape::NoQracm => &NO_QRACM,
    };
    cell.get_or_init(|| optimize_asymptotic_uncached(shape)).clone()
}

/// Options of the exact optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactOptions {
    /// Required `log2 |L^0|`.
    pub root_size_log2: f64,
    /// Count the `pi/2` constant of each Grover search in the total.
    pub grover_constant: bool,
    /// Count `m` arithmetic operations per sample in the total.
    pub ops_per_sample: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            root_size_log2: 2.0,
            grover_constant: true,
            ops_per_sample: false,
        }
    }
}

/// Integer parameters chosen by the rounding step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundedParams {
    /// Support of `L_1^3` (QRACM shape only).
    pub support13: i64,
    pub w13: i64,
    pub w03: i64,
    pub w02: i64,
    /// Leaf weight of `L_2^3`, `L_3^3`.
    pub left_leaf_weight: i64,
    /// Leaf weight of `L_4^3` to `L_7^3`.
    pub right_leaf_weight: i64,
    pub c02: i64,
    pub c12: i64,
    pub c1: i64,
}

/// Exact optimum at a concrete `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactTree {
    pub m: u32,
    pub shape: TreeShape,
    pub options: ExactOptions,
    /// Real-valued optimum.
    pub continuous: TreeSolution,
    pub rounded_params: RoundedParams,
    pub rounded: TreeSolution,
    /// `log2(1 / p_m)` for guessing the weight of the solution.
    pub log2_inv_pm: f64,
    /// `log2` of the full cost: summed rounded steps, weight guessing and toggles.
    pub total: f64,
}

fn optimize_continuous(shape: TreeShape, m: u32, root: f64) -> Result<(TreeModel, Eval)> {
    let mf = m as f64;
    let model = TreeModel::exact(shape, mf, root);
    let asym = optimize_tree_asymptotic(shape)?;
    let mut base = asym.solution.vars.to_vec(shape);
    for (i, v) in base.iter_mut().enumerate() {
        if !(shape == TreeShape::Qracm && i == 0) {
            *v *= mf;
        }
    }
    let starts: Vec<Vec<f64>> = (0..EXACT_WARM_STARTS)
        .map(|i| {
            let mut rng = rng_from_seed(7000 + i);
            base.iter()
                .map(|&b| if i == 0 { b } else { b * (1.0 + 0.04 * (rng.random::<f64>() - 0.5)) })
                .collect()
        })
        .chain((0..EXACT_RANDOM_STARTS).map(|i| random_start(shape, mf, 9000 + i)))
        .collect();
    let results: Vec<(Vec<f64>, f64)> = starts
        .into_par_iter()
        .map(|x0| optimize_from(&model, x0, None, EXACT_NM_ITERS))
        .collect();
    let x = finish(&model, results, EXACT_NM_ITERS);
    if x.is_empty() {
        return Err(Error::NoConvergence("no finite starting point".into()));
    }
    let e = model.eval(TreeVars::from_slice(shape, &x), None);
    check(&model, &e)?;
    Ok((model, e))
}

fn floor_ceil(x: f64) -> [i64; 2] {
    let f = x.floor() as i64;
    [f, f + 1]
}

fn around(x: f64) -> [i64; 4] {
    let f = x.floor() as i64;
    [f - 1, f, f + 1, f + 2]
}

/// Integer weights and conditions around the continuous optimum; `c1` is left at
/// zero and chosen per candidate afterwards.
fn rounding_candidates(shape: TreeShape, m: u32, e: &Eval) -> Vec<RoundedParams> {
    let mf = m as f64;
    let lo = (m / 2) as i64;
    let hi = m.div_ceil(2) as i64;
    let v = e.v;
    let ok = |total: i64| total == lo || total == hi;
    let mut weights = Vec::new();
    match shape {
        TreeShape::Qracm => {
            for w13 in around(v.w13) {
                for w03 in around(v.w03) {
                    for a in around(v.w12 / 2.0) {
                        for b in around(e.w11 / 4.0) {
                            if w13 > 0 && w03 > 0 && a > 0 && b > 0 && ok(w13 + w03 + 2 * a + 4 * b) {
                                weights.push((w13, w03, a, b));
                            }
                        }
                    }
                }
            }
        }
        TreeShape::NoQracm => {
            for w02 in around(v.w02) {
                for a in around(v.w12 / 2.0) {
                    for b in around(e.w11 / 4.0) {
                        if w02 > 0 && a > 0 && b > 0 && ok(w02 + 2 * a + 4 * b) {
                            weights.push((0, w02, a, b));
                        }
                    }
                }
            }
        }
    }
    let supports: Vec<i64> = match shape {
        TreeShape::Qracm => floor_ceil(v.r * mf).to_vec(),
        TreeShape::NoQracm => vec![0],
    };
    let mut out = Vec::new();
    for &(w13, w03, a, b) in &weights {
        for &s in &supports {
            for c02 in floor_ceil(v.c02) {
                for c12 in floor_ceil(v.c12) {
                    let (w13, w03, w02) = match shape {
                        TreeShape::Qracm => (w13, w03, w13 + w03),
                        TreeShape::NoQracm => (0, 0, w03),
                    };
                    out.push(RoundedParams {
                        support13: s,
                        w13,
                        w03,
                        w02,
                        left_leaf_weight: a,
                        right_leaf_weight: b,
                        c02,
                        c12,
                        c1: 0,
                    });
                }
            }
        }
    }
    out
}

/// Evaluates an integer candidate: picks `c1` and re-optimizes the leaf truncations.
/// Returns the completed parameters, the evaluation and the ranking key.
fn evaluate_rounded(
    base: &TreeModel,
    rp: &RoundedParams,
    cont: &TreeVars,
    cont_c1: f64,
) -> Option<(RoundedParams, Eval, f64)> {
    let total = rp.w02 + 2 * rp.left_leaf_weight + 4 * rp.right_leaf_weight;
    let model = TreeModel {
        weight: total as f64,
        ..*base
    };
    let fixed = TreeVars {
        r: rp.support13 as f64 / base.m,
        w13: rp.w13 as f64,
        w03: rp.w03 as f64,
        w02: rp.w02 as f64,
        w12: 2.0 * rp.left_leaf_weight as f64,
        c02: rp.c02 as f64,
        c12: rp.c12 as f64,
        ..Default::default()
    };
    let with = |s: &[f64]| TreeVars {
        s13: s[0],
        s03: s[1],
        s23: s[2],
        s43: s[3],
        ..fixed
    };
    // Largest c1 that keeps the root above its floor with untruncated leaves.
    let k = model.eval(with(&[0.0; 4]), Some(0.0)).root;
    if !k.is_finite() {
        return None;
    }
    let top = (k - base.root_floor).floor() as i64;
    let mut best: Option<(RoundedParams, Eval, f64)> = None;
    let near = cont_c1.floor() as i64;
    let mut c1s: Vec<i64> = (top - 3..=top).chain(near - 1..=near + 2).collect();
    c1s.sort_unstable_by(|a, b| b.cmp(a));
    c1s.dedup();
    for c1 in c1s {
        if c1 < rp.c02.max(rp.c12) || c1 as f64 > base.m {
            continue;
        }
        let c1f = Some(c1 as f64);
        let mut e: Option<Eval> = None;
        for start in [vec![cont.s13, cont.s03, cont.s23, cont.s43], vec![0.0; 4]] {
            let mut x = start;
            for w in PENALTY_WEIGHTS {
                let f = |s: &[f64]| model.objective(&model.eval(with(s), c1f), w);
                x = local_search(f, x, base.m, 2_000).0;
            }
            let cand = model.eval(with(&x), c1f);
            let better = e.as_ref().is_none_or(|b| {
                model.objective(&cand, PENALTY_WEIGHTS[2]) < model.objective(b, PENALTY_WEIGHTS[2])
            });
            if better {
                e = Some(cand);
            }
        }
        let e = e?;
        if e.violation > 1e-6 * base.m || !e.max_step().is_finite() {
            continue;
        }
        let key = e.max_step();
        if best.as_ref().is_none_or(|b| rank(key, e.root, b.2, b.1.root).is_lt()) {
            best = Some((RoundedParams { c1, ..*rp }, e, key));
        }
    }
    best
}

/// Smallest cost first, then the biggest expected root list.
fn rank(ka: f64, root_a: f64, kb: f64, root_b: f64) -> std::cmp::Ordering {
    let (ka, kb) = ((ka * 1e9).round(), (kb * 1e9).round());
    ka.total_cmp(&kb).then(root_b.total_cmp(&root_a))
}

/// Optimizes the tree for a concrete `m` with real-valued binomials, then rounds
/// weights and conditions to integers.
pub fn optimize_tree_exact(m: u32, shape: TreeShape, options: ExactOptions) -> Result<ExactTree> {
    if !(64..=2048).contains(&m) {
        return invalid("exact tree optimization needs 64 <= m <= 2048");
    }
    if !options.root_size_log2.is_finite() || options.root_size_log2 < 0.0 {
        return invalid("root size must be a non-negative log2 value");
    }
    let (model, cont) = optimize_continuous(shape, m, options.root_size_log2)?;
    let cands = rounding_candidates(shape, m, &cont);
    let evaluated: Vec<(RoundedParams, Eval, f64)> =
        cands.par_iter().filter_map(|rp| evaluate_rounded(&model, rp, &cont.v, cont.c1)).collect();
    let (rounded_params, re, _) = evaluated
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| rank(a.2, a.1.root, b.2, b.1.root).then(i.cmp(j)))
        .map(|(_, r)| r)
        .ok_or_else(|| Error::NoConvergence("no feasible integer rounding".into()))?;
    let rounded_model = TreeModel {
        weight: re.w11 + re.w01,
        ..model
    };
    let rounded = rounded_model.solution(&re);
    let log2_inv_pm = -weight_guess_probability(m as usize).log2();
    let mut total = rounded.total_steps() + log2_inv_pm;
    if options.grover_constant {
        total += (PI / 2.0).log2();
    }
    if options.ops_per_sample {
        total += (m as f64).log2();
    }
    Ok(ExactTree {
        m,
        shape,
        options,
        continuous: model.solution(&cont),
        rounded_params,
        rounded,
        log2_inv_pm,
        total,
    })
}

/// Least-squares line `total(m) = slope m + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub shape: TreeShape,
    pub slope: f64,
    pub intercept: f64,
    /// `(m, total)` points the line was fitted to.
    pub points: Vec<(u32, f64)>,
}

impl LineFit {
    /// `n` where the fitted cost meets `n/2 + grover_offset`, the cost of
    /// a plain Grover search over the `2^n` candidates.
    pub fn crossover(&self, grover_offset: f64) -> f64 {
        (self.intercept - grover_offset) / (0.5 - self.slope)
    }
}

/// Default sample points of the fits: `m = 128, 192, ..., 1024`.
pub fn default_fit_range() -> Vec<u32> {
    (128..=1024).step_by(64).collect()
}

/// Fits a line through exact totals at the given `m` values.
pub fn fit_cost_line(shape: TreeShape, ms: &[u32], options: ExactOptions) -> Result<LineFit> {
    if ms.len() < 2 {
        return invalid("a fit needs at least two values of m");
    }
    let mut points = Vec::with_capacity(ms.len());
    for &m in ms {
        points.push((m, optimize_tree_exact(m, shape, options)?.total));
    }
    let (slope, intercept) = least_squares(&points);
    Ok(LineFit {
        shape,
        slope,
        intercept,
        points,
    })
}

fn least_squares(points: &[(u32, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
