//! Phase-vector combination: CNOT pairing, Regev's m-fold routine, the collimation
//! routine and a depth-first collimation sieve producing partially collimated labels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dcp_core::{addmod, submod, DcpInstance, PhaseVector};
use crate::error::{invalid, Error, Result};

/// Parameters of one collimation step: input labels are `< 2^a`, output labels `< 2^(a-r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollimationParams {
    pub a: u32,
    pub r: u32,
    pub max_list: usize,
}

impl CollimationParams {
    pub fn new(a: u32, r: u32, max_list: usize) -> Result<Self> {
        if r < 1 || r > a || a > 62 {
            return invalid(format!("need 1 <= r <= a <= 62, got a={a}, r={r}"));
        }
        if max_list < 2 {
            return invalid("max_list must be at least 2");
        }
        Ok(CollimationParams { a, r, max_list })
    }
}

fn require_single(pv: &PhaseVector) -> Result<()> {
    if pv.is_single() {
        Ok(())
    } else {
        Err(Error::Precondition("expected a single-label phase vector".into()))
    }
}

/// CNOT-combines `|psi_p>` and `|psi_q>`. Returns `(|psi_(p-q)>, 0)` or
/// `(|psi_(p+q)>, 1)`, each with probability 1/2. The `w^(s q)` factor picked up by the
/// difference branch is global and dropped.
pub fn combine_pair_cnot<R: Rng + ?Sized>(
    p: &PhaseVector,
    q: &PhaseVector,
    rng: &mut R,
) -> Result<(PhaseVector, u8)> {
    require_single(p)?;
    require_single(q)?;
    let n = p.modulus();
    if q.modulus() != n {
        return invalid("moduli differ");
    }
    let (kp, op) = (p.labels()[0], p.offsets()[0]);
    let (kq, oq) = (q.labels()[0], q.offsets()[0]);
    if rng.random::<bool>() {
        let pv = PhaseVector::from_parts_unchecked(vec![submod(kp, kq, n)], vec![submod(op, oq, n)], n);
        Ok((pv, 0))
    } else {
        let pv = PhaseVector::from_parts_unchecked(vec![addmod(kp, kq, n)], vec![addmod(op, oq, n)], n);
        Ok((pv, 1))
    }
}

/// Default pool size for [`kuperberg1_find_lsb`] at `n` bits.
pub fn kuperberg1_default_pool(bits: u32) -> usize {
    let (r, stages) = kuperberg1_shape(bits);
    1usize << (2 * stages + r + 3).min(26)
}

fn kuperberg1_shape(bits: u32) -> (u32, u32) {
    let todo = bits.saturating_sub(1);
    if todo == 0 {
        return (1, 0);
    }
    let r = ((todo as f64).sqrt().ceil() as u32).max(1);
    (r, todo.div_ceil(r))
}

/// Kuperberg's first algorithm for `N = 2^n`: repeatedly pairs labels that agree on
/// their next low bits and keeps the difference branch until a label `N/2` appears,
/// whose Hadamard measurement is `lsb(s)`.
pub fn kuperberg1_find_lsb<R: Rng + ?Sized>(
    inst: &mut DcpInstance,
    pool_size: Option<usize>,
    rng: &mut R,
) -> Result<u8> {
    if !inst.is_power_of_two() {
        return invalid("Kuperberg's first algorithm needs a power-of-two group order");
    }
    let n = inst.modulus();
    let bits = inst.bits();
    let (r, _) = kuperberg1_shape(bits);
    let pool_size = pool_size.unwrap_or_else(|| kuperberg1_default_pool(bits));
    let mut pool: Vec<PhaseVector> = (0..pool_size)
        .map(|_| inst.sample_phase_vector())
        .filter(|pv| pv.labels()[0] != 0)
        .collect();
    let mut zeros = 0u32;
    while zeros < bits - 1 {
        let step = r.min(bits - 1 - zeros);
        let mask = (1u64 << step) - 1;
        let mut buckets: Vec<Vec<PhaseVector>> = vec![Vec::new(); 1 << step];
        for pv in pool {
            buckets[((pv.labels()[0] >> zeros) & mask) as usize].push(pv);
        }
        let mut next = Vec::new();
        for bucket in buckets {
            for pair in bucket.chunks_exact(2) {
                let (out, branch) = combine_pair_cnot(&pair[0], &pair[1], rng)?;
                if branch == 0 && out.labels()[0] != 0 {
                    next.push(out);
                }
            }
        }
        pool = next;
        zeros += step;
        if pool.is_empty() {
            return Err(Error::PoolExhausted);
        }
    }
    let target = pool
        .iter()
        .find(|pv| pv.labels()[0] == n / 2)
        .ok_or(Error::PoolExhausted)?;
    inst.measure_hadamard(target, rng)
}

/// Regev's combination of `m` qubits: measures `V = floor(<b,k>/B)` for the tensor
/// state and keeps the two lexicographically smallest `b` with that value. Returns
/// `None` when only one `b` matches.
pub fn regev_combine<R: Rng + ?Sized>(
    pvs: &[PhaseVector],
    bound: u64,
    rng: &mut R,
) -> Result<Option<PhaseVector>> {
    let m = pvs.len();
    if m < 2 {
        return invalid("regev_combine needs at least two phase vectors");
    }
    if m > 24 {
        return invalid("regev_combine enumerates 2^m vectors; m must be at most 24");
    }
    if bound < 1 {
        return invalid("B must be at least 1");
    }
    for pv in pvs {
        require_single(pv)?;
    }
    let n = pvs[0].modulus();
    let ks: Vec<u64> = pvs.iter().map(|p| p.labels()[0]).collect();
    let os: Vec<u64> = pvs.iter().map(|p| p.offsets()[0]).collect();
    // b_1 is the most significant coordinate, so increasing integers are lexicographic.
    let sum = |b: u64| -> u128 {
        (0..m)
            .filter(|&i| b >> (m - 1 - i) & 1 == 1)
            .map(|i| ks[i] as u128)
            .sum()
    };
    let offset = |b: u64| -> u64 {
        (0..m)
            .filter(|&i| b >> (m - 1 - i) & 1 == 1)
            .fold(0, |acc, i| addmod(acc, os[i], n))
    };
    let star = rng.random_range(0..1u64 << m);
    let v = sum(star) / bound as u128;
    let mut found = Vec::with_capacity(2);
    for b in 0..1u64 << m {
        if sum(b) / bound as u128 == v {
            found.push(b);
            if found.len() == 2 {
                break;
            }
        }
    }
    if found.len() < 2 {
        return Ok(None);
    }
    let labels = found.iter().map(|&b| (sum(b) % n as u128) as u64).collect();
    let offsets = found.iter().map(|&b| offset(b)).collect();
    Ok(Some(PhaseVector::from_parts_unchecked(labels, offsets, n)))
}

/// Interval collimation on the keys `k mod key_mod` (or `k` itself). The pair sum of
/// keys is bucketed by `floor(F / width)`; the surviving labels are shifted by
/// `V * width` (a global phase), so their keys end up below `width`.
///
/// Returns `None` when the output would exceed `max_list` labels.
pub fn collimate_interval<R: Rng + ?Sized>(
    pv1: &PhaseVector,
    pv2: &PhaseVector,
    key_mod: Option<u64>,
    bound: u64,
    width: u64,
    max_list: usize,
    rng: &mut R,
) -> Result<Option<PhaseVector>> {
    let n = pv1.modulus();
    if pv2.modulus() != n {
        return invalid("moduli differ");
    }
    if width == 0 {
        return invalid("interval width must be positive");
    }
    if let Some(km) = key_mod {
        if km == 0 || n % km != 0 {
            return invalid("key modulus must divide the group order");
        }
    }
    let key = |k: u64| key_mod.map_or(k, |km| k % km);
    for &k in pv1.labels().iter().chain(pv2.labels()) {
        if key(k) >= bound {
            return Err(Error::LabelBound {
                label: k,
                bound,
            });
        }
    }
    let (l1, l2) = (pv1.len(), pv2.len());
    let i0 = rng.random_range(0..l1);
    let j0 = rng.random_range(0..l2);
    let v = (key(pv1.labels()[i0]) + key(pv2.labels()[j0])) / width;
    let lo = v * width;
    let hi = lo + width;

    let mut order: Vec<usize> = (0..l2).collect();
    order.sort_by_key(|&j| (key(pv2.labels()[j]), j));
    let keys2: Vec<u64> = order.iter().map(|&j| key(pv2.labels()[j])).collect();

    let mut labels = Vec::new();
    let mut offsets = Vec::new();
    let shift = (lo as u128 % n as u128) as u64;
    for i in 0..l1 {
        let ki = key(pv1.labels()[i]);
        let from = lo.saturating_sub(ki);
        if hi <= ki {
            continue;
        }
        let to = hi - ki;
        let a = keys2.partition_point(|&x| x < from);
        let b = keys2.partition_point(|&x| x < to);
        for &j in &order[a..b] {
            let total = addmod(pv1.labels()[i], pv2.labels()[j], n);
            labels.push(submod(total, shift, n));
            offsets.push(addmod(pv1.offsets()[i], pv2.offsets()[j], n));
            if labels.len() > max_list {
                return Ok(None);
            }
        }
    }
    debug_assert!(!labels.is_empty());
    Ok(Some(PhaseVector::from_parts_unchecked(labels, offsets, n)))
}

/// The collimation routine on labels `< 2^a`: keeps the pairs with
/// `floor((k_i + k'_j) / 2^(a-r)) = V` for a measured `V` and stores the reduced labels
/// `k_i + k'_j - V 2^(a-r) < 2^(a-r)`. Returns `None` if the list is discarded for
/// exceeding `max_list`.
pub fn collimate<R: Rng + ?Sized>(
    pv1: &PhaseVector,
    pv2: &PhaseVector,
    params: CollimationParams,
    rng: &mut R,
) -> Result<Option<PhaseVector>> {
    let bound = 1u64 << params.a;
    let width = 1u64 << (params.a - params.r);
    collimate_interval(pv1, pv2, None, bound, width, params.max_list, rng)
}

/// One level of the depth-first sieve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SieveLevel {
    /// log2 of the key bound entering this level.
    pub a: f64,
    /// log2 of the bound reduction planned at this level.
    pub r: f64,
    /// log2 of the list size aimed for after the merge.
    pub target_log_size: f64,
}

/// Shape of the depth-first collimation tree used by [`sieve_to_partial`].
///
/// Interval widths are chosen at each merge from the actual child list sizes so the
/// output size tracks `target_log_size`; the last level always uses width 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveSchedule {
    pub bits: u32,
    pub levels: Vec<SieveLevel>,
    pub leaf_list_size: usize,
    pub discard_rate: f64,
    pub adjust_c: f64,
    pub root_log_size: f64,
    pub max_list_factor: f64,
    pub retry_factor: u32,
}

impl SieveSchedule {
    /// `c = log2(1 + sqrt(3 / (2 pi)))`.
    pub fn default_adjust_c() -> f64 {
        (1.0 + (3.0 / (2.0 * std::f64::consts::PI)).sqrt()).log2()
    }

    /// Plans a tree collimating `bits` low bits: lists double in size at each level
    /// until the final merge can zero the remaining key range with enough labels left.
    pub fn for_bits(bits: u32) -> Self {
        Self::plan(bits, Self::default_adjust_c(), 2.0)
    }

    pub fn plan(bits: u32, adjust_c: f64, root_log_size: f64) -> Self {
        let mut levels = Vec::new();
        let mut log_size = 1.0f64;
        let mut a = bits as f64;
        let mut j = 1;
        while bits > 0 {
            let root = 2.0 * log_size - adjust_c - a;
            if root >= root_log_size || a <= 0.0 {
                levels.push(SieveLevel {
                    a,
                    r: a,
                    target_log_size: root,
                });
                break;
            }
            let target = (j + 1) as f64;
            let w = (a + target - 2.0 * log_size + adjust_c).clamp(0.0, a + 1.0);
            let achieved = 2.0 * log_size - adjust_c - (a - w);
            levels.push(SieveLevel {
                a,
                r: a - w,
                target_log_size: achieved,
            });
            log_size = achieved;
            a = w;
            j += 1;
        }
        SieveSchedule {
            bits,
            levels,
            leaf_list_size: 2,
            discard_rate: 0.02,
            adjust_c,
            root_log_size,
            max_list_factor: 16.0,
            retry_factor: 8,
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Nominal number of oracle queries per attempt.
    pub fn leaves(&self) -> u64 {
        1 << self.depth()
    }
}

/// What the final two labels must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartialTarget {
    /// Labels agree on the low `i` bits.
    Agree,
    /// Labels agree on the low `i - 1` bits and differ on bit `i`, so their
    /// difference is `2^(i-1) mod 2^i`.
    PowerOfTwo,
}

struct SieveCtx<'a> {
    schedule: &'a SieveSchedule,
    key_mod: u64,
}

fn build_node<R: Rng + ?Sized>(
    inst: &mut DcpInstance,
    ctx: &SieveCtx<'_>,
    level: usize,
    rng: &mut R,
) -> Result<(PhaseVector, u64)> {
    if level == 0 {
        let pv = inst.sample_phase_vector().to_multi();
        return Ok((pv, ctx.key_mod));
    }
    let sched = ctx.schedule;
    let is_root = level == sched.depth();
    let lvl = sched.levels[level - 1];
    let budget = sched.retry_factor.max(1);
    for _ in 0..budget {
        let (left, bl) = build_node(inst, ctx, level - 1, rng)?;
        let (right, br) = build_node(inst, ctx, level - 1, rng)?;
        let bound = bl.max(br);
        let width = if is_root {
            1
        } else {
            let pairs = (left.len() * right.len()) as f64;
            let w = bound as f64 * 2f64.powf(lvl.target_log_size + sched.adjust_c) / pairs;
            (w.round() as u64).clamp(1, bl + br - 1)
        };
        let cap = if is_root {
            usize::MAX
        } else {
            (2f64.powf(lvl.target_log_size) * sched.max_list_factor).ceil() as usize
        };
        let out = collimate_interval(&left, &right, Some(ctx.key_mod), bound, width, cap.max(2), rng)?;
        match out {
            None => continue,
            Some(pv) if !is_root && pv.len() < 2 => continue,
            Some(pv) => {
                if pv.labels().iter().any(|&k| k % ctx.key_mod >= width) {
                    return Err(Error::LabelBound {
                        label: *pv.labels().iter().max().unwrap(),
                        bound: width,
                    });
                }
                return Ok((pv, width));
            }
        }
    }
    Err(Error::BudgetExhausted(budget as u64))
}

/// Projects a multi-label vector onto a pair of indices. Indices are paired up (for
/// `PowerOfTwo`, each pair has one label with bit `bit` clear and one with it set) and
/// the pair index is measured; landing on an unpaired index fails.
fn extract_pair<R: Rng + ?Sized>(
    pv: &PhaseVector,
    target: PartialTarget,
    bit: u32,
    rng: &mut R,
) -> Option<PhaseVector> {
    let l = pv.len();
    if l < 2 {
        return None;
    }
    let pairs: Vec<(usize, usize)> = match target {
        PartialTarget::Agree => (0..l / 2).map(|j| (2 * j, 2 * j + 1)).collect(),
        PartialTarget::PowerOfTwo => {
            let (zero, one): (Vec<usize>, Vec<usize>) =
                (0..l).partition(|&i| pv.labels()[i] >> bit & 1 == 0);
            zero.into_iter().zip(one).collect()
        }
    };
    let u = rng.random_range(0..l);
    let &(a, b) = pairs.iter().find(|&&(a, b)| a == u || b == u)?;
    Some(PhaseVector::from_parts_unchecked(
        vec![pv.labels()[a], pv.labels()[b]],
        vec![pv.offsets()[a], pv.offsets()[b]],
        pv.modulus(),
    ))
}

/// Builds a two-label vector whose labels agree on the low `i` bits
/// ([`PartialTarget::Agree`]) or whose difference is `2^(i-1) mod 2^i`
/// ([`PartialTarget::PowerOfTwo`]). `N` must be a power of two. With nothing to
/// collimate the result is a fresh oracle sample in two-label form `[0, k]`.
pub fn sieve_to_partial<R: Rng + ?Sized>(
    inst: &mut DcpInstance,
    i: u32,
    target: PartialTarget,
    schedule: Option<&SieveSchedule>,
    rng: &mut R,
) -> Result<PhaseVector> {
    if !inst.is_power_of_two() {
        return invalid("the low-bit sieve needs a power-of-two group order");
    }
    if i > inst.bits() {
        return invalid(format!("cannot collimate {i} bits of a {}-bit group", inst.bits()));
    }
    if i == 0 {
        return Ok(inst.sample_phase_vector().to_multi());
    }
    let bits = match target {
        PartialTarget::Agree => i,
        PartialTarget::PowerOfTwo => i - 1,
    };
    let owned;
    let schedule = match schedule {
        Some(s) if s.bits == bits => s,
        Some(_) => return invalid("schedule planned for a different number of bits"),
        None => {
            owned = SieveSchedule::for_bits(bits);
            &owned
        }
    };
    let ctx = SieveCtx {
        schedule,
        key_mod: 1u64 << bits,
    };
    let budget = 4 * schedule.retry_factor.max(1) as u64;
    for _ in 0..budget {
        let (root, _) = build_node(inst, &ctx, schedule.depth(), rng)?;
        if let Some(pair) = extract_pair(&root, target, bits, rng) {
            return Ok(pair);
        }
    }
    Err(Error::BudgetExhausted(budget))
}

/// Labels arranged in the triangular configuration used by the interpolation
/// algorithm, with their bit matrix (row `i`, column `j` is bit `j` of `k_i`, LSB first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigMatrix {
    pub m: usize,
    pub t: usize,
    pub vectors: Vec<PhaseVector>,
    pub bits: Vec<Vec<u8>>,
}

impl ConfigMatrix {
    pub fn labels(&self) -> Vec<u64> {
        self.vectors.iter().map(|p| p.labels()[0]).collect()
    }
}

/// Checks the triangular shape: for `i <= m - t`, `k_i` has bit `i` set and bits
/// `1..i-1` clear; the remaining rows have bits `1..m-t` clear (1-indexed bits).
pub fn is_configuration(labels: &[u64], t: usize) -> bool {
    let m = labels.len();
    if t < 1 || t > m {
        return false;
    }
    let e = m - t;
    labels.iter().enumerate().all(|(row, &k)| {
        if row < e {
            k & ((1u64 << (row + 1)) - 1) == 1u64 << row
        } else {
            k & ((1u64 << e) - 1) == 0
        }
    })
}

/// Produces `m` qubits in the triangular configuration by sieving with increasing
/// collimation. With `t = m` no sieving happens.
pub fn build_config_matrix<R: Rng + ?Sized>(
    inst: &mut DcpInstance,
    m: usize,
    t: usize,
    rng: &mut R,
) -> Result<ConfigMatrix> {
    let n = inst.bits() as usize;
    if t < 1 || t > m || m > n {
        return invalid(format!("need 1 <= t <= m <= n, got t={t}, m={m}, n={n}"));
    }
    if !inst.is_power_of_two() {
        return invalid("the configuration needs a power-of-two group order");
    }
    let e = m - t;
    let mut schedules: Vec<Option<SieveSchedule>> = vec![None; e + 1];
    let mut vectors = Vec::with_capacity(m);
    for row in 1..=m {
        let pv = if row <= e {
            let sched = schedules[row - 1].get_or_insert_with(|| SieveSchedule::for_bits(row as u32 - 1));
            let sched = sched.clone();
            sieve_to_partial(inst, row as u32, PartialTarget::PowerOfTwo, Some(&sched), rng)?
        } else if e == 0 {
            inst.sample_phase_vector()
        } else {
            let sched = schedules[e].get_or_insert_with(|| SieveSchedule::for_bits(e as u32));
            let sched = sched.clone();
            sieve_to_partial(inst, e as u32, PartialTarget::Agree, Some(&sched), rng)?
        };
        vectors.push(pv.to_qubit()?);
    }
    let bits = vectors
        .iter()
        .map(|pv| (0..n).map(|j| (pv.labels()[0] >> j & 1) as u8).collect())
        .collect();
    let cm = ConfigMatrix { m, t, vectors, bits };
    debug_assert!(is_configuration(&cm.labels(), t));
    Ok(cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcp_core::rng_from_seed;

    #[test]
    fn cnot_branches() {
        let mut rng = rng_from_seed(3);
        let p = PhaseVector::single(6, 16);
        let q = PhaseVector::single(2, 16);
        let mut diff = 0;
        for _ in 0..2000 {
            let (out, bit) = combine_pair_cnot(&p, &q, &mut rng).unwrap();
            let k = out.labels()[0];
            if bit == 0 {
                assert_eq!(k, 4);
                diff += 1;
            } else {
                assert_eq!(k, 8);
            }
        }
        assert!((900..1100).contains(&diff));
        let (out, bit) = combine_pair_cnot(&p, &p, &mut rng).unwrap();
        assert_eq!(out.labels()[0], if bit == 0 { 0 } else { 12 });
    }

    #[test]
    fn regev_degenerate_all_zero() {
        let mut rng = rng_from_seed(0);
        let pvs: Vec<_> = (0..4).map(|_| PhaseVector::single(0, 16)).collect();
        let out = regev_combine(&pvs, 1, &mut rng).unwrap().unwrap();
        assert_eq!(out.labels(), &[0, 0]);
    }

    #[test]
    fn collimate_single_pair() {
        let mut rng = rng_from_seed(0);
        let p = PhaseVector::new(vec![13], vec![0], 64).unwrap();
        let q = PhaseVector::new(vec![30], vec![0], 64).unwrap();
        let params = CollimationParams::new(5, 2, 16).unwrap();
        let out = collimate(&p, &q, params, &mut rng).unwrap().unwrap();
        assert_eq!(out.labels(), &[(13 + 30) % 8]);
    }

    #[test]
    fn collimate_rejects_large_labels() {
        let mut rng = rng_from_seed(0);
        let p = PhaseVector::new(vec![40], vec![0], 64).unwrap();
        let params = CollimationParams::new(5, 2, 16).unwrap();
        assert!(collimate(&p, &p, params, &mut rng).is_err());
    }

    #[test]
    fn configuration_checker() {
        assert!(is_configuration(&[1, 2, 4, 8], 1));
        assert!(is_configuration(&[3, 6, 8, 24], 2));
        assert!(!is_configuration(&[3, 6, 9, 24], 2));
        assert!(is_configuration(&[5, 7, 9], 3));
    }

    #[test]
    fn fresh_rows_when_t_equals_m() {
        let mut inst = DcpInstance::new(1 << 10, Some(77), 5).unwrap();
        let mut rng = rng_from_seed(1);
        let cm = build_config_matrix(&mut inst, 9, 9, &mut rng).unwrap();
        assert_eq!(inst.queries(), 9);
        assert_eq!(cm.vectors.len(), 9);
    }

    #[test]
    fn plan_shapes() {
        for bits in [0u32, 1, 5, 15, 19, 23] {
            let s = SieveSchedule::for_bits(bits);
            if bits == 0 {
                assert_eq!(s.depth(), 0);
            } else {
                assert!(s.depth() >= 1);
            }
        }
    }
}
