//! Dihedral coset problem instances, phase vectors and measurement statistics.
//!
//! A phase vector with labels `k_1..k_l` and offsets `o_1..o_l` stands for the state
//! `(1/sqrt(l)) sum_i w^(s k_i + o_i) |i>` with `w = exp(2 pi i / N)`. A vector with a
//! single label `k` is the qubit `(|0> + w^(s k + o)|1>)/sqrt(2)`. All phases are kept
//! as integer exponents of `w`; floats only appear when a measurement probability is
//! evaluated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `ceil(log2 n)` for `n >= 1`.
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

#[inline]
pub(crate) fn mulmod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

#[inline]
pub(crate) fn addmod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 + b as u128) % n as u128) as u64
}

#[inline]
pub(crate) fn submod(a: u64, b: u64, n: u64) -> u64 {
    addmod(a % n, n - b % n, n)
}

/// `Pr[0]` when measuring `(|0> + w^theta |1>)/sqrt(2)` in the Hadamard basis.
pub fn hadamard_zero_probability(theta: u64, modulus: u64) -> f64 {
    let x = std::f64::consts::PI * (theta % modulus) as f64 / modulus as f64;
    let c = x.cos();
    c * c
}

/// `Pr[0]` when measuring the same qubit in the `(|0> +- i|1>)` basis.
pub fn y_zero_probability(theta: u64, modulus: u64) -> f64 {
    let x = 2.0 * std::f64::consts::PI * (theta % modulus) as f64 / modulus as f64;
    0.5 * (1.0 + x.sin())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseVector {
    labels: Vec<u64>,
    offsets: Vec<u64>,
    modulus: u64,
}

impl PhaseVector {
    pub fn new(labels: Vec<u64>, offsets: Vec<u64>, modulus: u64) -> Result<Self> {
        if labels.is_empty() {
            return invalid("phase vector needs at least one label");
        }
        if labels.len() != offsets.len() {
            return invalid("labels and offsets differ in length");
        }
        if let Some(&bad) = labels.iter().chain(offsets.iter()).find(|&&x| x >= modulus) {
            return Err(Error::LabelBound {
                label: bad,
                bound: modulus,
            });
        }
        let mut pv = PhaseVector {
            labels,
            offsets,
            modulus,
        };
        pv.normalize();
        Ok(pv)
    }

    /// The qubit `|psi_k>`.
    pub fn single(label: u64, modulus: u64) -> Self {
        PhaseVector {
            labels: vec![label % modulus],
            offsets: vec![0],
            modulus,
        }
    }

    pub(crate) fn from_parts_unchecked(labels: Vec<u64>, offsets: Vec<u64>, modulus: u64) -> Self {
        let mut pv = PhaseVector {
            labels,
            offsets,
            modulus,
        };
        pv.normalize();
        pv
    }

    /// Removes the global phase so that `offsets[0] == 0`. Single-label vectors keep
    /// their offset, which is the relative phase of the qubit.
    pub fn normalize(&mut self) {
        if self.labels.len() < 2 {
            return;
        }
        let o0 = self.offsets[0];
        let n = self.modulus;
        for o in self.offsets.iter_mut() {
            *o = submod(*o, o0, n);
        }
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_single(&self) -> bool {
        self.labels.len() == 1
    }

    /// Multi-label form of a qubit: `|psi_k>` has labels `[0, k]`.
    pub fn to_multi(&self) -> PhaseVector {
        if self.is_single() {
            PhaseVector {
                labels: vec![0, self.labels[0]],
                offsets: vec![0, self.offsets[0]],
                modulus: self.modulus,
            }
        } else {
            self.clone()
        }
    }

    /// Qubit form of a two-label vector: labels `{a, b}` give `|psi_(b-a)>`.
    pub fn to_qubit(&self) -> Result<PhaseVector> {
        match self.labels.len() {
            1 => Ok(self.clone()),
            2 => {
                let n = self.modulus;
                Ok(PhaseVector {
                    labels: vec![submod(self.labels[1], self.labels[0], n)],
                    offsets: vec![submod(self.offsets[1], self.offsets[0], n)],
                    modulus: n,
                })
            }
            l => Err(Error::Precondition(format!(
                "cannot view a {l}-label vector as a qubit"
            ))),
        }
    }
}

/// A DCP instance: group order `N`, hidden secret `s` and a seeded oracle.
#[derive(Debug, Clone)]
pub struct DcpInstance {
    modulus: u64,
    bits: u32,
    secret: u64,
    seed: u64,
    oracle: SimRng,
    queries: u64,
}

impl DcpInstance {
    pub fn new(modulus: u64, secret: Option<u64>, seed: u64) -> Result<Self> {
        if modulus < 4 {
            return invalid(format!("group order must be at least 4, got {modulus}"));
        }
        if modulus > 1 << 62 {
            return invalid("group order above 2^62 is not supported");
        }
        let mut oracle = rng_from_seed(seed);
        let secret = match secret {
            Some(s) if s >= modulus => {
                return invalid(format!("secret {s} not in [0, {})", modulus));
            }
            Some(s) => s,
            None => oracle.random_range(0..modulus),
        };
        Ok(DcpInstance {
            modulus,
            bits: ceil_log2(modulus),
            secret,
            seed,
            oracle,
            queries: 0,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn is_power_of_two(&self) -> bool {
        self.modulus.is_power_of_two()
    }

    /// One oracle call: a coset state followed by a QFT and a measurement leaves a
    /// qubit with a uniformly random known label.
    pub fn sample_phase_vector(&mut self) -> PhaseVector {
        self.queries += 1;
        let k = self.oracle.random_range(0..self.modulus);
        PhaseVector::single(k, self.modulus)
    }

    fn qubit_angle(&self, pv: &PhaseVector) -> Result<u64> {
        if !pv.is_single() {
            return Err(Error::Precondition(
                "measurement needs a single-label phase vector".into(),
            ));
        }
        if pv.modulus() != self.modulus {
            return invalid("phase vector modulus differs from the instance");
        }
        let n = self.modulus;
        Ok(addmod(mulmod(pv.labels[0], self.secret, n), pv.offsets[0], n))
    }

    /// Probability of outcome 0 for a Hadamard-basis measurement of `pv`.
    pub fn hadamard_zero_probability(&self, pv: &PhaseVector) -> Result<f64> {
        Ok(hadamard_zero_probability(self.qubit_angle(pv)?, self.modulus))
    }

    /// Hadamard then computational-basis measurement.
    pub fn measure_hadamard<R: Rng + ?Sized>(&self, pv: &PhaseVector, rng: &mut R) -> Result<u8> {
        let p0 = self.hadamard_zero_probability(pv)?;
        Ok(u8::from(rng.random::<f64>() >= p0))
    }

    /// Measurement in the `(|0> +- i|1>)` basis.
    pub fn measure_y<R: Rng + ?Sized>(&self, pv: &PhaseVector, rng: &mut R) -> Result<u8> {
        let p0 = y_zero_probability(self.qubit_angle(pv)?, self.modulus);
        Ok(u8::from(rng.random::<f64>() >= p0))
    }

    /// Verification hook: does `j` equal the secret? Stands in for a check against
    /// public data.
    pub fn is_secret(&self, j: u64) -> bool {
        j == self.secret
    }

    /// Test and reporting accessor. Solvers never call this.
    pub fn secret_for_testing(&self) -> u64 {
        self.secret
    }

    pub(crate) fn secret(&self) -> u64 {
        self.secret
    }
}
