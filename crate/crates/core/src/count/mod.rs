//! Mean estimation of per-ray energies by quantum counting, with a
//! classical Monte Carlo baseline.
//!
//! Energies `f(j)` of `N = 2^n` rays are stored in a fixed-point format
//! with `b0` integer bits out of `b` total bits. The threshold predicate
//! `g(j, k) = [quantize(f(j)) ≥ k]` for `k ∈ [0, 2^b)` marks exactly
//! `M = Σ_j (quantize(f(j)) + 1)` of the `T = N·2^b` search states, so a
//! count estimate `M̂` yields the mean as `2^{b0-b}·(M̂ - N)/N`.

mod grover;
mod mc;
mod oracle;
mod study;

pub use grover::{count_marked, estimate_mean, inverse_qft, qft, quantum_count, CountResult, GroverOperator, MeanEstimate};
pub use mc::{mc_estimate, MCResult};
pub use oracle::{build_oracle_f, comparator, phase_oracle_g, OracleLayout, OracleMode, PhaseOracle};
pub use study::{convergence_study, fit_loglog_slope, StudyConfig, StudyReport, StudyRow};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest total bit length accepted.
pub const MAX_TOTAL_BITS: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointSpec {
    /// Integer bits `b0`.
    pub int_bits: u32,
    /// Total bits `b`.
    pub total_bits: u32,
}

impl FixedPointSpec {
    pub fn new(int_bits: u32, total_bits: u32) -> Result<Self> {
        if !(1 <= int_bits && int_bits <= total_bits && total_bits <= MAX_TOTAL_BITS) {
            return Err(Error::invalid(format!(
                "fixed-point spec needs 1 <= b0 <= b <= {MAX_TOTAL_BITS}, got b0={int_bits}, b={total_bits}"
            )));
        }
        Ok(FixedPointSpec { int_bits, total_bits })
    }

    /// Quantization step `2^{b0-b}`.
    pub fn step(&self) -> f64 {
        2f64.powi(self.int_bits as i32 - self.total_bits as i32)
    }

    pub fn levels(&self) -> u64 {
        1 << self.total_bits
    }

    /// Largest representable energy `2^{b0} - 2^{b0-b}`.
    pub fn max_value(&self) -> f64 {
        2f64.powi(self.int_bits as i32) - self.step()
    }

    /// `floor(2^{b-b0}·f)`, clamped to `2^b - 1`.
    pub fn quantize(&self, f: f64) -> Result<u64> {
        if !(f >= 0.0) || !f.is_finite() {
            return Err(Error::invalid(format!("cannot quantize energy {f}")));
        }
        let scaled = (f / self.step()).floor();
        Ok((scaled as u64).min(self.levels() - 1))
    }
}

/// Energies of `N = 2^n` rays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    energies: Vec<f64>,
}

impl EnergyTable {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        let n = energies.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("energy table length {n} is not a power of two >= 2")));
        }
        if let Some(e) = energies.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::invalid(format!("energy {e} is negative or non-finite")));
        }
        Ok(EnergyTable { energies })
    }

    /// Random energies on the representable grid of `spec`.
    pub fn random_representable(index_bits: u32, spec: &FixedPointSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let energies = (0..1usize << index_bits)
            .map(|_| rng.gen_range(0..spec.levels()) as f64 * spec.step())
            .collect();
        Self::new(energies)
    }

    pub fn constant(index_bits: u32, value: f64) -> Result<Self> {
        Self::new(vec![value; 1 << index_bits])
    }

    pub fn index_bits(&self) -> u32 {
        self.energies.len().trailing_zeros()
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn mean(&self) -> f64 {
        self.energies.iter().sum::<f64>() / self.len() as f64
    }

    pub fn quantized(&self, spec: &FixedPointSpec) -> Result<Vec<u64>> {
        self.energies.iter().map(|&f| spec.quantize(f)).collect()
    }

    /// Mean of the quantized energies, in energy units.
    pub fn quantized_mean(&self, spec: &FixedPointSpec) -> Result<f64> {
        let q = self.quantized(spec)?;
        Ok(q.iter().sum::<u64>() as f64 * spec.step() / self.len() as f64)
    }

    /// Population variance of the raw energies.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.energies.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / self.len() as f64
    }
}

/// Classical threshold predicate: `quantize(f(j)) ≥ k`.
pub fn g(j: usize, k: u64, table: &EnergyTable, spec: &FixedPointSpec) -> Result<bool> {
    if j >= table.len() {
        return Err(Error::invalid(format!("ray index {j} out of range for {} rays", table.len())));
    }
    if k >= spec.levels() {
        return Err(Error::invalid(format!("threshold index {k} out of range for b = {}", spec.total_bits)));
    }
    Ok(spec.quantize(table.energies[j])? >= k)
}

/// `M = Σ_{j,k} g(j,k)` by direct enumeration.
pub fn marked_count(table: &EnergyTable, spec: &FixedPointSpec) -> Result<u64> {
    let mut m = 0;
    for j in 0..table.len() {
        for k in 0..spec.levels() {
            m += g(j, k, table, spec)? as u64;
        }
    }
    Ok(m)
}
