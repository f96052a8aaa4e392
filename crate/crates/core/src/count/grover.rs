//! Grover operator, phase estimation and the counting readout.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::oracle::{phase_oracle_g, OracleMode};
use super::{EnergyTable, FixedPointSpec};
use crate::error::{Error, Result};
use crate::sim::{GateOp, QuantumCircuit, Statevector, MAX_QUBITS};

const MARK_SEED: u64 = 0x5eed_0f_6;

/// One Grover iteration `G = D·O_g` with `D = 2|s⟩⟨s| - I` on the search
/// register. The circuit may be wider than the search register when the
/// oracle carries its own work qubits (which it returns to |0⟩).
#[derive(Clone, Debug)]
pub struct GroverOperator {
    circuit: Arc<QuantumCircuit>,
    search_qubits: usize,
}

impl GroverOperator {
    /// Grover operator for an explicit marked set over `2^search_qubits`
    /// basis states.
    pub fn from_marks(search_qubits: usize, marks: &[bool]) -> Result<Self> {
        if search_qubits == 0 || marks.len() != 1usize << search_qubits {
            return Err(Error::invalid(format!(
                "{} marks for a {search_qubits}-qubit search register",
                marks.len()
            )));
        }
        let targets: Vec<usize> = (0..search_qubits).collect();
        let phases = marks.iter().map(|&m| if m { PI } else { 0.0 }).collect();
        let mut c = QuantumCircuit::new(search_qubits)?;
        c.push(GateOp::diagonal(targets, phases))?;
        push_diffusion(&mut c, search_qubits)?;
        Ok(GroverOperator { circuit: Arc::new(c), search_qubits })
    }

    pub fn from_table(table: &EnergyTable, spec: &FixedPointSpec, mode: OracleMode) -> Result<Self> {
        let oracle = phase_oracle_g(table, spec)?;
        let m = oracle.layout.search_qubits();
        match mode {
            OracleMode::Compiled => Self::from_marks(m, &oracle.extract_marks(MARK_SEED)?),
            OracleMode::GateLevel => {
                let mut c = oracle.circuit;
                push_diffusion(&mut c, m)?;
                Ok(GroverOperator { circuit: Arc::new(c), search_qubits: m })
            }
        }
    }

    pub fn circuit(&self) -> &QuantumCircuit {
        &self.circuit
    }

    pub fn search_qubits(&self) -> usize {
        self.search_qubits
    }

    pub fn n_qubits(&self) -> usize {
        self.circuit.n_qubits()
    }

    /// Search-space size `T`.
    pub fn total_states(&self) -> u64 {
        1 << self.search_qubits
    }

    /// Phase-estimation circuit: search register on qubits `0..w`, counting
    /// register on `w..w+t` (bit `i` of the readout on qubit `w+i`).
    pub fn counting_circuit(&self, t: usize) -> Result<QuantumCircuit> {
        if t < 2 {
            return Err(Error::invalid(format!("phase estimation needs t >= 2 bits, got {t}")));
        }
        let w = self.n_qubits();
        if w + t > MAX_QUBITS {
            return Err(Error::ResourceLimit(format!(
                "counting needs {} qubits, simulator cap is {MAX_QUBITS}",
                w + t
            )));
        }
        let mut c = QuantumCircuit::new(w + t)?;
        for q in 0..self.search_qubits {
            c.push(GateOp::h(q))?;
        }
        for i in 0..t {
            c.push(GateOp::h(w + i))?;
        }
        let targets: Vec<usize> = (0..w).collect();
        for i in 0..t {
            c.push(GateOp::controlled_power(self.circuit.clone(), targets.clone(), w + i, 1 << i))?;
        }
        let counting: Vec<usize> = (w..w + t).collect();
        c.append(&inverse_qft(w + t, &counting)?)?;
        Ok(c)
    }

    /// Runs phase estimation with `t` bits and reads the modal outcome.
    pub fn count(&self, t: usize) -> Result<CountResult> {
        let circuit = self.counting_circuit(t)?;
        let out = circuit.run(&Statevector::zero(circuit.n_qubits())?)?;
        let w = self.n_qubits();
        let counting: Vec<usize> = (w..w + t).collect();
        let probs = out.marginal_probabilities(&counting)?;
        // First index wins ties, which keeps the readout deterministic.
        let (y, p) = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        let total = self.total_states() as f64;
        let levels = (1u64 << t) as f64;
        let estimate = total * (PI * y as f64 / levels).sin().powi(2);
        let error_bound =
            2.0 * PI * (estimate * (total - estimate)).max(0.0).sqrt() / levels + PI * PI * total / (levels * levels);
        Ok(CountResult {
            estimate,
            qpe_bits: t,
            oracle_queries: circuit.unitary_applications(),
            error_bound,
            total_states: self.total_states(),
            outcome: y as u64,
            outcome_probability: p,
        })
    }
}

/// Appends `D = H^⊗m · (2|0⟩⟨0| - I) · H^⊗m` on qubits `0..m`. The overall
/// sign is part of the diagonal so that controlled powers stay exact.
fn push_diffusion(c: &mut QuantumCircuit, m: usize) -> Result<()> {
    for q in 0..m {
        c.push(GateOp::h(q))?;
    }
    let mut phases = vec![PI; 1 << m];
    phases[0] = 0.0;
    c.push(GateOp::diagonal((0..m).collect(), phases))?;
    for q in 0..m {
        c.push(GateOp::h(q))?;
    }
    Ok(())
}

/// Quantum Fourier transform `|x⟩ → 2^{-t/2} Σ_y e^{2πixy/2^t}|y⟩` on the
/// listed qubits, `qubits[0]` being the least significant bit.
pub fn qft(n_qubits: usize, qubits: &[usize]) -> Result<QuantumCircuit> {
    let t = qubits.len();
    let mut c = QuantumCircuit::new(n_qubits)?;
    for a in (0..t).rev() {
        c.push(GateOp::h(qubits[a]))?;
        for b in (0..a).rev() {
            c.push(GateOp::cphase(qubits[b], qubits[a], PI / (1u64 << (a - b)) as f64))?;
        }
    }
    for i in 0..t / 2 {
        let (p, q) = (qubits[i], qubits[t - 1 - i]);
        c.push(GateOp::cnot(p, q))?;
        c.push(GateOp::cnot(q, p))?;
        c.push(GateOp::cnot(p, q))?;
    }
    Ok(c)
}

pub fn inverse_qft(n_qubits: usize, qubits: &[usize]) -> Result<QuantumCircuit> {
    Ok(qft(n_qubits, qubits)?.inverse())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountResult {
    /// `M̂ = T·sin²(πy/2^t)`.
    pub estimate: f64,
    pub qpe_bits: usize,
    /// Grover applications in the counting circuit, `2^t - 1`.
    pub oracle_queries: u64,
    /// `2π√(M̂(T-M̂))/2^t + π²T/4^t`.
    pub error_bound: f64,
    pub total_states: u64,
    /// Modal readout `y` and its probability.
    pub outcome: u64,
    pub outcome_probability: f64,
}

/// Counts the marked states of an explicit marked set.
pub fn count_marked(search_qubits: usize, marks: &[bool], t: usize) -> Result<CountResult> {
    GroverOperator::from_marks(search_qubits, marks)?.count(t)
}

pub fn quantum_count(table: &EnergyTable, spec: &FixedPointSpec, t: usize, mode: OracleMode) -> Result<CountResult> {
    GroverOperator::from_table(table, spec, mode)?.count(t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Count error bound converted to energy units.
    pub error_bound: f64,
    pub count: CountResult,
}

/// `mean̂ = 2^{b0-b}·(M̂ - N)/N`.
pub fn estimate_mean(table: &EnergyTable, spec: &FixedPointSpec, t: usize, mode: OracleMode) -> Result<MeanEstimate> {
    let count = quantum_count(table, spec, t, mode)?;
    let n = table.len() as f64;
    Ok(MeanEstimate {
        mean: spec.step() * (count.estimate - n) / n,
        error_bound: spec.step() * count.error_bound / n,
        count,
    })
}
