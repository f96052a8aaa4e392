//! Gate-level oracles: the table-driven energy oracle `O_f`, the
//! ripple-borrow comparator and the phase oracle `O_g` built from them.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnergyTable, FixedPointSpec};
use crate::error::{Error, Result};
use crate::sim::{GateOp, QuantumCircuit, Statevector, MAX_QUBITS};

/// Qubit assignment of the phase-oracle working register, low to high:
/// ray index `j` (n), threshold `k` (b), value register (b), borrow
/// ancillas (b), flag (1). The search register is `j` followed by `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleLayout {
    pub index_bits: usize,
    pub value_bits: usize,
}

impl OracleLayout {
    pub fn new(index_bits: usize, value_bits: usize) -> Self {
        OracleLayout { index_bits, value_bits }
    }

    pub fn index(&self, i: usize) -> usize {
        i
    }

    pub fn threshold(&self, i: usize) -> usize {
        self.index_bits + i
    }

    pub fn value(&self, i: usize) -> usize {
        self.index_bits + self.value_bits + i
    }

    pub fn borrow(&self, i: usize) -> usize {
        self.index_bits + 2 * self.value_bits + i
    }

    pub fn flag(&self) -> usize {
        self.index_bits + 3 * self.value_bits
    }

    pub fn search_qubits(&self) -> usize {
        self.index_bits + self.value_bits
    }

    pub fn n_qubits(&self) -> usize {
        self.index_bits + 3 * self.value_bits + 1
    }

    /// Every qubit outside the search register.
    pub fn work_qubits(&self) -> Vec<usize> {
        (self.search_qubits()..self.n_qubits()).collect()
    }
}

/// How the phase oracle enters the Grover operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OracleMode {
    /// The gate-level oracle is simulated once to extract its diagonal on
    /// the search register (after checking that all work qubits return to
    /// |0⟩); the Grover operator then acts on `n + b` qubits only.
    #[default]
    Compiled,
    /// The full gate sequence runs inside every Grover iteration on the
    /// `n + 3b + 1` qubit working register.
    GateLevel,
}

fn check_budget(qubits: usize, what: &str) -> Result<()> {
    if qubits > MAX_QUBITS {
        return Err(Error::ResourceLimit(format!(
            "{what} needs {qubits} qubits, simulator cap is {MAX_QUBITS}"
        )));
    }
    Ok(())
}

/// Appends `|j⟩|0⟩ → |j⟩|quantize(f(j))⟩` as multi-controlled X gates;
/// index bits that are 0 in `j` are conjugated by X.
fn push_oracle_f(
    c: &mut QuantumCircuit,
    table: &EnergyTable,
    spec: &FixedPointSpec,
    index: &[usize],
    value: &[usize],
) -> Result<()> {
    for (j, q) in table.quantized(spec)?.into_iter().enumerate() {
        if q == 0 {
            continue;
        }
        let flips: Vec<usize> = index.iter().enumerate().filter(|(i, _)| j >> i & 1 == 0).map(|(_, &q)| q).collect();
        for &f in &flips {
            c.push(GateOp::x(f))?;
        }
        for (bit, &v) in value.iter().enumerate() {
            if q >> bit & 1 == 1 {
                c.push(GateOp::mcx(index, v))?;
            }
        }
        for &f in &flips {
            c.push(GateOp::x(f))?;
        }
    }
    Ok(())
}

/// `O_f` on a compact `n + b` register: index qubits `0..n`, value qubits
/// `n..n+b`. The circuit is its own inverse.
pub fn build_oracle_f(table: &EnergyTable, spec: &FixedPointSpec) -> Result<QuantumCircuit> {
    let n = table.index_bits() as usize;
    let b = spec.total_bits as usize;
    check_budget(n + b, "energy oracle")?;
    let mut c = QuantumCircuit::new(n + b)?;
    let index: Vec<usize> = (0..n).collect();
    let value: Vec<usize> = (n..n + b).collect();
    push_oracle_f(&mut c, table, spec, &index, &value)?;
    Ok(c)
}

/// Borrow chain of `value - threshold` into the borrow ancillas:
/// `borrow_{i+1} = MAJ(¬v_i, k_i, borrow_i)`, each majority written as
/// three Toffolis. The last ancilla ends up 1 iff `value < threshold`.
/// Self-inverse when replayed in reverse.
pub fn comparator(layout: &OracleLayout) -> Result<QuantumCircuit> {
    let mut c = QuantumCircuit::new(layout.n_qubits())?;
    for i in 0..layout.value_bits {
        let (v, k, out) = (layout.value(i), layout.threshold(i), layout.borrow(i));
        c.push(GateOp::x(v))?;
        c.push(GateOp::mcx(&[v, k], out))?;
        if i > 0 {
            let prev = layout.borrow(i - 1);
            c.push(GateOp::mcx(&[v, prev], out))?;
            c.push(GateOp::mcx(&[k, prev], out))?;
        }
        c.push(GateOp::x(v))?;
    }
    Ok(c)
}

/// Gate-level `O_g` and its register layout.
#[derive(Clone, Debug)]
pub struct PhaseOracle {
    pub circuit: QuantumCircuit,
    pub layout: OracleLayout,
}

/// `|j⟩|k⟩ → (-1)^{g(j,k)}|j⟩|k⟩`: O_f, comparator, flag ← ¬borrow, Z on
/// the flag, then everything but the Z undone.
pub fn phase_oracle_g(table: &EnergyTable, spec: &FixedPointSpec) -> Result<PhaseOracle> {
    let layout = OracleLayout::new(table.index_bits() as usize, spec.total_bits as usize);
    check_budget(layout.n_qubits(), "phase oracle")?;
    let (n, b) = (layout.index_bits, layout.value_bits);
    let index: Vec<usize> = (0..n).map(|i| layout.index(i)).collect();
    let value: Vec<usize> = (0..b).map(|i| layout.value(i)).collect();

    let mut of = QuantumCircuit::new(layout.n_qubits())?;
    push_oracle_f(&mut of, table, spec, &index, &value)?;
    let comp = comparator(&layout)?;
    let flag = layout.flag();
    let last_borrow = layout.borrow(b - 1);

    let mut c = QuantumCircuit::new(layout.n_qubits())?;
    c.append(&of)?;
    c.append(&comp)?;
    c.push(GateOp::x(flag))?;
    c.push(GateOp::cnot(last_borrow, flag))?;
    c.push(GateOp::z(flag))?;
    c.push(GateOp::cnot(last_borrow, flag))?;
    c.push(GateOp::x(flag))?;
    c.append(&comp.inverse())?;
    c.append(&of.inverse())?;
    Ok(PhaseOracle { circuit: c, layout })
}

impl PhaseOracle {
    /// Runs the oracle once on a random superposition over the search
    /// register and reads off which basis states had their sign flipped.
    ///
    /// Fails if any work qubit is left excited (probability ≥ 1e-12) or if
    /// the action is not a ±1 diagonal.
    pub fn extract_marks(&self, seed: u64) -> Result<Vec<bool>> {
        let m = self.layout.search_qubits();
        let dim = 1usize << m;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amps: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::from_polar(rng.gen_range(0.5..1.0), rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        let input = Statevector::from_amplitudes(amps.clone())?.widen(self.layout.n_qubits())?;
        let out = self.circuit.run(&input)?;

        let leak = out.probability_any_set(&self.layout.work_qubits())?;
        if leak >= 1e-12 {
            return Err(Error::invalid(format!("phase oracle leaves work qubits excited (p = {leak:e})")));
        }
        let mut marks = Vec::with_capacity(dim);
        for (s, a_in) in amps.iter().enumerate() {
            let ratio = out.amplitude(s) / a_in;
            if (ratio - 1.0).norm() < 1e-9 {
                marks.push(false);
            } else if (ratio + 1.0).norm() < 1e-9 {
                marks.push(true);
            } else {
                return Err(Error::invalid(format!("phase oracle is not a sign flip on state {s}: {ratio}")));
            }
        }
        Ok(marks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::count::g;

    #[test]
    fn zero_table_is_identity_on_value() {
        let spec = FixedPointSpec::new(1, 2).unwrap();
        let t = EnergyTable::new(vec![0.0, 0.0]).unwrap();
        assert!(build_oracle_f(&t, &spec).unwrap().is_empty());
    }

    #[test]
    fn truth_table_small() {
        // n=1, f=[1,3], b0=b=2: |0⟩|00⟩ → |0⟩|01⟩, |1⟩|00⟩ → |1⟩|11⟩.
        let spec = FixedPointSpec::new(2, 2).unwrap();
        let t = EnergyTable::new(vec![1.0, 3.0]).unwrap();
        let c = build_oracle_f(&t, &spec).unwrap();
        let out = c.run(&Statevector::basis(3, 0).unwrap()).unwrap();
        assert_eq!(out.amplitude(0b01_0).re, 1.0);
        let out = c.run(&Statevector::basis(3, 1).unwrap()).unwrap();
        assert_eq!(out.amplitude(0b11_1).re, 1.0);
    }

    #[test]
    fn oracle_f_is_self_inverse() {
        let spec = FixedPointSpec::new(2, 3).unwrap();
        let t = EnergyTable::new(vec![0.5, 3.0, 1.25, 2.0]).unwrap();
        let c = build_oracle_f(&t, &spec).unwrap();
        let mut s = Statevector::zero(5).unwrap();
        s.apply(&GateOp::h(0)).unwrap();
        s.apply(&GateOp::h(1)).unwrap();
        s.apply(&GateOp::h(3)).unwrap();
        let twice = c.run(&c.run(&s).unwrap()).unwrap();
        for (a, b) in twice.amplitudes().iter().zip(s.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn comparator_truth_table() {
        for b in 1..=3 {
            let layout = OracleLayout::new(1, b);
            let c = comparator(&layout).unwrap();
            for v in 0..1usize << b {
                for k in 0..1usize << b {
                    let mut basis = 0usize;
                    for i in 0..b {
                        basis |= (v >> i & 1) << layout.value(i);
                        basis |= (k >> i & 1) << layout.threshold(i);
                    }
                    let out = c.run(&Statevector::basis(layout.n_qubits(), basis).unwrap()).unwrap();
                    let idx = out.probabilities().iter().position(|&p| p > 0.5).unwrap();
                    let borrow = idx >> layout.borrow(b - 1) & 1;
                    assert_eq!(borrow == 1, v < k, "b={b} v={v} k={k}");
                }
            }
        }
    }

    #[test]
    fn all_zero_table_marks_k_zero_only() {
        let spec = FixedPointSpec::new(1, 2).unwrap();
        let t = EnergyTable::new(vec![0.0; 4]).unwrap();
        let marks = phase_oracle_g(&t, &spec).unwrap().extract_marks(1).unwrap();
        for (s, &m) in marks.iter().enumerate() {
            assert_eq!(m, s >> 2 == 0, "state {s}");
        }
    }

    #[test]
    fn marks_match_classical_predicate() {
        let spec = FixedPointSpec::new(2, 3).unwrap();
        let t = EnergyTable::new(vec![0.5, 3.9, 1.25, 2.0]).unwrap();
        let po = phase_oracle_g(&t, &spec).unwrap();
        let marks = po.extract_marks(9).unwrap();
        for j in 0..4 {
            for k in 0..8u64 {
                assert_eq!(marks[j | (k as usize) << 2], g(j, k, &t, &spec).unwrap());
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let spec = FixedPointSpec::new(4, 8).unwrap();
        let t = EnergyTable::new(vec![1.0; 8]).unwrap();
        assert!(matches!(phase_oracle_g(&t, &spec), Err(Error::ResourceLimit(_))));
    }
}
