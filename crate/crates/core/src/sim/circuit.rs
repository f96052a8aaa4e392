use std::fmt;

use super::{Gate, GateOp, Statevector};
use crate::error::{Error, Result};

/// Ordered gate list over a fixed register width. Every op is validated
/// when it is pushed.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumCircuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
}

impl QuantumCircuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::invalid("a circuit needs at least one qubit"));
        }
        Ok(QuantumCircuit { n_qubits, ops: Vec::new() })
    }

    pub fn from_ops(n_qubits: usize, ops: impl IntoIterator<Item = GateOp>) -> Result<Self> {
        let mut c = Self::new(n_qubits)?;
        for op in ops {
            c.push(op)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, op: GateOp) -> Result<()> {
        op.validate(self.n_qubits)?;
        self.ops.push(op);
        Ok(())
    }

    /// Appends `other`'s ops. Widths must match.
    pub fn append(&mut self, other: &QuantumCircuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::invalid("appending a circuit of different width"));
        }
        self.ops.extend_from_slice(&other.ops);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Reversed op order with each gate inverted.
    pub fn inverse(&self) -> QuantumCircuit {
        QuantumCircuit {
            n_qubits: self.n_qubits,
            ops: self.ops.iter().rev().map(GateOp::inverse).collect(),
        }
    }

    /// Same circuit placed on a wider register; qubit `i` goes to
    /// `mapping[i]`.
    pub fn remap(&self, n_qubits: usize, mapping: &[usize]) -> Result<QuantumCircuit> {
        if mapping.len() != self.n_qubits {
            return Err(Error::invalid("qubit mapping has the wrong length"));
        }
        let ops = self.ops.iter().map(|op| GateOp {
            gate: op.gate.clone(),
            targets: op.targets.iter().map(|&q| mapping[q]).collect(),
            controls: op.controls.iter().map(|&q| mapping[q]).collect(),
        });
        Self::from_ops(n_qubits, ops)
    }

    /// Total number of `ControlledUnitaryPower` repetitions, i.e. how many
    /// times an inner unitary is applied.
    pub fn unitary_applications(&self) -> u64 {
        self.ops
            .iter()
            .map(|op| match &op.gate {
                Gate::ControlledUnitaryPower { power, .. } => *power,
                _ => 0,
            })
            .sum()
    }

    /// Runs the circuit on `input` and returns the result.
    pub fn run(&self, input: &Statevector) -> Result<Statevector> {
        let mut s = input.clone();
        s.apply_circuit(self)?;
        Ok(s)
    }
}

impl fmt::Display for QuantumCircuit {
    /// One op per line: `name[(angle)] t=.. c=..`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.ops {
            write!(f, "{}", op.gate.name())?;
            if let Some(a) = op.gate.angle() {
                write!(f, "({a})")?;
            }
            write!(f, " t={:?}", op.targets)?;
            if !op.controls.is_empty() {
                write!(f, " c={:?}", op.controls)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
