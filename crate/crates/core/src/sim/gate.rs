use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;

use super::QuantumCircuit;
use crate::error::{Error, Result};

/// Gate kinds understood by the simulator. Angles are in radians and follow
/// `R_a(θ) = exp(-iθσ_a/2)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    Rx(f64),
    Ry(f64),
    Rz(f64),
    H,
    X,
    /// X on the target, controlled on every qubit in `controls` (at least one).
    Cnot,
    Crx(f64),
    Crz(f64),
    /// `|x⟩ → e^{iφ_x}|x⟩`, `x` being the sub-index formed by the target bits
    /// (`targets[0]` least significant). Holds `2^targets.len()` phases.
    DiagonalPhase(Vec<f64>),
    /// `unitary` applied `power` times; its qubit `i` is mapped to
    /// `targets[i]` and every inner op gains the outer controls.
    ControlledUnitaryPower { unitary: Arc<QuantumCircuit>, power: u64 },
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::Rx(_) => "rx",
            Gate::Ry(_) => "ry",
            Gate::Rz(_) => "rz",
            Gate::H => "h",
            Gate::X => "x",
            Gate::Cnot => "cnot",
            Gate::Crx(_) => "crx",
            Gate::Crz(_) => "crz",
            Gate::DiagonalPhase(_) => "diag",
            Gate::ControlledUnitaryPower { .. } => "cupow",
        }
    }

    /// Rotation angle for the single-angle kinds.
    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx(a) | Gate::Ry(a) | Gate::Rz(a) | Gate::Crx(a) | Gate::Crz(a) => Some(a),
            _ => None,
        }
    }

    /// Same kind with a new angle. Panics on kinds without an angle.
    pub fn with_angle(&self, angle: f64) -> Gate {
        match self {
            Gate::Rx(_) => Gate::Rx(angle),
            Gate::Ry(_) => Gate::Ry(angle),
            Gate::Rz(_) => Gate::Rz(angle),
            Gate::Crx(_) => Gate::Crx(angle),
            Gate::Crz(_) => Gate::Crz(angle),
            other => panic!("gate {} carries no angle", other.name()),
        }
    }

    /// 2×2 matrix for single-target kinds, row-major `[m00, m01, m10, m11]`.
    pub(crate) fn matrix(&self) -> Option<[Complex64; 4]> {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        Some(match *self {
            Gate::Rx(t) | Gate::Crx(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                [c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)]
            }
            Gate::Ry(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                [c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)]
            }
            Gate::Rz(t) | Gate::Crz(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                [c(co, -s), c(0.0, 0.0), c(0.0, 0.0), c(co, s)]
            }
            Gate::H => {
                let h = FRAC_1_SQRT_2;
                [c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]
            }
            Gate::X | Gate::Cnot => [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            Gate::DiagonalPhase(_) | Gate::ControlledUnitaryPower { .. } => return None,
        })
    }

    fn inverse(&self) -> Gate {
        match self {
            Gate::Rx(a) => Gate::Rx(-a),
            Gate::Ry(a) => Gate::Ry(-a),
            Gate::Rz(a) => Gate::Rz(-a),
            Gate::Crx(a) => Gate::Crx(-a),
            Gate::Crz(a) => Gate::Crz(-a),
            Gate::H | Gate::X | Gate::Cnot => self.clone(),
            Gate::DiagonalPhase(p) => Gate::DiagonalPhase(p.iter().map(|x| -x).collect()),
            Gate::ControlledUnitaryPower { unitary, power } => Gate::ControlledUnitaryPower {
                unitary: Arc::new(unitary.inverse()),
                power: *power,
            },
        }
    }
}

/// A gate placed on concrete qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    pub gate: Gate,
    pub targets: Vec<usize>,
    pub controls: Vec<usize>,
}

impl GateOp {
    pub fn new(gate: Gate, targets: Vec<usize>, controls: Vec<usize>) -> Self {
        GateOp { gate, targets, controls }
    }

    pub fn rx(q: usize, theta: f64) -> Self {
        Self::new(Gate::Rx(theta), vec![q], vec![])
    }

    pub fn ry(q: usize, theta: f64) -> Self {
        Self::new(Gate::Ry(theta), vec![q], vec![])
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Self::new(Gate::Rz(theta), vec![q], vec![])
    }

    pub fn h(q: usize) -> Self {
        Self::new(Gate::H, vec![q], vec![])
    }

    pub fn x(q: usize) -> Self {
        Self::new(Gate::X, vec![q], vec![])
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::new(Gate::Cnot, vec![target], vec![control])
    }

    /// Multi-controlled X. With no controls this is a plain X.
    pub fn mcx(controls: &[usize], target: usize) -> Self {
        if controls.is_empty() {
            Self::x(target)
        } else {
            Self::new(Gate::Cnot, vec![target], controls.to_vec())
        }
    }

    pub fn crx(control: usize, target: usize, theta: f64) -> Self {
        Self::new(Gate::Crx(theta), vec![target], vec![control])
    }

    pub fn crz(control: usize, target: usize, theta: f64) -> Self {
        Self::new(Gate::Crz(theta), vec![target], vec![control])
    }

    /// Pauli Z, exactly `diag(1, -1)`.
    pub fn z(q: usize) -> Self {
        Self::new(Gate::DiagonalPhase(vec![0.0, std::f64::consts::PI]), vec![q], vec![])
    }

    pub fn diagonal(targets: Vec<usize>, phases: Vec<f64>) -> Self {
        Self::new(Gate::DiagonalPhase(phases), targets, vec![])
    }

    /// `diag(1, e^{iφ})` on `target`, controlled on `control`.
    pub fn cphase(control: usize, target: usize, phi: f64) -> Self {
        Self::new(Gate::DiagonalPhase(vec![0.0, phi]), vec![target], vec![control])
    }

    pub fn controlled_power(
        unitary: Arc<QuantumCircuit>,
        targets: Vec<usize>,
        control: usize,
        power: u64,
    ) -> Self {
        Self::new(Gate::ControlledUnitaryPower { unitary, power }, targets, vec![control])
    }

    pub fn with_controls(mut self, extra: &[usize]) -> Self {
        self.controls.extend_from_slice(extra);
        self
    }

    pub fn inverse(&self) -> GateOp {
        GateOp {
            gate: self.gate.inverse(),
            targets: self.targets.clone(),
            controls: self.controls.clone(),
        }
    }

    /// Checks the op against a register of `n_qubits`.
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let name = self.gate.name();
        if self.targets.is_empty() {
            return Err(Error::invalid(format!("{name}: no target qubits")));
        }
        for &q in self.targets.iter().chain(&self.controls) {
            if q >= n_qubits {
                return Err(Error::invalid(format!(
                    "{name}: qubit index {q} out of range for {n_qubits} qubits"
                )));
            }
        }
        let mut seen = 0u64;
        for &q in self.targets.iter().chain(&self.controls) {
            if seen >> q & 1 == 1 {
                return Err(Error::invalid(format!("{name}: qubit {q} used twice")));
            }
            seen |= 1 << q;
        }
        if let Some(a) = self.gate.angle() {
            if !a.is_finite() {
                return Err(Error::invalid(format!("{name}: non-finite angle {a}")));
            }
        }
        match &self.gate {
            Gate::DiagonalPhase(p) => {
                if p.len() != 1usize << self.targets.len() {
                    return Err(Error::invalid(format!(
                        "diag: {} phases for {} targets",
                        p.len(),
                        self.targets.len()
                    )));
                }
                if p.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("diag: non-finite phase"));
                }
            }
            Gate::ControlledUnitaryPower { unitary, .. } => {
                if unitary.n_qubits() != self.targets.len() {
                    return Err(Error::invalid(format!(
                        "cupow: unitary on {} qubits mapped to {} targets",
                        unitary.n_qubits(),
                        self.targets.len()
                    )));
                }
            }
            g => {
                if self.targets.len() != 1 {
                    return Err(Error::invalid(format!("{name}: expects exactly one target")));
                }
                if matches!(g, Gate::Cnot | Gate::Crx(_) | Gate::Crz(_)) && self.controls.is_empty() {
                    return Err(Error::invalid(format!("{name}: needs a control qubit")));
                }
            }
        }
        Ok(())
    }
}
