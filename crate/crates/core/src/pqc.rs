//! Parameterized circuit templates and parameter-shift gradients.
//!
//! Parameters are laid out layer-major in the order the gates are emitted;
//! the gate order of every template is written out in
//! `templates/pqc_templates.txt` and pinned by tests.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::{Gate, GateOp, QuantumCircuit, Statevector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TemplateKind {
    /// RX, RY, RZ on every qubit, then a CNOT ladder `(i → i+1)`.
    LayeredRotCnot,
    /// RX+RZ, all-to-all CRZ, RX+RZ.
    Circuit5,
    /// RX+RZ, all-to-all CRX, RX+RZ.
    Circuit6,
    /// RX+RZ, staggered nearest-neighbour CRZ.
    Circuit16,
    /// RX+RZ, staggered nearest-neighbour CRX.
    Circuit17,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::LayeredRotCnot,
        TemplateKind::Circuit5,
        TemplateKind::Circuit6,
        TemplateKind::Circuit16,
        TemplateKind::Circuit17,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::LayeredRotCnot => "layered",
            TemplateKind::Circuit5 => "c5",
            TemplateKind::Circuit6 => "c6",
            TemplateKind::Circuit16 => "c16",
            TemplateKind::Circuit17 => "c17",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown circuit `{s}` (expected layered|c5|c6|c16|c17)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PqcTemplate {
    pub kind: TemplateKind,
    pub n_qubits: usize,
    pub n_layers: usize,
}

/// Controlled-rotation pairs `(control, target)` of the all-to-all block.
fn all_to_all_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for c in (0..n).rev() {
        for t in (0..n).rev() {
            if t != c {
                pairs.push((c, t));
            }
        }
    }
    pairs
}

/// Staggered nearest-neighbour pairs: `(1→0), (3→2), …` then `(2→1), (4→3), …`.
fn staggered_pairs(n: usize) -> Vec<(usize, usize)> {
    let even = (0..n.saturating_sub(1)).step_by(2).map(|i| (i + 1, i));
    let odd = (1..n.saturating_sub(1)).step_by(2).map(|i| (i + 1, i));
    even.chain(odd).collect()
}

impl PqcTemplate {
    pub fn new(kind: TemplateKind, n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::invalid("template needs at least one qubit"));
        }
        if n_layers == 0 {
            return Err(Error::invalid("template needs at least one layer"));
        }
        Ok(PqcTemplate { kind, n_qubits, n_layers })
    }

    fn params_per_layer(&self) -> usize {
        let n = self.n_qubits;
        match self.kind {
            TemplateKind::LayeredRotCnot => 3 * n,
            TemplateKind::Circuit5 | TemplateKind::Circuit6 => 4 * n + n * (n - 1),
            TemplateKind::Circuit16 | TemplateKind::Circuit17 => 2 * n + n.saturating_sub(1),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params_per_layer() * self.n_layers
    }

    /// Emits the gates with their parameters. Each parameter lands in
    /// exactly one gate.
    pub fn build(&self, params: &[f64]) -> Result<ParametricCircuit> {
        if params.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "{} template on {} qubits x {} layers takes {} parameters, got {}",
                self.kind,
                self.n_qubits,
                self.n_layers,
                self.param_count(),
                params.len()
            )));
        }
        if let Some(p) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite circuit parameter {p}")));
        }
        let n = self.n_qubits;
        let mut b = Builder { ops: Vec::new(), sites: Vec::new(), params, next: 0 };
        for _ in 0..self.n_layers {
            match self.kind {
                TemplateKind::LayeredRotCnot => {
                    for q in 0..n {
                        b.param(|a| GateOp::rx(q, a));
                        b.param(|a| GateOp::ry(q, a));
                        b.param(|a| GateOp::rz(q, a));
                    }
                    for q in 0..n.saturating_sub(1) {
                        b.fixed(GateOp::cnot(q, q + 1));
                    }
                }
                TemplateKind::Circuit5 | TemplateKind::Circuit6 => {
                    b.rx_rz_all(n);
                    for (c, t) in all_to_all_pairs(n) {
                        b.controlled(self.kind == TemplateKind::Circuit5, c, t);
                    }
                    b.rx_rz_all(n);
                }
                TemplateKind::Circuit16 | TemplateKind::Circuit17 => {
                    b.rx_rz_all(n);
                    for (c, t) in staggered_pairs(n) {
                        b.controlled(self.kind == TemplateKind::Circuit16, c, t);
                    }
                }
            }
        }
        debug_assert_eq!(b.next, params.len());
        Ok(ParametricCircuit {
            circuit: QuantumCircuit::from_ops(n, b.ops)?,
            sites: b.sites,
        })
    }

    /// `⟨Z_q⟩` for each readout qubit after running the template on a copy
    /// of `input`.
    pub fn forward(&self, params: &[f64], input: &Statevector, readouts: &[usize]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let pc = self.build(params)?;
        pc.circuit.run(input)?.expectations_z(readouts)
    }

    /// Jacobian `∂⟨Z_r⟩/∂θ_i`, indexed `[param][readout]`.
    pub fn parameter_shift_gradient(
        &self,
        params: &[f64],
        input: &Statevector,
        readouts: &[usize],
    ) -> Result<Vec<Vec<f64>>> {
        self.check_input(input)?;
        self.build(params)?.shift_gradient(input, readouts)
    }

    fn check_input(&self, input: &Statevector) -> Result<()> {
        if input.n_qubits() != self.n_qubits {
            return Err(Error::invalid(format!(
                "template on {} qubits given a {}-qubit input",
                self.n_qubits,
                input.n_qubits()
            )));
        }
        Ok(())
    }
}

struct Builder<'a> {
    ops: Vec<GateOp>,
    sites: Vec<usize>,
    params: &'a [f64],
    next: usize,
}

impl Builder<'_> {
    fn param(&mut self, make: impl FnOnce(f64) -> GateOp) {
        self.sites.push(self.ops.len());
        self.ops.push(make(self.params[self.next]));
        self.next += 1;
    }

    fn fixed(&mut self, op: GateOp) {
        self.ops.push(op);
    }

    fn rx_rz_all(&mut self, n: usize) {
        for q in 0..n {
            self.param(|a| GateOp::rx(q, a));
        }
        for q in 0..n {
            self.param(|a| GateOp::rz(q, a));
        }
    }

    fn controlled(&mut self, z: bool, c: usize, t: usize) {
        if z {
            self.param(|a| GateOp::crz(c, t, a));
        } else {
            self.param(|a| GateOp::crx(c, t, a));
        }
    }
}

/// A circuit together with the op index that carries each parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricCircuit {
    pub circuit: QuantumCircuit,
    pub sites: Vec<usize>,
}

/// A gate sequence standing in for one parameterized op, plus the positions
/// (within the sequence) of the rotations that carry the parameter and the
/// chain-rule weight of each.
struct ShiftPlan {
    ops: Vec<GateOp>,
    terms: Vec<(usize, f64)>,
}

fn shift_plan(op: &GateOp) -> Result<ShiftPlan> {
    match op.gate {
        Gate::Rx(_) | Gate::Ry(_) | Gate::Rz(_) => Ok(ShiftPlan { ops: vec![op.clone()], terms: vec![(0, 1.0)] }),
        Gate::Crz(theta) | Gate::Crx(theta) if op.controls.len() == 1 => {
            // CRZ(θ) = CNOT · RZ(-θ/2) · CNOT · RZ(θ/2) (time order), and
            // CRX(θ) is the same conjugated by H on the target.
            let (c, t) = (op.controls[0], op.targets[0]);
            let is_x = matches!(op.gate, Gate::Crx(_));
            let mut ops = Vec::with_capacity(6);
            if is_x {
                ops.push(GateOp::h(t));
            }
            let base = ops.len();
            ops.push(GateOp::cnot(c, t));
            ops.push(GateOp::rz(t, -theta / 2.0));
            ops.push(GateOp::cnot(c, t));
            ops.push(GateOp::rz(t, theta / 2.0));
            if is_x {
                ops.push(GateOp::h(t));
            }
            Ok(ShiftPlan { ops, terms: vec![(base + 1, -0.5), (base + 3, 0.5)] })
        }
        ref g => Err(Error::Unsupported(format!(
            "no parameter-shift rule for `{}` with {} controls",
            g.name(),
            op.controls.len()
        ))),
    }
}

impl ParametricCircuit {
    pub fn n_params(&self) -> usize {
        self.sites.len()
    }

    /// Same circuit on a wider register, qubit `q` moved to `mapping[q]`.
    pub fn remap(&self, n_qubits: usize, mapping: &[usize]) -> Result<ParametricCircuit> {
        Ok(ParametricCircuit { circuit: self.circuit.remap(n_qubits, mapping)?, sites: self.sites.clone() })
    }

    /// `self` followed by `next`; parameters of `next` come after ours.
    pub fn then(&self, next: &ParametricCircuit) -> Result<ParametricCircuit> {
        let offset = self.circuit.len();
        let mut circuit = self.circuit.clone();
        circuit.append(&next.circuit)?;
        let sites = self.sites.iter().copied().chain(next.sites.iter().map(|s| s + offset)).collect();
        Ok(ParametricCircuit { circuit, sites })
    }

    /// Parameter-shift Jacobian over all parameters, `[param][readout]`.
    pub fn shift_gradient(&self, input: &Statevector, readouts: &[usize]) -> Result<Vec<Vec<f64>>> {
        self.shift_gradient_for(input, readouts, 0..self.sites.len())
    }

    /// Jacobian rows for the parameters in `which` (ascending). Every
    /// rotation carrying the parameter is shifted by ±π/2 with weight 1/2;
    /// controlled rotations go through their CNOT/RZ decomposition.
    pub fn shift_gradient_for(
        &self,
        input: &Statevector,
        readouts: &[usize],
        which: std::ops::Range<usize>,
    ) -> Result<Vec<Vec<f64>>> {
        if input.n_qubits() != self.circuit.n_qubits() {
            return Err(Error::invalid("input width does not match the circuit"));
        }
        for &r in readouts {
            if r >= input.n_qubits() {
                return Err(Error::invalid(format!("readout qubit {r} out of range")));
            }
        }
        let ops = self.circuit.ops();
        let mut rows = Vec::with_capacity(which.len());
        let mut prefix = input.clone();
        let mut applied = 0;
        for p in which {
            let site = self.sites[p];
            prefix.apply_ops_unchecked(&ops[applied..site]);
            applied = site;
            let plan = shift_plan(&ops[site])?;
            let mut row = vec![0.0; readouts.len()];
            for &(pos, weight) in &plan.terms {
                for (sign, shift) in [(1.0, FRAC_PI_2), (-1.0, -FRAC_PI_2)] {
                    let mut s = prefix.clone();
                    for (k, op) in plan.ops.iter().enumerate() {
                        if k == pos {
                            let a = op.gate.angle().expect("rotation") + shift;
                            s.apply_unchecked(&GateOp { gate: op.gate.with_angle(a), ..op.clone() });
                        } else {
                            s.apply_unchecked(op);
                        }
                    }
                    s.apply_ops_unchecked(&ops[site + 1..]);
                    for (g, &r) in row.iter_mut().zip(readouts) {
                        *g += sign * weight * 0.5 * s.expectation_z_unchecked(r);
                    }
                }
            }
            rows.push(row);
        }
        Ok(rows)
    }
}
