use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Gate, GateOp, QuantumCircuit};
use crate::error::{Error, Result};

/// Largest register the simulator will allocate (2^24 amplitudes, 256 MiB).
pub const MAX_QUBITS: usize = 24;

/// Dense pure state over `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_width(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 {
        return Err(Error::invalid("a register needs at least one qubit"));
    }
    if n_qubits > MAX_QUBITS {
        return Err(Error::invalid(format!(
            "{n_qubits} qubits exceeds the simulator cap of {MAX_QUBITS}"
        )));
    }
    Ok(())
}

impl Statevector {
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_width(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for {n_qubits} qubits")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Statevector { n_qubits, amps })
    }

    /// Takes ownership of raw amplitudes. The length must be a power of two
    /// and the norm within 1e-10 of one.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::invalid(format!("amplitude count {len} is not a power of two >= 2")));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_width(n_qubits)?;
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("amplitudes have squared norm {norm}, expected 1")));
        }
        Ok(Statevector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `self ⊗ high`: `self` occupies the low qubits, `high` the qubits above.
    pub fn tensor(&self, high: &Statevector) -> Result<Statevector> {
        let n = self.n_qubits + high.n_qubits;
        check_width(n)?;
        let mut amps = Vec::with_capacity(1 << n);
        for h in &high.amps {
            amps.extend(self.amps.iter().map(|l| l * h));
        }
        Ok(Statevector { n_qubits: n, amps })
    }

    /// Embeds `self` into the low qubits of a wider register whose other
    /// qubits are `|0⟩`.
    pub fn widen(&self, n_qubits: usize) -> Result<Statevector> {
        if n_qubits < self.n_qubits {
            return Err(Error::invalid("cannot narrow a register"));
        }
        if n_qubits == self.n_qubits {
            return Ok(self.clone());
        }
        self.tensor(&Statevector::zero(n_qubits - self.n_qubits)?)
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::invalid(format!(
                "qubit index {q} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Applies one gate in place.
    pub fn apply(&mut self, op: &GateOp) -> Result<()> {
        op.validate(self.n_qubits)?;
        self.apply_unchecked(op);
        Ok(())
    }

    pub fn apply_circuit(&mut self, circuit: &QuantumCircuit) -> Result<()> {
        if circuit.n_qubits() != self.n_qubits {
            return Err(Error::invalid(format!(
                "circuit on {} qubits applied to a {}-qubit state",
                circuit.n_qubits(),
                self.n_qubits
            )));
        }
        // Ops were validated when pushed onto the circuit.
        for op in circuit.ops() {
            self.apply_unchecked(op);
        }
        Ok(())
    }

    pub(crate) fn apply_ops_unchecked(&mut self, ops: &[GateOp]) {
        for op in ops {
            self.apply_unchecked(op);
        }
    }

    pub(crate) fn apply_unchecked(&mut self, op: &GateOp) {
        let cmask = op.controls.iter().fold(0usize, |m, &c| m | 1 << c);
        match &op.gate {
            Gate::DiagonalPhase(phases) => self.apply_diagonal(&op.targets, phases, cmask),
            Gate::ControlledUnitaryPower { unitary, power } => {
                let lifted: Vec<GateOp> = unitary
                    .ops()
                    .iter()
                    .map(|inner| GateOp {
                        gate: inner.gate.clone(),
                        targets: inner.targets.iter().map(|&q| op.targets[q]).collect(),
                        controls: inner
                            .controls
                            .iter()
                            .map(|&q| op.targets[q])
                            .chain(op.controls.iter().copied())
                            .collect(),
                    })
                    .collect();
                for _ in 0..*power {
                    self.apply_ops_unchecked(&lifted);
                }
            }
            gate => {
                let m = gate.matrix().expect("single-target gate");
                self.apply_single(op.targets[0], m, cmask);
            }
        }
    }

    fn apply_single(&mut self, target: usize, m: [Complex64; 4], cmask: usize) {
        let stride = 1usize << target;
        let dim = self.amps.len();
        let amps = &mut self.amps;
        let mut base = 0;
        while base < dim {
            for i0 in base..base + stride {
                if i0 & cmask != cmask {
                    continue;
                }
                let i1 = i0 | stride;
                let a0 = amps[i0];
                let a1 = amps[i1];
                amps[i0] = m[0] * a0 + m[1] * a1;
                amps[i1] = m[2] * a0 + m[3] * a1;
            }
            base += stride << 1;
        }
    }

    fn apply_diagonal(&mut self, targets: &[usize], phases: &[f64], cmask: usize) {
        let factors: Vec<Complex64> = phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & cmask != cmask {
                continue;
            }
            let sub = targets
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, &q)| acc | (i >> q & 1) << k);
            *a *= factors[sub];
        }
    }

    /// Exact `⟨Z_q⟩ = Σ_i (±1)|a_i|²`, `+1` where qubit `q` is clear.
    pub fn expectation_z(&self, q: usize) -> Result<f64> {
        self.check_qubit(q)?;
        Ok(self.expectation_z_unchecked(q))
    }

    pub(crate) fn expectation_z_unchecked(&self, q: usize) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i >> q & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum()
    }

    /// `⟨Z_q⟩` for every listed qubit.
    pub fn expectations_z(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        qubits.iter().map(|&q| self.expectation_z(q)).collect()
    }

    /// Shot-sampled estimate of `⟨Z_q⟩` with an explicit seed. Not used by
    /// the default (exact) pipeline.
    pub fn sampled_expectation_z(&self, q: usize, shots: usize, seed: u64) -> Result<f64> {
        self.check_qubit(q)?;
        if shots == 0 {
            return Err(Error::invalid("shot count must be positive"));
        }
        let p1 = (1.0 - self.expectation_z_unchecked(q)) / 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ones = (0..shots).filter(|_| rng.gen::<f64>() < p1).count();
        Ok(1.0 - 2.0 * ones as f64 / shots as f64)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Marginal distribution of the listed qubits; outcome index bit `k`
    /// is the value of `qubits[k]`.
    pub fn marginal_probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        for &q in qubits {
            self.check_qubit(q)?;
        }
        let mut out = vec![0.0; 1 << qubits.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let sub = qubits
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, &q)| acc | (i >> q & 1) << k);
            out[sub] += a.norm_sqr();
        }
        Ok(out)
    }

    /// Probability that any of the listed qubits reads 1.
    pub fn probability_any_set(&self, qubits: &[usize]) -> Result<f64> {
        for &q in qubits {
            self.check_qubit(q)?;
        }
        let mask = qubits.iter().fold(0usize, |m, &q| m | 1 << q);
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }
}
