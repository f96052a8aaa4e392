//! Classical-to-quantum feature encoders.
//!
//! | kind          | qubits for N features | output            |
//! |---------------|-----------------------|-------------------|
//! | Angle         | N                     | circuit (RY)      |
//! | DenseAngle    | ⌈N/2⌉                 | circuit (RY, RZ)  |
//! | GeneralQubit  | ⌈N/2⌉                 | product state     |
//! | Wavefunction  | max(1, ⌈log₂ N⌉)      | amplitude state   |
//!
//! Inputs must already be scaled into each encoder's domain; out-of-range
//! values are rejected rather than clamped.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sim::{GateOp, QuantumCircuit, Statevector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    GeneralQubit,
    Wavefunction,
    Angle,
    DenseAngle,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 4] = [
        EncoderKind::GeneralQubit,
        EncoderKind::Wavefunction,
        EncoderKind::Angle,
        EncoderKind::DenseAngle,
    ];

    pub fn qubits_for(self, n_features: usize) -> usize {
        match self {
            EncoderKind::Angle => n_features,
            EncoderKind::DenseAngle | EncoderKind::GeneralQubit => n_features.div_ceil(2),
            EncoderKind::Wavefunction => n_features.next_power_of_two().trailing_zeros().max(1) as usize,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::GeneralQubit => "general",
            EncoderKind::Wavefunction => "wavefunction",
            EncoderKind::Angle => "angle",
            EncoderKind::DenseAngle => "dense",
        }
    }

    /// Domain this encoder expects its features in.
    pub fn domain(self) -> FeatureDomain {
        match self {
            EncoderKind::Angle => FeatureDomain::AngleScaled,
            EncoderKind::DenseAngle => FeatureDomain::UnitInterval,
            EncoderKind::GeneralQubit | EncoderKind::Wavefunction => FeatureDomain::Raw,
        }
    }

    /// Maps a coordinate-like feature `x ∈ [-1, 1]` into this encoder's
    /// domain, injectively:
    /// angle `θ = πx/2`, dense `(x + 1)/4`, raw kinds `1 + x/2` (strictly
    /// positive, so norms and qubit pairs never vanish).
    pub fn scale_feature(self, x: f64) -> f64 {
        match self {
            EncoderKind::Angle => x * PI / 2.0,
            EncoderKind::DenseAngle => (x + 1.0) / 4.0,
            EncoderKind::GeneralQubit | EncoderKind::Wavefunction => 1.0 + x / 2.0,
        }
    }

    /// Encodes `values` (already in this encoder's domain) into a state on
    /// `register_qubits` qubits; qubits beyond the encoder's demand stay |0⟩.
    pub fn prepare(self, values: &[f64], register_qubits: usize) -> Result<Statevector> {
        let demand = self.qubits_for(values.len());
        if register_qubits < demand {
            return Err(Error::invalid(format!(
                "{} encoding of {} features needs {demand} qubits, register has {register_qubits}",
                self.as_str(),
                values.len()
            )));
        }
        let fv = FeatureVector::new(values.to_vec(), self.domain());
        let state = match self {
            EncoderKind::Angle => angle_encode(&fv)?.run(&Statevector::zero(demand)?)?,
            EncoderKind::DenseAngle => dense_angle_encode(&fv)?.run(&Statevector::zero(demand)?)?,
            EncoderKind::GeneralQubit => general_qubit_encode(&fv)?,
            EncoderKind::Wavefunction => wavefunction_encode(&fv)?,
        };
        state.widen(register_qubits)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(EncoderKind::GeneralQubit),
            "wavefunction" => Ok(EncoderKind::Wavefunction),
            "angle" => Ok(EncoderKind::Angle),
            "dense" => Ok(EncoderKind::DenseAngle),
            other => Err(Error::Config(format!(
                "unknown encoder `{other}` (expected general|wavefunction|angle|dense)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureDomain {
    Raw,
    UnitInterval,
    AngleScaled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub domain: FeatureDomain,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, domain: FeatureDomain) -> Self {
        FeatureVector { values, domain }
    }

    pub fn angles(values: Vec<f64>) -> Self {
        Self::new(values, FeatureDomain::AngleScaled)
    }

    pub fn unit(values: Vec<f64>) -> Self {
        Self::new(values, FeatureDomain::UnitInterval)
    }

    pub fn raw(values: Vec<f64>) -> Self {
        Self::new(values, FeatureDomain::Raw)
    }

    fn expect(&self, domain: FeatureDomain, who: &str) -> Result<()> {
        if self.domain != domain {
            return Err(Error::invalid(format!(
                "{who} expects {domain:?} features, got {:?}",
                self.domain
            )));
        }
        if self.values.is_empty() {
            return Err(Error::invalid(format!("{who}: empty feature vector")));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{who}: non-finite feature {v}")));
        }
        Ok(())
    }
}

/// One `RY(2θ_k)` per qubit: `|0⟩ → cos θ_k|0⟩ + sin θ_k|1⟩`.
pub fn angle_encode(x: &FeatureVector) -> Result<QuantumCircuit> {
    x.expect(FeatureDomain::AngleScaled, "angle encoding")?;
    if let Some(v) = x.values.iter().find(|v| v.abs() > PI) {
        return Err(Error::invalid(format!("angle feature {v} outside [-π, π]")));
    }
    QuantumCircuit::from_ops(
        x.values.len(),
        x.values.iter().enumerate().map(|(k, &t)| GateOp::ry(k, 2.0 * t)),
    )
}

/// Two features `(a, b)` per qubit:
/// `cos(πa)|0⟩ + e^{2πib} sin(πa)|1⟩` up to global phase, as `RY(2πa)`
/// followed by `RZ(2πb)`. An odd trailing feature is paired with `b = 0`.
pub fn dense_angle_encode(x: &FeatureVector) -> Result<QuantumCircuit> {
    x.expect(FeatureDomain::UnitInterval, "dense angle encoding")?;
    if let Some(v) = x.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("dense angle feature {v} outside [0, 1]")));
    }
    let n = x.values.len().div_ceil(2);
    let mut c = QuantumCircuit::new(n)?;
    for (k, pair) in x.values.chunks(2).enumerate() {
        let a = pair[0];
        let b = pair.get(1).copied().unwrap_or(0.0);
        c.push(GateOp::ry(k, 2.0 * PI * a))?;
        if b != 0.0 {
            c.push(GateOp::rz(k, 2.0 * PI * b))?;
        }
    }
    Ok(c)
}

/// Amplitude encoding: `x_i/‖x‖` on basis state `i`, zero padding up to the
/// next power of two.
pub fn wavefunction_encode(x: &FeatureVector) -> Result<Statevector> {
    x.expect(FeatureDomain::Raw, "wavefunction encoding")?;
    let norm = x.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("wavefunction encoding of a zero vector"));
    }
    let n = EncoderKind::Wavefunction.qubits_for(x.values.len());
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    for (a, v) in amps.iter_mut().zip(&x.values) {
        *a = Complex64::new(v / norm, 0.0);
    }
    Statevector::from_amplitudes(amps)
}

/// Pairwise-normalized product state: qubit `k` holds
/// `(a|0⟩ + b|1⟩)/√(a² + b²)` for features `(x_{2k}, x_{2k+1})`. An odd
/// trailing feature is paired with `b = 0`.
pub fn general_qubit_encode(x: &FeatureVector) -> Result<Statevector> {
    x.expect(FeatureDomain::Raw, "general qubit encoding")?;
    let mut state: Option<Statevector> = None;
    for pair in x.values.chunks(2) {
        let a = pair[0];
        let b = pair.get(1).copied().unwrap_or(0.0);
        let r = a.hypot(b);
        if r == 0.0 {
            return Err(Error::invalid("general qubit encoding: feature pair (0, 0)"));
        }
        let q = Statevector::from_amplitudes(vec![Complex64::new(a / r, 0.0), Complex64::new(b / r, 0.0)])?;
        state = Some(match state {
            None => q,
            Some(s) => s.tensor(&q)?,
        });
    }
    Ok(state.expect("non-empty features"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn run(c: &QuantumCircuit) -> Statevector {
        c.run(&Statevector::zero(c.n_qubits()).unwrap()).unwrap()
    }

    fn assert_real_amps(s: &Statevector, expected: &[f64]) {
        for (a, e) in s.amplitudes().iter().zip(expected) {
            assert!((a.re - e).abs() < 1e-12 && a.im.abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn angle_examples() {
        let s = run(&angle_encode(&FeatureVector::angles(vec![0.0, 0.0])).unwrap());
        assert_real_amps(&s, &[1.0, 0.0, 0.0, 0.0]);
        let s = run(&angle_encode(&FeatureVector::angles(vec![PI / 2.0])).unwrap());
        assert_real_amps(&s, &[0.0, 1.0]);
        let s = run(&angle_encode(&FeatureVector::angles(vec![PI / 4.0, PI / 4.0])).unwrap());
        assert_real_amps(&s, &[0.5; 4]);
    }

    #[test]
    fn angle_rejects_out_of_range_and_wrong_domain() {
        assert!(angle_encode(&FeatureVector::angles(vec![3.5])).is_err());
        assert!(angle_encode(&FeatureVector::unit(vec![0.5])).is_err());
    }

    #[test]
    fn angle_circuit_is_depth_one() {
        let c = angle_encode(&FeatureVector::angles(vec![0.1, -0.4, 2.0])).unwrap();
        assert_eq!(c.len(), 3);
        let mut targets: Vec<usize> = c.ops().iter().map(|op| op.targets[0]).collect();
        targets.dedup();
        assert_eq!(targets, vec![0, 1, 2]);
    }

    #[test]
    fn dense_examples() {
        let s = run(&dense_angle_encode(&FeatureVector::unit(vec![0.0, 0.0])).unwrap());
        assert_real_amps(&s, &[1.0, 0.0]);
        let s = run(&dense_angle_encode(&FeatureVector::unit(vec![0.5, 0.0])).unwrap());
        assert!((s.amplitude(1).norm() - 1.0).abs() < 1e-12);
        // (1/4, 1/2): (|0⟩ - |1⟩)/√2 up to a global phase. Compare after
        // removing the phase of the |0⟩ amplitude.
        let s = run(&dense_angle_encode(&FeatureVector::unit(vec![0.25, 0.5])).unwrap());
        let g = s.amplitude(0).conj() / s.amplitude(0).norm();
        let a0 = s.amplitude(0) * g;
        let a1 = s.amplitude(1) * g;
        assert!((a0 - Complex64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        assert!((a1 - Complex64::new(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dense_rejects_out_of_range() {
        assert!(dense_angle_encode(&FeatureVector::unit(vec![1.2, 0.0])).is_err());
        assert!(dense_angle_encode(&FeatureVector::unit(vec![0.2, -0.1])).is_err());
    }

    #[test]
    fn wavefunction_examples() {
        let s = wavefunction_encode(&FeatureVector::raw(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_real_amps(&s, &[1.0, 0.0, 0.0, 0.0]);
        let s = wavefunction_encode(&FeatureVector::raw(vec![3.0, 4.0])).unwrap();
        assert_real_amps(&s, &[0.6, 0.8]);
        let s = wavefunction_encode(&FeatureVector::raw(vec![1.0; 4])).unwrap();
        assert_real_amps(&s, &[0.5; 4]);
        assert!(wavefunction_encode(&FeatureVector::raw(vec![0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn general_qubit_examples() {
        let s = general_qubit_encode(&FeatureVector::raw(vec![1.0, 0.0])).unwrap();
        assert_real_amps(&s, &[1.0, 0.0]);
        let s = general_qubit_encode(&FeatureVector::raw(vec![1.0, 1.0])).unwrap();
        assert_real_amps(&s, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        let s = general_qubit_encode(&FeatureVector::raw(vec![3.0, 4.0])).unwrap();
        assert_real_amps(&s, &[0.6, 0.8]);
        assert!(general_qubit_encode(&FeatureVector::raw(vec![1.0, 2.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn qubit_table() {
        let expected_wf = [1, 1, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4, 4, 4, 4, 4];
        for n in 1..=16 {
            assert_eq!(EncoderKind::Angle.qubits_for(n), n);
            assert_eq!(EncoderKind::DenseAngle.qubits_for(n), n.div_ceil(2));
            assert_eq!(EncoderKind::GeneralQubit.qubits_for(n), n.div_ceil(2));
            assert_eq!(EncoderKind::Wavefunction.qubits_for(n), expected_wf[n - 1]);
        }
    }

    #[test]
    fn prepare_pads_register() {
        let s = EncoderKind::DenseAngle.prepare(&[0.5, 0.0], 3).unwrap();
        assert_eq!(s.n_qubits(), 3);
        assert!((s.amplitude(1).norm() - 1.0).abs() < 1e-12);
        assert!(EncoderKind::Angle.prepare(&[0.1, 0.2, 0.3], 2).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for k in EncoderKind::ALL {
            assert_eq!(k.as_str().parse::<EncoderKind>().unwrap(), k);
        }
        assert!("amplitude".parse::<EncoderKind>().is_err());
    }
}
