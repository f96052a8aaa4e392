mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{circuit_matrix, dense_apply, max_amp_diff, random_circuit, random_state, simulator_soundness};
use num_complex::Complex64;
use qrf::count::{inverse_qft, qft};
use qrf::sim::{GateOp, QuantumCircuit, Statevector, MAX_QUBITS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_circuits_preserve_norm_and_match_dense() {
    let (norm, dense) = simulator_soundness(7, 1000);
    assert!(norm < 1e-10, "norm drift {norm}");
    assert!(dense < 1e-10, "dense gap {dense}");
}

#[test]
fn reference_matrices_are_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=4 {
        let m = circuit_matrix(&random_circuit(&mut rng, n, 12, true));
        let prod = m.adjoint() * &m;
        let id = nalgebra::DMatrix::<Complex64>::identity(1 << n, 1 << n);
        assert!((prod - id).norm() < 1e-10);
    }
}

#[test]
fn inverse_circuit_restores_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=6 {
        let c = random_circuit(&mut rng, n, 30, true);
        let s = random_state(&mut rng, n);
        let back = c.inverse().run(&c.run(&s).unwrap()).unwrap();
        assert!(max_amp_diff(back.amplitudes(), s.amplitudes()) < 1e-10);
    }
}

#[test]
fn bell_state() {
    let c = QuantumCircuit::from_ops(2, [GateOp::h(0), GateOp::cnot(0, 1)]).unwrap();
    let s = c.run(&Statevector::zero(2).unwrap()).unwrap();
    let h = 1.0 / 2f64.sqrt();
    assert!((s.amplitude(0).re - h).abs() < 1e-15);
    assert!((s.amplitude(3).re - h).abs() < 1e-15);
    assert!(s.amplitude(1).norm() < 1e-15 && s.amplitude(2).norm() < 1e-15);
    assert!(s.expectation_z(0).unwrap().abs() < 1e-15);
}

#[test]
fn qubit_zero_is_least_significant() {
    let c = QuantumCircuit::from_ops(3, [GateOp::x(0)]).unwrap();
    let s = c.run(&Statevector::zero(3).unwrap()).unwrap();
    assert_eq!(s.amplitude(1), Complex64::new(1.0, 0.0));
    assert_eq!(s.expectation_z(0).unwrap(), -1.0);
    assert_eq!(s.expectation_z(2).unwrap(), 1.0);
}

#[test]
fn controlled_power_matches_repetition() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inner = random_circuit(&mut rng, 2, 6, false);
    let op = GateOp::controlled_power(Arc::new(inner.clone()), vec![1, 2], 0, 3);
    let c = QuantumCircuit::from_ops(3, [op]).unwrap();
    assert_eq!(c.unitary_applications(), 3);
    let mut unrolled = QuantumCircuit::new(3).unwrap();
    for _ in 0..3 {
        for o in inner.remap(3, &[1, 2]).unwrap().ops() {
            unrolled.push(o.clone().with_controls(&[0])).unwrap();
        }
    }
    let s = random_state(&mut rng, 3);
    let a = c.run(&s).unwrap();
    let b = unrolled.run(&s).unwrap();
    assert!(max_amp_diff(a.amplitudes(), b.amplitudes()) < 1e-12);
}

#[test]
fn qft_round_trip_and_dense_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q = [0, 1, 2, 3];
    let f = qft(4, &q).unwrap();
    let s = random_state(&mut rng, 4);
    let out = f.run(&s).unwrap();
    assert!(max_amp_diff(out.amplitudes(), &dense_apply(&f, &s)) < 1e-12);
    let back = inverse_qft(4, &q).unwrap().run(&out).unwrap();
    assert!(max_amp_diff(back.amplitudes(), s.amplitudes()) < 1e-12);
}

#[test]
fn rotation_periodicity() {
    let s = Statevector::zero(1).unwrap();
    let full = QuantumCircuit::from_ops(1, [GateOp::rx(0, 2.0 * PI)]).unwrap().run(&s).unwrap();
    assert!((full.amplitude(0) + Complex64::new(1.0, 0.0)).norm() < 1e-15);
}

#[test]
fn width_limits() {
    assert!(Statevector::zero(0).is_err());
    assert!(Statevector::zero(MAX_QUBITS + 1).is_err());
    assert!(QuantumCircuit::from_ops(2, [GateOp::cnot(0, 2)]).is_err());
    assert!(QuantumCircuit::from_ops(2, [GateOp::cnot(1, 1)]).is_err());
}
