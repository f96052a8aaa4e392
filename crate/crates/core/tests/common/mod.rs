//! Dense-matrix reference for the simulator. Every gate is expanded to a
//! full `2^n × 2^n` matrix through Kronecker products of 2×2 factors, with
//! qubit 0 as the rightmost (least significant) factor.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qrf::sim::{Gate, GateOp, QuantumCircuit, Statevector};
use rand::Rng;

pub type CMatrix = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn m2(a: [Complex64; 4]) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &a)
}

pub fn identity2() -> CMatrix {
    CMatrix::identity(2, 2)
}

fn projector(bit: usize) -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(bit, bit)] = c(1.0, 0.0);
    m
}

/// Written out from `exp(-iθσ/2)` independently of the simulator.
pub fn single_qubit(gate: &Gate) -> CMatrix {
    match *gate {
        Gate::Rx(t) | Gate::Crx(t) => {
            let (s, co) = ((t / 2.0).sin(), (t / 2.0).cos());
            m2([c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)])
        }
        Gate::Ry(t) => {
            let (s, co) = ((t / 2.0).sin(), (t / 2.0).cos());
            m2([c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
        }
        Gate::Rz(t) | Gate::Crz(t) => {
            m2([Complex64::from_polar(1.0, -t / 2.0), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, t / 2.0)])
        }
        Gate::H => {
            let h = 1.0 / 2f64.sqrt();
            m2([c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)])
        }
        Gate::X | Gate::Cnot => m2([c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        _ => panic!("{} is not a single-qubit gate", gate.name()),
    }
}

/// `⊗_{q = n-1 … 0} factor(q)`.
fn kron_all(n: usize, factor: impl Fn(usize) -> CMatrix) -> CMatrix {
    let mut m = factor(n - 1);
    for q in (0..n - 1).rev() {
        m = m.kronecker(&factor(q));
    }
    m
}

/// Full matrix of one op on `n` qubits.
pub fn op_matrix(op: &GateOp, n: usize) -> CMatrix {
    let dim = 1 << n;
    // Projector onto "all controls set".
    let ctrl = |q: usize| if op.controls.contains(&q) { projector(1) } else { identity2() };
    match &op.gate {
        Gate::DiagonalPhase(phases) => {
            // Σ_x e^{iφ_x} |x⟩⟨x| on the targets, then the usual control split.
            let mut active = CMatrix::zeros(dim, dim);
            for (x, &phi) in phases.iter().enumerate() {
                let term = kron_all(n, |q| {
                    if let Some(pos) = op.targets.iter().position(|&t| t == q) {
                        projector((x >> pos) & 1)
                    } else {
                        ctrl(q)
                    }
                });
                active += term * Complex64::from_polar(1.0, phi);
            }
            let on = kron_all(n, ctrl);
            active + (CMatrix::identity(dim, dim) - on)
        }
        Gate::ControlledUnitaryPower { unitary, power } => {
            let mut m = CMatrix::identity(dim, dim);
            for inner in unitary.ops() {
                let lifted = GateOp {
                    gate: inner.gate.clone(),
                    targets: inner.targets.iter().map(|&q| op.targets[q]).collect(),
                    controls: inner.controls.iter().map(|&q| op.targets[q]).chain(op.controls.iter().copied()).collect(),
                };
                m = op_matrix(&lifted, n) * m;
            }
            let once = m.clone();
            for _ in 1..*power {
                m = &once * m;
            }
            m
        }
        g => {
            let u = single_qubit(g);
            let t = op.targets[0];
            let active = kron_all(n, |q| if q == t { u.clone() } else { ctrl(q) });
            if op.controls.is_empty() {
                active
            } else {
                let on = kron_all(n, ctrl);
                active + (CMatrix::identity(dim, dim) - on)
            }
        }
    }
}

pub fn circuit_matrix(circuit: &QuantumCircuit) -> CMatrix {
    let n = circuit.n_qubits();
    let mut m = CMatrix::identity(1 << n, 1 << n);
    for op in circuit.ops() {
        m = op_matrix(op, n) * m;
    }
    m
}

pub fn dense_apply(circuit: &QuantumCircuit, input: &Statevector) -> Vec<Complex64> {
    let v = DVector::from_column_slice(input.amplitudes());
    (circuit_matrix(circuit) * v).iter().copied().collect()
}

pub fn max_amp_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn random_state(rng: &mut impl Rng, n: usize) -> Statevector {
    let mut amps: Vec<Complex64> = (0..1 << n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    Statevector::from_amplitudes(amps).unwrap()
}

/// Distinct qubits drawn from `0..n`.
fn distinct(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        out.push(pool.swap_remove(rng.gen_range(0..pool.len())));
    }
    out
}

pub fn random_op(rng: &mut impl Rng, n: usize, allow_power: bool) -> GateOp {
    let angle = rng.gen_range(-2.0 * PI..2.0 * PI);
    let kinds = if allow_power && n >= 2 { 11 } else { 10 };
    let pick = rng.gen_range(0..kinds);
    let two = n >= 2;
    match pick {
        0 => GateOp::rx(rng.gen_range(0..n), angle),
        1 => GateOp::ry(rng.gen_range(0..n), angle),
        2 => GateOp::rz(rng.gen_range(0..n), angle),
        3 => GateOp::h(rng.gen_range(0..n)),
        4 => GateOp::x(rng.gen_range(0..n)),
        5..=7 if two => {
            let q = distinct(rng, n, 2);
            match pick {
                5 => GateOp::cnot(q[0], q[1]),
                6 => GateOp::crx(q[0], q[1], angle),
                _ => GateOp::crz(q[0], q[1], angle),
            }
        }
        8 if n >= 3 => {
            let k = rng.gen_range(2..n);
            let q = distinct(rng, n, k + 1);
            GateOp::mcx(&q[..k], q[k])
        }
        9 => {
            let k = rng.gen_range(1..=n.min(3));
            let q = distinct(rng, n, k);
            let phases = (0..1 << k).map(|_| rng.gen_range(-PI..PI)).collect();
            let op = GateOp::diagonal(q.clone(), phases);
            if n > k && rng.gen_bool(0.5) {
                let free: Vec<usize> = (0..n).filter(|x| !q.contains(x)).collect();
                op.with_controls(&[free[rng.gen_range(0..free.len())]])
            } else {
                op
            }
        }
        10 => {
            let q = distinct(rng, n, n);
            let (control, targets) = (q[0], q[1..].to_vec());
            let inner_n = targets.len();
            let inner = random_circuit(rng, inner_n, 3, false);
            GateOp::controlled_power(Arc::new(inner), targets, control, rng.gen_range(1..4))
        }
        _ => GateOp::h(rng.gen_range(0..n)),
    }
}

pub fn random_circuit(rng: &mut impl Rng, n: usize, len: usize, allow_power: bool) -> QuantumCircuit {
    let ops: Vec<GateOp> = (0..len).map(|_| random_op(rng, n, allow_power)).collect();
    QuantumCircuit::from_ops(n, ops).unwrap()
}

/// Random circuits on 1..=6 qubits: worst norm drift over all of them and
/// worst per-amplitude gap to the dense reference over those with n ≤ 4.
pub fn simulator_soundness(seed: u64, circuits: usize) -> (f64, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut norm_err, mut dense_err) = (0.0f64, 0.0f64);
    for i in 0..circuits {
        let n = 1 + i % 6;
        let len = rng.gen_range(1..25);
        let circuit = random_circuit(&mut rng, n, len, true);
        let input = random_state(&mut rng, n);
        let out = circuit.run(&input).unwrap();
        norm_err = norm_err.max((out.norm_sqr() - 1.0).abs());
        if n <= 4 {
            dense_err = dense_err.max(max_amp_diff(out.amplitudes(), &dense_apply(&circuit, &input)));
        }
    }
    (norm_err, dense_err)
}

/// `|a - b| / max(|b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Parameter-shift Jacobians of random templates against central finite
/// differences. Returns the number of (template, input) cases and the
/// worst ratio of the error to its allowance `max(1e-6·|fd|, 1e-8)`.
pub fn template_gradient_suite(seed: u64, cases: usize) -> (usize, f64) {
    use qrf::pqc::{PqcTemplate, TemplateKind};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..cases {
        let kind = TemplateKind::ALL[i % TemplateKind::ALL.len()];
        let n = rng.gen_range(1..=4);
        let layers = rng.gen_range(1..=2);
        let t = PqcTemplate::new(kind, n, layers).unwrap();
        let params: Vec<f64> = (0..t.param_count()).map(|_| rng.gen_range(-PI..PI)).collect();
        let input = random_state(&mut rng, n);
        let readouts: Vec<usize> = (0..n).collect();
        let jac = t.parameter_shift_gradient(&params, &input, &readouts).unwrap();
        for p in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[p] += h;
            minus[p] -= h;
            let fp = t.forward(&plus, &input, &readouts).unwrap();
            let fm = t.forward(&minus, &input, &readouts).unwrap();
            for r in 0..n {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                let allowance = (1e-6 * fd.abs()).max(1e-8);
                worst = worst.max((jac[p][r] - fd).abs() / allowance);
            }
        }
    }
    (cases, worst)
}

/// Analytic loss gradient of whole models (points and rays) against central
/// finite differences; returns the worst `|g - fd| / max(|fd|, 1e-6)`.
pub fn model_gradient_error(seed: u64) -> f64 {
    use nalgebra::{Point3, Vector3};
    use qrf::encoding::EncoderKind;
    use qrf::exec::Execution;
    use qrf::model::{loss, loss_and_grad, ActivationKind, Batch, PointSample, QrfConfig, QrfModel, RaySample};
    use qrf::pqc::TemplateKind;
    use qrf::render::{Aabb, Ray, RenderOptions};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let configs = [
        (EncoderKind::DenseAngle, TemplateKind::Circuit5, ActivationKind::QRelu, 2, true),
        (EncoderKind::Angle, TemplateKind::Circuit6, ActivationKind::Elu, 2, false),
        (EncoderKind::GeneralQubit, TemplateKind::Circuit16, ActivationKind::Softplus, 3, true),
        (EncoderKind::Wavefunction, TemplateKind::LayeredRotCnot, ActivationKind::Sine, 3, false),
        (EncoderKind::DenseAngle, TemplateKind::Circuit17, ActivationKind::Relu, 3, true),
    ];
    for (encoder, circuit, activation, dims, use_direction) in configs {
        let model = QrfModel::new(QrfConfig {
            encoder,
            circuit,
            layers: 1,
            activation,
            position_frequencies: 1,
            direction_frequencies: 0,
            position_dims: dims,
            use_direction,
        })
        .unwrap();
        let params = model.init_params(rng.gen());
        let points: Vec<PointSample> = (0..4)
            .map(|_| PointSample {
                position: (0..dims).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                target: [rng.gen(), rng.gen(), rng.gen()],
            })
            .collect();
        let mut opts = RenderOptions::new(6, 0.5, 4.0);
        opts.bounds = Some(Aabb::cube(1.0));
        opts.background = [0.2, 0.3, 0.4];
        opts.exec = Execution::Sequential;
        let rays: Vec<RaySample> = (0..3)
            .map(|_| {
                let dir = Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 1.0);
                RaySample { ray: Ray::new(Point3::new(0.0, 0.0, -2.5), dir).unwrap(), target: [rng.gen(), rng.gen(), rng.gen()] }
            })
            .collect();
        let mut batches = vec![Batch::Points(&points)];
        if dims == 3 {
            batches.push(Batch::Rays(&rays, &opts));
        }
        for batch in batches {
            let (_, grad) = loss_and_grad(&model, &params, batch, Execution::Sequential).unwrap();
            for i in 0..params.len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[i] += h;
                minus[i] -= h;
                let fd = (loss(&model, &plus, batch, Execution::Sequential).unwrap()
                    - loss(&model, &minus, batch, Execution::Sequential).unwrap())
                    / (2.0 * h);
                worst = worst.max(rel_err(grad[i], fd, 1e-6));
            }
        }
    }
    worst
}

/// Qubit demand per encoder written out by hand: angle N, dense and
/// general ⌈N/2⌉, wavefunction the smallest q ≥ 1 with 2^q ≥ N.
pub fn expected_qubits(kind: qrf::encoding::EncoderKind, n: usize) -> usize {
    use qrf::encoding::EncoderKind;
    match kind {
        EncoderKind::Angle => n,
        EncoderKind::DenseAngle | EncoderKind::GeneralQubit => n.div_ceil(2),
        EncoderKind::Wavefunction => {
            let mut q = 1;
            while (1 << q) < n {
                q += 1;
            }
            q
        }
    }
}

/// Random in-domain features for `kind`.
pub fn random_features(rng: &mut impl Rng, kind: qrf::encoding::EncoderKind, n: usize) -> Vec<f64> {
    use qrf::encoding::EncoderKind;
    (0..n)
        .map(|_| match kind {
            EncoderKind::Angle => rng.gen_range(-PI..=PI),
            EncoderKind::DenseAngle => rng.gen_range(0.0..=1.0),
            EncoderKind::GeneralQubit | EncoderKind::Wavefunction => rng.gen_range(0.05..2.0),
        })
        .collect()
}

/// Worst norm error over random encodings, worst wavefunction round-trip
/// error, and whether the qubit-count table holds for 1–16 features.
pub fn encoding_suite(seed: u64, per_kind: usize) -> (f64, f64, bool) {
    use qrf::encoding::{wavefunction_encode, EncoderKind, FeatureVector};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut norm_err = 0.0f64;
    let mut round_trip = 0.0f64;
    let mut table_ok = true;
    for kind in EncoderKind::ALL {
        for n in 1..=16 {
            table_ok &= kind.qubits_for(n) == expected_qubits(kind, n);
            let x = random_features(&mut rng, kind, n);
            table_ok &= kind.prepare(&x, kind.qubits_for(n)).unwrap().n_qubits() == expected_qubits(kind, n);
        }
        for i in 0..per_kind {
            let n = 1 + i % 16;
            let x = random_features(&mut rng, kind, n);
            let s = kind.prepare(&x, kind.qubits_for(n)).unwrap();
            norm_err = norm_err.max((s.norm_sqr() - 1.0).abs());
            if kind == EncoderKind::Wavefunction {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s = wavefunction_encode(&FeatureVector::raw(x.clone())).unwrap();
                for (j, a) in s.amplitudes().iter().enumerate() {
                    let want = x.get(j).copied().unwrap_or(0.0);
                    round_trip = round_trip.max((a.re * norm - want).abs()).max(a.im.abs());
                }
            }
        }
    }
    (norm_err, round_trip, table_ok)
}

/// Straight scalar loop: alpha per sample, transmittance as a running
/// product of `1 - alpha`.
pub fn reference_composite(s: &qrf::render::SampleSet) -> ([f64; 3], f64) {
    let mut color = [0.0; 3];
    let mut opacity = 0.0;
    let mut transmittance = 1.0;
    for i in 0..s.sigmas.len() {
        let alpha = 1.0 - (-s.sigmas[i] * s.deltas[i]).exp();
        let w = transmittance * alpha;
        for ch in 0..3 {
            color[ch] += w * s.colors[i][ch];
        }
        opacity += w;
        transmittance *= 1.0 - alpha;
    }
    (color, opacity)
}

pub fn random_sample_set(rng: &mut impl Rng) -> qrf::render::SampleSet {
    let k = rng.gen_range(1..40);
    let near = rng.gen_range(0.0..2.0);
    let far = near + rng.gen_range(0.5..6.0);
    let mut depths: Vec<f64> = (0..k).map(|_| rng.gen_range(near..far)).collect();
    depths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    depths.dedup();
    let deltas = qrf::render::SampleSet::spacings(&depths, far);
    let n = depths.len();
    qrf::render::SampleSet {
        depths,
        deltas,
        colors: (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect(),
        sigmas: (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..20.0) }).collect(),
    }
}

/// Emission along a ray through a field with constant density `sigma` and
/// color `c(s)` on `[0, len]`: `∫ σ e^{-σ s} c(s) ds`, by composite Simpson
/// on a fine grid.
pub fn analytic_ray(sigma: f64, len: f64, color: impl Fn(f64) -> [f64; 3]) -> [f64; 3] {
    let m = 20_000;
    let h = len / m as f64;
    let mut acc = [0.0; 3];
    for i in 0..=m {
        let s = i as f64 * h;
        let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let c = color(s);
        for ch in 0..3 {
            acc[ch] += w * sigma * (-sigma * s).exp() * c[ch];
        }
    }
    acc.map(|a| a * h / 3.0)
}

/// Compositing checks: worst gap to the scalar loop over random sets, worst
/// opaque-limit weight-sum gap, and the rendered-ray errors against the
/// analytic field for K = 8, 16, …, 1024.
pub fn compositing_suite(seed: u64, sets: usize) -> (f64, f64, Vec<f64>) {
    use nalgebra::{Point3, Vector3};
    use qrf::render::{composite, render_ray, FieldSample, Ray, RenderOptions, SampleSet};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut gap = 0.0f64;
    for _ in 0..sets {
        let s = random_sample_set(&mut rng);
        let got = composite(&s);
        let (c, o) = reference_composite(&s);
        gap = gap.max((got.opacity - o).abs());
        for ch in 0..3 {
            gap = gap.max((got.color[ch] - c[ch]).abs());
        }
    }

    let mut opaque = 0.0f64;
    for k in [1, 2, 5, 17] {
        let depths: Vec<f64> = (0..k).map(|i| 1.0 + i as f64).collect();
        let deltas = vec![1.0; k];
        let mut sigmas = vec![rng.gen_range(0.0..3.0); k];
        sigmas[0] = 50.0;
        let s = SampleSet { depths, deltas, colors: vec![[0.5; 3]; k], sigmas };
        opaque = opaque.max((composite(&s).opacity - 1.0).abs());
    }

    let (sigma, near, far) = (1.3, 0.5, 3.0);
    let color = |s: f64| [0.5 + 0.5 * (2.0 * s).sin(), s / (far - near), 1.0];
    let field = move |p: &Point3<f64>, _: &Vector3<f64>| -> qrf::Result<FieldSample> {
        Ok(FieldSample { color: color(p.z - near), sigma })
    };
    let exact = analytic_ray(sigma, far - near, color);
    let ray = Ray::new(Point3::origin(), Vector3::z()).unwrap();
    let errors = (3..=10)
        .map(|e| {
            let mut opts = RenderOptions::new(1 << e, near, far);
            opts.exec = qrf::Execution::Sequential;
            let got = render_ray(&field, &ray, &opts, 0).unwrap();
            (0..3).map(|ch| (got.color[ch] - exact[ch]).abs()).fold(0.0, f64::max)
        })
        .collect();
    (gap, opaque, errors)
}

/// `k` distinct marked positions out of `len`.
pub fn random_marks(rng: &mut impl Rng, len: usize, k: usize) -> Vec<bool> {
    let mut marks = vec![false; len];
    for i in distinct(rng, len, k) {
        marks[i] = true;
    }
    marks
}

/// Counting exactness on marked sets with `M ∈ {0, T/2, T}` and on tables
/// whose counts land there, plus the g-sum identity and the oracle's
/// ancilla hygiene on random tables with `n ≤ 3`, `b ≤ 4`.
/// Returns (exact cases, exact failures, identity cases, identity
/// failures, worst work-qubit leak).
pub fn counting_suite(seed: u64) -> (usize, usize, usize, usize, f64) {
    use qrf::count::{count_marked, g, marked_count, phase_oracle_g, quantum_count, EnergyTable, FixedPointSpec, OracleMode};
    use qrf::sim::GateOp;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut exact, mut exact_fail) = (0, 0);
    for m in 1..=5usize {
        let total = 1usize << m;
        for marked in [0, total / 2, total] {
            let marks = random_marks(&mut rng, total, marked);
            for t in 2..=6 {
                let r = count_marked(m, &marks, t).unwrap();
                exact += 1;
                if (r.estimate - marked as f64).abs() > 1e-9 {
                    exact_fail += 1;
                }
            }
        }
    }
    // Tables whose every quantized energy is 2^{b-1} - 1 (M = T/2) or the
    // top level (M = T).
    for (n, b0, b) in [(1u32, 1u32, 2u32), (2, 2, 3), (2, 1, 1), (3, 2, 2)] {
        let spec = FixedPointSpec::new(b0, b).unwrap();
        for q in [(1u64 << (b - 1)) - 1, (1u64 << b) - 1] {
            let table = EnergyTable::constant(n, q as f64 * spec.step()).unwrap();
            let want = marked_count(&table, &spec).unwrap() as f64;
            for mode in [OracleMode::Compiled, OracleMode::GateLevel] {
                let r = quantum_count(&table, &spec, 4, mode).unwrap();
                exact += 1;
                if (r.estimate - want).abs() > 1e-9 {
                    exact_fail += 1;
                }
            }
        }
    }

    let (mut ident, mut ident_fail) = (0, 0);
    let mut leak = 0.0f64;
    for n in 1..=3u32 {
        for b in 1..=4u32 {
            for b0 in 1..=b {
                let spec = FixedPointSpec::new(b0, b).unwrap();
                let top = 2f64.powi(b0 as i32);
                let energies: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(0.0..top)).collect();
                let table = EnergyTable::new(energies).unwrap();
                let lhs = marked_count(&table, &spec).unwrap();
                let rhs: u64 = table.quantized(&spec).unwrap().iter().sum::<u64>() + table.len() as u64;
                let oracle = phase_oracle_g(&table, &spec).unwrap();
                let marks = oracle.extract_marks(rng.gen()).unwrap();
                let mut per_state = true;
                for (s, &mk) in marks.iter().enumerate() {
                    let (j, k) = (s % table.len(), (s / table.len()) as u64);
                    per_state &= mk == g(j, k, &table, &spec).unwrap();
                }
                ident += 1;
                if lhs != rhs || marks.iter().filter(|m| **m).count() as u64 != lhs || !per_state {
                    ident_fail += 1;
                }
                let w = oracle.layout.n_qubits();
                let mut s = Statevector::zero(w).unwrap();
                for q in 0..oracle.layout.search_qubits() {
                    s.apply(&GateOp::h(q)).unwrap();
                }
                let out = oracle.circuit.run(&s).unwrap();
                leak = leak.max(out.probability_any_set(&oracle.layout.work_qubits()).unwrap());
            }
        }
    }
    (exact, exact_fail, ident, ident_fail, leak)
}

/// Mean estimation on random tables: fraction within the analytic bound.
/// Constant tables: (exact when the count is t-representable, within the
/// bound otherwise) as (representable cases, exact ones, other cases, within
/// bound).
pub fn mean_estimation_suite(seed: u64, tables: usize, t: usize) -> (f64, (usize, usize, usize, usize)) {
    use qrf::count::{estimate_mean, EnergyTable, FixedPointSpec, OracleMode};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut within = 0;
    for _ in 0..tables {
        let n = rng.gen_range(1..=3u32);
        let b = rng.gen_range(2..=4u32);
        let b0 = rng.gen_range(1..=b);
        let spec = FixedPointSpec::new(b0, b).unwrap();
        let top = 2f64.powi(b0 as i32);
        let energies: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(0.0..top)).collect();
        let table = EnergyTable::new(energies).unwrap();
        let est = estimate_mean(&table, &spec, t, OracleMode::Compiled).unwrap();
        if (est.mean - table.quantized_mean(&spec).unwrap()).abs() <= est.error_bound {
            within += 1;
        }
    }
    let (mut rep, mut rep_exact, mut other, mut other_within) = (0, 0, 0, 0);
    for n in 1..=3u32 {
        let spec = FixedPointSpec::new(2, 3).unwrap();
        for q in 0..spec.levels() {
            let table = EnergyTable::constant(n, q as f64 * spec.step()).unwrap();
            let truth = table.quantized_mean(&spec).unwrap();
            let est = estimate_mean(&table, &spec, t, OracleMode::Compiled).unwrap();
            let err = (est.mean - truth).abs();
            // Fraction (q+1)/2^b is a t-bit eigenphase only at 1/2 and 1.
            if q + 1 == spec.levels() / 2 || q + 1 == spec.levels() {
                rep += 1;
                rep_exact += (err < 1e-12) as usize;
            } else {
                other += 1;
                other_within += (err <= est.error_bound) as usize;
            }
        }
    }
    (within as f64 / tables as f64, (rep, rep_exact, other, other_within))
}

pub fn config(pairs: &[(&str, &str)]) -> qrf::io::Config {
    let mut c = qrf::io::Config::new();
    for (k, v) in pairs {
        c.set(k, *v);
    }
    c
}

/// Random positions in the unit cube and random pairs of view angles.
pub fn sigma_probe(seed: u64, positions: usize, pairs: usize) -> (Vec<[f64; 3]>, Vec<([f64; 2], [f64; 2])>) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pos = (0..positions).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let mut angle = || [rng.gen_range(0.0..PI), rng.gen_range(-PI..PI)];
    let dirs = (0..pairs).map(|_| (angle(), angle())).collect();
    (pos, dirs)
}

/// Every regular file under `dir` with its bytes, sorted by relative path.
pub fn dir_contents(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            out.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

/// Runs `task` twice with the identical config (same output directory,
/// emptied in between) and compares every output file byte for byte,
/// except the wall-clock log.
pub fn reruns_identical(task: &str, base: &qrf::io::Config) -> bool {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("out");
    let mut cfg = base.clone();
    cfg.set("output", out.to_str().unwrap());
    let mut runs = Vec::new();
    for _ in 0..2 {
        if out.exists() {
            std::fs::remove_dir_all(&out).unwrap();
        }
        qrf::tasks::run_task(task, &cfg).unwrap();
        let files: Vec<_> = dir_contents(&out).into_iter().filter(|(name, _)| name != "timing.jsonl").collect();
        runs.push(files);
    }
    !runs[0].is_empty() && runs[0] == runs[1]
}

/// Small configs for every subcommand, sharing `dir` for their inputs.
pub fn small_task_configs(dir: &std::path::Path) -> Vec<(&'static str, qrf::io::Config)> {
    let energies = dir.join("energies.txt");
    std::fs::write(&energies, "0.25, 1.5, 3.0, 0.75\n").unwrap();
    let ckpt_dir = dir.join("fit3d");
    let fit3d = config(&[
        ("seed", "2"),
        ("gamma_position", "0"),
        ("gamma_direction", "0"),
        ("iterations", "3"),
        ("batch_size", "16"),
        ("views", "2"),
        ("view_size", "8"),
        ("samples", "6"),
        ("gt_samples", "16"),
        ("output", ckpt_dir.to_str().unwrap()),
    ]);
    qrf::tasks::run_fit3d(&fit3d).unwrap();
    let e = energies.to_str().unwrap();
    let ck = ckpt_dir.join("checkpoint.json");
    vec![
        ("fit2d", config(&[("seed", "3"), ("size", "8"), ("gamma_position", "1"), ("iterations", "6"), ("batch_size", "16"), ("eval_every", "2")])),
        ("fit3d", fit3d),
        (
            "render",
            config(&[("seed", "1"), ("checkpoint", ck.to_str().unwrap()), ("width", "8"), ("samples", "8"), ("quantum_pixels", "2"), ("quantum_qpe_bits", "4")]),
        ),
        ("qcount", config(&[("seed", "4"), ("energies", e), ("int_bits", "2"), ("total_bits", "3"), ("qpe_bits", "6")])),
        ("convergence", config(&[("seed", "5"), ("qpe_min", "3"), ("qpe_max", "5"), ("nc_min", "16"), ("nc_max", "128"), ("trials", "20")])),
        (
            "ablate",
            config(&[("seed", "6"), ("size", "8"), ("gamma_position", "1"), ("iterations", "4"), ("batch_size", "16"), ("repeats", "2")]),
        ),
    ]
}
