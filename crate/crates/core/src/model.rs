//! The hybrid radiance field `F(p, d) → (c, σ)` and its training step.
//!
//! Evaluation runs in two stages on one register:
//!
//! * stage A encodes `γ(p)` on the low `n_A` qubits and runs template A;
//!   the σ head reads `⟨Z⟩` of those qubits, so σ never sees `d`;
//! * stage B appends `γ(d)` on `n_B` fresh high qubits, runs template B
//!   over all `n_A + n_B` qubits, and the color head reads all of them.
//!
//! Heads are `σ = softplus(w·act(u_A⊙e_A + v_A) + b)` and
//! `c = sigmoid(W·act(u_B⊙e_B + v_B) + b_c)`.
//!
//! Parameter layout (one flat vector): template A angles, template B
//! angles, then `u_A, v_A, w_σ, b_σ, u_B, v_B, W_c` (3 rows), `b_c`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::EncoderKind;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::pqc::{ParametricCircuit, PqcTemplate, TemplateKind};
use crate::render::{composite, composite_grad, FieldSample, RadianceField, Ray, RenderOptions, SampleSet};
use crate::sim::Statevector;

/// Frequency of the sine activation.
pub const SINE_OMEGA: f64 = 30.0;

/// Largest register the model will build.
pub const MAX_MODEL_QUBITS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Relu,
    Elu,
    Softplus,
    Sine,
    QRelu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 5] = [
        ActivationKind::Relu,
        ActivationKind::Elu,
        ActivationKind::Softplus,
        ActivationKind::Sine,
        ActivationKind::QRelu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Elu => "elu",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Sine => "sine",
            ActivationKind::QRelu => "qrelu",
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            ActivationKind::Softplus => softplus(z),
            ActivationKind::Sine => (SINE_OMEGA * z).sin(),
            ActivationKind::QRelu => {
                if z > 0.0 {
                    z
                } else {
                    0.01 * z - z
                }
            }
        }
    }

    /// Derivative; ReLU takes 0 and QReLU takes 1 at `z = 0`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => (z > 0.0) as u8 as f64,
            ActivationKind::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            ActivationKind::Softplus => sigmoid(z),
            ActivationKind::Sine => SINE_OMEGA * (SINE_OMEGA * z).cos(),
            ActivationKind::QRelu => {
                if z >= 0.0 {
                    1.0
                } else {
                    -0.99
                }
            }
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown activation `{s}` (expected relu|elu|softplus|sine|qrelu)")))
    }
}

pub fn activate(kind: ActivationKind, z: f64) -> f64 {
    kind.apply(z)
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `γ(p)`: for `l = 0..L`, for each component `x`, `(sin 2^l πx, cos 2^l πx)`.
/// `L = 0` returns `p`.
pub fn positional_encode(p: &[f64], levels: usize) -> Result<Vec<f64>> {
    if let Some(x) = p.iter().find(|x| !(x.abs() <= 1.0 + 1e-9)) {
        return Err(Error::invalid(format!("coordinate {x} outside [-1, 1]")));
    }
    if levels == 0 {
        return Ok(p.to_vec());
    }
    let mut out = Vec::with_capacity(2 * levels * p.len());
    for l in 0..levels {
        let f = (1u64 << l) as f64 * std::f64::consts::PI;
        for &x in p {
            let (s, c) = (f * x).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
    Ok(out)
}

/// `(θ, φ)` polar/azimuth angles to a unit vector.
pub fn direction_to_unit(d: [f64; 2]) -> [f64; 3] {
    let (st, ct) = d[0].sin_cos();
    let (sp, cp) = d[1].sin_cos();
    [st * cp, st * sp, ct]
}

pub fn direction_angles(v: &Vector3<f64>) -> [f64; 2] {
    let u = v.normalize();
    [u.z.clamp(-1.0, 1.0).acos(), u.y.atan2(u.x)]
}

#[derive(Clone, Debug, PartialEq)]
pub struct QrfConfig {
    pub encoder: EncoderKind,
    pub circuit: TemplateKind,
    pub layers: usize,
    pub activation: ActivationKind,
    /// `L_p`.
    pub position_frequencies: usize,
    /// `L_d`.
    pub direction_frequencies: usize,
    /// 2 for image regression, 3 for scenes.
    pub position_dims: usize,
    pub use_direction: bool,
}

impl Default for QrfConfig {
    fn default() -> Self {
        QrfConfig {
            encoder: EncoderKind::DenseAngle,
            circuit: TemplateKind::Circuit5,
            layers: 1,
            activation: ActivationKind::QRelu,
            position_frequencies: 4,
            direction_frequencies: 2,
            position_dims: 3,
            use_direction: true,
        }
    }
}

impl QrfConfig {
    fn position_features(&self) -> usize {
        features(self.position_dims, self.position_frequencies)
    }

    fn direction_features(&self) -> usize {
        features(3, self.direction_frequencies)
    }
}

fn features(dims: usize, levels: usize) -> usize {
    if levels == 0 {
        dims
    } else {
        2 * levels * dims
    }
}

/// Index ranges of each block in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub theta_a: Range<usize>,
    pub theta_b: Range<usize>,
    pub u_a: Range<usize>,
    pub v_a: Range<usize>,
    pub w_sigma: Range<usize>,
    pub b_sigma: usize,
    pub u_b: Range<usize>,
    pub v_b: Range<usize>,
    /// Row-major `3 × n`.
    pub w_color: Range<usize>,
    pub b_color: Range<usize>,
    pub total: usize,
}

impl ParamLayout {
    fn new(pa: usize, pb: usize, na: usize, n: usize) -> Self {
        let mut at = 0;
        let mut take = |k: usize| {
            let r = at..at + k;
            at += k;
            r
        };
        let theta_a = take(pa);
        let theta_b = take(pb);
        let u_a = take(na);
        let v_a = take(na);
        let w_sigma = take(na);
        let b_sigma = take(1).start;
        let u_b = take(n);
        let v_b = take(n);
        let w_color = take(3 * n);
        let b_color = take(3);
        ParamLayout { theta_a, theta_b, u_a, v_a, w_sigma, b_sigma, u_b, v_b, w_color, b_color, total: at }
    }
}

#[derive(Clone, Debug)]
pub struct QrfModel {
    config: QrfConfig,
    qubits_a: usize,
    qubits_b: usize,
    template_a: PqcTemplate,
    template_b: PqcTemplate,
    layout: ParamLayout,
}

impl QrfModel {
    pub fn new(config: QrfConfig) -> Result<Self> {
        if !(2..=3).contains(&config.position_dims) {
            return Err(Error::Config(format!("position_dims must be 2 or 3, got {}", config.position_dims)));
        }
        if config.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        let qubits_a = config.encoder.qubits_for(config.position_features());
        let qubits_b = if config.use_direction { config.encoder.qubits_for(config.direction_features()) } else { 0 };
        let n = qubits_a + qubits_b;
        if n > MAX_MODEL_QUBITS {
            return Err(Error::ResourceLimit(format!(
                "{} encoding with L_p={}, L_d={} needs {n} qubits, model cap is {MAX_MODEL_QUBITS}",
                config.encoder, config.position_frequencies, config.direction_frequencies
            )));
        }
        let template_a = PqcTemplate::new(config.circuit, qubits_a, config.layers)?;
        let template_b = PqcTemplate::new(config.circuit, n, config.layers)?;
        let layout = ParamLayout::new(template_a.param_count(), template_b.param_count(), qubits_a, n);
        Ok(QrfModel { config, qubits_a, qubits_b, template_a, template_b, layout })
    }

    pub fn config(&self) -> &QrfConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// `(n_A, n_B)`.
    pub fn qubits(&self) -> (usize, usize) {
        (self.qubits_a, self.qubits_b)
    }

    /// Angles uniform in `[-π, π)`, unit input scales, zero shifts and
    /// biases, output weights uniform in `±1/√fan_in`.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = &self.layout;
        let mut p = vec![0.0; l.total];
        for i in l.theta_a.start..l.theta_b.end {
            p[i] = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        }
        p[l.u_a.clone()].fill(1.0);
        p[l.u_b.clone()].fill(1.0);
        let ka = 1.0 / (self.qubits_a as f64).sqrt();
        for i in l.w_sigma.clone() {
            p[i] = rng.gen_range(-ka..ka);
        }
        let kb = 1.0 / ((self.qubits_a + self.qubits_b) as f64).sqrt();
        for i in l.w_color.clone() {
            p[i] = rng.gen_range(-kb..kb);
        }
        p
    }

    /// Builds the circuits for one parameter vector.
    pub fn bind<'a>(&'a self, params: &'a [f64]) -> Result<BoundModel<'a>> {
        if params.len() != self.layout.total {
            return Err(Error::invalid(format!(
                "model takes {} parameters, got {}",
                self.layout.total,
                params.len()
            )));
        }
        if let Some(x) = params.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite model parameter {x}")));
        }
        let a = self.template_a.build(&params[self.layout.theta_a.clone()])?;
        let b = self.template_b.build(&params[self.layout.theta_b.clone()])?;
        let n = self.qubits_a + self.qubits_b;
        let combined = a.remap(n, &(0..self.qubits_a).collect::<Vec<_>>())?.then(&b)?;
        Ok(BoundModel { model: self, params, stage_a: a, stage_b: b, combined })
    }

    pub fn evaluate(&self, params: &[f64], p: &[f64], d: [f64; 2]) -> Result<FieldSample> {
        self.bind(params)?.evaluate(p, d)
    }
}

/// Model with its circuits built for fixed parameters.
pub struct BoundModel<'a> {
    model: &'a QrfModel,
    params: &'a [f64],
    stage_a: ParametricCircuit,
    stage_b: ParametricCircuit,
    combined: ParametricCircuit,
}

/// Intermediates of one evaluation, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    input_a: Statevector,
    input_full: Statevector,
    e_a: Vec<f64>,
    pre_a: Vec<f64>,
    h_a: Vec<f64>,
    z_sigma: f64,
    e_b: Vec<f64>,
    pre_b: Vec<f64>,
    h_b: Vec<f64>,
    pub sample: FieldSample,
}

impl BoundModel<'_> {
    fn encode(&self, features: &[f64], qubits: usize) -> Result<Statevector> {
        let enc = self.model.config.encoder;
        let scaled: Vec<f64> = features.iter().map(|&x| enc.scale_feature(x)).collect();
        enc.prepare(&scaled, qubits)
    }

    fn check_position(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.model.config.position_dims {
            return Err(Error::invalid(format!(
                "expected a {}-dimensional position, got {}",
                self.model.config.position_dims,
                p.len()
            )));
        }
        Ok(())
    }

    fn sigma_head(&self, e_a: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let (l, act, prm) = (&self.model.layout, self.model.config.activation, self.params);
        let pre: Vec<f64> = e_a.iter().enumerate().map(|(i, e)| prm[l.u_a.start + i] * e + prm[l.v_a.start + i]).collect();
        let h: Vec<f64> = pre.iter().map(|&z| act.apply(z)).collect();
        let z = h.iter().enumerate().map(|(i, x)| prm[l.w_sigma.start + i] * x).sum::<f64>() + prm[l.b_sigma];
        (pre, h, z)
    }

    /// Density from stage A alone.
    pub fn sigma(&self, p: &[f64]) -> Result<f64> {
        self.check_position(p)?;
        let input_a = self.encode(&positional_encode(p, self.model.config.position_frequencies)?, self.model.qubits_a)?;
        let state_a = self.stage_a.circuit.run(&input_a)?;
        let e_a = state_a.expectations_z(&(0..self.model.qubits_a).collect::<Vec<_>>())?;
        Ok(softplus(self.sigma_head(&e_a).2))
    }

    pub fn trace(&self, p: &[f64], d: [f64; 2]) -> Result<Trace> {
        self.check_position(p)?;
        let m = self.model;
        let (na, nb) = (m.qubits_a, m.qubits_b);
        let (l, act, prm) = (&m.layout, m.config.activation, self.params);

        let input_a = self.encode(&positional_encode(p, m.config.position_frequencies)?, na)?;
        let state_a = self.stage_a.circuit.run(&input_a)?;
        let e_a = state_a.expectations_z(&(0..na).collect::<Vec<_>>())?;
        let (pre_a, h_a, z_sigma) = self.sigma_head(&e_a);
        let sigma = softplus(z_sigma);

        let (state_full, input_full) = if nb > 0 {
            let unit = direction_to_unit(d);
            let input_b = self.encode(&positional_encode(&unit, m.config.direction_frequencies)?, nb)?;
            (state_a.tensor(&input_b)?, input_a.tensor(&input_b)?)
        } else {
            (state_a, input_a.clone())
        };
        let state_b = self.stage_b.circuit.run(&state_full)?;
        let n = na + nb;
        let e_b = state_b.expectations_z(&(0..n).collect::<Vec<_>>())?;
        let pre_b: Vec<f64> = e_b.iter().enumerate().map(|(i, e)| prm[l.u_b.start + i] * e + prm[l.v_b.start + i]).collect();
        let h_b: Vec<f64> = pre_b.iter().map(|&z| act.apply(z)).collect();
        let mut color = [0.0; 3];
        for (ch, c) in color.iter_mut().enumerate() {
            let row = l.w_color.start + ch * n;
            let z = h_b.iter().enumerate().map(|(i, x)| prm[row + i] * x).sum::<f64>() + prm[l.b_color.start + ch];
            *c = sigmoid(z);
        }
        Ok(Trace {
            input_a,
            input_full,
            e_a,
            pre_a,
            h_a,
            z_sigma,
            e_b,
            pre_b,
            h_b,
            sample: FieldSample { color, sigma },
        })
    }

    pub fn evaluate(&self, p: &[f64], d: [f64; 2]) -> Result<FieldSample> {
        Ok(self.trace(p, d)?.sample)
    }

    /// Accumulates into `grad` the gradient of `dc·c + dsigma·σ`.
    pub fn backward(&self, t: &Trace, dc: [f64; 3], dsigma: f64, grad: &mut [f64]) -> Result<()> {
        let m = self.model;
        let (l, act, prm) = (&m.layout, m.config.activation, self.params);
        let (na, n) = (m.qubits_a, m.qubits_a + m.qubits_b);

        if dc.iter().any(|&x| x != 0.0) {
            let mut dh = vec![0.0; n];
            for ch in 0..3 {
                let c = t.sample.color[ch];
                let dz = dc[ch] * c * (1.0 - c);
                let row = l.w_color.start + ch * n;
                for i in 0..n {
                    grad[row + i] += dz * t.h_b[i];
                    dh[i] += dz * prm[row + i];
                }
                grad[l.b_color.start + ch] += dz;
            }
            let mut de = vec![0.0; n];
            for i in 0..n {
                let da = dh[i] * act.derivative(t.pre_b[i]);
                grad[l.u_b.start + i] += da * t.e_b[i];
                grad[l.v_b.start + i] += da;
                de[i] = da * prm[l.u_b.start + i];
            }
            let jac = self.combined.shift_gradient(&t.input_full, &(0..n).collect::<Vec<_>>())?;
            let theta: Vec<usize> = l.theta_a.clone().chain(l.theta_b.clone()).collect();
            for (row, &k) in jac.iter().zip(&theta) {
                grad[k] += row.iter().zip(&de).map(|(j, d)| j * d).sum::<f64>();
            }
        }

        if dsigma != 0.0 {
            let dz = dsigma * sigmoid(t.z_sigma);
            grad[l.b_sigma] += dz;
            let mut de = vec![0.0; na];
            for i in 0..na {
                grad[l.w_sigma.start + i] += dz * t.h_a[i];
                let da = dz * prm[l.w_sigma.start + i] * act.derivative(t.pre_a[i]);
                grad[l.u_a.start + i] += da * t.e_a[i];
                grad[l.v_a.start + i] += da;
                de[i] = da * prm[l.u_a.start + i];
            }
            let jac = self.stage_a.shift_gradient(&t.input_a, &(0..na).collect::<Vec<_>>())?;
            for (row, k) in jac.iter().zip(l.theta_a.clone()) {
                grad[k] += row.iter().zip(&de).map(|(j, d)| j * d).sum::<f64>();
            }
        }
        Ok(())
    }
}

impl RadianceField for BoundModel<'_> {
    fn sample(&self, p: &nalgebra::Point3<f64>, dir: &Vector3<f64>) -> Result<FieldSample> {
        let pos = [p.x, p.y, p.z];
        self.evaluate(&pos[..self.model.config.position_dims], direction_angles(dir))
    }
}

/// Mean squared error over samples and channels.
pub fn mse_loss(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::invalid("loss needs a non-empty batch of matching predictions and targets"));
    }
    let s: f64 = pred.iter().zip(target).flat_map(|(p, t)| (0..3).map(move |c| (p[c] - t[c]).powi(2))).sum();
    Ok(s / (3 * pred.len()) as f64)
}

/// One supervised pixel: a position queried directly (image regression).
#[derive(Clone, Debug, PartialEq)]
pub struct PointSample {
    pub position: Vec<f64>,
    pub target: [f64; 3],
}

/// One supervised pixel of a rendered view.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySample {
    pub ray: Ray,
    pub target: [f64; 3],
}

/// What a training batch is made of.
#[derive(Clone, Copy, Debug)]
pub enum Batch<'a> {
    Points(&'a [PointSample]),
    Rays(&'a [RaySample], &'a RenderOptions),
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        match self {
            Batch::Points(b) => b.len(),
            Batch::Rays(b, _) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loss and gradient of one item, scaled by `1/(3B)`.
fn item_loss_grad(bound: &BoundModel<'_>, batch: Batch<'_>, i: usize, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let scale = 1.0 / (3 * batch.len()) as f64;
    let mut grad = if want_grad { vec![0.0; bound.model.layout.total] } else { Vec::new() };
    match batch {
        Batch::Points(items) => {
            let s = &items[i];
            let t = bound.trace(&s.position, [0.0, 0.0])?;
            let c = t.sample.color;
            let loss: f64 = (0..3).map(|k| (c[k] - s.target[k]).powi(2)).sum::<f64>() * scale;
            if want_grad {
                let dc = [0, 1, 2].map(|k| 2.0 * (c[k] - s.target[k]) * scale);
                bound.backward(&t, dc, 0.0, &mut grad)?;
            }
            Ok((loss, grad))
        }
        Batch::Rays(items, opts) => {
            let s = &items[i];
            let Some((depths, deltas)) = opts.depths(&s.ray, i as u64)? else {
                let loss = (0..3).map(|k| (opts.background[k] - s.target[k]).powi(2)).sum::<f64>() * scale;
                return Ok((loss, grad));
            };
            let dir = direction_angles(&s.ray.direction);
            let dims = bound.model.config.position_dims;
            let traces = depths
                .iter()
                .map(|&z| {
                    let p = s.ray.at(z);
                    bound.trace(&[p.x, p.y, p.z][..dims], dir)
                })
                .collect::<Result<Vec<_>>>()?;
            let set = SampleSet {
                colors: traces.iter().map(|t| t.sample.color).collect(),
                sigmas: traces.iter().map(|t| t.sample.sigma).collect(),
                depths,
                deltas,
            };
            let c = composite(&set).over(opts.background).color;
            let loss: f64 = (0..3).map(|k| (c[k] - s.target[k]).powi(2)).sum::<f64>() * scale;
            if want_grad {
                let up = [0, 1, 2].map(|k| 2.0 * (c[k] - s.target[k]) * scale);
                let (_, d_colors, d_sigmas) = composite_grad(&set, opts.background, up);
                for ((t, dc), ds) in traces.iter().zip(d_colors).zip(d_sigmas) {
                    bound.backward(t, dc, ds, &mut grad)?;
                }
            }
            Ok((loss, grad))
        }
    }
}

fn batch_eval(model: &QrfModel, params: &[f64], batch: Batch<'_>, exec: Execution, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let bound = model.bind(params)?;
    let parts = exec::map_range(exec, batch.len(), |i| item_loss_grad(&bound, batch, i, want_grad));
    // Reduced in item order so the result does not depend on scheduling.
    let mut loss = 0.0;
    let mut grad = vec![0.0; if want_grad { model.layout.total } else { 0 }];
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

/// Mean squared color error over the batch.
pub fn loss(model: &QrfModel, params: &[f64], batch: Batch<'_>, exec: Execution) -> Result<f64> {
    Ok(batch_eval(model, params, batch, exec, false)?.0)
}

pub fn loss_and_grad(model: &QrfModel, params: &[f64], batch: Batch<'_>, exec: Execution) -> Result<(f64, Vec<f64>)> {
    batch_eval(model, params, batch, exec, true)
}

/// Gradient descent with heavy-ball momentum: `v ← μv + g`, `θ ← θ - η v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub lr: f64,
    pub momentum: f64,
    pub velocity: Vec<f64>,
}

impl Optimizer {
    pub fn new(lr: f64, momentum: f64, n_params: usize) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) || !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("need lr >= 0 and 0 <= momentum < 1, got lr={lr}, momentum={momentum}")));
        }
        Ok(Optimizer { lr, momentum, velocity: vec![0.0; n_params] })
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= self.lr * *v;
        }
    }
}

/// One optimizer step; returns the updated parameters and the loss before
/// the update.
pub fn train_step(
    model: &QrfModel,
    opt: &mut Optimizer,
    params: &[f64],
    batch: Batch<'_>,
    iteration: usize,
    exec: Execution,
) -> Result<(Vec<f64>, f64)> {
    let (loss, grad) = loss_and_grad(model, params, batch, exec)?;
    if !loss.is_finite() {
        return Err(Error::Diverged { iteration, detail: format!("loss is {loss}") });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged { iteration, detail: format!("gradient entry {i} is {}", grad[i]) });
    }
    let mut next = params.to_vec();
    opt.step(&mut next, &grad);
    if let Some(i) = next.iter().position(|p| !p.is_finite()) {
        return Err(Error::Diverged { iteration, detail: format!("parameter {i} became {}", next[i]) });
    }
    Ok((next, loss))
}
