use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    /// Midpoints of `K` equal bins.
    Uniform,
    /// One uniform draw inside each bin.
    Stratified { seed: u64 },
}

/// `K` increasing depths in `[near, far]`.
pub fn sample_depths(near: f64, far: f64, k: usize, mode: SampleMode) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("need at least one sample per ray"));
    }
    if !(near.is_finite() && far.is_finite() && near < far) {
        return Err(Error::invalid(format!("invalid depth interval [{near}, {far}]")));
    }
    let bin = (far - near) / k as f64;
    Ok(match mode {
        SampleMode::Uniform => (0..k).map(|i| near + (i as f64 + 0.5) * bin).collect(),
        SampleMode::Stratified { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..k).map(|i| near + (i as f64 + rng.gen::<f64>()) * bin).collect()
        }
    })
}

/// Samples along one ray, front to back.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub depths: Vec<f64>,
    /// `δ_i = z_{i+1} - z_i`, last one `far - z_K`.
    pub deltas: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    pub sigmas: Vec<f64>,
}

impl SampleSet {
    pub fn spacings(depths: &[f64], far: f64) -> Vec<f64> {
        let mut d: Vec<f64> = depths.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(&last) = depths.last() {
            d.push(far - last);
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.depths.len();
        if self.deltas.len() != k || self.colors.len() != k || self.sigmas.len() != k {
            return Err(Error::invalid("sample set arrays differ in length"));
        }
        if self.depths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sample depths are not strictly increasing"));
        }
        if self.deltas.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::invalid("sample spacings must be positive"));
        }
        if self.sigmas.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::invalid("densities must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Composite {
    pub color: [f64; 3],
    /// `Σ_i w_i ∈ [0, 1]`.
    pub opacity: f64,
}

impl Composite {
    /// Adds `(1 - opacity)·background`.
    pub fn over(self, background: [f64; 3]) -> Composite {
        let t = 1.0 - self.opacity;
        Composite {
            color: [
                self.color[0] + t * background[0],
                self.color[1] + t * background[1],
                self.color[2] + t * background[2],
            ],
            opacity: self.opacity,
        }
    }
}

/// `ĉ = Σ_i T_i(1 - e^{-σ_i δ_i}) c_i` with `T_i = exp(-Σ_{j<i} σ_j δ_j)`.
pub fn composite(s: &SampleSet) -> Composite {
    let mut color = [0.0; 3];
    let mut opacity = 0.0;
    let mut optical_depth = 0.0f64;
    for i in 0..s.sigmas.len() {
        let t = (-optical_depth).exp();
        let tau = s.sigmas[i] * s.deltas[i];
        let w = t * -(-tau).exp_m1();
        for (acc, c) in color.iter_mut().zip(&s.colors[i]) {
            *acc += w * c;
        }
        opacity += w;
        optical_depth += tau;
    }
    Composite { color, opacity }
}

/// Composite over `background` plus gradients of `Σ_ch upstream[ch]·ĉ[ch]`
/// with respect to each sample color and density.
pub fn composite_grad(
    s: &SampleSet,
    background: [f64; 3],
    upstream: [f64; 3],
) -> (Composite, Vec<[f64; 3]>, Vec<f64>) {
    let k = s.sigmas.len();
    let mut trans = Vec::with_capacity(k + 1);
    let mut weights = Vec::with_capacity(k);
    let mut t = 1.0;
    for i in 0..k {
        trans.push(t);
        let e = (-s.sigmas[i] * s.deltas[i]).exp();
        weights.push(t * (1.0 - e));
        t *= e;
    }
    trans.push(t);
    let dot = |c: &[f64; 3]| upstream[0] * c[0] + upstream[1] * c[1] + upstream[2] * c[2];

    let mut d_colors = Vec::with_capacity(k);
    let mut d_sigmas = vec![0.0; k];
    // Suffix: upstream · (Σ_{i>k} w_i c_i + T_{K+1}·bg).
    let mut suffix = trans[k] * dot(&background);
    for i in (0..k).rev() {
        d_sigmas[i] = s.deltas[i] * (trans[i + 1] * dot(&s.colors[i]) - suffix);
        suffix += weights[i] * dot(&s.colors[i]);
    }
    for w in &weights {
        d_colors.push([w * upstream[0], w * upstream[1], w * upstream[2]]);
    }
    let out = composite(s).over(background);
    (out, d_colors, d_sigmas)
}
