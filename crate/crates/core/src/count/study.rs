//! Error-versus-cost study of quantum counting against Monte Carlo.

use serde::Serialize;

use super::grover::GroverOperator;
use super::mc::mc_estimate;
use super::oracle::OracleMode;
use super::{EnergyTable, FixedPointSpec};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

/// Carried into the report so the cost axis is read correctly.
pub const COST_NOTE: &str =
    "cost axis assumes one oracle query costs the same ray samples as one classical path";

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub qpe_bits: Vec<usize>,
    pub mc_samples: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub mode: OracleMode,
    pub exec: Execution,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    /// `"quantum"` or `"mc"`.
    pub method: &'static str,
    /// `N_q = 2^t - 1` or `N_c`.
    pub cost: u64,
    /// Quantum: `|mean̂ - mean|`. MC: RMSE over trials.
    pub error: f64,
    /// Quantum: running maximum of `error` over this and all larger costs.
    /// MC: equal to `error`.
    pub envelope: f64,
    /// Quantum: analytic bound in energy units. MC: `√(Var f / N_c)`.
    pub reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub true_mean: f64,
    pub quantized_mean: f64,
    /// Log-log slope of the MC RMSE against `N_c`.
    pub mc_slope: Option<f64>,
    /// Log-log slope of the quantum error envelope against `N_q`; absent
    /// when the envelope reaches zero (exactly representable phase).
    pub quantum_slope: Option<f64>,
    pub quantum_bound_slope: Option<f64>,
    pub note: &'static str,
}

/// Quantum errors below this are rounding noise on an exact readout.
const ZERO_ERROR: f64 = 1e-12;

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("slope fit needs at least two paired points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("slope fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs distinct x values"));
    }
    Ok(sxy / sxx)
}

/// Trial `i` at sample count `n_c` uses its own seed, so results do not
/// depend on the execution order.
fn trial_seed(seed: u64, n_c: usize, trial: usize) -> u64 {
    seed ^ (n_c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (trial as u64).wrapping_mul(0xd1b5_4a32_d192_ed03)
}

pub fn convergence_study(table: &EnergyTable, spec: &FixedPointSpec, cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.qpe_bits.is_empty() && cfg.mc_samples.is_empty() {
        return Err(Error::invalid("convergence study needs a non-empty range"));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("convergence study needs at least one trial"));
    }
    let true_mean = table.mean();
    let quantized_mean = table.quantized_mean(spec)?;

    // Building G extracts the oracle diagonal once; every t reuses it.
    let mut qbits = cfg.qpe_bits.clone();
    qbits.sort_unstable();
    let quantum: Vec<(u64, f64, f64)> = if qbits.is_empty() {
        Vec::new()
    } else {
        let g = GroverOperator::from_table(table, spec, cfg.mode)?;
        let n = table.len() as f64;
        exec::try_map(cfg.exec, &qbits, |&t| {
            let c = g.count(t)?;
            let mean = spec.step() * (c.estimate - n) / n;
            Ok::<_, Error>((c.oracle_queries, (mean - quantized_mean).abs(), spec.step() * c.error_bound / n))
        })?
    };
    let mut rows = Vec::new();
    let mut running = 0.0f64;
    let mut envelope = vec![0.0; quantum.len()];
    for (i, q) in quantum.iter().enumerate().rev() {
        running = running.max(q.1);
        envelope[i] = running;
    }
    for (q, env) in quantum.iter().zip(&envelope) {
        rows.push(StudyRow { method: "quantum", cost: q.0, error: q.1, envelope: *env, reference: q.2 });
    }

    let mut samples = cfg.mc_samples.clone();
    samples.sort_unstable();
    let var = table.variance();
    for &n_c in &samples {
        let errs = exec::map_range(cfg.exec, cfg.trials, |i| {
            mc_estimate(table, n_c, trial_seed(cfg.seed, n_c, i)).map(|r| (r.estimate - true_mean).powi(2))
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let rmse = (errs.iter().sum::<f64>() / cfg.trials as f64).sqrt();
        rows.push(StudyRow {
            method: "mc",
            cost: n_c as u64,
            error: rmse,
            envelope: rmse,
            reference: (var / n_c as f64).sqrt(),
        });
    }

    let slope = |method: &str, pick: fn(&StudyRow) -> f64| {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.method == method).map(|r| (r.cost as f64, pick(r))).unzip();
        fit_loglog_slope(&xs, &ys).ok()
    };
    let mc_slope = slope("mc", |r| r.error);
    let quantum_slope = slope("quantum", |r| if r.envelope < ZERO_ERROR { 0.0 } else { r.envelope });
    let quantum_bound_slope = slope("quantum", |r| r.reference);
    Ok(StudyReport { rows, true_mean, quantized_mean, mc_slope, quantum_slope, quantum_bound_slope, note: COST_NOTE })
}
