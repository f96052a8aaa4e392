use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::EnergyTable;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MCResult {
    pub estimate: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Mean of `f(j)` over `n_samples` uniform draws of `j` with replacement.
pub fn mc_estimate(table: &EnergyTable, n_samples: usize, seed: u64) -> Result<MCResult> {
    if n_samples == 0 {
        return Err(Error::invalid("Monte Carlo needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = table.energies();
    let sum: f64 = (0..n_samples).map(|_| f[rng.gen_range(0..f.len())]).sum();
    Ok(MCResult { estimate: sum / n_samples as f64, n_samples, seed })
}
