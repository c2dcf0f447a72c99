//! Seeded randomness helpers shared by every stochastic stage.
//!
//! All randomness flows from a `u64` seed through [`seeded`]. Independent
//! streams (per behavior, per grid cell, per chain) are obtained with
//! [`derive_seed`], so results never depend on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream id (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws an index proportionally to non-negative `weights`.
///
/// The weights need not be normalized. Falls back to the last index with
/// positive weight if rounding pushes the draw past the cumulative total.
pub fn sample_weighted<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0 && total.is_finite(), "weights must have positive finite mass");
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Samples a probability vector from a symmetric Dirichlet.
///
/// Gamma draws are taken in log space (`G(a) = G(a+1) * U^(1/a)`) so that
/// concentrations far below one do not collapse every component to zero.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration + 1.0, 1.0).expect("positive concentration");
    let logs: Vec<f64> = (0..dim)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / concentration
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for x in &mut out {
        *x /= sum;
    }
    out
}

/// `ln(sum(exp(xs)))` without overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
