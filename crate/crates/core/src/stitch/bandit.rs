//! Thompson sampling around the LR estimate.

use rand::Rng;
use rand_distr::{Beta, Distribution};

/// Draws from `Beta(1 + p n, 1 + (1 - p) n)`: uniform when `n = 0`, concentrating
/// on `p` as the trial count grows.
pub fn thompson_sample<R: Rng + ?Sized>(p: f64, n: f64, rng: &mut R) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let n = if n.is_finite() { n.max(0.0) } else { 0.0 };
    let beta =
        Beta::new(1.0 + p * n, 1.0 + (1.0 - p) * n).expect("shape parameters are at least 1");
    beta.sample(rng)
}
