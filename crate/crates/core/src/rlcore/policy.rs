//! Boltzmann (softmax) exploration over action values.

use super::distrib::softmax;
use rand::Rng;

/// Softmax probabilities over β·q (or −β·q when `negate`, matching the
/// low-value-preferring sign some formulations write).
pub fn boltzmann_probs(q_values: &[f64], beta: f64, negate: bool) -> Vec<f64> {
    debug_assert!(beta >= 0.0);
    let sign = if negate { -1.0 } else { 1.0 };
    let logits: Vec<f64> = q_values.iter().map(|&q| sign * beta * q).collect();
    let mut probs = vec![0.0; q_values.len()];
    softmax(&logits, &mut probs);
    probs
}

/// Sample an action from the Boltzmann distribution.
pub fn boltzmann_sample<R: Rng>(q_values: &[f64], beta: f64, negate: bool, rng: &mut R) -> usize {
    let probs = boltzmann_probs(q_values, beta, negate);
    let u: f64 = rng.gen();
    let mut cdf = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        cdf += p;
        if u < cdf {
            return a;
        }
    }
    probs.len() - 1
}
