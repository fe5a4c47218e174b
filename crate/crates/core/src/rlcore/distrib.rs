//! Distributional value machinery: the fixed categorical support, the
//! shift-and-project target operator, KL loss with its logit gradient,
//! expectations, greedy selection, and multi-step returns.

use thiserror::Error;

/// Probabilities below this floor are clamped inside the KL logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DistribError {
    #[error("support needs at least 2 atoms, got {0}")]
    TooFewAtoms(usize),
    #[error("support range is empty: v_min {v_min} ≥ v_max {v_max}")]
    EmptyRange { v_min: f64, v_max: f64 },
}

/// Uniform categorical support on [v_min, v_max].
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: Vec<f64>,
    pub delta: f64,
}

impl Support {
    pub fn new(v_min: f64, v_max: f64, n_atoms: usize) -> Result<Self, DistribError> {
        if n_atoms < 2 {
            return Err(DistribError::TooFewAtoms(n_atoms));
        }
        if v_min >= v_max {
            return Err(DistribError::EmptyRange { v_min, v_max });
        }
        let delta = (v_max - v_min) / (n_atoms - 1) as f64;
        let atoms = (0..n_atoms).map(|i| v_min + i as f64 * delta).collect();
        Ok(Self { v_min, v_max, atoms, delta })
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// E[Z] for one probability vector over this support.
    pub fn expectation(&self, probs: &[f64]) -> f64 {
        debug_assert_eq!(probs.len(), self.atoms.len());
        probs.iter().zip(&self.atoms).map(|(p, z)| p * z).sum()
    }
}

// ---------------------------------------------------------------------------
// Categorical projection
// ---------------------------------------------------------------------------

/// Project a shifted distribution back onto the support: each shifted atom's
/// mass splits linearly between the two nearest support atoms, with
/// out-of-range values clipped to the edges. `shifted_atoms[j]` is the target
/// location of the mass `probs[j]`.
pub fn categorical_project(shifted_atoms: &[f64], probs: &[f64], support: &Support) -> Vec<f64> {
    debug_assert_eq!(shifted_atoms.len(), probs.len());
    let n = support.n_atoms();
    let mut out = vec![0.0; n];
    for (&g_raw, &p) in shifted_atoms.iter().zip(probs) {
        if p == 0.0 {
            continue;
        }
        let g = g_raw.clamp(support.v_min, support.v_max);
        // The min guards the one-ulp case where rounding pushes b past n−1.
        let b = ((g - support.v_min) / support.delta).min((n - 1) as f64);
        let l = b.floor() as usize;
        let u = b.ceil() as usize;
        if l == u {
            out[l] += p;
        } else {
            out[l] += p * (u as f64 - b);
            out[u] += p * (b - l as f64);
        }
    }
    out
}

/// Convenience for the Bellman target: project `r + γ·z` of the next-state
/// distribution onto the support.
pub fn project_bellman(
    reward: f64,
    gamma: f64,
    next_probs: &[f64],
    support: &Support,
) -> Vec<f64> {
    let shifted: Vec<f64> = support.atoms.iter().map(|z| reward + gamma * z).collect();
    categorical_project(&shifted, next_probs, support)
}

// ---------------------------------------------------------------------------
// KL loss
// ---------------------------------------------------------------------------

/// KL(target ‖ estimate) = Σ t·log(t/e), estimate floored at `PROB_FLOOR`.
pub fn kl_loss(estimate: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(estimate.len(), target.len());
    let mut loss = 0.0;
    for (&e, &t) in estimate.iter().zip(target) {
        if t > 0.0 {
            loss += t * (t / e.max(PROB_FLOOR)).ln();
        }
    }
    loss
}

/// Gradient of KL(target ‖ softmax(logits)) with respect to the logits:
/// p − t. (The softmax normalizer makes the floor irrelevant here.)
pub fn kl_logit_gradient(softmax_probs: &[f64], target: &[f64], grad: &mut [f64]) {
    for ((g, &p), &t) in grad.iter_mut().zip(softmax_probs).zip(target) {
        *g = p - t;
    }
}

/// Numerically-stable softmax (max subtraction), writing probabilities.
pub fn softmax(logits: &[f64], probs: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits) {
        let e = (l - max).exp();
        *p = e;
        sum += e;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
}

// ---------------------------------------------------------------------------
// Action selection and returns
// ---------------------------------------------------------------------------

/// Argmax of per-action distribution expectations; ties take the lowest
/// index. `probs_per_action` is actions×atoms row-major.
pub fn greedy_action(probs_per_action: &[f64], support: &Support) -> usize {
    let n = support.n_atoms();
    debug_assert!(!probs_per_action.is_empty() && probs_per_action.len() % n == 0);
    let mut best = 0;
    let mut best_q = f64::NEG_INFINITY;
    for (a, row) in probs_per_action.chunks(n).enumerate() {
        let q = support.expectation(row);
        if q > best_q {
            best = a;
            best_q = q;
        }
    }
    best
}

/// Truncated n-step return Σ_{k<n} γ^k·r_k (shorter when the episode ends).
pub fn multistep_return(rewards: &[f64], n: usize, gamma: f64) -> f64 {
    debug_assert!(n >= 1);
    let mut acc = 0.0;
    let mut scale = 1.0;
    for &r in rewards.iter().take(n) {
        acc += scale * r;
        scale *= gamma;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-9).collect();
        let s: f64 = v.iter().sum();
        for x in &mut v {
            *x /= s;
        }
        v
    }

    #[test]
    fn support_grid_is_uniform() {
        let s = Support::new(0.0, 10.0, 21).unwrap();
        assert_eq!(s.n_atoms(), 21);
        assert_eq!(s.atoms[0], 0.0);
        assert_eq!(s.atoms[20], 10.0);
        assert!((s.delta - 0.5).abs() < 1e-15);
        for w in s.atoms.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - s.delta).abs() < 1e-12);
        }
        assert_eq!(Support::new(0.0, 1.0, 1), Err(DistribError::TooFewAtoms(1)));
        assert!(matches!(Support::new(2.0, 2.0, 5), Err(DistribError::EmptyRange { .. })));
    }

    #[test]
    fn identity_shift_preserves_the_distribution() {
        let s = Support::new(-4.0, 4.0, 9).unwrap();
        let mut rng = rng_for(41, "proj", 0);
        for _ in 0..100 {
            let p = random_simplex(9, &mut rng);
            let out = project_bellman(0.0, 1.0, &p, &s);
            for (a, b) in out.iter().zip(&p) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_step_shift_splits_mass_evenly() {
        let s = Support::new(0.0, 1.0, 2).unwrap();
        let out = categorical_project(&[0.5, 1.5], &[1.0, 0.0], &s);
        assert!((out[0] - 0.5).abs() < 1e-12);
        assert!((out[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_mass_clips_to_the_edges() {
        let s = Support::new(0.0, 1.0, 3).unwrap();
        let out = categorical_project(&[-7.0, 9.0], &[0.25, 0.75], &s);
        assert!((out[0] - 0.25).abs() < 1e-12);
        assert!((out[2] - 0.75).abs() < 1e-12);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn projection_conserves_mass_for_random_triples() {
        let s = Support::new(-2.0, 6.0, 13).unwrap();
        let mut rng = rng_for(41, "proj", 1);
        for _ in 0..100_000 {
            let p = random_simplex(13, &mut rng);
            let r = rng.gen::<f64>() * 20.0 - 10.0;
            let gamma = rng.gen::<f64>();
            let out = project_bellman(r, gamma, &p, &s);
            let total: f64 = out.iter().sum();
            assert!((total - 1.0).abs() < 1e-6, "mass {total}");
            assert!(out.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn kl_reference_points() {
        let p = [0.25, 0.75];
        assert_eq!(kl_loss(&p, &p), 0.0);
        let loss = kl_loss(&[0.5, 0.5], &[1.0, 0.0]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // Zero-probability estimate is floored, not infinite.
        let loss = kl_loss(&[0.0, 1.0], &[1.0, 0.0]);
        assert!(loss.is_finite());
        assert!(loss > 0.0);
    }

    #[test]
    fn kl_is_nonnegative_for_random_pairs() {
        let mut rng = rng_for(41, "kl", 0);
        for _ in 0..10_000 {
            let e = random_simplex(11, &mut rng);
            let t = random_simplex(11, &mut rng);
            assert!(kl_loss(&e, &t) >= -1e-12);
        }
    }

    #[test]
    fn softmax_and_logit_gradient() {
        let logits = [1.0, 2.0, 3.0];
        let mut probs = [0.0; 3];
        softmax(&logits, &mut probs);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(probs[2] > probs[1] && probs[1] > probs[0]);
        // Shift-invariance.
        let shifted = [1001.0, 1002.0, 1003.0];
        let mut probs2 = [0.0; 3];
        softmax(&shifted, &mut probs2);
        for (a, b) in probs.iter().zip(&probs2) {
            assert!((a - b).abs() < 1e-12);
        }
        // Gradient p − t sums to zero.
        let target = [0.2, 0.3, 0.5];
        let mut grad = [0.0; 3];
        kl_logit_gradient(&probs, &target, &mut grad);
        let gsum: f64 = grad.iter().sum();
        assert!(gsum.abs() < 1e-12);
        assert!((grad[0] - (probs[0] - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn kl_logit_gradient_matches_finite_differences() {
        let mut rng = rng_for(41, "kl", 1);
        let logits: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let target = random_simplex(8, &mut rng);
        let loss_of = |l: &[f64]| {
            let mut p = vec![0.0; l.len()];
            softmax(l, &mut p);
            kl_loss(&p, &target)
        };
        let mut probs = vec![0.0; 8];
        softmax(&logits, &mut probs);
        let mut grad = vec![0.0; 8];
        kl_logit_gradient(&probs, &target, &mut grad);
        let h = 1e-6;
        for i in 0..8 {
            let mut lp = logits.clone();
            lp[i] += h;
            let mut lm = logits.clone();
            lm[i] -= h;
            let numeric = (loss_of(&lp) - loss_of(&lm)) / (2.0 * h);
            assert!((grad[i] - numeric).abs() < 1e-8, "{} vs {numeric}", grad[i]);
        }
    }

    #[test]
    fn greedy_action_reference_points() {
        let s = Support::new(0.0, 1.0, 2).unwrap();
        // One action.
        assert_eq!(greedy_action(&[1.0, 0.0], &s), 0);
        // Expectations 0.25 vs 0.75.
        let probs = [0.75, 0.25, 0.25, 0.75];
        assert_eq!(greedy_action(&probs, &s), 1);
        // Scaling the support leaves the argmax unchanged.
        let s10 = Support::new(0.0, 10.0, 2).unwrap();
        assert_eq!(greedy_action(&probs, &s10), 1);
        // Ties go to the lowest index.
        let tied = [0.5, 0.5, 0.5, 0.5];
        assert_eq!(greedy_action(&tied, &s), 0);
    }

    #[test]
    fn multistep_return_reference_points() {
        assert_eq!(multistep_return(&[1.0, 1.0, 1.0], 3, 1.0), 3.0);
        assert_eq!(multistep_return(&[5.0, 7.0, 9.0], 3, 0.0), 5.0);
        assert_eq!(multistep_return(&[1.0, 2.0, 4.0], 3, 0.5), 3.0);
        // Truncation at episode end.
        assert_eq!(multistep_return(&[2.0], 3, 0.5), 2.0);
        assert_eq!(multistep_return(&[], 3, 0.5), 0.0);
    }
}
