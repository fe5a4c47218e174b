//! Adaptive-moment gradient descent over `AgentParams`, with a safety valve:
//! a step whose gradients contain non-finite values is skipped and counted
//! instead of poisoning the parameters.

use super::params::AgentParams;

/// Adam optimizer state for one parameter set.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: AgentParams,
    v: AgentParams,
    /// Completed steps (bias-correction exponent).
    pub steps: u64,
    /// Steps rejected because a gradient was non-finite.
    pub skipped: u64,
}

impl Adam {
    pub fn new(template: &AgentParams, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: template.zeros_like(),
            v: template.zeros_like(),
            steps: 0,
            skipped: 0,
        }
    }

    /// Apply one update in place. Returns false (and changes nothing) when
    /// any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut AgentParams, grads: &AgentParams) -> bool {
        let finite = grads
            .tensors
            .iter()
            .all(|t| t.data.iter().all(|g| g.is_finite()));
        if !finite {
            self.skipped += 1;
            return false;
        }
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(self.m.tensors.iter_mut().zip(&mut self.v.tensors))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rlcore::params::Tensor;
    use crate::rng::rng_for;
    use rand::Rng;

    fn toy_params(value: f64) -> AgentParams {
        let mut p = AgentParams::new();
        p.push(Tensor { name: "w".into(), shape: vec![3], data: vec![value; 3] });
        p
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut p = toy_params(1.5);
        let g = p.zeros_like();
        let mut opt = Adam::new(&p, 1e-2);
        assert!(opt.step(&mut p, &g));
        assert!(p.tensors[0].data.iter().all(|&v| v == 1.5));
        assert_eq!(opt.steps, 1);
    }

    #[test]
    fn constant_gradient_first_step_moves_by_lr() {
        // With g constant, m_hat = g and v_hat = g², so step 1 moves by
        // lr·g/(|g|+eps) ≈ lr·sign(g).
        let mut p = toy_params(0.0);
        let mut g = p.zeros_like();
        g.tensors[0].data = vec![0.3, -2.0, 7.0];
        let mut opt = Adam::new(&p, 1e-2);
        opt.step(&mut p, &g);
        for (v, &gi) in p.tensors[0].data.iter().zip(&g.tensors[0].data) {
            let expect = -1e-2 * gi.signum();
            assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // Minimize f(w) = Σ (w − 3)²; gradient 2(w − 3).
        let mut p = toy_params(0.0);
        let mut opt = Adam::new(&p, 0.05);
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            for (gi, &w) in g.tensors[0].data.iter_mut().zip(&p.tensors[0].data) {
                *gi = 2.0 * (w - 3.0);
            }
            opt.step(&mut p, &g);
        }
        for &w in &p.tensors[0].data {
            assert!((w - 3.0).abs() < 1e-3, "{w}");
        }
    }

    #[test]
    fn non_finite_gradients_are_skipped_and_flagged() {
        let mut p = toy_params(1.0);
        let mut g = p.zeros_like();
        g.tensors[0].data = vec![1.0, f64::NAN, 0.0];
        let mut opt = Adam::new(&p, 1e-2);
        assert!(!opt.step(&mut p, &g));
        assert_eq!(opt.skipped, 1);
        assert_eq!(opt.steps, 0);
        assert!(p.tensors[0].data.iter().all(|&v| v == 1.0));
        g.tensors[0].data = vec![1.0, f64::INFINITY, 0.0];
        assert!(!opt.step(&mut p, &g));
        assert_eq!(opt.skipped, 2);
        // A clean gradient afterwards still works.
        g.tensors[0].data = vec![1.0, 1.0, 1.0];
        assert!(opt.step(&mut p, &g));
        assert_eq!(opt.steps, 1);
    }

    #[test]
    fn identical_runs_produce_identical_trajectories() {
        let mut rng = rng_for(51, "adam", 0);
        let grads: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let run = || {
            let mut p = toy_params(0.25);
            let mut opt = Adam::new(&p, 3e-3);
            for gd in &grads {
                let mut g = p.zeros_like();
                g.tensors[0].data = gd.clone();
                opt.step(&mut p, &g);
            }
            p
        };
        let a = run();
        let b = run();
        for (x, y) in a.tensors[0].data.iter().zip(&b.tensors[0].data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
