//! The Q-network: a convolutional encoder (3×3 same-padding stack → linear →
//! dropout) feeding a dueling pair of two-noisy-layer streams that emit a
//! categorical value distribution per action. Forward passes cache every
//! intermediate needed by the hand-written reverse pass.

use super::distrib::softmax;
use super::layers::{
    apply_mask, conv3x3_backward, conv3x3_forward, dropout_mask, linear_backward, linear_forward,
    noisy_backward, noisy_forward, relu, relu_backward, LayerNoise,
};
use super::params::{AgentParams, Tensor};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("observation has {got} values, the encoder expects {want}")]
    ShapeMismatch { got: usize, want: usize },
}

/// Architecture of one Q-network.
#[derive(Debug, Clone)]
pub struct QNetConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    /// Output channels of each 3×3 convolution.
    pub conv_channels: Vec<usize>,
    /// Width of the encoder's hidden vector.
    pub hidden: usize,
    /// Width of the first noisy layer in each dueling stream.
    pub stream: usize,
    pub actions: usize,
    pub atoms: usize,
    /// Dropout rate after the encoder linear layer (training only).
    pub dropout: f64,
    /// Noisy-layer σ initialization scale (σ = sigma0/√fan_in).
    pub sigma0: f64,
}

impl QNetConfig {
    pub fn obs_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    fn flat_len(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(self.in_channels)
            * self.height
            * self.width
    }
}

/// Parameter indices of one noisy layer inside the `AgentParams` layout.
#[derive(Debug, Clone, Copy)]
struct NoisyIdx {
    mu_w: usize,
    sigma_w: usize,
    mu_b: usize,
    sigma_b: usize,
    n_in: usize,
    n_out: usize,
}

/// Fresh factorized noise for the four noisy layers.
#[derive(Debug, Clone)]
pub struct NetNoise {
    pub v1: LayerNoise,
    pub v2: LayerNoise,
    pub a1: LayerNoise,
    pub a2: LayerNoise,
}

/// All intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Pre-activation output of each conv layer.
    conv_pre: Vec<Vec<f64>>,
    /// Post-activation output of each conv layer.
    conv_out: Vec<Vec<f64>>,
    lin_pre: Vec<f64>,
    /// Post-ReLU, post-dropout encoder output (the exported hidden vector).
    pub hidden: Vec<f64>,
    mask: Option<Vec<f64>>,
    v1_pre: Vec<f64>,
    v1_out: Vec<f64>,
    a1_pre: Vec<f64>,
    a1_out: Vec<f64>,
    /// Dueling-aggregated logits, actions×atoms row-major.
    pub logits: Vec<f64>,
    /// Per-action softmax of the logits over atoms.
    pub probs: Vec<f64>,
}

/// Dueling distributional Q-network.
#[derive(Debug, Clone)]
pub struct QNet {
    pub cfg: QNetConfig,
    pub params: AgentParams,
    conv_idx: Vec<(usize, usize)>,
    lin_idx: (usize, usize),
    v1: NoisyIdx,
    v2: NoisyIdx,
    a1: NoisyIdx,
    a2: NoisyIdx,
}

fn uniform_fill<R: Rng>(data: &mut [f64], bound: f64, rng: &mut R) {
    for v in data {
        *v = (rng.gen::<f64>() * 2.0 - 1.0) * bound;
    }
}

/// Push the four tensors of one noisy layer (μ_w, σ_w, μ_b, σ_b) with
/// μ ~ U(±1/√n_in) and σ = σ0/√n_in.
fn init_noisy<R: Rng>(
    name: &str,
    n_in: usize,
    n_out: usize,
    sigma0: f64,
    params: &mut AgentParams,
    rng: &mut R,
) -> NoisyIdx {
    let bound = 1.0 / (n_in as f64).sqrt();
    let sigma = sigma0 / (n_in as f64).sqrt();
    let mut mu_w = Tensor::zeros(&format!("{name}.mu_w"), &[n_out, n_in]);
    uniform_fill(&mut mu_w.data, bound, rng);
    let mut sigma_w = Tensor::zeros(&format!("{name}.sigma_w"), &[n_out, n_in]);
    sigma_w.data.fill(sigma);
    let mut mu_b = Tensor::zeros(&format!("{name}.mu_b"), &[n_out]);
    uniform_fill(&mut mu_b.data, bound, rng);
    let mut sigma_b = Tensor::zeros(&format!("{name}.sigma_b"), &[n_out]);
    sigma_b.data.fill(sigma);
    NoisyIdx {
        mu_w: params.push(mu_w),
        sigma_w: params.push(sigma_w),
        mu_b: params.push(mu_b),
        sigma_b: params.push(sigma_b),
        n_in,
        n_out,
    }
}

impl QNet {
    /// Build and initialize a network. Conv and linear weights are uniform
    /// in ±1/√fan_in; noisy layers use μ ~ U(±1/√n) and σ = σ0/√n.
    pub fn new(cfg: QNetConfig, rng: &mut impl Rng) -> Self {
        let mut params = AgentParams::new();
        let mut conv_idx = Vec::new();
        let mut c_in = cfg.in_channels;
        for (i, &c_out) in cfg.conv_channels.iter().enumerate() {
            let fan_in = c_in * 9;
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut k = Tensor::zeros(&format!("conv{i}.kernel"), &[c_out, c_in, 3, 3]);
            uniform_fill(&mut k.data, bound, rng);
            let mut b = Tensor::zeros(&format!("conv{i}.bias"), &[c_out]);
            uniform_fill(&mut b.data, bound, rng);
            conv_idx.push((params.push(k), params.push(b)));
            c_in = c_out;
        }
        let flat = cfg.flat_len();
        let bound = 1.0 / (flat as f64).sqrt();
        let mut w = Tensor::zeros("encoder.weight", &[cfg.hidden, flat]);
        uniform_fill(&mut w.data, bound, rng);
        let mut b = Tensor::zeros("encoder.bias", &[cfg.hidden]);
        uniform_fill(&mut b.data, bound, rng);
        let lin_idx = (params.push(w), params.push(b));
        let v1 = init_noisy("value1", cfg.hidden, cfg.stream, cfg.sigma0, &mut params, rng);
        let v2 = init_noisy("value2", cfg.stream, cfg.atoms, cfg.sigma0, &mut params, rng);
        let a1 = init_noisy("adv1", cfg.hidden, cfg.stream, cfg.sigma0, &mut params, rng);
        let a2 =
            init_noisy("adv2", cfg.stream, cfg.actions * cfg.atoms, cfg.sigma0, &mut params, rng);
        Self { cfg, params, conv_idx, lin_idx, v1, v2, a1, a2 }
    }

    /// Draw fresh factorized noise for every noisy layer.
    pub fn sample_noise(&self, rng: &mut impl Rng) -> NetNoise {
        NetNoise {
            v1: LayerNoise::sample(self.v1.n_in, self.v1.n_out, rng),
            v2: LayerNoise::sample(self.v2.n_in, self.v2.n_out, rng),
            a1: LayerNoise::sample(self.a1.n_in, self.a1.n_out, rng),
            a2: LayerNoise::sample(self.a2.n_in, self.a2.n_out, rng),
        }
    }

    /// All-zero noise: the deterministic evaluation-mode network.
    pub fn zero_noise(&self) -> NetNoise {
        NetNoise {
            v1: LayerNoise::zeros(self.v1.n_in, self.v1.n_out),
            v2: LayerNoise::zeros(self.v2.n_in, self.v2.n_out),
            a1: LayerNoise::zeros(self.a1.n_in, self.a1.n_out),
            a2: LayerNoise::zeros(self.a2.n_in, self.a2.n_out),
        }
    }

    fn noisy_fwd(&self, idx: &NoisyIdx, x: &[f64], noise: &LayerNoise, y: &mut [f64]) {
        noisy_forward(
            x,
            &self.params.get(idx.mu_w).data,
            &self.params.get(idx.sigma_w).data,
            &self.params.get(idx.mu_b).data,
            &self.params.get(idx.sigma_b).data,
            noise,
            idx.n_in,
            idx.n_out,
            y,
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn noisy_bwd(
        &self,
        idx: &NoisyIdx,
        x: &[f64],
        noise: &LayerNoise,
        grad_y: &[f64],
        grads: &mut AgentParams,
        grad_x: Option<&mut [f64]>,
    ) {
        // Split mutable access: tensor indices are distinct by construction.
        let [gmw, gsw, gmb, gsb] = distinct_mut(grads, [idx.mu_w, idx.sigma_w, idx.mu_b, idx.sigma_b]);
        noisy_backward(
            x,
            &self.params.get(idx.mu_w).data,
            &self.params.get(idx.sigma_w).data,
            noise,
            grad_y,
            idx.n_in,
            idx.n_out,
            gmw,
            gsw,
            gmb,
            gsb,
            grad_x,
        );
    }

    /// Forward pass. Dropout is applied only when a `dropout_rng` is given
    /// (training mode); evaluation passes `None`.
    pub fn forward(
        &self,
        obs: &[f64],
        noise: &NetNoise,
        mut dropout_rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<Forward, NetError> {
        let cfg = &self.cfg;
        if obs.len() != cfg.obs_len() {
            return Err(NetError::ShapeMismatch { got: obs.len(), want: cfg.obs_len() });
        }
        let hw = cfg.height * cfg.width;
        let mut conv_pre = Vec::with_capacity(self.conv_idx.len());
        let mut conv_out = Vec::with_capacity(self.conv_idx.len());
        let mut c_in = cfg.in_channels;
        let mut x: &[f64] = obs;
        for (layer, &(k_idx, b_idx)) in self.conv_idx.iter().enumerate() {
            let c_out = cfg.conv_channels[layer];
            let mut pre = vec![0.0; c_out * hw];
            conv3x3_forward(
                x,
                &self.params.get(k_idx).data,
                &self.params.get(b_idx).data,
                c_in,
                c_out,
                cfg.height,
                cfg.width,
                &mut pre,
            );
            let mut out = pre.clone();
            relu(&mut out);
            conv_pre.push(pre);
            conv_out.push(out);
            x = conv_out.last().unwrap();
            c_in = c_out;
        }
        let flat: &[f64] = if conv_out.is_empty() { obs } else { conv_out.last().unwrap() };
        let mut lin_pre = vec![0.0; cfg.hidden];
        linear_forward(
            flat,
            &self.params.get(self.lin_idx.0).data,
            &self.params.get(self.lin_idx.1).data,
            flat.len(),
            cfg.hidden,
            &mut lin_pre,
        );
        let mut hidden = lin_pre.clone();
        relu(&mut hidden);
        let mask = match dropout_rng.as_deref_mut() {
            Some(mut rng) if cfg.dropout > 0.0 => {
                let mut m = vec![0.0; cfg.hidden];
                dropout_mask(&mut m, cfg.dropout, &mut rng);
                apply_mask(&mut hidden, &m);
                Some(m)
            }
            _ => None,
        };
        // Value stream.
        let mut v1_pre = vec![0.0; self.v1.n_out];
        self.noisy_fwd(&self.v1, &hidden, &noise.v1, &mut v1_pre);
        let mut v1_out = v1_pre.clone();
        relu(&mut v1_out);
        let mut v2_out = vec![0.0; self.v2.n_out];
        self.noisy_fwd(&self.v2, &v1_out, &noise.v2, &mut v2_out);
        // Advantage stream.
        let mut a1_pre = vec![0.0; self.a1.n_out];
        self.noisy_fwd(&self.a1, &hidden, &noise.a1, &mut a1_pre);
        let mut a1_out = a1_pre.clone();
        relu(&mut a1_out);
        let mut a2_out = vec![0.0; self.a2.n_out];
        self.noisy_fwd(&self.a2, &a1_out, &noise.a2, &mut a2_out);
        // Dueling aggregation per atom, then per-action softmax.
        let (n_a, n_z) = (cfg.actions, cfg.atoms);
        let mut logits = vec![0.0; n_a * n_z];
        for z in 0..n_z {
            let mut mean = 0.0;
            for a in 0..n_a {
                mean += a2_out[a * n_z + z];
            }
            mean /= n_a as f64;
            for a in 0..n_a {
                logits[a * n_z + z] = v2_out[z] + a2_out[a * n_z + z] - mean;
            }
        }
        let mut probs = vec![0.0; n_a * n_z];
        for a in 0..n_a {
            softmax(&logits[a * n_z..(a + 1) * n_z], &mut probs[a * n_z..(a + 1) * n_z]);
        }
        Ok(Forward {
            conv_pre,
            conv_out,
            lin_pre,
            hidden,
            mask,
            v1_pre,
            v1_out,
            a1_pre,
            a1_out,
            logits,
            probs,
        })
    }

    /// Reverse pass from logit gradients (actions×atoms). Parameter
    /// gradients accumulate into `grads`; the same noise as the forward pass
    /// must be supplied.
    pub fn backward(
        &self,
        obs: &[f64],
        fwd: &Forward,
        noise: &NetNoise,
        grad_logits: &[f64],
        grads: &mut AgentParams,
    ) {
        let cfg = &self.cfg;
        let (n_a, n_z) = (cfg.actions, cfg.atoms);
        debug_assert_eq!(grad_logits.len(), n_a * n_z);
        // Dueling aggregation backward.
        let mut d_v2 = vec![0.0; n_z];
        let mut d_a2 = vec![0.0; n_a * n_z];
        for z in 0..n_z {
            let mut col_sum = 0.0;
            for a in 0..n_a {
                col_sum += grad_logits[a * n_z + z];
            }
            d_v2[z] = col_sum;
            let mean_term = col_sum / n_a as f64;
            for a in 0..n_a {
                d_a2[a * n_z + z] = grad_logits[a * n_z + z] - mean_term;
            }
        }
        // Value stream backward.
        let mut d_v1_out = vec![0.0; self.v1.n_out];
        self.noisy_bwd(&self.v2, &fwd.v1_out, &noise.v2, &d_v2, grads, Some(&mut d_v1_out));
        relu_backward(&fwd.v1_pre, &mut d_v1_out);
        let mut d_hidden_v = vec![0.0; cfg.hidden];
        self.noisy_bwd(&self.v1, &fwd.hidden, &noise.v1, &d_v1_out, grads, Some(&mut d_hidden_v));
        // Advantage stream backward.
        let mut d_a1_out = vec![0.0; self.a1.n_out];
        self.noisy_bwd(&self.a2, &fwd.a1_out, &noise.a2, &d_a2, grads, Some(&mut d_a1_out));
        relu_backward(&fwd.a1_pre, &mut d_a1_out);
        let mut d_hidden_a = vec![0.0; cfg.hidden];
        self.noisy_bwd(&self.a1, &fwd.hidden, &noise.a1, &d_a1_out, grads, Some(&mut d_hidden_a));
        // Join at the hidden vector.
        let mut d_hidden: Vec<f64> =
            d_hidden_v.iter().zip(&d_hidden_a).map(|(a, b)| a + b).collect();
        if let Some(mask) = &fwd.mask {
            apply_mask(&mut d_hidden, mask);
        }
        relu_backward(&fwd.lin_pre, &mut d_hidden);
        let flat: &[f64] = if fwd.conv_out.is_empty() { obs } else { fwd.conv_out.last().unwrap() };
        let mut d_flat = vec![0.0; flat.len()];
        {
            let [gw, gb] = distinct_mut(grads, [self.lin_idx.0, self.lin_idx.1]);
            linear_backward(flat, &self.params.get(self.lin_idx.0).data, &d_hidden, flat.len(), cfg.hidden, gw, gb, Some(&mut d_flat));
        }
        // Conv stack backward, last to first.
        let hw = cfg.height * cfg.width;
        let mut d_out = d_flat;
        for layer in (0..self.conv_idx.len()).rev() {
            relu_backward(&fwd.conv_pre[layer], &mut d_out);
            let (k_idx, b_idx) = self.conv_idx[layer];
            let c_out = cfg.conv_channels[layer];
            let (input, c_in): (&[f64], usize) = if layer == 0 {
                (obs, cfg.in_channels)
            } else {
                (&fwd.conv_out[layer - 1], cfg.conv_channels[layer - 1])
            };
            let mut d_input = vec![0.0; c_in * hw];
            let need_input_grad = layer > 0;
            let [gk, gb] = distinct_mut(grads, [k_idx, b_idx]);
            conv3x3_backward(
                input,
                &self.params.get(k_idx).data,
                &d_out,
                c_in,
                c_out,
                cfg.height,
                cfg.width,
                gk,
                gb,
                if need_input_grad { Some(&mut d_input) } else { None },
            );
            d_out = d_input;
        }
    }

    /// Q(a) = E[Z_a] for every action.
    pub fn q_values(&self, fwd: &Forward, support: &super::distrib::Support) -> Vec<f64> {
        let n_z = self.cfg.atoms;
        fwd.probs.chunks(n_z).map(|row| support.expectation(row)).collect()
    }
}

/// Borrow several distinct tensors' data mutably at once.
fn distinct_mut<const N: usize>(params: &mut AgentParams, idx: [usize; N]) -> [&mut [f64]; N] {
    for i in 0..N {
        assert!(idx[i] < params.tensors.len());
        for j in i + 1..N {
            assert_ne!(idx[i], idx[j], "tensor indices must be distinct");
        }
    }
    let base = params.tensors.as_mut_ptr();
    // SAFETY: indices are pairwise distinct and in bounds, so the resulting
    // mutable slices never alias.
    idx.map(|i| unsafe { (*base.add(i)).data.as_mut_slice() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rlcore::distrib::{kl_logit_gradient, kl_loss, Support};
    use crate::rng::rng_for;
    use rand::Rng;

    fn tiny_cfg() -> QNetConfig {
        QNetConfig {
            in_channels: 2,
            height: 4,
            width: 4,
            conv_channels: vec![3, 4],
            hidden: 10,
            stream: 6,
            actions: 3,
            atoms: 8,
            dropout: 0.2,
            sigma0: 0.5,
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = rng_for(81, "net", 0);
        let net = QNet::new(tiny_cfg(), &mut rng);
        let noise = net.zero_noise();
        let bad = vec![0.0; 7];
        assert_eq!(
            net.forward(&bad, &noise, None).unwrap_err(),
            NetError::ShapeMismatch { got: 7, want: 32 }
        );
    }

    #[test]
    fn zero_weights_give_zero_hidden_and_uniform_distributions() {
        let mut rng = rng_for(81, "net", 1);
        let mut net = QNet::new(tiny_cfg(), &mut rng);
        for t in &mut net.params.tensors {
            t.data.fill(0.0);
        }
        let obs: Vec<f64> = (0..net.cfg.obs_len()).map(|i| i as f64).collect();
        let fwd = net.forward(&obs, &net.zero_noise(), None).unwrap();
        assert!(fwd.hidden.iter().all(|&h| h == 0.0));
        // All logits zero → uniform atom distribution per action.
        let u = 1.0 / net.cfg.atoms as f64;
        assert!(fwd.probs.iter().all(|&p| (p - u).abs() < 1e-12));
    }

    #[test]
    fn identical_inputs_give_identical_outputs() {
        let mut rng = rng_for(81, "net", 2);
        let net = QNet::new(tiny_cfg(), &mut rng);
        let obs: Vec<f64> = (0..net.cfg.obs_len()).map(|_| rng.gen::<f64>()).collect();
        let noise = net.sample_noise(&mut rng);
        let f1 = net.forward(&obs, &noise, None).unwrap();
        let f2 = net.forward(&obs, &noise, None).unwrap();
        assert_eq!(f1.probs, f2.probs);
        assert_eq!(f1.hidden, f2.hidden);
        // Zero noise also kills the σ parameters' influence.
        let f3 = net.forward(&obs, &net.zero_noise(), None).unwrap();
        let f4 = net.forward(&obs, &net.zero_noise(), None).unwrap();
        assert_eq!(f3.probs, f4.probs);
    }

    #[test]
    fn encoder_matches_a_direct_oracle_on_a_one_channel_input() {
        // 1 conv layer (1→1), 3×3 input, then linear to 2: small enough to
        // compute by hand with an independent loop structure.
        let cfg = QNetConfig {
            in_channels: 1,
            height: 3,
            width: 3,
            conv_channels: vec![1],
            hidden: 2,
            stream: 2,
            actions: 2,
            atoms: 3,
            dropout: 0.0,
            sigma0: 0.5,
        };
        let mut rng = rng_for(81, "net", 3);
        let net = QNet::new(cfg, &mut rng);
        let obs: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let fwd = net.forward(&obs, &net.zero_noise(), None).unwrap();
        // Oracle: direct 2D convolution with zero padding.
        let k = &net.params.get(0).data;
        let kb = net.params.get(1).data[0];
        let mut conv = vec![0.0; 9];
        for y in 0..3i32 {
            for x in 0..3i32 {
                let mut acc = kb;
                for ky in -1..=1i32 {
                    for kx in -1..=1i32 {
                        let (sy, sx) = (y + ky, x + kx);
                        if (0..3).contains(&sy) && (0..3).contains(&sx) {
                            acc += obs[(sy * 3 + sx) as usize]
                                * k[((ky + 1) * 3 + (kx + 1)) as usize];
                        }
                    }
                }
                conv[(y * 3 + x) as usize] = acc.max(0.0);
            }
        }
        let w = &net.params.get(2).data;
        let b = &net.params.get(3).data;
        for i in 0..2 {
            let pre: f64 = (0..9).map(|j| w[i * 9 + j] * conv[j]).sum::<f64>() + b[i];
            let expect = pre.max(0.0);
            assert!((fwd.hidden[i] - expect).abs() < 1e-10, "{} vs {expect}", fwd.hidden[i]);
        }
    }

    #[test]
    fn per_action_distributions_are_normalized() {
        let mut rng = rng_for(81, "net", 4);
        let net = QNet::new(tiny_cfg(), &mut rng);
        let obs: Vec<f64> = (0..net.cfg.obs_len()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let noise = net.sample_noise(&mut rng);
        let fwd = net.forward(&obs, &noise, None).unwrap();
        for row in fwd.probs.chunks(net.cfg.atoms) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
        let support = Support::new(0.0, 10.0, net.cfg.atoms).unwrap();
        let q = net.q_values(&fwd, &support);
        assert_eq!(q.len(), net.cfg.actions);
        assert!(q.iter().all(|v| (0.0..=10.0).contains(v)));
    }

    #[test]
    fn dueling_aggregation_mean_centers_advantages() {
        // With zero value-stream output the per-atom logit mean over actions
        // must be zero (advantages are centered). Zeroing the value stream's
        // parameters achieves exactly that.
        let mut rng = rng_for(81, "net", 5);
        let mut net = QNet::new(tiny_cfg(), &mut rng);
        for t in &mut net.params.tensors {
            if t.name.starts_with("value") {
                t.data.fill(0.0);
            }
        }
        let obs: Vec<f64> = (0..net.cfg.obs_len()).map(|_| rng.gen::<f64>()).collect();
        let fwd = net.forward(&obs, &net.zero_noise(), None).unwrap();
        let (n_a, n_z) = (net.cfg.actions, net.cfg.atoms);
        for z in 0..n_z {
            let mean: f64 = (0..n_a).map(|a| fwd.logits[a * n_z + z]).sum::<f64>() / n_a as f64;
            assert!(mean.abs() < 1e-12, "atom {z} mean {mean}");
        }
    }

    /// Full-network gradient check: KL loss on one action's distribution,
    /// every parameter class, against central finite differences.
    #[test]
    fn backward_matches_finite_differences() {
        let cfg = QNetConfig {
            in_channels: 2,
            height: 3,
            width: 3,
            conv_channels: vec![3, 3],
            hidden: 8,
            stream: 5,
            actions: 3,
            atoms: 8,
            dropout: 0.0, // dropout off: the loss must be deterministic
            sigma0: 0.5,
        };
        let mut rng = rng_for(81, "gradcheck", 0);
        let mut net = QNet::new(cfg, &mut rng);
        let obs: Vec<f64> = (0..net.cfg.obs_len()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let noise = net.sample_noise(&mut rng);
        let action = 1usize;
        let mut target: Vec<f64> = (0..net.cfg.atoms).map(|_| rng.gen::<f64>() + 0.05).collect();
        let tsum: f64 = target.iter().sum();
        for t in &mut target {
            *t /= tsum;
        }
        let n_z = net.cfg.atoms;
        // Analytic gradients.
        let fwd = net.forward(&obs, &noise, None).unwrap();
        let mut grad_logits = vec![0.0; net.cfg.actions * n_z];
        kl_logit_gradient(
            &fwd.probs[action * n_z..(action + 1) * n_z],
            &target,
            &mut grad_logits[action * n_z..(action + 1) * n_z],
        );
        let mut grads = net.params.zeros_like();
        net.backward(&obs, &fwd, &noise, &grad_logits, &mut grads);
        // Numeric gradients on a spread of parameters from every tensor.
        let h = 1e-5;
        let mut checked = 0usize;
        for t_idx in 0..net.params.tensors.len() {
            let len = net.params.get(t_idx).len();
            let picks = [0, len / 2, len - 1];
            for &e_idx in &picks {
                let orig = net.params.get(t_idx).data[e_idx];
                net.params.get_mut(t_idx).data[e_idx] = orig + h;
                let fp = net.forward(&obs, &noise, None).unwrap();
                let lp = kl_loss(&fp.probs[action * n_z..(action + 1) * n_z], &target);
                net.params.get_mut(t_idx).data[e_idx] = orig - h;
                let fm = net.forward(&obs, &noise, None).unwrap();
                let lm = kl_loss(&fm.probs[action * n_z..(action + 1) * n_z], &target);
                net.params.get_mut(t_idx).data[e_idx] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grads.get(t_idx).data[e_idx];
                let denom = analytic.abs().max(numeric.abs()).max(1.0);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "tensor {} [{e_idx}]: analytic {analytic} vs numeric {numeric}",
                    net.params.get(t_idx).name
                );
                checked += 1;
            }
        }
        assert!(checked >= 3 * net.params.tensors.len());
    }

    #[test]
    fn dropout_masks_are_applied_symmetrically_in_backward() {
        // With dropout on, a unit whose mask is zero must receive zero
        // gradient through the encoder linear layer: perturbing its incoming
        // weight cannot change the loss.
        let mut rng = rng_for(81, "net", 6);
        let net = QNet::new(tiny_cfg(), &mut rng);
        let obs: Vec<f64> = (0..net.cfg.obs_len()).map(|_| rng.gen::<f64>()).collect();
        let noise = net.zero_noise();
        let mut drop_rng = rng_for(81, "dropout", 7);
        let fwd = net.forward(&obs, &noise, Some(&mut drop_rng)).unwrap();
        let mask = fwd.mask.clone().expect("training mode sets a mask");
        let dead: Vec<usize> =
            (0..mask.len()).filter(|&i| mask[i] == 0.0).collect();
        if dead.is_empty() {
            return; // extremely unlikely with rate 0.2 and 10 units
        }
        let target: Vec<f64> = vec![1.0 / net.cfg.atoms as f64; net.cfg.atoms];
        let n_z = net.cfg.atoms;
        let mut grad_logits = vec![0.0; net.cfg.actions * n_z];
        kl_logit_gradient(&fwd.probs[..n_z], &target, &mut grad_logits[..n_z]);
        let mut grads = net.params.zeros_like();
        net.backward(&obs, &fwd, &noise, &grad_logits, &mut grads);
        // encoder.weight rows of dead units carry zero gradient.
        let flat = net.params.get(net.lin_idx.0).shape[1];
        for &u in &dead {
            let row = &grads.get(net.lin_idx.0).data[u * flat..(u + 1) * flat];
            assert!(row.iter().all(|&g| g == 0.0), "dead unit {u} received gradient");
            assert_eq!(grads.get(net.lin_idx.1).data[u], 0.0);
        }
    }

    #[test]
    fn networks_round_trip_through_checkpoints() {
        use crate::rlcore::params::{params_from_text, params_to_text};
        let mut rng = rng_for(81, "net", 8);
        let mut net = QNet::new(tiny_cfg(), &mut rng);
        let obs: Vec<f64> = (0..net.cfg.obs_len()).map(|_| rng.gen::<f64>()).collect();
        let noise = net.sample_noise(&mut rng);
        let before = net.forward(&obs, &noise, None).unwrap().probs;
        let text = params_to_text(&net.params);
        let restored = params_from_text(&text).unwrap();
        net.params.copy_from(&restored).unwrap();
        let after = net.forward(&obs, &noise, None).unwrap().probs;
        assert_eq!(before, after);
    }
}
