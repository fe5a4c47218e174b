//! Neural layer primitives with reverse-mode gradients: 3×3 same-padding
//! convolution, dense linear, factorized-noise linear, ReLU, and inverted
//! dropout. All tensors are flat row-major f64 slices; shapes travel
//! alongside as plain integers to keep the hot loops allocation-free.

use rand::Rng;

// ---------------------------------------------------------------------------
// Activation
// ---------------------------------------------------------------------------

/// In-place ReLU.
pub fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Backward through ReLU: zero the gradient wherever the pre-activation was
/// non-positive.
pub fn relu_backward(pre: &[f64], grad: &mut [f64]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Fill an inverted-dropout mask: each entry is 0 with probability `rate`,
/// else 1/(1−rate), so the expected activation is unchanged.
pub fn dropout_mask<R: Rng>(mask: &mut [f64], rate: f64, rng: &mut R) {
    debug_assert!((0.0..1.0).contains(&rate));
    let keep_scale = 1.0 / (1.0 - rate);
    for m in mask {
        *m = if rng.gen::<f64>() < rate { 0.0 } else { keep_scale };
    }
}

/// Apply a mask produced by `dropout_mask` (also its own backward operator).
pub fn apply_mask(x: &mut [f64], mask: &[f64]) {
    for (v, &m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}

// ---------------------------------------------------------------------------
// 3×3 convolution, stride 1, zero padding 1 (shape-preserving)
// ---------------------------------------------------------------------------

/// Forward convolution: `input` is C_in×H×W, `kernel` is
/// C_out×C_in×3×3, `bias` is C_out, `output` is C_out×H×W.
pub fn conv3x3_forward(
    input: &[f64],
    kernel: &[f64],
    bias: &[f64],
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    output: &mut [f64],
) {
    debug_assert_eq!(input.len(), c_in * h * w);
    debug_assert_eq!(kernel.len(), c_out * c_in * 9);
    debug_assert_eq!(output.len(), c_out * h * w);
    for o in 0..c_out {
        let out_plane = &mut output[o * h * w..(o + 1) * h * w];
        out_plane.fill(bias[o]);
        for c in 0..c_in {
            let in_plane = &input[c * h * w..(c + 1) * h * w];
            let k = &kernel[(o * c_in + c) * 9..(o * c_in + c) * 9 + 9];
            for ky in 0..3usize {
                let dy = ky as isize - 1;
                for kx in 0..3usize {
                    let dx = kx as isize - 1;
                    let kv = k[ky * 3 + kx];
                    if kv == 0.0 {
                        continue;
                    }
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize - dy).min(h as isize) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    for y in y0..y1 {
                        let src_row = ((y as isize + dy) as usize) * w;
                        let dst_row = y * w;
                        for x in x0..x1 {
                            out_plane[dst_row + x] +=
                                kv * in_plane[src_row + (x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Backward convolution. Accumulates into `grad_kernel`/`grad_bias` and, if
/// provided, writes the input gradient (overwriting it).
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward(
    input: &[f64],
    kernel: &[f64],
    grad_output: &[f64],
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    grad_kernel: &mut [f64],
    grad_bias: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) {
    if let Some(gi) = grad_input.as_deref_mut() {
        gi.fill(0.0);
    }
    for o in 0..c_out {
        let go_plane = &grad_output[o * h * w..(o + 1) * h * w];
        grad_bias[o] += go_plane.iter().sum::<f64>();
        for c in 0..c_in {
            let in_plane = &input[c * h * w..(c + 1) * h * w];
            let k = &kernel[(o * c_in + c) * 9..(o * c_in + c) * 9 + 9];
            let gk = &mut grad_kernel[(o * c_in + c) * 9..(o * c_in + c) * 9 + 9];
            for ky in 0..3usize {
                let dy = ky as isize - 1;
                for kx in 0..3usize {
                    let dx = kx as isize - 1;
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize - dy).min(h as isize) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    // Kernel gradient: correlate grad_output with input.
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let src_row = ((y as isize + dy) as usize) * w;
                        let dst_row = y * w;
                        for x in x0..x1 {
                            acc += go_plane[dst_row + x]
                                * in_plane[src_row + (x as isize + dx) as usize];
                        }
                    }
                    gk[ky * 3 + kx] += acc;
                    // Input gradient: spread grad_output through the kernel.
                    if let Some(gi) = grad_input.as_deref_mut() {
                        let gi_plane = &mut gi[c * h * w..(c + 1) * h * w];
                        let kv = k[ky * 3 + kx];
                        if kv != 0.0 {
                            for y in y0..y1 {
                                let src_row = ((y as isize + dy) as usize) * w;
                                let dst_row = y * w;
                                for x in x0..x1 {
                                    gi_plane[src_row + (x as isize + dx) as usize] +=
                                        kv * go_plane[dst_row + x];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense linear layer
// ---------------------------------------------------------------------------

/// y = W·x + b with W stored out×in row-major.
pub fn linear_forward(x: &[f64], weight: &[f64], bias: &[f64], n_in: usize, n_out: usize, y: &mut [f64]) {
    debug_assert_eq!(x.len(), n_in);
    debug_assert_eq!(weight.len(), n_in * n_out);
    for i in 0..n_out {
        let row = &weight[i * n_in..(i + 1) * n_in];
        let mut acc = bias[i];
        for (w, v) in row.iter().zip(x) {
            acc += w * v;
        }
        y[i] = acc;
    }
}

/// Backward through a dense layer. Accumulates weight/bias gradients; the
/// input gradient is overwritten if provided.
pub fn linear_backward(
    x: &[f64],
    weight: &[f64],
    grad_y: &[f64],
    n_in: usize,
    n_out: usize,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_x: Option<&mut [f64]>,
) {
    for i in 0..n_out {
        let gy = grad_y[i];
        grad_bias[i] += gy;
        let gw_row = &mut grad_weight[i * n_in..(i + 1) * n_in];
        for (gw, &v) in gw_row.iter_mut().zip(x) {
            *gw += gy * v;
        }
    }
    if let Some(gx) = grad_x {
        gx.fill(0.0);
        for i in 0..n_out {
            let gy = grad_y[i];
            let w_row = &weight[i * n_in..(i + 1) * n_in];
            for (g, &w) in gx.iter_mut().zip(w_row) {
                *g += gy * w;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Noisy linear layer (factorized Gaussian noise)
// ---------------------------------------------------------------------------

/// The factorized-noise squash f(x) = sign(x)·√|x|.
pub fn noise_squash(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

/// Per-layer frozen noise: `eps_in` and `eps_out` already squashed by
/// `noise_squash`. All-zero noise reduces the layer to its μ parameters.
#[derive(Debug, Clone)]
pub struct LayerNoise {
    pub eps_in: Vec<f64>,
    pub eps_out: Vec<f64>,
}

impl LayerNoise {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { eps_in: vec![0.0; n_in], eps_out: vec![0.0; n_out] }
    }

    /// Draw fresh factorized noise (standard normal through the squash).
    pub fn sample<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let mut eps_in = vec![0.0; n_in];
        let mut eps_out = vec![0.0; n_out];
        crate::rng::fill_standard_normal(rng, &mut eps_in);
        crate::rng::fill_standard_normal(rng, &mut eps_out);
        for e in &mut eps_in {
            *e = noise_squash(*e);
        }
        for e in &mut eps_out {
            *e = noise_squash(*e);
        }
        Self { eps_in, eps_out }
    }
}

/// y_i = Σ_j (μ_w[i,j] + σ_w[i,j]·ε_out[i]·ε_in[j])·x_j + μ_b[i] + σ_b[i]·ε_out[i]
#[allow(clippy::too_many_arguments)]
pub fn noisy_forward(
    x: &[f64],
    mu_w: &[f64],
    sigma_w: &[f64],
    mu_b: &[f64],
    sigma_b: &[f64],
    noise: &LayerNoise,
    n_in: usize,
    n_out: usize,
    y: &mut [f64],
) {
    debug_assert_eq!(noise.eps_in.len(), n_in);
    debug_assert_eq!(noise.eps_out.len(), n_out);
    for i in 0..n_out {
        let eo = noise.eps_out[i];
        let mu_row = &mu_w[i * n_in..(i + 1) * n_in];
        let sg_row = &sigma_w[i * n_in..(i + 1) * n_in];
        let mut acc = mu_b[i] + sigma_b[i] * eo;
        for j in 0..n_in {
            acc += (mu_row[j] + sg_row[j] * eo * noise.eps_in[j]) * x[j];
        }
        y[i] = acc;
    }
}

/// Backward through a noisy layer with the same frozen noise as the forward
/// pass. Accumulates parameter gradients; overwrites `grad_x` if given.
#[allow(clippy::too_many_arguments)]
pub fn noisy_backward(
    x: &[f64],
    mu_w: &[f64],
    sigma_w: &[f64],
    noise: &LayerNoise,
    grad_y: &[f64],
    n_in: usize,
    n_out: usize,
    grad_mu_w: &mut [f64],
    grad_sigma_w: &mut [f64],
    grad_mu_b: &mut [f64],
    grad_sigma_b: &mut [f64],
    grad_x: Option<&mut [f64]>,
) {
    for i in 0..n_out {
        let gy = grad_y[i];
        let eo = noise.eps_out[i];
        grad_mu_b[i] += gy;
        grad_sigma_b[i] += gy * eo;
        let gmu_row = &mut grad_mu_w[i * n_in..(i + 1) * n_in];
        let gsg_row = &mut grad_sigma_w[i * n_in..(i + 1) * n_in];
        for j in 0..n_in {
            gmu_row[j] += gy * x[j];
            gsg_row[j] += gy * x[j] * eo * noise.eps_in[j];
        }
    }
    if let Some(gx) = grad_x {
        gx.fill(0.0);
        for i in 0..n_out {
            let gy = grad_y[i];
            let eo = noise.eps_out[i];
            let mu_row = &mu_w[i * n_in..(i + 1) * n_in];
            let sg_row = &sigma_w[i * n_in..(i + 1) * n_in];
            for j in 0..n_in {
                gx[j] += gy * (mu_row[j] + sg_row[j] * eo * noise.eps_in[j]);
            }
        }
    }
}
