//! Two-hidden-layer ReLU MLP (128 units) with manual forward/backward.
//!
//! Actor heads apply Tanh, critic heads are linear. All math is f64 with a
//! fixed accumulation order so runs are bit-reproducible.

use crate::error::{Error, Result};
use crate::rng::{standard_normal, RngStream};

pub const HIDDEN: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Tanh,
    Linear,
}

/// Dense parameters, row-major: `w[row * in_dim + col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub head: Head,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Gradients (or any other per-parameter accumulator) with MLP shapes.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Activations cached by a forward pass, consumed by backward.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub output: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// y = W x + b, W row-major [rows x cols].
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let rows = b.len();
    let cols = x.len();
    out.clear();
    for r in 0..rows {
        out.push(dot(&w[r * cols..(r + 1) * cols], x) + b[r]);
    }
}

/// dst += scale * src
fn axpy(dst: &mut [f64], scale: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

impl MlpParams {
    /// Xavier-normal weights (gain 1.0), zero biases. Draw order: w1 row-major,
    /// then w2, then w_out.
    pub fn xavier(in_dim: usize, out_dim: usize, head: Head, rng: &mut RngStream) -> Self {
        assert!(in_dim >= 1 && out_dim >= 1, "dims must be >= 1");
        let layer = |fan_in: usize, fan_out: usize, rng: &mut RngStream| -> Vec<f64> {
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out)
                .map(|_| std * standard_normal(rng))
                .collect()
        };
        MlpParams {
            in_dim,
            out_dim,
            head,
            w1: layer(in_dim, HIDDEN, rng),
            b1: vec![0.0; HIDDEN],
            w2: layer(HIDDEN, HIDDEN, rng),
            b2: vec![0.0; HIDDEN],
            w_out: layer(HIDDEN, out_dim, rng),
            b_out: vec![0.0; out_dim],
        }
    }

    pub fn zeros_like(&self) -> MlpGrads {
        MlpGrads {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
            w_out: vec![0.0; self.w_out.len()],
            b_out: vec![0.0; self.b_out.len()],
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.in_dim {
            return Err(Error::dims(self.in_dim, input.len(), "mlp forward"));
        }
        Ok(())
    }

    /// Forward pass reusing a caller-provided cache's buffers.
    pub fn forward_into(&self, input: &[f64], cache: &mut ForwardCache) -> Result<()> {
        self.check_input(input)?;
        cache.input.clear();
        cache.input.extend_from_slice(input);
        affine(&self.w1, &self.b1, input, &mut cache.h1);
        for v in cache.h1.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        affine(&self.w2, &self.b2, &cache.h1, &mut cache.h2);
        for v in cache.h2.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        affine(&self.w_out, &self.b_out, &cache.h2, &mut cache.output);
        if self.head == Head::Tanh {
            for v in cache.output.iter_mut() {
                *v = v.tanh();
            }
        }
        Ok(())
    }

    /// Forward pass returning the full activation cache.
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        let mut cache = ForwardCache::default();
        self.forward_into(input, &mut cache)?;
        Ok(cache)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.output)
    }

    /// Backpropagate `upstream = dL/dy` through the cached pass, accumulating
    /// parameter gradients into `grads` and returning `dL/dx`.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut MlpGrads,
    ) -> Vec<f64> {
        debug_assert_eq!(upstream.len(), self.out_dim);
        // Head derivative.
        let mut dz3 = upstream.to_vec();
        if self.head == Head::Tanh {
            for (d, y) in dz3.iter_mut().zip(&cache.output) {
                *d *= 1.0 - y * y;
            }
        }
        // Output layer.
        let mut dh2 = vec![0.0; HIDDEN];
        for r in 0..self.out_dim {
            let g = dz3[r];
            grads.b_out[r] += g;
            axpy(&mut grads.w_out[r * HIDDEN..(r + 1) * HIDDEN], g, &cache.h2);
            axpy(&mut dh2, g, &self.w_out[r * HIDDEN..(r + 1) * HIDDEN]);
        }
        // Second hidden layer (ReLU: h2 > 0 marks active units).
        let mut dz2 = dh2;
        for (d, h) in dz2.iter_mut().zip(&cache.h2) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dh1 = vec![0.0; HIDDEN];
        for r in 0..HIDDEN {
            let g = dz2[r];
            if g == 0.0 {
                continue;
            }
            grads.b2[r] += g;
            axpy(&mut grads.w2[r * HIDDEN..(r + 1) * HIDDEN], g, &cache.h1);
            axpy(&mut dh1, g, &self.w2[r * HIDDEN..(r + 1) * HIDDEN]);
        }
        // First hidden layer.
        let mut dz1 = dh1;
        for (d, h) in dz1.iter_mut().zip(&cache.h1) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dx = vec![0.0; self.in_dim];
        for r in 0..HIDDEN {
            let g = dz1[r];
            if g == 0.0 {
                continue;
            }
            grads.b1[r] += g;
            axpy(
                &mut grads.w1[r * self.in_dim..(r + 1) * self.in_dim],
                g,
                &cache.input,
            );
            axpy(&mut dx, g, &self.w1[r * self.in_dim..(r + 1) * self.in_dim]);
        }
        dx
    }

    /// Named views over all parameter tensors, in a fixed order shared with
    /// gradients, optimizer state, and checkpoints.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 6] {
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
            ("w_out", &mut self.w_out),
            ("b_out", &mut self.b_out),
        ]
    }

    pub fn tensor(&self, index: usize) -> &[f64] {
        match index {
            0 => &self.w1,
            1 => &self.b1,
            2 => &self.w2,
            3 => &self.b2,
            4 => &self.w_out,
            5 => &self.b_out,
            _ => panic!("tensor index out of range"),
        }
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Vec<f64> {
        match index {
            0 => &mut self.w1,
            1 => &mut self.b1,
            2 => &mut self.w2,
            3 => &mut self.b2,
            4 => &mut self.w_out,
            5 => &mut self.b_out,
            _ => panic!("tensor index out of range"),
        }
    }

    pub fn tensor_shape(&self, name: &str) -> Option<Vec<u32>> {
        match name {
            "w1" => Some(vec![HIDDEN as u32, self.in_dim as u32]),
            "b1" | "b2" => Some(vec![HIDDEN as u32]),
            "w2" => Some(vec![HIDDEN as u32, HIDDEN as u32]),
            "w_out" => Some(vec![self.out_dim as u32, HIDDEN as u32]),
            "b_out" => Some(vec![self.out_dim as u32]),
            _ => None,
        }
    }
}

impl MlpGrads {
    pub fn tensors(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 6] {
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
            ("w_out", &mut self.w_out),
            ("b_out", &mut self.b_out),
        ]
    }

    pub fn tensor(&self, index: usize) -> &[f64] {
        match index {
            0 => &self.w1,
            1 => &self.b1,
            2 => &self.w2,
            3 => &self.b2,
            4 => &self.w_out,
            5 => &self.b_out,
            _ => panic!("tensor index out of range"),
        }
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Vec<f64> {
        match index {
            0 => &mut self.w1,
            1 => &mut self.b1,
            2 => &mut self.w2,
            3 => &mut self.b2,
            4 => &mut self.w_out,
            5 => &mut self.b_out,
            _ => panic!("tensor index out of range"),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// target <- decay * target + (1 - decay) * online, elementwise.
pub fn ema_update(target: &mut MlpParams, online: &MlpParams, decay: f64) {
    debug_assert_eq!(target.in_dim, online.in_dim);
    debug_assert_eq!(target.out_dim, online.out_dim);
    for ((_, t), (_, o)) in target.tensors_mut().into_iter().zip(online.tensors()) {
        for (tv, ov) in t.iter_mut().zip(o.iter()) {
            *tv = decay * *tv + (1.0 - decay) * ov;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn biases_start_at_zero_and_init_is_seeded() {
        let mut rng = stream(1, "init", 0);
        let p = MlpParams::xavier(10, 2, Head::Tanh, &mut rng);
        assert!(p.b1.iter().chain(&p.b2).chain(&p.b_out).all(|b| *b == 0.0));
        let q = MlpParams::xavier(10, 2, Head::Tanh, &mut stream(1, "init", 0));
        assert_eq!(p, q);
    }

    #[test]
    fn xavier_variance_matches_fan_spec() {
        // Aggregate the w1 layer of many inits of a [128 x 10] layer.
        let mut rng = stream(2, "init", 0);
        let mut sq = 0.0;
        let mut n = 0usize;
        for _ in 0..10_000 {
            let std = (2.0 / (10 + HIDDEN) as f64).sqrt();
            for _ in 0..64 {
                let w = std * crate::rng::standard_normal(&mut rng);
                sq += w * w;
                n += 1;
            }
        }
        let var = sq / n as f64;
        let expected = 2.0 / (10.0 + 128.0);
        assert!(
            (var - expected).abs() < 0.1 * expected,
            "var {var} vs {expected}"
        );
    }

    #[test]
    fn forward_zero_input_tanh_head() {
        let mut rng = stream(3, "init", 0);
        let p = MlpParams::xavier(6, 2, Head::Tanh, &mut rng);
        let y = p.forward(&vec![0.0; 6]).unwrap();
        // Zero input with zero biases gives exactly zero through every layer.
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn tanh_head_stays_in_open_interval() {
        let mut rng = stream(4, "init", 0);
        let p = MlpParams::xavier(4, 2, Head::Tanh, &mut rng);
        let mut xr = stream(4, "x", 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| xr.gen_range(-5.0..5.0)).collect();
            for v in p.forward(&x).unwrap() {
                assert!(v > -1.0 && v < 1.0);
            }
        }
    }

    /// Independent dense-forward oracle with naive accumulation.
    fn oracle_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let dense = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
            (0..b.len())
                .map(|r| {
                    let mut acc = b[r];
                    for c in 0..x.len() {
                        acc += w[r * x.len() + c] * x[c];
                    }
                    acc
                })
                .collect()
        };
        let relu = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
        let h1 = relu(dense(&p.w1, &p.b1, x));
        let h2 = relu(dense(&p.w2, &p.b2, &h1));
        let y = dense(&p.w_out, &p.b_out, &h2);
        match p.head {
            Head::Tanh => y.into_iter().map(|v| v.tanh()).collect(),
            Head::Linear => y,
        }
    }

    #[test]
    fn forward_matches_matrix_oracle() {
        for (i, head) in [Head::Tanh, Head::Linear].into_iter().enumerate() {
            let mut rng = stream(5, "init", i as u64);
            let p = MlpParams::xavier(7, 3, head, &mut rng);
            let mut xr = stream(5, "x", i as u64);
            for _ in 0..20 {
                let x: Vec<f64> = (0..7).map(|_| xr.gen_range(-2.0..2.0)).collect();
                let got = p.forward(&x).unwrap();
                let want = oracle_forward(&p, &x);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-12, "{g} vs {w}");
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut rng = stream(6, "init", 0);
        let p = MlpParams::xavier(5, 2, Head::Tanh, &mut rng);
        assert!(p.forward(&vec![0.0; 4]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = stream(7, "init", 0);
        let p = MlpParams::xavier(5, 2, Head::Tanh, &mut rng);
        let cache = p.forward_cached(&[0.3, -0.2, 0.9, 0.0, -1.0]).unwrap();
        let mut grads = p.zeros_like();
        let dx = p.backward_accumulate(&cache, &[0.0, 0.0], &mut grads);
        assert!(dx.iter().all(|v| *v == 0.0));
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn output_bias_gradient_is_upstream_through_head() {
        let mut rng = stream(8, "init", 0);
        let p = MlpParams::xavier(3, 2, Head::Tanh, &mut rng);
        let x = [0.5, -0.4, 0.2];
        let cache = p.forward_cached(&x).unwrap();
        let mut grads = p.zeros_like();
        let upstream = [0.7, -1.3];
        p.backward_accumulate(&cache, &upstream, &mut grads);
        for r in 0..2 {
            let y = cache.output[r];
            let want = upstream[r] * (1.0 - y * y);
            assert!((grads.b_out[r] - want).abs() < 1e-14);
        }
    }

    /// Central finite differences on a scalar loss L = sum(w_up * y).
    #[test]
    fn backward_matches_finite_differences() {
        let h = 1e-5;
        for (case, head) in [Head::Tanh, Head::Linear].into_iter().enumerate() {
            let mut rng = stream(9, "init", case as u64);
            let p = MlpParams::xavier(6, 2, head, &mut rng);
            let mut xr = stream(9, "x", case as u64);
            let x: Vec<f64> = (0..6).map(|_| xr.gen_range(-1.0..1.0)).collect();
            let w_up = [0.9, -0.6];

            let loss = |p: &MlpParams| -> f64 {
                let y = p.forward(&x).unwrap();
                y.iter().zip(&w_up).map(|(a, b)| a * b).sum()
            };
            let cache = p.forward_cached(&x).unwrap();
            let mut grads = p.zeros_like();
            let dx = p.backward_accumulate(&cache, &w_up, &mut grads);

            // Sampled coordinates from every tensor.
            let mut pick = stream(9, "pick", case as u64);
            let mut checked = 0;
            for (t_idx, (name, tensor)) in p.tensors().iter().enumerate() {
                let len = tensor.len();
                let coords: Vec<usize> = (0..8.min(len)).map(|_| pick.gen_range(0..len)).collect();
                for c in coords {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    plus.tensors_mut()[t_idx].1[c] += h;
                    minus.tensors_mut()[t_idx].1[c] -= h;
                    let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    let analytic = grads.tensors()[t_idx].1[c];
                    let denom = fd.abs().max(analytic.abs());
                    if denom > 1e-6 {
                        assert!(
                            (fd - analytic).abs() / denom < 1e-4,
                            "{name}[{c}]: fd {fd} analytic {analytic}"
                        );
                    } else {
                        assert!((fd - analytic).abs() < 1e-8);
                    }
                    checked += 1;
                }
            }
            assert!(checked >= 40);

            // Input gradient against finite differences too.
            for c in 0..6 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let f = |xx: &Vec<f64>| -> f64 {
                    p.forward(xx)
                        .unwrap()
                        .iter()
                        .zip(&w_up)
                        .map(|(a, b)| a * b)
                        .sum()
                };
                let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                let denom = fd.abs().max(dx[c].abs()).max(1e-6);
                assert!((fd - dx[c]).abs() / denom < 1e-4);
            }
        }
    }

    #[test]
    fn ema_corners() {
        let mut rng = stream(10, "init", 0);
        let online = MlpParams::xavier(4, 2, Head::Tanh, &mut rng);
        let mut target = online.clone();
        ema_update(&mut target, &online, 0.95);
        for ((_, t), (_, o)) in target.tensors().into_iter().zip(online.tensors()) {
            for (tv, ov) in t.iter().zip(o) {
                assert!((tv - ov).abs() <= 1e-15 * ov.abs().max(1.0));
            }
        }

        let mut zero = online.clone();
        for (_, t) in zero.tensors_mut() {
            for v in t.iter_mut() {
                *v = 0.0;
            }
        }
        let mut ones = online.clone();
        for (_, t) in ones.tensors_mut() {
            for v in t.iter_mut() {
                *v = 1.0;
            }
        }
        let mut target = zero.clone();
        ema_update(&mut target, &ones, 0.95);
        for (_, t) in target.tensors() {
            for v in t {
                assert!((v - 0.05).abs() < 1e-15);
            }
        }
        // Repeated updates converge geometrically toward the online net.
        for _ in 0..200 {
            ema_update(&mut target, &ones, 0.95);
        }
        for (_, t) in target.tensors() {
            for v in t {
                assert!((v - 1.0).abs() < 1e-4);
            }
        }
    }
}
