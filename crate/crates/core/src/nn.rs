//! Minimal dense feed-forward network.
//!
//! Hidden layers use tanh; the output layer is tanh for policies and identity
//! for critics. Parameters live in one flat vector (layer-major, weights
//! row-major by output neuron, then biases), which is the same flat vector
//! the archive and the estimators operate on. Reverse-mode gradients of a
//! scalar `upstream . output` are available with respect to both parameters
//! and inputs.

use crate::error::{QdError, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    output_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(QdError::config("mlp needs at least input and output layers"));
        }
        if layer_sizes.contains(&0) {
            return Err(QdError::config("mlp layer sizes must be positive"));
        }
        Ok(MlpSpec {
            layer_sizes,
            output_activation,
        })
    }

    /// Policy head: tanh output, so actions land in (-1, 1).
    pub fn policy(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes, Activation::Tanh)
    }

    /// Critic head: identity output over concatenated (state, action).
    pub fn critic(input: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::new(sizes, Activation::Identity)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn widest_layer(&self) -> usize {
        *self.layer_sizes.iter().max().unwrap()
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier_init(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        for w in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.uniform(-bound, bound));
            }
            params.resize(params.len() + fan_out, 0.0);
        }
        params
    }

    /// Views of each layer's (weights, biases) inside the flat vector.
    pub fn layer_slices<'a>(&self, params: &'a [f64]) -> Vec<(&'a [f64], &'a [f64])> {
        let mut out = Vec::with_capacity(self.layer_count());
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &params[off..off + fan_in * fan_out];
            off += fan_in * fan_out;
            let biases = &params[off..off + fan_out];
            off += fan_out;
            out.push((weights, biases));
        }
        out
    }

    fn check_shapes(&self, params: &[f64], input: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(QdError::invalid(format!(
                "mlp params length {} does not match spec parameter count {}",
                params.len(),
                self.param_count()
            )));
        }
        if input.len() != self.input_dim() {
            return Err(QdError::invalid(format!(
                "mlp input length {} does not match input dimension {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        self.check_shapes(params, input)?;
        let mut ws = MlpWorkspace::new(self);
        self.forward_ws(params, input, &mut ws);
        Ok(ws.output().to_vec())
    }

    /// Forward pass into a reusable workspace. Shapes must already be valid.
    pub fn forward_ws(&self, params: &[f64], input: &[f64], ws: &mut MlpWorkspace) {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(input.len(), self.input_dim());
        ws.acts[0][..input.len()].copy_from_slice(input);
        let mut off = 0;
        let layers = self.layer_count();
        for l in 0..layers {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let weights = &params[off..off + fan_in * fan_out];
            off += fan_in * fan_out;
            let biases = &params[off..off + fan_out];
            off += fan_out;
            let (lo, hi) = ws.acts.split_at_mut(l + 1);
            let src = &lo[l][..fan_in];
            let dst = &mut hi[0][..fan_out];
            let squash = l + 1 < layers || self.output_activation == Activation::Tanh;
            for (j, d) in dst.iter_mut().enumerate() {
                let row = &weights[j * fan_in..(j + 1) * fan_in];
                let mut z = biases[j];
                for (w, x) in row.iter().zip(src.iter()) {
                    z += w * x;
                }
                *d = if squash { z.tanh() } else { z };
            }
        }
    }

    /// Gradient of `upstream . forward(input)` with respect to the flat
    /// parameters.
    pub fn grad_params(&self, params: &[f64], input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_shapes(params, input)?;
        if upstream.len() != self.output_dim() {
            return Err(QdError::invalid("upstream length != output dimension"));
        }
        let mut ws = MlpWorkspace::new(self);
        self.forward_ws(params, input, &mut ws);
        let mut grad = vec![0.0; self.param_count()];
        self.backward_ws(params, upstream, &mut ws, Some(&mut grad), None);
        Ok(grad)
    }

    /// Gradient of the same scalar with respect to the input vector.
    pub fn grad_input(&self, params: &[f64], input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_shapes(params, input)?;
        if upstream.len() != self.output_dim() {
            return Err(QdError::invalid("upstream length != output dimension"));
        }
        let mut ws = MlpWorkspace::new(self);
        self.forward_ws(params, input, &mut ws);
        let mut grad = vec![0.0; self.input_dim()];
        self.backward_ws(params, upstream, &mut ws, None, Some(&mut grad));
        Ok(grad)
    }

    /// Reverse pass over a workspace already filled by
    /// [`forward_ws`](Self::forward_ws). Parameter gradients accumulate into
    /// `param_grad` (callers zero it when they want a fresh gradient);
    /// `input_grad` is overwritten.
    pub fn backward_ws(
        &self,
        params: &[f64],
        upstream: &[f64],
        ws: &mut MlpWorkspace,
        mut param_grad: Option<&mut [f64]>,
        input_grad: Option<&mut [f64]>,
    ) {
        let layers = self.layer_count();
        let out_dim = self.output_dim();
        {
            let out_act = &ws.acts[layers][..out_dim];
            let delta = &mut ws.delta_a[..out_dim];
            match self.output_activation {
                Activation::Tanh => {
                    for j in 0..out_dim {
                        delta[j] = upstream[j] * (1.0 - out_act[j] * out_act[j]);
                    }
                }
                Activation::Identity => delta[..out_dim].copy_from_slice(upstream),
            }
        }
        // walk layers backwards; delta_a holds the current layer's delta
        let mut off_end = self.param_count();
        for l in (0..layers).rev() {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let w_off = off_end - fan_out - fan_in * fan_out;
            let weights = &params[w_off..w_off + fan_in * fan_out];
            if let Some(pg) = param_grad.as_deref_mut() {
                let prev = &ws.acts[l][..fan_in];
                let delta = &ws.delta_a[..fan_out];
                let g_w = &mut pg[w_off..w_off + fan_in * fan_out];
                for j in 0..fan_out {
                    let row = &mut g_w[j * fan_in..(j + 1) * fan_in];
                    let d = delta[j];
                    for (g, x) in row.iter_mut().zip(prev.iter()) {
                        *g += d * x;
                    }
                }
                let g_b = &mut pg[w_off + fan_in * fan_out..off_end];
                for j in 0..fan_out {
                    g_b[j] += delta[j];
                }
            }
            let need_prev_delta = l > 0 || input_grad.is_some();
            if need_prev_delta {
                let delta = &ws.delta_a[..fan_out];
                let prev_delta = &mut ws.delta_b[..fan_in];
                prev_delta.fill(0.0);
                for j in 0..fan_out {
                    let row = &weights[j * fan_in..(j + 1) * fan_in];
                    let d = delta[j];
                    for (p, w) in prev_delta.iter_mut().zip(row.iter()) {
                        *p += d * w;
                    }
                }
                if l > 0 {
                    // previous layer is hidden: fold in tanh derivative
                    let prev_act = &ws.acts[l][..fan_in];
                    for (p, a) in prev_delta.iter_mut().zip(prev_act.iter()) {
                        *p *= 1.0 - a * a;
                    }
                } else if let Some(ig) = input_grad {
                    ig.copy_from_slice(&prev_delta[..fan_in]);
                    break;
                }
                std::mem::swap(&mut ws.delta_a, &mut ws.delta_b);
            }
            off_end = w_off;
        }
    }
}

/// Preallocated buffers for forward/backward passes.
#[derive(Debug, Clone)]
pub struct MlpWorkspace {
    acts: Vec<Vec<f64>>,
    delta_a: Vec<f64>,
    delta_b: Vec<f64>,
    out_dim: usize,
}

impl MlpWorkspace {
    pub fn new(spec: &MlpSpec) -> Self {
        let widest = spec.widest_layer();
        MlpWorkspace {
            acts: spec.layer_sizes().iter().map(|&s| vec![0.0; s]).collect(),
            delta_a: vec![0.0; widest],
            delta_b: vec![0.0; widest],
            out_dim: spec.output_dim(),
        }
    }

    pub fn output(&self) -> &[f64] {
        let last = self.acts.len() - 1;
        &self.acts[last][..self.out_dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference_params(
        spec: &MlpSpec,
        params: &[f64],
        input: &[f64],
        upstream: &[f64],
        h: f64,
    ) -> Vec<f64> {
        let scalar = |p: &[f64]| -> f64 {
            let out = spec.forward(p, input).unwrap();
            out.iter().zip(upstream).map(|(o, u)| o * u).sum()
        };
        let mut grad = vec![0.0; params.len()];
        let mut work = params.to_vec();
        for i in 0..params.len() {
            work[i] = params[i] + h;
            let up = scalar(&work);
            work[i] = params[i] - h;
            let down = scalar(&work);
            work[i] = params[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        grad
    }

    #[test]
    fn param_count_matches_layout() {
        let spec = MlpSpec::new(vec![4, 16, 16, 2], Activation::Tanh).unwrap();
        assert_eq!(spec.param_count(), 5 * 16 + 17 * 16 + 17 * 2);
        let mut rng = RngStream::new(0, 1);
        let p = spec.xavier_init(&mut rng);
        assert_eq!(p.len(), spec.param_count());
    }

    #[test]
    fn layer_slices_round_trip() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Identity).unwrap();
        let mut rng = RngStream::new(4, 1);
        let p = spec.xavier_init(&mut rng);
        let mut rebuilt = Vec::new();
        for (w, b) in spec.layer_slices(&p) {
            rebuilt.extend_from_slice(w);
            rebuilt.extend_from_slice(b);
        }
        assert_eq!(p, rebuilt);
    }

    #[test]
    fn xavier_biases_zero_and_weights_bounded() {
        let spec = MlpSpec::new(vec![8, 8], Activation::Tanh).unwrap();
        let mut rng = RngStream::new(7, 1);
        let p = spec.xavier_init(&mut rng);
        let bound = (6.0f64 / 16.0).sqrt();
        let (w, b) = spec.layer_slices(&p)[0];
        assert!(w.iter().all(|x| x.abs() < bound));
        assert!(b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn xavier_variance_matches_uniform_law() {
        // Var(U(-b, b)) = b^2 / 3 = 2 / (fan_in + fan_out)
        let spec = MlpSpec::new(vec![100, 100], Activation::Tanh).unwrap();
        let mut rng = RngStream::new(21, 1);
        let p = spec.xavier_init(&mut rng);
        let (w, _) = spec.layer_slices(&p)[0];
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / 200.0;
        assert!((var - expected).abs() < 0.1 * expected, "var {var} vs {expected}");
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Tanh).unwrap();
        let out = spec.forward(&vec![0.0; spec.param_count()], &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_layer_identity_head() {
        let spec = MlpSpec::new(vec![1, 1], Activation::Identity).unwrap();
        // params: weight w = 3.0, bias = 0
        let out = spec.forward(&[3.0, 0.0], &[2.0]).unwrap();
        assert_eq!(out, vec![6.0]);
    }

    #[test]
    fn tanh_head_stays_in_open_interval() {
        let spec = MlpSpec::new(vec![4, 8, 3], Activation::Tanh).unwrap();
        let mut rng = RngStream::new(13, 1);
        let p: Vec<f64> = (0..spec.param_count()).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let out = spec.forward(&p, &[5.0, -5.0, 1.0, 0.0]).unwrap();
        assert!(out.iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn forward_is_pure() {
        let spec = MlpSpec::new(vec![2, 6, 1], Activation::Identity).unwrap();
        let mut rng = RngStream::new(2, 2);
        let p = spec.xavier_init(&mut rng);
        let a = spec.forward(&p, &[0.3, -0.7]).unwrap();
        let b = spec.forward(&p, &[0.3, -0.7]).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let spec = MlpSpec::new(vec![2, 4, 2], Activation::Tanh).unwrap();
        let mut rng = RngStream::new(6, 1);
        let p = spec.xavier_init(&mut rng);
        let g = spec.grad_params(&p, &[0.1, 0.2], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vjp_is_linear_in_upstream() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Tanh).unwrap();
        let mut rng = RngStream::new(8, 1);
        let p = spec.xavier_init(&mut rng);
        let x = [0.4, -0.2, 0.9];
        let u1 = [0.7, -1.2];
        let u2 = [-0.3, 0.5];
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let g1 = spec.grad_params(&p, &x, &u1).unwrap();
        let g2 = spec.grad_params(&p, &x, &u2).unwrap();
        let gs = spec.grad_params(&p, &x, &sum).unwrap();
        for i in 0..gs.len() {
            assert!((gs[i] - (g1[i] + g2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_params_matches_finite_differences() {
        let spec = MlpSpec::new(vec![2, 16, 16, 1], Activation::Tanh).unwrap();
        let mut rng = RngStream::new(31, 1);
        for probe in 0..20 {
            let p = spec.xavier_init(&mut rng);
            let x = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            let u = [rng.uniform(-1.0, 1.0)];
            let ad = spec.grad_params(&p, &x, &u).unwrap();
            let fd = finite_difference_params(&spec, &p, &x, &u, 1e-5);
            let scale = fd.iter().fold(1e-3f64, |m, x| m.max(x.abs()));
            for i in 0..ad.len() {
                let rel = (ad[i] - fd[i]).abs() / scale;
                assert!(rel < 1e-4, "probe {probe} param {i}: ad {} fd {}", ad[i], fd[i]);
            }
        }
    }

    #[test]
    fn grad_input_matches_finite_differences() {
        let spec = MlpSpec::new(vec![4, 8, 8, 1], Activation::Identity).unwrap();
        let mut rng = RngStream::new(32, 1);
        let p = spec.xavier_init(&mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let u = [1.3];
        let ad = spec.grad_input(&p, &x, &u).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x.clone();
            xp[i] += h;
            let up = spec.forward(&p, &xp).unwrap()[0] * u[0];
            xp[i] = x[i] - h;
            let down = spec.forward(&p, &xp).unwrap()[0] * u[0];
            let fd = (up - down) / (2.0 * h);
            assert!((ad[i] - fd).abs() < 1e-6, "input {i}: ad {} fd {}", ad[i], fd);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let spec = MlpSpec::new(vec![3, 2], Activation::Tanh).unwrap();
        assert!(spec.forward(&[0.0; 7], &[0.0; 3]).is_err());
        assert!(spec.forward(&[0.0; 8], &[0.0; 2]).is_err());
    }
}
