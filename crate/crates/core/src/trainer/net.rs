//! Two-layer tanh velocity field `v(x_t, t, e_cond)` with a hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensorfile::{TensorFile, TensorFileError};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has {got} entries, expected {expected}")]
    InputDim { got: usize, expected: usize },
    #[error("time {0} outside [0, 1)")]
    TimeOutOfRange(f64),
    #[error(transparent)]
    TensorFile(#[from] TensorFileError),
}

/// Parameters are stored flat as `[W1 (h×in), b1 (h), W2 (out×h), b2 (out)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityNet {
    latent_dim: usize,
    embed_dim: usize,
    hidden: usize,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
}

impl VelocityNet {
    pub fn new(latent_dim: usize, embed_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut net = Self::zeros(latent_dim, embed_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = net.in_dim();
        let b1 = 1.0 / (in_dim as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        let (w1_end, b1_end, w2_end) = net.offsets();
        for (i, p) in net.params.iter_mut().enumerate() {
            let bound = if i < b1_end { b1 } else { b2 };
            *p = rng.random_range(-bound..bound);
        }
        debug_assert!(w1_end < b1_end && b1_end < w2_end);
        net
    }

    pub fn zeros(latent_dim: usize, embed_dim: usize, hidden: usize) -> Self {
        let in_dim = latent_dim + 1 + embed_dim;
        let n = hidden * in_dim + hidden + latent_dim * hidden + latent_dim;
        VelocityNet { latent_dim, embed_dim, hidden, params: vec![0.0; n] }
    }

    pub fn in_dim(&self) -> usize {
        self.latent_dim + 1 + self.embed_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Ends of the W1, b1 and W2 blocks.
    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.hidden * self.in_dim();
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.latent_dim * self.hidden;
        (w1, b1, w2)
    }

    fn assemble(&self, x_t: &[f64], t: f64, e_cond: &[f64]) -> Result<Vec<f64>, NetError> {
        if x_t.len() != self.latent_dim {
            return Err(NetError::InputDim { got: x_t.len(), expected: self.latent_dim });
        }
        if e_cond.len() != self.embed_dim {
            return Err(NetError::InputDim { got: e_cond.len(), expected: self.embed_dim });
        }
        let mut input = Vec::with_capacity(self.in_dim());
        input.extend_from_slice(x_t);
        input.push(t);
        input.extend_from_slice(e_cond);
        Ok(input)
    }

    pub fn forward(&self, x_t: &[f64], t: f64, e_cond: &[f64]) -> Result<(Vec<f64>, ForwardCache), NetError> {
        let input = self.assemble(x_t, t, e_cond)?;
        let in_dim = self.in_dim();
        let (w1_end, b1_end, w2_end) = self.offsets();
        let w1 = &self.params[..w1_end];
        let b1 = &self.params[w1_end..b1_end];
        let w2 = &self.params[b1_end..w2_end];
        let b2 = &self.params[w2_end..];
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &w1[j * in_dim..(j + 1) * in_dim];
                (b1[j] + row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>()).tanh()
            })
            .collect();
        let out = (0..self.latent_dim)
            .map(|i| {
                let row = &w2[i * self.hidden..(i + 1) * self.hidden];
                b2[i] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        Ok((out, ForwardCache { input, hidden }))
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂v`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let in_dim = self.in_dim();
        let (w1_end, b1_end, w2_end) = self.offsets();
        let w2 = &self.params[b1_end..w2_end];
        let mut d_hidden = vec![0.0; self.hidden];
        for (i, go) in grad_out.iter().enumerate() {
            grad[w2_end + i] += go;
            let row = i * self.hidden;
            for j in 0..self.hidden {
                grad[b1_end + row + j] += go * cache.hidden[j];
                d_hidden[j] += go * w2[row + j];
            }
        }
        for j in 0..self.hidden {
            let h = cache.hidden[j];
            let d_pre = d_hidden[j] * (1.0 - h * h);
            grad[w1_end + j] += d_pre;
            let row = j * in_dim;
            for (k, x) in cache.input.iter().enumerate() {
                grad[row + k] += d_pre * x;
            }
        }
    }

    pub fn to_tensor_file(&self, f: &mut TensorFile) -> Result<(), NetError> {
        let (w1_end, b1_end, w2_end) = self.offsets();
        f.insert("net.w1", vec![self.hidden, self.in_dim()], self.params[..w1_end].to_vec())?;
        f.insert("net.b1", vec![self.hidden], self.params[w1_end..b1_end].to_vec())?;
        f.insert("net.w2", vec![self.latent_dim, self.hidden], self.params[b1_end..w2_end].to_vec())?;
        f.insert("net.b2", vec![self.latent_dim], self.params[w2_end..].to_vec())?;
        Ok(())
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self, NetError> {
        let w1 = f.get("net.w1")?;
        let (hidden, in_dim) = match w1.shape[..] {
            [h, i] => (h, i),
            _ => return Err(NetError::InputDim { got: w1.shape.len(), expected: 2 }),
        };
        let b2 = f.get("net.b2")?;
        let latent_dim = b2.data.len();
        if in_dim < latent_dim + 2 {
            return Err(NetError::InputDim { got: in_dim, expected: latent_dim + 2 });
        }
        let embed_dim = in_dim - latent_dim - 1;
        let mut params = w1.data.clone();
        params.extend_from_slice(f.get_shaped("net.b1", &[hidden])?);
        params.extend_from_slice(f.get_shaped("net.w2", &[latent_dim, hidden])?);
        params.extend_from_slice(&b2.data);
        Ok(VelocityNet { latent_dim, embed_dim, hidden, params })
    }
}

/// One-step flow estimate of the endpoint: `x_t + (1 - t) v(x_t, t, e_cond)`.
pub fn one_step_generate(net: &VelocityNet, x_t: &[f64], t: f64, e_cond: &[f64]) -> Result<Vec<f64>, NetError> {
    if !(0.0..1.0).contains(&t) {
        return Err(NetError::TimeOutOfRange(t));
    }
    let (v, _) = net.forward(x_t, t, e_cond)?;
    Ok(x_t.iter().zip(&v).map(|(x, vi)| x + (1.0 - t) * vi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> (Vec<f64>, f64, Vec<f64>) {
        let x: Vec<f64> = (0..4).map(|i| 0.3 * i as f64 - 0.4).collect();
        let e: Vec<f64> = (0..5).map(|i| (i as f64 * 0.7).sin()).collect();
        (x, 0.35, e)
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let net = VelocityNet::new(4, 5, 16, 3);
        let bound = 1.0 / (net.in_dim() as f64).sqrt();
        assert!(net.params()[..16 * net.in_dim()].iter().all(|p| p.abs() <= bound));
        assert_eq!(net, VelocityNet::new(4, 5, 16, 3));
        assert_ne!(net, VelocityNet::new(4, 5, 16, 4));
    }

    #[test]
    fn zero_net_emits_bias() {
        let mut net = VelocityNet::zeros(4, 5, 8);
        let n = net.num_params();
        for (k, p) in net.params_mut()[n - 4..].iter_mut().enumerate() {
            *p = k as f64;
        }
        let (x, t, e) = inputs();
        let (v, _) = net.forward(&x, t, &e).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 2.0, 3.0]);
        let g = one_step_generate(&net, &x, t, &e).unwrap();
        for i in 0..4 {
            assert_eq!(g[i], x[i] + (1.0 - t) * i as f64);
        }
    }

    #[test]
    fn vanishing_step_near_one() {
        let net = VelocityNet::new(4, 5, 8, 1);
        let (x, _, e) = inputs();
        let t = 1.0 - 1e-12;
        let g = one_step_generate(&net, &x, t, &e).unwrap();
        for (a, b) in g.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(one_step_generate(&net, &x, 1.0, &e).is_err());
        assert!(net.forward(&x[..3], 0.0, &e).is_err());
    }

    #[test]
    fn generation_gradient_matches_finite_differences() {
        // L = c · x̂₁ so ∂L/∂v = (1 - t) c
        let net = VelocityNet::new(4, 5, 8, 9);
        let (x, t, e) = inputs();
        let c = [0.3, -1.1, 0.7, 0.2];
        let loss = |n: &VelocityNet| -> f64 {
            one_step_generate(n, &x, t, &e).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward(&x, t, &e).unwrap();
        let mut grad = vec![0.0; net.num_params()];
        let go: Vec<f64> = c.iter().map(|ci| (1.0 - t) * ci).collect();
        net.backward(&cache, &go, &mut grad);
        let h = 1e-5;
        let mut fd = vec![0.0; net.num_params()];
        for k in 0..net.num_params() {
            let mut p = net.clone();
            p.params_mut()[k] += h;
            let up = loss(&p);
            p.params_mut()[k] -= 2.0 * h;
            fd[k] = (up - loss(&p)) / (2.0 * h);
        }
        let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale: f64 = grad.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / scale < 1e-4, "rel err {}", diff / scale);
    }

    #[test]
    fn tensor_file_round_trip() {
        let net = VelocityNet::new(4, 5, 8, 2);
        let mut f = TensorFile::new();
        net.to_tensor_file(&mut f).unwrap();
        let back = TensorFile::read_from(f.to_bytes().as_slice()).unwrap();
        assert_eq!(VelocityNet::from_tensor_file(&back).unwrap(), net);
    }
}
