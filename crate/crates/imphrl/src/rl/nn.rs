//! Small dense networks with hand-written backprop.
//!
//! f64 throughout so gradient checks can run at tight tolerances and training
//! stays bit-reproducible across runs. Batched forward/backward over
//! `Array2` rows; the backward pass also returns the input gradient, which
//! the actor loss needs to differentiate the critic with respect to its
//! action inputs.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected ReLU network with a linear head.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// Per layer, shape (fan_in, fan_out).
    pub ws: Vec<Array2<f64>>,
    pub bs: Vec<Array1<f64>>,
}

/// Intermediate activations of one forward pass, consumed by `backward`.
pub struct Cache {
    /// Layer inputs: acts[0] is the network input, acts[i] the post-ReLU
    /// input of layer i.
    acts: Vec<Array2<f64>>,
    /// Pre-activation outputs of each hidden layer (ReLU masks).
    pre: Vec<Array2<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Grads {
    pub ws: Vec<Array2<f64>>,
    pub bs: Vec<Array1<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            ws: net.ws.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            bs: net.bs.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.ws {
            *w *= s;
        }
        for b in &mut self.bs {
            *b *= s;
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.ws.iter_mut().zip(&other.ws) {
            *a += b;
        }
        for (a, b) in self.bs.iter_mut().zip(&other.bs) {
            *a += b;
        }
    }
}

impl Mlp {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, matching the usual
    /// dense-layer default.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound));
            let b = Array1::from_shape_fn(fan_out, |_| rng.gen_range(-bound..bound));
            ws.push(w);
            bs.push(b);
        }
        Self {
            sizes: sizes.to_vec(),
            ws,
            bs,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Cache) {
        assert_eq!(x.ncols(), self.input_dim());
        let n_layers = self.ws.len();
        let mut acts = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        let mut h = x.clone();
        for (i, (w, b)) in self.ws.iter().zip(&self.bs).enumerate() {
            acts.push(h.clone());
            let mut z = h.dot(w);
            z += b;
            if i + 1 < n_layers {
                pre.push(z.clone());
                h = z.mapv(|v| v.max(0.0));
            } else {
                h = z;
            }
        }
        (h, Cache { acts, pre })
    }

    /// Convenience single-sample forward.
    pub fn forward1(&self, x: &[f64]) -> Vec<f64> {
        let xa = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        let (y, _) = self.forward(&xa);
        y.row(0).to_vec()
    }

    /// Backward pass from the output gradient `dy`; returns parameter
    /// gradients and the gradient with respect to the network input.
    pub fn backward(&self, cache: &Cache, dy: &Array2<f64>) -> (Grads, Array2<f64>) {
        let n_layers = self.ws.len();
        let mut grads = Grads::zeros_like(self);
        let mut delta = dy.clone();
        for i in (0..n_layers).rev() {
            if i < n_layers - 1 {
                // ReLU mask of the following activation
                let mask = cache.pre[i].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                delta = &delta * &mask;
            }
            grads.ws[i] = cache.acts[i].t().dot(&delta);
            grads.bs[i] = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.ws[i].t());
        }
        (grads, delta)
    }

    /// theta <- theta + alpha * other for Polyak averaging and SGD-style
    /// updates; shapes must match.
    pub fn axpy(&mut self, alpha: f64, other: &Mlp) {
        for (a, b) in self.ws.iter_mut().zip(&other.ws) {
            a.zip_mut_with(b, |x, y| *x += alpha * y);
        }
        for (a, b) in self.bs.iter_mut().zip(&other.bs) {
            a.zip_mut_with(b, |x, y| *x += alpha * y);
        }
    }

    /// Polyak target tracking: target <- (1 - tau) * target + tau * source.
    pub fn polyak_from(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.ws.iter_mut().zip(&source.ws) {
            t.zip_mut_with(s, |x, y| *x = (1.0 - tau) * *x + tau * y);
        }
        for (t, s) in self.bs.iter_mut().zip(&source.bs) {
            t.zip_mut_with(s, |x, y| *x = (1.0 - tau) * *x + tau * y);
        }
    }

    /// Flat parameter view for checkpoint hashing and gradient checks.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.ws {
            out.extend(w.iter().copied());
        }
        for b in &self.bs {
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut idx = 0;
        for w in &mut self.ws {
            for v in w.iter_mut() {
                *v = flat[idx];
                idx += 1;
            }
        }
        for b in &mut self.bs {
            for v in b.iter_mut() {
                *v = flat[idx];
                idx += 1;
            }
        }
        assert_eq!(idx, flat.len());
    }
}

/// Adam with the standard bias correction; state is serialized into
/// checkpoints so resumed runs continue bit-exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        for i in 0..net.ws.len() {
            update(
                &mut net.ws[i],
                &mut self.m.ws[i],
                &mut self.v.ws[i],
                &grads.ws[i],
                b1,
                b2,
                b1c,
                b2c,
                eps,
                lr,
            );
            update1(
                &mut net.bs[i],
                &mut self.m.bs[i],
                &mut self.v.bs[i],
                &grads.bs[i],
                b1,
                b2,
                b1c,
                b2c,
                eps,
                lr,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update(
    p: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    g: &Array2<f64>,
    b1: f64,
    b2: f64,
    b1c: f64,
    b2c: f64,
    eps: f64,
    lr: f64,
) {
    azip_four(p, m, v, g, b1, b2, b1c, b2c, eps, lr);
}

#[allow(clippy::too_many_arguments)]
fn update1(
    p: &mut Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    g: &Array1<f64>,
    b1: f64,
    b2: f64,
    b1c: f64,
    b2c: f64,
    eps: f64,
    lr: f64,
) {
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= lr * (m[i] / b1c) / ((v[i] / b2c).sqrt() + eps);
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_four(
    p: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    g: &Array2<f64>,
    b1: f64,
    b2: f64,
    b1c: f64,
    b2c: f64,
    eps: f64,
    lr: f64,
) {
    let pm = p.as_slice_mut().unwrap();
    let mm = m.as_slice_mut().unwrap();
    let vm = v.as_slice_mut().unwrap();
    let gm = g.as_slice().unwrap();
    for i in 0..pm.len() {
        mm[i] = b1 * mm[i] + (1.0 - b1) * gm[i];
        vm[i] = b2 * vm[i] + (1.0 - b2) * gm[i] * gm[i];
        pm[i] -= lr * (mm[i] / b1c) / ((vm[i] / b2c).sqrt() + eps);
    }
}
