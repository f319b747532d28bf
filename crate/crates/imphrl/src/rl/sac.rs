//! Soft actor-critic over the hybrid action space.
//!
//! Twin critics score (observation, primitive one-hot, masked parameters);
//! the actor loss marginalizes over all primitives with the categorical
//! weights, reparameterizing the continuous heads with explicit noise so the
//! whole loss is a deterministic, finite-difference-checkable function of the
//! network parameters. Target networks track with Polyak averaging and
//! terminal transitions never bootstrap.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Adam, Grads, Mlp};
use super::policy::{
    dsquash_log_std, param_mask, squash_log_std, standard_normal, theta_bounds,
    HybridDist, PolicyNet, ACTION_DIM,
};
use super::replay::Transition;
use crate::primitives::{PrimitiveId, NUM_PRIMITIVES};

/// Per-sample, per-primitive reparameterization noise.
pub type NoiseBlock = [[f64; ACTION_DIM]; NUM_PRIMITIVES];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SacHyper {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub alpha_lr: f64,
    pub gamma: f64,
    pub tau_net: f64,
    /// Separate temperatures keep the categorical head exploratory while the
    /// parameter heads sharpen.
    pub alpha_d_init: f64,
    pub alpha_c_init: f64,
    pub entropy_target_discrete: f64,
    pub entropy_target_continuous: f64,
    /// TD targets are clamped to the attainable return interval; unbounded
    /// bootstrapping drifts upward long before the policy is any good.
    pub target_lo: f64,
    pub target_hi: f64,
}

impl Default for SacHyper {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            lr: 3e-4,
            alpha_lr: 3e-3,
            gamma: 0.99,
            tau_net: 1e-3,
            alpha_d_init: 1.0,
            alpha_c_init: 0.2,
            entropy_target_discrete: 0.9,
            entropy_target_continuous: -6.0,
            target_lo: f64::NEG_INFINITY,
            target_hi: f64::INFINITY,
        }
    }
}

pub fn critic_input_dim(obs_dim: usize) -> usize {
    obs_dim + NUM_PRIMITIVES + ACTION_DIM
}

/// Critic input: observation, primitive one-hot, and the masked parameters
/// normalized to [-1, 1]. Raw stiffness values reach 500 and would swamp the
/// geometry of the first layer.
pub fn critic_input(obs: &[f64], primitive: usize, theta: &[f64; ACTION_DIM]) -> Vec<f64> {
    let mask = param_mask(PrimitiveId::from_index(primitive));
    let bounds = theta_bounds();
    let mut v = Vec::with_capacity(critic_input_dim(obs.len()));
    v.extend_from_slice(obs);
    for p in 0..NUM_PRIMITIVES {
        v.push(if p == primitive { 1.0 } else { 0.0 });
    }
    for i in 0..ACTION_DIM {
        let [lo, hi] = bounds[i];
        let unit = 2.0 * (theta[i] - lo) / (hi - lo) - 1.0;
        v.push(mask[i] * unit);
    }
    v
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SacAgent {
    pub obs_dim: usize,
    pub hyper: SacHyper,
    pub policy: PolicyNet,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub opt_policy: Adam,
    pub opt_q1: Adam,
    pub opt_q2: Adam,
    pub log_alpha_d: f64,
    pub log_alpha_c: f64,
    /// Entropy temperature tuning stops after the configured epoch.
    pub alpha_frozen: bool,
}

impl SacAgent {
    pub fn new(obs_dim: usize, hyper: SacHyper, rng: &mut impl Rng) -> Self {
        let policy = PolicyNet::new(obs_dim, &hyper.hidden, rng);
        let mut q_sizes = vec![critic_input_dim(obs_dim)];
        q_sizes.extend_from_slice(&hyper.hidden);
        q_sizes.push(1);
        let q1 = Mlp::new(&q_sizes, rng);
        let q2 = Mlp::new(&q_sizes, rng);
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        let opt_policy = Adam::new(&policy.net, hyper.lr);
        let opt_q1 = Adam::new(&q1, hyper.lr);
        let opt_q2 = Adam::new(&q2, hyper.lr);
        let log_alpha_d = hyper.alpha_d_init.ln();
        let log_alpha_c = hyper.alpha_c_init.ln();
        Self {
            obs_dim,
            hyper,
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            opt_policy,
            opt_q1,
            opt_q2,
            log_alpha_d,
            log_alpha_c,
            alpha_frozen: false,
        }
    }

    pub fn alpha_d(&self) -> f64 {
        self.log_alpha_d.exp()
    }

    pub fn alpha_c(&self) -> f64 {
        self.log_alpha_c.exp()
    }

    pub fn sample_noise(rng: &mut impl Rng) -> NoiseBlock {
        let mut block = [[0.0; ACTION_DIM]; NUM_PRIMITIVES];
        for row in &mut block {
            for v in row.iter_mut() {
                *v = standard_normal(rng);
            }
        }
        block
    }

    fn min_q_nets<'a>(&'a self, target: bool) -> (&'a Mlp, &'a Mlp) {
        if target {
            (&self.q1_target, &self.q2_target)
        } else {
            (&self.q1, &self.q2)
        }
    }

    /// State value under the current policy using the target critics:
    /// V(s) = sum_p w_p min Q(s, p, theta_p). Entropy bonuses stay out of
    /// the bootstrap on purpose; with them in, a rising temperature inflates
    /// every target and the critic chases its own tail.
    pub fn soft_value(&self, obs: &[f64], xi: &NoiseBlock, target: bool) -> f64 {
        let dist = self.policy.dist(obs);
        let probs = dist.probs();
        let (qa, qb) = self.min_q_nets(target);
        let mut v = 0.0;
        for p in 0..NUM_PRIMITIVES {
            let (theta, _) = dist.theta_for(p, &xi[p]);
            let input = critic_input(obs, p, &theta);
            let q = qa.forward1(&input)[0].min(qb.forward1(&input)[0]);
            v += probs[p] * q;
        }
        v
    }

    /// TD targets: y = r + gamma (1 - done) V_target(s'); terminal
    /// transitions contribute exactly r.
    pub fn compute_targets(&self, batch: &[&Transition], rng: &mut impl Rng) -> Vec<f64> {
        batch
            .iter()
            .map(|t| {
                let xi = Self::sample_noise(rng);
                if t.done {
                    t.reward
                } else {
                    let y = t.reward + self.hyper.gamma * self.soft_value(&t.next_obs, &xi, true);
                    y.clamp(self.hyper.target_lo, self.hyper.target_hi)
                }
            })
            .collect()
    }

    /// One twin-critic regression step toward the TD targets. Returns the
    /// mean squared Bellman error.
    pub fn critic_update(&mut self, batch: &[&Transition], rng: &mut impl Rng) -> f64 {
        let targets = self.compute_targets(batch, rng);
        let n = batch.len();
        let in_dim = critic_input_dim(self.obs_dim);
        let mut x = Array2::zeros((n, in_dim));
        for (i, t) in batch.iter().enumerate() {
            let input = critic_input(&t.obs, t.primitive, &t.theta);
            for (j, v) in input.iter().enumerate() {
                x[[i, j]] = *v;
            }
        }
        let mut loss = 0.0;
        for which in 0..2 {
            let net = if which == 0 { &self.q1 } else { &self.q2 };
            let (y, cache) = net.forward(&x);
            let mut dy = Array2::zeros((n, 1));
            for i in 0..n {
                let err = y[[i, 0]] - targets[i];
                loss += 0.5 * err * err / n as f64;
                dy[[i, 0]] = err / n as f64;
            }
            let (grads, _) = net.backward(&cache, &dy);
            if which == 0 {
                self.opt_q1.step(&mut self.q1, &grads);
            } else {
                self.opt_q2.step(&mut self.q2, &grads);
            }
        }
        loss
    }

    /// Actor loss and its analytic gradient for a batch of observations with
    /// fixed reparameterization noise. Pure in the network parameters, so
    /// finite differences over `policy.net` can validate the gradient.
    pub fn policy_loss_and_grad(
        &self,
        obs: &Array2<f64>,
        noise: &[NoiseBlock],
    ) -> (f64, f64, f64, Grads) {
        let n = obs.nrows();
        assert_eq!(noise.len(), n);
        let (ad, ac) = (self.alpha_d(), self.alpha_c());
        let (out, cache) = self.policy.dist_batch(obs);

        // batched critic evaluation over all (sample, primitive) rows
        let in_dim = critic_input_dim(self.obs_dim);
        let mut qx = Array2::zeros((n * NUM_PRIMITIVES, in_dim));
        let mut dists = Vec::with_capacity(n);
        let mut thetas = vec![[[0.0; ACTION_DIM]; NUM_PRIMITIVES]; n];
        let mut log_pis = vec![[0.0; NUM_PRIMITIVES]; n];
        for s in 0..n {
            let dist = HybridDist::from_row(&out.row(s).to_vec());
            for p in 0..NUM_PRIMITIVES {
                let (theta, log_pi) = dist.theta_for(p, &noise[s][p]);
                let input = critic_input(&obs.row(s).to_vec(), p, &theta);
                for (j, v) in input.iter().enumerate() {
                    qx[[s * NUM_PRIMITIVES + p, j]] = *v;
                }
                thetas[s][p] = theta;
                log_pis[s][p] = log_pi;
            }
            dists.push(dist);
        }
        let (q1v, c1) = self.q1.forward(&qx);
        let (q2v, c2) = self.q2.forward(&qx);
        // input grads of the row-wise min critic
        let mut sel1 = Array2::zeros((n * NUM_PRIMITIVES, 1));
        let mut sel2 = Array2::zeros((n * NUM_PRIMITIVES, 1));
        let mut qmin = vec![[0.0; NUM_PRIMITIVES]; n];
        for s in 0..n {
            for p in 0..NUM_PRIMITIVES {
                let r = s * NUM_PRIMITIVES + p;
                if q1v[[r, 0]] <= q2v[[r, 0]] {
                    qmin[s][p] = q1v[[r, 0]];
                    sel1[[r, 0]] = 1.0;
                } else {
                    qmin[s][p] = q2v[[r, 0]];
                    sel2[[r, 0]] = 1.0;
                }
            }
        }
        let (_, dq1) = self.q1.backward(&c1, &sel1);
        let (_, dq2) = self.q2.backward(&c2, &sel2);

        let mut loss = 0.0;
        let mut ent_d = 0.0;
        let mut ent_c = 0.0;
        let mut d_out = Array2::zeros(out.raw_dim());
        for s in 0..n {
            let dist = &dists[s];
            let probs = dist.probs();
            let mut g = [0.0; NUM_PRIMITIVES];
            let mut mean_g = 0.0;
            for p in 0..NUM_PRIMITIVES {
                g[p] = ad * probs[p].max(1e-300).ln() + ac * log_pis[s][p] - qmin[s][p];
                mean_g += probs[p] * g[p];
                ent_d -= probs[p] * probs[p].max(1e-300).ln();
                ent_c -= probs[p] * log_pis[s][p];
            }
            loss += mean_g;
            // categorical head
            for l in 0..NUM_PRIMITIVES {
                d_out[[s, l]] = probs[l] * (g[l] - mean_g) / n as f64;
            }
            // continuous heads via the reparameterized path
            for p in 0..NUM_PRIMITIVES {
                let base = NUM_PRIMITIVES + p * 2 * ACTION_DIM;
                let row = s * NUM_PRIMITIVES + p;
                let mask = param_mask(PrimitiveId::from_index(p));
                for i in 0..ACTION_DIM {
                    let raw = dist.raw_log_std[p][i];
                    let log_std = squash_log_std(raw);
                    let std = log_std.exp();
                    let u = dist.mean[p][i] + std * noise[s][p][i];
                    let t = u.tanh();
                    // dq with respect to the normalized critic input slot;
                    // the normalization factor 2/(hi-lo) cancels the tanh
                    // output scale (hi-lo)/2 exactly, so dq/du is just
                    // dq_unit (1 - tanh^2 u)
                    let dq_unit = dq1[[row, self.obs_dim + NUM_PRIMITIVES + i]]
                        + dq2[[row, self.obs_dim + NUM_PRIMITIVES + i]];
                    let dq_unit = dq_unit * mask[i];
                    // dL/du: entropy term raises log pi with 2 tanh(u),
                    // critic term flows through the reparameterized path
                    let dl_du = probs[p]
                        * (ac * 2.0 * t - dq_unit * (1.0 - t * t))
                        / n as f64;
                    d_out[[s, base + i]] += dl_du;
                    // raw log-std: through u and the -log sigma density term
                    let dls = dsquash_log_std(raw);
                    d_out[[s, base + ACTION_DIM + i]] += dl_du * std * noise[s][p][i] * dls
                        + probs[p] * ac * (-1.0) * dls / n as f64;
                }
            }
        }
        loss /= n as f64;
        ent_d /= n as f64;
        ent_c /= n as f64;
        let (grads, _) = self.policy.net.backward(&cache, &d_out);
        (loss, ent_d, ent_c, grads)
    }

    /// Scalar actor loss only; used by gradient checks.
    pub fn policy_loss(&self, obs: &Array2<f64>, noise: &[NoiseBlock]) -> f64 {
        let n = obs.nrows();
        let (ad, ac) = (self.alpha_d(), self.alpha_c());
        let mut loss = 0.0;
        for s in 0..n {
            let row: Vec<f64> = obs.row(s).to_vec();
            let dist = self.policy.dist(&row);
            let probs = dist.probs();
            for p in 0..NUM_PRIMITIVES {
                let (theta, log_pi) = dist.theta_for(p, &noise[s][p]);
                let input = critic_input(&row, p, &theta);
                let q = self.q1.forward1(&input)[0].min(self.q2.forward1(&input)[0]);
                loss += probs[p] * (ad * probs[p].max(1e-300).ln() + ac * log_pi - q);
            }
        }
        loss / n as f64
    }

    /// One actor step plus the two temperature updates; returns
    /// (loss, discrete entropy, continuous entropy).
    pub fn policy_update(&mut self, obs: &Array2<f64>, noise: &[NoiseBlock]) -> (f64, f64, f64) {
        let (loss, ent_d, ent_c, grads) = self.policy_loss_and_grad(obs, noise);
        self.opt_policy.step(&mut self.policy.net, &grads);
        if !self.alpha_frozen {
            self.log_alpha_d -=
                self.hyper.alpha_lr * (ent_d - self.hyper.entropy_target_discrete);
            self.log_alpha_d = self.log_alpha_d.clamp(-10.0, 1.6);
            self.log_alpha_c -=
                self.hyper.alpha_lr * (ent_c - self.hyper.entropy_target_continuous);
            self.log_alpha_c = self.log_alpha_c.clamp(-10.0, 1.6);
        }
        (loss, ent_d, ent_c)
    }

    /// Target networks track the online critics.
    pub fn polyak_update(&mut self) {
        self.q1_target.polyak_from(&self.q1, self.hyper.tau_net);
        self.q2_target.polyak_from(&self.q2, self.hyper.tau_net);
    }
}
