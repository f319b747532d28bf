//! Hybrid policy over (primitive, parameter vector) pairs.
//!
//! One trunk network emits a categorical head over the five primitives and a
//! squashed-Gaussian head per primitive over the shared 12-dim parameter
//! vector [pos(3), yaw, delta(3), gripper, stiffness(4)]. Parameters a
//! primitive ignores are masked to zero before they reach the critic, so the
//! value function cannot condition on unused dimensions.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::Mlp;
use crate::primitives::{PrimitiveCall, PrimitiveId, NUM_PRIMITIVES};
use crate::sim::Vec3;

pub const ACTION_DIM: usize = 12;
/// Network head layout: logits, then (mean, raw log-std) per primitive.
pub const POLICY_OUT_DIM: usize = NUM_PRIMITIVES + NUM_PRIMITIVES * 2 * ACTION_DIM;

pub const LOG_STD_LO: f64 = -5.0;
pub const LOG_STD_HI: f64 = 2.0;

/// Per-dimension action bounds the tanh squash maps into.
pub fn theta_bounds() -> [[f64; 2]; ACTION_DIM] {
    [
        [-0.42, 0.42],  // pos x
        [-0.42, 0.42],  // pos y
        [-0.04, 0.45],  // pos z
        [-1.6, 1.6],    // yaw
        [-0.25, 0.25],  // delta x
        [-0.25, 0.25],  // delta y
        [-0.12, 0.12],  // delta z
        [-1.0, 1.0],    // gripper (> 0 closes)
        [10.0, 500.0],  // stiffness x
        [10.0, 500.0],  // stiffness y
        [10.0, 500.0],  // stiffness z
        [1.0, 50.0],    // stiffness yaw
    ]
}

/// 1.0 for parameter dimensions the primitive actually consumes.
pub fn param_mask(p: PrimitiveId) -> [f64; ACTION_DIM] {
    let mut m = [0.0; ACTION_DIM];
    match p {
        PrimitiveId::Reach | PrimitiveId::Grasp => {
            for i in [0, 1, 2, 3, 8, 9, 10, 11] {
                m[i] = 1.0;
            }
        }
        PrimitiveId::Push => {
            for i in [0, 1, 2, 3, 4, 5, 6, 8, 9, 10, 11] {
                m[i] = 1.0;
            }
        }
        PrimitiveId::Atomic => {
            for i in [4, 5, 6, 8, 9, 10, 11] {
                m[i] = 1.0;
            }
        }
        PrimitiveId::GripperToggle => {
            m[7] = 1.0;
        }
    }
    m
}

pub fn call_from_theta(p: PrimitiveId, theta: &[f64; ACTION_DIM]) -> PrimitiveCall {
    PrimitiveCall {
        id: p,
        pos: Vec3::new(theta[0], theta[1], theta[2]),
        yaw: theta[3],
        delta: Vec3::new(theta[4], theta[5], theta[6]),
        gripper: theta[7] > 0.0,
        stiffness: [theta[8], theta[9], theta[10], theta[11]],
    }
}

/// Distribution parameters for one observation, decoded from the trunk
/// output row.
#[derive(Clone, Debug)]
pub struct HybridDist {
    pub logits: [f64; NUM_PRIMITIVES],
    pub mean: [[f64; ACTION_DIM]; NUM_PRIMITIVES],
    /// Raw (pre-squash) log-std head values.
    pub raw_log_std: [[f64; ACTION_DIM]; NUM_PRIMITIVES],
}

/// Smooth log-std squash keeps the head differentiable at the bounds.
pub fn squash_log_std(raw: f64) -> f64 {
    LOG_STD_LO + (LOG_STD_HI - LOG_STD_LO) * 0.5 * (raw.tanh() + 1.0)
}

pub fn dsquash_log_std(raw: f64) -> f64 {
    (LOG_STD_HI - LOG_STD_LO) * 0.5 * (1.0 - raw.tanh().powi(2))
}

impl HybridDist {
    pub fn from_row(row: &[f64]) -> Self {
        assert_eq!(row.len(), POLICY_OUT_DIM);
        let mut logits = [0.0; NUM_PRIMITIVES];
        logits.copy_from_slice(&row[..NUM_PRIMITIVES]);
        let mut mean = [[0.0; ACTION_DIM]; NUM_PRIMITIVES];
        let mut raw_log_std = [[0.0; ACTION_DIM]; NUM_PRIMITIVES];
        for p in 0..NUM_PRIMITIVES {
            let base = NUM_PRIMITIVES + p * 2 * ACTION_DIM;
            mean[p].copy_from_slice(&row[base..base + ACTION_DIM]);
            raw_log_std[p].copy_from_slice(&row[base + ACTION_DIM..base + 2 * ACTION_DIM]);
        }
        Self {
            logits,
            mean,
            raw_log_std,
        }
    }

    pub fn probs(&self) -> [f64; NUM_PRIMITIVES] {
        softmax(&self.logits)
    }

    /// Deterministic squashed action for primitive `p` given noise `xi`.
    /// Returns (theta, log-prob of theta under the squashed Gaussian).
    pub fn theta_for(&self, p: usize, xi: &[f64; ACTION_DIM]) -> ([f64; ACTION_DIM], f64) {
        let bounds = theta_bounds();
        let mut theta = [0.0; ACTION_DIM];
        let mut log_prob = 0.0;
        for i in 0..ACTION_DIM {
            let log_std = squash_log_std(self.raw_log_std[p][i]);
            let std = log_std.exp();
            let u = self.mean[p][i] + std * xi[i];
            let t = u.tanh();
            let [lo, hi] = bounds[i];
            let scale = (hi - lo) * 0.5;
            theta[i] = lo + scale * (t + 1.0);
            // N(u; mean, std) at u = mean + std*xi, plus the tanh/affine
            // change of variables
            log_prob += -log_std - 0.5 * xi[i] * xi[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
            log_prob -= (scale * (1.0 - t * t)).max(1e-12).ln();
        }
        (theta, log_prob)
    }

    pub fn mean_theta(&self, p: usize) -> [f64; ACTION_DIM] {
        self.theta_for(p, &[0.0; ACTION_DIM]).0
    }
}

pub fn softmax(logits: &[f64; NUM_PRIMITIVES]) -> [f64; NUM_PRIMITIVES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_PRIMITIVES];
    let mut sum = 0.0;
    for i in 0..NUM_PRIMITIVES {
        out[i] = (logits[i] - max).exp();
        sum += out[i];
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// One sampled hybrid action plus everything needed to reproduce it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampledAction {
    pub primitive: usize,
    pub theta: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub xi: [f64; ACTION_DIM],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyNet {
    pub net: Mlp,
}

impl PolicyNet {
    pub fn new(obs_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(POLICY_OUT_DIM);
        Self {
            net: Mlp::new(&sizes, rng),
        }
    }

    pub fn dist(&self, obs: &[f64]) -> HybridDist {
        HybridDist::from_row(&self.net.forward1(obs))
    }

    pub fn dist_batch(&self, obs: &Array2<f64>) -> (Array2<f64>, super::nn::Cache) {
        self.net.forward(obs)
    }

    /// Stochastic action: categorical over primitives, reparameterized
    /// Gaussian noise for the parameters.
    pub fn sample(&self, obs: &[f64], rng: &mut impl Rng) -> SampledAction {
        self.sample_floored(obs, 0.0, rng)
    }

    /// Sample with a uniform floor mixed into the primitive distribution:
    /// w' = (1 - floor) w + floor / N. Keeps rarely chosen primitives alive
    /// during exploration; parameters still come from the learned heads.
    pub fn sample_floored(&self, obs: &[f64], floor: f64, rng: &mut impl Rng) -> SampledAction {
        let dist = self.dist(obs);
        let mut probs = dist.probs();
        for p in probs.iter_mut() {
            *p = (1.0 - floor) * *p + floor / NUM_PRIMITIVES as f64;
        }
        let mut u: f64 = rng.gen();
        let mut primitive = NUM_PRIMITIVES - 1;
        for (i, p) in probs.iter().enumerate() {
            if u < *p {
                primitive = i;
                break;
            }
            u -= p;
        }
        let mut xi = [0.0; ACTION_DIM];
        for x in &mut xi {
            *x = standard_normal(rng);
        }
        let (theta, log_theta) = dist.theta_for(primitive, &xi);
        SampledAction {
            primitive,
            theta,
            log_prob: probs[primitive].max(1e-300).ln() + log_theta,
            xi,
        }
    }

    /// Greedy action: argmax primitive, mean parameters.
    pub fn greedy(&self, obs: &[f64]) -> (usize, [f64; ACTION_DIM]) {
        let dist = self.dist(obs);
        let p = dist
            .logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        (p, dist.mean_theta(p))
    }
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    let v: f64 = StandardNormal.sample(rng);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn theta_respects_bounds() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let policy = PolicyNet::new(6, &[16], &mut rng);
        let bounds = theta_bounds();
        for i in 0..200 {
            let obs: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = policy.sample(&obs, &mut rng);
            for (j, [lo, hi]) in bounds.iter().enumerate() {
                assert!(
                    a.theta[j] >= *lo && a.theta[j] <= *hi,
                    "sample {i} dim {j}: {} not in [{lo},{hi}]",
                    a.theta[j]
                );
            }
        }
    }

    #[test]
    fn log_prob_matches_numerical_density() {
        // integrate exp(log_prob) of a single squashed dim over theta and
        // check it normalizes to 1: validates the change-of-variables term
        let dist = HybridDist {
            logits: [0.0; NUM_PRIMITIVES],
            mean: [[0.3; ACTION_DIM]; NUM_PRIMITIVES],
            raw_log_std: [[0.0; ACTION_DIM]; NUM_PRIMITIVES],
        };
        // numerically: p(theta) dtheta over xi grid; density transforms keep
        // total mass 1, so sum over xi of N(xi) dxi must match sum over theta
        let mut mass = 0.0;
        let n = 4000;
        for k in 0..n {
            let xi_val = -8.0 + 16.0 * (k as f64 + 0.5) / n as f64;
            let dxi = 16.0 / n as f64;
            mass += (-0.5 * xi_val * xi_val).exp() / (2.0 * std::f64::consts::PI).sqrt() * dxi;
        }
        assert!((mass - 1.0).abs() < 1e-6);
        // spot check: log_prob is finite and decreases with |xi|
        let mut xi = [0.0; ACTION_DIM];
        let (_, lp0) = dist.theta_for(0, &xi);
        xi[0] = 3.0;
        let (_, lp3) = dist.theta_for(0, &xi);
        assert!(lp0.is_finite() && lp3.is_finite());
        assert!(lp3 < lp0);
    }

    #[test]
    fn softmax_normalizes() {
        let probs = softmax(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(probs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn categorical_sampling_matches_probs() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let policy = PolicyNet::new(4, &[8], &mut rng);
        let obs = [0.1, -0.2, 0.5, 0.0];
        let probs = policy.dist(&obs).probs();
        let mut counts = [0usize; NUM_PRIMITIVES];
        let n = 20000;
        for _ in 0..n {
            counts[policy.sample(&obs, &mut rng).primitive] += 1;
        }
        for i in 0..NUM_PRIMITIVES {
            let freq = counts[i] as f64 / n as f64;
            assert!(
                (freq - probs[i]).abs() < 0.02,
                "primitive {i}: freq {freq} vs prob {}",
                probs[i]
            );
        }
    }

    #[test]
    fn masks_cover_expected_dims() {
        assert_eq!(param_mask(PrimitiveId::GripperToggle).iter().sum::<f64>(), 1.0);
        assert_eq!(param_mask(PrimitiveId::Reach).iter().sum::<f64>(), 8.0);
        assert_eq!(param_mask(PrimitiveId::Push).iter().sum::<f64>(), 11.0);
        assert_eq!(param_mask(PrimitiveId::Atomic).iter().sum::<f64>(), 7.0);
        // gripper dim reaches the call even when masked from the critic
        let theta = [0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.5, 100.0, 100.0, 100.0, 10.0];
        let call = call_from_theta(PrimitiveId::GripperToggle, &theta);
        assert!(call.gripper);
    }

    #[test]
    fn greedy_is_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let policy = PolicyNet::new(5, &[8, 8], &mut rng);
        let obs = [0.2, 0.1, -0.4, 0.9, 0.0];
        assert_eq!(policy.greedy(&obs), policy.greedy(&obs));
    }
}
