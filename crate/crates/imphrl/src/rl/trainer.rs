//! Epoch-based training loop.
//!
//! One epoch is: exploration until the atomic-action budget is spent,
//! gradient steps from the replay buffer, then a greedy evaluation on a
//! fixed per-epoch seed set. All randomness flows from one ChaCha stream, so
//! two runs with the same config produce byte-identical metrics logs.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::policy::{call_from_theta, theta_bounds, ACTION_DIM};
use super::replay::{ReplayBuffer, Transition};
use super::sac::{NoiseBlock, SacAgent};
use crate::config::RunConfig;
use crate::envs::TaskEnv;
use crate::metrics::{compositionality, force_stats, normalize_learning_curve, ForceStats};
use crate::primitives::{PrimitiveId, NUM_PRIMITIVES};

/// Everything logged about one epoch; formatted into metrics.csv.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub eval_return: f64,
    pub success_rate: f64,
    /// Mean peak force over successful evaluation episodes; absent when no
    /// episode succeeded.
    pub mean_max_force: Option<f64>,
    pub compositionality: f64,
    pub alpha_d: f64,
    pub alpha_c: f64,
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub entropy_d: f64,
    pub entropy_c: f64,
    /// Greedy primitive sequences of this evaluation.
    pub sequences: Vec<Vec<usize>>,
}

/// Outcome of one greedy evaluation episode.
#[derive(Clone, Debug)]
pub struct EvalEpisode {
    pub ret: f64,
    pub success: bool,
    pub max_force: f64,
    pub sequence: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trainer {
    pub cfg: RunConfig,
    pub agent: SacAgent,
    pub buffer: ReplayBuffer,
    pub epoch: usize,
    pub rng: ChaCha20Rng,
    pub history: Vec<EpochRecord>,
    /// Consecutive evaluations at or above the early-stop threshold.
    streak: usize,
    pub stopped_early: bool,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let obs_dim = crate::envs::obs_dim(cfg.task);
        let agent = SacAgent::new(obs_dim, cfg.train.sac_hyper(), &mut rng);
        let buffer = ReplayBuffer::new(cfg.train.buffer_capacity);
        Self {
            cfg,
            agent,
            buffer,
            epoch: 0,
            rng,
            history: Vec::new(),
            streak: 0,
            stopped_early: false,
        }
    }

    fn make_env(&self) -> TaskEnv {
        TaskEnv::new(self.cfg.task_spec(), self.cfg.env_config())
    }

    fn uniform_action(rng: &mut ChaCha20Rng) -> (usize, [f64; ACTION_DIM]) {
        let p = rng.gen_range(0..NUM_PRIMITIVES);
        let bounds = theta_bounds();
        let mut theta = [0.0; ACTION_DIM];
        for (i, v) in theta.iter_mut().enumerate() {
            *v = rng.gen_range(bounds[i][0]..bounds[i][1]);
        }
        (p, theta)
    }

    /// Exploration prior concentrated on the affordance keypoints: the
    /// position dimensions are a keypoint plus Gaussian jitter, everything
    /// else uniform. Uniform positions over the whole workspace essentially
    /// never land inside a grasp radius, so the guided fraction is what makes
    /// the first grasp and the first lift happen at all.
    fn guided_action(
        env: &TaskEnv,
        rng: &mut ChaCha20Rng,
    ) -> (usize, [f64; ACTION_DIM]) {
        let (p, mut theta) = Self::uniform_action(rng);
        let keypoints = env.affordance_ctx().keypoints;
        if !keypoints.is_empty() {
            let kp = keypoints[rng.gen_range(0..keypoints.len())];
            let bounds = theta_bounds();
            // surface tasks need pressing strokes, not point visits: a push
            // whose setpoint sits below the surface with a stiffness chosen
            // for an in-band normal force, swept laterally through the
            // keypoint
            if env.state.stains.is_some() && rng.gen::<f64>() < 0.7 {
                let force: f64 = rng.gen_range(2.0..10.0);
                let kz: f64 = rng.gen_range(100.0..500.0);
                let depth = (force / kz).clamp(0.002, 0.04);
                let ang = rng.gen_range(0.0..std::f64::consts::TAU);
                let len = rng.gen_range(0.15..0.25);
                let (dx, dy) = (len * ang.cos(), len * ang.sin());
                let sx = kp.x + 0.03 * super::policy::standard_normal(rng) - 0.5 * dx;
                let sy = kp.y + 0.03 * super::policy::standard_normal(rng) - 0.5 * dy;
                theta[0] = sx.clamp(bounds[0][0], bounds[0][1]);
                theta[1] = sy.clamp(bounds[1][0], bounds[1][1]);
                theta[2] = (env.state.world.table_height - depth)
                    .clamp(bounds[2][0], bounds[2][1]);
                theta[4] = dx.clamp(bounds[4][0], bounds[4][1]);
                theta[5] = dy.clamp(bounds[5][0], bounds[5][1]);
                theta[6] = 0.0;
                theta[8] = rng.gen_range(200.0..500.0);
                theta[9] = rng.gen_range(200.0..500.0);
                theta[10] = kz;
                return (PrimitiveId::Push.index(), theta);
            }
            let target = [kp.x, kp.y, kp.z];
            for i in 0..3 {
                let v = target[i] + 0.02 * super::policy::standard_normal(rng);
                theta[i] = v.clamp(bounds[i][0], bounds[i][1]);
            }
            // sometimes aim well above the keypoint; with an object in hand
            // this is what produces the first lift
            if rng.gen::<f64>() < 0.3 {
                let v = target[2] + rng.gen_range(0.05..0.40);
                theta[2] = v.clamp(bounds[2][0], bounds[2][1]);
            }
        }
        (p, theta)
    }

    /// Collect experience until the epoch's atomic budget is spent; episodes
    /// run to completion so terminal flags stay meaningful.
    fn explore(&mut self, env: &mut TaskEnv) {
        let budget = self.cfg.train.explore_atomic_per_epoch;
        let warmup = self.epoch < self.cfg.train.warmup_epochs;
        let mut spent = 0usize;
        while spent < budget {
            let seed = self.rng.gen::<u64>();
            let mut obs = env.reset(seed);
            while !env.done {
                let guided = self.rng.gen::<f64>() < self.cfg.train.explore_guided_frac;
                let (p, theta) = if guided {
                    Self::guided_action(env, &mut self.rng)
                } else if warmup {
                    Self::uniform_action(&mut self.rng)
                } else {
                    let floor = self.cfg.train.explore_primitive_floor;
                    let a = self
                        .agent
                        .policy
                        .sample_floored(&obs.0, floor, &mut self.rng);
                    (a.primitive, a.theta)
                };
                let call = call_from_theta(PrimitiveId::from_index(p), &theta);
                let (next_obs, info, done) = env.step(&call);
                spent += info.atomic_cost;
                self.buffer.push(Transition {
                    obs: obs.0.clone(),
                    primitive: p,
                    theta,
                    reward: info.shaped_reward,
                    next_obs: next_obs.0.clone(),
                    done,
                });
                obs = next_obs;
            }
        }
    }

    /// Gradient phase: twin-critic regression, actor step, temperature
    /// update, Polyak tracking.
    fn train_steps(&mut self) -> (f64, f64, f64, f64) {
        let batch_size = self.cfg.train.batch_size;
        if self.buffer.len() < batch_size {
            return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        }
        let mut critic_loss = 0.0;
        let mut policy_loss = 0.0;
        let mut ent_d = 0.0;
        let mut ent_c = 0.0;
        let steps = self.cfg.train.grad_steps_per_epoch;
        for _ in 0..steps {
            let idx = self.buffer.sample_indices(batch_size, &mut self.rng);
            let batch: Vec<&Transition> = idx.iter().map(|i| self.buffer.get(*i)).collect();
            critic_loss += self.agent.critic_update(&batch, &mut self.rng);

            let obs = Array2::from_shape_fn((batch_size, self.agent.obs_dim), |(r, c)| {
                self.buffer.get(idx[r]).obs[c]
            });
            let noise: Vec<NoiseBlock> = (0..batch_size)
                .map(|_| SacAgent::sample_noise(&mut self.rng))
                .collect();
            let (pl, hd, hc) = self.agent.policy_update(&obs, &noise);
            policy_loss += pl;
            ent_d += hd;
            ent_c += hc;
            self.agent.polyak_update();
        }
        let n = steps as f64;
        (critic_loss / n, policy_loss / n, ent_d / n, ent_c / n)
    }

    /// Deterministic per-epoch evaluation seeds, shared across ablation arms
    /// with the same run seed.
    fn eval_seed(&self, episode: usize) -> u64 {
        self.cfg
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((self.epoch as u64) << 20)
            .wrapping_add(episode as u64)
    }

    pub fn eval_episode(&self, env: &mut TaskEnv, seed: u64) -> EvalEpisode {
        let mut obs = env.reset(seed);
        let mut ret = 0.0;
        let mut success = false;
        let mut max_force: f64 = 0.0;
        let mut sequence = Vec::new();
        while !env.done {
            let (p, theta) = self.agent.policy.greedy(&obs.0);
            let call = call_from_theta(PrimitiveId::from_index(p), &theta);
            let (next_obs, info, _) = env.step(&call);
            ret += info.shaped_reward;
            success |= info.success;
            max_force = max_force.max(info.max_force);
            sequence.push(p);
            obs = next_obs;
        }
        EvalEpisode {
            ret,
            success,
            max_force,
            sequence,
        }
    }

    fn evaluate(&self, env: &mut TaskEnv) -> (f64, f64, ForceStats, f64, Vec<Vec<usize>>) {
        let n = self.cfg.train.eval_episodes;
        let episodes: Vec<EvalEpisode> = (0..n)
            .map(|i| self.eval_episode(env, self.eval_seed(i)))
            .collect();
        let ret = episodes.iter().map(|e| e.ret).sum::<f64>() / n as f64;
        let success_rate = episodes.iter().filter(|e| e.success).count() as f64 / n as f64;
        let forces: Vec<(f64, bool)> = episodes.iter().map(|e| (e.max_force, e.success)).collect();
        let stats = force_stats(&forces);
        let seqs: Vec<Vec<usize>> = episodes.into_iter().map(|e| e.sequence).collect();
        let comp = compositionality(&seqs);
        (ret, success_rate, stats, comp, seqs)
    }

    pub fn run_epoch(&mut self) -> &EpochRecord {
        let mut env = self.make_env();
        if self.epoch >= self.cfg.train.entropy_tune_epochs {
            self.agent.alpha_frozen = true;
        }
        self.explore(&mut env);
        let (critic_loss, policy_loss, entropy_d, entropy_c) = self.train_steps();
        let (eval_return, success_rate, stats, comp, seqs) = self.evaluate(&mut env);
        let record = EpochRecord {
            epoch: self.epoch,
            eval_return,
            success_rate,
            mean_max_force: stats.mean(),
            compositionality: comp,
            alpha_d: self.agent.alpha_d(),
            alpha_c: self.agent.alpha_c(),
            critic_loss,
            policy_loss,
            entropy_d,
            entropy_c,
            sequences: seqs,
        };
        self.history.push(record);
        self.epoch += 1;
        if let Some(th) = self.cfg.train.early_stop_success {
            if success_rate >= th {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
            if self.streak >= self.cfg.train.early_stop_patience {
                self.stopped_early = true;
            }
        }
        self.history.last().unwrap()
    }

    /// Trains until the configured epoch count or early stop; calls
    /// `on_epoch` after each epoch for progress reporting.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochRecord)) {
        while self.epoch < self.cfg.train.epochs && !self.stopped_early {
            let record = self.run_epoch();
            on_epoch(record);
        }
    }

    /// Normalized learning curve over the evaluation returns so far.
    pub fn normalized_curve(&self) -> Vec<f64> {
        let spec = self.cfg.task_spec();
        let returns: Vec<f64> = self.history.iter().map(|r| r.eval_return).collect();
        normalize_learning_curve(&returns, 20, spec.return_lo, spec.return_hi)
    }

    /// Deterministic metrics log; identical configs yield identical bytes.
    pub fn metrics_csv(&self) -> String {
        let curve = self.normalized_curve();
        let mut out = String::from(
            "epoch,eval_return,eval_return_norm,success_rate,mean_max_force,compositionality,alpha_d,alpha_c,critic_loss,policy_loss,entropy_d,entropy_c\n",
        );
        for (r, norm) in self.history.iter().zip(&curve) {
            let force = r
                .mean_max_force
                .map(|f| format!("{f:.9}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:.9},{:.9},{:.6},{},{:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                r.epoch,
                r.eval_return,
                norm,
                r.success_rate,
                force,
                r.compositionality,
                r.alpha_d,
                r.alpha_c,
                r.critic_loss,
                r.policy_loss,
                r.entropy_d,
                r.entropy_c,
            );
        }
        out
    }
}
