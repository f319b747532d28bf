//! Desk-scale task environments: Lift, Door, Wipe, Cleanup.
//!
//! Each environment owns a [`SimState`], executes primitive calls through the
//! closed-loop executor, applies its task rules per tick (stain clearing,
//! door kinematics), and produces observations, dense rewards, and the
//! success predicates. Domain randomization varies table friction, table
//! height, object positions, and the initial end-effector position per
//! episode seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::affordance::{affordance_coupling, shaped_reward, AffordanceContext};
use crate::controller::{AdaptiveParams, ControlMode};
use crate::primitives::{
    atomic_cost, execute_primitive, PrimitiveCall, PrimitiveConfig, PrimitiveOutcome, TraceRow,
};
use crate::sim::{ObjectState, PhysicsConfig, SimState, StainGrid, Vec3, WorldParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    Lift,
    Door,
    Wipe,
    Cleanup,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Lift, TaskKind::Door, TaskKind::Wipe, TaskKind::Cleanup];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Lift => "lift",
            TaskKind::Door => "door",
            TaskKind::Wipe => "wipe",
            TaskKind::Cleanup => "cleanup",
        }
    }
}

/// Domain randomization ranges.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationRanges {
    pub table_friction: [f64; 2],
    pub table_height: [f64; 2],
    /// Uniform xy jitter applied to object home positions, m.
    pub object_jitter: f64,
    /// Uniform xy jitter applied to the end-effector start, m.
    pub ee_jitter: f64,
    pub ee_start_z: [f64; 2],
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        Self {
            table_friction: [0.45, 0.65],
            table_height: [-0.01, 0.01],
            object_jitter: 0.03,
            ee_jitter: 0.03,
            ee_start_z: [0.12, 0.22],
        }
    }
}

/// Per-task success thresholds.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SuccessThresholds {
    /// Lift: object height above the table, m.
    pub lift_height: f64,
    /// Door: handle travel, m.
    pub door_disp: f64,
    /// Door: hinge angle, degrees.
    pub door_angle_deg: f64,
    /// Cleanup: distance of the push target from the table corner, m.
    pub cleanup_corner_dist: f64,
    /// Wipe: cleared fraction of the initial stain.
    pub wipe_frac: f64,
}

impl Default for SuccessThresholds {
    fn default() -> Self {
        Self {
            lift_height: 0.20,
            door_disp: 0.15,
            door_angle_deg: 30.0,
            cleanup_corner_dist: 0.10,
            wipe_frac: 0.75,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct WipeParams {
    /// Stained fraction of the stain region at reset.
    pub coverage: f64,
    /// Stain line width, m.
    pub line_width: f64,
    /// Half extent of the square stain region, m.
    pub region_half: f64,
    pub cell_size: f64,
    /// Wiping clears cells only when the normal force sits in this band, N.
    pub force_lo: f64,
    pub force_hi: f64,
    /// Cells within this radius of the end-effector are cleared, m.
    pub wipe_radius: f64,
    /// Reward penalty per Newton above the force band, per decision.
    pub over_force_penalty: f64,
}

impl Default for WipeParams {
    fn default() -> Self {
        Self {
            coverage: 0.4,
            line_width: 0.04,
            region_half: 0.10,
            cell_size: 0.01,
            force_lo: 1.0,
            force_hi: 20.0,
            wipe_radius: 0.05,
            over_force_penalty: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DoorParams {
    /// Handle home offset from the door frame center, m.
    pub handle_offset: [f64; 3],
    /// Hinge axis offset from the frame center, m.
    pub hinge_offset: [f64; 3],
    /// Force thresholds below which the mechanism does not move, N.
    pub yield_press: f64,
    pub yield_rotate: f64,
    /// Velocity per Newton of excess force.
    pub press_rate: f64,
    pub rotate_rate: f64,
    pub max_disp: f64,
    pub max_angle_deg: f64,
}

impl Default for DoorParams {
    fn default() -> Self {
        Self {
            handle_offset: [-0.06, 0.0, 0.03],
            hinge_offset: [0.0, 0.12, 0.03],
            yield_press: 1.0,
            yield_rotate: 1.0,
            press_rate: 0.05,
            rotate_rate: 0.2,
            max_disp: 0.17,
            max_angle_deg: 75.0,
        }
    }
}

/// Full task description: kind, horizon, randomization, thresholds, and the
/// documented per-episode shaped-return bounds used for curve normalization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Episode budget in atomic actions: 150, except Wipe at 300.
    pub horizon_atomic: usize,
    pub randomization: RandomizationRanges,
    pub success: SuccessThresholds,
    pub wipe: WipeParams,
    pub door: DoorParams,
    /// Known shaped-return bounds per episode, for learning-curve
    /// normalization.
    pub return_lo: f64,
    pub return_hi: f64,
}

impl TaskSpec {
    pub fn for_kind(kind: TaskKind) -> Self {
        let horizon_atomic = match kind {
            TaskKind::Wipe => 300,
            _ => 150,
        };
        // per-decision shaped reward is bounded by scale * 2 + lambda * 1
        // and a decision costs at least one atomic action
        let return_hi = 20.0 * horizon_atomic as f64;
        Self {
            kind,
            horizon_atomic,
            randomization: RandomizationRanges::default(),
            success: SuccessThresholds::default(),
            wipe: WipeParams::default(),
            door: DoorParams::default(),
            return_lo: 0.0,
            return_hi,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let r = &self.randomization;
        if r.table_friction[0] >= r.table_friction[1]
            || r.table_height[0] >= r.table_height[1]
            || r.ee_start_z[0] >= r.ee_start_z[1]
        {
            return Err("randomization ranges must be non-degenerate".into());
        }
        if self.horizon_atomic == 0 {
            return Err("horizon must be positive".into());
        }
        Ok(())
    }
}

/// Flat observation vector; layout is fixed per task kind (`obs_dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct Observation(pub Vec<f64>);

/// Observation length for a task. Standard tasks see the end-effector block
/// (pos 3, yaw 1, vel 3, yaw rate 1, gripper 1, holding 1) plus pose +
/// distance per object; Wipe sees the pose block plus wipe progress features.
pub fn obs_dim(kind: TaskKind) -> usize {
    match kind {
        TaskKind::Lift => 10 + 5,
        TaskKind::Door => 10 + 2 * 5,
        TaskKind::Wipe => 4 + 5,
        TaskKind::Cleanup => 10 + 3 * 5,
    }
}

/// Everything the trainer needs to know about one primitive decision.
#[derive(Clone, Debug)]
pub struct StepInfo {
    pub env_reward: f64,
    pub shaped_reward: f64,
    pub affordance: f64,
    pub atomic_cost: usize,
    pub ticks: usize,
    pub max_force: f64,
    pub energy: f64,
    pub success: bool,
    pub diverged: bool,
}

/// Values drawn at reset, logged for reproducibility.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResetLog {
    pub seed: u64,
    pub table_friction: f64,
    pub table_height: f64,
    pub ee_start: [f64; 3],
    pub object_xy: Vec<[f64; 2]>,
}

/// Environment-side configuration shared across tasks.
#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub phys: PhysicsConfig,
    pub prim: PrimitiveConfig,
    pub adaptive: AdaptiveParams,
    pub mode: ControlMode,
    /// Base affordance constants; keypoints are refreshed per step.
    pub affordance: AffordanceContext,
    /// When false the coupling uses the position affordance alone
    /// (ablation cases 1 and 3).
    pub stiffness_affordance: bool,
    pub trace: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            phys: PhysicsConfig::default(),
            prim: PrimitiveConfig::default(),
            adaptive: AdaptiveParams::default(),
            mode: ControlMode::Adaptive,
            affordance: AffordanceContext::default(),
            stiffness_affordance: true,
            trace: false,
        }
    }
}

pub struct TaskEnv {
    pub spec: TaskSpec,
    pub cfg: EnvConfig,
    pub state: SimState,
    pub budget_used: usize,
    pub done: bool,
    pub last_reset: Option<ResetLog>,
    /// Per-tick telemetry of the most recent primitive, kept only when
    /// tracing is enabled.
    pub last_trace: Option<Vec<TraceRow>>,
    /// Door bookkeeping captured at reset.
    door_home: Vec3,
    door_hinge: Vec3,
    door_arm: Vec3,
}

impl TaskEnv {
    pub fn new(spec: TaskSpec, cfg: EnvConfig) -> Self {
        let mut env = Self {
            spec,
            cfg,
            state: SimState::at_rest(Vec3::new(0.0, 0.0, 0.2), WorldParams::default()),
            budget_used: 0,
            done: false,
            last_reset: None,
            last_trace: None,
            door_home: Vec3::zeros(),
            door_hinge: Vec3::zeros(),
            door_arm: Vec3::zeros(),
        };
        env.reset(0);
        env
    }

    /// Deterministic reset from an episode seed. All randomized quantities
    /// are recorded in `last_reset`.
    pub fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let r = self.spec.randomization.clone();
        let friction = rng.gen_range(r.table_friction[0]..r.table_friction[1]);
        let table = rng.gen_range(r.table_height[0]..r.table_height[1]);
        let world = WorldParams {
            table_height: table,
            table_friction: friction,
        };

        let jitter = |rng: &mut ChaCha20Rng, j: f64| rng.gen_range(-j..j);
        let ee_start = Vec3::new(
            -0.15 + jitter(&mut rng, r.ee_jitter),
            jitter(&mut rng, r.ee_jitter),
            table + rng.gen_range(r.ee_start_z[0]..r.ee_start_z[1]),
        );

        let mut state = SimState::at_rest(ee_start, world);
        let mut object_xy = Vec::new();
        match self.spec.kind {
            TaskKind::Lift => {
                let x = 0.05 + jitter(&mut rng, r.object_jitter);
                let y = jitter(&mut rng, r.object_jitter);
                object_xy.push([x, y]);
                state.objects.push(ObjectState {
                    id: 0,
                    pos: Vec3::new(x, y, table + 0.025),
                    yaw: rng.gen_range(-0.3..0.3),
                    half_extents: Vec3::new(0.025, 0.025, 0.025),
                    keypoint_local: Vec3::new(0.0, 0.0, 0.02),
                    fixed: false,
                });
            }
            TaskKind::Door => {
                let fx = 0.26 + jitter(&mut rng, 0.03);
                let fy = jitter(&mut rng, 0.05);
                object_xy.push([fx, fy]);
                // tall enough that the handle stays clear of the table at full travel
                let frame_pos = Vec3::new(fx, fy, table + 0.18);
                let d = &self.spec.door;
                self.door_home = frame_pos + Vec3::from(d.handle_offset);
                self.door_hinge = frame_pos + Vec3::from(d.hinge_offset);
                self.door_arm = self.door_home - self.door_hinge;
                // handle first so task rules can address it as object 0
                state.objects.push(ObjectState {
                    id: 0,
                    pos: self.door_home,
                    yaw: 0.0,
                    half_extents: Vec3::new(0.012, 0.05, 0.012),
                    keypoint_local: Vec3::zeros(),
                    fixed: true,
                });
                state.objects.push(ObjectState {
                    id: 1,
                    pos: frame_pos,
                    yaw: 0.0,
                    half_extents: Vec3::new(0.01, 0.12, 0.12),
                    keypoint_local: Vec3::zeros(),
                    fixed: true,
                });
            }
            TaskKind::Wipe => {
                let w = &self.spec.wipe;
                let cx = jitter(&mut rng, 0.03);
                let cy = jitter(&mut rng, 0.03);
                object_xy.push([cx, cy]);
                let n = (2.0 * w.region_half / w.cell_size).round() as usize;
                let stripe = (w.line_width / w.cell_size).round().max(1.0) as usize;
                let period = (stripe as f64 / w.coverage).round().max(stripe as f64 + 1.0) as usize;
                let phase = rng.gen_range(0..period);
                let along_x: bool = rng.gen();
                let mut cells = vec![false; n * n];
                for iy in 0..n {
                    for ix in 0..n {
                        let line_idx = if along_x { iy } else { ix };
                        if (line_idx + phase) % period < stripe {
                            cells[iy * n + ix] = true;
                        }
                    }
                }
                state.stains = Some(StainGrid::new(
                    n,
                    n,
                    w.cell_size,
                    [cx - w.region_half, cy - w.region_half],
                    cells,
                ));
            }
            TaskKind::Cleanup => {
                // push target (jello proxy)
                let jx = 0.05 + jitter(&mut rng, r.object_jitter);
                let jy = -0.05 + jitter(&mut rng, r.object_jitter);
                object_xy.push([jx, jy]);
                state.objects.push(ObjectState {
                    id: 0,
                    pos: Vec3::new(jx, jy, table + 0.015),
                    yaw: rng.gen_range(-0.3..0.3),
                    half_extents: Vec3::new(0.035, 0.025, 0.015),
                    keypoint_local: Vec3::new(0.0, 0.0, 0.012),
                    fixed: false,
                });
                // grasp target (can proxy)
                let sx = 0.0 + jitter(&mut rng, r.object_jitter);
                let sy = 0.12 + jitter(&mut rng, r.object_jitter);
                object_xy.push([sx, sy]);
                state.objects.push(ObjectState {
                    id: 1,
                    pos: Vec3::new(sx, sy, table + 0.04),
                    yaw: 0.0,
                    half_extents: Vec3::new(0.02, 0.02, 0.04),
                    keypoint_local: Vec3::new(0.0, 0.0, 0.035),
                    fixed: false,
                });
                // bin region marker (thin pad)
                state.objects.push(ObjectState {
                    id: 2,
                    pos: Vec3::new(0.26, 0.26, table + 0.005),
                    yaw: 0.0,
                    half_extents: Vec3::new(0.05, 0.05, 0.005),
                    keypoint_local: Vec3::new(0.0, 0.0, 0.005),
                    fixed: true,
                });
            }
        }

        self.last_reset = Some(ResetLog {
            seed,
            table_friction: friction,
            table_height: table,
            ee_start: [ee_start.x, ee_start.y, ee_start.z],
            object_xy,
        });
        self.state = state;
        self.budget_used = 0;
        self.done = false;
        self.observe()
    }

    /// Current affordance context: base constants plus this step's keypoints.
    pub fn affordance_ctx(&self) -> AffordanceContext {
        let mut ctx = self.cfg.affordance.clone();
        if !self.cfg.stiffness_affordance {
            // position-only coupling: saturate the stiffness factor
            ctx.k_floor = 1.0;
        }
        ctx.keypoints = self.keypoints();
        ctx
    }

    fn keypoints(&self) -> Vec<Vec3> {
        match self.spec.kind {
            TaskKind::Lift => vec![self.state.objects[0].keypoint_world()],
            TaskKind::Door => vec![self.state.objects[0].keypoint_world()],
            TaskKind::Wipe => {
                let w = &self.spec.wipe;
                let table = self.state.world.table_height;
                match self.state.stains.as_ref().and_then(|s| s.centroid()) {
                    Some(([cx, cy], _)) => vec![Vec3::new(cx, cy, table)],
                    // stains gone (or about to be): fall back to region center
                    None => {
                        let log = self.last_reset.as_ref();
                        let (cx, cy) = log
                            .and_then(|l| l.object_xy.first())
                            .map(|c| (c[0], c[1]))
                            .unwrap_or((0.0, 0.0));
                        let _ = w;
                        vec![Vec3::new(cx, cy, table)]
                    }
                }
            }
            TaskKind::Cleanup => vec![
                self.state.objects[0].keypoint_world(),
                self.state.objects[1].keypoint_world(),
                self.state.objects[2].keypoint_world(),
            ],
        }
    }

    pub fn observe(&self) -> Observation {
        let s = &self.state;
        let mut v = Vec::with_capacity(obs_dim(self.spec.kind));
        if self.spec.kind == TaskKind::Wipe {
            v.extend_from_slice(&[s.ee_pos.x, s.ee_pos.y, s.ee_pos.z, s.ee_yaw]);
            let (frac, cx, cy, radius) = match &s.stains {
                Some(g) => match g.centroid() {
                    Some(([cx, cy], r)) => (g.fraction_wiped(), cx, cy, r),
                    None => (1.0, s.ee_pos.x, s.ee_pos.y, 0.0),
                },
                None => (1.0, 0.0, 0.0, 0.0),
            };
            let d = ((s.ee_pos.x - cx).powi(2) + (s.ee_pos.y - cy).powi(2)).sqrt();
            v.extend_from_slice(&[frac, cx, cy, radius, d]);
        } else {
            v.extend_from_slice(&[
                s.ee_pos.x,
                s.ee_pos.y,
                s.ee_pos.z,
                s.ee_yaw,
                s.ee_vel.x,
                s.ee_vel.y,
                s.ee_vel.z,
                s.ee_yaw_rate,
                if s.gripper_closed { 1.0 } else { 0.0 },
                if s.held_object.is_some() { 1.0 } else { 0.0 },
            ]);
            for obj in &s.objects {
                let d = (obj.pos - s.ee_pos).norm();
                v.extend_from_slice(&[obj.pos.x, obj.pos.y, obj.pos.z, obj.yaw, d]);
            }
        }
        debug_assert_eq!(v.len(), obs_dim(self.spec.kind));
        Observation(v)
    }

    /// Pure success predicate over the current state.
    pub fn check_success(&self) -> bool {
        check_success(&self.state, &self.spec)
    }

    /// Executes one primitive decision: affordance scoring, closed-loop
    /// execution with the task's per-tick rules, dense reward, and budget
    /// accounting. The primitive that crosses the budget completes.
    pub fn step(&mut self, call: &PrimitiveCall) -> (Observation, StepInfo, bool) {
        assert!(!self.done, "step() after episode end");
        let ctx = self.affordance_ctx();
        let affordance = affordance_coupling(call, &ctx).unwrap_or(0.0);

        let outcome = self.execute(call);
        self.last_trace = outcome.trace.clone();
        let cost = atomic_cost(&outcome, self.cfg.prim.ticks_per_atomic);
        self.budget_used += cost;
        self.state = outcome.terminal_state.clone();

        let success = self.check_success();
        let env_reward = self.env_reward(&outcome, success);
        let shaped = shaped_reward(env_reward, call, &ctx).unwrap_or(ctx.reward_scale * env_reward);

        // success is non-terminal: the episode runs out its budget and the
        // success state keeps paying, so finishing dominates loitering near
        // keypoints for the shaping bonus
        self.done = outcome.diverged || self.budget_used >= self.spec.horizon_atomic;
        let info = StepInfo {
            env_reward,
            shaped_reward: shaped,
            affordance,
            atomic_cost: cost,
            ticks: outcome.ticks_used,
            max_force: outcome.max_force,
            energy: outcome.energy,
            success,
            diverged: outcome.diverged,
        };
        (self.observe(), info, self.done)
    }

    fn execute(&mut self, call: &PrimitiveCall) -> PrimitiveOutcome {
        let spec = self.spec.clone();
        let (door_home, door_hinge, door_arm) = (self.door_home, self.door_hinge, self.door_arm);
        let phys = self.cfg.phys.clone();
        let dt = phys.dt;
        execute_primitive(
            &self.state,
            call,
            &self.cfg.adaptive,
            self.cfg.mode,
            &phys,
            &self.cfg.prim,
            self.cfg.trace,
            |state, tel| match spec.kind {
                TaskKind::Wipe => {
                    let w = &spec.wipe;
                    let normal = tel.f_contact.z;
                    let on_table = state.ee_pos.z <= state.world.table_height + 0.002;
                    if on_table && normal >= w.force_lo && normal <= w.force_hi {
                        if let Some(grid) = state.stains.as_mut() {
                            grid.wipe_at([state.ee_pos.x, state.ee_pos.y], w.wipe_radius);
                        }
                    }
                }
                TaskKind::Door => {
                    let d = &spec.door;
                    let f = tel.obj_forces.first().copied().unwrap_or_else(Vec3::zeros);
                    let handle = &mut state.objects[0];
                    let disp = door_home.z - handle.pos.z;
                    // press phase: downward force drives the handle down
                    if -f.z > d.yield_press && disp < d.max_disp {
                        let new_disp =
                            (disp + d.press_rate * (-f.z - d.yield_press) * dt).min(d.max_disp);
                        handle.pos.z = door_home.z - new_disp;
                    }
                    // hinge phase: once unlatched, tangential pushes open the door
                    let disp = door_home.z - handle.pos.z;
                    if disp >= spec.success.door_disp {
                        let arm = Vec3::new(
                            handle.pos.x - door_hinge.x,
                            handle.pos.y - door_hinge.y,
                            0.0,
                        );
                        if arm.norm() > 1e-9 {
                            let t = Vec3::new(-arm.y, arm.x, 0.0) / arm.norm();
                            let drive = f.x * t.x + f.y * t.y;
                            let max_angle = d.max_angle_deg.to_radians();
                            if drive.abs() > d.yield_rotate && handle.yaw.abs() < max_angle {
                                let dth = d.rotate_rate * (drive.abs() - d.yield_rotate) * dt
                                    * drive.signum();
                                let theta = (handle.yaw + dth).clamp(-max_angle, max_angle);
                                handle.yaw = theta;
                                let (s, c) = theta.sin_cos();
                                handle.pos.x = door_hinge.x + c * door_arm.x - s * door_arm.y;
                                handle.pos.y = door_hinge.y + s * door_arm.x + c * door_arm.y;
                            }
                        }
                    }
                }
                _ => {}
            },
        )
    }

    /// Dense, staged task reward from the post-execution state. Per-decision
    /// range is [-1, 2] for every task (documented bound).
    fn env_reward(&self, outcome: &PrimitiveOutcome, success: bool) -> f64 {
        let s = &self.state;
        let table = s.world.table_height;
        if success {
            let penalty = if self.spec.kind == TaskKind::Wipe {
                self.wipe_force_penalty(outcome)
            } else {
                0.0
            };
            return 2.0 - penalty;
        }
        match self.spec.kind {
            TaskKind::Lift => {
                let key = s.objects[0].keypoint_world();
                let d = (key - s.ee_pos).norm();
                if s.held_object == Some(0) {
                    let height = (s.objects[0].pos.z - table - 0.025).max(0.0);
                    0.5 + 0.5 * (height / self.spec.success.lift_height).min(1.0)
                } else {
                    0.1 * (1.0 - (10.0 * d).tanh())
                }
            }
            TaskKind::Door => {
                let handle = &s.objects[0];
                let d = (handle.keypoint_world() - s.ee_pos).norm();
                let disp = (self.door_home.z - handle.pos.z).max(0.0);
                let angle = handle.yaw.abs().to_degrees();
                0.1 * (1.0 - (10.0 * d).tanh())
                    + 0.45 * (disp / self.spec.success.door_disp).min(1.0)
                    + 0.45 * (angle / self.spec.success.door_angle_deg).min(1.0)
            }
            TaskKind::Wipe => {
                let (frac, dist) = match &s.stains {
                    Some(g) => {
                        let frac = g.fraction_wiped();
                        let dist = g
                            .centroid()
                            .map(|([cx, cy], _)| {
                                ((s.ee_pos.x - cx).powi(2) + (s.ee_pos.y - cy).powi(2)).sqrt()
                            })
                            .unwrap_or(0.0);
                        (frac, dist)
                    }
                    None => (1.0, 0.0),
                };
                0.1 * (1.0 - (10.0 * dist).tanh()) + 0.9 * frac - self.wipe_force_penalty(outcome)
            }
            TaskKind::Cleanup => {
                let jello = &s.objects[0];
                let spam = &s.objects[1];
                let d_near = (jello.keypoint_world() - s.ee_pos)
                    .norm()
                    .min((spam.keypoint_world() - s.ee_pos).norm());
                let corner = self.cleanup_corner();
                let d_corner =
                    ((jello.pos.x - corner[0]).powi(2) + (jello.pos.y - corner[1]).powi(2)).sqrt();
                let spam_in_bin = self.spam_in_bin();
                0.1 * (1.0 - (10.0 * d_near).tanh())
                    + 0.45 * (1.0 - (d_corner / 0.4).min(1.0))
                    + if s.held_object == Some(1) { 0.15 } else { 0.0 }
                    + if spam_in_bin { 0.45 } else { 0.0 }
            }
        }
    }

    fn wipe_force_penalty(&self, outcome: &PrimitiveOutcome) -> f64 {
        let w = &self.spec.wipe;
        (w.over_force_penalty * (outcome.max_force - w.force_hi).max(0.0)).min(1.0)
    }

    fn cleanup_corner(&self) -> [f64; 2] {
        [0.35, -0.35]
    }

    fn spam_in_bin(&self) -> bool {
        let spam = &self.state.objects[1];
        let bin = &self.state.objects[2];
        self.state.held_object != Some(1)
            && (spam.pos.x - bin.pos.x).abs() <= bin.half_extents.x
            && (spam.pos.y - bin.pos.y).abs() <= bin.half_extents.y
    }
}

/// Success predicates of the four tasks as pure functions of the state.
pub fn check_success(state: &SimState, spec: &TaskSpec) -> bool {
    let table = state.world.table_height;
    match spec.kind {
        TaskKind::Lift => state.objects[0].pos.z - table >= spec.success.lift_height,
        TaskKind::Door => {
            let frame = &state.objects[1];
            let home_z = frame.pos.z + spec.door.handle_offset[2];
            let disp = home_z - state.objects[0].pos.z;
            let angle = state.objects[0].yaw.abs().to_degrees();
            disp >= spec.success.door_disp && angle >= spec.success.door_angle_deg
        }
        TaskKind::Wipe => state
            .stains
            .as_ref()
            .map(|g| g.fraction_wiped() >= spec.success.wipe_frac)
            .unwrap_or(false),
        TaskKind::Cleanup => {
            let jello = &state.objects[0];
            let spam = &state.objects[1];
            let bin = &state.objects[2];
            let corner = [0.35, -0.35];
            let d_corner =
                ((jello.pos.x - corner[0]).powi(2) + (jello.pos.y - corner[1]).powi(2)).sqrt();
            let in_bin = state.held_object != Some(1)
                && (spam.pos.x - bin.pos.x).abs() <= bin.half_extents.x
                && (spam.pos.y - bin.pos.y).abs() <= bin.half_extents.y;
            d_corner <= spec.success.cleanup_corner_dist && in_bin
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::PrimitiveId;

    fn env(kind: TaskKind) -> TaskEnv {
        TaskEnv::new(TaskSpec::for_kind(kind), EnvConfig::default())
    }

    fn call(id: PrimitiveId, pos: Vec3) -> PrimitiveCall {
        PrimitiveCall {
            id,
            pos,
            yaw: 0.0,
            delta: Vec3::zeros(),
            gripper: false,
            stiffness: [300.0, 300.0, 300.0, 20.0],
        }
    }

    #[test]
    fn reset_is_deterministic() {
        for kind in TaskKind::ALL {
            let mut e = env(kind);
            let a = e.reset(42);
            let sa = e.state.clone();
            let b = e.reset(42);
            assert_eq!(a, b);
            assert_eq!(sa.ee_pos, e.state.ee_pos);
            assert_eq!(sa.world.table_friction, e.state.world.table_friction);
        }
    }

    #[test]
    fn reset_positions_cover_range_uniformly() {
        // KS test of the lift cube x position against U(0.01, 0.09);
        // D_crit at alpha=0.01 for n=1000 is 1.628/sqrt(n).
        let mut e = env(TaskKind::Lift);
        let mut xs: Vec<f64> = (0..1000)
            .map(|seed| {
                e.reset(seed);
                e.last_reset.as_ref().unwrap().object_xy[0][0]
            })
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (lo, hi) = (0.05 - 0.03, 0.05 + 0.03);
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            d = d.max((cdf - i as f64 / n).abs());
            d = d.max(((i + 1) as f64 / n - cdf).abs());
        }
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn wipe_reset_coverage_matches_spec() {
        let mut e = env(TaskKind::Wipe);
        e.reset(7);
        let grid = e.state.stains.as_ref().unwrap();
        let frac = grid.initial_count as f64 / (grid.nx * grid.ny) as f64;
        assert!((frac - 0.4).abs() < 0.02, "coverage {frac}");
        // stripes are 4 cells = 4 cm wide
        assert_eq!(grid.cell_size, 0.01);
    }

    #[test]
    fn observation_layout_is_fixed_and_finite() {
        for kind in TaskKind::ALL {
            let mut e = env(kind);
            for seed in 0..5 {
                let obs = e.reset(seed);
                assert_eq!(obs.0.len(), obs_dim(kind));
                assert!(obs.0.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn lift_success_by_scripted_sequence() {
        let mut e = env(TaskKind::Lift);
        e.reset(3);
        let key = e.state.objects[0].keypoint_world();
        let (_, info, done) = e.step(&PrimitiveCall {
            id: PrimitiveId::Grasp,
            pos: key,
            yaw: e.state.objects[0].yaw,
            delta: Vec3::zeros(),
            gripper: false,
            stiffness: [400.0, 400.0, 400.0, 20.0],
        });
        assert!(!done, "grasp ended episode: {info:?}");
        assert_eq!(e.state.held_object, Some(0));
        let up = Vec3::new(key.x, key.y, e.state.world.table_height + 0.30);
        let (_, info, done) = e.step(&call(PrimitiveId::Reach, up));
        assert!(!done, "success must not terminate the episode");
        assert!(info.success, "lift failed: {info:?}");
        assert!(info.env_reward > 1.5);
    }

    #[test]
    fn wipe_monotone_and_successful_when_scripted() {
        let mut e = env(TaskKind::Wipe);
        e.reset(11);
        let table = e.state.world.table_height;
        let mut prev_frac = 0.0;
        // raster the stain region with pressed strokes; a setpoint 30 mm
        // below the table keeps the normal force inside the band even while
        // the adaptive law softens the vertical axis mid-stroke
        let half = e.spec.wipe.region_half;
        let [cx, cy] = e.last_reset.as_ref().unwrap().object_xy[0];
        let mut y = cy - half;
        let mut success = false;
        while y <= cy + half + 1e-9 && !e.done {
            let (_, info, _) = e.step(&PrimitiveCall {
                id: PrimitiveId::Push,
                pos: Vec3::new(cx - half, y, table - 0.03),
                yaw: 0.0,
                delta: Vec3::new(2.0 * half, 0.0, 0.0),
                gripper: false,
                stiffness: [500.0, 500.0, 500.0, 20.0],
            });
            let frac = e
                .state
                .stains
                .as_ref()
                .map(|g| g.fraction_wiped())
                .unwrap_or(1.0);
            assert!(frac >= prev_frac - 1e-12, "wiped fraction decreased");
            prev_frac = frac;
            success |= info.success;
            y += 0.05;
        }
        assert!(success, "scripted wipe did not finish; frac={prev_frac}");
    }

    #[test]
    fn door_success_by_scripted_sequence() {
        let mut e = env(TaskKind::Door);
        e.reset(5);
        let handle = e.state.objects[0].pos;
        // press the handle down from above
        let (_, _, done) = e.step(&call(
            PrimitiveId::Reach,
            handle + Vec3::new(0.0, 0.0, 0.05),
        ));
        assert!(!done);
        let mut pressed = false;
        for _ in 0..4 {
            let target = e.state.objects[0].pos + Vec3::new(0.0, 0.0, -0.08);
            let (_, _, done) = e.step(&call(PrimitiveId::Push, target));
            let disp = e.door_home.z - e.state.objects[0].pos.z;
            if disp >= e.spec.success.door_disp {
                pressed = true;
                break;
            }
            if done {
                break;
            }
        }
        assert!(pressed, "handle never unlatched");
        // swing: come in beside the handle and push along the hinge tangent
        // so the contact force is horizontal
        let mut success = false;
        for _ in 0..4 {
            if e.done {
                break;
            }
            let hp = e.state.objects[0].pos;
            let arm = Vec3::new(hp.x - e.door_hinge.x, hp.y - e.door_hinge.y, 0.0);
            let t = Vec3::new(-arm.y, arm.x, 0.0).normalize();
            let (_, _, done) = e.step(&call(PrimitiveId::Reach, hp - t * 0.07));
            if done {
                break;
            }
            let (_, info, _) = e.step(&PrimitiveCall {
                id: PrimitiveId::Push,
                pos: hp - t * 0.07,
                yaw: 0.0,
                delta: t * 0.17,
                gripper: false,
                stiffness: [400.0, 400.0, 400.0, 20.0],
            });
            success |= info.success;
        }
        assert!(
            success,
            "door did not open: disp={:.3} angle={:.1}",
            e.door_home.z - e.state.objects[0].pos.z,
            e.state.objects[0].yaw.abs().to_degrees()
        );
    }

    #[test]
    fn cleanup_success_by_scripted_sequence() {
        let mut e = env(TaskKind::Cleanup);
        e.reset(9);
        let table = e.state.world.table_height;
        // push the jello box toward the corner one axis at a time; diagonal
        // strokes slip around the box corner and waste budget. Approach each
        // push start from above so the travel leg cannot plow the box back.
        for _ in 0..8 {
            if e.done {
                break;
            }
            let j = e.state.objects[0].pos;
            let err = Vec3::new(0.35 - j.x, -0.35 - j.y, 0.0);
            if err.norm() <= e.spec.success.cleanup_corner_dist {
                break;
            }
            let axis = if err.x.abs() >= err.y.abs() {
                Vec3::new(err.x.signum(), 0.0, 0.0)
            } else {
                Vec3::new(0.0, err.y.signum(), 0.0)
            };
            let stroke = (err.x.abs().max(err.y.abs()) + 0.08).min(0.24);
            let start = j - axis * 0.07;
            // hop over the box only when the travel leg would plow through it
            if (e.state.ee_pos - j).dot(&axis) >= 0.0 {
                let (_, _, done) = e.step(&call(
                    PrimitiveId::Reach,
                    Vec3::new(start.x, start.y, table + 0.10),
                ));
                if done {
                    break;
                }
            }
            let (_, _, _) = e.step(&PrimitiveCall {
                id: PrimitiveId::Push,
                pos: Vec3::new(start.x, start.y, table + 0.015),
                yaw: 0.0,
                delta: axis * stroke,
                gripper: false,
                stiffness: [400.0, 400.0, 400.0, 20.0],
            });
        }
        let d_corner = ((e.state.objects[0].pos.x - 0.35).powi(2)
            + (e.state.objects[0].pos.y + 0.35).powi(2))
        .sqrt();
        assert!(
            d_corner <= e.spec.success.cleanup_corner_dist,
            "jello not at corner: {d_corner:.3}"
        );
        // stage above the can first; a cross-table grasp approach runs out
        // of budget before it converges
        let key = e.state.objects[1].keypoint_world();
        e.step(&call(
            PrimitiveId::Reach,
            Vec3::new(key.x, key.y, key.z + 0.08),
        ));
        e.step(&PrimitiveCall {
            id: PrimitiveId::Grasp,
            pos: key,
            yaw: 0.0,
            delta: Vec3::zeros(),
            gripper: false,
            stiffness: [400.0, 400.0, 400.0, 20.0],
        });
        assert_eq!(e.state.held_object, Some(1), "grasp failed");
        let bin = e.state.objects[2].pos;
        e.step(&call(
            PrimitiveId::Reach,
            Vec3::new(bin.x, bin.y, table + 0.15),
        ));
        let (_, info, _) = e.step(&PrimitiveCall {
            id: PrimitiveId::GripperToggle,
            pos: Vec3::zeros(),
            yaw: 0.0,
            delta: Vec3::zeros(),
            gripper: false,
            stiffness: [300.0, 300.0, 300.0, 20.0],
        });
        assert!(info.success, "cleanup failed: {info:?}");
    }

    #[test]
    fn budget_exhaustion_ends_episode() {
        let mut e = env(TaskKind::Lift);
        e.reset(1);
        let mut steps = 0;
        while !e.done {
            // shuttle far away so the episode cannot succeed
            let x = if steps % 2 == 0 { -0.3 } else { 0.3 };
            e.step(&call(PrimitiveId::Reach, Vec3::new(x, 0.2, 0.3)));
            steps += 1;
            assert!(steps < 500);
        }
        assert!(e.budget_used >= e.spec.horizon_atomic);
        // overshoot bounded by one primitive's worth of atomic units
        assert!(e.budget_used < e.spec.horizon_atomic + 64);
    }

    #[test]
    fn rewards_stay_in_documented_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2);
        for kind in TaskKind::ALL {
            let mut e = env(kind);
            e.reset(77);
            while !e.done {
                let id = PrimitiveId::from_index(rng.gen_range(0..5));
                let c = PrimitiveCall {
                    id,
                    pos: Vec3::new(
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.02..0.3),
                    ),
                    yaw: rng.gen_range(-1.0..1.0),
                    delta: Vec3::new(
                        rng.gen_range(-0.1..0.1),
                        rng.gen_range(-0.1..0.1),
                        rng.gen_range(-0.05..0.05),
                    ),
                    gripper: rng.gen_bool(0.5),
                    stiffness: [
                        rng.gen_range(10.0..500.0),
                        rng.gen_range(10.0..500.0),
                        rng.gen_range(10.0..500.0),
                        rng.gen_range(1.0..50.0),
                    ],
                };
                let (obs, info, _) = e.step(&c);
                assert!((-1.0..=2.0).contains(&info.env_reward), "{kind:?}: {info:?}");
                assert!(obs.0.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn observation_is_pure_function_of_state() {
        let mut e = env(TaskKind::Cleanup);
        e.reset(4);
        let a = e.observe();
        let b = e.observe();
        assert_eq!(a, b);
    }
}


