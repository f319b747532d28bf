//! Behavior-primitive library: reach, grasp, push, atomic motion, and the
//! gripper toggle, each extended with per-axis stiffness parameters and
//! executed as a closed-loop control sequence with the adaptive stiffness
//! controller in the loop.

use serde::{Deserialize, Serialize};

use crate::controller::{
    adapt_stiffness, critical_damping, interpolate_setpoint, AdaptiveParams, ControlMode,
    ControllerState,
};
use crate::sim::{
    actuation_energy, close_gripper, open_gripper, step_dynamics, ImpedanceGains, PhysicsConfig,
    Pose4, SimState, StepTelemetry, Vec3, NUM_AXES,
};

pub const NUM_PRIMITIVES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrimitiveId {
    Reach,
    Grasp,
    Push,
    Atomic,
    GripperToggle,
}

impl PrimitiveId {
    pub const ALL: [PrimitiveId; NUM_PRIMITIVES] = [
        PrimitiveId::Reach,
        PrimitiveId::Grasp,
        PrimitiveId::Push,
        PrimitiveId::Atomic,
        PrimitiveId::GripperToggle,
    ];

    pub fn index(self) -> usize {
        match self {
            PrimitiveId::Reach => 0,
            PrimitiveId::Grasp => 1,
            PrimitiveId::Push => 2,
            PrimitiveId::Atomic => 3,
            PrimitiveId::GripperToggle => 4,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveId::Reach => "reach",
            PrimitiveId::Grasp => "grasp",
            PrimitiveId::Push => "push",
            PrimitiveId::Atomic => "atomic",
            PrimitiveId::GripperToggle => "gripper",
        }
    }
}

/// A high-level action: primitive identity plus the full fixed-width
/// parameter set. Only the fields relevant to `id` are read; the rest must be
/// present but are ignored.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PrimitiveCall {
    pub id: PrimitiveId,
    /// Spatial target (reach, grasp, push).
    pub pos: Vec3,
    /// Yaw target, grasp only.
    pub yaw: f64,
    /// Displacement (push, atomic).
    pub delta: Vec3,
    /// Gripper toggle target: true = close.
    pub gripper: bool,
    /// Initial per-axis stiffness.
    pub stiffness: [f64; NUM_AXES],
}

/// Tick budgets and tolerances of the primitive state machines.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimitiveConfig {
    /// Position termination tolerance, m.
    pub pos_tol: f64,
    /// Setpoint interpolation step per tick, m.
    pub max_step: f64,
    pub reach_budget: usize,
    pub push_budget: usize,
    pub grasp_approach_budget: usize,
    pub grasp_descend_budget: usize,
    pub atomic_ticks: usize,
    pub gripper_ticks: usize,
    /// Per-call clamp on atomic displacements, m.
    pub atomic_clamp: f64,
    /// Grasp approach hover height above the target, m.
    pub grasp_approach_height: f64,
    /// Ticks charged as one atomic action.
    pub ticks_per_atomic: usize,
}

impl Default for PrimitiveConfig {
    fn default() -> Self {
        Self {
            pos_tol: 0.005,
            max_step: 0.002,
            reach_budget: 400,
            push_budget: 400,
            grasp_approach_budget: 200,
            grasp_descend_budget: 150,
            atomic_ticks: 10,
            gripper_ticks: 5,
            atomic_clamp: 0.02,
            grasp_approach_height: 0.05,
            ticks_per_atomic: 25,
        }
    }
}

/// One row of the per-tick telemetry trace (the sim CSV format plus the
/// executing primitive).
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub time: f64,
    pub primitive: PrimitiveId,
    pub ee_pos: Vec3,
    pub setpoint: Vec3,
    pub k: [f64; NUM_AXES],
    pub f_contact: Vec3,
    pub power: f64,
}

/// Result of a full primitive execution.
#[derive(Clone, Debug)]
pub struct PrimitiveOutcome {
    pub ticks_used: usize,
    pub terminal_state: SimState,
    pub timed_out: bool,
    /// A tick diverged; the episode should abort as a failure.
    pub diverged: bool,
    /// Max |contact force| over the execution, N.
    pub max_force: f64,
    /// Total actuation energy over the execution, J.
    pub energy: f64,
    pub trace: Option<Vec<TraceRow>>,
}

/// Atomic-action cost of an execution: ceil(ticks / ticks_per_atomic).
pub fn atomic_cost(outcome: &PrimitiveOutcome, ticks_per_atomic: usize) -> usize {
    outcome.ticks_used.div_ceil(ticks_per_atomic)
}

enum Phase {
    /// Move the setpoint target to a pose; ends at tolerance or budget.
    Goto {
        target: Pose4,
        budget: usize,
        tolerance_exit: bool,
    },
    /// Hold position for a fixed number of ticks.
    Hold { ticks: usize },
    /// Gripper actuation (instantaneous, between motion phases).
    Gripper { close: bool },
}

fn phases(state: &SimState, call: &PrimitiveCall, cfg: &PrimitiveConfig) -> Vec<Phase> {
    let here_yaw = state.ee_yaw;
    match call.id {
        PrimitiveId::Reach => vec![Phase::Goto {
            target: Pose4 {
                pos: call.pos,
                yaw: here_yaw,
            },
            budget: cfg.reach_budget,
            tolerance_exit: true,
        }],
        PrimitiveId::Grasp => vec![
            Phase::Goto {
                target: Pose4 {
                    pos: call.pos + Vec3::new(0.0, 0.0, cfg.grasp_approach_height),
                    yaw: call.yaw,
                },
                budget: cfg.grasp_approach_budget,
                tolerance_exit: true,
            },
            Phase::Goto {
                target: Pose4 {
                    pos: call.pos,
                    yaw: call.yaw,
                },
                budget: cfg.grasp_descend_budget,
                tolerance_exit: true,
            },
            Phase::Gripper { close: true },
        ],
        PrimitiveId::Push => vec![
            Phase::Goto {
                target: Pose4 {
                    pos: call.pos,
                    yaw: here_yaw,
                },
                budget: cfg.reach_budget,
                tolerance_exit: true,
            },
            Phase::Goto {
                target: Pose4 {
                    pos: call.pos + call.delta,
                    yaw: here_yaw,
                },
                budget: cfg.push_budget,
                tolerance_exit: true,
            },
        ],
        PrimitiveId::Atomic => {
            let mut d = call.delta;
            let n = d.norm();
            if n > cfg.atomic_clamp {
                d *= cfg.atomic_clamp / n;
            }
            vec![Phase::Goto {
                target: Pose4 {
                    pos: state.ee_pos + d,
                    yaw: here_yaw,
                },
                budget: cfg.atomic_ticks,
                tolerance_exit: false,
            }]
        }
        PrimitiveId::GripperToggle => vec![
            Phase::Gripper {
                close: call.gripper,
            },
            Phase::Hold {
                ticks: cfg.gripper_ticks,
            },
        ],
    }
}

/// Runs one primitive to completion. Each motion tick performs setpoint
/// interpolation, then (in adaptive mode) a stiffness update with damping
/// recomputation, then one dynamics step. A per-tick hook lets the task
/// environment apply its own rules (stain clearing, door kinematics).
pub fn execute_primitive(
    state: &SimState,
    call: &PrimitiveCall,
    params: &AdaptiveParams,
    mode: ControlMode,
    phys: &PhysicsConfig,
    cfg: &PrimitiveConfig,
    trace: bool,
    mut tick_hook: impl FnMut(&mut SimState, &StepTelemetry),
) -> PrimitiveOutcome {
    let mut sim = state.clone();
    let mut k_init = call.stiffness;
    for i in 0..NUM_AXES {
        k_init[i] = k_init[i].clamp(params.k_min[i], params.k_max[i]);
    }
    let start = Pose4 {
        pos: sim.ee_pos,
        yaw: sim.ee_yaw,
    };
    let mut cs = ControllerState::new(k_init, start, start);

    let mut ticks_used = 0usize;
    let mut timed_out = false;
    let mut diverged = false;
    let mut max_force: f64 = 0.0;
    let mut energy = 0.0;
    let mut rows: Option<Vec<TraceRow>> = if trace { Some(Vec::new()) } else { None };

    'phases: for phase in phases(&sim, call, cfg) {
        match phase {
            Phase::Gripper { close } => {
                if close {
                    close_gripper(&mut sim, phys);
                } else {
                    open_gripper(&mut sim);
                }
            }
            Phase::Hold { ticks } => {
                cs.target = Pose4 {
                    pos: sim.ee_pos,
                    yaw: sim.ee_yaw,
                };
                for _ in 0..ticks {
                    if !tick(
                        &mut sim, &mut cs, params, mode, phys, cfg, call.id, &mut ticks_used,
                        &mut max_force, &mut energy, &mut rows, &mut tick_hook,
                    ) {
                        diverged = true;
                        break 'phases;
                    }
                }
            }
            Phase::Goto {
                target,
                budget,
                tolerance_exit,
            } => {
                cs.target = target;
                let mut reached = false;
                for _ in 0..budget {
                    if !tick(
                        &mut sim, &mut cs, params, mode, phys, cfg, call.id, &mut ticks_used,
                        &mut max_force, &mut energy, &mut rows, &mut tick_hook,
                    ) {
                        diverged = true;
                        break 'phases;
                    }
                    if tolerance_exit && (sim.ee_pos - target.pos).norm() < cfg.pos_tol {
                        reached = true;
                        break;
                    }
                }
                if tolerance_exit && !reached {
                    timed_out = true;
                }
            }
        }
    }

    PrimitiveOutcome {
        ticks_used: ticks_used.max(1),
        terminal_state: sim,
        timed_out,
        diverged,
        max_force,
        energy,
        trace: rows,
    }
}

#[allow(clippy::too_many_arguments)]
fn tick(
    sim: &mut SimState,
    cs: &mut ControllerState,
    params: &AdaptiveParams,
    mode: ControlMode,
    phys: &PhysicsConfig,
    cfg: &PrimitiveConfig,
    id: PrimitiveId,
    ticks_used: &mut usize,
    max_force: &mut f64,
    energy: &mut f64,
    rows: &mut Option<Vec<TraceRow>>,
    tick_hook: &mut impl FnMut(&mut SimState, &StepTelemetry),
) -> bool {
    *cs = interpolate_setpoint(cs, cfg.max_step);
    if mode == ControlMode::Adaptive {
        *cs = adapt_stiffness(cs, params, phys.dt);
    }
    // damping follows every stiffness value onto the critical damping locus;
    // stiffness is clamped positive so this cannot fail
    let d = critical_damping(&cs.k, phys.m_eff, phys.yaw_inertia).expect("positive stiffness");
    let gains = ImpedanceGains { k: cs.k, d };
    match step_dynamics(sim, &gains, &cs.setpoint, phys, phys.dt) {
        Ok((next, tel)) => {
            *sim = next;
            cs.eps = tel.tracking_err;
            cs.power = tel.power;
            let (e, _) = actuation_energy(&tel, phys.dt);
            *energy += e;
            *max_force = max_force.max(tel.f_contact.norm());
            *ticks_used += 1;
            tick_hook(sim, &tel);
            if let Some(rows) = rows {
                rows.push(TraceRow {
                    time: sim.time,
                    primitive: id,
                    ee_pos: sim.ee_pos,
                    setpoint: cs.setpoint.pos,
                    k: cs.k,
                    f_contact: tel.f_contact,
                    power: tel.power,
                });
            }
            true
        }
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ObjectState, WorldParams};

    fn setup() -> (SimState, AdaptiveParams, PhysicsConfig, PrimitiveConfig) {
        let state = SimState::at_rest(Vec3::new(0.0, 0.0, 0.2), WorldParams::default());
        (
            state,
            AdaptiveParams::default(),
            PhysicsConfig::default(),
            PrimitiveConfig::default(),
        )
    }

    fn reach_call(pos: Vec3) -> PrimitiveCall {
        PrimitiveCall {
            id: PrimitiveId::Reach,
            pos,
            yaw: 0.0,
            delta: Vec3::zeros(),
            gripper: false,
            stiffness: [300.0, 300.0, 300.0, 20.0],
        }
    }

    #[test]
    fn reach_at_current_position_is_trivial() {
        let (state, params, phys, cfg) = setup();
        let call = reach_call(state.ee_pos);
        let out = execute_primitive(
            &state,
            &call,
            &params,
            ControlMode::StaticStiffness,
            &phys,
            &cfg,
            false,
            |_, _| {},
        );
        assert!(out.ticks_used <= 2);
        assert!(!out.timed_out);
        assert!((out.terminal_state.ee_pos - state.ee_pos).norm() < 1e-6);
    }

    #[test]
    fn reach_converges_to_target() {
        let (state, params, phys, cfg) = setup();
        let call = reach_call(Vec3::new(0.15, -0.1, 0.25));
        let out = execute_primitive(
            &state,
            &call,
            &params,
            ControlMode::Adaptive,
            &phys,
            &cfg,
            false,
            |_, _| {},
        );
        assert!(!out.timed_out, "ticks={}", out.ticks_used);
        assert!((out.terminal_state.ee_pos - call.pos).norm() < cfg.pos_tol);
    }

    #[test]
    fn push_displaces_free_cube_within_bracket() {
        let (mut state, params, phys, cfg) = setup();
        state.objects.push(ObjectState {
            id: 0,
            pos: Vec3::new(0.1, 0.0, 0.025),
            yaw: 0.0,
            half_extents: Vec3::new(0.025, 0.025, 0.025),
            keypoint_local: Vec3::zeros(),
            fixed: false,
        });
        let call = PrimitiveCall {
            id: PrimitiveId::Push,
            pos: Vec3::new(0.04, 0.0, 0.025),
            yaw: 0.0,
            delta: Vec3::new(0.1, 0.0, 0.0),
            gripper: false,
            stiffness: [400.0, 400.0, 400.0, 20.0],
        };
        let out = execute_primitive(
            &state,
            &call,
            &params,
            ControlMode::StaticStiffness,
            &phys,
            &cfg,
            false,
            |_, _| {},
        );
        let x = out.terminal_state.objects[0].pos.x;
        assert!(
            (0.15..=0.22).contains(&x),
            "cube x after push: {x} (started at 0.1)"
        );
    }

    #[test]
    fn gripper_toggle_attaches_nearby_object() {
        let (mut state, params, phys, cfg) = setup();
        state.ee_pos = Vec3::new(0.0, 0.0, 0.05);
        state.objects.push(ObjectState {
            id: 0,
            pos: Vec3::new(0.0, 0.0, 0.025),
            yaw: 0.0,
            half_extents: Vec3::new(0.02, 0.02, 0.025),
            keypoint_local: Vec3::new(0.0, 0.0, 0.02),
            fixed: false,
        });
        let call = PrimitiveCall {
            id: PrimitiveId::GripperToggle,
            pos: Vec3::zeros(),
            yaw: 0.0,
            delta: Vec3::zeros(),
            gripper: true,
            stiffness: [300.0, 300.0, 300.0, 20.0],
        };
        let out = execute_primitive(
            &state,
            &call,
            &params,
            ControlMode::Adaptive,
            &phys,
            &cfg,
            false,
            |_, _| {},
        );
        assert_eq!(out.terminal_state.held_object, Some(0));
        assert_eq!(out.ticks_used, cfg.gripper_ticks);
    }

    #[test]
    fn zero_gain_adaptive_equals_static_bit_exact() {
        let (state, mut params, phys, cfg) = setup();
        params.beta = 0.0;
        params.gamma_e = 0.0;
        let call = reach_call(Vec3::new(0.1, 0.05, 0.15));
        let a = execute_primitive(
            &state,
            &call,
            &params,
            ControlMode::Adaptive,
            &phys,
            &cfg,
            true,
            |_, _| {},
        );
        let b = execute_primitive(
            &state,
            &call,
            &params,
            ControlMode::StaticStiffness,
            &phys,
            &cfg,
            true,
            |_, _| {},
        );
        assert_eq!(a.ticks_used, b.ticks_used);
        assert_eq!(a.terminal_state.ee_pos, b.terminal_state.ee_pos);
        let (ta, tb) = (a.trace.unwrap(), b.trace.unwrap());
        for (ra, rb) in ta.iter().zip(tb.iter()) {
            assert_eq!(ra.ee_pos, rb.ee_pos);
            assert_eq!(ra.k, rb.k);
        }
    }

    #[test]
    fn adaptive_damping_invariant_holds_every_tick() {
        let (state, params, phys, cfg) = setup();
        let call = reach_call(Vec3::new(0.2, 0.0, -0.01));
        let out = execute_primitive(
            &state,
            &call,
            &params,
            ControlMode::Adaptive,
            &phys,
            &cfg,
            true,
            |_, _| {},
        );
        for row in out.trace.unwrap() {
            let d = critical_damping(&row.k, phys.m_eff, phys.yaw_inertia).unwrap();
            for i in 0..NUM_AXES {
                let m = if i == 3 { phys.yaw_inertia } else { phys.m_eff };
                assert!((d[i] * d[i] - 4.0 * row.k[i] * m).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ignored_parameters_do_not_change_outcome() {
        let (state, params, phys, cfg) = setup();
        let mut a = reach_call(Vec3::new(0.1, 0.1, 0.2));
        let mut b = a;
        b.delta = Vec3::new(0.4, -0.2, 0.9);
        b.gripper = true;
        b.yaw = 1.2;
        for call in [&mut a, &mut b] {
            let out = execute_primitive(
                &state,
                call,
                &params,
                ControlMode::Adaptive,
                &phys,
                &cfg,
                false,
                |_, _| {},
            );
            call.pos = out.terminal_state.ee_pos; // reuse field as scratch for compare
        }
        assert_eq!(a.pos, b.pos);
    }

    #[test]
    fn atomic_clamps_large_delta() {
        let (state, params, phys, cfg) = setup();
        let call = PrimitiveCall {
            id: PrimitiveId::Atomic,
            pos: Vec3::zeros(),
            yaw: 0.0,
            delta: Vec3::new(0.5, 0.0, 0.0),
            gripper: false,
            stiffness: [400.0, 400.0, 400.0, 20.0],
        };
        let out = execute_primitive(
            &state,
            &call,
            &params,
            ControlMode::Adaptive,
            &phys,
            &cfg,
            false,
            |_, _| {},
        );
        assert_eq!(out.ticks_used, cfg.atomic_ticks);
        assert!((out.terminal_state.ee_pos - state.ee_pos).norm() <= cfg.atomic_clamp + 1e-9);
    }

    #[test]
    fn every_primitive_halts_within_budget() {
        use rand::{Rng, SeedableRng};
        let (mut state, params, phys, cfg) = setup();
        state.objects.push(ObjectState {
            id: 0,
            pos: Vec3::new(0.1, 0.1, 0.025),
            yaw: 0.0,
            half_extents: Vec3::new(0.025, 0.025, 0.025),
            keypoint_local: Vec3::zeros(),
            fixed: false,
        });
        let max_ticks = cfg.reach_budget + cfg.push_budget + cfg.grasp_approach_budget
            + cfg.grasp_descend_budget
            + cfg.gripper_ticks
            + cfg.atomic_ticks;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for _ in 0..60 {
            let id = PrimitiveId::from_index(rng.gen_range(0..NUM_PRIMITIVES));
            let call = PrimitiveCall {
                id,
                pos: Vec3::new(
                    rng.gen_range(-0.4..0.4),
                    rng.gen_range(-0.4..0.4),
                    rng.gen_range(-0.05..0.5),
                ),
                yaw: rng.gen_range(-1.5..1.5),
                delta: Vec3::new(
                    rng.gen_range(-0.15..0.15),
                    rng.gen_range(-0.15..0.15),
                    rng.gen_range(-0.1..0.1),
                ),
                gripper: rng.gen_bool(0.5),
                stiffness: [
                    rng.gen_range(10.0..500.0),
                    rng.gen_range(10.0..500.0),
                    rng.gen_range(10.0..500.0),
                    rng.gen_range(1.0..50.0),
                ],
            };
            let out = execute_primitive(
                &state,
                &call,
                &params,
                ControlMode::Adaptive,
                &phys,
                &cfg,
                false,
                |_, _| {},
            );
            assert!(out.ticks_used <= max_ticks);
            assert!(!out.diverged);
        }
    }

    #[test]
    fn atomic_cost_ceiling() {
        let (state, ..) = setup();
        let mk = |ticks| PrimitiveOutcome {
            ticks_used: ticks,
            terminal_state: state.clone(),
            timed_out: false,
            diverged: false,
            max_force: 0.0,
            energy: 0.0,
            trace: None,
        };
        assert_eq!(atomic_cost(&mk(25), 25), 1);
        assert_eq!(atomic_cost(&mk(26), 25), 2);
        assert_eq!(atomic_cost(&mk(200), 25), 8);
    }
}
