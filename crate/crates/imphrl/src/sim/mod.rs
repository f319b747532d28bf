//! Desk-scale end-effector dynamics under Cartesian impedance control.
//!
//! The plant is a lumped mass (translation) plus a yaw inertia driven by a
//! per-axis spring-damper toward a setpoint, with penalty contact against a
//! table plane and rigid box objects. Stepping is a pure function of the
//! previous state, so independent episodes can run on separate threads.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Translation axes plus yaw, the four controlled degrees of freedom.
pub const NUM_AXES: usize = 4;

#[derive(Debug, Error)]
pub enum SimError {
    /// Non-finite state after a tick; signals bad gains or timestep.
    #[error("integration diverged at t={time}: non-finite state")]
    IntegrationDiverged { time: f64 },
}

/// Cartesian position plus yaw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose4 {
    pub pos: Vec3,
    pub yaw: f64,
}

impl Pose4 {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            pos: Vec3::new(x, y, z),
            yaw,
        }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Physical constants of the plant and contact model. All values live in the
/// run config; these defaults are the shipped baseline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    /// Effective end-effector mass, kg.
    pub m_eff: f64,
    /// Yaw inertia, kg m^2.
    pub yaw_inertia: f64,
    /// Control tick, seconds.
    pub dt: f64,
    /// Table penalty stiffness, N/m.
    pub k_table: f64,
    /// Table penalty damping, N s/m.
    pub c_table: f64,
    /// Default table friction coefficient (per-episode value is randomized).
    pub mu: f64,
    /// Slip speed below which friction is viscous-regularized, m/s.
    pub slip_speed: f64,
    /// Workspace clamp box, meters.
    pub workspace_lo: [f64; 3],
    pub workspace_hi: [f64; 3],
    /// Grasp attaches when the keypoint is within this radius, m.
    pub grasp_radius: f64,
    /// Mass of free objects, kg.
    pub object_mass: f64,
    /// Viscous sliding coefficient for quasi-static object pushes, N s/m.
    pub c_slide: f64,
    pub gravity: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            m_eff: 1.0,
            yaw_inertia: 0.05,
            dt: 0.002,
            k_table: 2000.0,
            c_table: 20.0,
            mu: 0.5,
            slip_speed: 0.01,
            workspace_lo: [-0.45, -0.45, -0.05],
            workspace_hi: [0.45, 0.45, 0.6],
            grasp_radius: 0.04,
            object_mass: 0.25,
            c_slide: 50.0,
            gravity: 9.81,
        }
    }
}

/// Per-episode randomized world parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WorldParams {
    /// Height of the table surface, m.
    pub table_height: f64,
    /// Friction coefficient for this episode.
    pub table_friction: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            table_height: 0.0,
            table_friction: 0.5,
        }
    }
}

/// A rigid box object on the table. `keypoint_local` is the grasp/interaction
/// point expressed in the object frame and must lie inside the half-extents.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: u32,
    pub pos: Vec3,
    pub yaw: f64,
    pub half_extents: Vec3,
    pub keypoint_local: Vec3,
    /// Static scenery (door frame, bin) never moves.
    pub fixed: bool,
}

impl ObjectState {
    pub fn keypoint_world(&self) -> Vec3 {
        self.pos + rot_z(self.yaw, &self.keypoint_local)
    }

    pub fn bottom(&self) -> f64 {
        self.pos.z - self.half_extents.z
    }
}

fn rot_z(yaw: f64, v: &Vec3) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Boolean stain grid on the table surface. Cells only transition
/// true -> false within an episode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StainGrid {
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<bool>,
    pub cell_size: f64,
    pub origin: [f64; 2],
    pub initial_count: usize,
}

impl StainGrid {
    pub fn new(nx: usize, ny: usize, cell_size: f64, origin: [f64; 2], cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), nx * ny);
        let initial_count = cells.iter().filter(|c| **c).count();
        Self {
            nx,
            ny,
            cells,
            cell_size,
            origin,
            initial_count,
        }
    }

    pub fn remaining(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn fraction_wiped(&self) -> f64 {
        if self.initial_count == 0 {
            return 1.0;
        }
        1.0 - self.remaining() as f64 / self.initial_count as f64
    }

    fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.cell_size,
            self.origin[1] + (iy as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Clears every stained cell whose center lies within `radius` of `xy`.
    /// Returns the number of cells cleared.
    pub fn wipe_at(&mut self, xy: [f64; 2], radius: f64) -> usize {
        let mut cleared = 0;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let idx = iy * self.nx + ix;
                if !self.cells[idx] {
                    continue;
                }
                let c = self.cell_center(ix, iy);
                let d2 = (c[0] - xy[0]).powi(2) + (c[1] - xy[1]).powi(2);
                if d2 <= radius * radius {
                    self.cells[idx] = false;
                    cleared += 1;
                }
            }
        }
        cleared
    }

    /// Centroid and RMS radius of the remaining stained cells.
    pub fn centroid(&self) -> Option<([f64; 2], f64)> {
        let mut n = 0usize;
        let mut sx = 0.0;
        let mut sy = 0.0;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if self.cells[iy * self.nx + ix] {
                    let c = self.cell_center(ix, iy);
                    sx += c[0];
                    sy += c[1];
                    n += 1;
                }
            }
        }
        if n == 0 {
            return None;
        }
        let cx = sx / n as f64;
        let cy = sy / n as f64;
        let mut r2 = 0.0;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if self.cells[iy * self.nx + ix] {
                    let c = self.cell_center(ix, iy);
                    r2 += (c[0] - cx).powi(2) + (c[1] - cy).powi(2);
                }
            }
        }
        Some(([cx, cy], (r2 / n as f64).sqrt()))
    }
}

/// Per-axis stiffness with critically damped companion gains.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ImpedanceGains {
    /// (K_x, K_y, K_z) in N/m, K_psi in N m/rad.
    pub k: [f64; NUM_AXES],
    /// Damping, d_i = 2 sqrt(k_i m_i); recomputed after every stiffness update.
    pub d: [f64; NUM_AXES],
}

impl ImpedanceGains {
    /// Builds gains with damping on the critical damping locus for the given
    /// plant mass and yaw inertia.
    pub fn critically_damped(k: [f64; NUM_AXES], m_eff: f64, yaw_inertia: f64) -> Self {
        let mut d = [0.0; NUM_AXES];
        for i in 0..3 {
            d[i] = 2.0 * (k[i] * m_eff).sqrt();
        }
        d[3] = 2.0 * (k[3] * yaw_inertia).sqrt();
        Self { k, d }
    }
}

/// Full world snapshot.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimState {
    pub ee_pos: Vec3,
    pub ee_yaw: f64,
    pub ee_vel: Vec3,
    pub ee_yaw_rate: f64,
    pub gripper_closed: bool,
    /// Index into `objects`; set only while the gripper is closed.
    pub held_object: Option<usize>,
    /// Attachment offset of the held object in the end-effector frame.
    pub held_offset: Vec3,
    pub held_yaw_offset: f64,
    pub objects: Vec<ObjectState>,
    pub stains: Option<StainGrid>,
    pub contact_force: Vec3,
    pub time: f64,
    pub world: WorldParams,
}

impl SimState {
    pub fn at_rest(ee_pos: Vec3, world: WorldParams) -> Self {
        Self {
            ee_pos,
            ee_yaw: 0.0,
            ee_vel: Vec3::zeros(),
            ee_yaw_rate: 0.0,
            gripper_closed: false,
            held_object: None,
            held_offset: Vec3::zeros(),
            held_yaw_offset: 0.0,
            objects: Vec::new(),
            stains: None,
            contact_force: Vec3::zeros(),
            time: 0.0,
            world,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.ee_pos.iter().all(|v| v.is_finite())
            && self.ee_vel.iter().all(|v| v.is_finite())
            && self.ee_yaw.is_finite()
            && self.ee_yaw_rate.is_finite()
            && self
                .objects
                .iter()
                .all(|o| o.pos.iter().all(|v| v.is_finite()) && o.yaw.is_finite())
    }
}

/// Per-tick telemetry consumed by the controller and the force metrics.
#[derive(Clone, Debug)]
pub struct StepTelemetry {
    /// Commanded spring-damper force, N.
    pub f_cmd: Vec3,
    /// Commanded yaw torque, N m.
    pub tau_cmd: f64,
    /// Total contact force on the end-effector, N.
    pub f_contact: Vec3,
    /// Per-axis tracking error (m, m, m, rad) at the start of the tick.
    pub tracking_err: [f64; NUM_AXES],
    /// Instantaneous actuation power |F_cmd . v + tau w|, W.
    pub power: f64,
    /// Contact force exerted on each object by the end-effector.
    pub obj_forces: Vec<Vec3>,
}

/// Contact forces on the end-effector and the reaction on each object.
#[derive(Clone, Debug)]
pub struct ContactReport {
    pub ee_force: Vec3,
    /// Force exerted on each object by the end-effector (world frame).
    pub obj_forces: Vec<Vec3>,
}

/// Regularized Coulomb friction: magnitude mu*n, tapered linearly below the
/// slip speed so the force is continuous through zero velocity.
fn coulomb_friction(v_tangent: Vec3, normal_force: f64, mu: f64, slip_speed: f64) -> Vec3 {
    let speed = v_tangent.norm();
    if speed < 1e-15 || normal_force <= 0.0 {
        return Vec3::zeros();
    }
    let cap = mu * normal_force;
    let mag = cap * (speed / slip_speed).min(1.0);
    -v_tangent / speed * mag
}

/// Penalty contact: table plane against the end-effector point and the held
/// object, plus point-in-box contact against every other object.
///
/// The normal model is k*max(pen,0) + c*max(-vn,0) where vn is the contact
/// point velocity along the outward normal, so damping only acts while
/// approaching. The normal force is never negative.
pub fn contact_forces(state: &SimState, cfg: &PhysicsConfig) -> ContactReport {
    let mut ee_force = Vec3::zeros();
    let mut obj_forces = vec![Vec3::zeros(); state.objects.len()];
    let table = state.world.table_height;
    let mu = state.world.table_friction;

    // table vs end-effector point
    let pen = table - state.ee_pos.z;
    if pen > 0.0 {
        let vn = state.ee_vel.z;
        let n = cfg.k_table * pen + cfg.c_table * (-vn).max(0.0);
        ee_force.z += n;
        ee_force += coulomb_friction(
            Vec3::new(state.ee_vel.x, state.ee_vel.y, 0.0),
            n,
            mu,
            cfg.slip_speed,
        );
    }

    // table vs held object (rigid with the end-effector)
    if let Some(h) = state.held_object {
        let pen = table - state.objects[h].bottom();
        if pen > 0.0 {
            let vn = state.ee_vel.z;
            let n = cfg.k_table * pen + cfg.c_table * (-vn).max(0.0);
            ee_force.z += n;
            ee_force += coulomb_friction(
                Vec3::new(state.ee_vel.x, state.ee_vel.y, 0.0),
                n,
                mu,
                cfg.slip_speed,
            );
        }
    }

    // boxes vs end-effector point
    for (i, obj) in state.objects.iter().enumerate() {
        if state.held_object == Some(i) {
            continue;
        }
        let local = rot_z(-obj.yaw, &(state.ee_pos - obj.pos));
        let he = obj.half_extents;
        let depth = [
            he.x - local.x.abs(),
            he.y - local.y.abs(),
            he.z - local.z.abs(),
        ];
        if depth.iter().all(|d| *d > 0.0) {
            // shallowest face is the contact normal
            let (axis, &pen) = depth
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            let mut n_local = Vec3::zeros();
            n_local[axis] = local[axis].signum();
            let n_world = rot_z(obj.yaw, &n_local);
            let vn = state.ee_vel.dot(&n_world);
            let mag = cfg.k_table * pen + cfg.c_table * (-vn).max(0.0);
            ee_force += n_world * mag;
            obj_forces[i] -= n_world * mag;
        }
    }

    ContactReport {
        ee_force,
        obj_forces,
    }
}

/// Actuation energy for one tick: |F_cmd . v| dt, with the instantaneous
/// power as the second component.
pub fn actuation_energy(telemetry: &StepTelemetry, dt: f64) -> (f64, f64) {
    (telemetry.power * dt, telemetry.power)
}

/// One control tick of semi-implicit Euler under impedance control.
///
/// m v' = v + dt (F_cmd + F_contact) / m, x' = x + dt v'. Gravity on the
/// end-effector is pre-compensated; free objects slide quasi-statically when
/// the pushing force exceeds their Coulomb threshold.
pub fn step_dynamics(
    state: &SimState,
    gains: &ImpedanceGains,
    setpoint: &Pose4,
    cfg: &PhysicsConfig,
    dt: f64,
) -> Result<(SimState, StepTelemetry), SimError> {
    debug_assert!(dt > 0.0);
    let err = setpoint.pos - state.ee_pos;
    let err_yaw = wrap_angle(setpoint.yaw - state.ee_yaw);

    let f_cmd = Vec3::new(
        gains.k[0] * err.x - gains.d[0] * state.ee_vel.x,
        gains.k[1] * err.y - gains.d[1] * state.ee_vel.y,
        gains.k[2] * err.z - gains.d[2] * state.ee_vel.z,
    );
    let tau_cmd = gains.k[3] * err_yaw - gains.d[3] * state.ee_yaw_rate;

    let contact = contact_forces(state, cfg);
    let power = (f_cmd.dot(&state.ee_vel) + tau_cmd * state.ee_yaw_rate).abs();

    let mut next = state.clone();
    next.ee_vel += (f_cmd + contact.ee_force) * (dt / cfg.m_eff);
    next.ee_yaw_rate += tau_cmd * (dt / cfg.yaw_inertia);
    next.ee_pos += next.ee_vel * dt;
    next.ee_yaw = wrap_angle(next.ee_yaw + next.ee_yaw_rate * dt);

    for i in 0..3 {
        if next.ee_pos[i] < cfg.workspace_lo[i] {
            next.ee_pos[i] = cfg.workspace_lo[i];
            next.ee_vel[i] = 0.0;
        } else if next.ee_pos[i] > cfg.workspace_hi[i] {
            next.ee_pos[i] = cfg.workspace_hi[i];
            next.ee_vel[i] = 0.0;
        }
    }

    // free objects: quasi-static Coulomb slide on the table plane
    for (i, obj) in next.objects.iter_mut().enumerate() {
        if obj.fixed || state.held_object == Some(i) {
            continue;
        }
        let f = contact.obj_forces[i];
        let load = cfg.object_mass * cfg.gravity + (-f.z).max(0.0);
        let fh = Vec3::new(f.x, f.y, 0.0);
        let thr = state.world.table_friction * load;
        let mag = fh.norm();
        if mag > thr {
            let v_obj = fh / mag * ((mag - thr) / cfg.c_slide);
            obj.pos += v_obj * dt;
        }
        // free objects rest on the table
        obj.pos.z = state.world.table_height + obj.half_extents.z;
    }

    // held object rides rigidly on the end-effector
    if let Some(h) = state.held_object {
        let (pos, yaw) = {
            let off = rot_z(next.ee_yaw, &state.held_offset);
            (
                next.ee_pos + off,
                wrap_angle(next.ee_yaw + state.held_yaw_offset),
            )
        };
        next.objects[h].pos = pos;
        next.objects[h].yaw = yaw;
        // never drive the held object through the table beyond the solver
        // tolerance of 1 mm
        let bottom = next.objects[h].bottom();
        let floor = state.world.table_height - 0.001;
        if bottom < floor {
            let dz = floor - bottom;
            next.ee_pos.z += dz;
            next.objects[h].pos.z += dz;
            next.ee_vel.z = next.ee_vel.z.max(0.0);
        }
    }

    next.contact_force = contact.ee_force;
    next.time = state.time + dt;

    if !next.is_finite() {
        return Err(SimError::IntegrationDiverged { time: next.time });
    }

    Ok((
        next,
        StepTelemetry {
            f_cmd,
            tau_cmd,
            f_contact: contact.ee_force,
            tracking_err: [err.x, err.y, err.z, err_yaw],
            power,
            obj_forces: contact.obj_forces,
        },
    ))
}

/// Closes the gripper; attaches the nearest object whose keypoint is within
/// the grasp radius. Returns true if an object was attached.
pub fn close_gripper(state: &mut SimState, cfg: &PhysicsConfig) -> bool {
    state.gripper_closed = true;
    if state.held_object.is_some() {
        return true;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, obj) in state.objects.iter().enumerate() {
        if obj.fixed {
            continue;
        }
        let d = (obj.keypoint_world() - state.ee_pos).norm();
        if d < cfg.grasp_radius && best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    if let Some((i, _)) = best {
        let obj = &state.objects[i];
        state.held_offset = rot_z(-state.ee_yaw, &(obj.pos - state.ee_pos));
        state.held_yaw_offset = wrap_angle(obj.yaw - state.ee_yaw);
        state.held_object = Some(i);
        true
    } else {
        false
    }
}

/// Opens the gripper and detaches any held object, which settles on the table.
pub fn open_gripper(state: &mut SimState) {
    state.gripper_closed = false;
    if let Some(h) = state.held_object.take() {
        let he = state.objects[h].half_extents;
        state.objects[h].pos.z = state.world.table_height + he.z;
    }
}
