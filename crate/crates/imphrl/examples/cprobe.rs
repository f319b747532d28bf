use imphrl::config::{AblationCase, Profile, RunConfig};
use imphrl::envs::{TaskEnv, TaskKind};
use imphrl::primitives::{PrimitiveCall, PrimitiveId};
use imphrl::sim::Vec3;

fn main() {
    let cfg = RunConfig::new(TaskKind::Cleanup, Profile::Desk, AblationCase::Full, 0);
    let mut env = TaskEnv::new(cfg.task_spec(), cfg.env_config());
    env.reset(9);
    let table = env.state.world.table_height;
    let iters: usize = std::env::var("ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(8);
    let stroke_cap: f64 = std::env::var("STROKE").ok().and_then(|v| v.parse().ok()).unwrap_or(0.24);
    let back: f64 = std::env::var("BACK").ok().and_then(|v| v.parse().ok()).unwrap_or(0.07);
    for it in 0..iters {
        if env.done {
            println!("done at iter {it} budget={}", env.budget_used);
            break;
        }
        let j = env.state.objects[0].pos;
        let err = Vec3::new(0.35 - j.x, -0.35 - j.y, 0.0);
        println!(
            "iter {it} jello=({:.3},{:.3}) err={:.3} budget={}",
            j.x, j.y, err.norm(), env.budget_used
        );
        if err.norm() <= env.spec.success.cleanup_corner_dist {
            break;
        }
        let axis = if err.x.abs() >= err.y.abs() {
            Vec3::new(err.x.signum(), 0.0, 0.0)
        } else {
            Vec3::new(0.0, err.y.signum(), 0.0)
        };
        let stroke = (err.x.abs().max(err.y.abs()) + 0.08).min(stroke_cap);
        let start = j - axis * back;
        // hop over the box only when the travel leg would plow through it
        let behind = (env.state.ee_pos - j).dot(&axis) < 0.0;
        if !behind {
            let (_, i1, done) = env.step(&PrimitiveCall {
                id: PrimitiveId::Reach,
                pos: Vec3::new(start.x, start.y, table + 0.10),
                yaw: 0.0,
                delta: Vec3::zeros(),
                gripper: false,
                stiffness: [300.0, 300.0, 300.0, 10.0],
            });
            println!("  reach cost={} ", i1.atomic_cost);
            if done {
                break;
            }
        }
        let (_, i2, _) = env.step(&PrimitiveCall {
            id: PrimitiveId::Push,
            pos: Vec3::new(start.x, start.y, table + 0.015),
            yaw: 0.0,
            delta: axis * stroke,
            gripper: false,
            stiffness: [400.0, 400.0, 400.0, 20.0],
        });
        println!("  push cost={} fmax={:.1}", i2.atomic_cost, i2.max_force);
    }
    let key = env.state.objects[1].keypoint_world();
    let (_, i, _) = env.step(&PrimitiveCall {
        id: PrimitiveId::Reach,
        pos: Vec3::new(key.x, key.y, key.z + 0.08),
        yaw: 0.0,
        delta: Vec3::zeros(),
        gripper: false,
        stiffness: [400.0, 400.0, 400.0, 20.0],
    });
    println!("stage reach cost={} done={}", i.atomic_cost, env.done);
    let (_, i, _) = env.step(&PrimitiveCall {
        id: PrimitiveId::Grasp,
        pos: key,
        yaw: 0.0,
        delta: Vec3::zeros(),
        gripper: false,
        stiffness: [400.0, 400.0, 400.0, 20.0],
    });
    println!("grasp cost={} held={:?} done={}", i.atomic_cost, env.state.held_object, env.done);
    let bin = env.state.objects[2].pos;
    let (_, i, _) = env.step(&PrimitiveCall {
        id: PrimitiveId::Reach,
        pos: Vec3::new(bin.x, bin.y, table + 0.15),
        yaw: 0.0,
        delta: Vec3::zeros(),
        gripper: false,
        stiffness: [400.0, 400.0, 400.0, 20.0],
    });
    println!("carry cost={} done={}", i.atomic_cost, env.done);
    let (_, i, _) = env.step(&PrimitiveCall {
        id: PrimitiveId::GripperToggle,
        pos: Vec3::zeros(),
        yaw: 0.0,
        delta: Vec3::zeros(),
        gripper: false,
        stiffness: [300.0, 300.0, 300.0, 20.0],
    });
    println!("release success={} done={}", i.success, env.done);
    let j = env.state.objects[0].pos;
    println!(
        "final jello=({:.3},{:.3}) d_corner={:.3} budget={}",
        j.x,
        j.y,
        ((j.x - 0.35).powi(2) + (j.y + 0.35).powi(2)).sqrt(),
        env.budget_used
    );
}
