use imphrl::config::{Profile, RunConfig};
use imphrl::envs::{TaskEnv, TaskKind};
use imphrl::primitives::{PrimitiveCall, PrimitiveId};
use imphrl::sim::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() {
    let mut cfg = RunConfig::new(TaskKind::Wipe, Profile::Desk, imphrl::config::AblationCase::Full, 0);
    if let Ok(v) = std::env::var("BETA") {
        cfg.controller.beta = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("GAMMAE") {
        cfg.controller.gamma_e = v.parse().unwrap();
    }
    if std::env::var("STATIC").is_ok() {
        cfg.ablation = imphrl::config::AblationCase::Case3;
    }
    if let Ok(v) = std::env::var("KTABLE") {
        cfg.physics.k_table = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("CTABLE") {
        cfg.physics.c_table = v.parse().unwrap();
    }
    let mut env = TaskEnv::new(cfg.task_spec(), cfg.env_config());
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let _ = env.reset(1234);
    let table = env.state.world.table_height;
    for i in 0..20 {
        let kp = env.affordance_ctx().keypoints[0];
        let force: f64 = rng.gen_range(2.0..10.0);
        let kz: f64 = std::env::var("KZ")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| rng.gen_range(100.0..500.0));
        let depth = std::env::var("DEPTH")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| (force / kz).clamp(0.002, 0.04));
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        let len = rng.gen_range(0.15..0.25);
        let (dx, dy) = (len * ang.cos(), len * ang.sin());
        let call = PrimitiveCall {
            id: PrimitiveId::Push,
            pos: Vec3::new(kp.x - 0.5 * dx, kp.y - 0.5 * dy, table - depth),
            yaw: 0.0,
            delta: Vec3::new(dx, dy, 0.0),
            gripper: false,
            stiffness: [300.0, 300.0, kz, 10.0],
        };
        let (_, info, _) = env.step(&call);
        let frac = env.state.stains.as_ref().map(|g| g.fraction_wiped()).unwrap_or(1.0);
        println!(
            "stroke {i:2} depth={depth:.3} kz={kz:.0} F*={force:.1} frac={frac:.3} env_r={:.2} succ={} done={} fmax={:.1}",
            info.env_reward, info.success, env.done, info.max_force
        );
        if env.done { break; }
    }
}
