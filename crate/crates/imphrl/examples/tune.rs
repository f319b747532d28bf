use imphrl::config::{AblationCase, Profile, RunConfig};
use imphrl::envs::TaskKind;
use imphrl::primitives::{PrimitiveCall, PrimitiveId};
use imphrl::rl::Trainer;
use imphrl::rl::sac::critic_input;

fn probe(trainer: &Trainer) {
    let mut env = imphrl::envs::TaskEnv::new(
        trainer.cfg.task_spec(),
        trainer.cfg.env_config(),
    );
    let obs = env.reset(424242);
    let agent = &trainer.agent;
    let dist = agent.policy.dist(&obs.0);
    eprintln!("s0 probs {:?}", dist.probs());
    let kp = env.affordance_ctx().keypoints[0];
    // scripted grasp theta at the keypoint, soft stiffness
    let mut th = [0.0f64; 12];
    th[0] = kp.x; th[1] = kp.y; th[2] = kp.z;
    th[8] = 60.0; th[9] = 60.0; th[10] = 120.0; th[11] = 5.0;
    for p in 0..5 {
        let mean = dist.mean_theta(p);
        let qm = agent.q1.forward1(&critic_input(&obs.0, p, &mean))[0]
            .min(agent.q2.forward1(&critic_input(&obs.0, p, &mean))[0]);
        let qs = agent.q1.forward1(&critic_input(&obs.0, p, &th))[0]
            .min(agent.q2.forward1(&critic_input(&obs.0, p, &th))[0]);
        eprintln!(
            "  p{p} Q(mean)={qm:8.2} Q(kp,soft)={qs:8.2} mean_pos=({:.2},{:.2},{:.2}) k=({:.0},{:.0},{:.0},{:.0})",
            mean[0], mean[1], mean[2], mean[8], mean[9], mean[10], mean[11]
        );
    }
    // execute the scripted grasp, look at the held state
    let call = PrimitiveCall {
        id: PrimitiveId::Grasp,
        pos: imphrl::sim::Vec3::new(kp.x, kp.y, kp.z),
        yaw: 0.0,
        delta: imphrl::sim::Vec3::zeros(),
        gripper: true,
        stiffness: [60.0, 60.0, 120.0, 5.0],
    };
    let (obs1, info, _) = env.step(&call);
    eprintln!("scripted grasp: env_r={:.2} shaped={:.2} cost={}", info.env_reward, info.shaped_reward, info.atomic_cost);
    let dist1 = agent.policy.dist(&obs1.0);
    eprintln!("s1 probs {:?}", dist1.probs());
    // reach straight up while holding vs hold in place
    let mut up = dist1.mean_theta(0);
    let here = [obs1.0[0], obs1.0[1], obs1.0[2]];
    up[0] = here[0]; up[1] = here[1]; up[2] = 0.40;
    up[8] = 300.0; up[9] = 300.0; up[10] = 300.0; up[11] = 20.0;
    let mut stay = up; stay[2] = here[2];
    let q_up = agent.q1.forward1(&critic_input(&obs1.0, 0, &up))[0]
        .min(agent.q2.forward1(&critic_input(&obs1.0, 0, &up))[0]);
    let q_stay = agent.q1.forward1(&critic_input(&obs1.0, 0, &stay))[0]
        .min(agent.q2.forward1(&critic_input(&obs1.0, 0, &stay))[0]);
    for p in 0..5 {
        let mean = dist1.mean_theta(p);
        let qm = agent.q1.forward1(&critic_input(&obs1.0, p, &mean))[0]
            .min(agent.q2.forward1(&critic_input(&obs1.0, p, &mean))[0]);
        eprintln!("  held p{p} Q(mean)={qm:8.2} mean_pos=({:.2},{:.2},{:.2})", mean[0], mean[1], mean[2]);
    }
    eprintln!("held: Q(reach up)={q_up:.2} Q(stay)={q_stay:.2}");
    // roll the scripted lift out to see actual rewards
    let up_call = PrimitiveCall {
        id: PrimitiveId::Reach,
        pos: imphrl::sim::Vec3::new(here[0], here[1], 0.40),
        yaw: 0.0,
        delta: imphrl::sim::Vec3::zeros(),
        gripper: true,
        stiffness: [300.0, 300.0, 300.0, 20.0],
    };
    let (_, info2, _) = env.step(&up_call);
    eprintln!("scripted lift: env_r={:.2} shaped={:.2} succ={} cost={}", info2.env_reward, info2.shaped_reward, info2.success, info2.atomic_cost);
}

fn probe_buffer(trainer: &Trainer) {
    let n = trainer.buffer.len();
    let mut hi = 0usize;
    let mut lo_err = (0.0, 0usize);
    let mut hi_err = (0.0, 0usize);
    for i in 0..n {
        let t = trainer.buffer.get(i);
        let q = trainer.agent.q1.forward1(&critic_input(&t.obs, t.primitive, &t.theta))[0];
        let xi = [[0.0; 12]; 5];
        let target = if t.done { t.reward } else {
            t.reward + trainer.agent.hyper.gamma * trainer.agent.soft_value(&t.next_obs, &xi, true)
        };
        let e = (q - target).abs();
        if t.reward > 3.0 {
            hi += 1;
            hi_err = (hi_err.0 + e, hi_err.1 + 1);
        } else {
            lo_err = (lo_err.0 + e, lo_err.1 + 1);
        }
    }
    eprintln!(
        "buffer n={n} reward>3: {hi} ({:.2}%)  mean|TD| hi={:.2} lo={:.2}",
        100.0 * hi as f64 / n as f64,
        hi_err.0 / hi_err.1.max(1) as f64,
        lo_err.0 / lo_err.1.max(1) as f64
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let task = match args.get(1).map(|s| s.as_str()) {
        Some("wipe") => TaskKind::Wipe,
        Some("door") => TaskKind::Door,
        Some("cleanup") => TaskKind::Cleanup,
        _ => TaskKind::Lift,
    };
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let case = match args.get(3).map(|s| s.as_str()) {
        Some("case1") => AblationCase::Case1,
        Some("case2") => AblationCase::Case2,
        Some("case3") => AblationCase::Case3,
        _ => AblationCase::Full,
    };
    let mut cfg = RunConfig::new(task, Profile::Desk, case, seed);
    if let Ok(e) = std::env::var("EPOCHS") {
        cfg.train.epochs = e.parse().unwrap();
    }
    if let Ok(h) = std::env::var("HIDDEN") {
        let n: usize = h.parse().unwrap();
        cfg.train.hidden = vec![n, n];
    }
    if let Ok(v) = std::env::var("GSTEPS") {
        cfg.train.grad_steps_per_epoch = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("LR") {
        cfg.train.lr = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("GAMMA") {
        cfg.train.gamma = v.parse().unwrap();
    }
    let t0 = std::time::Instant::now();
    let mut trainer = Trainer::new(cfg);
    let probe_every: usize = std::env::var("PROBE").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    trainer.run(|r| {
        eprintln!(
            "epoch {:3} ret {:9.1} succ {:.2} force {} ad {:.3} ac {:.3} closs {:.3} Hd {:.2} Hc {:.1} [{:.1}s]",
            r.epoch, r.eval_return, r.success_rate,
            r.mean_max_force.map(|f| format!("{f:5.1}")).unwrap_or("  -  ".into()),
            r.alpha_d, r.alpha_c, r.critic_loss, r.entropy_d, r.entropy_c,
            t0.elapsed().as_secs_f64()
        );
    });
    if probe_every > 0 {
        probe(&trainer);
        probe_buffer(&trainer);
    }
}
