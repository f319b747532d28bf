//! Batch CLI: training runs, checkpoint evaluation, controller calibration,
//! and figure-data exports.
//!
//! Exit codes: 0 success, 1 runtime failure (e.g. diverged training),
//! 2 usage or configuration error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use imphrl::config::{AblationCase, Profile, RunConfig};
use imphrl::controller::{fit_adaptive_params, synth_demo, DemoKind, Demonstration};
use imphrl::envs::{TaskEnv, TaskKind};
use imphrl::metrics::{
    compositionality, convergence_epoch, curves_to_svg, force_stats, heatmap_to_svg, AblationArm,
    AblationReport, ForceStats,
};
use imphrl::primitives::{PrimitiveId, TraceRow};
use imphrl::rl::trainer::EpochRecord;
use imphrl::rl::{call_from_theta, checkpoint, Trainer};

#[derive(Parser)]
#[command(name = "imphrl", version, about = "Impedance-primitive hierarchical RL runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Lift,
    Door,
    Wipe,
    Cleanup,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Lift => TaskKind::Lift,
            TaskArg::Door => TaskKind::Door,
            TaskArg::Wipe => TaskKind::Wipe,
            TaskArg::Cleanup => TaskKind::Cleanup,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    Full,
    Case1,
    Case2,
    Case3,
}

impl From<AblationArg> for AblationCase {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => AblationCase::Full,
            AblationArg::Case1 => AblationCase::Case1,
            AblationArg::Case2 => AblationCase::Case2,
            AblationArg::Case3 => AblationCase::Case3,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportWhat {
    Curves,
    Heatmap,
    Compositionality,
    Forces,
    Ablation,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy and write run artifacts.
    Train {
        /// Optional config file; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "lift")]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "desk")]
        profile: ProfileArg,
        #[arg(long, value_enum, default_value = "full")]
        ablation: AblationArg,
        /// Output directory; overrides config and IMPHRL_OUTPUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record a per-tick telemetry CSV of a final greedy episode.
        #[arg(long)]
        trace: bool,
        /// Resume from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Resume even when the checkpoint's config digest differs.
        #[arg(long)]
        force: bool,
        /// Print one progress line per epoch.
        #[arg(long)]
        verbose: bool,
    },
    /// Greedy-evaluate a trained checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: bool,
    },
    /// Fit adaptive-controller parameters from demonstration CSVs.
    FitParams {
        demo_dir: PathBuf,
        /// Where to write the fitted config fragment.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic demonstration CSVs for calibration.
    GenDemos {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma_e: f64,
        /// Demos per primitive kind (reach, push, atomic).
        #[arg(long, default_value_t = 5)]
        per_kind: usize,
        /// Noise sigma relative to the stiffness-rate range.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export figure data from a completed run directory.
    Export {
        run_dir: PathBuf,
        #[arg(value_enum)]
        what: ExportWhat,
    },
}

/// Errors carry the exit code mandated by the interface contract.
enum AppError {
    Usage(String),
    Runtime(String),
}

impl AppError {
    fn code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Runtime(_) => 1,
        }
    }
    fn msg(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Runtime(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Usage(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Runtime(e.to_string())
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.msg());
            std::process::exit(e.code());
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.cmd {
        Cmd::Train {
            config,
            task,
            seed,
            profile,
            ablation,
            out,
            trace,
            resume,
            force,
            verbose,
        } => cmd_train(
            config, task, seed, profile, ablation, out, trace, resume, force, verbose,
        ),
        Cmd::Eval {
            checkpoint,
            episodes,
            out,
            trace,
        } => cmd_eval(&checkpoint, episodes, out, trace),
        Cmd::FitParams { demo_dir, out } => cmd_fit_params(&demo_dir, out),
        Cmd::GenDemos {
            out_dir,
            beta,
            gamma_e,
            per_kind,
            noise,
            seed,
        } => cmd_gen_demos(&out_dir, beta, gamma_e, per_kind, noise, seed),
        Cmd::Export { run_dir, what } => cmd_export(&run_dir, what),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), AppError> {
    std::fs::write(path, contents)
        .map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn trace_csv(rows: &[(usize, Vec<TraceRow>)]) -> String {
    let mut out = String::from(
        "time,primitive_id,ee_x,ee_y,ee_z,sp_x,sp_y,sp_z,kx,ky,kz,kpsi,fx,fy,fz,power\n",
    );
    for (decision, trace) in rows {
        for r in trace {
            let _ = writeln!(
                out,
                "{:.4},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3},{:.3},{:.3},{:.3},{:.4},{:.4},{:.4},{:.6}",
                r.time,
                r.primitive.index(),
                r.ee_pos.x,
                r.ee_pos.y,
                r.ee_pos.z,
                r.setpoint.x,
                r.setpoint.y,
                r.setpoint.z,
                r.k[0],
                r.k[1],
                r.k[2],
                r.k[3],
                r.f_contact.x,
                r.f_contact.y,
                r.f_contact.z,
                r.power,
            );
            let _ = decision;
        }
    }
    out
}

/// Runs one greedy episode with tracing on and returns the telemetry rows.
fn traced_episode(trainer: &Trainer, seed: u64) -> (Vec<(usize, Vec<TraceRow>)>, bool) {
    let mut env_cfg = trainer.cfg.env_config();
    env_cfg.trace = true;
    let mut env = TaskEnv::new(trainer.cfg.task_spec(), env_cfg);
    let mut obs = env.reset(seed);
    let mut rows = Vec::new();
    let mut success = false;
    let mut decision = 0;
    while !env.done {
        let (p, theta) = trainer.agent.policy.greedy(&obs.0);
        let call = call_from_theta(PrimitiveId::from_index(p), &theta);
        let (next_obs, info, _) = env.step(&call);
        if let Some(t) = env.last_trace.clone() {
            rows.push((decision, t));
        }
        success |= info.success;
        obs = next_obs;
        decision += 1;
    }
    (rows, success)
}

fn sequences_csv(seqs: &[Vec<usize>]) -> String {
    let mut out = String::from("episode,sequence\n");
    for (i, s) in seqs.iter().enumerate() {
        let names: Vec<&str> = s
            .iter()
            .map(|&p| PrimitiveId::from_index(p).name())
            .collect();
        let _ = writeln!(out, "{i},{}", names.join(" "));
    }
    out
}

fn run_dir_name(cfg: &RunConfig) -> String {
    format!(
        "{}-{}-{}-seed{}",
        cfg.task.name(),
        match cfg.profile {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        },
        cfg.ablation.name(),
        cfg.seed
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config: Option<PathBuf>,
    task: TaskArg,
    seed: u64,
    profile: ProfileArg,
    ablation: AblationArg,
    out: Option<PathBuf>,
    trace: bool,
    resume: Option<PathBuf>,
    force: bool,
    verbose: bool,
) -> Result<(), AppError> {
    let profile = match profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    };
    let mut cfg = match config {
        Some(ref path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::new(task.into(), profile, ablation.into(), seed),
    };
    if config.is_some() {
        // flags override the file's values
        cfg.task = task.into();
        cfg.profile = profile;
        cfg.ablation = ablation.into();
        cfg.seed = seed;
        cfg.train = imphrl::config::TrainConfig::for_profile(profile);
    }
    cfg.trace |= trace;
    cfg.validate().map_err(usage)?;

    let base = out.unwrap_or_else(|| cfg.resolved_output_dir());
    let dir = base.join(run_dir_name(&cfg));
    std::fs::create_dir_all(&dir)
        .map_err(|e| runtime(format!("creating {}: {e}", dir.display())))?;

    let mut trainer = match resume {
        Some(ckpt) => checkpoint::load(&ckpt, &cfg.hash(), force).map_err(usage)?,
        None => Trainer::new(cfg.clone()),
    };

    // self-describing run directory: config snapshot, content hash, seed
    trainer
        .cfg
        .save(&dir.join("config.toml"))
        .map_err(|e| runtime(e))?;
    write_file(
        &dir.join("manifest.txt"),
        &format!(
            "config_hash {}\nseed {}\ntask {}\nprofile {:?}\nablation {}\n",
            trainer.cfg.hash(),
            trainer.cfg.seed,
            trainer.cfg.task.name(),
            trainer.cfg.profile,
            trainer.cfg.ablation.name(),
        ),
    )?;

    trainer.run(|r| {
        if verbose {
            eprintln!(
                "epoch {:4}  return {:9.2}  success {:.2}  comp {:.3}",
                r.epoch, r.eval_return, r.success_rate, r.compositionality
            );
        }
    });

    let diverged = trainer
        .history
        .iter()
        .any(|r| !r.eval_return.is_finite() || !r.critic_loss.is_finite());

    write_file(&dir.join("metrics.csv"), &trainer.metrics_csv())?;
    let history_json =
        serde_json::to_string_pretty(&trainer.history).map_err(|e| runtime(e))?;
    write_file(&dir.join("history.json"), &history_json)?;
    if let Some(last) = trainer.history.last() {
        write_file(&dir.join("sequences.csv"), &sequences_csv(&last.sequences))?;
    }
    checkpoint::save(&trainer, &dir.join("checkpoint.bin")).map_err(|e| runtime(e))?;

    if trainer.cfg.trace {
        let (rows, _) = traced_episode(&trainer, trainer.cfg.seed ^ 0xDEAD_BEEF);
        write_file(&dir.join("trace.csv"), &trace_csv(&rows))?;
    }

    if diverged {
        return Err(AppError::Runtime(format!(
            "training diverged (non-finite metrics); artifacts kept in {}",
            dir.display()
        )));
    }
    println!("run artifacts written to {}", dir.display());
    Ok(())
}

fn cmd_eval(
    ckpt: &Path,
    episodes: usize,
    out: Option<PathBuf>,
    trace: bool,
) -> Result<(), AppError> {
    if !ckpt.exists() {
        return Err(usage(format!("checkpoint {} not found", ckpt.display())));
    }
    // the container carries its own config; the digest check is against it
    let trainer = checkpoint::load(ckpt, "", true).map_err(usage)?;
    let mut env = TaskEnv::new(trainer.cfg.task_spec(), trainer.cfg.env_config());

    let mut rows = String::from("episode,return,success,max_force\n");
    let mut seqs = Vec::with_capacity(episodes);
    let mut forces = Vec::with_capacity(episodes);
    let mut successes = 0usize;
    for i in 0..episodes {
        let ep = trainer.eval_episode(&mut env, 0x5EED_0000 + i as u64);
        let _ = writeln!(
            rows,
            "{i},{:.6},{},{:.6}",
            ep.ret, ep.success as u8, ep.max_force
        );
        successes += ep.success as usize;
        forces.push((ep.max_force, ep.success));
        seqs.push(ep.sequence);
    }
    let stats = force_stats(&forces);
    let comp = compositionality(&seqs);
    let success_rate = successes as f64 / episodes as f64;

    let report = serde_json::json!({
        "episodes": episodes,
        "success_rate": success_rate,
        "force": stats,
        "compositionality": comp,
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);

    let dir = out.unwrap_or_else(|| trainer.cfg.resolved_output_dir().join("eval"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| runtime(format!("creating {}: {e}", dir.display())))?;
    write_file(&dir.join("episodes.csv"), &rows)?;
    write_file(&dir.join("sequences.csv"), &sequences_csv(&seqs))?;
    write_file(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(&report).map_err(runtime)?,
    )?;
    if trace {
        let (t, _) = traced_episode(&trainer, 0x5EED_FFFF);
        write_file(&dir.join("trace.csv"), &trace_csv(&t))?;
    }
    Ok(())
}

fn cmd_fit_params(demo_dir: &Path, out: Option<PathBuf>) -> Result<(), AppError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(demo_dir)
        .map_err(|e| usage(format!("reading {}: {e}", demo_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(usage(format!(
            "no demonstration CSVs in {}",
            demo_dir.display()
        )));
    }
    let demos: Vec<Demonstration> = paths
        .iter()
        .map(|p| Demonstration::load_csv(p))
        .collect::<Result<_, _>>()
        .map_err(usage)?;
    let fit = fit_adaptive_params(&demos).map_err(runtime)?;

    println!("beta    {:.6}", fit.beta);
    println!("gamma_e {:.6}", fit.gamma_e);
    for d in &fit.per_demo {
        println!("  {}  beta {:.6}  gamma_e {:.6}  mse {:.6e}", d.name, d.beta, d.gamma_e, d.mse);
    }

    // mergeable config fragment matching the [controller] table of RunConfig
    let mut frag = String::from("[controller]\n");
    let _ = writeln!(frag, "beta = {:.12}", fit.beta);
    let _ = writeln!(frag, "gamma_e = {:.12}", fit.gamma_e);
    let _ = writeln!(
        frag,
        "# per-demo mse: [{}]",
        fit.per_demo
            .iter()
            .map(|d| format!("{:.6e}", d.mse))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let path = out.unwrap_or_else(|| demo_dir.join("fitted_params.toml"));
    write_file(&path, &frag)?;
    println!("fragment written to {}", path.display());
    Ok(())
}

fn cmd_gen_demos(
    out_dir: &Path,
    beta: f64,
    gamma_e: f64,
    per_kind: usize,
    noise: f64,
    seed: u64,
) -> Result<(), AppError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("creating {}: {e}", out_dir.display())))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for kind in [DemoKind::Reach, DemoKind::Push, DemoKind::Atomic] {
        for i in 0..per_kind {
            let name = format!("{kind:?}").to_lowercase();
            let demo = synth_demo(
                kind,
                &format!("{name}-{i}"),
                beta,
                gamma_e,
                200,
                0.01,
                noise,
                &mut rng,
            );
            demo.write_csv(&out_dir.join(format!("{name}-{i}.csv")))
                .map_err(runtime)?;
        }
    }
    println!(
        "{} demos written to {}",
        3 * per_kind,
        out_dir.display()
    );
    Ok(())
}

fn load_history(run_dir: &Path) -> Result<Vec<EpochRecord>, AppError> {
    let path = run_dir.join("history.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| usage(format!("missing run artifact {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_run_config(run_dir: &Path) -> Result<RunConfig, AppError> {
    RunConfig::load(&run_dir.join("config.toml")).map_err(usage)
}

fn arm_from_run(run_dir: &Path) -> Result<AblationArm, AppError> {
    let cfg = load_run_config(run_dir)?;
    let history = load_history(run_dir)?;
    let last = history
        .last()
        .ok_or_else(|| usage(format!("{}: empty history", run_dir.display())))?;
    let spec = cfg.task_spec();
    let returns: Vec<f64> = history.iter().map(|r| r.eval_return).collect();
    let curve =
        imphrl::metrics::normalize_learning_curve(&returns, 20, spec.return_lo, spec.return_hi);
    let force = match last.mean_max_force {
        Some(mean) => ForceStats::Present {
            mean,
            std: 0.0,
            max: mean,
            n: 1,
        },
        None => ForceStats::Absent,
    };
    Ok(AblationArm {
        name: cfg.ablation.name().to_string(),
        success_rate: last.success_rate,
        force,
        compositionality: last.compositionality,
        convergence_epoch: convergence_epoch(&curve, 0.8, 5),
        normalized_curve: curve,
    })
}

fn cmd_export(run_dir: &Path, what: ExportWhat) -> Result<(), AppError> {
    if !run_dir.is_dir() {
        return Err(usage(format!("{} is not a directory", run_dir.display())));
    }
    match what {
        ExportWhat::Curves => {
            let arm = arm_from_run(run_dir)?;
            let mut csv = String::from("epoch,normalized_return\n");
            for (i, v) in arm.normalized_curve.iter().enumerate() {
                let _ = writeln!(csv, "{i},{v:.9}");
            }
            write_file(&run_dir.join("curves.csv"), &csv)?;
            let svg = curves_to_svg(&[(arm.name.clone(), arm.normalized_curve.clone())]);
            write_file(&run_dir.join("curves.svg"), &svg)?;
        }
        ExportWhat::Heatmap => {
            let cfg = load_run_config(run_dir)?;
            let mut env = TaskEnv::new(cfg.task_spec(), cfg.env_config());
            env.reset(0);
            let ctx = env.affordance_ctx();
            let distances: Vec<f64> = (0..=30).map(|i| i as f64 * 0.01).collect();
            let fracs: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
            let rows = imphrl::affordance::coupling_grid(&ctx, &distances, &fracs);
            let mut csv = String::from("distance,stiffness_frac,coupling\n");
            for (d, f, c) in &rows {
                let _ = writeln!(csv, "{d:.3},{f:.3},{c:.9}");
            }
            write_file(&run_dir.join("heatmap.csv"), &csv)?;
            let svg = heatmap_to_svg(&rows, distances.len(), fracs.len());
            write_file(&run_dir.join("heatmap.svg"), &svg)?;
        }
        ExportWhat::Compositionality => {
            let history = load_history(run_dir)?;
            let mut csv = String::from("epoch,compositionality\n");
            for r in &history {
                let _ = writeln!(csv, "{},{:.9}", r.epoch, r.compositionality);
            }
            write_file(&run_dir.join("compositionality.csv"), &csv)?;
        }
        ExportWhat::Forces => {
            let history = load_history(run_dir)?;
            let mut csv = String::from("epoch,mean_max_force\n");
            for r in &history {
                let f = r
                    .mean_max_force
                    .map(|f| format!("{f:.9}"))
                    .unwrap_or_default();
                let _ = writeln!(csv, "{},{f}", r.epoch);
            }
            write_file(&run_dir.join("forces.csv"), &csv)?;
        }
        ExportWhat::Ablation => {
            // expects one completed run per arm in subdirectories
            let mut subdirs: Vec<PathBuf> = std::fs::read_dir(run_dir)
                .map_err(|e| usage(format!("reading {}: {e}", run_dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir() && p.join("history.json").exists())
                .collect();
            subdirs.sort();
            if subdirs.is_empty() {
                return Err(usage(format!(
                    "{} has no run subdirectories with history.json",
                    run_dir.display()
                )));
            }
            let arms: Vec<AblationArm> = subdirs
                .iter()
                .map(|d| arm_from_run(d))
                .collect::<Result<_, _>>()?;
            let task = load_run_config(&subdirs[0])?.task.name().to_string();
            let report = AblationReport { task, arms };
            write_file(&run_dir.join("ablation.csv"), &report.to_csv())?;
        }
    }
    println!("export written to {}", run_dir.display());
    Ok(())
}
