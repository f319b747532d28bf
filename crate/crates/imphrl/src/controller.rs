//! Adaptive variable-stiffness control.
//!
//! Stiffness rises with tracking error and falls with actuation power,
//! K' = beta |eps| - gamma_e P, integrated per axis at the control tick and
//! clamped to the configured bounds. Damping always sits on the critical
//! damping locus and is recomputed after every stiffness update. The module
//! also carries the calibration pipeline that fits beta and gamma_e from
//! demonstration trajectories by linear least squares.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{wrap_angle, Pose4, Vec3, NUM_AXES};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("critical damping requires positive stiffness, got {0}")]
    NonPositiveStiffness(f64),
    #[error("degenerate force thresholds: f_hi ({f_hi}) must exceed f_lo ({f_lo})")]
    DegenerateThresholds { f_lo: f64, f_hi: f64 },
    #[error("demonstration '{demo}' has zero-information regressors; cannot fit")]
    FitDegenerate { demo: String },
    #[error("no demonstrations given")]
    NoDemonstrations,
    #[error("demonstration file {path}:{line}: {msg}")]
    DemoParse {
        path: String,
        line: usize,
        msg: String,
    },
}

/// Gains of the stiffness adaptation law plus the clamp bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptiveParams {
    /// Error-to-stiffness-rate gain, >= 0.
    pub beta: f64,
    /// Power-to-stiffness-rate gain, >= 0. Named gamma_e to keep it apart
    /// from the discount factor.
    pub gamma_e: f64,
    pub k_min: [f64; NUM_AXES],
    pub k_max: [f64; NUM_AXES],
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            beta: 2000.0,
            gamma_e: 600.0,
            k_min: [10.0, 10.0, 10.0, 1.0],
            k_max: [500.0, 500.0, 500.0, 50.0],
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.beta < 0.0 || self.gamma_e < 0.0 {
            return Err("beta and gamma_e must be non-negative".into());
        }
        for i in 0..NUM_AXES {
            if self.k_min[i] <= 0.0 || self.k_min[i] >= self.k_max[i] {
                return Err(format!(
                    "stiffness bounds must satisfy 0 < k_min < k_max on axis {i}"
                ));
            }
        }
        Ok(())
    }
}

/// Whether primitives run the adaptation law or hold the policy's stiffness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlMode {
    Adaptive,
    StaticStiffness,
}

/// Live controller variables for one primitive execution.
#[derive(Clone, Copy, Debug)]
pub struct ControllerState {
    pub k: [f64; NUM_AXES],
    /// Per-axis feedback error, m / rad.
    pub eps: [f64; NUM_AXES],
    /// Instantaneous actuation power, W.
    pub power: f64,
    pub setpoint: Pose4,
    pub target: Pose4,
}

impl ControllerState {
    pub fn new(k: [f64; NUM_AXES], start: Pose4, target: Pose4) -> Self {
        Self {
            k,
            eps: [0.0; NUM_AXES],
            power: 0.0,
            setpoint: start,
            target,
        }
    }
}

/// One explicit-Euler step of K' = beta |eps| - gamma_e P, clamped per axis.
pub fn adapt_stiffness(cs: &ControllerState, params: &AdaptiveParams, dt: f64) -> ControllerState {
    debug_assert!(dt > 0.0);
    let mut next = *cs;
    for i in 0..NUM_AXES {
        let rate = params.beta * cs.eps[i].abs() - params.gamma_e * cs.power;
        next.k[i] = (cs.k[i] + dt * rate).clamp(params.k_min[i], params.k_max[i]);
    }
    next
}

/// Critically damped gains: d_i = 2 sqrt(k_i m_i), with the yaw axis using
/// the rotational inertia.
pub fn critical_damping(
    k: &[f64; NUM_AXES],
    m_eff: f64,
    yaw_inertia: f64,
) -> Result<[f64; NUM_AXES], ControllerError> {
    let mut d = [0.0; NUM_AXES];
    for i in 0..NUM_AXES {
        if k[i] <= 0.0 {
            return Err(ControllerError::NonPositiveStiffness(k[i]));
        }
        let m = if i == 3 { yaw_inertia } else { m_eff };
        d[i] = 2.0 * (k[i] * m).sqrt();
    }
    Ok(d)
}

/// Moves the setpoint toward the target by at most `max_step` of translation,
/// scaling the yaw advance by the same fraction. Snaps exactly onto the
/// target once within one step.
pub fn interpolate_setpoint(cs: &ControllerState, max_step: f64) -> ControllerState {
    debug_assert!(max_step > 0.0);
    let mut next = *cs;
    let delta = cs.target.pos - cs.setpoint.pos;
    let dyaw = wrap_angle(cs.target.yaw - cs.setpoint.yaw);
    let dist = delta.norm();
    if dist <= max_step {
        next.setpoint = cs.target;
    } else {
        let f = max_step / dist;
        next.setpoint.pos += delta * f;
        next.setpoint.yaw = wrap_angle(cs.setpoint.yaw + dyaw * f);
    }
    next
}

/// Affine force-to-stiffness map from the calibration procedure. The input
/// force is clamped to [f_lo, f_hi] before mapping.
pub fn normalize_stiffness(
    f: f64,
    f_lo: f64,
    f_hi: f64,
    k_lo: f64,
    k_hi: f64,
) -> Result<f64, ControllerError> {
    if f_hi <= f_lo || k_hi <= k_lo {
        return Err(ControllerError::DegenerateThresholds { f_lo, f_hi });
    }
    let f = f.clamp(f_lo, f_hi);
    Ok(k_lo + (k_hi - k_lo) * (f - f_lo) / (f_hi - f_lo))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DemoKind {
    Reach,
    Push,
    Atomic,
}

/// One sample of a kinesthetic-style demonstration: interaction force,
/// displacement from the target, and the observed stiffness rate.
#[derive(Clone, Copy, Debug)]
pub struct DemoSample {
    pub time: f64,
    pub force: Vec3,
    pub disp: Vec3,
    pub kdot: Vec3,
}

#[derive(Clone, Debug)]
pub struct Demonstration {
    pub name: String,
    pub kind: DemoKind,
    pub samples: Vec<DemoSample>,
}

impl Demonstration {
    pub fn validate(&self) -> Result<(), String> {
        if self.samples.len() < 10 {
            return Err(format!(
                "demonstration '{}' needs >= 10 samples, has {}",
                self.name,
                self.samples.len()
            ));
        }
        for w in self.samples.windows(2) {
            if w[1].time <= w[0].time {
                return Err(format!(
                    "demonstration '{}': timestamps not strictly increasing at t={}",
                    self.name, w[1].time
                ));
            }
        }
        Ok(())
    }

    /// Loads the `time,fx,fy,fz,dx,dy,dz,kdot_x,kdot_y,kdot_z` CSV format.
    pub fn load_csv(path: &Path) -> Result<Self, ControllerError> {
        let pstr = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| ControllerError::DemoParse {
            path: pstr.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
        let reader = std::io::BufReader::new(file);
        let mut samples = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| ControllerError::DemoParse {
                path: pstr.clone(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            if lineno == 0 {
                let expect = "time,fx,fy,fz,dx,dy,dz,kdot_x,kdot_y,kdot_z";
                if line.trim() != expect {
                    return Err(ControllerError::DemoParse {
                        path: pstr,
                        line: 1,
                        msg: format!("expected header '{expect}'"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ControllerError::DemoParse {
                    path: pstr.clone(),
                    line: lineno + 1,
                    msg: e.to_string(),
                })?;
            if fields.len() != 10 {
                return Err(ControllerError::DemoParse {
                    path: pstr,
                    line: lineno + 1,
                    msg: format!("expected 10 fields, got {}", fields.len()),
                });
            }
            samples.push(DemoSample {
                time: fields[0],
                force: Vec3::new(fields[1], fields[2], fields[3]),
                disp: Vec3::new(fields[4], fields[5], fields[6]),
                kdot: Vec3::new(fields[7], fields[8], fields[9]),
            });
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| pstr.clone());
        let kind = if name.contains("push") {
            DemoKind::Push
        } else if name.contains("atomic") {
            DemoKind::Atomic
        } else {
            DemoKind::Reach
        };
        let demo = Self {
            name: name.clone(),
            kind,
            samples,
        };
        demo.validate().map_err(|msg| ControllerError::DemoParse {
            path: pstr,
            line: 0,
            msg,
        })?;
        Ok(demo)
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "time,fx,fy,fz,dx,dy,dz,kdot_x,kdot_y,kdot_z")?;
        for s in &self.samples {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{}",
                s.time,
                s.force.x,
                s.force.y,
                s.force.z,
                s.disp.x,
                s.disp.y,
                s.disp.z,
                s.kdot.x,
                s.kdot.y,
                s.kdot.z
            )?;
        }
        Ok(())
    }
}

/// Regressor rows (|eps|, P) shared by the fitter and the synthetic demo
/// generator, so generate-then-recover is exact by construction. Velocity is
/// a central difference of the displacement trace; power is |F . v|.
pub fn demo_regressors(demo: &Demonstration) -> Vec<(f64, f64, f64)> {
    let n = demo.samples.len();
    let mut rows = Vec::with_capacity(3 * n);
    for i in 0..n {
        let s = &demo.samples[i];
        let v = if n < 2 {
            Vec3::zeros()
        } else if i == 0 {
            (demo.samples[1].disp - s.disp) / (demo.samples[1].time - s.time)
        } else if i == n - 1 {
            (s.disp - demo.samples[i - 1].disp) / (s.time - demo.samples[i - 1].time)
        } else {
            (demo.samples[i + 1].disp - demo.samples[i - 1].disp)
                / (demo.samples[i + 1].time - demo.samples[i - 1].time)
        };
        let power = s.force.dot(&v).abs();
        for axis in 0..3 {
            rows.push((s.disp[axis].abs(), power, s.kdot[axis]));
        }
    }
    rows
}

/// Fit result: averaged parameters plus per-demonstration diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub beta: f64,
    pub gamma_e: f64,
    pub per_demo: Vec<DemoFit>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemoFit {
    pub name: String,
    pub beta: f64,
    pub gamma_e: f64,
    pub mse: f64,
}

/// Closed-form two-variable least squares of K' ~ beta |eps| - gamma_e P per
/// demonstration, averaged across demonstrations.
pub fn fit_adaptive_params(demos: &[Demonstration]) -> Result<FitReport, ControllerError> {
    if demos.is_empty() {
        return Err(ControllerError::NoDemonstrations);
    }
    let mut per_demo = Vec::with_capacity(demos.len());
    for demo in demos {
        let rows = demo_regressors(demo);
        // normal equations for [beta, gamma_e] with design [e, -p]
        let (mut see, mut sep, mut spp, mut sek, mut spk) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(e, p, k) in &rows {
            see += e * e;
            sep += e * p;
            spp += p * p;
            sek += e * k;
            spk += p * k;
        }
        let det = see * spp - sep * sep;
        let scale = (see * spp).max(see).max(spp);
        if scale <= 0.0 || det.abs() <= 1e-12 * scale.max(1e-300) {
            return Err(ControllerError::FitDegenerate {
                demo: demo.name.clone(),
            });
        }
        let beta = ((spp * sek) + (sep * -spk)) / det;
        let gamma_e = ((sep * sek) + (see * -spk)) / det;
        let beta = beta.max(0.0);
        let gamma_e = gamma_e.max(0.0);
        let mse = rows
            .iter()
            .map(|&(e, p, k)| {
                let pred = beta * e - gamma_e * p;
                (pred - k).powi(2)
            })
            .sum::<f64>()
            / rows.len() as f64;
        per_demo.push(DemoFit {
            name: demo.name.clone(),
            beta,
            gamma_e,
            mse,
        });
    }
    let n = per_demo.len() as f64;
    Ok(FitReport {
        beta: per_demo.iter().map(|d| d.beta).sum::<f64>() / n,
        gamma_e: per_demo.iter().map(|d| d.gamma_e).sum::<f64>() / n,
        per_demo,
    })
}

/// Builds a synthetic demonstration whose stiffness rates follow the
/// adaptation law exactly for the given parameters. Gaussian noise of
/// `noise_sigma` (relative to the K' range) can be added to the rates.
pub fn synth_demo(
    kind: DemoKind,
    name: &str,
    beta: f64,
    gamma_e: f64,
    n_samples: usize,
    dt: f64,
    noise_sigma: f64,
    rng: &mut impl rand::Rng,
) -> Demonstration {
    use rand_distr::{Distribution, Normal};
    let mut samples = Vec::with_capacity(n_samples);
    // random per-demo trajectory shape so the regressors differ across demos
    let amp = Vec3::new(
        0.05 + 0.1 * rng.gen::<f64>(),
        0.05 + 0.1 * rng.gen::<f64>(),
        0.02 + 0.05 * rng.gen::<f64>(),
    );
    let decay = 1.0 + 2.0 * rng.gen::<f64>();
    let fscale = 20.0 + 40.0 * rng.gen::<f64>();
    for i in 0..n_samples {
        let t = i as f64 * dt;
        let disp = match kind {
            // decaying approach toward the target
            DemoKind::Reach => amp * (-decay * t).exp(),
            // approach followed by a sustained offset while pushing
            DemoKind::Push => amp * (0.3 + 0.7 * (-decay * t).exp()),
            // short bounded excursion
            DemoKind::Atomic => amp * 0.2 * (1.5 * t).sin().abs(),
        };
        let force = Vec3::new(
            fscale * disp.x,
            fscale * disp.y,
            fscale * (disp.z + 0.2 * (3.0 * t).cos().abs()),
        );
        samples.push(DemoSample {
            time: t,
            force,
            disp,
            kdot: Vec3::zeros(),
        });
    }
    let mut demo = Demonstration {
        name: name.to_string(),
        kind,
        samples,
    };
    // rates follow the law on the exact regressors the fitter will rebuild
    let rows = demo_regressors(&demo);
    let mut kmin = f64::INFINITY;
    let mut kmax = f64::NEG_INFINITY;
    for (i, s) in demo.samples.iter_mut().enumerate() {
        for axis in 0..3 {
            let (e, p, _) = rows[3 * i + axis];
            let kd = beta * e - gamma_e * p;
            s.kdot[axis] = kd;
            kmin = kmin.min(kd);
            kmax = kmax.max(kd);
        }
    }
    if noise_sigma > 0.0 {
        let sigma = noise_sigma * (kmax - kmin).max(1e-12);
        let normal = Normal::new(0.0, sigma).unwrap();
        for s in &mut demo.samples {
            for axis in 0..3 {
                s.kdot[axis] += normal.sample(rng);
            }
        }
    }
    demo
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn params() -> AdaptiveParams {
        AdaptiveParams::default()
    }

    fn cs(k: [f64; 4]) -> ControllerState {
        ControllerState::new(k, Pose4::new(0.0, 0.0, 0.2, 0.0), Pose4::new(0.1, 0.0, 0.2, 0.0))
    }

    #[test]
    fn adaptation_matches_law() {
        // beta=10, |eps|=0.5, gamma=1, P=2 -> K' = 3
        let p = AdaptiveParams {
            beta: 10.0,
            gamma_e: 1.0,
            k_min: [1.0; 4],
            k_max: [1000.0; 4],
        };
        let mut c = cs([100.0; 4]);
        c.eps = [0.5; 4];
        c.power = 2.0;
        let next = adapt_stiffness(&c, &p, 0.1);
        for i in 0..4 {
            assert_abs_diff_eq!(next.k[i], 100.0 + 0.1 * 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_error_decays_to_floor() {
        let p = params();
        let mut c = cs([50.0, 50.0, 50.0, 20.0]);
        c.eps = [0.0; 4];
        c.power = 5.0;
        for _ in 0..100_000 {
            let prev = c.k;
            c = adapt_stiffness(&c, &p, 0.002);
            for i in 0..4 {
                assert!(c.k[i] <= prev[i]);
            }
        }
        for i in 0..4 {
            assert_abs_diff_eq!(c.k[i], p.k_min[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn stiffness_stays_bounded_under_adversarial_inputs() {
        let p = params();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut c = cs([100.0; 4]);
        for _ in 0..20_000 {
            use rand::Rng;
            c.eps = [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            ];
            c.power = rng.gen_range(0.0..500.0);
            c = adapt_stiffness(&c, &p, 0.002);
            for i in 0..4 {
                assert!(c.k[i] >= p.k_min[i] && c.k[i] <= p.k_max[i]);
            }
        }
    }

    #[test]
    fn monotone_response_in_error_and_power() {
        let p = params();
        let mut lo = cs([100.0; 4]);
        lo.eps = [0.1; 4];
        lo.power = 1.0;
        let mut hi = lo;
        hi.eps = [0.3; 4];
        let (a, b) = (adapt_stiffness(&lo, &p, 0.002), adapt_stiffness(&hi, &p, 0.002));
        for i in 0..4 {
            assert!(b.k[i] >= a.k[i]);
        }
        let mut hp = lo;
        hp.power = 10.0;
        let c = adapt_stiffness(&hp, &p, 0.002);
        for i in 0..4 {
            assert!(c.k[i] <= a.k[i]);
        }
    }

    #[test]
    fn critical_damping_values() {
        let d = critical_damping(&[100.0, 100.0, 100.0, 100.0], 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(d[0], 20.0, epsilon = 1e-12);
        let d = critical_damping(&[250.0, 250.0, 250.0, 250.0], 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(d[0], 31.6228, epsilon = 1e-4);
        assert!(critical_damping(&[0.0, 1.0, 1.0, 1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn damping_coupling_exact_after_update() {
        let p = params();
        let mut c = cs([123.0, 77.0, 489.0, 12.0]);
        c.eps = [0.2, 0.0, 0.1, 0.05];
        c.power = 3.0;
        c = adapt_stiffness(&c, &p, 0.002);
        let d = critical_damping(&c.k, 1.0, 0.05).unwrap();
        for i in 0..4 {
            let m = if i == 3 { 0.05 } else { 1.0 };
            assert_abs_diff_eq!(d[i] * d[i], 4.0 * c.k[i] * m, epsilon = 1e-9);
        }
    }

    #[test]
    fn interpolation_counts_ticks() {
        let mut c = cs([100.0; 4]);
        c.setpoint = Pose4::new(0.0, 0.0, 0.2, 0.0);
        c.target = Pose4::new(0.1, 0.0, 0.2, 0.0);
        let mut ticks = 0;
        while (c.setpoint.pos - c.target.pos).norm() > 0.0 {
            let prev = c.setpoint.pos;
            c = interpolate_setpoint(&c, 0.002);
            let step = (c.setpoint.pos - prev).norm();
            assert!(step <= 0.002 + 1e-12);
            ticks += 1;
            assert!(ticks <= 51);
        }
        assert_eq!(ticks, 50);
    }

    #[test]
    fn interpolation_edge_cases() {
        let mut c = cs([100.0; 4]);
        c.target = c.setpoint;
        let next = interpolate_setpoint(&c, 0.002);
        assert_eq!(next.setpoint, c.setpoint);

        c.target = Pose4::new(0.001, 0.0, 0.2, 0.3);
        let next = interpolate_setpoint(&c, 0.002);
        assert_eq!(next.setpoint, c.target);
    }

    #[test]
    fn normalize_stiffness_boundaries() {
        assert_abs_diff_eq!(
            normalize_stiffness(0.0, 0.0, 10.0, 10.0, 500.0).unwrap(),
            10.0
        );
        assert_abs_diff_eq!(
            normalize_stiffness(10.0, 0.0, 10.0, 10.0, 500.0).unwrap(),
            500.0
        );
        assert_abs_diff_eq!(
            normalize_stiffness(5.0, 0.0, 10.0, 10.0, 500.0).unwrap(),
            255.0
        );
        // clamped outside the thresholds
        assert_abs_diff_eq!(
            normalize_stiffness(-3.0, 0.0, 10.0, 10.0, 500.0).unwrap(),
            10.0
        );
        assert!(normalize_stiffness(1.0, 5.0, 5.0, 10.0, 500.0).is_err());
    }

    #[test]
    fn fit_recovers_noiseless_parameters() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let (beta, gamma_e) = (8.0, 0.5);
        let demos: Vec<_> = (0..5)
            .map(|i| {
                synth_demo(
                    DemoKind::Reach,
                    &format!("reach_{i}"),
                    beta,
                    gamma_e,
                    200,
                    0.01,
                    0.0,
                    &mut rng,
                )
            })
            .collect();
        let fit = fit_adaptive_params(&demos).unwrap();
        assert!((fit.beta - beta).abs() / beta < 1e-6);
        assert!((fit.gamma_e - gamma_e).abs() / gamma_e < 1e-6);
        for d in &fit.per_demo {
            assert!(d.mse < 1e-12);
        }
    }

    #[test]
    fn fit_recovers_under_noise() {
        let (beta, gamma_e) = (8.0, 0.5);
        let mut ok = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let demos: Vec<_> = (0..15)
                .map(|i| {
                    let kind = match i % 3 {
                        0 => DemoKind::Reach,
                        1 => DemoKind::Push,
                        _ => DemoKind::Atomic,
                    };
                    synth_demo(
                        kind,
                        &format!("demo_{i}"),
                        beta,
                        gamma_e,
                        300,
                        0.01,
                        0.05,
                        &mut rng,
                    )
                })
                .collect();
            let fit = fit_adaptive_params(&demos).unwrap();
            if (fit.beta - beta).abs() / beta < 0.05 && (fit.gamma_e - gamma_e).abs() / gamma_e < 0.05
            {
                ok += 1;
            }
        }
        assert!(ok >= 19, "only {ok}/20 seeds recovered within 5%");
    }

    #[test]
    fn degenerate_demo_is_rejected() {
        let samples: Vec<_> = (0..20)
            .map(|i| DemoSample {
                time: i as f64 * 0.01,
                force: Vec3::zeros(),
                disp: Vec3::zeros(),
                kdot: Vec3::zeros(),
            })
            .collect();
        let demo = Demonstration {
            name: "flat".into(),
            kind: DemoKind::Reach,
            samples,
        };
        match fit_adaptive_params(&[demo]) {
            Err(ControllerError::FitDegenerate { demo }) => assert_eq!(demo, "flat"),
            other => panic!("expected FitDegenerate, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let demo = synth_demo(DemoKind::Push, "push_0", 8.0, 0.5, 50, 0.01, 0.0, &mut rng);
        let path = dir.path().join("push_0.csv");
        demo.write_csv(&path).unwrap();
        let loaded = Demonstration::load_csv(&path).unwrap();
        assert_eq!(loaded.kind, DemoKind::Push);
        assert_eq!(loaded.samples.len(), demo.samples.len());
        let fit_a = fit_adaptive_params(&[demo]).unwrap();
        let fit_b = fit_adaptive_params(&[loaded]).unwrap();
        assert!((fit_a.beta - fit_b.beta).abs() < 1e-9);
    }

    #[test]
    fn bad_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "time,fx,fy,fz,dx,dy,dz,kdot_x,kdot_y,kdot_z\n0.0,1,2,3,4,5,6,7,8,oops\n",
        )
        .unwrap();
        match Demonstration::load_csv(&path) {
            Err(ControllerError::DemoParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
