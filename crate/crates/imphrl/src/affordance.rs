//! Affordance-coupled reward shaping.
//!
//! Position affordance: a_pos = max over keypoints of
//! 1 - tanh(max(||theta - kappa|| - tau, 0)). The stiffness affordance uses
//! the same tanh falloff over normalized stiffness so that compliant,
//! well-placed calls score highest; the two multiply into the coupling term.
//! Atomic actions and gripper release are always afforded 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{PrimitiveCall, PrimitiveId};
use crate::sim::{Vec3, NUM_AXES};

#[derive(Debug, Error)]
pub enum AffordanceError {
    #[error("no keypoints configured and no fallback centroid available")]
    NoKeypoints,
}

/// Keypoint set and shaping constants for one environment step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffordanceContext {
    /// Task-relevant keypoints, refreshed per step by the environment.
    pub keypoints: Vec<Vec3>,
    /// Affordance radius tau, m.
    pub tau: f64,
    /// Normalized stiffness below which the stiffness affordance saturates at 1.
    pub k_floor: f64,
    /// Falloff scale of the stiffness affordance, in normalized units.
    pub k_scale: f64,
    /// Affordance score scale lambda.
    pub lambda_aff: f64,
    /// Environment reward scale.
    pub reward_scale: f64,
    /// Global stiffness bounds used for normalization.
    pub k_min: [f64; NUM_AXES],
    pub k_max: [f64; NUM_AXES],
}

impl Default for AffordanceContext {
    fn default() -> Self {
        Self {
            keypoints: Vec::new(),
            tau: 0.05,
            k_floor: 0.05,
            k_scale: 1.0 / 3.0,
            lambda_aff: 10.0,
            reward_scale: 5.0,
            k_min: [10.0, 10.0, 10.0, 1.0],
            k_max: [500.0, 500.0, 500.0, 50.0],
        }
    }
}

/// a_pos(theta) per the keypoint affordance; 1 inside the tau-ball around
/// any keypoint, decaying with tanh of the excess distance.
pub fn position_affordance(
    theta_pos: &Vec3,
    ctx: &AffordanceContext,
) -> Result<f64, AffordanceError> {
    if ctx.keypoints.is_empty() {
        return Err(AffordanceError::NoKeypoints);
    }
    let mut best: f64 = 0.0;
    for kappa in &ctx.keypoints {
        let d = (theta_pos - kappa).norm();
        let a = 1.0 - ((d - ctx.tau).max(0.0)).tanh();
        best = best.max(a);
    }
    Ok(best)
}

/// Mean per-axis compliance score over normalized stiffness: 1 at or below
/// the floor, strictly decreasing above it.
pub fn stiffness_affordance(stiffness: &[f64; NUM_AXES], ctx: &AffordanceContext) -> f64 {
    let mut sum = 0.0;
    for i in 0..NUM_AXES {
        let k_hat = (stiffness[i] - ctx.k_min[i]) / (ctx.k_max[i] - ctx.k_min[i]);
        sum += 1.0 - (((k_hat - ctx.k_floor).max(0.0)) / ctx.k_scale).tanh();
    }
    sum / NUM_AXES as f64
}

/// Position x stiffness coupling; atomic actions and gripper release are
/// always afforded 1.
pub fn affordance_coupling(
    call: &PrimitiveCall,
    ctx: &AffordanceContext,
) -> Result<f64, AffordanceError> {
    match call.id {
        PrimitiveId::Atomic => Ok(1.0),
        PrimitiveId::GripperToggle if !call.gripper => Ok(1.0),
        _ => Ok(position_affordance(&call.pos, ctx)? * stiffness_affordance(&call.stiffness, ctx)),
    }
}

/// Training reward: scaled environment reward plus the affordance bonus,
/// credited once per primitive execution.
pub fn shaped_reward(
    env_reward: f64,
    call: &PrimitiveCall,
    ctx: &AffordanceContext,
) -> Result<f64, AffordanceError> {
    Ok(ctx.reward_scale * env_reward + ctx.lambda_aff * affordance_coupling(call, ctx)?)
}

/// Coupling values over a (distance, uniform normalized stiffness) grid; the
/// data behind the heatmap export.
pub fn coupling_grid(
    ctx: &AffordanceContext,
    distances: &[f64],
    stiffness_fracs: &[f64],
) -> Vec<(f64, f64, f64)> {
    let mut rows = Vec::with_capacity(distances.len() * stiffness_fracs.len());
    for &d in distances {
        let a_pos = 1.0 - ((d - ctx.tau).max(0.0)).tanh();
        for &f in stiffness_fracs {
            let mut k = [0.0; NUM_AXES];
            for i in 0..NUM_AXES {
                k[i] = ctx.k_min[i] + f * (ctx.k_max[i] - ctx.k_min[i]);
            }
            rows.push((d, f, a_pos * stiffness_affordance(&k, ctx)));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ctx_with(keypoints: Vec<Vec3>) -> AffordanceContext {
        AffordanceContext {
            keypoints,
            ..Default::default()
        }
    }

    fn call(id: PrimitiveId, pos: Vec3, stiffness: [f64; 4], gripper: bool) -> PrimitiveCall {
        PrimitiveCall {
            id,
            pos,
            yaw: 0.0,
            delta: Vec3::zeros(),
            gripper,
            stiffness,
        }
    }

    #[test]
    fn inside_tau_ball_is_one() {
        let ctx = ctx_with(vec![Vec3::new(0.1, 0.0, 0.0)]);
        let a = position_affordance(&Vec3::new(0.1 + ctx.tau * 0.9, 0.0, 0.0), &ctx).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn one_meter_past_tau_matches_tanh() {
        let ctx = ctx_with(vec![Vec3::zeros()]);
        let a = position_affordance(&Vec3::new(ctx.tau + 1.0, 0.0, 0.0), &ctx).unwrap();
        assert_abs_diff_eq!(a, 1.0 - 1f64.tanh(), epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.23840584, epsilon = 1e-8);
    }

    #[test]
    fn max_over_keypoints_dominates() {
        let ctx = ctx_with(vec![Vec3::new(1.0 + 0.05, 0.0, 0.0), Vec3::zeros()]);
        // distances tau+1 and 0 from the origin: the closer keypoint wins
        let a = position_affordance(&Vec3::zeros(), &ctx).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_keypoints_is_error() {
        let ctx = ctx_with(vec![]);
        assert!(position_affordance(&Vec3::zeros(), &ctx).is_err());
    }

    #[test]
    fn stiffness_affordance_saturation_and_falloff() {
        let mut ctx = ctx_with(vec![Vec3::zeros()]);
        assert_abs_diff_eq!(stiffness_affordance(&ctx.k_min, &ctx), 1.0, epsilon = 1e-15);

        ctx.k_floor = 0.0;
        ctx.k_scale = 1.0 / 3.0;
        let a = stiffness_affordance(&ctx.k_max, &ctx);
        assert_abs_diff_eq!(a, 1.0 - 3f64.tanh(), epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.00494, epsilon = 1e-5);
    }

    #[test]
    fn coupling_exemptions_and_product() {
        let ctx = ctx_with(vec![Vec3::zeros()]);
        let a = affordance_coupling(
            &call(PrimitiveId::Atomic, Vec3::new(9.0, 9.0, 9.0), ctx.k_max, false),
            &ctx,
        )
        .unwrap();
        assert_eq!(a, 1.0);
        let a = affordance_coupling(
            &call(
                PrimitiveId::GripperToggle,
                Vec3::new(9.0, 9.0, 9.0),
                ctx.k_max,
                false,
            ),
            &ctx,
        )
        .unwrap();
        assert_eq!(a, 1.0);

        // reach at a keypoint with minimal stiffness: both factors 1
        let a = affordance_coupling(
            &call(PrimitiveId::Reach, Vec3::zeros(), ctx.k_min, false),
            &ctx,
        )
        .unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn coupling_product_of_oracles() {
        let mut ctx = ctx_with(vec![Vec3::zeros()]);
        ctx.k_floor = 0.0;
        ctx.k_scale = 1.0 / 3.0;
        let a = affordance_coupling(
            &call(
                PrimitiveId::Reach,
                Vec3::new(ctx.tau + 1.0, 0.0, 0.0),
                ctx.k_max,
                false,
            ),
            &ctx,
        )
        .unwrap();
        let expect = (1.0 - 1f64.tanh()) * (1.0 - 3f64.tanh());
        assert_abs_diff_eq!(a, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.001178, epsilon = 1e-5);
    }

    #[test]
    fn shaped_reward_composition() {
        let ctx = ctx_with(vec![Vec3::zeros()]);
        let c = call(PrimitiveId::Atomic, Vec3::zeros(), ctx.k_min, false);
        assert_abs_diff_eq!(shaped_reward(0.0, &c, &ctx).unwrap(), 10.0, epsilon = 1e-12);
        let far = call(
            PrimitiveId::Reach,
            Vec3::new(100.0, 0.0, 0.0),
            ctx.k_max,
            false,
        );
        let r = shaped_reward(1.0, &far, &ctx).unwrap();
        assert!((r - 5.0).abs() < 1e-3, "r={r}");
    }

    proptest! {
        #[test]
        fn affordances_stay_in_unit_range(
            px in -2.0..2.0f64, py in -2.0..2.0f64, pz in -0.5..1.0f64,
            kx in 10.0..500.0f64, ky in 10.0..500.0f64, kz in 10.0..500.0f64,
            kyaw in 1.0..50.0f64,
            idx in 0usize..5, grip in proptest::bool::ANY,
        ) {
            let ctx = ctx_with(vec![Vec3::new(0.1, -0.1, 0.02)]);
            let c = call(
                PrimitiveId::from_index(idx),
                Vec3::new(px, py, pz),
                [kx, ky, kz, kyaw],
                grip,
            );
            let a_pos = position_affordance(&c.pos, &ctx).unwrap();
            let a_stiff = stiffness_affordance(&c.stiffness, &ctx);
            let coup = affordance_coupling(&c, &ctx).unwrap();
            prop_assert!((0.0..=1.0).contains(&a_pos));
            prop_assert!((0.0..=1.0).contains(&a_stiff));
            prop_assert!((0.0..=1.0).contains(&coup));
            // product dominance for non-exempt primitives
            if !matches!(c.id, PrimitiveId::Atomic | PrimitiveId::GripperToggle) {
                prop_assert!(coup <= a_pos.min(a_stiff) + 1e-12);
            }
        }

        #[test]
        fn raising_stiffness_never_raises_affordance(
            k in 10.0..499.0f64, bump in 0.1..100.0f64, axis in 0usize..4,
        ) {
            let ctx = ctx_with(vec![Vec3::zeros()]);
            let base = [k, k, k, 1.0 + (k - 10.0) * 49.0 / 490.0];
            let mut hi = base;
            hi[axis] = (hi[axis] + bump).min(ctx.k_max[axis]);
            prop_assert!(
                stiffness_affordance(&hi, &ctx) <= stiffness_affordance(&base, &ctx) + 1e-12
            );
        }
    }
}
