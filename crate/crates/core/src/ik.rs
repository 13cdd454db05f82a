//! Pose fitting: bounded least squares from keypoint targets to
//! `(translation, root rotation, joint values)`.
//!
//! The root rotation is searched as an axis-angle increment `ω` applied on
//! top of the heuristic initial rotation, `R = exp(ω)·R₀`, so the starting
//! point is `ω = 0` and the box `[−π, π]³` never clips it.

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::geometry::{PointCloud, Vec3};
use crate::kinematics::rotation::axis_angle_to_matrix;
use crate::kinematics::{
    forward_kinematics_unchecked, heuristic_init_pose, keypoints_from_links, pregrasp_targets, EndEffectorModel,
    KinematicsError, Pose, Transform, DEFAULT_STANDOFF, NUM_KEYPOINTS,
};
use crate::solver::{solve_trf, LeastSquaresProblem, SolveStatus, TrfError, TrfOptions};

/// Half-width of the translation box, meters.
pub const TRANSLATION_BOUND: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum IkError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Solver(#[from] TrfError),
    #[error("target {0} is not finite")]
    NonFiniteTarget(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    pub trf: TrfOptions,
    pub standoff: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            trf: TrfOptions::default(),
            standoff: DEFAULT_STANDOFF,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkResult {
    pub pose: Pose,
    pub residual_norm: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Distance from each keypoint to its target, meters.
    pub per_keypoint: [f64; NUM_KEYPOINTS],
}

struct Layout<'a> {
    ee: &'a EndEffectorModel,
    base_rotation: Matrix3<f64>,
}

impl Layout<'_> {
    fn root(&self, x: &DVector<f64>) -> Transform {
        let omega = Vec3::new(x[3], x[4], x[5]);
        let r = axis_angle_to_matrix(&omega) * self.base_rotation;
        let rot = nalgebra::UnitQuaternion::from_matrix(&r);
        Transform::from_parts(nalgebra::Translation3::new(x[0], x[1], x[2]), rot)
    }

    fn keypoints(&self, x: &DVector<f64>) -> [Vec3; NUM_KEYPOINTS] {
        let theta: Vec<f64> = x.iter().skip(6).copied().collect();
        let links = forward_kinematics_unchecked(&self.ee.chain, &self.root(x), &theta);
        keypoints_from_links(self.ee, &links)
    }

    fn pose(&self, x: &DVector<f64>) -> Result<Pose, KinematicsError> {
        let omega = Vec3::new(x[3], x[4], x[5]);
        let r = axis_angle_to_matrix(&omega) * self.base_rotation;
        Pose::new(Vec3::new(x[0], x[1], x[2]), &r, x.iter().skip(6).copied().collect())
    }
}

fn distances(kp: &[Vec3; NUM_KEYPOINTS], targets: &[Vec3; NUM_KEYPOINTS]) -> [f64; NUM_KEYPOINTS] {
    std::array::from_fn(|i| (kp[i] - targets[i]).norm())
}

/// Fits the pose from an explicit initial guess.
pub fn solve_ik_from(
    ee: &EndEffectorModel,
    targets: &[Vec3; NUM_KEYPOINTS],
    init: &Pose,
    opts: &IkOptions,
) -> Result<IkResult, IkError> {
    if let Some(i) = targets.iter().position(|t| !t.iter().all(|v| v.is_finite())) {
        return Err(IkError::NonFiniteTarget(i));
    }
    let layout = Layout {
        ee,
        base_rotation: init.rotation()?,
    };
    let limits = ee.chain.joint_limits();
    let d = 6 + limits.len();
    let mut lower = DVector::zeros(d);
    let mut upper = DVector::zeros(d);
    let mut x0 = DVector::zeros(d);
    for i in 0..3 {
        lower[i] = -TRANSLATION_BOUND;
        upper[i] = TRANSLATION_BOUND;
        lower[3 + i] = -std::f64::consts::PI;
        upper[3 + i] = std::f64::consts::PI;
        x0[i] = init.t[i];
    }
    for (j, [lo, hi]) in limits.iter().enumerate() {
        lower[6 + j] = *lo;
        upper[6 + j] = *hi;
        x0[6 + j] = init.theta[j];
    }
    let residual = |x: &DVector<f64>| {
        let kp = layout.keypoints(x);
        DVector::from_iterator(3 * NUM_KEYPOINTS, (0..NUM_KEYPOINTS).flat_map(|i| (kp[i] - targets[i]).into_iter().copied().collect::<Vec<_>>()))
    };
    let problem = LeastSquaresProblem::new(residual, lower, upper, x0);
    let sol = solve_trf(&problem, &opts.trf)?;
    let kp = layout.keypoints(&sol.x);
    Ok(IkResult {
        pose: layout.pose(&sol.x)?,
        residual_norm: sol.residual_norm(),
        iterations: sol.iterations,
        status: sol.status,
        per_keypoint: distances(&kp, targets),
    })
}

/// Fits the pose to `targets`, starting from the palm-alignment heuristic.
pub fn solve_ik(
    ee: &EndEffectorModel,
    targets: &[Vec3; NUM_KEYPOINTS],
    object: &PointCloud,
    opts: &IkOptions,
) -> Result<IkResult, IkError> {
    let init = heuristic_init_pose(ee, object, targets, opts.standoff)?;
    solve_ik_from(ee, targets, &init, opts)
}

/// Offsets predicted contact vertices to pre-grasp targets, then fits.
pub fn solve_ik_for_contacts(
    ee: &EndEffectorModel,
    contacts: &[usize; NUM_KEYPOINTS],
    object: &PointCloud,
    opts: &IkOptions,
) -> Result<IkResult, IkError> {
    let targets = pregrasp_targets(contacts, object)?;
    solve_ik(ee, &targets, object, opts)
}

/// One line of the IK report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkReport {
    pub object: String,
    pub ee: String,
    pub rank: usize,
    pub contacts: Vec<usize>,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Absent when the solve raised an error.
    pub residual_norm: Option<f64>,
    pub per_keypoint_mm: Vec<f64>,
    pub pose: Option<Pose>,
}

impl IkReport {
    pub fn from_result(object: &str, ee: &str, rank: usize, contacts: &[usize], r: &IkResult) -> Self {
        Self {
            object: object.into(),
            ee: ee.into(),
            rank,
            contacts: contacts.to_vec(),
            status: r.status,
            iterations: r.iterations,
            residual_norm: Some(r.residual_norm),
            per_keypoint_mm: r.per_keypoint.iter().map(|d| d * 1000.0).collect(),
            pose: Some(r.pose.clone()),
        }
    }

    /// Report for a solve that raised an error instead of returning a pose.
    pub fn failed(object: &str, ee: &str, rank: usize, contacts: &[usize]) -> Self {
        Self {
            object: object.into(),
            ee: ee.into(),
            rank,
            contacts: contacts.to_vec(),
            status: SolveStatus::Failed,
            iterations: 0,
            residual_norm: None,
            per_keypoint_mm: vec![],
            pose: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::toy;
    use crate::kinematics::{keypoint_positions, rest_pose};

    #[test]
    fn recovers_rest_pose_keypoints_from_offset_start() {
        let ee = toy::pincer(64, 3).unwrap();
        let rest = rest_pose(&ee.chain);
        let targets = keypoint_positions(&ee, &rest).unwrap();
        let mut init = rest.clone();
        init.t = [0.01, -0.005, 0.008];
        let r = solve_ik_from(&ee, &targets, &init, &IkOptions::default()).unwrap();
        assert!(r.per_keypoint.iter().all(|d| *d < 1e-6), "{:?}", r.per_keypoint);
        assert_eq!(r.status, SolveStatus::Converged);
    }

    #[test]
    fn translated_targets_shift_translation() {
        let ee = toy::pincer(64, 3).unwrap();
        let rest = rest_pose(&ee.chain);
        let delta = Vec3::new(0.03, -0.02, 0.01);
        let targets = keypoint_positions(&ee, &rest).unwrap().map(|p| p + delta);
        let r = solve_ik_from(&ee, &targets, &rest, &IkOptions::default()).unwrap();
        for i in 0..3 {
            assert!((r.pose.t[i] - delta[i]).abs() < 1e-6);
        }
        for (a, b) in r.pose.theta.iter().zip(&rest.theta) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_target_rejected() {
        let ee = toy::pincer(64, 3).unwrap();
        let rest = rest_pose(&ee.chain);
        let mut targets = keypoint_positions(&ee, &rest).unwrap();
        targets[2].x = f64::NAN;
        assert!(matches!(
            solve_ik_from(&ee, &targets, &rest, &IkOptions::default()),
            Err(IkError::NonFiniteTarget(2))
        ));
    }
}
