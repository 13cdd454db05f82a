//! Grasp assessment: quasi-static wrench feasibility under the six axis
//! loads, per-keypoint contact error, and joint-angle diversity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{PointCloud, Vec3};
use crate::inference::GraspProposal;
use crate::kinematics::{keypoint_positions, EndEffectorModel, KinematicsError, Pose, NUM_KEYPOINTS};
use crate::solver::{solve_lp, LinearProgram};

pub const LP_TOLERANCE: f64 = 1e-9;

/// Axis directions in report order: +x, −x, +y, −y, +z, −z.
pub const AXIS_DIRECTIONS: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

pub const DIRECTION_LABELS: [&str; 6] = ["px", "nx", "py", "ny", "pz", "nz"];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("contact {0} has a zero normal")]
    DegenerateContact(usize),
    #[error("no contacts given")]
    NoContacts,
    #[error("diversity needs at least two poses, got {0}")]
    TooFewPoses(usize),
    #[error("pose {index} has {got} joints, expected {expected}")]
    JointMismatch { index: usize, expected: usize, got: usize },
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("object cloud has no normals")]
    MissingNormals,
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub friction: f64,
    pub cone_edges: usize,
    /// kg
    pub mass: f64,
    /// m/s²
    pub acceleration: f64,
    /// m
    pub snap_radius: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            friction: 0.5,
            cone_edges: 8,
            mass: 0.1,
            acceleration: 0.5,
            snap_radius: 0.01,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.friction > 0.0) || !self.friction.is_finite() {
            return Err(EvalError::Config(format!("friction {} must be > 0", self.friction)));
        }
        if self.cone_edges < 3 {
            return Err(EvalError::Config(format!("cone_edges {} must be ≥ 3", self.cone_edges)));
        }
        if !(self.mass > 0.0) {
            return Err(EvalError::Config(format!("mass {} must be > 0", self.mass)));
        }
        if !(self.acceleration >= 0.0) || !(self.snap_radius > 0.0) {
            return Err(EvalError::Config("acceleration must be ≥ 0 and snap_radius > 0".into()));
        }
        Ok(())
    }
}

/// A point contact; `normal` points into the object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub point: Vec3,
    pub normal: Vec3,
}

/// Force + torque, torque taken about `reference`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn force(f: Vec3) -> Self {
        Self {
            force: f,
            torque: Vec3::zeros(),
        }
    }

    fn as_vector(&self) -> [f64; 6] {
        [
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        ]
    }
}

/// Unit tangents `(u, v)` with `u ⟂ n`, built from the canonical axis with
/// the smallest `|n_i|` (lowest index on ties).
pub fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let mut axis = 0;
    for i in 1..3 {
        if n[i].abs() < n[axis].abs() {
            axis = i;
        }
    }
    let mut e = Vec3::zeros();
    e[axis] = 1.0;
    let u = (e - n * n.dot(&e)).normalize();
    (u, n.cross(&u))
}

/// Columns are the wrenches of each contact's linearised friction-cone edges.
pub fn grasp_matrix(contacts: &[Contact], reference: &Vec3, cfg: &EvalConfig) -> Result<DMatrix<f64>, EvalError> {
    let e = cfg.cone_edges;
    let mut g = DMatrix::zeros(6, contacts.len() * e);
    for (c, contact) in contacts.iter().enumerate() {
        let norm = contact.normal.norm();
        if !(norm > 1e-12) {
            return Err(EvalError::DegenerateContact(c));
        }
        let n = contact.normal / norm;
        let (u, v) = tangent_basis(&n);
        let arm = contact.point - reference;
        for k in 0..e {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / e as f64;
            let f = n + (u * phi.cos() + v * phi.sin()) * cfg.friction;
            let tau = arm.cross(&f);
            let col = c * e + k;
            for r in 0..3 {
                g[(r, col)] = f[r];
                g[(r + 3, col)] = tau[r];
            }
        }
    }
    Ok(g)
}

/// Whether nonnegative edge forces can cancel the external wrench `w`.
pub fn wrench_feasible(contacts: &[Contact], w: &Wrench, reference: &Vec3, cfg: &EvalConfig) -> Result<bool, EvalError> {
    if contacts.is_empty() {
        return Err(EvalError::NoContacts);
    }
    let g = grasp_matrix(contacts, reference, cfg)?;
    let target = w.as_vector().map(|x| -x);
    let scale = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(true);
    }
    let b = DVector::from_iterator(6, target.iter().map(|x| x / scale));
    let lp = LinearProgram {
        c: DVector::from_element(g.ncols(), 1.0),
        a: g,
        b,
    };
    Ok(solve_lp(&lp, LP_TOLERANCE).is_feasible())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraspOutcome {
    pub success: bool,
    pub resisted: [bool; 6],
    pub contact_errors: [f64; NUM_KEYPOINTS],
    /// Keypoint indices within the snap radius of the object.
    pub active: Vec<usize>,
}

/// Distance of each posed keypoint to its proposed contact.
pub fn contact_error(
    ee: &EndEffectorModel,
    pose: &Pose,
    proposal: &GraspProposal,
) -> Result<[f64; NUM_KEYPOINTS], EvalError> {
    let kp = keypoint_positions(ee, pose)?;
    Ok(std::array::from_fn(|i| (kp[i] - Vec3::from(proposal.coordinates[i])).norm()))
}

/// Snaps keypoints to the object and tests all six axis loads.
/// `contact_errors` is filled by the caller when a proposal is at hand.
pub fn evaluate_grasp(
    object: &PointCloud,
    ee: &EndEffectorModel,
    pose: &Pose,
    cfg: &EvalConfig,
) -> Result<GraspOutcome, EvalError> {
    cfg.validate()?;
    let normals = object.normals().ok_or(EvalError::MissingNormals)?;
    let kp = keypoint_positions(ee, pose)?;
    let mut active = Vec::new();
    let mut contacts = Vec::new();
    for (i, p) in kp.iter().enumerate() {
        if let Some((v, d)) = object.nearest(p) {
            if d <= cfg.snap_radius {
                active.push(i);
                contacts.push(Contact {
                    point: object.points()[v],
                    normal: -normals[v],
                });
            }
        }
    }
    let mut resisted = [false; 6];
    if !contacts.is_empty() {
        let centroid = object.centroid();
        let magnitude = cfg.mass * cfg.acceleration;
        for (slot, dir) in AXIS_DIRECTIONS.iter().enumerate() {
            let w = Wrench::force(Vec3::from(*dir) * magnitude);
            resisted[slot] = wrench_feasible(&contacts, &w, &centroid, cfg)?;
        }
    }
    Ok(GraspOutcome {
        success: active.len() >= 2 && resisted.iter().all(|&r| r),
        resisted,
        contact_errors: [f64::NAN; NUM_KEYPOINTS],
        active,
    })
}

/// Mean over joints of the population standard deviation across poses.
pub fn diversity(poses: &[Pose]) -> Result<f64, EvalError> {
    if poses.len() < 2 {
        return Err(EvalError::TooFewPoses(poses.len()));
    }
    let j = poses[0].theta.len();
    for (index, p) in poses.iter().enumerate() {
        if p.theta.len() != j {
            return Err(EvalError::JointMismatch {
                index,
                expected: j,
                got: p.theta.len(),
            });
        }
    }
    if j == 0 {
        return Ok(0.0);
    }
    let n = poses.len() as f64;
    let total: f64 = (0..j)
        .map(|k| {
            let mean = poses.iter().map(|p| p.theta[k]).sum::<f64>() / n;
            let var = poses.iter().map(|p| (p.theta[k] - mean).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .sum();
    Ok(total / j as f64)
}

/// One row of the evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub object: String,
    pub ee: String,
    pub rank: usize,
    pub success: bool,
    pub active_contacts: usize,
    pub mean_contact_error_mm: f64,
    pub resisted_px: bool,
    pub resisted_nx: bool,
    pub resisted_py: bool,
    pub resisted_ny: bool,
    pub resisted_pz: bool,
    pub resisted_nz: bool,
}

impl EvalRow {
    pub fn new(object: &str, ee: &str, rank: usize, outcome: &GraspOutcome) -> Self {
        let finite: Vec<f64> = outcome.contact_errors.iter().copied().filter(|e| e.is_finite()).collect();
        let mean = if finite.is_empty() {
            f64::NAN
        } else {
            1000.0 * finite.iter().sum::<f64>() / finite.len() as f64
        };
        let r = outcome.resisted;
        Self {
            object: object.into(),
            ee: ee.into(),
            rank,
            success: outcome.success,
            active_contacts: outcome.active.len(),
            mean_contact_error_mm: mean,
            resisted_px: r[0],
            resisted_nx: r[1],
            resisted_py: r[2],
            resisted_ny: r[3],
            resisted_pz: r[4],
            resisted_nz: r[5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EeSummary {
    pub ee: String,
    pub evaluated: usize,
    pub successes: usize,
    pub success_percent: f64,
    /// Radians; absent with fewer than two successful grasps.
    pub diversity_rad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub per_ee: Vec<EeSummary>,
    pub evaluated: usize,
    pub success_percent: f64,
}

/// Groups rows by end-effector (sorted by id); `poses` are the successful
/// poses per end-effector.
pub fn summarize(rows: &[EvalRow], successful_poses: &std::collections::BTreeMap<String, Vec<Pose>>) -> EvalSummary {
    let mut ees: Vec<&str> = rows.iter().map(|r| r.ee.as_str()).collect();
    ees.sort_unstable();
    ees.dedup();
    let percent = |s: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * s as f64 / n as f64 };
    let per_ee = ees
        .into_iter()
        .map(|ee| {
            let evaluated = rows.iter().filter(|r| r.ee == ee).count();
            let successes = rows.iter().filter(|r| r.ee == ee && r.success).count();
            let diversity_rad = successful_poses.get(ee).and_then(|p| diversity(p).ok());
            EeSummary {
                ee: ee.to_string(),
                evaluated,
                successes,
                success_percent: percent(successes, evaluated),
                diversity_rad,
            }
        })
        .collect();
    let successes = rows.iter().filter(|r| r.success).count();
    EvalSummary {
        per_ee,
        evaluated: rows.len(),
        success_percent: percent(successes, rows.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn antipodal_x() -> Vec<Contact> {
        vec![
            Contact {
                point: Vec3::new(1.0, 0.0, 0.0),
                normal: Vec3::new(-1.0, 0.0, 0.0),
            },
            Contact {
                point: Vec3::new(-1.0, 0.0, 0.0),
                normal: Vec3::new(1.0, 0.0, 0.0),
            },
        ]
    }

    #[test]
    fn antipodal_pinch_resists_axis_force() {
        let cfg = EvalConfig::default();
        let w = Wrench::force(Vec3::new(1.0, 0.0, 0.0));
        assert!(wrench_feasible(&antipodal_x(), &w, &Vec3::zeros(), &cfg).unwrap());
    }

    #[test]
    fn single_contact_cannot_pull() {
        let cfg = EvalConfig::default();
        let c = [Contact {
            point: Vec3::new(1.0, 0.0, 0.0),
            normal: Vec3::new(-1.0, 0.0, 0.0),
        }];
        // Load drags the object off the finger; only a pulling force could hold it.
        let w = Wrench::force(Vec3::new(-1.0, 0.0, 0.0));
        assert!(!wrench_feasible(&c, &w, &Vec3::zeros(), &cfg).unwrap());
        // Pressing it into the finger is resisted.
        let w = Wrench::force(Vec3::new(1.0, 0.0, 0.0));
        assert!(wrench_feasible(&c, &w, &Vec3::zeros(), &cfg).unwrap());
        let w = Wrench::force(Vec3::new(-1.0, 0.0, 0.0));
        assert!(!wrench_feasible(&c, &w, &Vec3::zeros(), &cfg).unwrap());
    }

    #[test]
    fn zero_wrench_is_feasible() {
        let cfg = EvalConfig::default();
        let c = &antipodal_x()[..1];
        assert!(wrench_feasible(c, &Wrench::force(Vec3::zeros()), &Vec3::zeros(), &cfg).unwrap());
    }

    #[test]
    fn degenerate_normal_rejected() {
        let cfg = EvalConfig::default();
        let c = [Contact {
            point: Vec3::zeros(),
            normal: Vec3::zeros(),
        }];
        assert!(matches!(
            wrench_feasible(&c, &Wrench::force(Vec3::x()), &Vec3::zeros(), &cfg),
            Err(EvalError::DegenerateContact(0))
        ));
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        for n in [Vec3::x(), Vec3::new(0.3, -0.4, 0.866).normalize(), Vec3::new(0.0, 0.0, -1.0)] {
            let (u, v) = tangent_basis(&n);
            assert!(u.dot(&n).abs() < 1e-12 && v.dot(&n).abs() < 1e-12 && u.dot(&v).abs() < 1e-12);
            assert!((u.norm() - 1.0).abs() < 1e-12 && (v.norm() - 1.0).abs() < 1e-12);
        }
    }

    fn pose(theta: Vec<f64>) -> Pose {
        Pose {
            t: [0.0; 3],
            r6: crate::kinematics::rotation::IDENTITY_R6,
            theta,
        }
    }

    #[test]
    fn diversity_hand_cases() {
        assert_eq!(diversity(&[pose(vec![0.0]), pose(vec![2.0])]).unwrap(), 1.0);
        assert_eq!(diversity(&[pose(vec![0.5, 1.0]), pose(vec![0.5, 1.0])]).unwrap(), 0.0);
        assert!(matches!(diversity(&[pose(vec![1.0])]), Err(EvalError::TooFewPoses(1))));
        assert!(matches!(
            diversity(&[pose(vec![1.0]), pose(vec![1.0, 2.0])]),
            Err(EvalError::JointMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(EvalConfig::default().validate().is_ok());
        let bad = EvalConfig {
            cone_edges: 2,
            ..EvalConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
