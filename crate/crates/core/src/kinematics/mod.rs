//! Kinematic chains, forward kinematics, end-effector keypoints and the
//! pose heuristics that seed inverse kinematics.

pub mod chain_file;
pub mod rotation;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::geometry::{build_knn_graph, GeometryError, GeometryGraph, PointCloud, Vec3};

pub use chain_file::{
    read_chain_file, write_chain_file, ChainFile, JointRecord, KeypointRecord, LinkRecord,
    OriginRecord, PalmRecord,
};
pub use rotation::{
    axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_rot6d, rot6d_to_matrix,
    rotation_between, Rot6, IDENTITY_R6,
};

/// Number of canonical keypoints on every end-effector.
pub const NUM_KEYPOINTS: usize = 6;
/// Outward offset of pre-grasp targets from the object surface.
pub const PREGRASP_OFFSET: f64 = 0.005;
/// Palm standoff of the heuristic initial pose.
pub const DEFAULT_STANDOFF: f64 = 0.02;
/// Tolerance on joint-limit checks.
pub const LIMIT_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum KinematicsError {
    #[error("degenerate 6-D rotation: {0}")]
    DegenerateInput(String),
    #[error("matrix is not a rotation (orthogonality error {0:.3e})")]
    NotARotation(f64),
    #[error("joint {joint} value {value} outside [{lo}, {hi}]")]
    LimitViolation {
        joint: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("expected {expected} joint values, got {got}")]
    JointCount { expected: usize, got: usize },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("invalid end-effector: {0}")]
    InvalidEndEffector(String),
    #[error("object cloud has no normals")]
    MissingNormals,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Transform = Isometry3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    /// Link frame relative to its parent at zero joint value.
    pub origin: Transform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointType,
    pub parent: usize,
    pub child: usize,
    pub axis: Vec3,
    pub limits: [f64; 2],
}

/// Tree of links connected by joints. Joint values are ordered as the
/// non-fixed joints appear in `joints`.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    links: Vec<Link>,
    joints: Vec<Joint>,
    /// Parents before children.
    order: Vec<usize>,
    /// For each link, the joint driving it and its slot in `theta`.
    driver: Vec<Option<(usize, Option<usize>)>>,
    dof: usize,
}

impl KinematicChain {
    pub fn new(links: Vec<Link>, joints: Vec<Joint>) -> Result<Self, KinematicsError> {
        let invalid = |m: String| KinematicsError::InvalidChain(m);
        let n = links.len();
        let roots: Vec<usize> = (0..n).filter(|&i| links[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(invalid(format!("{} root links", roots.len())));
        }
        if links.iter().any(|l| l.parent.is_some_and(|p| p >= n)) {
            return Err(invalid("parent index out of range".into()));
        }
        // Depth-first order from the root; a link unreachable from it means a cycle.
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![roots[0]];
        while let Some(i) = stack.pop() {
            order.push(i);
            for c in (0..n).rev().filter(|&c| links[c].parent == Some(i)) {
                stack.push(c);
            }
        }
        if order.len() != n {
            return Err(invalid("link graph is not a tree".into()));
        }
        let mut driver = vec![None; n];
        let mut dof = 0;
        for (j, joint) in joints.iter().enumerate() {
            if joint.child >= n || joint.parent >= n {
                return Err(invalid(format!("joint {} references a missing link", joint.name)));
            }
            if links[joint.child].parent != Some(joint.parent) {
                return Err(invalid(format!(
                    "joint {} parent disagrees with link {}",
                    joint.name, links[joint.child].name
                )));
            }
            if driver[joint.child].is_some() {
                return Err(invalid(format!("link {} has two joints", links[joint.child].name)));
            }
            let slot = if joint.kind == JointType::Fixed {
                None
            } else {
                let [lo, hi] = joint.limits;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(invalid(format!("joint {} limits [{lo}, {hi}]", joint.name)));
                }
                if (joint.axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("joint {} axis is not unit", joint.name)));
                }
                dof += 1;
                Some(dof - 1)
            };
            driver[joint.child] = Some((j, slot));
        }
        Ok(Self {
            links,
            joints,
            order,
            driver,
            dof,
        })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    /// Number of non-fixed joints (J).
    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// Limits of the non-fixed joints in `theta` order.
    pub fn joint_limits(&self) -> Vec<[f64; 2]> {
        self.joints
            .iter()
            .filter(|j| j.kind != JointType::Fixed)
            .map(|j| j.limits)
            .collect()
    }

    pub fn active_joint_names(&self) -> Vec<&str> {
        self.joints
            .iter()
            .filter(|j| j.kind != JointType::Fixed)
            .map(|j| j.name.as_str())
            .collect()
    }

    pub fn check_limits(&self, theta: &[f64]) -> Result<(), KinematicsError> {
        if theta.len() != self.dof {
            return Err(KinematicsError::JointCount {
                expected: self.dof,
                got: theta.len(),
            });
        }
        for (joint, &value) in self.joints.iter().filter(|j| j.kind != JointType::Fixed).zip(theta) {
            let [lo, hi] = joint.limits;
            if !(value >= lo - LIMIT_TOL && value <= hi + LIMIT_TOL) {
                return Err(KinematicsError::LimitViolation {
                    joint: joint.name.clone(),
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }
}

/// Root translation, 6-D root rotation and joint values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub t: [f64; 3],
    pub r6: Rot6,
    pub theta: Vec<f64>,
}

impl Pose {
    pub fn new(t: Vec3, rotation: &Matrix3<f64>, theta: Vec<f64>) -> Result<Self, KinematicsError> {
        Ok(Self {
            t: [t.x, t.y, t.z],
            r6: matrix_to_rot6d(rotation)?,
            theta,
        })
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.t[0], self.t[1], self.t[2])
    }

    pub fn rotation(&self) -> Result<Matrix3<f64>, KinematicsError> {
        rot6d_to_matrix(&self.r6)
    }

    pub fn root_transform(&self) -> Result<Transform, KinematicsError> {
        let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation()?));
        Ok(Isometry3::from_parts(Translation3::from(self.translation()), rot))
    }
}

/// World transform of every link, indexed like `chain.links()`.
pub fn forward_kinematics(chain: &KinematicChain, pose: &Pose) -> Result<Vec<Transform>, KinematicsError> {
    chain.check_limits(&pose.theta)?;
    Ok(forward_kinematics_unchecked(chain, &pose.root_transform()?, &pose.theta))
}

/// FK without limit checks, used inside solvers that enforce bounds themselves.
pub fn forward_kinematics_unchecked(chain: &KinematicChain, root: &Transform, theta: &[f64]) -> Vec<Transform> {
    let mut world = vec![Transform::identity(); chain.links.len()];
    for &i in &chain.order {
        let link = &chain.links[i];
        let parent = match link.parent {
            Some(p) => world[p],
            None => *root,
        };
        let mut local = link.origin;
        if let Some((j, Some(slot))) = chain.driver[i] {
            let joint = &chain.joints[j];
            let q = theta[slot];
            let motion = match joint.kind {
                JointType::Revolute => Isometry3::from_parts(
                    Translation3::identity(),
                    UnitQuaternion::from_scaled_axis(joint.axis * q),
                ),
                JointType::Prismatic => Isometry3::translation(joint.axis.x * q, joint.axis.y * q, joint.axis.z * q),
                JointType::Fixed => Isometry3::identity(),
            };
            local *= motion;
        }
        world[i] = parent * local;
    }
    world
}

/// Mid-limit joints, zero translation, identity rotation.
pub fn rest_pose(chain: &KinematicChain) -> Pose {
    Pose {
        t: [0.0; 3],
        r6: IDENTITY_R6,
        theta: chain.joint_limits().iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    /// Index into the rest cloud.
    pub vertex: usize,
    pub link: usize,
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Palm {
    pub link: usize,
    /// Unit normal in the link frame, pointing toward the grasped object.
    pub normal: Vec3,
    pub point: Vec3,
}

/// A gripper: chain, rest-pose surface cloud and graph, six keypoints, palm.
#[derive(Debug, Clone)]
pub struct EndEffectorModel {
    pub name: String,
    pub chain: KinematicChain,
    pub rest_cloud: PointCloud,
    pub rest_graph: GeometryGraph,
    pub keypoints: Vec<Keypoint>,
    pub palm: Palm,
}

impl EndEffectorModel {
    pub fn new(
        name: impl Into<String>,
        chain: KinematicChain,
        rest_cloud: PointCloud,
        keypoints: Vec<Keypoint>,
        palm: Palm,
        knn_k: usize,
    ) -> Result<Self, KinematicsError> {
        let invalid = |m: String| KinematicsError::InvalidEndEffector(m);
        if keypoints.len() != NUM_KEYPOINTS {
            return Err(invalid(format!("{} keypoints", keypoints.len())));
        }
        if palm.link >= chain.links.len() || (palm.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid("palm link or normal invalid".into()));
        }
        let rest = forward_kinematics(&chain, &rest_pose(&chain))?;
        for (i, k) in keypoints.iter().enumerate() {
            if k.vertex >= rest_cloud.len() || k.link >= chain.links.len() {
                return Err(invalid(format!("keypoint {i} index out of range")));
            }
            let world = rest[k.link] * nalgebra::Point3::from(k.offset);
            let err = (world.coords - rest_cloud.points()[k.vertex]).norm();
            if err > 1e-9 {
                return Err(invalid(format!("keypoint {i} offset misses its vertex by {err:.3e}")));
            }
        }
        let rest_graph = build_knn_graph(&rest_cloud, knn_k)?;
        Ok(Self {
            name: name.into(),
            chain,
            rest_cloud,
            rest_graph,
            keypoints,
            palm,
        })
    }

    pub fn keypoint_vertices(&self) -> Vec<usize> {
        self.keypoints.iter().map(|k| k.vertex).collect()
    }

    /// Binds a rest-cloud vertex to the link whose rest frame origin is nearest.
    pub fn attach_keypoint(chain: &KinematicChain, rest_cloud: &PointCloud, vertex: usize) -> Keypoint {
        let rest = forward_kinematics_unchecked(chain, &Transform::identity(), &rest_pose(chain).theta);
        let p = rest_cloud.points()[vertex];
        let link = (0..rest.len())
            .min_by(|&a, &b| {
                let da = (rest[a].translation.vector - p).norm();
                let db = (rest[b].translation.vector - p).norm();
                da.total_cmp(&db)
            })
            .expect("chain has a root link");
        let offset = rest[link].inverse_transform_point(&nalgebra::Point3::from(p)).coords;
        Keypoint { vertex, link, offset }
    }
}

/// World keypoint positions from precomputed link transforms.
pub fn keypoints_from_links(ee: &EndEffectorModel, links: &[Transform]) -> [Vec3; NUM_KEYPOINTS] {
    std::array::from_fn(|i| {
        let k = &ee.keypoints[i];
        (links[k.link] * nalgebra::Point3::from(k.offset)).coords
    })
}

pub fn keypoint_positions(ee: &EndEffectorModel, pose: &Pose) -> Result<[Vec3; NUM_KEYPOINTS], KinematicsError> {
    let links = forward_kinematics(&ee.chain, pose)?;
    Ok(keypoints_from_links(ee, &links))
}

/// Palm point and unit palm normal in world coordinates.
pub fn palm_frame(ee: &EndEffectorModel, links: &[Transform]) -> (Vec3, Vec3) {
    let t = links[ee.palm.link];
    let point = (t * nalgebra::Point3::from(ee.palm.point)).coords;
    (point, t.rotation * ee.palm.normal)
}

/// Initial IK guess: joints at rest, palm normal turned onto the inward
/// surface normal at the object vertex nearest the targets' centroid, palm
/// point placed `standoff` outside that vertex.
pub fn heuristic_init_pose(
    ee: &EndEffectorModel,
    object: &PointCloud,
    targets: &[Vec3; NUM_KEYPOINTS],
    standoff: f64,
) -> Result<Pose, KinematicsError> {
    let normals = object.normals().ok_or(KinematicsError::MissingNormals)?;
    let centroid = targets.iter().sum::<Vec3>() / NUM_KEYPOINTS as f64;
    let (v, _) = object
        .nearest(&centroid)
        .ok_or_else(|| KinematicsError::InvalidEndEffector("empty object cloud".into()))?;
    let vertex = object.points()[v];
    let normal = normals[v];
    let rest = rest_pose(&ee.chain);
    let links = forward_kinematics_unchecked(&ee.chain, &Transform::identity(), &rest.theta);
    let (palm_point, palm_normal) = palm_frame(ee, &links);
    let rotation = rotation_between(&palm_normal, &-normal);
    let t = vertex + normal * standoff - rotation * palm_point;
    Pose::new(t, &rotation, rest.theta)
}

/// Contacts pushed `PREGRASP_OFFSET` outward along their vertex normals.
pub fn pregrasp_targets(contacts: &[usize; NUM_KEYPOINTS], object: &PointCloud) -> Result<[Vec3; NUM_KEYPOINTS], KinematicsError> {
    let normals = object.normals().ok_or(KinematicsError::MissingNormals)?;
    let pts = object.points();
    if let Some(&bad) = contacts.iter().find(|&&c| c >= pts.len()) {
        return Err(KinematicsError::InvalidEndEffector(format!("contact vertex {bad} out of range")));
    }
    Ok(std::array::from_fn(|i| pts[contacts[i]] + normals[contacts[i]] * PREGRASP_OFFSET))
}
