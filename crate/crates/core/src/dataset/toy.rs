//! Parametric toy grippers and closed-form grasps on analytic shapes.
//!
//! Palm frame convention: the palm's top face is the plane `y = 0`, the
//! approach direction is `+y`, and finger `f` sits at radius `b` along the
//! radial direction `(cos ψ_f, 0, sin ψ_f)`. Each finger is one revolute
//! joint whose positive direction closes it toward the approach axis. In a
//! finger's radial plane (radial coordinate `ρ`, height `y`) the pad point
//! at the fingertip is
//!
//! ```text
//! ρ(θ) = b − t·cos θ − L·sin θ
//! y(θ) = L·cos θ − t·sin θ
//! ```
//!
//! with `L` the finger length and `t` the pad offset. Grasps are found by
//! intersecting that curve with the object's cross-section in the same
//! plane, which is either a circle (sphere, cylinder seen end-on to its
//! axis) or a slab of constant half-width (boxes, cylinders seen side-on).

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::shapes::{box_mesh, Shape};
use crate::contact_maps::{gripper_contact_map, ThresholdMetric};
use crate::geometry::{sample_surface, GeometryError, PointCloud, TriangleMesh, Vec3};
use crate::kinematics::{
    forward_kinematics, forward_kinematics_unchecked, keypoint_positions, rest_pose, EndEffectorModel, Joint,
    JointType, KinematicChain, KinematicsError, Link, Palm, Pose, Transform, NUM_KEYPOINTS,
};
use crate::rng::SeededRng;

/// Gap between the palm face and the object when the palm supports it.
pub const PALM_GAP: f64 = 0.004;
/// Minimum distance from a fingertip contact to the edge of a flat face.
pub const FACE_MARGIN: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointSite {
    /// Pad point at the tip of finger `f`.
    Tip(usize),
    /// Pad point halfway along finger `f`.
    Mid(usize),
    /// Point on the palm face at `(x, 0, z)`.
    Palm(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperSpec {
    pub name: String,
    /// Radial direction angle `ψ` of each finger, radians.
    pub finger_angles: Vec<f64>,
    pub base_radius: f64,
    pub finger_length: f64,
    /// Half thickness of a finger along its radial direction (pad offset).
    pub pad_offset: f64,
    /// Half width of a finger across its radial plane.
    pub finger_half_width: f64,
    pub limits: [f64; 2],
    /// Palm box half extents; its top face is `y = 0`.
    pub palm_half: [f64; 3],
    pub keypoints: [KeypointSite; NUM_KEYPOINTS],
}

impl GripperSpec {
    /// Two opposed fingers along ±x.
    pub fn pincer() -> Self {
        Self {
            name: "pincer".into(),
            finger_angles: vec![std::f64::consts::PI, 0.0],
            base_radius: 0.06,
            finger_length: 0.065,
            pad_offset: 0.004,
            finger_half_width: 0.008,
            limits: [-0.35, 1.2],
            palm_half: [0.075, 0.01, 0.02],
            keypoints: [
                KeypointSite::Tip(0),
                KeypointSite::Tip(1),
                KeypointSite::Mid(0),
                KeypointSite::Mid(1),
                KeypointSite::Palm(-0.015, 0.0),
                KeypointSite::Palm(0.015, 0.0),
            ],
        }
    }

    /// Three fingers 120° apart: left, right, front.
    pub fn claw() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Self {
            name: "claw".into(),
            finger_angles: vec![150.0 * deg, 30.0 * deg, 270.0 * deg],
            base_radius: 0.055,
            finger_length: 0.065,
            pad_offset: 0.004,
            finger_half_width: 0.008,
            limits: [-0.35, 1.2],
            palm_half: [0.065, 0.01, 0.065],
            keypoints: [
                KeypointSite::Tip(0),
                KeypointSite::Tip(1),
                KeypointSite::Tip(2),
                KeypointSite::Mid(0),
                KeypointSite::Mid(1),
                KeypointSite::Mid(2),
            ],
        }
    }

    pub fn radial(&self, f: usize) -> Vec3 {
        let psi = self.finger_angles[f];
        Vec3::new(psi.cos(), 0.0, psi.sin())
    }

    /// Palm, then per finger a jointed finger link and a fixed tip link.
    pub fn chain(&self) -> Result<KinematicChain, KinematicsError> {
        let mut links = vec![Link {
            name: "palm".into(),
            parent: None,
            origin: Isometry3::identity(),
        }];
        let mut joints = Vec::new();
        for f in 0..self.finger_angles.len() {
            let r = self.radial(f);
            let finger = links.len();
            links.push(Link {
                name: format!("finger{f}"),
                parent: Some(0),
                origin: Isometry3::translation(r.x * self.base_radius, 0.0, r.z * self.base_radius),
            });
            links.push(Link {
                name: format!("tip{f}"),
                parent: Some(finger),
                origin: Isometry3::translation(0.0, self.finger_length, 0.0),
            });
            joints.push(Joint {
                name: format!("joint{f}"),
                kind: JointType::Revolute,
                parent: 0,
                child: finger,
                axis: r.cross(&Vec3::y()).normalize(),
                limits: self.limits,
            });
            joints.push(Joint {
                name: format!("tip{f}_fixed"),
                kind: JointType::Fixed,
                parent: finger,
                child: finger + 1,
                axis: Vec3::z(),
                limits: [0.0, 0.0],
            });
        }
        KinematicChain::new(links, joints)
    }

    fn finger_link(f: usize) -> usize {
        1 + 2 * f
    }

    /// Keypoint site in the local frame of its finger link (or the palm).
    fn site_local(&self, site: KeypointSite) -> (usize, Vec3) {
        match site {
            KeypointSite::Tip(f) => (
                Self::finger_link(f),
                -self.radial(f) * self.pad_offset + Vec3::y() * self.finger_length,
            ),
            KeypointSite::Mid(f) => (
                Self::finger_link(f),
                -self.radial(f) * self.pad_offset + Vec3::y() * (0.5 * self.finger_length),
            ),
            KeypointSite::Palm(x, z) => (0, Vec3::new(x, 0.0, z)),
        }
    }

    /// Surface mesh of palm and fingers at the given link transforms.
    fn mesh(&self, links: &[Transform]) -> TriangleMesh {
        let mut mesh = TriangleMesh {
            vertices: vec![],
            triangles: vec![],
        };
        let mut push_box = |half: [f64; 3], place: Transform| {
            let b = box_mesh(half);
            let base = mesh.vertices.len();
            mesh.vertices.extend(b.vertices.iter().map(|v| (place * Point3::from(*v)).coords));
            mesh.triangles
                .extend(b.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        };
        push_box(self.palm_half, links[0] * Isometry3::translation(0.0, -self.palm_half[1], 0.0));
        for f in 0..self.finger_angles.len() {
            // Box axes: radial, along the finger, across the finger.
            let r = self.radial(f);
            let across = r.cross(&Vec3::y());
            let frame = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[r, Vec3::y(), across]));
            let place = links[Self::finger_link(f)]
                * Isometry3::from_parts(
                    nalgebra::Translation3::new(0.0, 0.5 * self.finger_length, 0.0),
                    UnitQuaternion::from_rotation_matrix(&frame),
                );
            push_box([self.pad_offset, 0.5 * self.finger_length, self.finger_half_width], place);
        }
        mesh
    }

    /// Builds the model: `samples − 6` surface samples followed by the six
    /// keypoint sites, all at the rest pose.
    pub fn build(&self, samples: usize, knn_k: usize, seed: u64) -> Result<EndEffectorModel, ToyError> {
        if samples <= NUM_KEYPOINTS + knn_k {
            return Err(ToyError::Spec(format!("{samples} gripper samples is too few")));
        }
        let chain = self.chain()?;
        let rest = forward_kinematics(&chain, &rest_pose(&chain))?;
        let surface = sample_surface(&self.mesh(&rest), samples - NUM_KEYPOINTS, seed)?;
        let mut points = surface.points().to_vec();
        let mut normals = surface.normals().expect("sampled with normals").to_vec();
        let mut keypoints = Vec::with_capacity(NUM_KEYPOINTS);
        for site in self.keypoints {
            let (link, local) = self.site_local(site);
            let world = (rest[link] * Point3::from(local)).coords;
            let normal = match site {
                KeypointSite::Palm(..) => Vec3::y(),
                KeypointSite::Tip(f) | KeypointSite::Mid(f) => rest[link].rotation * -self.radial(f),
            };
            keypoints.push(crate::kinematics::Keypoint {
                vertex: points.len(),
                link,
                offset: local,
            });
            points.push(world);
            normals.push(normal);
        }
        let cloud = PointCloud::new(points, Some(normals), self.name.clone())?;
        let palm = Palm {
            link: 0,
            normal: Vec3::y(),
            point: Vec3::zeros(),
        };
        Ok(EndEffectorModel::new(self.name.clone(), chain, cloud, keypoints, palm, knn_k)?)
    }

    /// Pad point of finger `f` in its radial plane at joint value `θ`.
    pub fn tip_in_plane(&self, theta: f64) -> (f64, f64) {
        let (l, t, b) = (self.finger_length, self.pad_offset, self.base_radius);
        (b - t * theta.cos() - l * theta.sin(), l * theta.cos() - t * theta.sin())
    }

    /// Joint value that puts the fingertip pad at radial distance `w`.
    pub fn solve_slab(&self, w: f64) -> Option<f64> {
        let (l, t, b) = (self.finger_length, self.pad_offset, self.base_radius);
        let s = (b - w) / l.hypot(t);
        if s.abs() > 1.0 {
            return None;
        }
        let theta = s.asin() - t.atan2(l);
        (theta >= self.limits[0] && theta <= self.limits[1]).then_some(theta)
    }

    /// Smallest joint value at which the pad touches the circle of radius
    /// `r` centred on the approach axis at height `cy`.
    ///
    /// `|P(θ) − C|² = r²` reduces to `A cos θ + B sin θ = K`.
    pub fn solve_circle(&self, cy: f64, r: f64) -> Option<f64> {
        let (l, t, b) = (self.finger_length, self.pad_offset, self.base_radius);
        let a = -b * t - cy * l;
        let bb = -b * l + cy * t;
        let k = 0.5 * (r * r - (b * b + cy * cy) - (t * t + l * l));
        let norm = a.hypot(bb);
        if norm == 0.0 || k.abs() > norm {
            return None;
        }
        let delta = bb.atan2(a);
        let alpha = (k / norm).acos();
        let wrap = |x: f64| (x + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
        let (lo, hi) = (self.limits[0], self.limits[1]);
        let outside_at_open = {
            let (rho, y) = self.tip_in_plane(lo);
            rho.hypot(y - cy) > r
        };
        if !outside_at_open {
            return None;
        }
        [wrap(delta - alpha), wrap(delta + alpha)]
            .into_iter()
            .filter(|th| *th >= lo && *th <= hi)
            .min_by(f64::total_cmp)
    }

    /// Whether the finger's pad line stays outside the circle up to the tip.
    fn clears_circle(&self, theta: f64, cy: f64, r: f64) -> bool {
        let (t, b) = (self.pad_offset, self.base_radius);
        let start = (b - t * theta.cos(), -t * theta.sin());
        let end = self.tip_in_plane(theta);
        let (dx, dy) = (end.0 - start.0, end.1 - start.1);
        let len2 = dx * dx + dy * dy;
        let s = ((-start.0) * dx + (cy - start.1) * dy) / len2;
        let s = s.clamp(0.0, 1.0);
        let (px, py) = (start.0 + s * dx, start.1 + s * dy);
        px.hypot(py - cy) >= r - 1e-9
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ToyError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Spec(String),
}

/// Cross-section of an object in one finger's radial plane.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Profile {
    Circle { radius: f64 },
    /// Constant radial half-width over a height `height`.
    Slab { half_width: f64, height: f64 },
}

fn is_axis_aligned(r: &Matrix3<f64>) -> bool {
    r.iter().all(|v| v.abs() < 1e-12 || (v.abs() - 1.0).abs() < 1e-12)
}

/// Profile of `shape` (in its own frame) seen in the radial plane
/// `radial`/`approach` of the palm frame `rot`.
fn profile(shape: &Shape, rot: &Matrix3<f64>, radial: &Vec3) -> Option<Profile> {
    let near = |x: f64, target: f64| (x - target).abs() < 1e-9;
    match *shape {
        Shape::Sphere { radius } => Some(Profile::Circle { radius }),
        Shape::Box { half } => {
            if !is_axis_aligned(rot) {
                return None;
            }
            let h = Vec3::from(half);
            let palm_half = rot.transpose().abs() * h;
            let mut w = f64::INFINITY;
            if radial.x.abs() > 1e-12 {
                w = w.min(palm_half.x / radial.x.abs());
            }
            if radial.z.abs() > 1e-12 {
                w = w.min(palm_half.z / radial.z.abs());
            }
            Some(Profile::Slab {
                half_width: w,
                height: 2.0 * palm_half.y,
            })
        }
        Shape::Cylinder { radius, half_height } => {
            let axis = rot.transpose() * Vec3::z();
            if near(axis.y.abs(), 1.0) {
                Some(Profile::Slab {
                    half_width: radius,
                    height: 2.0 * half_height,
                })
            } else if near(axis.y, 0.0) && near(axis.dot(radial).abs(), 1.0) {
                Some(Profile::Slab {
                    half_width: half_height,
                    height: 2.0 * radius,
                })
            } else if near(axis.y, 0.0) && near(axis.dot(radial), 0.0) {
                Some(Profile::Circle { radius })
            } else {
                None
            }
        }
    }
}

/// Where a round cross-section sits relative to the fingertips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CirclePlacement {
    /// Object rests just above the palm; tips close over it.
    #[default]
    PalmSupported,
    /// Tips meet the object at the height of its centre.
    Equator,
}

/// Closes every finger of `spec` on `shape` held in palm frame `rot`.
/// Returns the pose of the palm in the object's frame.
pub fn closed_form_grasp(
    spec: &GripperSpec,
    shape: &Shape,
    rot: &Matrix3<f64>,
    placement: CirclePlacement,
) -> Option<Pose> {
    let fingers = spec.finger_angles.len();
    let profiles: Vec<Profile> = (0..fingers)
        .map(|f| profile(shape, rot, &spec.radial(f)))
        .collect::<Option<_>>()?;
    let (theta, center_y) = match profiles[0] {
        Profile::Circle { radius } => {
            if profiles.iter().any(|p| *p != profiles[0]) {
                return None;
            }
            if placement == CirclePlacement::Equator {
                let th = spec.solve_slab(radius)?;
                let cy = spec.tip_in_plane(th).1;
                if cy < radius + PALM_GAP || !spec.clears_circle(th, cy, radius) {
                    return None;
                }
                let t = -(rot * Vec3::new(0.0, cy, 0.0));
                return Pose::new(t, rot, vec![th; fingers]).ok();
            }
            // Move the object away from the palm until the fingers wrap it
            // without cutting through it.
            let mut gap = PALM_GAP;
            loop {
                if gap > 0.05 {
                    return None;
                }
                let cy = radius + gap;
                if let Some(th) = spec.solve_circle(cy, radius) {
                    if spec.clears_circle(th, cy, radius) {
                        break (vec![th; fingers], cy);
                    }
                }
                gap += 0.002;
            }
        }
        Profile::Slab { height, .. } => {
            let mut theta = Vec::with_capacity(fingers);
            for p in &profiles {
                match *p {
                    Profile::Slab { half_width, height: h } if h == height => {
                        let th = spec.solve_slab(half_width)?;
                        // A finger tilted outward would cut into the slab.
                        if th < 0.0 {
                            return None;
                        }
                        theta.push(th);
                    }
                    _ => return None,
                }
            }
            let heights: Vec<f64> = theta.iter().map(|&th| spec.tip_in_plane(th).1).collect();
            let highest = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lowest = heights.iter().copied().fold(f64::INFINITY, f64::min);
            // Bottom face height: the tips must stay `FACE_MARGIN` inside
            // the faces, and the object clear of the palm. Within that,
            // centre the slab on the tips so the pinch passes near the
            // centroid.
            let lo = PALM_GAP.max(highest - height + FACE_MARGIN);
            let hi = lowest - FACE_MARGIN;
            if lo > hi {
                return None;
            }
            let mean_tip = heights.iter().sum::<f64>() / heights.len() as f64;
            let y0 = (mean_tip - 0.5 * height).clamp(lo, hi);
            (theta, y0 + 0.5 * height)
        }
    };
    let t = -(rot * Vec3::new(0.0, center_y, 0.0));
    Pose::new(t, rot, theta).ok()
}

fn random_rotation(rng: &mut SeededRng) -> Matrix3<f64> {
    let q = nalgebra::Quaternion::new(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// The 24 proper rotations that permute and flip the coordinate axes.
pub fn axis_rotations() -> Vec<Matrix3<f64>> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for p in perms {
        for signs in 0..8 {
            let mut m = Matrix3::zeros();
            for (row, &col) in p.iter().enumerate() {
                m[(row, col)] = if signs & (1 << row) != 0 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

/// Candidate palm orientations for `shape`, in seeded order.
pub fn candidate_frames(shape: &Shape, seed: u64) -> Vec<Matrix3<f64>> {
    let mut rng = SeededRng::new(seed);
    let mut frames = match shape {
        Shape::Sphere { .. } => (0..48).map(|_| random_rotation(&mut rng)).collect(),
        Shape::Box { .. } => axis_rotations(),
        Shape::Cylinder { .. } => {
            let mut v = Vec::new();
            let offset = rng.uniform() * std::f64::consts::FRAC_PI_4;
            for k in 0..8 {
                let phi = offset + k as f64 * std::f64::consts::FRAC_PI_4;
                let radial = Vec3::new(phi.cos(), phi.sin(), 0.0);
                for s in [1.0, -1.0] {
                    let z = Vec3::z() * s;
                    // End-on: approach along the axis.
                    v.push(Matrix3::from_columns(&[radial, z, radial.cross(&z)]));
                    // Pinch across the round body.
                    v.push(Matrix3::from_columns(&[radial, z.cross(&radial), z]));
                    // Pinch across the flat ends.
                    v.push(Matrix3::from_columns(&[z, radial, z.cross(&radial)]));
                }
            }
            v
        }
    };
    rng.shuffle(&mut frames);
    frames
}

/// Signed distance to the analytic surface of `shape`.
pub fn signed_distance(shape: &Shape, p: &Vec3) -> f64 {
    match *shape {
        Shape::Sphere { radius } => p.norm() - radius,
        Shape::Box { half } => {
            let q = p.abs() - Vec3::from(half);
            let outside = q.map(|v| v.max(0.0)).norm();
            outside + q.max().min(0.0)
        }
        Shape::Cylinder { radius, half_height } => {
            let d = (p.x.hypot(p.y) - radius, p.z.abs() - half_height);
            let outside = d.0.max(0.0).hypot(d.1.max(0.0));
            outside + d.0.max(d.1).min(0.0)
        }
    }
}

/// Fingertip keypoint indices of a spec.
pub fn tip_keypoints(spec: &GripperSpec) -> Vec<usize> {
    spec.keypoints
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, KeypointSite::Tip(_)))
        .map(|(i, _)| i)
        .collect()
}

/// Up to `count` validated grasps of `shape` by the gripper. Round
/// sections are pinched at the equator when the fingers reach it, else
/// wrapped from just above the palm. A grasp is kept when every fingertip
/// lies on the analytic surface (FK residual below 1e-9) and at least two
/// keypoints fall within `threshold` of the sampled cloud.
#[allow(clippy::too_many_arguments)]
pub fn grasps_for_pair(
    spec: &GripperSpec,
    ee: &EndEffectorModel,
    shape: &Shape,
    cloud: &PointCloud,
    count: usize,
    threshold: f64,
    metric: ThresholdMetric,
    seed: u64,
) -> Vec<Pose> {
    let tips = tip_keypoints(spec);
    let mut out = Vec::new();
    for rot in candidate_frames(shape, seed) {
        if out.len() == count {
            break;
        }
        let Some(pose) = closed_form_grasp(spec, shape, &rot, CirclePlacement::Equator)
            .or_else(|| closed_form_grasp(spec, shape, &rot, CirclePlacement::PalmSupported))
        else {
            continue;
        };
        let Ok(kp) = keypoint_positions(ee, &pose) else {
            continue;
        };
        if tips.iter().any(|&i| signed_distance(shape, &kp[i]).abs() > 1e-9) {
            continue;
        }
        let Ok(cg) = gripper_contact_map(cloud, &kp, threshold, metric) else {
            continue;
        };
        if cg.iter().filter(|&&c| c == 1).count() >= 2 {
            out.push(pose);
        }
    }
    out
}

/// World keypoints with an extra root transform, used by tests.
pub fn keypoints_with_root(ee: &EndEffectorModel, root: &Transform, theta: &[f64]) -> [Vec3; NUM_KEYPOINTS] {
    let links = forward_kinematics_unchecked(&ee.chain, root, theta);
    crate::kinematics::keypoints_from_links(ee, &links)
}

/// Default toy pincer with `samples` rest-cloud points.
pub fn pincer(samples: usize, seed: u64) -> Result<EndEffectorModel, ToyError> {
    GripperSpec::pincer().build(samples, crate::geometry::DEFAULT_KNN_K, seed)
}

/// Default toy claw with `samples` rest-cloud points.
pub fn claw(samples: usize, seed: u64) -> Result<EndEffectorModel, ToyError> {
    GripperSpec::claw().build(samples, crate::geometry::DEFAULT_KNN_K, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::keypoint_positions;

    #[test]
    fn sphere_pinch_touches_at_the_pinch_axis() {
        let spec = GripperSpec::pincer();
        let ee = spec.build(128, 8, 1).unwrap();
        let shape = Shape::Sphere { radius: 0.04 };
        let pose = closed_form_grasp(&spec, &shape, &Matrix3::identity(), CirclePlacement::Equator).unwrap();
        let kp = keypoint_positions(&ee, &pose).unwrap();
        assert!((kp[0] - Vec3::new(-0.04, 0.0, 0.0)).norm() < 1e-9, "{:?}", kp[0]);
        assert!((kp[1] - Vec3::new(0.04, 0.0, 0.0)).norm() < 1e-9);
        // Palm sits below the object on −y.
        assert!(pose.t[0].abs() < 1e-12 && pose.t[1] < -0.04 && pose.t[2].abs() < 1e-12);
    }

    #[test]
    fn palm_supported_wrap_touches_surface_above_equator() {
        let spec = GripperSpec::pincer();
        let ee = spec.build(128, 8, 1).unwrap();
        let shape = Shape::Sphere { radius: 0.035 };
        let pose = closed_form_grasp(&spec, &shape, &Matrix3::identity(), CirclePlacement::PalmSupported).unwrap();
        let kp = keypoint_positions(&ee, &pose).unwrap();
        for i in [0, 1] {
            assert!(signed_distance(&shape, &kp[i]).abs() < 1e-9);
            assert!(kp[i].y > 0.0);
        }
        // Palm points sit below the sphere, at least the minimum gap away.
        let gap = signed_distance(&shape, &kp[4]);
        assert!(gap >= PALM_GAP - 1e-12 && gap < 0.02, "gap {gap}");
    }

    #[test]
    fn slab_solution_reaches_requested_width() {
        let spec = GripperSpec::pincer();
        for w in [0.02, 0.03, 0.045] {
            let th = spec.solve_slab(w).unwrap();
            assert!((spec.tip_in_plane(th).0 - w).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_solution_is_on_circle() {
        let spec = GripperSpec::claw();
        let th = spec.solve_circle(0.045, 0.04).unwrap();
        let (rho, y) = spec.tip_in_plane(th);
        assert!((rho.hypot(y - 0.045) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn axis_rotations_are_proper() {
        let rots = axis_rotations();
        assert_eq!(rots.len(), 24);
        for r in rots {
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn every_default_pair_has_four_grasps() {
        for spec in [GripperSpec::pincer(), GripperSpec::claw()] {
            let ee = spec.build(128, 8, 1).unwrap();
            for shape in super::super::default_objects().iter().map(|o| o.shape) {
                let cloud = shape.sample(256, 5).unwrap();
                let grasps = grasps_for_pair(&spec, &ee, &shape, &cloud, 4, 0.04, ThresholdMetric::Euclidean, 9);
                assert_eq!(grasps.len(), 4, "{} on {:?}", spec.name, shape);
            }
        }
    }
}
