//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use geomatch::contact_maps::{ContactMapSet, ThresholdMetric};
use geomatch::dataset::toy::GripperSpec;
use geomatch::geometry::{build_knn_graph, PointCloud, Vec3};
use geomatch::kinematics::{keypoint_positions, EndEffectorModel, Pose};
use geomatch::model::TrainingSample;
use geomatch::rng::SeededRng;
use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion};

pub fn random_point(rng: &mut SeededRng, scale: f64) -> Vec3 {
    Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * scale
}

pub fn random_unit(rng: &mut SeededRng) -> Vec3 {
    loop {
        let v = random_point(rng, 1.0);
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

/// Uniform random rotation from a normalised Gaussian quaternion.
pub fn random_rotation(rng: &mut SeededRng) -> Matrix3<f64> {
    let q = nalgebra::Quaternion::new(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

pub fn random_cloud(rng: &mut SeededRng, n: usize, scale: f64) -> PointCloud {
    PointCloud::new((0..n).map(|_| random_point(rng, scale)).collect(), None, "random").unwrap()
}

/// Joint values drawn uniformly inside the chain's limits.
pub fn random_theta(rng: &mut SeededRng, ee: &EndEffectorModel) -> Vec<f64> {
    ee.chain
        .joint_limits()
        .iter()
        .map(|[lo, hi]| rng.uniform_range(*lo, *hi))
        .collect()
}

/// Small random training instance: `s_o` object points, a toy gripper with
/// `s_g` rest points, a random pose near the object, maps with the given `m`.
pub fn tiny_sample(rng: &mut SeededRng, s_o: usize, s_g: usize, m: usize) -> TrainingSample {
    let knn = 3;
    let object = random_cloud(rng, s_o, 0.04);
    let graph = Arc::new(build_knn_graph(&object, knn).unwrap());
    let spec = if rng.uniform() < 0.5 { GripperSpec::pincer() } else { GripperSpec::claw() };
    let ee = Arc::new(spec.build(s_g, knn, rng.next_u64()).unwrap());
    let pose = Pose::new(random_point(rng, 0.03), &random_rotation(rng), random_theta(rng, &ee)).unwrap();
    let kp = keypoint_positions(&ee, &pose).unwrap();
    // Wide threshold so that most keypoints carry positive labels.
    let threshold = rng.uniform_range(0.05, 0.2);
    let maps = ContactMapSet::build(&object, &kp, m, threshold, ThresholdMetric::Euclidean).unwrap();
    TrainingSample::new("object", ee.name.clone(), graph, ee, pose, kp, maps)
}

/// Brute-force proximity map: sort every vertex by distance, mark the first `m`.
pub fn brute_proximity(points: &[Vec3], keypoints: &[Vec3], m: usize) -> Vec<Vec<u8>> {
    let mut prox = vec![vec![0u8; keypoints.len()]; points.len()];
    for (i, k) in keypoints.iter().enumerate() {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            (points[a] - k)
                .norm()
                .partial_cmp(&(points[b] - k).norm())
                .unwrap()
                .then(a.cmp(&b))
        });
        for &v in &order[..m] {
            prox[v][i] = 1;
        }
    }
    prox
}

/// Lawson–Hanson active-set NNLS: `min ‖A x − b‖` subject to `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let tol = 1e-12;
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
            let z = sub.svd(true, true).solve(b, 1e-14).unwrap();
            let mut s = DVector::zeros(n);
            for (c, &i) in idx.iter().enumerate() {
                s[i] = z[c];
            }
            if idx.iter().all(|&i| s[i] > tol) {
                x = s;
                break;
            }
            let alpha = idx
                .iter()
                .filter(|&&i| s[i] <= tol)
                .map(|&i| x[i] / (x[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            x = &x + (&s - &x) * alpha;
            for &i in &idx {
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}

/// `(l₁cos θ₁ + l₂cos(θ₁+θ₂), l₁sin θ₁ + l₂sin(θ₁+θ₂))`
pub fn planar_tip(l1: f64, l2: f64, t1: f64, t2: f64) -> (f64, f64) {
    (l1 * t1.cos() + l2 * (t1 + t2).cos(), l1 * t1.sin() + l2 * (t1 + t2).sin())
}

/// Whether `b` lies in the cone spanned by the columns of `g`, by NNLS on the
/// row-equilibrated system. Row scaling leaves `{x ≥ 0 : g x = b}` unchanged
/// but keeps the torque rows from being swamped by the force rows.
pub fn cone_contains(g: &DMatrix<f64>, b: &DVector<f64>) -> bool {
    let mut g = g.clone();
    let mut b = b.clone();
    for r in 0..g.nrows() {
        let s = g.row(r).norm();
        if s > 0.0 {
            g.row_mut(r).scale_mut(1.0 / s);
            b[r] /= s;
        }
    }
    let b = &b / b.norm();
    (&g * nnls(&g, &b) - &b).norm() < 1e-7
}
