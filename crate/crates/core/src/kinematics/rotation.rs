//! Continuous 6-D rotation representation: the first two columns of a
//! rotation matrix, decoded by Gram–Schmidt.

use nalgebra::{Matrix3, Rotation3, Unit};

use super::KinematicsError;
use crate::geometry::Vec3;

pub type Rot6 = [f64; 6];

pub const IDENTITY_R6: Rot6 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

const DEGENERACY_TOL: f64 = 1e-12;

pub fn rot6d_to_matrix(r6: &Rot6) -> Result<Matrix3<f64>, KinematicsError> {
    let a1 = Vec3::new(r6[0], r6[1], r6[2]);
    let a2 = Vec3::new(r6[3], r6[4], r6[5]);
    let n1 = a1.norm();
    if n1 < DEGENERACY_TOL {
        return Err(KinematicsError::DegenerateInput("first column is zero".into()));
    }
    let c1 = a1 / n1;
    let residual = a2 - c1 * c1.dot(&a2);
    let n2 = residual.norm();
    if n2 < DEGENERACY_TOL * a2.norm().max(1.0) {
        return Err(KinematicsError::DegenerateInput("columns are parallel".into()));
    }
    let c2 = residual / n2;
    let c3 = c1.cross(&c2);
    Ok(Matrix3::from_columns(&[c1, c2, c3]))
}

pub fn matrix_to_rot6d(r: &Matrix3<f64>) -> Result<Rot6, KinematicsError> {
    let err = (r.transpose() * r - Matrix3::identity()).norm();
    if !(err < 1e-6) || r.determinant() < 0.0 {
        return Err(KinematicsError::NotARotation(err));
    }
    Ok([r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]])
}

/// Rotation vector (axis · angle) to matrix.
pub fn axis_angle_to_matrix(w: &Vec3) -> Matrix3<f64> {
    Rotation3::from_scaled_axis(*w).into_inner()
}

pub fn matrix_to_axis_angle(r: &Matrix3<f64>) -> Vec3 {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Minimal rotation taking unit `from` onto unit `to`. The antiparallel case
/// is a half turn about the first canonical axis (x, then y, then z) that is
/// not parallel to `from`, projected to be perpendicular to it.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Matrix3<f64> {
    let (a, b) = (from.normalize(), to.normalize());
    let cos = a.dot(&b).clamp(-1.0, 1.0);
    if cos > 1.0 - 1e-15 {
        return Matrix3::identity();
    }
    if cos < -1.0 + 1e-12 {
        let axis = [Vec3::x(), Vec3::y(), Vec3::z()]
            .into_iter()
            .find(|e| e.dot(&a).abs() < 0.9)
            .expect("a unit vector is parallel to at most one canonical axis");
        let perp = Unit::new_normalize(axis - a * a.dot(&axis));
        return Rotation3::from_axis_angle(&perp, std::f64::consts::PI).into_inner();
    }
    let axis = Unit::new_normalize(a.cross(&b));
    Rotation3::from_axis_angle(&axis, cos.acos()).into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_and_scaled_inputs_give_identity() {
        assert_eq!(rot6d_to_matrix(&IDENTITY_R6).unwrap(), Matrix3::identity());
        let m = rot6d_to_matrix(&[2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap();
        assert!((m - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = Rotation3::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2).into_inner();
        let r6 = matrix_to_rot6d(&r).unwrap();
        let expected = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        for (a, b) in r6.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(rot6d_to_matrix(&[0.0; 6]).is_err());
        assert!(rot6d_to_matrix(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).is_err());
        let reflection = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matrix_to_rot6d(&reflection).is_err());
        assert!(matrix_to_rot6d(&(Matrix3::identity() * 2.0)).is_err());
    }

    #[test]
    fn rotation_between_cases() {
        let r = rotation_between(&Vec3::z(), &Vec3::z());
        assert_eq!(r, Matrix3::identity());
        let r = rotation_between(&Vec3::x(), &-Vec3::x());
        assert!((r * Vec3::x() + Vec3::x()).norm() < 1e-12);
        // Half turn about y: the first canonical axis not parallel to x.
        assert!((r * Vec3::y() - Vec3::y()).norm() < 1e-12);
        let from = Vec3::new(1.0, 2.0, -0.5).normalize();
        let to = Vec3::new(-0.3, 0.1, 0.9).normalize();
        assert!((rotation_between(&from, &to) * from - to).norm() < 1e-12);
    }
}
