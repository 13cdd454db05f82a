//! Analytic primitives sampled to point clouds with exact outward normals.
//! All shapes are centred on the origin of their own frame.

use serde::{Deserialize, Serialize};

use crate::geometry::{sample_surface, GeometryError, PointCloud, TriangleMesh, Vec3};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Half extents along x, y, z.
    Box { half: [f64; 3] },
    /// Axis along z.
    Cylinder { radius: f64, half_height: f64 },
}

impl Shape {
    pub fn sample(&self, count: usize, seed: u64) -> Result<PointCloud, GeometryError> {
        match *self {
            Shape::Sphere { radius } => sphere_cloud(radius, count, seed),
            Shape::Box { half } => box_cloud(half, count, seed),
            Shape::Cylinder { radius, half_height } => cylinder_cloud(radius, half_height, count, seed),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Shape::Sphere { .. } => "sphere",
            Shape::Box { .. } => "box",
            Shape::Cylinder { .. } => "cylinder",
        }
    }
}

/// Uniform on the sphere via normalised Gaussian triples.
pub fn sphere_cloud(radius: f64, count: usize, seed: u64) -> Result<PointCloud, GeometryError> {
    let mut rng = SeededRng::new(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    while normals.len() < count {
        let v = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian());
        let n = v.norm();
        if n < 1e-9 {
            continue;
        }
        let u = v / n;
        points.push(u * radius);
        normals.push(u);
    }
    PointCloud::new(points, Some(normals), "object")
}

pub fn box_mesh(half: [f64; 3]) -> TriangleMesh {
    let [x, y, z] = half;
    let vertices = vec![
        Vec3::new(-x, -y, -z),
        Vec3::new(x, -y, -z),
        Vec3::new(x, y, -z),
        Vec3::new(-x, y, -z),
        Vec3::new(-x, -y, z),
        Vec3::new(x, -y, z),
        Vec3::new(x, y, z),
        Vec3::new(-x, y, z),
    ];
    // Counter-clockwise seen from outside.
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [3, 7, 6],
        [3, 6, 2],
        [0, 4, 7],
        [0, 7, 3],
        [1, 2, 6],
        [1, 6, 5],
    ];
    TriangleMesh { vertices, triangles }
}

pub fn box_cloud(half: [f64; 3], count: usize, seed: u64) -> Result<PointCloud, GeometryError> {
    let mut cloud = sample_surface(&box_mesh(half), count, seed)?;
    cloud.set_frame("object");
    Ok(cloud)
}

/// Side and caps sampled in proportion to their areas.
pub fn cylinder_cloud(radius: f64, half_height: f64, count: usize, seed: u64) -> Result<PointCloud, GeometryError> {
    let mut rng = SeededRng::new(seed);
    let side = 2.0 * std::f64::consts::PI * radius * 2.0 * half_height;
    let cap = std::f64::consts::PI * radius * radius;
    let total = side + 2.0 * cap;
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = rng.uniform() * total;
        let phi = rng.uniform() * 2.0 * std::f64::consts::PI;
        if pick < side {
            let z = rng.uniform_range(-half_height, half_height);
            points.push(Vec3::new(radius * phi.cos(), radius * phi.sin(), z));
            normals.push(Vec3::new(phi.cos(), phi.sin(), 0.0));
        } else {
            let rho = radius * rng.uniform().sqrt();
            let sign = if pick < side + cap { 1.0 } else { -1.0 };
            points.push(Vec3::new(rho * phi.cos(), rho * phi.sin(), sign * half_height));
            normals.push(Vec3::new(0.0, 0.0, sign));
        }
    }
    PointCloud::new(points, Some(normals), "object")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_on_their_surfaces() {
        let s = sphere_cloud(0.04, 200, 1).unwrap();
        assert!(s.points().iter().all(|p| (p.norm() - 0.04).abs() < 1e-12));
        let b = box_cloud([0.03, 0.02, 0.01], 300, 2).unwrap();
        for p in b.points() {
            let on_face = (p.x.abs() - 0.03).abs() < 1e-12
                || (p.y.abs() - 0.02).abs() < 1e-12
                || (p.z.abs() - 0.01).abs() < 1e-12;
            assert!(on_face, "{p:?}");
        }
        let c = cylinder_cloud(0.03, 0.05, 300, 3).unwrap();
        for (p, n) in c.points().iter().zip(c.normals().unwrap()) {
            let side = ((p.x * p.x + p.y * p.y).sqrt() - 0.03).abs() < 1e-12 && p.z.abs() <= 0.05;
            let cap = (p.z.abs() - 0.05).abs() < 1e-12;
            assert!(side || cap);
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn box_normals_point_outward() {
        let b = box_cloud([0.03, 0.02, 0.01], 300, 2).unwrap();
        for (p, n) in b.points().iter().zip(b.normals().unwrap()) {
            assert!(p.dot(n) > 0.0);
        }
    }
}
