//! Point clouds, surface sampling, k-NN graphs and cloud augmentations.
//!
//! All coordinates are meters.

pub mod io;

use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::diffnet::SparseMatrix;
use crate::rng::SeededRng;

pub use io::{
    read_cloud, read_cloud_csv, read_cloud_ply, read_graph_json, write_cloud_csv,
    write_graph_json, GraphCache,
};

pub type Vec3 = Vector3<f64>;

/// Default neighbor count for object and gripper graphs.
pub const DEFAULT_KNN_K: usize = 8;
/// Default neighbor count for normal estimation.
pub const DEFAULT_NORMAL_NEIGHBORS: usize = 8;
/// Default number of points sampled on a gripper mesh.
pub const DEFAULT_GRIPPER_SAMPLES: usize = 1000;
/// Default noise level of the noisy-cloud augmentation.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.001;
/// The table plane sits at `(z_max - z_min) / TABLE_CROP_DIVISOR` above `z_min`.
pub const TABLE_CROP_DIVISOR: f64 = 6.0;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("mesh has no non-degenerate triangle")]
    EmptyMesh,
    #[error("need more than {k} points, got {points}")]
    TooFewPoints { points: usize, k: usize },
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("table crop removed every point")]
    FullyCropped,
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    frame: String,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>, frame: impl Into<String>) -> Result<Self, GeometryError> {
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::InvalidCloud("non-finite coordinate".into()));
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(GeometryError::InvalidCloud(format!(
                    "{} normals for {} points",
                    ns.len(),
                    points.len()
                )));
            }
            if let Some(i) = ns.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
                return Err(GeometryError::InvalidCloud(format!("normal {i} is not unit length")));
            }
        }
        Ok(Self {
            points,
            normals,
            frame: frame.into(),
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn set_frame(&mut self, frame: impl Into<String>) {
        self.frame = frame.into();
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        if self.points.is_empty() {
            return Vec3::zeros();
        }
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }

    /// Index of the nearest point (lower index on ties).
    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d = (p - query).norm_squared();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, d)| (i, d.sqrt()))
    }

    /// Indices of the `m` nearest points, ordered by (distance, index).
    pub fn k_nearest(&self, query: &Vec3, m: usize) -> Vec<usize> {
        let mut order: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - query).norm_squared(), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.into_iter().take(m).map(|(_, i)| i).collect()
    }

    /// Applies a rigid transform `p ↦ R p + t` (normals rotated).
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| rotation * p + translation).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| (rotation * n).normalize()).collect()),
            frame: self.frame.clone(),
        }
    }

    /// Reorders points so that new index `perm[i]` holds old point `i`.
    pub fn permuted(&self, perm: &[usize]) -> PointCloud {
        let mut points = vec![Vec3::zeros(); self.len()];
        for (i, &p) in perm.iter().enumerate() {
            points[p] = self.points[i];
        }
        let normals = self.normals.as_ref().map(|ns| {
            let mut out = vec![Vec3::zeros(); ns.len()];
            for (i, &p) in perm.iter().enumerate() {
                out[p] = ns[i];
            }
            out
        });
        PointCloud {
            points,
            normals,
            frame: self.frame.clone(),
        }
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self, GeometryError> {
        self = PointCloud::new(self.points, Some(normals), self.frame)?;
        Ok(self)
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }
}

/// Samples `count` points uniformly by area; normals are the triangle normals.
pub fn sample_surface(mesh: &TriangleMesh, count: usize, seed: u64) -> Result<PointCloud, GeometryError> {
    let n = mesh.vertices.len();
    if mesh.triangles.iter().flatten().any(|&i| i >= n) {
        return Err(GeometryError::InvalidCloud("triangle index out of range".into()));
    }
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).collect();
    let total: f64 = areas.iter().filter(|&&a| a > 1e-15).sum();
    if total <= 0.0 || count == 0 {
        return Err(GeometryError::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for &a in &areas {
        acc += if a > 1e-15 { a } else { 0.0 };
        cumulative.push(acc);
    }
    let mut rng = SeededRng::new(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.uniform() * total;
        let t = cumulative
            .partition_point(|&c| c <= target)
            .min(areas.len() - 1);
        let [a, b, c] = mesh.triangles[t];
        let (a, b, c) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let (mut u, mut v) = (rng.uniform(), rng.uniform());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        points.push(a + (b - a) * u + (c - a) * v);
        normals.push((b - a).cross(&(c - a)).normalize());
    }
    PointCloud::new(points, Some(normals), "mesh")
}

/// Point cloud with k-NN connectivity and GCN-normalised adjacency.
#[derive(Debug, Clone)]
pub struct GeometryGraph {
    pub cloud: PointCloud,
    pub edges: Vec<(usize, usize)>,
    pub knn_k: usize,
    pub normalized_adjacency: Arc<SparseMatrix>,
}

impl GeometryGraph {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Graph over the permuted cloud with edges relabelled accordingly.
    pub fn permuted(&self, perm: &[usize]) -> GeometryGraph {
        GeometryGraph {
            cloud: self.cloud.permuted(perm),
            edges: self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect(),
            knn_k: self.knn_k,
            normalized_adjacency: Arc::new(self.normalized_adjacency.permuted(perm)),
        }
    }
}

/// Directed edges from every vertex to its `k` nearest other vertices.
/// Distance ties go to the lower index.
pub fn knn_edges(points: &[Vec3], k: usize) -> Result<Vec<(usize, usize)>, GeometryError> {
    let s = points.len();
    if s <= k || k == 0 {
        return Err(GeometryError::TooFewPoints { points: s, k });
    }
    let mut edges = Vec::with_capacity(s * k);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(s);
    for (i, p) in points.iter().enumerate() {
        candidates.clear();
        candidates.extend(
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| ((p - q).norm_squared(), j)),
        );
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        candidates.select_nth_unstable_by(k - 1, cmp);
        let nearest = &mut candidates[..k];
        nearest.sort_by(cmp);
        edges.extend(nearest.iter().map(|&(_, j)| (i, j)));
    }
    Ok(edges)
}

pub fn build_knn_graph(cloud: &PointCloud, k: usize) -> Result<GeometryGraph, GeometryError> {
    let edges = knn_edges(cloud.points(), k)?;
    let adjacency = normalized_adjacency(cloud.len(), &edges);
    Ok(GeometryGraph {
        cloud: cloud.clone(),
        edges,
        knn_k: k,
        normalized_adjacency: Arc::new(adjacency),
    })
}

/// `D̃^{-1/2} (A_sym + I) D̃^{-1/2}` for a 0/1 adjacency given as directed edges.
pub fn normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> SparseMatrix {
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(2 * edges.len() + n);
    for &(a, b) in edges {
        if a != b {
            pairs.push((a, b));
            pairs.push((b, a));
        }
    }
    pairs.extend((0..n).map(|i| (i, i)));
    pairs.sort_unstable();
    pairs.dedup();
    let mut degree = vec![0.0f64; n];
    for &(a, _) in &pairs {
        degree[a] += 1.0;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let triplets = pairs
        .into_iter()
        .map(|(a, b)| (a, b, inv_sqrt[a] * inv_sqrt[b]))
        .collect();
    SparseMatrix::from_triplets(n, triplets).expect("edge indices checked at construction")
}

pub fn normalize_adjacency(graph: &GeometryGraph) -> GeometryGraph {
    GeometryGraph {
        normalized_adjacency: Arc::new(normalized_adjacency(graph.len(), &graph.edges)),
        ..graph.clone()
    }
}

/// Normals from local PCA plus the indices whose neighborhood was degenerate.
#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    pub degenerate: Vec<usize>,
}

/// Smallest-eigenvector normals of each point's neighborhood covariance,
/// oriented away from the cloud centroid. Rank-deficient neighborhoods
/// fall back to the centroid-outward direction and are reported.
pub fn estimate_normals(cloud: &PointCloud, neighbors: usize) -> Result<NormalEstimate, GeometryError> {
    let edges = knn_edges(cloud.points(), neighbors)?;
    let centroid = cloud.centroid();
    let pts = cloud.points();
    let mut normals = Vec::with_capacity(pts.len());
    let mut degenerate = Vec::new();
    for (i, chunk) in edges.chunks(neighbors).enumerate() {
        let hood: Vec<Vec3> = std::iter::once(pts[i])
            .chain(chunk.iter().map(|&(_, j)| pts[j]))
            .collect();
        let mean = hood.iter().sum::<Vec3>() / hood.len() as f64;
        let cov = hood
            .iter()
            .map(|p| (p - mean) * (p - mean).transpose())
            .sum::<Matrix3<f64>>()
            / hood.len() as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let largest = eig.eigenvalues[order[2]];
        let middle = eig.eigenvalues[order[1]];
        let outward = pts[i] - centroid;
        let fallback = if outward.norm() > 1e-12 {
            outward.normalize()
        } else {
            Vec3::z()
        };
        let normal = if largest <= 0.0 || middle <= 1e-12 * largest {
            degenerate.push(i);
            fallback
        } else {
            let n: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();
            if n.dot(&outward) < 0.0 {
                -n
            } else {
                n
            }
        };
        normals.push(normal);
    }
    let cloud = PointCloud::new(pts.to_vec(), Some(normals), cloud.frame())?;
    Ok(NormalEstimate { cloud, degenerate })
}

/// Adds clipped Gaussian noise: each coordinate gets `clamp(σ·z, −σ, σ)`.
pub fn perturb_cloud(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud, GeometryError> {
    if !(sigma >= 0.0) {
        return Err(GeometryError::InvalidCloud(format!("noise sigma {sigma} < 0")));
    }
    let mut rng = SeededRng::new(seed);
    let points = cloud
        .points()
        .iter()
        .map(|p| p.map(|c| c + (sigma * rng.gaussian()).clamp(-sigma, sigma)))
        .collect();
    PointCloud::new(points, cloud.normals.clone(), cloud.frame())
}

/// Keeps points with `z ≥ z_min + (z_max − z_min)/6`, emulating a
/// table-top partial view.
pub fn crop_table_top(cloud: &PointCloud) -> Result<PointCloud, GeometryError> {
    Ok(split_table_top(cloud)?.0)
}

/// Like [`crop_table_top`] but also returns the indices that were removed.
pub fn split_table_top(cloud: &PointCloud) -> Result<(PointCloud, Vec<usize>), GeometryError> {
    if cloud.is_empty() {
        return Err(GeometryError::InvalidCloud("empty cloud".into()));
    }
    let threshold = table_crop_threshold(cloud);
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut removed = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        if p.z >= threshold {
            points.push(*p);
            if let Some(ns) = cloud.normals() {
                normals.push(ns[i]);
            }
        } else {
            removed.push(i);
        }
    }
    if points.is_empty() {
        return Err(GeometryError::FullyCropped);
    }
    let normals = cloud.normals().map(|_| normals);
    Ok((PointCloud::new(points, normals, cloud.frame())?, removed))
}

pub fn table_crop_threshold(cloud: &PointCloud) -> f64 {
    let (lo, hi) = cloud
        .points()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
    lo + (hi - lo) / TABLE_CROP_DIVISOR
}
