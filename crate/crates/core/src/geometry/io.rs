use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_knn_graph, knn_edges, GeometryError, GeometryGraph, PointCloud, Vec3};

fn io_err(path: &Path, source: std::io::Error) -> GeometryError {
    GeometryError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads `.ply` (ASCII) or CSV depending on the extension.
pub fn read_cloud(path: &Path) -> Result<PointCloud, GeometryError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ply") => read_cloud_ply(path),
        _ => read_cloud_csv(path),
    }
}

/// CSV with header `x,y,z` or `x,y,z,nx,ny,nz`.
pub fn read_cloud_csv(path: &Path) -> Result<PointCloud, GeometryError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let with_normals = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "nx", "ny", "nz"] => true,
        other => return Err(parse_err(path, 1, format!("unexpected header {other:?}"))),
    };
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        let vals = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        if vals.len() != header.len() {
            return Err(parse_err(path, line, format!("{} fields", vals.len())));
        }
        points.push(Vec3::new(vals[0], vals[1], vals[2]));
        if with_normals {
            normals.push(Vec3::new(vals[3], vals[4], vals[5]));
        }
    }
    let frame = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud");
    PointCloud::new(points, with_normals.then_some(normals), frame)
}

/// ASCII PLY with a `vertex` element carrying x,y,z and optionally nx,ny,nz.
pub fn read_cloud_ply(path: &Path) -> Result<PointCloud, GeometryError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(path, 1, "missing ply magic")),
    }
    let mut vertex_count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    for (i, line) in lines.by_ref() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(parse_err(path, i + 1, "only ascii ply is supported"))
            }
            ["element", "vertex", n] => {
                vertex_count = Some(n.parse::<usize>().map_err(|e| parse_err(path, i + 1, e.to_string()))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push((*name).to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = vertex_count.ok_or_else(|| parse_err(path, 1, "no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(path, 1, "vertex lacks x/y/z")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "fewer vertices than declared"))?;
        let vals = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        if vals.len() < props.len() {
            return Err(parse_err(path, i + 1, "short vertex line"));
        }
        points.push(Vec3::new(vals[x], vals[y], vals[z]));
        if let Some((a, b, c)) = normal_cols {
            normals.push(Vec3::new(vals[a], vals[b], vals[c]));
        }
    }
    let frame = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud");
    PointCloud::new(points, normal_cols.map(|_| normals), frame)
}

pub fn write_cloud_csv(cloud: &PointCloud, path: &Path) -> Result<(), GeometryError> {
    let mut out = String::new();
    match cloud.normals() {
        Some(ns) => {
            out.push_str("x,y,z,nx,ny,nz\n");
            for (p, n) in cloud.points().iter().zip(ns) {
                out.push_str(&format!("{},{},{},{},{},{}\n", p.x, p.y, p.z, n.x, n.y, n.z));
            }
        }
        None => {
            out.push_str("x,y,z\n");
            for p in cloud.points() {
                out.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
            }
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// On-disk graph cache: points and directed k-NN edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphCache {
    pub knn_k: usize,
    pub points: Vec<[f64; 3]>,
    pub edges: Vec<[usize; 2]>,
}

pub fn write_graph_json(graph: &GeometryGraph, path: &Path) -> Result<(), GeometryError> {
    let cache = GraphCache {
        knn_k: graph.knn_k,
        points: graph.cloud.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
        edges: graph.edges.iter().map(|&(a, b)| [a, b]).collect(),
    };
    let text = serde_json::to_string(&cache).map_err(|e| parse_err(path, 0, e.to_string()))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Loads a cached graph; the stored edges must equal a fresh k-NN build.
pub fn read_graph_json(path: &Path) -> Result<GeometryGraph, GeometryError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let cache: GraphCache = serde_json::from_str(&text)
        .map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    let cloud = PointCloud::new(
        cache.points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
        None,
        "graph",
    )?;
    let stored: Vec<(usize, usize)> = cache.edges.iter().map(|e| (e[0], e[1])).collect();
    if stored != knn_edges(cloud.points(), cache.knn_k)? {
        return Err(parse_err(path, 0, "cached edges disagree with the point set"));
    }
    build_knn_graph(&cloud, cache.knn_k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_with_normals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let cloud = crate::dataset::shapes::sphere_cloud(0.05, 20, 2).unwrap();
        write_cloud_csv(&cloud, &path).unwrap();
        let back = read_cloud_csv(&path).unwrap();
        assert_eq!(back.points(), cloud.points());
        assert_eq!(back.normals(), cloud.normals());
    }

    #[test]
    fn csv_bad_header_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(read_cloud_csv(&path), Err(GeometryError::Parse { line: 1, .. })));
        fs::write(&path, "x,y,z\n1,2,3\n1,q,3\n").unwrap();
        assert!(matches!(read_cloud_csv(&path), Err(GeometryError::Parse { line: 3, .. })));
    }

    #[test]
    fn ascii_ply() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n\
             property float nx\nproperty float ny\nproperty float nz\nend_header\n0 0 0 0 0 1\n1 2 3 1 0 0\n",
        )
        .unwrap();
        let c = read_cloud(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.points()[1], Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(c.normals().unwrap()[1], Vec3::x());
    }

    #[test]
    fn graph_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        let cloud = crate::dataset::shapes::sphere_cloud(0.05, 40, 2).unwrap();
        let g = build_knn_graph(&cloud, 8).unwrap();
        write_graph_json(&g, &path).unwrap();
        let back = read_graph_json(&path).unwrap();
        assert_eq!(back.edges, g.edges);
        assert_eq!(back.normalized_adjacency, g.normalized_adjacency);
    }
}
