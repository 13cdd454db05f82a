//! Sample an object, estimate normals from the raw points, build the k-NN
//! graph the encoders run on, and apply both cloud perturbations.
//!
//!     cargo run --example point_cloud_graph

use geomatch::dataset::shapes::cylinder_cloud;
use geomatch::geometry::{build_knn_graph, crop_table_top, estimate_normals, perturb_cloud};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cloud = cylinder_cloud(0.03, 0.05, 512, 1)?;
    println!("{} points, centroid {:?}", cloud.len(), cloud.centroid().as_slice());

    // Re-estimate normals as if the cloud came from a sensor.
    let est = estimate_normals(&cloud.clone().without_normals(), 16)?;
    let truth = cloud.normals().unwrap();
    let est_normals = est.cloud.normals().unwrap();
    let mean_angle = truth
        .iter()
        .zip(est_normals)
        .map(|(a, b)| a.dot(b).clamp(-1.0, 1.0).acos())
        .sum::<f64>()
        / truth.len() as f64;
    println!(
        "estimated normals: mean angle to truth {:.2} deg, {} degenerate neighborhoods",
        mean_angle.to_degrees(),
        est.degenerate.len()
    );

    let graph = build_knn_graph(&cloud, 8)?;
    let adj = &graph.normalized_adjacency;
    println!(
        "k-NN graph: {} undirected edges, {} nonzeros in the normalized adjacency",
        graph.edges.len(),
        adj.entries().len()
    );

    let noisy = perturb_cloud(&cloud, 0.002, 7)?;
    let worst = cloud
        .points()
        .iter()
        .zip(noisy.points())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    println!("noise sigma 2 mm: largest displacement {:.2} mm", worst * 1e3);

    let cropped = crop_table_top(&cloud)?;
    println!("table crop: {} -> {} points", cloud.len(), cropped.len());
    Ok(())
}
