//! Inverse kinematics in two settings: recovering a known pose from its own
//! keypoints, and fitting a gripper to six contacts on an object.
//!
//!     cargo run --example solve_ik

use geomatch::dataset::{generate_toy_dataset, load_records, Dataset, SampleConfig, ToyOptions};
use geomatch::dataset::toy::pincer;
use geomatch::geometry::Vec3;
use geomatch::ik::{solve_ik_for_contacts, solve_ik_from, IkOptions};
use geomatch::kinematics::{axis_angle_to_matrix, keypoint_positions, Pose};
use geomatch::rng::SeededRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ee = pincer(256, 1)?;
    let opts = IkOptions::default();
    let mut rng = SeededRng::new(4);

    println!("known poses, solved from a perturbed start:");
    for trial in 0..5 {
        let axis = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * 0.5;
        let theta: Vec<f64> = ee.chain.joint_limits().iter().map(|[lo, hi]| rng.uniform_range(*lo, *hi)).collect();
        let truth = Pose::new(Vec3::new(0.02, 0.1, -0.01), &axis_angle_to_matrix(&axis), theta.clone())?;
        let targets = keypoint_positions(&ee, &truth)?;

        let nudge = Vec3::new(0.1, -0.1, 0.05);
        let start = Pose::new(
            truth.translation() + Vec3::new(0.01, -0.01, 0.005),
            &(axis_angle_to_matrix(&nudge) * truth.rotation()?),
            theta.iter().map(|t| t * 0.5).collect(),
        )?;
        let r = solve_ik_from(&ee, &targets, &start, &opts)?;
        let worst = r.per_keypoint.iter().fold(0.0_f64, |a, &b| a.max(b));
        println!("  trial {trial}: {:?} after {} iterations, worst keypoint {:.1e} m", r.status, r.iterations, worst);
    }

    println!("fitting to dataset contacts (pre-grasp targets 5 mm off the surface):");
    let dir = tempfile::tempdir()?;
    let toy = ToyOptions {
        grasps_per_pair: 1,
        ..ToyOptions::default()
    };
    generate_toy_dataset(3, dir.path(), &toy)?;
    let loaded = load_records(&Dataset::open(&dir.path().join("manifest.json"))?, &SampleConfig::default())?;
    for s in &loaded.samples {
        let r = solve_ik_for_contacts(&s.ee, &s.contacts, &s.object.cloud, &opts)?;
        let mean = r.per_keypoint.iter().sum::<f64>() / 6.0;
        println!(
            "  {:<14} {:<7} {:?}, mean keypoint-to-target {:.2} mm",
            s.object_id,
            s.ee_id,
            r.status,
            mean * 1e3
        );
    }
    Ok(())
}
