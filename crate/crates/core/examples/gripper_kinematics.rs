//! Build the two toy grippers, move their joints, and read back keypoints.
//! The chain is also written to and re-read from the JSON chain format.
//!
//!     cargo run --example gripper_kinematics

use geomatch::dataset::toy::{claw, pincer};
use geomatch::geometry::Vec3;
use geomatch::kinematics::{
    axis_angle_to_matrix, keypoint_positions, read_chain_file, rest_pose, write_chain_file, ChainFile,
    Pose,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for ee in [pincer(256, 1)?, claw(256, 2)?] {
        println!("{}: {} links, {} joints", ee.name, ee.chain.links().len(), ee.chain.dof());
        for (name, [lo, hi]) in ee.chain.active_joint_names().iter().zip(ee.chain.joint_limits()) {
            println!("  {name:<10} [{lo:+.2}, {hi:+.2}] rad");
        }

        let rest = keypoint_positions(&ee, &rest_pose(&ee.chain))?;
        let closed = Pose::new(
            Vec3::new(0.0, 0.1, 0.0),
            &axis_angle_to_matrix(&Vec3::new(0.0, 0.0, 0.3)),
            vec![0.8; ee.chain.dof()],
        )?;
        let moved = keypoint_positions(&ee, &closed)?;
        for (i, (a, b)) in rest.iter().zip(&moved).enumerate() {
            println!("  keypoint {i}: rest {:>7.4?} -> closed {:>7.4?}", a.as_slice(), b.as_slice());
        }

        let dir = tempfile::tempdir()?;
        let path = dir.path().join(format!("{}.json", ee.name));
        write_chain_file(&ChainFile::from_model(&ee), &path)?;
        let back = read_chain_file(&path)?.to_model(&ee.name, ee.rest_cloud.clone(), 8)?;
        let again = keypoint_positions(&back, &closed)?;
        let drift = moved.iter().zip(&again).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        println!("  chain file round trip: max keypoint drift {drift:.1e} m");
    }
    Ok(())
}
