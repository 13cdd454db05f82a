//! Generate the synthetic dataset, reload it, and look at the supervision
//! each grasp record turns into.
//!
//!     cargo run --example toy_dataset [-- OUT_DIR]

use std::path::PathBuf;

use geomatch::dataset::{generate_toy_dataset, load_records, Dataset, SampleConfig, ToyOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let manifest = generate_toy_dataset(7, &out, &ToyOptions::default())?;
    println!(
        "{} objects ({} train / {} val), {} grippers -> {}",
        manifest.objects.len(),
        manifest.split.train.len(),
        manifest.split.val.len(),
        manifest.ees.len(),
        out.display()
    );

    let dataset = Dataset::open(&out.join("manifest.json"))?;
    let loaded = load_records(&dataset, &SampleConfig::default())?;
    println!("{} records, {} usable, {} skipped", dataset.records.len(), loaded.samples.len(), loaded.skipped.len());

    println!("{:<16} {:<8} {:>9} {:>11}  contact vertices", "object", "gripper", "touching", "positives");
    for s in loaded.samples.iter().step_by(4) {
        let touching = s.maps.cg.iter().filter(|&&c| c > 0).count();
        let positives: usize = s.maps.co.iter().flatten().filter(|&&c| c > 0).count();
        println!(
            "{:<16} {:<8} {:>7}/6 {:>11}  {:?}",
            s.object_id, s.ee_id, touching, positives, s.contacts
        );
    }
    Ok(())
}
