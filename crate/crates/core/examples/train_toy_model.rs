//! Train the contact model in-process and check how well it has fit: the
//! loss curve, and how many decoded contacts land near the true ones.
//!
//!     cargo run --release --example train_toy_model [-- EPOCHS]

use geomatch::contact_maps::DEFAULT_M;
use geomatch::dataset::{generate_toy_dataset, load_records, Dataset, SampleConfig, ToyOptions};
use geomatch::inference::seeded_contact_hit_rate;
use geomatch::model::{train, GeoMatchModel, ModelConfig, TrainConfig};
use geomatch::pipeline::loss_svg;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(30);
    let dir = tempfile::tempdir()?;
    let mut toy = ToyOptions {
        grasps_per_pair: 1,
        ..ToyOptions::default()
    };
    toy.objects.retain(|o| o.id == "sphere_small" || o.id == "box_tall");
    generate_toy_dataset(0, dir.path(), &toy)?;
    let loaded = load_records(&Dataset::open(&dir.path().join("manifest.json"))?, &SampleConfig::default())?;

    let mut model = GeoMatchModel::new(ModelConfig::default(), 0);
    println!("{} samples, {} parameters", loaded.samples.len(), model.parameter_count());
    let before = seeded_contact_hit_rate(&model, &loaded.samples, DEFAULT_M)?.unwrap_or(0.0);

    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let log = train(&mut model, &loaded.samples, &cfg, |e| {
        if e.epoch % 10 == 0 || e.epoch == 1 {
            println!("epoch {:>4}: total {:>9.4}  score map {:>9.4}  heads {:>9.4}", e.epoch, e.total, e.loss_f, e.loss_m);
        }
    })?;
    let after = seeded_contact_hit_rate(&model, &loaded.samples, DEFAULT_M)?.unwrap_or(0.0);
    println!(
        "final / first loss {:.3}; contacts within {DEFAULT_M} neighbors of the truth: {:.0}% -> {:.0}%",
        log[log.len() - 1].total / log[0].total,
        before * 100.0,
        after * 100.0
    );
    let svg = dir.path().join("loss.svg");
    std::fs::write(&svg, loss_svg(&log))?;
    println!("loss curve: {} bytes of SVG", std::fs::metadata(&svg)?.len());
    Ok(())
}
