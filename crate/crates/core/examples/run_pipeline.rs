//! Every stage in one process, through the same functions the `geomatch`
//! binary calls: generate data, write contact maps, train, propose grasps,
//! solve IK, evaluate, and rerun inference on a noisy, table-cropped copy.
//!
//!     cargo run --release --example run_pipeline [-- EPOCHS [OUT_DIR]]
//!
//! Uses two objects and one grasp per pair so a short run finishes quickly.

use std::path::PathBuf;

use geomatch::config::RunConfig;
use geomatch::dataset::SplitName;
use geomatch::pipeline::{self, AugmentMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let tmp = tempfile::tempdir()?;
    let root = args.next().map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let mut cfg = RunConfig::from_env_defaults()?;
    cfg.epochs = epochs;
    cfg.grasps_per_pair = 1;
    cfg.toy_objects = Some(vec!["sphere_small".into(), "box_tall".into()]);

    let data = root.join("data");
    let manifest = data.join("manifest.json");
    pipeline::gen_data(&data, &cfg)?;
    let maps = pipeline::maps(&manifest, &root.join("maps"), &cfg)?;
    println!("maps: {} written, {} skipped", maps.written.len(), maps.skipped.len());

    let weights = root.join("weights");
    let trained = pipeline::train(&manifest, &weights, &cfg, None)?;
    let (first, last) = (trained.log[0].total, trained.log[trained.log.len() - 1].total);
    println!("train: {} samples, loss {first:.3} -> {last:.3} over {epochs} epochs", trained.samples);
    pipeline::plot(&weights.join(pipeline::LOSS_FILE), &root.join("loss.svg"))?;

    // With two objects the validation split is empty, so propose on train.
    let proposals = root.join("proposals.jsonl");
    let props = pipeline::infer(&weights, &manifest, SplitName::Train, &cfg.ranks, &proposals)?;
    println!("infer: {} proposals", props.len());

    let ik = root.join("ik.jsonl");
    let reports = pipeline::ik(&proposals, &manifest, &ik, &cfg)?;
    for r in &reports {
        let worst = r.per_keypoint_mm.iter().fold(0.0_f64, |a, &b| a.max(b));
        println!("  ik {:<13} {:<7} rank {:>3}: {:?}, worst keypoint {:.1} mm", r.object, r.ee, r.rank, r.status, worst);
    }

    let eval = pipeline::eval(&ik, &manifest, &root.join("eval"), &cfg)?;
    for s in &eval.summary.per_ee {
        println!("eval {s:?}");
    }
    println!("eval: {:.1}% of {} grasps succeed", eval.summary.success_percent, eval.summary.evaluated);

    let noisy = pipeline::augment_dataset(&manifest, AugmentMode::NoiseAndCrop(0.002), cfg.seed, &root.join("augmented"))?;
    let zero_shot = pipeline::infer(&weights, &noisy, SplitName::Train, &cfg.ranks, &root.join("augmented_proposals.jsonl"))?;
    println!("zero-shot on augmented clouds: {} proposals", zero_shot.len());
    println!("outputs under {}", root.display());
    Ok(())
}
