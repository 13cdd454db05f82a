//! Turn a model into grasp proposals: score every object vertex for the
//! first keypoint, seed rollouts at several score ranks, and decode the
//! remaining five contacts.
//!
//!     cargo run --release --example propose_grasps [-- WEIGHTS_DIR MANIFEST]
//!
//! Without arguments a briefly trained model on a fresh toy set is used.

use std::path::PathBuf;

use geomatch::config::RunConfig;
use geomatch::dataset::{load_assets, Dataset, SplitName};
use geomatch::inference::{propose_grasps, InferenceContext, DEFAULT_RANKS};
use geomatch::pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let mut args = std::env::args().skip(1);
    let (weights, manifest) = match (args.next(), args.next()) {
        (Some(w), Some(m)) => (PathBuf::from(w), PathBuf::from(m)),
        _ => {
            let mut cfg = RunConfig::from_env_defaults()?;
            cfg.epochs = 10;
            cfg.grasps_per_pair = 1;
            cfg.toy_objects = Some(vec!["box_tall".into()]);
            let data = tmp.path().join("data");
            pipeline::gen_data(&data, &cfg)?;
            let manifest = data.join("manifest.json");
            pipeline::train(&manifest, &tmp.path().join("weights"), &cfg, None)?;
            (tmp.path().join("weights"), manifest)
        }
    };

    let (model, cfg) = pipeline::load_model(&weights)?;
    let dataset = Dataset::open(&manifest)?;
    let assets = load_assets(&dataset, cfg.knn_k)?;
    let split = if dataset.manifest.split.val.is_empty() { SplitName::Train } else { SplitName::Val };
    for object_id in dataset.split_ids(split) {
        let object = &assets.objects[object_id];
        for (ee_id, ee) in &assets.ees {
            let ctx = InferenceContext::new(&model, object, ee)?;
            let spread = ctx.keypoint0_scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
            println!("{object_id} / {ee_id}: keypoint-0 scores in [{:.3}, {:.3}]", spread.0, spread.1);
            for p in propose_grasps(&model, object, ee, &DEFAULT_RANKS)? {
                println!("  rank {:>3}: contacts {:?}, score {:.3}", p.keypoint0_rank, p.contacts, p.score);
            }
        }
    }
    Ok(())
}
