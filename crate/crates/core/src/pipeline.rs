//! File-to-file pipeline stages behind the command-line tool. Each stage
//! reads only what earlier stages wrote plus a [`RunConfig`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};
use crate::contact_maps::MapCache;
use crate::dataset::{
    filter_by_ee, generate_toy_dataset, load_assets, load_records, Dataset,
    DatasetError, DatasetManifest, SplitName,
};
use crate::diffnet::{load_weights_into, save_weights, WeightIoError};
use crate::evaluation::{contact_error, evaluate_grasp, summarize, EvalError, EvalRow, EvalSummary, GraspOutcome};
use crate::geometry::io::{read_cloud, write_cloud_csv};
use crate::geometry::{crop_table_top, perturb_cloud, GeometryError, PointCloud};
use crate::ik::{solve_ik_for_contacts, IkReport};
use crate::inference::{propose_grasps, GraspProposal, InferenceError, ProposalRecord};
use crate::kinematics::{Pose, NUM_KEYPOINTS};
use crate::model::{loss_log_csv, train as train_model, EpochLoss, GeoMatchModel, TrainError};
use crate::plot::{line_plot_svg, Series};

pub const LOSS_FILE: &str = "loss.csv";
pub const RUN_CONFIG_FILE: &str = "config.json";
pub const EVAL_CSV: &str = "eval.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Weights(#[from] WeightIoError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// 1 for usage and config ranges, 2 for data and schema, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Config(ConfigError::Invalid(_) | ConfigError::SeedEnv(_)) => 1,
            PipelineError::Eval(EvalError::Config(_)) => 1,
            PipelineError::Config(_)
            | PipelineError::Dataset(_)
            | PipelineError::Geometry(_)
            | PipelineError::Weights(_)
            | PipelineError::Io { .. }
            | PipelineError::Schema { .. }
            | PipelineError::Train(TrainError::EmptyDataset) => 2,
            PipelineError::Train(_) | PipelineError::Inference(_) | PipelineError::Eval(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    write_file(path, out)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            PipelineError::Dataset(DatasetError::MissingFile(path.to_path_buf()))
        } else {
            PipelineError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| PipelineError::Schema {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

/// Generates the toy dataset into `out` using the config's sizes and seed.
pub fn gen_data(out: &Path, cfg: &RunConfig) -> Result<DatasetManifest> {
    Ok(generate_toy_dataset(cfg.seed, out, &cfg.toy_options()?)?)
}

/// One contact-map file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    /// 1-based line in the records file.
    pub record: usize,
    pub object: String,
    pub ee: String,
    /// Nearest object vertex to each posed keypoint.
    pub contacts: [usize; NUM_KEYPOINTS],
    pub maps: MapCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapsReport {
    pub written: Vec<PathBuf>,
    /// 1-based record lines skipped because no keypoint touched the object.
    pub skipped: Vec<usize>,
}

/// Writes `record_NNNNN.json` per usable record into `out`.
pub fn maps(manifest: &Path, out: &Path, cfg: &RunConfig) -> Result<MapsReport> {
    let dataset = Dataset::open(manifest)?;
    let loaded = load_records(&dataset, &cfg.sample_config())?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut used = (0..dataset.records.len()).filter(|i| !loaded.skipped.contains(i));
    let mut written = Vec::with_capacity(loaded.samples.len());
    for s in &loaded.samples {
        let index = used.next().expect("one record per sample");
        let file = MapFile {
            record: index + 1,
            object: s.object_id.clone(),
            ee: s.ee_id.clone(),
            contacts: s.contacts,
            maps: s.maps.to_cache(),
        };
        let path = out.join(format!("record_{:05}.json", index + 1));
        write_file(&path, to_json_pretty(&file))?;
        written.push(path);
    }
    Ok(MapsReport {
        written,
        skipped: loaded.skipped.iter().map(|i| i + 1).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GeoMatchModel,
    pub log: Vec<EpochLoss>,
    pub samples: usize,
}

/// Trains on the training-split records (optionally one subset of
/// end-effectors) and writes weights, `config.json` and `loss.csv` to `out`.
pub fn train(manifest: &Path, out: &Path, cfg: &RunConfig, ee_filter: Option<&[String]>) -> Result<TrainOutcome> {
    let mut dataset = Dataset::open(manifest)?;
    if let Some(ids) = ee_filter {
        dataset = filter_by_ee(&dataset, ids)?;
    }
    let loaded = load_records(&dataset, &cfg.sample_config())?;
    let samples: Vec<_> = loaded.in_objects(&dataset.manifest.split.train).cloned().collect();
    log::info!(
        "training on {} samples ({} skipped) for {} epochs",
        samples.len(),
        loaded.skipped.len(),
        cfg.epochs
    );
    let mut model = GeoMatchModel::new(cfg.model.clone(), cfg.seed);
    let log = train_model(&mut model, &samples, &cfg.train_config(), |e| {
        log::info!("epoch {}: loss {:.6} (f {:.6}, m {:.6})", e.epoch, e.total, e.loss_f, e.loss_m)
    })?;
    save_weights(&model.store, out)?;
    write_file(&out.join(RUN_CONFIG_FILE), to_json_pretty(cfg))?;
    write_file(&out.join(LOSS_FILE), loss_log_csv(&log))?;
    Ok(TrainOutcome {
        model,
        log,
        samples: samples.len(),
    })
}

/// Restores a model and the config it was trained with.
pub fn load_model(weights: &Path) -> Result<(GeoMatchModel, RunConfig)> {
    let cfg = RunConfig::load(&weights.join(RUN_CONFIG_FILE))?;
    let mut model = GeoMatchModel::new(cfg.model.clone(), 0);
    load_weights_into(&mut model.store, weights)?;
    Ok((model, cfg))
}

/// Proposals for every (object in `split`, end-effector) pair.
pub fn infer_with_model(
    model: &GeoMatchModel,
    knn_k: usize,
    manifest: &Path,
    split: SplitName,
    ranks: &[usize],
) -> Result<Vec<ProposalRecord>> {
    if ranks.is_empty() {
        return Err(PipelineError::Usage("no ranks given".into()));
    }
    let dataset = Dataset::open(manifest)?;
    let assets = load_assets(&dataset, knn_k)?;
    let mut out = Vec::new();
    for object_id in dataset.split_ids(split) {
        let object = &assets.objects[object_id];
        for ee_entry in &dataset.manifest.ees {
            let ee = &assets.ees[&ee_entry.id];
            for p in propose_grasps(model, object, ee, ranks)? {
                out.push(ProposalRecord::new(object_id, &ee_entry.id, &p));
            }
        }
    }
    Ok(out)
}

/// Loads `weights`, proposes grasps and writes them as JSON lines.
pub fn infer(weights: &Path, manifest: &Path, split: SplitName, ranks: &[usize], out: &Path) -> Result<Vec<ProposalRecord>> {
    let (model, cfg) = load_model(weights)?;
    let records = infer_with_model(&model, cfg.knn_k, manifest, split, ranks)?;
    write_jsonl(out, &records)?;
    Ok(records)
}

/// Solves IK for every proposal against its pre-grasp targets. Solver
/// errors become `Failed` reports rather than aborting the batch.
pub fn ik(proposals: &Path, manifest: &Path, out: &Path, cfg: &RunConfig) -> Result<Vec<IkReport>> {
    let dataset = Dataset::open(manifest)?;
    let assets = load_assets(&dataset, cfg.knn_k)?;
    let records: Vec<ProposalRecord> = read_jsonl(proposals)?;
    let opts = cfg.ik_options();
    let mut reports = Vec::with_capacity(records.len());
    for (line, p) in records.iter().enumerate() {
        let schema = |message: String| PipelineError::Schema {
            path: proposals.to_path_buf(),
            line: line + 1,
            message,
        };
        let object = assets
            .objects
            .get(&p.object)
            .ok_or_else(|| schema(format!("unknown object {}", p.object)))?;
        let ee = assets.ees.get(&p.ee).ok_or_else(|| schema(format!("unknown end-effector {}", p.ee)))?;
        let contacts = p
            .contact_vertices()
            .ok_or_else(|| schema(format!("{} contacts, expected {NUM_KEYPOINTS}", p.contacts.len())))?;
        if let Some(&bad) = contacts.iter().find(|&&v| v >= object.len()) {
            return Err(schema(format!("vertex {bad} out of range for {}", p.object)));
        }
        let report = match solve_ik_for_contacts(ee, &contacts, &object.cloud, &opts) {
            Ok(r) => IkReport::from_result(&p.object, &p.ee, p.rank, &contacts, &r),
            Err(e) => {
                log::warn!("{} / {} rank {}: IK failed: {e}", p.object, p.ee, p.rank);
                IkReport::failed(&p.object, &p.ee, p.rank, &contacts)
            }
        };
        reports.push(report);
    }
    write_jsonl(out, &reports)?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub rows: Vec<EvalRow>,
    pub summary: EvalSummary,
}

/// Wrench-feasibility test of every solved pose; writes `eval.csv` and
/// `summary.json` into `out`.
pub fn eval(ik_reports: &Path, manifest: &Path, out: &Path, cfg: &RunConfig) -> Result<EvalOutput> {
    cfg.eval.validate()?;
    let dataset = Dataset::open(manifest)?;
    let assets = load_assets(&dataset, cfg.knn_k)?;
    let reports: Vec<IkReport> = read_jsonl(ik_reports)?;
    let mut rows = Vec::with_capacity(reports.len());
    let mut successful: BTreeMap<String, Vec<Pose>> = BTreeMap::new();
    for (line, r) in reports.iter().enumerate() {
        let schema = |message: String| PipelineError::Schema {
            path: ik_reports.to_path_buf(),
            line: line + 1,
            message,
        };
        let object = assets
            .objects
            .get(&r.object)
            .ok_or_else(|| schema(format!("unknown object {}", r.object)))?;
        let ee = assets.ees.get(&r.ee).ok_or_else(|| schema(format!("unknown end-effector {}", r.ee)))?;
        let outcome = match &r.pose {
            Some(pose) => {
                if pose.theta.len() != ee.chain.dof() {
                    return Err(schema(format!("pose has {} joints", pose.theta.len())));
                }
                let mut o = evaluate_grasp(&object.cloud, ee, pose, &cfg.eval)?;
                if r.contacts.len() == NUM_KEYPOINTS && r.contacts.iter().all(|&v| v < object.len()) {
                    let proposal = GraspProposal {
                        contacts: std::array::from_fn(|i| r.contacts[i]),
                        coordinates: std::array::from_fn(|i| object.cloud.points()[r.contacts[i]].into()),
                        keypoint0_rank: r.rank,
                        score: 0.0,
                    };
                    o.contact_errors = contact_error(ee, pose, &proposal)?;
                }
                if o.success {
                    successful.entry(r.ee.clone()).or_default().push(pose.clone());
                }
                o
            }
            None => GraspOutcome {
                success: false,
                resisted: [false; 6],
                contact_errors: [f64::NAN; NUM_KEYPOINTS],
                active: vec![],
            },
        };
        rows.push(EvalRow::new(&r.object, &r.ee, r.rank, &outcome));
    }
    let summary = summarize(&rows, &successful);
    fs::create_dir_all(out).map_err(io_err(out))?;
    let csv_path = out.join(EVAL_CSV);
    let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| PipelineError::Io {
        path: csv_path.clone(),
        source: e.into(),
    })?;
    for row in &rows {
        writer.serialize(row).map_err(|e| PipelineError::Io {
            path: csv_path.clone(),
            source: e.into(),
        })?;
    }
    writer.flush().map_err(io_err(&csv_path))?;
    write_file(&out.join(SUMMARY_FILE), to_json_pretty(&summary))?;
    Ok(EvalOutput { rows, summary })
}

/// Cloud perturbations for robustness runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentMode {
    /// Clipped Gaussian noise with this σ (meters).
    Noise(f64),
    /// Drop the bottom sixth of the z range.
    CropTable,
    /// Noise, then the table crop.
    NoiseAndCrop(f64),
}

pub fn augment_cloud(cloud: &PointCloud, mode: AugmentMode, seed: u64) -> Result<PointCloud> {
    Ok(match mode {
        AugmentMode::Noise(sigma) => perturb_cloud(cloud, sigma, seed)?,
        AugmentMode::CropTable => crop_table_top(cloud)?,
        AugmentMode::NoiseAndCrop(sigma) => crop_table_top(&perturb_cloud(cloud, sigma, seed)?)?,
    })
}

/// Reads a cloud, perturbs it and writes CSV to `out`.
pub fn augment(input: &Path, mode: AugmentMode, seed: u64, out: &Path) -> Result<PointCloud> {
    if !input.exists() {
        return Err(DatasetError::MissingFile(input.to_path_buf()).into());
    }
    let cloud = augment_cloud(&read_cloud(input)?, mode, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    write_cloud_csv(&cloud, out)?;
    Ok(cloud)
}

/// Copies a dataset into `out_dir` with every object cloud augmented.
/// Gripper files and records are copied unchanged. Returns the new
/// manifest path.
pub fn augment_dataset(manifest: &Path, mode: AugmentMode, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    let dataset = Dataset::open(manifest)?;
    let mut copy = dataset.clone();
    for (i, o) in dataset.manifest.objects.iter().enumerate() {
        let dst = out_dir.join(&o.cloud);
        augment(&dataset.path(&o.cloud), mode, crate::rng::derive_seed(seed, i as u64), &dst)?;
    }
    for e in &dataset.manifest.ees {
        for rel in [&e.chain, &e.cloud] {
            let (src, dst) = (dataset.path(rel), out_dir.join(rel));
            if let Some(dir) = dst.parent() {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            fs::copy(&src, &dst).map_err(io_err(&src))?;
        }
    }
    copy.base_dir = out_dir.to_path_buf();
    let path = out_dir.join("manifest.json");
    copy.save_manifest(&path)?;
    Ok(path)
}

/// Reads an `epoch,loss_total,loss_f,loss_m` CSV.
pub fn read_loss_csv(path: &Path) -> Result<Vec<EpochLoss>> {
    #[derive(Deserialize)]
    struct Row {
        epoch: usize,
        loss_total: f64,
        loss_f: f64,
        loss_m: f64,
    }
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()).into());
    }
    let schema = |line: usize, message: String| PipelineError::Schema {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| schema(1, e.to_string()))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let r = row.map_err(|e| schema(i + 2, e.to_string()))?;
        out.push(EpochLoss {
            epoch: r.epoch,
            total: r.loss_total,
            loss_f: r.loss_f,
            loss_m: r.loss_m,
        });
    }
    Ok(out)
}

pub fn loss_svg(log: &[EpochLoss]) -> String {
    let series = |label: &str, color: &'static str, f: fn(&EpochLoss) -> f64| Series {
        label: label.into(),
        color,
        points: log.iter().map(|e| (e.epoch as f64, f(e))).collect(),
    };
    line_plot_svg(
        "Training loss",
        "epoch",
        "loss",
        &[
            series("total", "black", |e| e.total),
            series("score map", "steelblue", |e| e.loss_f),
            series("autoregressive", "darkorange", |e| e.loss_m),
        ],
    )
}

/// Renders a loss CSV to SVG.
pub fn plot(loss_csv: &Path, out: &Path) -> Result<()> {
    let log = read_loss_csv(loss_csv)?;
    write_file(out, loss_svg(&log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_records, write_records};

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(PipelineError::Usage("x".into()).exit_code(), 1);
        assert_eq!(PipelineError::Config(ConfigError::Invalid("x".into())).exit_code(), 1);
        assert_eq!(PipelineError::Dataset(DatasetError::UnknownEe("x".into())).exit_code(), 2);
        assert_eq!(PipelineError::Train(TrainError::EmptyDataset).exit_code(), 2);
        assert_eq!(PipelineError::Train(TrainError::NonFinite(3)).exit_code(), 3);
    }

    #[test]
    fn jsonl_schema_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        fs::write(&path, "{\"object\":\"a\",\"ee\":\"b\",\"rank\":0,\"contacts\":[],\"score\":0}\n\n{oops}\n").unwrap();
        match read_jsonl::<ProposalRecord>(&path) {
            Err(PipelineError::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loss_csv_round_trip_and_plot() {
        let dir = tempfile::tempdir().unwrap();
        let log: Vec<EpochLoss> = (1..=4)
            .map(|e| EpochLoss {
                epoch: e,
                total: 10.0 / e as f64,
                loss_f: 6.0 / e as f64,
                loss_m: 4.0 / e as f64,
            })
            .collect();
        let csv_path = dir.path().join(LOSS_FILE);
        fs::write(&csv_path, loss_log_csv(&log)).unwrap();
        assert_eq!(read_loss_csv(&csv_path).unwrap(), log);
        let svg = dir.path().join("loss.svg");
        plot(&csv_path, &svg).unwrap();
        assert_eq!(fs::read_to_string(&svg).unwrap().matches("<polyline").count(), 3);
    }

    #[test]
    fn records_written_by_dataset_are_readable_as_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        write_records(&path, &[]).unwrap();
        assert!(read_records(&path).unwrap().is_empty());
        assert!(read_jsonl::<ProposalRecord>(&path).unwrap().is_empty());
    }
}
