//! Grasp records, dataset manifests, object/end-effector loading, and the
//! synthetic toy dataset.

pub mod shapes;
pub mod toy;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contact_maps::{ContactMapError, ContactMapSet, ThresholdMetric, DEFAULT_CONTACT_THRESHOLD, DEFAULT_M};
use crate::geometry::io::{read_cloud, write_cloud_csv};
use crate::geometry::{
    build_knn_graph, estimate_normals, GeometryError, GeometryGraph, PointCloud, DEFAULT_KNN_K,
    DEFAULT_NORMAL_NEIGHBORS,
};
use crate::kinematics::chain_file::{read_chain_file, write_chain_file, ChainFile};
use crate::kinematics::{keypoint_positions, EndEffectorModel, KinematicsError, Pose};
use crate::model::TrainingSample;
use crate::rng::{derive_seed, SeededRng};
use shapes::Shape;
use toy::{grasps_for_pair, GripperSpec, ToyError};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("unknown end-effector {0}")]
    UnknownEe(String),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    ContactMap(#[from] ContactMapError),
    #[error(transparent)]
    Toy(#[from] ToyError),
    #[error("generation failed: {0}")]
    Generation(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile(path.to_path_buf())
        } else {
            DatasetError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

/// One grasp: which object, which gripper, and the gripper pose in the
/// object's frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspRecord {
    pub object_id: String,
    pub ee_id: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub id: String,
    pub cloud: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EeEntry {
    pub id: String,
    pub chain: String,
    /// Rest-pose surface cloud; keypoint vertex indices refer to it.
    pub cloud: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub objects: Vec<ObjectEntry>,
    pub ees: Vec<EeEntry>,
    pub records: String,
    pub split: Split,
}

/// Shuffles object ids with `seed` and holds out `⌊n/5⌋` for validation.
pub fn split_objects(ids: &[String], seed: u64) -> Split {
    let mut sorted = ids.to_vec();
    sorted.sort();
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut sorted);
    let n_val = sorted.len() / 5;
    let mut val = sorted[..n_val].to_vec();
    let mut train = sorted[n_val..].to_vec();
    val.sort();
    train.sort();
    Split { train, val }
}

/// A manifest plus its records, held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub base_dir: PathBuf,
    pub records: Vec<GraspRecord>,
}

impl Dataset {
    pub fn open(manifest_path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| DatasetError::Schema {
            path: manifest_path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if manifest.format_version != MANIFEST_FORMAT_VERSION {
            return Err(DatasetError::Schema {
                path: manifest_path.to_path_buf(),
                line: 1,
                message: format!("unsupported format_version {}", manifest.format_version),
            });
        }
        let base_dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let records_path = base_dir.join(&manifest.records);
        let records = read_records(&records_path)?;
        let dataset = Self {
            manifest,
            base_dir,
            records,
        };
        dataset.validate(manifest_path)?;
        Ok(dataset)
    }

    fn validate(&self, path: &Path) -> Result<(), DatasetError> {
        let schema = |message: String| DatasetError::Schema {
            path: path.to_path_buf(),
            line: 1,
            message,
        };
        let split = &self.manifest.split;
        if let Some(id) = split.train.iter().find(|id| split.val.contains(id)) {
            return Err(schema(format!("object {id} is in both train and val")));
        }
        for o in &self.manifest.objects {
            if !split.train.contains(&o.id) && !split.val.contains(&o.id) {
                return Err(schema(format!("object {} is in no split", o.id)));
            }
        }
        for r in &self.records {
            if !self.manifest.objects.iter().any(|o| o.id == r.object_id) {
                return Err(DatasetError::UnknownObject(r.object_id.clone()));
            }
            if !self.manifest.ees.iter().any(|e| e.id == r.ee_id) {
                return Err(DatasetError::UnknownEe(r.ee_id.clone()));
            }
        }
        Ok(())
    }

    /// Writes the manifest (and its records file) into `manifest_path`'s
    /// directory. Object and gripper files are not copied.
    pub fn save_manifest(&self, manifest_path: &Path) -> Result<(), DatasetError> {
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        write_records(&dir.join(&self.manifest.records), &self.records)?;
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(manifest_path, text + "\n").map_err(io_err(manifest_path))
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    pub fn is_train(&self, object_id: &str) -> bool {
        self.manifest.split.train.iter().any(|o| o == object_id)
    }

    pub fn split_ids(&self, split: SplitName) -> &[String] {
        match split {
            SplitName::Train => &self.manifest.split.train,
            SplitName::Val => &self.manifest.split.val,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            other => Err(format!("unknown split {other:?} (expected train or val)")),
        }
    }
}

/// Restricts records and end-effector entries to `ee_ids`; objects and the
/// split are unchanged.
pub fn filter_by_ee(dataset: &Dataset, ee_ids: &[String]) -> Result<Dataset, DatasetError> {
    for id in ee_ids {
        if !dataset.manifest.ees.iter().any(|e| &e.id == id) {
            return Err(DatasetError::UnknownEe(id.clone()));
        }
    }
    let mut out = dataset.clone();
    out.manifest.ees.retain(|e| ee_ids.contains(&e.id));
    out.records.retain(|r| ee_ids.contains(&r.ee_id));
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<GraspRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| DatasetError::Schema {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_records(path: &Path, records: &[GraspRecord]) -> Result<(), DatasetError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Supervision settings used when turning records into samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub knn_k: usize,
    pub m: usize,
    pub threshold: f64,
    pub metric: ThresholdMetric,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            knn_k: DEFAULT_KNN_K,
            m: DEFAULT_M,
            threshold: DEFAULT_CONTACT_THRESHOLD,
            metric: ThresholdMetric::Euclidean,
        }
    }
}

/// Reads an object cloud; estimates normals when the file has none.
pub fn load_object_cloud(path: &Path) -> Result<PointCloud, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let mut cloud = read_cloud(path)?;
    if cloud.normals().is_none() {
        log::warn!("{} has no normals; estimating them", path.display());
        cloud = estimate_normals(&cloud, DEFAULT_NORMAL_NEIGHBORS)?.cloud;
    }
    cloud.set_frame("object");
    Ok(cloud)
}

pub fn load_ee(dataset: &Dataset, entry: &EeEntry, knn_k: usize) -> Result<EndEffectorModel, DatasetError> {
    let chain_path = dataset.path(&entry.chain);
    let cloud_path = dataset.path(&entry.cloud);
    for p in [&chain_path, &cloud_path] {
        if !p.exists() {
            return Err(DatasetError::MissingFile(p.clone()));
        }
    }
    let chain = read_chain_file(&chain_path)?;
    let cloud = read_cloud(&cloud_path)?;
    Ok(chain.to_model(&entry.id, cloud, knn_k)?)
}

/// Objects and grippers of a dataset, with their graphs built.
#[derive(Debug, Clone)]
pub struct Assets {
    pub objects: BTreeMap<String, Arc<GeometryGraph>>,
    pub ees: BTreeMap<String, Arc<EndEffectorModel>>,
}

pub fn load_assets(dataset: &Dataset, knn_k: usize) -> Result<Assets, DatasetError> {
    let mut objects = BTreeMap::new();
    for o in &dataset.manifest.objects {
        let cloud = load_object_cloud(&dataset.path(&o.cloud))?;
        objects.insert(o.id.clone(), Arc::new(build_knn_graph(&cloud, knn_k)?));
    }
    let mut ees = BTreeMap::new();
    for e in &dataset.manifest.ees {
        ees.insert(e.id.clone(), Arc::new(load_ee(dataset, e, knn_k)?));
    }
    Ok(Assets { objects, ees })
}

/// Samples built from records, in record order.
#[derive(Debug, Clone)]
pub struct LoadedSamples {
    pub assets: Assets,
    pub samples: Vec<TrainingSample>,
    /// Record indices dropped because no keypoint touched the object.
    pub skipped: Vec<usize>,
}

impl LoadedSamples {
    pub fn in_objects<'a>(&'a self, ids: &'a [String]) -> impl Iterator<Item = &'a TrainingSample> + 'a {
        self.samples.iter().filter(move |s| ids.contains(&s.object_id))
    }
}

/// Poses each record, derives its contact maps and contacts. Records whose
/// gripper contact map is all zero are skipped with a warning.
pub fn load_records(dataset: &Dataset, cfg: &SampleConfig) -> Result<LoadedSamples, DatasetError> {
    let assets = load_assets(dataset, cfg.knn_k)?;
    let records_path = dataset.path(&dataset.manifest.records);
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in dataset.records.iter().enumerate() {
        let object = assets
            .objects
            .get(&r.object_id)
            .ok_or_else(|| DatasetError::UnknownObject(r.object_id.clone()))?;
        let ee = assets.ees.get(&r.ee_id).ok_or_else(|| DatasetError::UnknownEe(r.ee_id.clone()))?;
        let schema = |message: String| DatasetError::Schema {
            path: records_path.clone(),
            line: i + 1,
            message,
        };
        if r.pose.theta.len() != ee.chain.dof() {
            return Err(schema(format!(
                "pose has {} joint values, {} expects {}",
                r.pose.theta.len(),
                r.ee_id,
                ee.chain.dof()
            )));
        }
        let kp = keypoint_positions(ee, &r.pose).map_err(|e| schema(e.to_string()))?;
        let maps = ContactMapSet::build(&object.cloud, &kp, cfg.m, cfg.threshold, cfg.metric)?;
        if maps.cg.iter().all(|&c| c == 0) {
            log::warn!("record {} ({} / {}): no keypoint within threshold, skipped", i + 1, r.object_id, r.ee_id);
            skipped.push(i);
            continue;
        }
        samples.push(TrainingSample::new(
            r.object_id.clone(),
            r.ee_id.clone(),
            object.clone(),
            ee.clone(),
            r.pose.clone(),
            kp,
            maps,
        ));
    }
    Ok(LoadedSamples {
        assets,
        samples,
        skipped,
    })
}

/// A named analytic object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub shape: Shape,
}

/// Two spheres, two boxes and two cylinders, 6–9 cm across.
pub fn default_objects() -> Vec<ObjectSpec> {
    let spec = |id: &str, shape| ObjectSpec { id: id.into(), shape };
    vec![
        spec("sphere_small", Shape::Sphere { radius: 0.032 }),
        spec("sphere_large", Shape::Sphere { radius: 0.042 }),
        spec("box_tall", Shape::Box { half: [0.03, 0.022, 0.04] }),
        spec("box_squat", Shape::Box { half: [0.035, 0.03, 0.025] }),
        spec("cylinder_slim", Shape::Cylinder { radius: 0.028, half_height: 0.045 }),
        spec("cylinder_wide", Shape::Cylinder { radius: 0.036, half_height: 0.03 }),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyOptions {
    pub object_samples: usize,
    pub gripper_samples: usize,
    pub grasps_per_pair: usize,
    pub knn_k: usize,
    pub threshold: f64,
    pub metric: ThresholdMetric,
    pub objects: Vec<ObjectSpec>,
    pub grippers: Vec<GripperSpec>,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            object_samples: 256,
            gripper_samples: 256,
            grasps_per_pair: 4,
            knn_k: DEFAULT_KNN_K,
            threshold: DEFAULT_CONTACT_THRESHOLD,
            metric: ThresholdMetric::Euclidean,
            objects: default_objects(),
            grippers: vec![GripperSpec::pincer(), GripperSpec::claw()],
        }
    }
}

/// Writes objects, grippers, records and the manifest under `out_dir`.
pub fn generate_toy_dataset(seed: u64, out_dir: &Path, opts: &ToyOptions) -> Result<DatasetManifest, DatasetError> {
    for sub in ["objects", "ees"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut ees = Vec::new();
    let mut models = Vec::new();
    for (g, spec) in opts.grippers.iter().enumerate() {
        let model = spec.build(opts.gripper_samples, opts.knn_k, derive_seed(seed, 100 + g as u64))?;
        let chain_rel = format!("ees/{}.chain.json", spec.name);
        let cloud_rel = format!("ees/{}.csv", spec.name);
        write_chain_file(&ChainFile::from_model(&model), &out_dir.join(&chain_rel))?;
        write_cloud_csv(&model.rest_cloud, &out_dir.join(&cloud_rel))?;
        ees.push(EeEntry {
            id: spec.name.clone(),
            chain: chain_rel,
            cloud: cloud_rel,
        });
        models.push(model);
    }
    let mut objects = Vec::new();
    let mut records = Vec::new();
    for (o, obj) in opts.objects.iter().enumerate() {
        let cloud = obj.shape.sample(opts.object_samples, derive_seed(seed, 200 + o as u64))?;
        let rel = format!("objects/{}.csv", obj.id);
        write_cloud_csv(&cloud, &out_dir.join(&rel))?;
        objects.push(ObjectEntry {
            id: obj.id.clone(),
            cloud: rel,
        });
        for (g, (spec, model)) in opts.grippers.iter().zip(&models).enumerate() {
            let grasps = grasps_for_pair(
                spec,
                model,
                &obj.shape,
                &cloud,
                opts.grasps_per_pair,
                opts.threshold,
                opts.metric,
                derive_seed(seed, 1000 + 10 * o as u64 + g as u64),
            );
            if grasps.len() < opts.grasps_per_pair {
                return Err(DatasetError::Generation(format!(
                    "only {} of {} grasps for {} / {}",
                    grasps.len(),
                    opts.grasps_per_pair,
                    spec.name,
                    obj.id
                )));
            }
            records.extend(grasps.into_iter().map(|pose| GraspRecord {
                object_id: obj.id.clone(),
                ee_id: spec.name.clone(),
                pose,
            }));
        }
    }
    let ids: Vec<String> = objects.iter().map(|o| o.id.clone()).collect();
    let manifest = DatasetManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        objects,
        ees,
        records: "records.jsonl".into(),
        split: split_objects(&ids, derive_seed(seed, 300)),
    };
    let dataset = Dataset {
        manifest: manifest.clone(),
        base_dir: out_dir.to_path_buf(),
        records,
    };
    dataset.save_manifest(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_opts() -> ToyOptions {
        ToyOptions {
            object_samples: 96,
            gripper_samples: 64,
            objects: default_objects().into_iter().take(3).collect(),
            ..ToyOptions::default()
        }
    }

    #[test]
    fn split_is_disjoint_and_covers() {
        let ids: Vec<String> = (0..11).map(|i| format!("o{i}")).collect();
        let s = split_objects(&ids, 4);
        assert_eq!(s.val.len(), 2);
        assert_eq!(s.train.len(), 9);
        assert!(s.train.iter().all(|t| !s.val.contains(t)));
        assert_eq!(split_objects(&ids, 4), s);
    }

    #[test]
    fn generated_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_toy_dataset(5, dir.path(), &small_opts()).unwrap();
        let ds = Dataset::open(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(ds.manifest, manifest);
        assert_eq!(ds.records.len(), 3 * 2 * 4);
        let loaded = load_records(&ds, &SampleConfig::default()).unwrap();
        assert_eq!(loaded.samples.len() + loaded.skipped.len(), ds.records.len());
        for s in &loaded.samples {
            for i in 0..6 {
                let col: usize = s.maps.co.iter().map(|r| r[i] as usize).sum();
                assert!(col == 0 || col == DEFAULT_M);
            }
            assert!(s.maps.cg.iter().filter(|&&c| c == 1).count() >= 2);
        }
        let again = load_records(&ds, &SampleConfig::default()).unwrap();
        let contacts = |l: &LoadedSamples| l.samples.iter().map(|s| s.contacts).collect::<Vec<_>>();
        assert_eq!(contacts(&loaded), contacts(&again));
    }

    #[test]
    fn filter_restricts_records() {
        let dir = tempfile::tempdir().unwrap();
        generate_toy_dataset(5, dir.path(), &small_opts()).unwrap();
        let ds = Dataset::open(&dir.path().join("manifest.json")).unwrap();
        let only = filter_by_ee(&ds, &["claw".to_string()]).unwrap();
        assert!(only.records.iter().all(|r| r.ee_id == "claw"));
        assert_eq!(only.records.len(), ds.records.iter().filter(|r| r.ee_id == "claw").count());
        assert_eq!(only.manifest.objects, ds.manifest.objects);
        let all = filter_by_ee(&ds, &["pincer".to_string(), "claw".to_string()]).unwrap();
        assert_eq!(all.records, ds.records);
        assert!(matches!(
            filter_by_ee(&ds, &["hand".to_string()]),
            Err(DatasetError::UnknownEe(_))
        ));
    }

    #[test]
    fn far_record_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        generate_toy_dataset(5, dir.path(), &small_opts()).unwrap();
        let mut ds = Dataset::open(&dir.path().join("manifest.json")).unwrap();
        ds.records[0].pose.t = [1.0, 1.0, 1.0];
        let loaded = load_records(&ds, &SampleConfig::default()).unwrap();
        assert_eq!(loaded.skipped, vec![0]);
    }
}
