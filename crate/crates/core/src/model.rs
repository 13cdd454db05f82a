//! The grasp-matching network: two GCN encoders with bias-free 64-d
//! projections, a keypoint score map, and five autoregressive heads that
//! pick each subsequent contact given the previous ones.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contact_maps::ContactMapSet;
use crate::diffnet::{
    bce_with_pos_weight, gcn_layer, glorot_init, linear, mlp, AdamConfig, DiffError, ParamId,
    ParameterStore, Tape, Tensor, Var,
};
use crate::geometry::{GeometryGraph, Vec3};
use crate::kinematics::{EndEffectorModel, Pose, NUM_KEYPOINTS};
use crate::rng::SeededRng;

/// Autoregressive heads predict keypoints 1..=5; keypoint 0 uses the score map.
pub const NUM_AR_HEADS: usize = NUM_KEYPOINTS - 1;

/// Layer widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_features: usize,
    pub gcn_hidden: usize,
    pub gcn_hidden_layers: usize,
    pub gcn_output: usize,
    pub projection: usize,
    pub ar_hidden: usize,
    pub ar_hidden_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_features: 3,
            gcn_hidden: 256,
            gcn_hidden_layers: 3,
            gcn_output: 512,
            projection: 64,
            ar_hidden: 256,
            ar_hidden_layers: 3,
        }
    }
}

impl ModelConfig {
    /// Input width of every AR head: object embedding, keypoint embedding
    /// and one distance slot per previous keypoint (zero padded).
    pub fn ar_input(&self) -> usize {
        2 * self.projection + NUM_AR_HEADS
    }
}

/// Loss weights: `α·L_F + β·L_M` with positive weights `λa`, `λb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            lambda_a: 500.0,
            lambda_b: 200.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Encoder {
    layers: Vec<(ParamId, ParamId)>,
    projection: ParamId,
}

/// All trainable parameters plus the handles that locate them.
#[derive(Debug, Clone)]
pub struct GeoMatchModel {
    pub config: ModelConfig,
    pub store: ParameterStore,
    object_encoder: Encoder,
    gripper_encoder: Encoder,
    ar_heads: Vec<Vec<(ParamId, ParamId)>>,
}

/// One supervised grasp with its derived targets.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub object_id: String,
    pub ee_id: String,
    pub object: Arc<GeometryGraph>,
    pub ee: Arc<EndEffectorModel>,
    pub pose: Pose,
    pub maps: ContactMapSet,
    pub keypoint_world: [Vec3; NUM_KEYPOINTS],
    /// Nearest object vertex to each posed keypoint.
    pub contacts: [usize; NUM_KEYPOINTS],
}

impl TrainingSample {
    pub fn new(
        object_id: impl Into<String>,
        ee_id: impl Into<String>,
        object: Arc<GeometryGraph>,
        ee: Arc<EndEffectorModel>,
        pose: Pose,
        keypoint_world: [Vec3; NUM_KEYPOINTS],
        maps: ContactMapSet,
    ) -> Self {
        let contacts = std::array::from_fn(|i| {
            object
                .cloud
                .nearest(&keypoint_world[i])
                .map(|(v, _)| v)
                .expect("object clouds are non-empty")
        });
        Self {
            object_id: object_id.into(),
            ee_id: ee_id.into(),
            object,
            ee,
            pose,
            maps,
            keypoint_world,
            contacts,
        }
    }
}

/// Loss value and its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub loss_f: f64,
    pub loss_m: f64,
}

/// Forward pass of both encoders for one object/gripper pair.
#[derive(Debug, Clone, Copy)]
pub struct Embeddings {
    pub object: Var,
    pub gripper: Var,
}

/// Node features: xyz centered on the cloud centroid.
pub fn centered_features(graph: &GeometryGraph) -> Tensor {
    let c = graph.cloud.centroid();
    let data = graph
        .cloud
        .points()
        .iter()
        .flat_map(|p| {
            let d = p - c;
            [d.x, d.y, d.z]
        })
        .collect();
    Tensor::from_vec(graph.len(), 3, data).expect("three columns")
}

/// `S_O × 5` distances from every vertex to each previous contact, zero padded.
pub fn distance_features(graph: &GeometryGraph, prev: &[usize]) -> Result<Tensor, DiffError> {
    let pts = graph.cloud.points();
    if prev.len() > NUM_AR_HEADS {
        return Err(DiffError::ShapeMismatch(format!("{} previous contacts", prev.len())));
    }
    if let Some(&bad) = prev.iter().find(|&&c| c >= pts.len()) {
        return Err(DiffError::IndexOutOfRange {
            index: bad,
            len: pts.len(),
        });
    }
    let mut t = Tensor::zeros(pts.len(), NUM_AR_HEADS);
    for (v, p) in pts.iter().enumerate() {
        for (slot, &c) in prev.iter().enumerate() {
            t.set(v, slot, (p - pts[c]).norm());
        }
    }
    Ok(t)
}

impl GeoMatchModel {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut store = ParameterStore::new();
        let mut seeds = SeededRng::new(seed);
        let mut next_seed = move || seeds.uniform().to_bits();

        let mut encoder = |store: &mut ParameterStore, prefix: &str| {
            let mut widths = vec![config.input_features];
            widths.extend(std::iter::repeat_n(config.gcn_hidden, config.gcn_hidden_layers));
            widths.push(config.gcn_output);
            let layers = widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| {
                    let weight = store.add(format!("{prefix}.gcn{i}.weight"), glorot_init(w[0], w[1], next_seed()));
                    let bias = store.add(format!("{prefix}.gcn{i}.bias"), Tensor::zeros(1, w[1]));
                    (weight, bias)
                })
                .collect();
            let projection = store.add(
                format!("{prefix}.projection.weight"),
                glorot_init(config.gcn_output, config.projection, next_seed()),
            );
            Encoder { layers, projection }
        };
        let object_encoder = encoder(&mut store, "object_encoder");
        let gripper_encoder = encoder(&mut store, "gripper_encoder");

        let mut widths = vec![config.ar_input()];
        widths.extend(std::iter::repeat_n(config.ar_hidden, config.ar_hidden_layers));
        widths.push(1);
        let ar_heads = (1..=NUM_AR_HEADS)
            .map(|n| {
                widths
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| {
                        let weight = store.add(format!("ar{n}.fc{i}.weight"), glorot_init(w[0], w[1], next_seed()));
                        let bias = store.add(format!("ar{n}.fc{i}.bias"), Tensor::zeros(1, w[1]));
                        (weight, bias)
                    })
                    .collect()
            })
            .collect();
        Self {
            config,
            store,
            object_encoder,
            gripper_encoder,
            ar_heads,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    fn run_encoder(&self, tape: &mut Tape, enc: &Encoder, graph: &GeometryGraph) -> Result<Var, DiffError> {
        let mut h = tape.constant(centered_features(graph));
        let last = enc.layers.len() - 1;
        for (i, &(w, b)) in enc.layers.iter().enumerate() {
            let w = tape.param(&self.store, w);
            let b = tape.param(&self.store, b);
            // The 512-d output layer stays linear; the projection follows it.
            h = gcn_layer(tape, &graph.normalized_adjacency, h, w, b, i < last)?;
        }
        let p = tape.param(&self.store, enc.projection);
        linear(tape, h, p, None)
    }

    /// Projected embeddings `(S_O × 64, S_G × 64)`.
    pub fn encode(&self, tape: &mut Tape, object: &GeometryGraph, gripper: &GeometryGraph) -> Result<Embeddings, DiffError> {
        Ok(Embeddings {
            object: self.run_encoder(tape, &self.object_encoder, object)?,
            gripper: self.run_encoder(tape, &self.gripper_encoder, gripper)?,
        })
    }

    /// Keypoint embeddings gathered from the gripper embedding (`6 × 64`).
    pub fn keypoint_embeddings(&self, tape: &mut Tape, emb: &Embeddings, keypoints: &[usize]) -> Result<Var, DiffError> {
        tape.gather_rows(emb.gripper, keypoints)
    }

    /// Unnormalised `S_O × 6` score map: object embedding · keypoint embedding.
    pub fn score_map(&self, tape: &mut Tape, emb: &Embeddings, keypoints: &[usize]) -> Result<Var, DiffError> {
        let k = self.keypoint_embeddings(tape, emb, keypoints)?;
        tape.matmul_nt(emb.object, k)
    }

    /// `S_O × 1` logits of head `n` (1..=5) given the first `n` contacts.
    pub fn ar_logits(
        &self,
        tape: &mut Tape,
        n: usize,
        object_emb: Var,
        keypoint_emb_n: Var,
        prev_contacts: &[usize],
        object: &GeometryGraph,
    ) -> Result<Var, DiffError> {
        if !(1..=NUM_AR_HEADS).contains(&n) || prev_contacts.len() != n {
            return Err(DiffError::ShapeMismatch(format!(
                "head {n} with {} previous contacts",
                prev_contacts.len()
            )));
        }
        let dist = tape.constant(distance_features(object, prev_contacts)?);
        let layers: Vec<(Var, Var)> = self.ar_heads[n - 1]
            .iter()
            .map(|&(w, b)| (tape.param(&self.store, w), tape.param(&self.store, b)))
            .collect();
        // First layer on concat(object, keypoint, distances) without
        // materialising the concatenation: the keypoint block is the same
        // for every vertex, so it folds into the bias.
        let (w0, b0) = layers[0];
        let p = self.config.projection;
        let w_obj = tape.slice_rows(w0, 0, p)?;
        let w_kp = tape.slice_rows(w0, p, 2 * p)?;
        let w_dist = tape.slice_rows(w0, 2 * p, 2 * p + NUM_AR_HEADS)?;
        let from_obj = tape.matmul(object_emb, w_obj)?;
        let from_dist = tape.matmul(dist, w_dist)?;
        let h = tape.add(from_obj, from_dist)?;
        let from_kp = tape.matmul(keypoint_emb_n, w_kp)?;
        let bias = tape.add(from_kp, b0)?;
        let mut h = tape.add_row_bias(h, bias)?;
        if layers.len() == 1 {
            return Ok(h);
        }
        h = tape.relu(h);
        mlp(tape, h, &layers[1..])
    }

    /// Records `α·L_F + β·L_M` on `tape`. `L_F` sums the six per-keypoint
    /// mean BCEs of the score map, `L_M` the five AR heads under teacher
    /// forcing with `prev_contacts` (normally the ground-truth contacts).
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        sample: &TrainingSample,
        prev_contacts: &[usize; NUM_KEYPOINTS],
        cfg: &LossConfig,
    ) -> Result<(Var, LossBreakdown), DiffError> {
        let object = &sample.object;
        let emb = self.encode(tape, object, &sample.ee.rest_graph)?;
        let kps = sample.ee.keypoint_vertices();
        let k = self.keypoint_embeddings(tape, &emb, &kps)?;
        let scores = tape.matmul_nt(emb.object, k)?;
        let co = sample.maps.co_tensor();
        // Mean over S_O×6 times 6 equals the sum of six column means.
        let bce_f = bce_with_pos_weight(tape, scores, &co, cfg.lambda_a)?;
        let loss_f = tape.scale(bce_f, NUM_KEYPOINTS as f64);

        let mut head_losses = Vec::with_capacity(NUM_AR_HEADS);
        for n in 1..=NUM_AR_HEADS {
            let kn = tape.gather_rows(k, &[n])?;
            let logits = self.ar_logits(tape, n, emb.object, kn, &prev_contacts[..n], object)?;
            head_losses.push(bce_with_pos_weight(tape, logits, &sample.maps.co_column(n), cfg.lambda_b)?);
        }
        let mut loss_m = head_losses[0];
        for &h in &head_losses[1..] {
            loss_m = tape.add(loss_m, h)?;
        }
        let weighted_f = tape.scale(loss_f, cfg.alpha);
        let weighted_m = tape.scale(loss_m, cfg.beta);
        let total = tape.add(weighted_f, weighted_m)?;
        let breakdown = LossBreakdown {
            total: tape.value(total).item(),
            loss_f: tape.value(loss_f).item(),
            loss_m: tape.value(loss_m).item(),
        };
        Ok((total, breakdown))
    }

    /// Teacher-forced training loss of one sample.
    pub fn total_loss(&self, sample: &TrainingSample, cfg: &LossConfig) -> Result<LossBreakdown, DiffError> {
        let mut tape = Tape::new();
        Ok(self.loss_on_tape(&mut tape, sample, &sample.contacts, cfg)?.1)
    }

    /// Loss and accumulated parameter gradients for one sample.
    pub fn loss_and_grad(&mut self, sample: &TrainingSample, cfg: &LossConfig) -> Result<LossBreakdown, DiffError> {
        let mut tape = Tape::new();
        let (loss, breakdown) = self.loss_on_tape(&mut tape, sample, &sample.contacts, cfg)?;
        tape.backward(loss, Some(&mut self.store))?;
        Ok(breakdown)
    }
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub loss_f: f64,
    pub loss_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite in epoch {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Batch-size-1 Adam over a seeded shuffle of the samples each epoch.
/// `on_epoch` sees every epoch's mean loss as it completes.
pub fn train(
    model: &mut GeoMatchModel,
    samples: &[TrainingSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<Vec<EpochLoss>, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let (mut total, mut lf, mut lm) = (0.0, 0.0, 0.0);
        for &i in &order {
            model.store.zero_grad();
            let b = model.loss_and_grad(&samples[i], &cfg.loss)?;
            model.store.adam_step(&cfg.adam)?;
            total += b.total;
            lf += b.loss_f;
            lm += b.loss_m;
        }
        let n = samples.len() as f64;
        let entry = EpochLoss {
            epoch,
            total: total / n,
            loss_f: lf / n,
            loss_m: lm / n,
        };
        if !entry.total.is_finite() {
            return Err(TrainError::NonFinite(epoch));
        }
        log::debug!("epoch {epoch}: loss {:.6}", entry.total);
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}

/// `epoch,loss_total,loss_f,loss_m` CSV.
pub fn loss_log_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,loss_total,loss_f,loss_m\n");
    for e in log {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.total, e.loss_f, e.loss_m));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            gcn_hidden: 8,
            gcn_output: 12,
            projection: 4,
            ar_hidden: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn parameter_count_is_fixed_by_widths() {
        let m = GeoMatchModel::new(ModelConfig::default(), 0);
        let enc = (3 * 256 + 256) + 2 * (256 * 256 + 256) + (256 * 512 + 512) + 512 * 64;
        let head = (133 * 256 + 256) + 2 * (256 * 256 + 256) + (256 + 1);
        assert_eq!(m.parameter_count(), 2 * enc + 5 * head);
        assert_eq!(m.store.len(), 2 * 9 + 5 * 8);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = GeoMatchModel::new(tiny(), 3);
        let b = GeoMatchModel::new(tiny(), 3);
        for id in a.store.ids() {
            assert_eq!(a.store.value(id), b.store.value(id));
        }
    }

    #[test]
    fn score_map_hand_case() {
        let mut tape = Tape::new();
        let object = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap());
        let gripper = tape.constant(Tensor::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap());
        let model = GeoMatchModel::new(tiny(), 0);
        let emb = Embeddings { object, gripper };
        let s = model.score_map(&mut tape, &emb, &[0]).unwrap();
        assert_eq!(tape.value(s).data(), &[3.0, 8.0]);
        assert!(matches!(
            model.score_map(&mut tape, &emb, &[2]),
            Err(DiffError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn ar_head_count_and_input_width() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.ar_input(), 64 + 64 + 5);
        assert_eq!(NUM_AR_HEADS, 5);
    }
    #[test]
    fn split_first_layer_matches_explicit_concat() {
        use crate::geometry::{build_knn_graph, PointCloud};
        let mut rng = SeededRng::new(11);
        let pts: Vec<Vec3> = (0..9)
            .map(|_| Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * 0.05)
            .collect();
        let graph = build_knn_graph(&PointCloud::new(pts, None, "object").unwrap(), 3).unwrap();
        let obj = Tensor::from_vec(9, 4, (0..36).map(|_| rng.gaussian()).collect()).unwrap();
        let kp = Tensor::from_vec(1, 4, (0..4).map(|_| rng.gaussian()).collect()).unwrap();
        let prev = [2, 7, 4];
        let model = GeoMatchModel::new(tiny(), 5);

        let mut split_store = model.store.clone();
        let mut tape = Tape::new();
        let (o, k) = (tape.constant(obj.clone()), tape.constant(kp.clone()));
        let split = model.ar_logits(&mut tape, 3, o, k, &prev, &graph).unwrap();
        let split_vals = tape.value(split).clone();
        let loss = tape.sum(split);
        tape.backward(loss, Some(&mut split_store)).unwrap();

        let mut concat_store = model.store.clone();
        let mut tape = Tape::new();
        let (o, k) = (tape.constant(obj), tape.constant(kp));
        let kb = tape.broadcast_rows(k, 9).unwrap();
        let d = tape.constant(distance_features(&graph, &prev).unwrap());
        let x = tape.concat_cols(&[o, kb, d]).unwrap();
        let layers: Vec<(Var, Var)> = model.ar_heads[2]
            .iter()
            .map(|&(w, b)| (tape.param(&concat_store, w), tape.param(&concat_store, b)))
            .collect();
        let full = mlp(&mut tape, x, &layers).unwrap();
        let loss = tape.sum(full);
        tape.backward(loss, Some(&mut concat_store)).unwrap();

        for (a, b) in split_vals.data().iter().zip(tape.value(full).data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for &(w, b) in &model.ar_heads[2] {
            for id in [w, b] {
                let (ga, gb) = (split_store.grad(id).unwrap(), concat_store.grad(id).unwrap());
                for (x, y) in ga.data().iter().zip(gb.data()) {
                    assert!((x - y).abs() < 1e-12, "{}: {x} vs {y}", model.store.name(id));
                }
            }
        }
    }
}
