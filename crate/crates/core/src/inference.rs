//! Grasp proposals: pick keypoint-0 seeds at several score ranks, then roll
//! the autoregressive heads forward with argmax decoding.

use serde::{Deserialize, Serialize};

use crate::diffnet::{DiffError, Tape};
use crate::geometry::GeometryGraph;
use crate::kinematics::{EndEffectorModel, NUM_KEYPOINTS};
use crate::model::{GeoMatchModel, TrainingSample};

pub const DEFAULT_RANKS: [usize; 4] = [0, 20, 50, 100];

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("score column is empty")]
    EmptyScores,
    #[error("seed vertex {index} out of range for {len} vertices")]
    BadSeed { index: usize, len: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspProposal {
    pub contacts: [usize; NUM_KEYPOINTS],
    pub coordinates: [[f64; 3]; NUM_KEYPOINTS],
    pub keypoint0_rank: usize,
    /// Sum of the selected logits at every step.
    pub score: f64,
}

/// Vertices at the requested ranks of the descending score order (ties to
/// the lower index). Ranks past the end are clamped with a warning.
pub fn sample_keypoint0(scores: &[f64], ranks: &[usize]) -> Result<Vec<usize>, InferenceError> {
    if scores.is_empty() {
        return Err(InferenceError::EmptyScores);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(ranks
        .iter()
        .map(|&r| {
            if r >= scores.len() {
                log::warn!("rank {r} clamped to {} ({} vertices)", scores.len() - 1, scores.len());
            }
            order[r.min(scores.len() - 1)]
        })
        .collect())
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Frozen-model encoder outputs for one object/gripper pair, reused by
/// every rollout.
pub struct InferenceContext<'a> {
    model: &'a GeoMatchModel,
    object: &'a GeometryGraph,
    tape: Tape,
    object_emb: crate::diffnet::Var,
    keypoint_emb: crate::diffnet::Var,
    /// Keypoint-0 column of the score map.
    pub keypoint0_scores: Vec<f64>,
}

impl<'a> InferenceContext<'a> {
    pub fn new(model: &'a GeoMatchModel, object: &'a GeometryGraph, ee: &EndEffectorModel) -> Result<Self, InferenceError> {
        let mut tape = Tape::new();
        let emb = model.encode(&mut tape, object, &ee.rest_graph)?;
        let keypoint_emb = model.keypoint_embeddings(&mut tape, &emb, &ee.keypoint_vertices())?;
        let scores = tape.matmul_nt(emb.object, keypoint_emb)?;
        let keypoint0_scores = tape.value(scores).column(0);
        Ok(Self {
            model,
            object,
            tape,
            object_emb: emb.object,
            keypoint_emb,
            keypoint0_scores,
        })
    }

    /// Logits of head `n` given the previous contacts.
    pub fn head_logits(&mut self, n: usize, prev: &[usize]) -> Result<Vec<f64>, InferenceError> {
        let kn = self.tape.gather_rows(self.keypoint_emb, &[n])?;
        let logits = self
            .model
            .ar_logits(&mut self.tape, n, self.object_emb, kn, prev, self.object)?;
        Ok(self.tape.value(logits).column(0))
    }

    /// Argmax decoding of contacts 1..=5 from seed `c0`.
    pub fn rollout(&mut self, c0: usize, rank: usize) -> Result<GraspProposal, InferenceError> {
        let len = self.object.len();
        if c0 >= len {
            return Err(InferenceError::BadSeed { index: c0, len });
        }
        let mut contacts = [c0; NUM_KEYPOINTS];
        let mut score = self.keypoint0_scores[c0];
        for n in 1..NUM_KEYPOINTS {
            let logits = self.head_logits(n, &contacts[..n])?;
            let best = argmax(&logits);
            contacts[n] = best;
            score += logits[best];
        }
        let pts = self.object.cloud.points();
        Ok(GraspProposal {
            contacts,
            coordinates: contacts.map(|c| [pts[c].x, pts[c].y, pts[c].z]),
            keypoint0_rank: rank,
            score,
        })
    }
}

pub fn rollout(
    model: &GeoMatchModel,
    object: &GeometryGraph,
    ee: &EndEffectorModel,
    c0: usize,
) -> Result<GraspProposal, InferenceError> {
    InferenceContext::new(model, object, ee)?.rollout(c0, 0)
}

/// One proposal per rank.
pub fn propose_grasps(
    model: &GeoMatchModel,
    object: &GeometryGraph,
    ee: &EndEffectorModel,
    ranks: &[usize],
) -> Result<Vec<GraspProposal>, InferenceError> {
    let mut ctx = InferenceContext::new(model, object, ee)?;
    let seeds = sample_keypoint0(&ctx.keypoint0_scores, ranks)?;
    seeds
        .into_iter()
        .zip(ranks)
        .map(|(c0, &rank)| ctx.rollout(c0, rank))
        .collect()
}

/// Share of contacts 1..=5, decoded from each sample's ground-truth
/// keypoint-0 contact, that fall among the `m` nearest object vertices of
/// the matching ground-truth contact. Returns `None` for no samples.
pub fn seeded_contact_hit_rate(
    model: &GeoMatchModel,
    samples: &[TrainingSample],
    m: usize,
) -> Result<Option<f64>, InferenceError> {
    let (mut hits, mut total) = (0usize, 0usize);
    for s in samples {
        let mut ctx = InferenceContext::new(model, &s.object, &s.ee)?;
        let p = ctx.rollout(s.contacts[0], 0)?;
        let pts = s.object.cloud.points();
        for n in 1..NUM_KEYPOINTS {
            let near = s.object.cloud.k_nearest(&pts[s.contacts[n]], m);
            hits += usize::from(near.contains(&p.contacts[n]));
            total += 1;
        }
    }
    Ok((total > 0).then(|| hits as f64 / total as f64))
}

/// Serialised proposal (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub object: String,
    pub ee: String,
    pub rank: usize,
    pub contacts: Vec<ContactRecord>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactRecord {
    pub vertex: usize,
    pub xyz: [f64; 3],
}

impl ProposalRecord {
    pub fn new(object: &str, ee: &str, p: &GraspProposal) -> Self {
        Self {
            object: object.to_string(),
            ee: ee.to_string(),
            rank: p.keypoint0_rank,
            contacts: p
                .contacts
                .iter()
                .zip(&p.coordinates)
                .map(|(&vertex, &xyz)| ContactRecord { vertex, xyz })
                .collect(),
            score: p.score,
        }
    }

    pub fn contact_vertices(&self) -> Option<[usize; NUM_KEYPOINTS]> {
        (self.contacts.len() == NUM_KEYPOINTS).then(|| std::array::from_fn(|i| self.contacts[i].vertex))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keypoint0_ranks() {
        assert_eq!(sample_keypoint0(&[0.1, 0.9, 0.5], &[0, 1, 2]).unwrap(), vec![1, 2, 0]);
        assert_eq!(sample_keypoint0(&[0.3; 4], &[0]).unwrap(), vec![0]);
        assert_eq!(sample_keypoint0(&[0.1, 0.9, 0.5], &[100]).unwrap(), vec![0]);
        assert!(matches!(sample_keypoint0(&[], &[0]), Err(InferenceError::EmptyScores)));
        assert_eq!(DEFAULT_RANKS, [0, 20, 50, 100]);
    }

    #[test]
    fn argmax_prefers_lower_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}
