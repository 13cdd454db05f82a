//! Ground-truth supervision for one grasp: per-keypoint proximity map,
//! gripper contact flags and the hand-specific object contact map.

use serde::{Deserialize, Serialize};

use crate::diffnet::Tensor;
use crate::geometry::{PointCloud, Vec3};
use crate::kinematics::NUM_KEYPOINTS;

pub const DEFAULT_M: usize = 20;
pub const DEFAULT_CONTACT_THRESHOLD: f64 = 0.04;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ContactMapError {
    #[error("object has {vertices} vertices, need more than m = {m}")]
    TooFewVertices { vertices: usize, m: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("contact threshold must be positive, got {0}")]
    BadThreshold(f64),
}

/// How the contact threshold is compared against keypoint distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMetric {
    /// `min ‖v − k‖ < threshold` (meters).
    #[default]
    Euclidean,
    /// `min ‖v − k‖² < threshold`.
    Squared,
}

pub type KeypointRow = [u8; NUM_KEYPOINTS];

#[derive(Debug, Clone, PartialEq)]
pub struct ContactMapSet {
    pub prox: Vec<KeypointRow>,
    pub cg: KeypointRow,
    pub co: Vec<KeypointRow>,
    pub m: usize,
    pub threshold: f64,
}

impl ContactMapSet {
    pub fn build(
        object: &PointCloud,
        keypoints: &[Vec3; NUM_KEYPOINTS],
        m: usize,
        threshold: f64,
        metric: ThresholdMetric,
    ) -> Result<Self, ContactMapError> {
        let prox = proximity_map(object, keypoints, m)?;
        let cg = gripper_contact_map(object, keypoints, threshold, metric)?;
        let co = object_contact_map(&prox, &cg)?;
        Ok(Self {
            prox,
            cg,
            co,
            m,
            threshold,
        })
    }

    /// `C_O` as an `S_O × 6` tensor of 0/1.
    pub fn co_tensor(&self) -> Tensor {
        let data = self.co.iter().flatten().map(|&b| f64::from(b)).collect();
        Tensor::from_vec(self.co.len(), NUM_KEYPOINTS, data).expect("rows are 6 wide")
    }

    pub fn co_column(&self, i: usize) -> Tensor {
        let data = self.co.iter().map(|row| f64::from(row[i])).collect();
        Tensor::from_vec(self.co.len(), 1, data).expect("column length")
    }

    pub fn to_cache(&self) -> MapCache {
        MapCache {
            m: self.m,
            threshold: self.threshold,
            cg: self.cg,
            co: self.co.clone(),
        }
    }
}

/// On-disk map record; `prox` is kept only when diagnostics need it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapCache {
    pub m: usize,
    pub threshold: f64,
    pub cg: KeypointRow,
    pub co: Vec<KeypointRow>,
}

/// Entry `(v, i)` is 1 iff `v` is among the `m` object vertices nearest to
/// keypoint `i` (distance ties go to the lower index).
pub fn proximity_map(
    object: &PointCloud,
    keypoints: &[Vec3; NUM_KEYPOINTS],
    m: usize,
) -> Result<Vec<KeypointRow>, ContactMapError> {
    let s = object.len();
    if s <= m || m == 0 {
        return Err(ContactMapError::TooFewVertices { vertices: s, m });
    }
    let mut prox = vec![[0u8; NUM_KEYPOINTS]; s];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(s);
    for (i, k) in keypoints.iter().enumerate() {
        order.clear();
        order.extend(object.points().iter().enumerate().map(|(v, p)| ((p - k).norm_squared(), v)));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        order.select_nth_unstable_by(m - 1, cmp);
        for &(_, v) in &order[..m] {
            prox[v][i] = 1;
        }
    }
    Ok(prox)
}

pub fn gripper_contact_map(
    object: &PointCloud,
    keypoints: &[Vec3; NUM_KEYPOINTS],
    threshold: f64,
    metric: ThresholdMetric,
) -> Result<KeypointRow, ContactMapError> {
    if !(threshold > 0.0) {
        return Err(ContactMapError::BadThreshold(threshold));
    }
    let mut cg = [0u8; NUM_KEYPOINTS];
    for (flag, k) in cg.iter_mut().zip(keypoints) {
        let Some((_, d)) = object.nearest(k) else { continue };
        let measure = match metric {
            ThresholdMetric::Euclidean => d,
            ThresholdMetric::Squared => d * d,
        };
        *flag = u8::from(measure < threshold);
    }
    Ok(cg)
}

/// `co[v][i] = prox[v][i] · cg[i]`.
pub fn object_contact_map(prox: &[KeypointRow], cg: &KeypointRow) -> Result<Vec<KeypointRow>, ContactMapError> {
    if cg.iter().any(|&c| c > 1) || prox.iter().flatten().any(|&p| p > 1) {
        return Err(ContactMapError::ShapeMismatch("maps must be binary".into()));
    }
    Ok(prox
        .iter()
        .map(|row| std::array::from_fn(|i| row[i] * cg[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_cloud(n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect(), None, "line").unwrap()
    }

    #[test]
    fn nearest_two_on_a_line() {
        let obj = line_cloud(5);
        let kps = [Vec3::zeros(); NUM_KEYPOINTS];
        let prox = proximity_map(&obj, &kps, 2).unwrap();
        let col: Vec<u8> = prox.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![1, 1, 0, 0, 0]);
    }

    #[test]
    fn m_equal_to_s_minus_one() {
        let obj = line_cloud(5);
        let kps = [Vec3::new(10.0, 0.0, 0.0); NUM_KEYPOINTS];
        let prox = proximity_map(&obj, &kps, 4).unwrap();
        for i in 0..NUM_KEYPOINTS {
            assert_eq!(prox.iter().map(|r| r[i] as usize).sum::<usize>(), 4);
        }
        assert_eq!(prox[0], [0; 6]);
        assert!(matches!(
            proximity_map(&obj, &kps, 5),
            Err(ContactMapError::TooFewVertices { .. })
        ));
    }

    #[test]
    fn gripper_contacts() {
        let obj = line_cloud(5);
        let mut kps = [Vec3::new(0.0, 1.0, 0.0); NUM_KEYPOINTS];
        kps[2] = Vec3::new(3.0, 0.0, 0.0);
        let cg = gripper_contact_map(&obj, &kps, 0.04, ThresholdMetric::Euclidean).unwrap();
        assert_eq!(cg, [0, 0, 1, 0, 0, 0]);
        // 3 cm away: inside 0.04 m, outside 0.04 m².
        let kps = [Vec3::new(0.0, 0.03, 0.0); NUM_KEYPOINTS];
        assert_eq!(gripper_contact_map(&obj, &kps, 0.04, ThresholdMetric::Euclidean).unwrap(), [1; 6]);
        assert_eq!(gripper_contact_map(&obj, &kps, 0.0008, ThresholdMetric::Squared).unwrap(), [0; 6]);
        assert_eq!(gripper_contact_map(&obj, &kps, 0.001, ThresholdMetric::Squared).unwrap(), [1; 6]);
    }

    #[test]
    fn object_map_masks_columns() {
        let prox = vec![[1, 0, 1, 1, 0, 1], [0, 1, 1, 0, 1, 1]];
        assert_eq!(object_contact_map(&prox, &[1; 6]).unwrap(), prox);
        assert_eq!(object_contact_map(&prox, &[0; 6]).unwrap(), vec![[0; 6]; 2]);
        let co = object_contact_map(&prox, &[1, 0, 1, 0, 1, 0]).unwrap();
        assert_eq!(co, vec![[1, 0, 1, 0, 0, 0], [0, 0, 1, 0, 1, 0]]);
    }

    #[test]
    fn defaults() {
        assert_eq!(DEFAULT_M, 20);
        assert_eq!(DEFAULT_CONTACT_THRESHOLD, 0.04);
    }
}
