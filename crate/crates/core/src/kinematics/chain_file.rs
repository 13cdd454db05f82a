//! JSON chain format: links with parent names and origins, joints with
//! type/axis/limits, the palm frame and the six keypoint attachments.

use std::fs;
use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{EndEffectorModel, Joint, JointType, Keypoint, KinematicChain, KinematicsError, Link, Palm};
use crate::geometry::{PointCloud, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginRecord {
    pub t: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    pub q: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub name: String,
    pub parent: Option<String>,
    pub origin: OriginRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointRecord {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointType,
    pub parent: String,
    pub child: String,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    #[serde(default)]
    pub limits: [f64; 2],
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PalmRecord {
    pub link: String,
    pub normal: [f64; 3],
    pub point: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointRecord {
    pub vertex: usize,
    pub link: String,
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    pub links: Vec<LinkRecord>,
    pub joints: Vec<JointRecord>,
    pub palm: PalmRecord,
    pub keypoints: Vec<KeypointRecord>,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl ChainFile {
    pub fn from_model(ee: &EndEffectorModel) -> Self {
        let chain = &ee.chain;
        let name = |i: usize| chain.links()[i].name.clone();
        ChainFile {
            links: chain
                .links()
                .iter()
                .map(|l| {
                    let q = l.origin.rotation.quaternion();
                    LinkRecord {
                        name: l.name.clone(),
                        parent: l.parent.map(name),
                        origin: OriginRecord {
                            t: arr(&l.origin.translation.vector),
                            q: [q.w, q.i, q.j, q.k],
                        },
                    }
                })
                .collect(),
            joints: chain
                .joints()
                .iter()
                .map(|j| JointRecord {
                    name: j.name.clone(),
                    kind: j.kind,
                    parent: name(j.parent),
                    child: name(j.child),
                    axis: arr(&j.axis),
                    limits: j.limits,
                })
                .collect(),
            palm: PalmRecord {
                link: name(ee.palm.link),
                normal: arr(&ee.palm.normal),
                point: arr(&ee.palm.point),
            },
            keypoints: ee
                .keypoints
                .iter()
                .map(|k| KeypointRecord {
                    vertex: k.vertex,
                    link: name(k.link),
                    offset: arr(&k.offset),
                })
                .collect(),
        }
    }

    pub fn to_chain(&self) -> Result<KinematicChain, KinematicsError> {
        let find = |n: &str| {
            self.links
                .iter()
                .position(|l| l.name == n)
                .ok_or_else(|| KinematicsError::InvalidChain(format!("unknown link {n}")))
        };
        let links = self
            .links
            .iter()
            .map(|l| {
                let [w, x, y, z] = l.origin.q;
                let q = Quaternion::new(w, x, y, z);
                if (q.norm() - 1.0).abs() > 1e-6 {
                    return Err(KinematicsError::InvalidChain(format!("link {} quaternion not unit", l.name)));
                }
                Ok(Link {
                    name: l.name.clone(),
                    parent: l.parent.as_deref().map(find).transpose()?,
                    origin: Isometry3::from_parts(
                        Translation3::from(v3(l.origin.t)),
                        UnitQuaternion::from_quaternion(q),
                    ),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let joints = self
            .joints
            .iter()
            .map(|j| {
                Ok(Joint {
                    name: j.name.clone(),
                    kind: j.kind,
                    parent: find(&j.parent)?,
                    child: find(&j.child)?,
                    axis: v3(j.axis),
                    limits: j.limits,
                })
            })
            .collect::<Result<Vec<_>, KinematicsError>>()?;
        KinematicChain::new(links, joints)
    }

    pub fn to_model(&self, name: &str, rest_cloud: PointCloud, knn_k: usize) -> Result<EndEffectorModel, KinematicsError> {
        let chain = self.to_chain()?;
        let link = |n: &str| {
            chain
                .link_index(n)
                .ok_or_else(|| KinematicsError::InvalidEndEffector(format!("unknown link {n}")))
        };
        let keypoints = self
            .keypoints
            .iter()
            .map(|k| {
                Ok(Keypoint {
                    vertex: k.vertex,
                    link: link(&k.link)?,
                    offset: v3(k.offset),
                })
            })
            .collect::<Result<Vec<_>, KinematicsError>>()?;
        let palm = Palm {
            link: link(&self.palm.link)?,
            normal: v3(self.palm.normal),
            point: v3(self.palm.point),
        };
        EndEffectorModel::new(name, chain, rest_cloud, keypoints, palm, knn_k)
    }
}

pub fn read_chain_file(path: &Path) -> Result<ChainFile, KinematicsError> {
    let text = fs::read_to_string(path)
        .map_err(|e| KinematicsError::InvalidChain(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        KinematicsError::InvalidChain(format!("{}:{}: {e}", path.display(), e.line()))
    })
}

pub fn write_chain_file(file: &ChainFile, path: &Path) -> Result<(), KinematicsError> {
    let text = serde_json::to_string_pretty(file).expect("chain records always serialise");
    fs::write(path, text).map_err(|e| KinematicsError::InvalidChain(format!("{}: {e}", path.display())))
}
