use serde::{Deserialize, Serialize};

use super::types::{JointType, ObjectState, RelationAssignment, SceneState};
use crate::{Error, Result, Vec2};

/// Bumped whenever the column meaning of either feature vector changes.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

/// `[vx, vy, radius, controlled]`
pub const OBJECT_FEATURE_DIM: usize = 4;
/// `[dx, dy, svx, svy, onehot(4), r_i, r_j, contact]`
pub const EDGE_FEATURE_DIM: usize = 11;

/// Column offset of the joint one-hot block inside an edge feature row.
pub const EDGE_ONEHOT_OFFSET: usize = 4;
pub const EDGE_CONTACT_COLUMN: usize = 10;

/// Surface gap below which two discs are flagged in contact.
pub const CONTACT_MARGIN: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RelationSource {
    GroundTruth,
    Provided(RelationAssignment),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub sender: usize,
    pub receiver: usize,
    /// `q_receiver - q_sender`
    pub displacement: Vec2,
    /// `v_receiver - v_sender`
    pub velocity_difference: Vec2,
    pub kind: JointType,
    pub contact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationGraph {
    pub num_objects: usize,
    pub edges: Vec<RelationEdge>,
}

impl RelationGraph {
    /// Index of the directed edge `sender -> receiver` in `edges`.
    pub fn edge_index(n: usize, sender: usize, receiver: usize) -> usize {
        debug_assert!(sender != receiver && sender < n && receiver < n);
        receiver * (n - 1) + if sender < receiver { sender } else { sender - 1 }
    }
}

pub fn in_contact(a: &ObjectState, b: &ObjectState) -> bool {
    (a.position - b.position).norm() < a.radius + b.radius + CONTACT_MARGIN
}

/// Directed edges for every ordered pair, grouped by receiver.
pub fn build_graph(scene: &SceneState, source: &RelationSource) -> Result<RelationGraph> {
    let n = scene.objects.len();
    let gt;
    let rel = match source {
        RelationSource::GroundTruth => {
            gt = RelationAssignment::ground_truth(scene);
            &gt
        }
        RelationSource::Provided(r) => {
            if r.num_objects() != n {
                return Err(Error::dims("relation assignment objects", n, r.num_objects()));
            }
            r
        }
    };
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (oi, oj) = (&scene.objects[i], &scene.objects[j]);
            edges.push(RelationEdge {
                sender: j,
                receiver: i,
                displacement: oi.position - oj.position,
                velocity_difference: oi.velocity - oj.velocity,
                kind: rel.require(i, j)?,
                contact: in_contact(oi, oj),
            });
        }
    }
    Ok(RelationGraph { num_objects: n, edges })
}

pub fn object_features(obj: &ObjectState) -> [f64; OBJECT_FEATURE_DIM] {
    [
        obj.velocity.x,
        obj.velocity.y,
        obj.radius,
        if obj.controlled { 1.0 } else { 0.0 },
    ]
}

pub fn edge_features(edge: &RelationEdge, scene: &SceneState) -> [f64; EDGE_FEATURE_DIM] {
    edge_feature_row(
        edge.displacement,
        edge.velocity_difference,
        edge.kind.one_hot(),
        scene.objects[edge.receiver].radius,
        scene.objects[edge.sender].radius,
        edge.contact,
    )
}

/// Edge row from raw parts. `attribute` is a one-hot joint type, or a
/// distribution over joint types when fed back from the belief network.
pub fn edge_feature_row(
    displacement: Vec2,
    velocity_difference: Vec2,
    attribute: [f64; 4],
    receiver_radius: f64,
    sender_radius: f64,
    contact: bool,
) -> [f64; EDGE_FEATURE_DIM] {
    [
        displacement.x,
        displacement.y,
        velocity_difference.x,
        velocity_difference.y,
        attribute[0],
        attribute[1],
        attribute[2],
        attribute[3],
        receiver_radius,
        sender_radius,
        if contact { 1.0 } else { 0.0 },
    ]
}

pub fn check_layout_version(found: u32) -> Result<()> {
    if found != FEATURE_LAYOUT_VERSION {
        return Err(Error::LayoutVersion {
            expected: FEATURE_LAYOUT_VERSION,
            found,
        });
    }
    Ok(())
}
