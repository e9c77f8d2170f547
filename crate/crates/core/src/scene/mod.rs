//! Scene, joint and trajectory types plus the graph and feature layout the
//! networks consume.

mod graph;
mod types;

pub use graph::{
    build_graph, check_layout_version, edge_feature_row, edge_features, in_contact, object_features, RelationEdge, RelationGraph,
    RelationSource, CONTACT_MARGIN, EDGE_CONTACT_COLUMN, EDGE_FEATURE_DIM, EDGE_ONEHOT_OFFSET,
    FEATURE_LAYOUT_VERSION, OBJECT_FEATURE_DIM,
};
pub use types::{
    pair_slot, EnvironmentMode, JointSpec, JointType, ObjectState, RelationAssignment, SceneState, Trajectory,
    PENETRATION_TOLERANCE,
};
