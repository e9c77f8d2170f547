//! Baselines, metrics, file formats, presets and the evaluation protocol.

mod config;
mod data;
mod experiment;
mod persist;
mod pipeline;
mod plot;

pub use config::{ExperimentConfig, ModelScale, PRESETS, SPLITS};
pub use data::{generate_dataset, DatasetSpec};
pub use experiment::{
    evaluate_errors, relation_accuracy_table, run_experiment, summarize, AccuracyRow, ErrorRow, ExperimentOutputs,
    Models, SummaryRow, ERROR_CSV_HEADER,
};
pub use persist::{
    load_belief, load_dataset, load_physics, read_checkpoint, save_belief, save_dataset, save_physics, Checkpoint,
    Dataset, DatasetMeta, CHECKPOINT_FORMAT_VERSION, DATASET_FORMAT_VERSION,
};
pub use pipeline::{belief_checkpoint_name, belief_step, gen_data, physics_step, run_pipeline, split_path};
pub use plot::{line_plot_svg, trajectory_svg, Series};

use serde::{Deserialize, Serialize};

use crate::belief::{classify_relations, BeliefState};
use crate::scene::{JointType, RelationAssignment, SceneState, Trajectory};
use crate::training::mean_position_error;
use crate::{Error, Result};

/// Surface gap under which the contact heuristic welds two objects.
pub const FIXED_GAP_THRESHOLD: f64 = 0.025;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineKind {
    PropNetGT,
    PropNetF,
    PropNetN,
    OneStepBRDPN,
    BRDPN,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::PropNetGT,
        BaselineKind::PropNetF,
        BaselineKind::PropNetN,
        BaselineKind::OneStepBRDPN,
        BaselineKind::BRDPN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::PropNetGT => "propnet_gt",
            BaselineKind::PropNetF => "propnet_f",
            BaselineKind::PropNetN => "propnet_n",
            BaselineKind::OneStepBRDPN => "brdpn_1step",
            BaselineKind::BRDPN => "brdpn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline '{s}'")))
    }

    pub fn needs_belief(self) -> bool {
        matches!(self, BaselineKind::OneStepBRDPN | BaselineKind::BRDPN)
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Joint type for every pair of `scene` under a baseline. Pairs with the
/// pusher are always NoJoint.
pub fn assign_relations(scene: &SceneState, kind: BaselineKind, belief: Option<&BeliefState>) -> Result<RelationAssignment> {
    let n = scene.objects.len();
    Ok(match kind {
        BaselineKind::PropNetGT => RelationAssignment::ground_truth(scene),
        BaselineKind::PropNetN => RelationAssignment::uniform(n, JointType::NoJoint),
        BaselineKind::PropNetF => {
            let mut r = RelationAssignment::uniform(n, JointType::NoJoint);
            for (i, j) in RelationAssignment::pairs(n) {
                let free = !scene.objects[i].controlled && !scene.objects[j].controlled;
                if free && scene.surface_gap(i, j) < FIXED_GAP_THRESHOLD {
                    r.set(i, j, JointType::Fixed);
                }
            }
            r
        }
        BaselineKind::OneStepBRDPN | BaselineKind::BRDPN => {
            let b = belief.ok_or(Error::MissingBelief(kind.name()))?;
            if b.num_objects != n {
                return Err(Error::dims("belief objects", n, b.num_objects));
            }
            classify_relations(b)
        }
    })
}

/// Mean Euclidean position error of the free objects in centimetres.
pub fn trajectory_error(predicted: &Trajectory, truth: &Trajectory) -> Result<f64> {
    Ok(100.0 * mean_position_error(predicted, truth)?)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Components of the graph whose edges are the Fixed pairs.
fn rigid_groups(r: &RelationAssignment) -> Vec<usize> {
    let n = r.num_objects();
    let mut parent: Vec<usize> = (0..n).collect();
    for (i, j) in RelationAssignment::pairs(n) {
        if r.get(i, j) == Some(JointType::Fixed) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Accuracy over the free pairs of `scene`: `(raw, equivalence_aware)`.
///
/// The second figure also accepts a wrong NoJoint/Fixed label when both the
/// prediction and the truth weld the two objects into the same rigid group
/// through other Fixed joints, since the group then moves identically.
pub fn relation_accuracy(predicted: &RelationAssignment, scene: &SceneState) -> Result<(f64, f64)> {
    let (n, raw, equiv) = relation_counts(predicted, scene)?;
    if n == 0 {
        return Ok((1.0, 1.0));
    }
    Ok((raw as f64 / n as f64, equiv as f64 / n as f64))
}

/// `(free pairs, raw hits, equivalence-aware hits)`.
pub(crate) fn relation_counts(predicted: &RelationAssignment, scene: &SceneState) -> Result<(usize, usize, usize)> {
    let n = scene.objects.len();
    if predicted.num_objects() != n {
        return Err(Error::dims("relation assignment objects", n, predicted.num_objects()));
    }
    let truth = RelationAssignment::ground_truth(scene);
    let (gp, gt) = (rigid_groups(predicted), rigid_groups(&truth));
    let rigidish = |k: JointType| matches!(k, JointType::NoJoint | JointType::Fixed);
    let (mut total, mut raw, mut equiv) = (0usize, 0usize, 0usize);
    for (i, j) in RelationAssignment::pairs(n) {
        if scene.objects[i].controlled || scene.objects[j].controlled {
            continue;
        }
        total += 1;
        let (p, t) = (predicted.require(i, j)?, truth.require(i, j)?);
        if p == t {
            raw += 1;
            equiv += 1;
        } else if rigidish(p) && rigidish(t) && gp[i] == gp[j] && gt[i] == gt[j] {
            equiv += 1;
        }
    }
    Ok((total, raw, equiv))
}

/// Accuracy of the classified beliefs at each time step.
pub fn relation_accuracy_curve(beliefs: &[BeliefState], scene: &SceneState) -> Result<Vec<(f64, f64)>> {
    beliefs
        .iter()
        .map(|b| relation_accuracy(&classify_relations(b), scene))
        .collect()
}
