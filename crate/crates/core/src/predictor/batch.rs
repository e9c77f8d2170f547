use serde::{Deserialize, Serialize};

use crate::numerics::Tensor2;
use crate::scene::{edge_feature_row, in_contact, ObjectState, EDGE_FEATURE_DIM, OBJECT_FEATURE_DIM};
use crate::{Error, Result, Vec2};

/// Per-column affine normalization of network inputs and targets, fitted on
/// training data and stored with the model.
///
/// Velocity and displacement columns are scaled but never shifted, so a
/// reversed edge still maps to the exact negation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub object_shift: Vec<f64>,
    pub object_scale: Vec<f64>,
    pub edge_shift: Vec<f64>,
    pub edge_scale: Vec<f64>,
    pub target_scale: Vec<f64>,
}

impl Default for FeatureNormalizer {
    fn default() -> Self {
        FeatureNormalizer {
            object_shift: vec![0.0; OBJECT_FEATURE_DIM],
            object_scale: vec![1.0; OBJECT_FEATURE_DIM],
            edge_shift: vec![0.0; EDGE_FEATURE_DIM],
            edge_scale: vec![1.0; EDGE_FEATURE_DIM],
            target_scale: vec![1.0; 2],
        }
    }
}

/// Columns normalized as `(x - mean) / std`; the rest of the scaled columns
/// are divided by their root mean square.
const OBJECT_CENTERED: [usize; 1] = [2];
const OBJECT_SCALED: [usize; 2] = [0, 1];
const EDGE_CENTERED: [usize; 2] = [8, 9];
const EDGE_SCALED: [usize; 4] = [0, 1, 2, 3];

#[derive(Default)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn add(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        if self.n > 0.0 {
            self.sum / self.n
        } else {
            0.0
        }
    }

    fn std(&self) -> f64 {
        let m = self.mean();
        guard_scale((self.sum_sq / self.n.max(1.0) - m * m).max(0.0).sqrt())
    }

    fn rms(&self) -> f64 {
        guard_scale((self.sum_sq / self.n.max(1.0)).sqrt())
    }
}

fn guard_scale(s: f64) -> f64 {
    if s > 1e-12 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Accumulates column statistics from raw feature rows.
#[derive(Default)]
pub struct NormalizerFit {
    object: Vec<Moments>,
    edge: Vec<Moments>,
    target: Vec<Moments>,
}

impl NormalizerFit {
    pub fn new() -> Self {
        let m = |k| (0..k).map(|_| Moments::default()).collect();
        NormalizerFit {
            object: m(OBJECT_FEATURE_DIM),
            edge: m(EDGE_FEATURE_DIM),
            target: m(2),
        }
    }

    pub fn add_object(&mut self, row: &[f64]) {
        for (m, &x) in self.object.iter_mut().zip(row) {
            m.add(x);
        }
    }

    pub fn add_edge(&mut self, row: &[f64]) {
        for (m, &x) in self.edge.iter_mut().zip(row) {
            m.add(x);
        }
    }

    pub fn add_target(&mut self, v: Vec2) {
        self.target[0].add(v.x);
        self.target[1].add(v.y);
    }

    /// Adds every row of a raw (unnormalized) batch.
    pub fn add_batch(&mut self, batch: &GraphBatch) {
        for r in 0..batch.objects.rows() {
            self.add_object(batch.objects.row(r));
        }
        for r in 0..batch.edges.rows() {
            self.add_edge(batch.edges.row(r));
        }
    }

    pub fn finish(self) -> FeatureNormalizer {
        let mut n = FeatureNormalizer::default();
        for &c in &OBJECT_CENTERED {
            n.object_shift[c] = self.object[c].mean();
            n.object_scale[c] = self.object[c].std();
        }
        for &c in &OBJECT_SCALED {
            n.object_scale[c] = self.object[c].rms();
        }
        for &c in &EDGE_CENTERED {
            n.edge_shift[c] = self.edge[c].mean();
            n.edge_scale[c] = self.edge[c].std();
        }
        for &c in &EDGE_SCALED {
            n.edge_scale[c] = self.edge[c].rms();
        }
        // isotropic scenes: one scale for both components keeps rotations exact
        let t = Moments {
            n: self.target[0].n + self.target[1].n,
            sum: 0.0,
            sum_sq: self.target[0].sum_sq + self.target[1].sum_sq,
        };
        n.target_scale = vec![t.rms(); 2];
        n
    }
}

impl FeatureNormalizer {
    pub fn validate(&self) -> Result<()> {
        let ok = self.object_shift.len() == OBJECT_FEATURE_DIM
            && self.object_scale.len() == OBJECT_FEATURE_DIM
            && self.edge_shift.len() == EDGE_FEATURE_DIM
            && self.edge_scale.len() == EDGE_FEATURE_DIM
            && self.target_scale.len() == 2;
        if !ok {
            return Err(Error::Corrupt("normalizer has wrong column counts".into()));
        }
        let all = self
            .object_scale
            .iter()
            .chain(&self.edge_scale)
            .chain(&self.target_scale);
        if all.clone().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Corrupt("normalizer scale must be positive and finite".into()));
        }
        Ok(())
    }

    fn apply(row: &mut [f64], shift: &[f64], scale: &[f64]) {
        for ((x, s), k) in row.iter_mut().zip(shift).zip(scale) {
            *x = (*x - s) / k;
        }
    }

    pub fn object_row(&self, raw: &mut [f64]) {
        Self::apply(raw, &self.object_shift, &self.object_scale);
    }

    pub fn edge_row(&self, raw: &mut [f64]) {
        Self::apply(raw, &self.edge_shift, &self.edge_scale);
    }

    pub fn normalize_target(&self, v: Vec2) -> Vec2 {
        Vec2::new(v.x / self.target_scale[0], v.y / self.target_scale[1])
    }

    pub fn denormalize_target(&self, v: Vec2) -> Vec2 {
        Vec2::new(v.x * self.target_scale[0], v.y * self.target_scale[1])
    }

    /// Inverse scale of the edge attribute columns, needed to push gradients
    /// of normalized rows back onto soft attributes.
    pub fn edge_column_scale(&self, col: usize) -> f64 {
        self.edge_scale[col]
    }
}

/// Several scenes packed into one disjoint graph.
///
/// Objects of scene `s` occupy a contiguous block of rows; edges index into
/// the packed object rows. Only edges the caller marked active are stored.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub objects: Tensor2,
    pub edges: Tensor2,
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    /// Packed row of every free object, in scene order.
    pub free_rows: Vec<usize>,
    /// First object row of each scene.
    pub scene_offsets: Vec<usize>,
}

/// One scene as the networks see it. `velocities` already holds the pusher
/// command in the pusher slot.
pub struct SceneInput<'a> {
    pub objects: &'a [ObjectState],
    pub velocities: &'a [Vec2],
}

/// Growing buffers for a [`GraphBatch`].
pub struct GraphBatchBuilder<'n> {
    norm: Option<&'n FeatureNormalizer>,
    objects: Vec<f64>,
    edges: Vec<f64>,
    senders: Vec<usize>,
    receivers: Vec<usize>,
    free_rows: Vec<usize>,
    scene_offsets: Vec<usize>,
    n_objects: usize,
}

impl<'n> GraphBatchBuilder<'n> {
    /// With `norm == None` rows are stored raw, which is how normalizers are fitted.
    pub fn new(norm: Option<&'n FeatureNormalizer>) -> Self {
        GraphBatchBuilder {
            norm,
            objects: Vec::new(),
            edges: Vec::new(),
            senders: Vec::new(),
            receivers: Vec::new(),
            free_rows: Vec::new(),
            scene_offsets: Vec::new(),
            n_objects: 0,
        }
    }

    /// Appends a scene. `attribute(i, j)` returns the relation attribute of the
    /// directed edge `j -> i`, or `None` to leave the edge out. Edges are
    /// emitted grouped by receiver, senders ascending.
    pub fn push_scene(
        &mut self,
        scene: &SceneInput<'_>,
        mut attribute: impl FnMut(usize, usize, bool) -> Option<[f64; 4]>,
    ) -> Result<usize> {
        let n = scene.objects.len();
        if scene.velocities.len() != n {
            return Err(Error::dims("scene velocities", n, scene.velocities.len()));
        }
        let offset = self.n_objects;
        self.scene_offsets.push(offset);
        for (k, o) in scene.objects.iter().enumerate() {
            let v = scene.velocities[k];
            let mut row = [v.x, v.y, o.radius, if o.controlled { 1.0 } else { 0.0 }];
            if let Some(norm) = self.norm {
                norm.object_row(&mut row);
            }
            self.objects.extend_from_slice(&row);
            if !o.controlled {
                self.free_rows.push(offset + k);
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (oi, oj) = (&scene.objects[i], &scene.objects[j]);
                let contact = in_contact(oi, oj);
                let Some(attr) = attribute(i, j, contact) else {
                    continue;
                };
                let mut row = edge_feature_row(
                    oi.position - oj.position,
                    scene.velocities[i] - scene.velocities[j],
                    attr,
                    oi.radius,
                    oj.radius,
                    contact,
                );
                if let Some(norm) = self.norm {
                    norm.edge_row(&mut row);
                }
                self.edges.extend_from_slice(&row);
                self.senders.push(offset + j);
                self.receivers.push(offset + i);
            }
        }
        self.n_objects += n;
        Ok(offset)
    }

    pub fn num_objects(&self) -> usize {
        self.n_objects
    }

    pub fn finish(self) -> GraphBatch {
        let ne = self.senders.len();
        GraphBatch {
            objects: Tensor2::from_vec(self.n_objects, OBJECT_FEATURE_DIM, self.objects).expect("row width"),
            edges: Tensor2::from_vec(ne, EDGE_FEATURE_DIM, self.edges).expect("row width"),
            senders: self.senders,
            receivers: self.receivers,
            free_rows: self.free_rows,
            scene_offsets: self.scene_offsets,
        }
    }
}

impl GraphBatch {
    pub fn num_objects(&self) -> usize {
        self.objects.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.senders.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objs() -> Vec<ObjectState> {
        let mut p = ObjectState::at_rest(Vec2::new(-0.2, 0.0), 0.03);
        p.controlled = true;
        vec![
            ObjectState::at_rest(Vec2::new(0.0, 0.0), 0.1),
            ObjectState::at_rest(Vec2::new(0.205, 0.0), 0.1),
            ObjectState::at_rest(Vec2::new(1.0, 1.0), 0.1),
            p,
        ]
    }

    #[test]
    fn builder_packs_scenes_and_filters_edges() {
        let o = objs();
        let v = vec![Vec2::ZERO, Vec2::ZERO, Vec2::ZERO, Vec2::new(0.1, 0.0)];
        let input = SceneInput {
            objects: &o,
            velocities: &v,
        };
        let mut b = GraphBatchBuilder::new(None);
        b.push_scene(&input, |_, _, c| c.then_some([1.0, 0.0, 0.0, 0.0])).unwrap();
        b.push_scene(&input, |_, _, _| Some([0.25; 4])).unwrap();
        let g = b.finish();
        assert_eq!(g.num_objects(), 8);
        assert_eq!(g.scene_offsets, vec![0, 4]);
        assert_eq!(g.free_rows, vec![0, 1, 2, 4, 5, 6]);
        // scene 0: only 0<->1 touch
        assert_eq!(&g.receivers[..2], &[0, 1]);
        assert_eq!(&g.senders[..2], &[1, 0]);
        assert_eq!(g.num_edges(), 2 + 12);
        assert_eq!(g.objects.row(3), &[0.1, 0.0, 0.03, 1.0]);
        assert_eq!(g.edges.row(0)[0], -0.205);
    }

    #[test]
    fn normalizer_keeps_reverse_edges_negated() {
        let o = objs();
        let v = vec![Vec2::new(0.01, 0.0), Vec2::new(-0.02, 0.03), Vec2::ZERO, Vec2::new(0.1, 0.0)];
        let input = SceneInput {
            objects: &o,
            velocities: &v,
        };
        let mut b = GraphBatchBuilder::new(None);
        b.push_scene(&input, |_, _, _| Some([0.0, 1.0, 0.0, 0.0])).unwrap();
        let raw = b.finish();
        let mut fit = NormalizerFit::new();
        fit.add_batch(&raw);
        fit.add_target(Vec2::new(0.05, 0.0));
        let norm = fit.finish();
        norm.validate().unwrap();
        let mut b = GraphBatchBuilder::new(Some(&norm));
        b.push_scene(&input, |_, _, _| Some([0.0, 1.0, 0.0, 0.0])).unwrap();
        let g = b.finish();
        let e01 = (0..g.num_edges()).find(|&k| g.receivers[k] == 0 && g.senders[k] == 1).unwrap();
        let e10 = (0..g.num_edges()).find(|&k| g.receivers[k] == 1 && g.senders[k] == 0).unwrap();
        for c in 0..4 {
            assert_eq!(g.edges.get(e01, c), -g.edges.get(e10, c));
        }
        assert_eq!(norm.edge_scale[4], 1.0);
        assert_eq!(norm.edge_shift[10], 0.0);
        let t = Vec2::new(0.3, -0.2);
        assert!((norm.denormalize_target(norm.normalize_target(t)) - t).norm() < 1e-15);
    }
}
