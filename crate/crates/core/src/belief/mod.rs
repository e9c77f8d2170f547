//! Temporal propagation network: a second propagation network whose per-edge
//! effects drive a recurrent cell per object pair, accumulating interaction
//! history into a distribution over joint types.

mod bptt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bptt::{sequence_loss, sequence_loss_and_grad, SequenceWindow};

use crate::numerics::params::join;
use crate::numerics::{LstmCache, LstmCell, Mlp, MlpCache, MlpSpec, Parameters, RecurrentCellSpec, Tensor2};
use crate::predictor::{rollout, FeatureNormalizer, GraphBatchBuilder, NormalizerFit, PredictorParams, PropCache, PropNetSpec, PropagationNet, RolloutJob, SceneInput};
use crate::predictor::observed_scene;
use crate::scene::{check_layout_version, pair_slot, JointType, RelationAssignment, SceneState, Trajectory, FEATURE_LAYOUT_VERSION};
use crate::{Error, Result, Vec2};

/// Speed below which an object counts as still (m/s).
pub const MOTION_EPSILON: f64 = 1e-6;

pub const PRIOR: [f64; 4] = [0.25; 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSpec {
    pub net: PropNetSpec,
    pub hidden_dim: usize,
    /// Pairs farther apart than this surface gap (m) are not updated.
    pub relation_radius: f64,
    /// `false` selects the stateless one-step variant.
    pub recurrent: bool,
}

impl Default for BeliefSpec {
    fn default() -> Self {
        BeliefSpec {
            net: PropNetSpec::default(),
            hidden_dim: 100,
            relation_radius: 0.10,
            recurrent: true,
        }
    }
}

impl BeliefSpec {
    pub fn tiny() -> Self {
        BeliefSpec {
            net: PropNetSpec::tiny(),
            hidden_dim: 3,
            ..BeliefSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("belief hidden width must be at least 1".into()));
        }
        if !(self.relation_radius > 0.0) {
            return Err(Error::InvalidConfig("relation radius must be positive".into()));
        }
        Ok(())
    }

    fn cell(&self) -> RecurrentCellSpec {
        RecurrentCellSpec {
            input_dim: self.net.code_dim,
            hidden_dim: self.hidden_dim,
        }
    }

    fn classifier(&self) -> MlpSpec {
        MlpSpec::new(self.hidden_dim, &[], JointType::COUNT)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeliefParams {
    pub spec: BeliefSpec,
    pub net: PropagationNet,
    pub cell: LstmCell,
    pub classifier: Mlp,
    pub normalizer: FeatureNormalizer,
    pub layout_version: u32,
}

impl BeliefParams {
    pub fn zeros(spec: BeliefSpec) -> Result<Self> {
        spec.validate()?;
        Ok(BeliefParams {
            net: PropagationNet::zeros(spec.net.clone())?,
            cell: LstmCell::zeros(spec.cell())?,
            classifier: Mlp::zeros(spec.classifier())?,
            normalizer: FeatureNormalizer::default(),
            layout_version: FEATURE_LAYOUT_VERSION,
            spec,
        })
    }

    /// Glorot weights everywhere except the classifier, which starts at zero
    /// so every initial belief is the uniform prior.
    pub fn glorot<R: Rng>(spec: BeliefSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        Ok(BeliefParams {
            net: PropagationNet::glorot(spec.net.clone(), rng)?,
            cell: LstmCell::glorot(spec.cell(), rng)?,
            classifier: Mlp::zeros(spec.classifier())?,
            normalizer: FeatureNormalizer::default(),
            layout_version: FEATURE_LAYOUT_VERSION,
            spec,
        })
    }

    /// Sets the classifier output bias to `ln prior`. With zero classifier
    /// weights the first updates then predict `prior` for every observed pair.
    pub fn set_class_prior(&mut self, prior: [f64; 4]) -> Result<()> {
        if prior.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidConfig(format!("class prior {prior:?} must be positive")));
        }
        let last = self.classifier.layers_mut().last_mut().expect("classifier layer");
        for (k, p) in prior.iter().enumerate() {
            last.bias.set(0, k, p.ln());
        }
        Ok(())
    }
}

impl Parameters for BeliefParams {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor2)) {
        self.net.visit_params(prefix, f);
        self.cell.visit_params(&join(prefix, "cell"), f);
        self.classifier.visit_params(&join(prefix, "classifier"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor2)) {
        self.net.visit_params_mut(prefix, f);
        self.cell.visit_params_mut(&join(prefix, "cell"), f);
        self.classifier.visit_params_mut(&join(prefix, "classifier"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairBelief {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub dist: [f64; 4],
}

/// Belief over every unordered pair of one scene, in
/// [`RelationAssignment::pairs`] order. Pairs involving the pusher are known
/// to be unjointed and never updated.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState {
    pub num_objects: usize,
    pub pusher: Option<usize>,
    pub pairs: Vec<PairBelief>,
    /// Reserved per-object recurrent state; no object attribute is inferred.
    pub objects: Vec<Vec<f64>>,
    /// Time index of the last observation folded in.
    pub time: usize,
}

impl BeliefState {
    /// Uniform prior for `scene`, before any motion has been seen.
    pub fn prior(scene: &SceneState, hidden_dim: usize) -> Self {
        let n = scene.objects.len();
        let pusher = scene.pusher_index();
        let pairs = RelationAssignment::pairs(n)
            .map(|(i, j)| PairBelief {
                h: vec![0.0; hidden_dim],
                c: vec![0.0; hidden_dim],
                dist: if Some(i) == pusher || Some(j) == pusher {
                    JointType::NoJoint.one_hot()
                } else {
                    PRIOR
                },
            })
            .collect();
        BeliefState {
            num_objects: n,
            pusher,
            pairs,
            objects: vec![Vec::new(); n],
            time: scene.time,
        }
    }

    pub fn pair(&self, i: usize, j: usize) -> &PairBelief {
        &self.pairs[pair_slot(self.num_objects, i, j)]
    }

    pub fn dist(&self, i: usize, j: usize) -> [f64; 4] {
        self.pair(i, j).dist
    }

    fn is_pusher_pair(&self, i: usize, j: usize) -> bool {
        Some(i) == self.pusher || Some(j) == self.pusher
    }

    /// Free pairs `(slot, i, j)`, the ones whose relation is inferred.
    pub fn free_pairs(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        RelationAssignment::pairs(self.num_objects)
            .enumerate()
            .filter(move |(_, (i, j))| !self.is_pusher_pair(*i, *j))
            .map(|(s, (i, j))| (s, i, j))
    }
}

/// Argmax per pair; ties go to the lowest index, which is `NoJoint`.
pub fn classify_relations(state: &BeliefState) -> RelationAssignment {
    let mut r = RelationAssignment::uniform(state.num_objects, JointType::NoJoint);
    for (slot, (i, j)) in RelationAssignment::pairs(state.num_objects).enumerate() {
        r.set(i, j, argmax(&state.pairs[slot].dist));
    }
    r
}

pub fn argmax(d: &[f64; 4]) -> JointType {
    let mut best = 0;
    for k in 1..4 {
        if d[k] > d[best] {
            best = k;
        }
    }
    JointType::from_index(best).expect("four joint types")
}

/// Two consecutive observed states.
#[derive(Clone, Copy)]
pub struct Observation<'a> {
    pub prev: &'a SceneState,
    pub cur: &'a SceneState,
    pub dt: f64,
}

impl<'a> Observation<'a> {
    pub fn from_trajectory(traj: &'a Trajectory, t: usize) -> Self {
        Observation {
            prev: &traj.states[t - 1],
            cur: &traj.states[t],
            dt: traj.dt,
        }
    }

    fn velocities(&self) -> Vec<Vec2> {
        self.cur
            .objects
            .iter()
            .zip(&self.prev.objects)
            .map(|(c, p)| (c.position - p.position) / self.dt)
            .collect()
    }
}

/// Appends the gated belief graph of one observation; `on_edge(i, j)` sees
/// every emitted edge `j -> i` in batch order.
fn push_observation(
    builder: &mut GraphBatchBuilder<'_>,
    state: &BeliefState,
    o: &Observation<'_>,
    radius: f64,
    mut on_edge: impl FnMut(usize, usize),
) -> Result<usize> {
    let v = o.velocities();
    let moving: Vec<bool> = v.iter().map(|x| x.norm() > MOTION_EPSILON).collect();
    let input = SceneInput {
        objects: &o.cur.objects,
        velocities: &v,
    };
    builder.push_scene(&input, |i, j, _| {
        if !(moving[i] || moving[j]) || o.cur.surface_gap(i, j) >= radius {
            return None;
        }
        on_edge(i, j);
        Some(if state.is_pusher_pair(i, j) {
            JointType::NoJoint.one_hot()
        } else {
            state.dist(i, j)
        })
    })
}

/// Label frequencies of the free pairs that enter the belief graph at least
/// once in the first `steps` observations, with one pseudo-count per class.
pub fn fit_class_prior(trajs: &[&Trajectory], spec: &BeliefSpec, steps: usize) -> Result<[f64; 4]> {
    let mut counts = [1.0; 4];
    for tr in trajs {
        let prior = BeliefState::prior(tr.initial(), spec.hidden_dim);
        let gt = RelationAssignment::ground_truth(tr.initial());
        let mut seen = vec![false; prior.pairs.len()];
        let mut b = GraphBatchBuilder::new(None);
        for t in 1..=steps.min(tr.len()) {
            push_observation(&mut b, &prior, &Observation::from_trajectory(tr, t), spec.relation_radius, |i, j| {
                if !prior.is_pusher_pair(i, j) {
                    seen[pair_slot(prior.num_objects, i, j)] = true;
                }
            })?;
        }
        for (slot, i, j) in prior.free_pairs() {
            if seen[slot] {
                counts[gt.require(i, j)?.index()] += 1.0;
            }
        }
    }
    let total: f64 = counts.iter().sum();
    Ok(counts.map(|c| c / total))
}

/// Input statistics of the belief graphs over the first `steps` observations.
pub fn fit_normalizer(trajs: &[&Trajectory], spec: &BeliefSpec, steps: usize) -> Result<FeatureNormalizer> {
    let mut fit = NormalizerFit::new();
    for tr in trajs {
        let prior = BeliefState::prior(tr.initial(), spec.hidden_dim);
        let mut b = GraphBatchBuilder::new(None);
        for t in 1..=steps.min(tr.len()) {
            push_observation(&mut b, &prior, &Observation::from_trajectory(tr, t), spec.relation_radius, |_, _| ())?;
        }
        fit.add_batch(&b.finish());
    }
    Ok(fit.finish())
}

/// Forward quantities of one batched step, kept for the reverse pass.
pub(crate) struct StepRecord {
    pub prop: PropCache,
    pub lstm: LstmCache,
    pub classifier: MlpCache,
    /// `(scene, slot, edge_ij, edge_ji)` per updated pair, in LSTM row-pair order.
    pub updates: Vec<(usize, usize, usize, usize)>,
    pub dists: Vec<[f64; 4]>,
    /// `(edge, scene, slot)` for edges that carry a believed attribute.
    pub attributes: Vec<(usize, usize, usize)>,
    pub num_objects: usize,
    pub num_edges: usize,
}

fn softmax(z: &[f64]) -> [f64; 4] {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; 4];
    let mut s = 0.0;
    for k in 0..4 {
        out[k] = (z[k] - m).exp();
        s += out[k];
    }
    for v in out.iter_mut() {
        *v /= s;
    }
    out
}

/// Advances several beliefs by one observation each; `None` holds a state.
/// With `recurrent == false` every step starts from the prior, which is the
/// one-step variant.
pub(crate) fn advance(
    params: &BeliefParams,
    states: &mut [BeliefState],
    obs: &[Option<Observation<'_>>],
    recurrent: bool,
) -> Result<Option<StepRecord>> {
    check_layout_version(params.layout_version)?;
    if states.len() != obs.len() {
        return Err(Error::dims("belief observations", states.len(), obs.len()));
    }
    let hd = params.spec.hidden_dim;
    let radius = params.spec.relation_radius;
    let mut builder = GraphBatchBuilder::new(Some(&params.normalizer));
    let mut emitted: Vec<(usize, usize, usize)> = Vec::new();
    for (k, (state, o)) in states.iter_mut().zip(obs).enumerate() {
        let Some(o) = o else { continue };
        let n = state.num_objects;
        if o.prev.objects.len() != n || o.cur.objects.len() != n {
            return Err(Error::dims("belief scene objects", n, o.cur.objects.len()));
        }
        if o.prev.time != state.time || o.cur.time != o.prev.time + 1 {
            return Err(Error::TimeGap {
                previous: state.time,
                current: o.cur.time,
            });
        }
        if !recurrent {
            *state = BeliefState {
                time: state.time,
                ..BeliefState::prior(o.cur, hd)
            };
        }
        push_observation(&mut builder, state, o, radius, |i, j| emitted.push((k, i, j)))?;
    }
    for (s, o) in states.iter_mut().zip(obs) {
        if let Some(o) = o {
            s.time = o.cur.time;
        }
    }
    let batch = builder.finish();

    // pair each free edge with its reverse; emission is receiver-major, so
    // the i -> j edge of a pair shows up after its j -> i twin when i > j
    let mut first: std::collections::HashMap<(usize, usize), usize> = Default::default();
    let mut updates = Vec::new();
    let mut attributes = Vec::new();
    for (e, &(k, i, j)) in emitted.iter().enumerate() {
        if states[k].is_pusher_pair(i, j) {
            continue;
        }
        let slot = pair_slot(states[k].num_objects, i, j);
        attributes.push((e, k, slot));
        match first.remove(&(k, slot)) {
            Some(e0) => updates.push((k, slot, e0, e)),
            None => {
                first.insert((k, slot), e);
            }
        }
    }
    debug_assert!(first.is_empty());
    if updates.is_empty() {
        return Ok(None);
    }
    updates.sort_unstable();

    let (out, prop) = params.net.forward_cached(&batch)?;
    let rows: Vec<usize> = updates.iter().flat_map(|u| [u.2, u.3]).collect();
    let x = out.effects.gather_rows(&rows);
    let mut h = Tensor2::zeros(rows.len(), hd);
    let mut c = Tensor2::zeros(rows.len(), hd);
    for (u, &(k, slot, _, _)) in updates.iter().enumerate() {
        let p = &states[k].pairs[slot];
        for r in [2 * u, 2 * u + 1] {
            h.row_mut(r).copy_from_slice(&p.h);
            c.row_mut(r).copy_from_slice(&p.c);
        }
    }
    let (h2, c2, lstm) = params.cell.step_cached(&x, &h, &c)?;
    let mut hp = Tensor2::zeros(updates.len(), hd);
    let mut cp = Tensor2::zeros(updates.len(), hd);
    for u in 0..updates.len() {
        for (dst, src) in [(&mut hp, &h2), (&mut cp, &c2)] {
            let (a, b) = (src.row(2 * u), src.row(2 * u + 1));
            for (d, (x, y)) in dst.row_mut(u).iter_mut().zip(a.iter().zip(b)) {
                *d = 0.5 * (x + y);
            }
        }
    }
    let (logits, classifier) = params.classifier.forward_cached(&hp)?;
    if !logits.is_finite() {
        return Err(Error::NonFinite("belief logits".into()));
    }
    let mut dists = Vec::with_capacity(updates.len());
    for (u, &(k, slot, _, _)) in updates.iter().enumerate() {
        let d = softmax(logits.row(u));
        let p = &mut states[k].pairs[slot];
        p.h.copy_from_slice(hp.row(u));
        p.c.copy_from_slice(cp.row(u));
        p.dist = d;
        dists.push(d);
    }
    Ok(Some(StepRecord {
        prop,
        lstm,
        classifier,
        updates,
        dists,
        attributes,
        num_objects: batch.num_objects(),
        num_edges: batch.num_edges(),
    }))
}

/// Folds the observation `(t-1, t)` into `state`.
pub fn belief_step(state: &BeliefState, obs: Observation<'_>, params: &BeliefParams) -> Result<BeliefState> {
    let mut s = [state.clone()];
    advance(params, &mut s, &[Some(obs)], params.spec.recurrent)?;
    let [s] = s;
    Ok(s)
}

/// Belief from a single observation with no accumulated history.
pub fn one_step_belief(obs: Observation<'_>, params: &BeliefParams) -> Result<BeliefState> {
    let mut s = [BeliefState::prior(obs.prev, params.spec.hidden_dim)];
    advance(params, &mut s, &[Some(obs)], false)?;
    let [s] = s;
    Ok(s)
}

/// Runs the belief over the first `steps` observations of each trajectory in
/// lockstep and hands every intermediate state (t = 0..=steps) to `visit`.
/// Trajectories shorter than `steps` hold their final belief.
pub fn run_beliefs(
    trajs: &[&Trajectory],
    params: &BeliefParams,
    steps: usize,
    mut visit: impl FnMut(usize, usize, &BeliefState),
) -> Result<()> {
    let mut states: Vec<BeliefState> = trajs
        .iter()
        .map(|t| BeliefState::prior(t.initial(), params.spec.hidden_dim))
        .collect();
    for (k, s) in states.iter().enumerate() {
        visit(k, 0, s);
    }
    for t in 1..=steps {
        let obs: Vec<_> = trajs
            .iter()
            .map(|tr| (t <= tr.len()).then(|| Observation::from_trajectory(tr, t)))
            .collect();
        advance(params, &mut states, &obs, params.spec.recurrent)?;
        for (k, s) in states.iter().enumerate() {
            visit(k, t, s);
        }
    }
    Ok(())
}

/// Belief after the first `t` observations of `traj`. The stateless variant
/// only looks at the last one.
pub fn belief_at(traj: &Trajectory, t: usize, params: &BeliefParams) -> Result<BeliefState> {
    if t > traj.len() {
        return Err(Error::LengthMismatch(format!("belief at step {t} of a {}-step trajectory", traj.len())));
    }
    if t == 0 {
        return Ok(BeliefState::prior(traj.initial(), params.spec.hidden_dim));
    }
    if !params.spec.recurrent {
        return one_step_belief(Observation::from_trajectory(traj, t), params);
    }
    let mut last = None;
    run_beliefs(&[traj], params, t, |_, k, s| {
        if k == t {
            last = Some(s.clone());
        }
    })?;
    Ok(last.expect("final state"))
}

/// Infers relations from `history` (all of its states), then predicts the
/// rest of the push with those relations fixed.
pub fn regulated_rollout(
    history: &Trajectory,
    controls: &[Vec2],
    predictor: &PredictorParams,
    belief: &BeliefParams,
) -> Result<Trajectory> {
    if history.states.is_empty() {
        return Err(Error::LengthMismatch("empty observation history".into()));
    }
    let t = history.len();
    let relations = classify_relations(&belief_at(history, t, belief)?);
    let start = observed_scene(history, t);
    rollout(
        RolloutJob {
            scene: &start,
            relations: &relations,
            controls,
            dt: history.dt,
            mode: history.environment_mode,
        },
        predictor,
        controls.len(),
    )
}
