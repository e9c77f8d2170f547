//! Propagation-network physics predictor: encodes objects and relations,
//! propagates effects for a fixed number of steps and regresses the next-step
//! velocity of every free object. Rollouts chain single-step predictions.

mod batch;
mod propnet;

use rand::Rng;

pub use batch::{FeatureNormalizer, GraphBatch, GraphBatchBuilder, NormalizerFit, SceneInput};
pub use propnet::{PropCache, PropNetSpec, PropOutput, PropagationNet};

use crate::numerics::params::join;
use crate::numerics::{Mlp, MlpCache, MlpSpec, Parameters, Tensor2};
use crate::scene::{
    check_layout_version, EnvironmentMode, JointType, RelationAssignment, SceneState, Trajectory,
    FEATURE_LAYOUT_VERSION,
};
use crate::{Error, Result, Vec2};

/// Physics network weights, input normalization and the layout they expect.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorParams {
    pub net: PropagationNet,
    /// Linear map from `p^L` to a normalized velocity.
    pub head: Mlp,
    pub normalizer: FeatureNormalizer,
    pub layout_version: u32,
}

impl PredictorParams {
    pub fn zeros(spec: PropNetSpec) -> Result<Self> {
        let d = spec.code_dim;
        Ok(PredictorParams {
            net: PropagationNet::zeros(spec)?,
            head: Mlp::zeros(MlpSpec::new(d, &[], 2))?,
            normalizer: FeatureNormalizer::default(),
            layout_version: FEATURE_LAYOUT_VERSION,
        })
    }

    pub fn glorot<R: Rng>(spec: PropNetSpec, rng: &mut R) -> Result<Self> {
        let d = spec.code_dim;
        Ok(PredictorParams {
            net: PropagationNet::glorot(spec, rng)?,
            head: Mlp::glorot(MlpSpec::new(d, &[], 2), rng)?,
            normalizer: FeatureNormalizer::default(),
            layout_version: FEATURE_LAYOUT_VERSION,
        })
    }

    pub fn spec(&self) -> &PropNetSpec {
        &self.net.spec
    }
}

impl Parameters for PredictorParams {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor2)) {
        self.net.visit_params(prefix, f);
        self.head.visit_params(&join(prefix, "output_head"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor2)) {
        self.net.visit_params_mut(prefix, f);
        self.head.visit_params_mut(&join(prefix, "output_head"), f);
    }
}

/// Attribute of the directed edge `j -> i` for the physics network, or `None`
/// when the edge is gated off: pairs neither touching nor jointed carry no
/// effect at all.
pub fn physics_edge_attribute(relations: &RelationAssignment, i: usize, j: usize, contact: bool) -> Result<Option<[f64; 4]>> {
    let kind = relations.require(i, j)?;
    Ok((contact || kind != JointType::NoJoint).then(|| kind.one_hot()))
}

/// Velocities the network sees: the scene's own for free objects, the
/// command for the pusher.
pub fn input_velocities(scene: &SceneState, pusher_velocity: Vec2) -> Vec<Vec2> {
    scene
        .objects
        .iter()
        .map(|o| if o.controlled { pusher_velocity } else { o.velocity })
        .collect()
}

/// Appends one scene with hard relations to a physics batch.
pub fn push_physics_scene(
    builder: &mut GraphBatchBuilder<'_>,
    scene: &SceneState,
    relations: &RelationAssignment,
    pusher_velocity: Vec2,
) -> Result<usize> {
    if relations.num_objects() != scene.objects.len() {
        return Err(Error::dims("relation assignment objects", scene.objects.len(), relations.num_objects()));
    }
    let velocities = input_velocities(scene, pusher_velocity);
    let input = SceneInput {
        objects: &scene.objects,
        velocities: &velocities,
    };
    let mut err = None;
    let off = builder.push_scene(&input, |i, j, contact| match physics_edge_attribute(relations, i, j, contact) {
        Ok(a) => a,
        Err(e) => {
            err.get_or_insert(e);
            None
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(off),
    }
}

/// State `t` of an observed trajectory with free-object velocities replaced
/// by the backward difference `(q_t - q_{t-1}) / dt`, which is what a
/// prediction would have produced.
pub fn observed_scene(traj: &Trajectory, t: usize) -> SceneState {
    let mut s = traj.states[t].clone();
    if t > 0 {
        let prev = &traj.states[t - 1];
        for (o, p) in s.objects.iter_mut().zip(&prev.objects) {
            if !o.controlled {
                o.velocity = (o.position - p.position) / traj.dt;
            }
        }
    }
    s
}

/// Training target of step `t`: `(q_{t+1} - q_t) / dt` for each free object.
pub fn velocity_targets(traj: &Trajectory, t: usize) -> Vec<Vec2> {
    let (a, b) = (&traj.states[t], &traj.states[t + 1]);
    a.objects
        .iter()
        .zip(&b.objects)
        .filter(|(o, _)| !o.controlled)
        .map(|(o, n)| (n.position - o.position) / traj.dt)
        .collect()
}

pub struct ForwardCache {
    prop: PropCache,
    head: MlpCache,
    free_rows: Vec<usize>,
    num_objects: usize,
}

impl PredictorParams {
    fn check_layout(&self) -> Result<()> {
        check_layout_version(self.layout_version)
    }

    /// Normalized velocity predictions for the batch's free objects.
    pub fn forward(&self, batch: &GraphBatch) -> Result<Tensor2> {
        self.check_layout()?;
        let out = self.net.forward(batch)?;
        self.head.forward(&out.objects.gather_rows(&batch.free_rows))
    }

    pub fn forward_cached(&self, batch: &GraphBatch) -> Result<(Tensor2, ForwardCache)> {
        self.check_layout()?;
        let (out, prop) = self.net.forward_cached(batch)?;
        let (y, head) = self.head.forward_cached(&out.objects.gather_rows(&batch.free_rows))?;
        Ok((
            y,
            ForwardCache {
                prop,
                head,
                free_rows: batch.free_rows.clone(),
                num_objects: batch.num_objects(),
            },
        ))
    }

    /// Accumulates parameter gradients for `dL/dy` on the free-object outputs.
    pub fn backward(&self, cache: &ForwardCache, dy: &Tensor2, grads: &mut PredictorParams) -> Result<()> {
        let dh = self.head.backward(&cache.head, dy, &mut grads.head)?;
        let mut dp = Tensor2::zeros(cache.num_objects, self.net.spec.code_dim);
        dp.scatter_add_rows(&cache.free_rows, &dh);
        self.net.backward(&cache.prop, &dp, None, &mut grads.net)?;
        Ok(())
    }

    /// Mean over free objects of the squared error in normalized velocity;
    /// gradients are accumulated into `grads`.
    pub fn loss_and_grad(&self, batch: &GraphBatch, targets: &Tensor2, grads: &mut PredictorParams) -> Result<f64> {
        let (y, cache) = self.forward_cached(batch)?;
        let (loss, dy) = mse(&y, targets)?;
        self.backward(&cache, &dy, grads)?;
        Ok(loss)
    }

    pub fn loss(&self, batch: &GraphBatch, targets: &Tensor2) -> Result<f64> {
        let y = self.forward(batch)?;
        Ok(mse(&y, targets)?.0)
    }
}

/// `(1/F) Σ ||y - t||²` and its gradient with respect to `y`.
pub fn mse(y: &Tensor2, targets: &Tensor2) -> Result<(f64, Tensor2)> {
    if y.shape() != targets.shape() {
        return Err(Error::dims("prediction targets", format!("{:?}", y.shape()), format!("{:?}", targets.shape())));
    }
    let f = y.rows().max(1) as f64;
    let mut grad = Tensor2::zeros(y.rows(), y.cols());
    let mut loss = 0.0;
    for ((g, a), b) in grad.data_mut().iter_mut().zip(y.data()).zip(targets.data()) {
        let d = a - b;
        loss += d * d;
        *g = 2.0 * d / f;
    }
    Ok((loss / f, grad))
}

/// Velocity of every free object after this step, in scene order (m/s).
pub fn predict_step(
    scene: &SceneState,
    relations: &RelationAssignment,
    pusher_velocity: Vec2,
    params: &PredictorParams,
) -> Result<Vec<Vec2>> {
    let mut b = GraphBatchBuilder::new(Some(&params.normalizer));
    push_physics_scene(&mut b, scene, relations, pusher_velocity)?;
    let batch = b.finish();
    let y = params.forward(&batch)?;
    Ok((0..y.rows())
        .map(|r| params.normalizer.denormalize_target(Vec2::new(y.get(r, 0), y.get(r, 1))))
        .collect())
}

/// One scene to roll forward.
#[derive(Clone, Copy)]
pub struct RolloutJob<'a> {
    pub scene: &'a SceneState,
    pub relations: &'a RelationAssignment,
    pub controls: &'a [Vec2],
    pub dt: f64,
    pub mode: EnvironmentMode,
}

/// Rolls one scene forward `steps` times from its own predictions.
pub fn rollout(job: RolloutJob<'_>, params: &PredictorParams, steps: usize) -> Result<Trajectory> {
    Ok(rollout_batch(&[job], params, steps)?.pop().expect("one job"))
}

/// Rolls several scenes forward in lockstep, one network pass per step.
/// Free positions integrate as `q += v̂ dt`; the pusher follows its commands.
pub fn rollout_batch(jobs: &[RolloutJob<'_>], params: &PredictorParams, steps: usize) -> Result<Vec<Trajectory>> {
    for j in jobs {
        if steps > j.controls.len() {
            return Err(Error::LengthMismatch(format!(
                "rollout of {steps} steps with {} controls",
                j.controls.len()
            )));
        }
    }
    let mut trajs: Vec<Trajectory> = jobs
        .iter()
        .map(|j| Trajectory {
            states: vec![j.scene.clone()],
            controls: j.controls[..steps].to_vec(),
            dt: j.dt,
            environment_mode: j.mode,
        })
        .collect();
    for t in 0..steps {
        let mut b = GraphBatchBuilder::new(Some(&params.normalizer));
        for (j, tr) in jobs.iter().zip(&trajs) {
            push_physics_scene(&mut b, tr.states.last().expect("state"), j.relations, j.controls[t])?;
        }
        let batch = b.finish();
        let y = params.forward(&batch)?;
        if !y.is_finite() {
            return Err(Error::RolloutDiverged { step: t });
        }
        let mut row = 0;
        for (j, tr) in jobs.iter().zip(trajs.iter_mut()) {
            let mut next = tr.states.last().expect("state").clone();
            let u = j.controls[t];
            for o in next.objects.iter_mut() {
                if o.controlled {
                    o.velocity = u;
                    o.position += u * j.dt;
                } else {
                    let v = params.normalizer.denormalize_target(Vec2::new(y.get(row, 0), y.get(row, 1)));
                    row += 1;
                    o.velocity = v;
                    o.position += v * j.dt;
                }
            }
            if next.objects.iter().any(|o| !o.position.is_finite()) {
                return Err(Error::RolloutDiverged { step: t });
            }
            next.time += 1;
            tr.states.push(next);
        }
    }
    Ok(trajs)
}
