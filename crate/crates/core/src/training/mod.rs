//! Training loops for the physics predictor and the belief network, with
//! Adam, plateau decay and validation-based model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{
    argmax, fit_class_prior, fit_normalizer, run_beliefs, sequence_loss_and_grad, BeliefParams, BeliefSpec, SequenceWindow,
};
use crate::numerics::{decay_on_plateau, AdamConfig, AdamState, Parameters, Tensor2};
use crate::predictor::{
    observed_scene, push_physics_scene, rollout_batch, velocity_targets, GraphBatch, GraphBatchBuilder, NormalizerFit,
    PredictorParams, PropNetSpec, RolloutJob,
};
use crate::scene::{RelationAssignment, Trajectory};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub decay_factor: f64,
    /// Epochs without a new best validation value before the rate decays.
    pub patience: usize,
    pub max_epochs: usize,
    /// Share of the single-step samples visited per physics epoch.
    pub physics_epoch_fraction: f64,
    pub belief_batches_per_epoch: usize,
    pub sequence_length: usize,
    /// Belief cross-entropy is taken on steps `first..=last`.
    pub loss_window: (usize, usize),
    /// Rollout length for physics validation.
    pub validation_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr: 1e-3,
            decay_factor: 0.8,
            patience: 20,
            max_epochs: 500,
            physics_epoch_fraction: 0.5,
            belief_batches_per_epoch: 100,
            sequence_length: 100,
            loss_window: (50, 100),
            validation_steps: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size == 0 || self.max_epochs == 0 || self.belief_batches_per_epoch == 0 {
            return bad("batch size, epochs and batches per epoch must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return bad("decay factor must lie in (0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.physics_epoch_fraction > 0.0 && self.physics_epoch_fraction <= 1.0) {
            return bad("physics epoch fraction must lie in (0, 1]");
        }
        if self.validation_steps == 0 {
            return bad("validation rollouts need at least one step");
        }
        self.window().validate()
    }

    pub fn window(&self) -> SequenceWindow {
        SequenceWindow {
            steps: self.sequence_length,
            first: self.loss_window.0,
            last: self.loss_window.1,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_score: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_score: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,validation_score,lr\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.9e},{:.9e},{:.9e}\n", e.epoch, e.train_loss, e.validation_score, e.lr));
        }
        s
    }
}

/// Learning-rate bookkeeping shared by both trainers.
struct Plateau {
    history: Vec<f64>,
    patience: usize,
    factor: f64,
}

impl Plateau {
    fn update(&mut self, adam: &mut AdamState, value: f64) {
        self.history.push(value);
        let lr = decay_on_plateau(adam.lr, &self.history, self.patience, self.factor);
        if lr != adam.lr {
            adam.lr = lr;
            self.history.clear();
        }
    }
}

/// Mean Euclidean position error (m) over free objects and the predicted
/// steps `1..` of `pred` against `truth`.
pub fn mean_position_error(pred: &Trajectory, truth: &Trajectory) -> Result<f64> {
    if pred.states.len() != truth.states.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predicted states against {} observed",
            pred.states.len(),
            truth.states.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, q) in pred.states.iter().zip(&truth.states).skip(1) {
        if p.objects.len() != q.objects.len() {
            return Err(Error::dims("trajectory objects", q.objects.len(), p.objects.len()));
        }
        for (a, b) in p.objects.iter().zip(&q.objects) {
            if !b.controlled {
                sum += (a.position - b.position).norm();
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Physics validation score: mean position error of rollouts with
/// ground-truth relations, `steps` long (or the trajectory length if shorter).
/// A rollout that blows up scores infinity.
pub fn evaluate_validation(params: &PredictorParams, val: &[Trajectory], steps: usize) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::InvalidConfig("empty validation set".into()));
    }
    let rels: Vec<_> = val.iter().map(|t| RelationAssignment::ground_truth(t.initial())).collect();
    let mut total = 0.0;
    // lockstep batches need a common length
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (k, t) in val.iter().enumerate() {
        groups.entry(steps.min(t.len())).or_default().push(k);
    }
    for (t_len, members) in groups {
        let jobs: Vec<_> = members
            .iter()
            .map(|&k| RolloutJob {
                scene: val[k].initial(),
                relations: &rels[k],
                controls: &val[k].controls,
                dt: val[k].dt,
                mode: val[k].environment_mode,
            })
            .collect();
        let preds = match rollout_batch(&jobs, params, t_len) {
            Ok(p) => p,
            Err(Error::RolloutDiverged { .. }) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        for (&k, p) in members.iter().zip(&preds) {
            total += mean_position_error(p, &val[k].truncated(t_len))?;
        }
    }
    Ok(total / val.len() as f64)
}

/// Single-step samples `(trajectory, t)`.
fn physics_samples(data: &[Trajectory]) -> Vec<(usize, usize)> {
    data.iter()
        .enumerate()
        .flat_map(|(k, t)| (0..t.len()).map(move |s| (k, s)))
        .collect()
}

fn physics_batch(
    data: &[Trajectory],
    rels: &[RelationAssignment],
    samples: &[(usize, usize)],
    params: &PredictorParams,
) -> Result<(GraphBatch, Tensor2)> {
    let mut b = GraphBatchBuilder::new(Some(&params.normalizer));
    let mut targets = Vec::new();
    for &(k, t) in samples {
        let tr = &data[k];
        push_physics_scene(&mut b, &observed_scene(tr, t), &rels[k], tr.controls[t])?;
        for v in velocity_targets(tr, t) {
            let v = params.normalizer.normalize_target(v);
            targets.extend_from_slice(&[v.x, v.y]);
        }
    }
    let batch = b.finish();
    let y = Tensor2::from_vec(targets.len() / 2, 2, targets)?;
    Ok((batch, y))
}

/// Input and target statistics over every training sample.
pub fn fit_physics_normalizer(data: &[Trajectory]) -> Result<crate::predictor::FeatureNormalizer> {
    let mut fit = NormalizerFit::new();
    for tr in data {
        let rel = RelationAssignment::ground_truth(tr.initial());
        let mut b = GraphBatchBuilder::new(None);
        for t in 0..tr.len() {
            push_physics_scene(&mut b, &observed_scene(tr, t), &rel, tr.controls[t])?;
            for v in velocity_targets(tr, t) {
                fit.add_target(v);
            }
        }
        fit.add_batch(&b.finish());
    }
    Ok(fit.finish())
}

/// Teacher-forced single-step training with ground-truth relations; keeps the
/// parameters with the lowest validation rollout error.
pub fn train_physics(
    train: &[Trajectory],
    val: &[Trajectory],
    spec: PropNetSpec,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(PredictorParams, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || train.iter().all(|t| t.is_empty()) {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = PredictorParams::glorot(spec, &mut rng)?;
    params.normalizer = fit_physics_normalizer(train)?;
    let rels: Vec<_> = train.iter().map(|t| RelationAssignment::ground_truth(t.initial())).collect();
    let mut samples = physics_samples(train);
    let per_epoch = ((samples.len() as f64 * cfg.physics_epoch_fraction).ceil() as usize).max(1);
    let mut adam = AdamState::new(cfg.adam(), &params)?;
    let mut plateau = Plateau {
        history: Vec::new(),
        patience: cfg.patience,
        factor: cfg.decay_factor,
    };
    let mut best = params.clone();
    let mut report = TrainReport {
        best_score: f64::INFINITY,
        ..TrainReport::default()
    };
    for epoch in 1..=cfg.max_epochs {
        samples.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in samples[..per_epoch].chunks(cfg.batch_size) {
            let (batch, y) = physics_batch(train, &rels, chunk, &params)?;
            let mut grads = params.zeros_like();
            loss_sum += params.loss_and_grad(&batch, &y, &mut grads)?;
            batches += 1;
            adam.step(&mut params, &grads)?;
        }
        let score = evaluate_validation(&params, val, cfg.validation_steps)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            validation_score: score,
            lr: adam.lr,
        };
        if !rec.train_loss.is_finite() {
            return Err(Error::NonFinite(format!("physics training loss at epoch {epoch}")));
        }
        if score < report.best_score {
            report.best_score = score;
            report.best_epoch = epoch;
            best = params.clone();
        }
        progress(&rec);
        report.epochs.push(rec);
        plateau.update(&mut adam, score);
    }
    Ok((best, report))
}

/// Mean belief cross-entropy over `window` and relation accuracy over free
/// pairs at the window's final step.
pub fn belief_validation(params: &BeliefParams, val: &[Trajectory], window: SequenceWindow) -> Result<(f64, f64)> {
    window.validate()?;
    if val.is_empty() {
        return Err(Error::InvalidConfig("empty validation set".into()));
    }
    let refs: Vec<_> = val.iter().collect();
    let gts: Vec<_> = val.iter().map(|t| RelationAssignment::ground_truth(t.initial())).collect();
    let (mut loss, mut n_loss, mut correct, mut n_acc) = (0.0, 0usize, 0usize, 0usize);
    run_beliefs(&refs, params, window.steps, |k, t, s| {
        let last = window.steps.min(val[k].len());
        let in_window = (window.first..=window.last).contains(&t) && t <= val[k].len();
        if !in_window && t != last {
            return;
        }
        for (slot, i, j) in s.free_pairs() {
            let y = gts[k].get(i, j).expect("pair");
            let d = s.pairs[slot].dist;
            if in_window {
                loss -= d[y.index()].ln();
                n_loss += 1;
            }
            if t == last {
                correct += (argmax(&d) == y) as usize;
                n_acc += 1;
            }
        }
    })?;
    let loss = if n_loss == 0 { 0.0 } else { loss / n_loss as f64 };
    let acc = if n_acc == 0 { 1.0 } else { correct as f64 / n_acc as f64 };
    Ok((loss, acc))
}

/// BPTT training of the belief network on the first `sequence_length` steps
/// of random trajectory batches; keeps the parameters with the best
/// validation accuracy at the final step. `init` continues from existing
/// weights (its normalizer is kept).
pub fn train_belief(
    train: &[Trajectory],
    val: &[Trajectory],
    spec: BeliefSpec,
    init: Option<BeliefParams>,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(BeliefParams, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || train.iter().all(|t| t.is_empty()) {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    let window = cfg.window();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let refs: Vec<&Trajectory> = train.iter().filter(|t| !t.is_empty()).collect();
    let mut params = match init {
        Some(p) => p,
        None => {
            let mut p = BeliefParams::glorot(spec, &mut rng)?;
            p.normalizer = fit_normalizer(&refs, &p.spec, cfg.sequence_length)?;
            p.set_class_prior(fit_class_prior(&refs, &p.spec, cfg.sequence_length)?)?;
            p
        }
    };
    let mut adam = AdamState::new(cfg.adam(), &params)?;
    let mut plateau = Plateau {
        history: Vec::new(),
        patience: cfg.patience,
        factor: cfg.decay_factor,
    };
    let mut best = params.clone();
    let mut report = TrainReport {
        best_score: f64::NEG_INFINITY,
        ..TrainReport::default()
    };
    let mut order: Vec<usize> = (0..refs.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        for _ in 0..cfg.belief_batches_per_epoch {
            order.shuffle(&mut rng);
            let batch: Vec<&Trajectory> = order.iter().take(cfg.batch_size).map(|&k| refs[k]).collect();
            let mut grads = params.zeros_like();
            loss_sum += sequence_loss_and_grad(&params, &batch, window, &mut grads)?;
            adam.step(&mut params, &grads)?;
        }
        let (val_loss, acc) = belief_validation(&params, val, window)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / cfg.belief_batches_per_epoch as f64,
            validation_score: acc,
            lr: adam.lr,
        };
        if !rec.train_loss.is_finite() {
            return Err(Error::NonFinite(format!("belief training loss at epoch {epoch}")));
        }
        if acc > report.best_score {
            report.best_score = acc;
            report.best_epoch = epoch;
            best = params.clone();
        }
        progress(&rec);
        report.epochs.push(rec);
        plateau.update(&mut adam, val_loss);
    }
    Ok((best, report))
}
