//! Presets and the flat `key = value` config format.

use serde::{Deserialize, Serialize};

use super::data::DatasetSpec;
use crate::belief::BeliefSpec;
use crate::predictor::PropNetSpec;
use crate::scene::EnvironmentMode;
use crate::sim::{PushConfig, SceneGenConfig, SceneLayout, SimConfig};
use crate::training::TrainConfig;
use crate::{Error, Result};

pub const PRESETS: [&str; 4] = ["sparse-desk", "full", "mini", "smoke"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelScale {
    /// Layer widths as published.
    Full,
    /// Three-unit layers, for quick checks.
    Tiny,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: String,
    pub seed: u64,
    pub model_scale: ModelScale,
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub test_sparse_scenes: usize,
    pub test_dense_scenes: usize,
    pub test_fixed_scenes: usize,
    pub train_objects: Vec<usize>,
    pub test_sparse_objects: Vec<usize>,
    pub test_dense_objects: Vec<usize>,
    pub directions: usize,
    pub scene: SceneGenConfig,
    pub push: PushConfig,
    pub sim: SimConfig,
    pub physics: TrainConfig,
    pub belief: TrainConfig,
    pub time_points: Vec<usize>,
    pub sparse_horizon: usize,
    pub dense_horizon: usize,
}

/// Dataset splits written by `gen-data`.
pub const SPLITS: [&str; 5] = ["train", "val", "test_sparse", "test_dense", "test_fixed"];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let desk = ExperimentConfig {
            preset: name.to_string(),
            seed: 0,
            model_scale: ModelScale::Full,
            train_scenes: 100,
            val_scenes: 20,
            test_sparse_scenes: 30,
            test_dense_scenes: 20,
            test_fixed_scenes: 30,
            train_objects: vec![9],
            test_sparse_objects: vec![9],
            test_dense_objects: vec![8],
            directions: 1,
            scene: SceneGenConfig::default(),
            push: PushConfig {
                speed: 0.03,
                ..PushConfig::default()
            },
            sim: SimConfig::default(),
            physics: TrainConfig {
                max_epochs: 50,
                physics_epoch_fraction: 0.25,
                ..TrainConfig::default()
            },
            belief: TrainConfig {
                max_epochs: 50,
                batch_size: 16,
                belief_batches_per_epoch: 4,
                ..TrainConfig::default()
            },
            time_points: vec![0, 25, 50, 75, 100],
            sparse_horizon: 200,
            dense_horizon: 50,
        };
        let cfg = match name {
            "sparse-desk" => desk,
            "full" => ExperimentConfig {
                train_scenes: 900,
                val_scenes: 100,
                test_sparse_scenes: 100,
                test_dense_scenes: 150,
                test_fixed_scenes: 100,
                test_sparse_objects: vec![9, 6, 9, 12],
                test_dense_objects: vec![6, 8, 9],
                directions: 4,
                physics: TrainConfig::default(),
                belief: TrainConfig::default(),
                ..desk
            },
            "mini" => ExperimentConfig {
                train_scenes: 8,
                val_scenes: 3,
                test_sparse_scenes: 4,
                test_dense_scenes: 3,
                test_fixed_scenes: 3,
                push: PushConfig {
                    speed: 0.03,
                    length: 0.15,
                    ..PushConfig::default()
                },
                physics: TrainConfig {
                    max_epochs: 3,
                    physics_epoch_fraction: 0.25,
                    validation_steps: 100,
                    ..TrainConfig::default()
                },
                belief: TrainConfig {
                    max_epochs: 3,
                    batch_size: 4,
                    belief_batches_per_epoch: 2,
                    ..TrainConfig::default()
                },
                time_points: vec![0, 25, 50],
                sparse_horizon: 100,
                dense_horizon: 25,
                ..desk
            },
            "smoke" => ExperimentConfig {
                model_scale: ModelScale::Tiny,
                train_scenes: 4,
                val_scenes: 2,
                test_sparse_scenes: 2,
                test_dense_scenes: 2,
                test_fixed_scenes: 2,
                train_objects: vec![4],
                test_sparse_objects: vec![4],
                test_dense_objects: vec![4],
                push: PushConfig {
                    speed: 0.1,
                    length: 0.1,
                    ..PushConfig::default()
                },
                physics: TrainConfig {
                    max_epochs: 2,
                    batch_size: 8,
                    validation_steps: 20,
                    ..TrainConfig::default()
                },
                belief: TrainConfig {
                    max_epochs: 2,
                    batch_size: 2,
                    belief_batches_per_epoch: 2,
                    sequence_length: 20,
                    loss_window: (10, 20),
                    ..TrainConfig::default()
                },
                time_points: vec![0, 5, 10],
                sparse_horizon: 20,
                dense_horizon: 5,
                ..desk
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            v.split(',').map(|x| num(key, x.trim())).collect()
        }
        let v = value;
        match key {
            "seed" => self.seed = num(key, v)?,
            "model_scale" => {
                self.model_scale = match v {
                    "full" => ModelScale::Full,
                    "tiny" => ModelScale::Tiny,
                    _ => return Err(Error::Config(format!("model_scale must be full or tiny, got '{v}'"))),
                }
            }
            "scenes.train" => self.train_scenes = num(key, v)?,
            "scenes.val" => self.val_scenes = num(key, v)?,
            "scenes.test_sparse" => self.test_sparse_scenes = num(key, v)?,
            "scenes.test_dense" => self.test_dense_scenes = num(key, v)?,
            "scenes.test_fixed" => self.test_fixed_scenes = num(key, v)?,
            "objects.train" => self.train_objects = list(key, v)?,
            "objects.test_sparse" => self.test_sparse_objects = list(key, v)?,
            "objects.test_dense" => self.test_dense_objects = list(key, v)?,
            "directions" => self.directions = num(key, v)?,
            "scene.radius_min" => self.scene.radius_range.0 = num(key, v)?,
            "scene.radius_max" => self.scene.radius_range.1 = num(key, v)?,
            "scene.joint_probability" => self.scene.joint_probability = num(key, v)?,
            "scene.cluster_probability" => self.scene.cluster_probability = num(key, v)?,
            "scene.joint_max_gap" => self.scene.joint_max_gap = num(key, v)?,
            "push.speed" => self.push.speed = num(key, v)?,
            "push.length" => self.push.length = num(key, v)?,
            "push.candidates" => self.push.candidates = num(key, v)?,
            "sim.dt" => {
                self.sim.dt = num(key, v)?;
                self.push.dt = self.sim.dt;
            }
            "sim.solver_iterations" => self.sim.solver_iterations = num(key, v)?,
            "sim.baumgarte_beta" => self.sim.baumgarte_beta = num(key, v)?,
            "sim.table_friction_decel" => self.sim.table_friction_decel = num(key, v)?,
            "sim.restitution" => self.sim.restitution = num(key, v)?,
            "eval.time_points" => self.time_points = list(key, v)?,
            "eval.sparse_horizon" => self.sparse_horizon = num(key, v)?,
            "eval.dense_horizon" => self.dense_horizon = num(key, v)?,
            _ => {
                let (net, field) = key
                    .split_once('.')
                    .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
                let t = match net {
                    "physics" => &mut self.physics,
                    "belief" => &mut self.belief,
                    _ => return Err(Error::Config(format!("unknown key '{key}'"))),
                };
                match field {
                    "batch_size" => t.batch_size = num(key, v)?,
                    "lr" => t.lr = num(key, v)?,
                    "decay_factor" => t.decay_factor = num(key, v)?,
                    "patience" => t.patience = num(key, v)?,
                    "epochs" => t.max_epochs = num(key, v)?,
                    "epoch_fraction" if net == "physics" => t.physics_epoch_fraction = num(key, v)?,
                    "validation_steps" if net == "physics" => t.validation_steps = num(key, v)?,
                    "batches_per_epoch" if net == "belief" => t.belief_batches_per_epoch = num(key, v)?,
                    "sequence_length" if net == "belief" => t.sequence_length = num(key, v)?,
                    "loss_window_start" if net == "belief" => t.loss_window.0 = num(key, v)?,
                    "loss_window_end" if net == "belief" => t.loss_window.1 = num(key, v)?,
                    _ => return Err(Error::Config(format!("unknown key '{key}'"))),
                }
            }
        }
        Ok(())
    }

    /// Every key with its current value, in the format [`Self::apply_text`] reads.
    pub fn to_text(&self) -> String {
        let l = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = format!("# preset {}\n", self.preset);
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("seed", self.seed.to_string());
        kv(
            "model_scale",
            match self.model_scale {
                ModelScale::Full => "full".into(),
                ModelScale::Tiny => "tiny".into(),
            },
        );
        kv("scenes.train", self.train_scenes.to_string());
        kv("scenes.val", self.val_scenes.to_string());
        kv("scenes.test_sparse", self.test_sparse_scenes.to_string());
        kv("scenes.test_dense", self.test_dense_scenes.to_string());
        kv("scenes.test_fixed", self.test_fixed_scenes.to_string());
        kv("objects.train", l(&self.train_objects));
        kv("objects.test_sparse", l(&self.test_sparse_objects));
        kv("objects.test_dense", l(&self.test_dense_objects));
        kv("directions", self.directions.to_string());
        kv("scene.radius_min", self.scene.radius_range.0.to_string());
        kv("scene.radius_max", self.scene.radius_range.1.to_string());
        kv("scene.joint_probability", self.scene.joint_probability.to_string());
        kv("scene.cluster_probability", self.scene.cluster_probability.to_string());
        kv("scene.joint_max_gap", self.scene.joint_max_gap.to_string());
        kv("push.speed", self.push.speed.to_string());
        kv("push.length", self.push.length.to_string());
        kv("push.candidates", self.push.candidates.to_string());
        kv("sim.dt", self.sim.dt.to_string());
        kv("sim.solver_iterations", self.sim.solver_iterations.to_string());
        kv("sim.baumgarte_beta", self.sim.baumgarte_beta.to_string());
        kv("sim.table_friction_decel", self.sim.table_friction_decel.to_string());
        kv("sim.restitution", self.sim.restitution.to_string());
        for (net, t) in [("physics", &self.physics), ("belief", &self.belief)] {
            kv(&format!("{net}.batch_size"), t.batch_size.to_string());
            kv(&format!("{net}.lr"), t.lr.to_string());
            kv(&format!("{net}.decay_factor"), t.decay_factor.to_string());
            kv(&format!("{net}.patience"), t.patience.to_string());
            kv(&format!("{net}.epochs"), t.max_epochs.to_string());
        }
        kv("physics.epoch_fraction", self.physics.physics_epoch_fraction.to_string());
        kv("physics.validation_steps", self.physics.validation_steps.to_string());
        kv("belief.batches_per_epoch", self.belief.belief_batches_per_epoch.to_string());
        kv("belief.sequence_length", self.belief.sequence_length.to_string());
        kv("belief.loss_window_start", self.belief.loss_window.0.to_string());
        kv("belief.loss_window_end", self.belief.loss_window.1.to_string());
        kv("eval.time_points", l(&self.time_points));
        kv("eval.sparse_horizon", self.sparse_horizon.to_string());
        kv("eval.dense_horizon", self.dense_horizon.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.scene.validate()?;
        self.physics.validate()?;
        self.belief.validate()?;
        let steps = self.push_steps()?;
        if self.train_scenes == 0 || self.val_scenes == 0 || self.directions == 0 {
            return Err(Error::Config("training and validation splits must be non-empty".into()));
        }
        for v in [&self.train_objects, &self.test_sparse_objects, &self.test_dense_objects] {
            if v.is_empty() || v.contains(&0) {
                return Err(Error::Config("object counts must be non-empty and positive".into()));
            }
        }
        if self.time_points.is_empty() {
            return Err(Error::Config("at least one evaluation time point is needed".into()));
        }
        let last = *self.time_points.iter().max().expect("non-empty");
        if last >= steps || last + self.dense_horizon > steps {
            return Err(Error::Config(format!(
                "time point {last} leaves no room for a {}-step dense horizon in a {steps}-step push",
                self.dense_horizon
            )));
        }
        if self.sparse_horizon == 0 || self.dense_horizon == 0 {
            return Err(Error::Config("horizons must be at least one step".into()));
        }
        Ok(())
    }

    pub fn push_steps(&self) -> Result<usize> {
        PushConfig {
            dt: self.sim.dt,
            ..self.push
        }
        .steps()
    }

    pub fn physics_spec(&self) -> PropNetSpec {
        match self.model_scale {
            ModelScale::Full => PropNetSpec::default(),
            ModelScale::Tiny => PropNetSpec::tiny(),
        }
    }

    pub fn belief_spec(&self, recurrent: bool) -> BeliefSpec {
        let base = match self.model_scale {
            ModelScale::Full => BeliefSpec::default(),
            ModelScale::Tiny => BeliefSpec::tiny(),
        };
        BeliefSpec { recurrent, ..base }
    }

    pub fn physics_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.physics.clone()
        }
    }

    pub fn belief_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.belief.clone()
        }
    }

    /// Generation recipe for one of [`SPLITS`].
    pub fn dataset_spec(&self, split: &str) -> Result<DatasetSpec> {
        let k = SPLITS
            .iter()
            .position(|s| *s == split)
            .ok_or_else(|| Error::Config(format!("unknown split '{split}'")))?;
        let (scenes, objects, layout, mode) = match split {
            "train" => (self.train_scenes, &self.train_objects, SceneLayout::Sparse, EnvironmentMode::Mixed),
            "val" => (self.val_scenes, &self.train_objects, SceneLayout::Sparse, EnvironmentMode::Mixed),
            "test_sparse" => (self.test_sparse_scenes, &self.test_sparse_objects, SceneLayout::Sparse, EnvironmentMode::Mixed),
            "test_dense" => (self.test_dense_scenes, &self.test_dense_objects, SceneLayout::Dense, EnvironmentMode::Mixed),
            _ => (self.test_fixed_scenes, &self.test_sparse_objects, SceneLayout::Sparse, EnvironmentMode::FixedOnly),
        };
        Ok(DatasetSpec {
            name: split.to_string(),
            scene: SceneGenConfig {
                layout,
                environment_mode: mode,
                ..self.scene.clone()
            },
            object_counts: objects.clone(),
            push: PushConfig {
                dt: self.sim.dt,
                ..self.push
            },
            sim: self.sim,
            scenes,
            directions: self.directions,
            seed: self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64 + 1),
        })
    }
}
