use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::persist::{Dataset, DatasetMeta};
use crate::scene::Trajectory;
use crate::sim::{generate_push, generate_scene, rollout_ground_truth, PushConfig, SceneGenConfig, SimConfig};
use crate::{Error, Result};

const MAX_ATTEMPTS: usize = 50;

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    /// `seed` and `n_objects` are overridden per scene.
    pub scene: SceneGenConfig,
    /// Object counts, cycled over scenes.
    pub object_counts: Vec<usize>,
    pub push: PushConfig,
    pub sim: SimConfig,
    pub scenes: usize,
    /// Pushes per scene, each from its own random approach.
    pub directions: usize,
    pub seed: u64,
}

/// Scenes that cannot be placed and pushes the solver rejects are redrawn
/// from the same seeded stream, so the output depends only on the spec.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.scenes == 0 || spec.directions == 0 || spec.object_counts.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "dataset '{}' needs scenes, directions and object counts",
            spec.name
        )));
    }
    spec.sim.validate()?;
    spec.push.steps()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut trajectories = Vec::with_capacity(spec.scenes * spec.directions);
    let mut scene_seeds = Vec::with_capacity(spec.scenes);
    for k in 0..spec.scenes {
        let cfg = SceneGenConfig {
            n_objects: spec.object_counts[k % spec.object_counts.len()],
            ..spec.scene.clone()
        };
        let mut made = None;
        for _ in 0..MAX_ATTEMPTS {
            let seed: u64 = rng.gen();
            let scene = match generate_scene(&SceneGenConfig { seed, ..cfg.clone() }) {
                Ok(s) => s,
                Err(Error::Generation(_)) => continue,
                Err(e) => return Err(e),
            };
            let mut pushes = Vec::with_capacity(spec.directions);
            for _ in 0..spec.directions {
                let mut done = None;
                for _ in 0..MAX_ATTEMPTS {
                    let plan = generate_push(&scene, &spec.push, rng.gen())?;
                    let start = plan.apply(&scene)?;
                    match rollout_ground_truth(&start, &plan.controls, &spec.sim, cfg.environment_mode) {
                        Ok(t) => {
                            done = Some(t);
                            break;
                        }
                        Err(Error::SolverDivergence { .. }) => continue,
                        Err(e) => return Err(e),
                    }
                }
                pushes.push(done.ok_or_else(|| Error::Generation(format!("no stable push for scene {k}")))?);
            }
            made = Some((seed, pushes));
            break;
        }
        let (seed, pushes): (u64, Vec<Trajectory>) =
            made.ok_or_else(|| Error::Generation(format!("scene {k} failed {MAX_ATTEMPTS} times")))?;
        scene_seeds.push(seed);
        trajectories.extend(pushes);
    }
    Ok(Dataset {
        meta: DatasetMeta {
            spec: spec.clone(),
            scene_seeds,
            count: trajectories.len(),
        },
        trajectories,
    })
}
