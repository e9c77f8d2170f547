//! The experiment as a sequence of file-producing steps, shared by the CLI
//! and the end-to-end tests.

use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, SPLITS};
use super::data::generate_dataset;
use super::experiment::{run_experiment, ExperimentOutputs};
use super::persist::{load_dataset, save_belief, save_dataset, save_physics};
use super::BaselineKind;
use crate::belief::BeliefParams;
use crate::predictor::PredictorParams;
use crate::scene::Trajectory;
use crate::training::{train_belief, train_physics, EpochRecord, TrainReport};
use crate::{Error, Result};

pub fn split_path(data_dir: &Path, split: &str) -> PathBuf {
    data_dir.join(format!("{split}.bin"))
}

pub fn belief_checkpoint_name(recurrent: bool) -> &'static str {
    if recurrent {
        "belief.ckpt"
    } else {
        "belief_1step.ckpt"
    }
}

/// Writes every split plus the effective config into `out`.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for split in SPLITS {
        let spec = cfg.dataset_spec(split)?;
        if spec.scenes == 0 {
            continue;
        }
        let d = generate_dataset(&spec)?;
        let p = split_path(out, split);
        save_dataset(&p, &d)?;
        written.push(p);
    }
    let p = out.join("config.txt");
    std::fs::write(&p, cfg.to_text())?;
    written.push(p);
    Ok(written)
}

fn load_splits(data_dir: &Path, splits: &[&str]) -> Result<Vec<Vec<Trajectory>>> {
    let missing: Vec<PathBuf> = splits
        .iter()
        .map(|s| split_path(data_dir, s))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    splits
        .iter()
        .map(|s| Ok(load_dataset(&split_path(data_dir, s))?.trajectories))
        .collect()
}

pub fn physics_step(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    out: &Path,
    progress: impl FnMut(&EpochRecord),
) -> Result<(PredictorParams, TrainReport)> {
    cfg.validate()?;
    let [train, val]: [Vec<Trajectory>; 2] = load_splits(data_dir, &["train", "val"])?.try_into().expect("two splits");
    let (p, report) = train_physics(&train, &val, cfg.physics_spec(), &cfg.physics_train(), progress)?;
    std::fs::create_dir_all(out)?;
    save_physics(&out.join("physics.ckpt"), &p)?;
    std::fs::write(out.join("physics_report.csv"), report.to_csv())?;
    Ok((p, report))
}

pub fn belief_step(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    out: &Path,
    recurrent: bool,
    progress: impl FnMut(&EpochRecord),
) -> Result<(BeliefParams, TrainReport)> {
    cfg.validate()?;
    let [train, val]: [Vec<Trajectory>; 2] = load_splits(data_dir, &["train", "val"])?.try_into().expect("two splits");
    let (p, report) = train_belief(&train, &val, cfg.belief_spec(recurrent), None, &cfg.belief_train(), progress)?;
    std::fs::create_dir_all(out)?;
    let name = belief_checkpoint_name(recurrent);
    save_belief(&out.join(name), &p)?;
    std::fs::write(out.join(name.replace(".ckpt", "_report.csv")), report.to_csv())?;
    Ok((p, report))
}

/// Generation, both trainings and evaluation under `root/{data,checkpoints,results}`.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    root: &Path,
    mut progress: impl FnMut(&str, &EpochRecord),
) -> Result<ExperimentOutputs> {
    let (data, ckpt, results) = (root.join("data"), root.join("checkpoints"), root.join("results"));
    gen_data(cfg, &data)?;
    physics_step(cfg, &data, &ckpt, |e| progress("physics", e))?;
    belief_step(cfg, &data, &ckpt, true, |e| progress("belief", e))?;
    belief_step(cfg, &data, &ckpt, false, |e| progress("belief_1step", e))?;
    run_experiment(cfg, &data, &ckpt, &results, &BaselineKind::ALL)
}
