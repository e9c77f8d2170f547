use std::path::{Path, PathBuf};
use std::process::ExitCode;

use brdpn_core::belief::belief_at;
use brdpn_core::harness::{
    assign_relations, belief_checkpoint_name, belief_step, gen_data, load_belief, load_dataset, load_physics,
    physics_step, read_checkpoint, run_experiment, split_path, trajectory_error, trajectory_svg, BaselineKind,
    Checkpoint, ExperimentConfig,
};
use brdpn_core::numerics::Parameters;
use brdpn_core::predictor::{observed_scene, rollout, RolloutJob};
use brdpn_core::scene::Trajectory;
use brdpn_core::training::EpochRecord;
use brdpn_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "brdpn", version, about = "Belief-regulated learnable physics for pushed disc scenes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Named preset the config starts from: sparse-desk, full, mini or smoke.
    #[arg(long, global = true, default_value = "sparse-desk")]
    preset: String,
    /// Overrides the preset seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Flat `key = value` file applied on top of the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train, validation and test datasets.
    GenData,
    /// Train the physics predictor on ground-truth relations.
    TrainPhysics {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the belief network (recurrent unless --one-step).
    TrainBelief {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        one_step: bool,
    },
    /// Evaluate baselines on the test splits and write tables and plots.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoints: PathBuf,
        /// Baselines to run (repeatable); all five by default.
        #[arg(long = "baseline")]
        baselines: Vec<String>,
    },
    /// Draw one test trajectory against a baseline's prediction as SVG.
    Rollout {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long, default_value = "test_sparse")]
        split: String,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value = "brdpn")]
        baseline: String,
        /// Observations given to the belief before predicting.
        #[arg(long, default_value_t = 0)]
        t: usize,
    },
    /// Print the contents of a dataset or checkpoint file.
    Inspect { path: PathBuf },
}

fn config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::preset(&c.preset)?;
    if let Some(p) = &c.config {
        if !p.exists() {
            return Err(Error::MissingInputs(vec![p.clone()]));
        }
        cfg.apply_text(&std::fs::read_to_string(p)?)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(tag: &'static str) -> impl FnMut(&EpochRecord) {
    move |e| {
        eprintln!(
            "{tag} epoch {:>4}  loss {:.6}  validation {:.6}  lr {:.3e}",
            e.epoch, e.train_loss, e.validation_score, e.lr
        )
    }
}

fn inspect(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|_| Error::MissingInputs(vec![path.to_path_buf()]))?;
    if bytes.starts_with(b"BRDPNDAT") {
        let d = load_dataset(path)?;
        let s = &d.meta.spec;
        let steps: Vec<usize> = d.trajectories.iter().map(|t| t.len()).collect();
        println!("dataset {}", s.name);
        println!("trajectories {}", d.trajectories.len());
        println!("scenes {}", s.scenes);
        println!("directions {}", s.directions);
        println!("objects {:?}", s.object_counts);
        println!("layout {:?}", s.scene.layout);
        println!("environment {:?}", s.scene.environment_mode);
        println!("steps {}", steps.iter().min().copied().unwrap_or(0));
        println!("joints {}", d.trajectories.iter().map(|t| t.initial().joints.len()).sum::<usize>());
        println!("seed {}", s.seed);
        return Ok(());
    }
    match read_checkpoint(path)? {
        Checkpoint::Physics(p) => {
            println!("checkpoint physics");
            println!("spec {:?}", p.spec());
            println!("parameters {}", p.param_count());
        }
        Checkpoint::Belief(p) => {
            println!("checkpoint belief");
            println!("recurrent {}", p.spec.recurrent);
            println!("spec {:?}", p.spec);
            println!("parameters {}", p.param_count());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = &cli.common.out;
    match cli.command {
        Command::GenData => {
            let cfg = config(&cli.common)?;
            for p in gen_data(&cfg, out)? {
                println!("{}", p.display());
            }
        }
        Command::TrainPhysics { data } => {
            let cfg = config(&cli.common)?;
            let (_, r) = physics_step(&cfg, &data, out, report("physics"))?;
            println!("best validation error {:.6} m at epoch {}", r.best_score, r.best_epoch);
        }
        Command::TrainBelief { data, one_step } => {
            let cfg = config(&cli.common)?;
            let (_, r) = belief_step(&cfg, &data, out, !one_step, report("belief"))?;
            println!("best validation accuracy {:.6} at epoch {}", r.best_score, r.best_epoch);
        }
        Command::Eval {
            data,
            checkpoints,
            baselines,
        } => {
            let cfg = config(&cli.common)?;
            let kinds = if baselines.is_empty() {
                BaselineKind::ALL.to_vec()
            } else {
                baselines.iter().map(|b| BaselineKind::parse(b)).collect::<Result<Vec<_>>>()?
            };
            let o = run_experiment(&cfg, &data, &checkpoints, out, &kinds)?;
            for p in o.files {
                println!("{}", p.display());
            }
        }
        Command::Rollout {
            data,
            checkpoints,
            split,
            index,
            baseline,
            t,
        } => {
            let kind = BaselineKind::parse(&baseline)?;
            let d = load_dataset(&split_path(&data, &split))?;
            let traj = d.trajectories.get(index).ok_or_else(|| {
                Error::Config(format!("{split} has {} trajectories, no index {index}", d.trajectories.len()))
            })?;
            if t >= traj.len() {
                return Err(Error::Config(format!("t = {t} is past the {}-step trajectory", traj.len())));
            }
            let physics = load_physics(&checkpoints.join("physics.ckpt"))?;
            let belief = match kind {
                BaselineKind::BRDPN | BaselineKind::OneStepBRDPN => {
                    let p = load_belief(&checkpoints.join(belief_checkpoint_name(kind == BaselineKind::BRDPN)))?;
                    Some(belief_at(traj, t, &p)?)
                }
                _ => None,
            };
            let relations = assign_relations(&traj.states[t], kind, belief.as_ref())?;
            let start = observed_scene(traj, t);
            let steps = traj.len() - t;
            let pred = rollout(
                RolloutJob {
                    scene: &start,
                    relations: &relations,
                    controls: &traj.controls[t..],
                    dt: traj.dt,
                    mode: traj.environment_mode,
                },
                &physics,
                steps,
            )?;
            let real = Trajectory {
                states: traj.states[t..].to_vec(),
                controls: traj.controls[t..].to_vec(),
                ..traj.clone()
            };
            let err = trajectory_error(&pred, &real)?;
            let title = format!("{split} #{index}, {kind} from t = {t}: {err:.2} cm");
            std::fs::create_dir_all(out)?;
            let p = out.join(format!("rollout_{split}_{index}_{kind}_t{t}.svg"));
            std::fs::write(&p, trajectory_svg(&title, traj, &pred))?;
            println!("{}", p.display());
            println!("error_cm {err:.6}");
        }
        Command::Inspect { path } => inspect(&path)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
