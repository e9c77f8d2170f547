use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::persist::{load_belief, load_dataset, load_physics};
use super::plot::{line_plot_svg, Series};
use super::{assign_relations, relation_counts, trajectory_error, BaselineKind};
use crate::belief::{run_beliefs, BeliefParams, BeliefState};
use crate::predictor::{observed_scene, rollout, rollout_batch, PredictorParams, RolloutJob};
use crate::scene::{RelationAssignment, Trajectory};
use crate::{Error, Result};

pub const ERROR_CSV_HEADER: &str = "trajectory_id,baseline,t_belief,error_cm";

/// Trained networks used by the evaluation.
#[derive(Clone, Debug)]
pub struct Models {
    pub physics: PredictorParams,
    pub belief: Option<BeliefParams>,
    pub one_step: Option<BeliefParams>,
}

impl Models {
    fn belief_for(&self, kind: BaselineKind) -> Result<Option<&BeliefParams>> {
        match kind {
            BaselineKind::BRDPN => self.belief.as_ref().map(Some).ok_or(Error::MissingBelief(kind.name())),
            BaselineKind::OneStepBRDPN => self.one_step.as_ref().map(Some).ok_or(Error::MissingBelief(kind.name())),
            _ => Ok(None),
        }
    }
}

/// One cell of the error table. `error_cm` is `None` when the rollout diverged.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub trajectory_id: usize,
    pub baseline: BaselineKind,
    pub t_belief: usize,
    pub error_cm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub baseline: BaselineKind,
    pub t_belief: usize,
    pub n: usize,
    pub diverged: usize,
    pub mean_cm: f64,
    pub std_cm: f64,
    pub stderr_cm: f64,
}

/// Pooled relation accuracy over all free pairs of a test split at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyRow {
    pub t: usize,
    pub raw: f64,
    pub equivalent: f64,
}

/// States `t..=t+steps` of `traj` as a trajectory of their own.
fn window(traj: &Trajectory, t: usize, steps: usize) -> Trajectory {
    Trajectory {
        states: traj.states[t..=t + steps].to_vec(),
        controls: traj.controls[t..t + steps].to_vec(),
        dt: traj.dt,
        environment_mode: traj.environment_mode,
    }
}

/// Beliefs of `params` after each of `points` observations, per trajectory.
fn beliefs_at(params: &BeliefParams, tests: &[Trajectory], points: &[usize]) -> Result<Vec<Vec<BeliefState>>> {
    let refs: Vec<&Trajectory> = tests.iter().collect();
    let last = points.iter().copied().max().unwrap_or(0);
    let mut out: Vec<Vec<Option<BeliefState>>> = vec![vec![None; points.len()]; tests.len()];
    run_beliefs(&refs, params, last, |k, t, s| {
        for (p, &tp) in points.iter().enumerate() {
            if tp == t {
                out[k][p] = Some(s.clone());
            }
        }
    })?;
    Ok(out
        .into_iter()
        .map(|v| v.into_iter().map(|s| s.expect("every point visited")).collect())
        .collect())
}

/// For every test trajectory, time point and baseline: infer relations from
/// the first `t` observations, roll the predictor over the next
/// `min(horizon, remaining)` steps and score it against the observed states.
pub fn evaluate_errors(
    models: &Models,
    tests: &[Trajectory],
    baselines: &[BaselineKind],
    time_points: &[usize],
    horizon: usize,
) -> Result<Vec<ErrorRow>> {
    let mut beliefs: Vec<Option<Vec<Vec<BeliefState>>>> = Vec::new();
    for &b in baselines {
        beliefs.push(match models.belief_for(b)? {
            Some(p) => Some(beliefs_at(p, tests, time_points)?),
            None => None,
        });
    }
    let mut rows = Vec::new();
    for (p, &t) in time_points.iter().enumerate() {
        let mut cells = Vec::new();
        let mut starts = Vec::new();
        let mut relations: Vec<RelationAssignment> = Vec::new();
        for (k, traj) in tests.iter().enumerate() {
            if t >= traj.len() {
                return Err(Error::LengthMismatch(format!(
                    "time point {t} is past the end of {}-step test trajectory {k}",
                    traj.len()
                )));
            }
            let steps = horizon.min(traj.len() - t);
            for (bi, &b) in baselines.iter().enumerate() {
                let belief = beliefs[bi].as_ref().map(|v| &v[k][p]);
                relations.push(assign_relations(&traj.states[t], b, belief)?);
                starts.push(observed_scene(traj, t));
                cells.push((k, b, steps));
            }
        }
        let job = |c: usize| {
            let (k, _, steps) = cells[c];
            let traj = &tests[k];
            RolloutJob {
                scene: &starts[c],
                relations: &relations[c],
                controls: &traj.controls[t..t + steps],
                dt: traj.dt,
                mode: traj.environment_mode,
            }
        };
        // one lockstep batch per rollout length
        let mut lengths: Vec<usize> = cells.iter().map(|c| c.2).collect();
        lengths.sort_unstable();
        lengths.dedup();
        let mut preds: Vec<Option<Trajectory>> = vec![None; cells.len()];
        for len in lengths {
            let idx: Vec<usize> = (0..cells.len()).filter(|&c| cells[c].2 == len).collect();
            let jobs: Vec<RolloutJob> = idx.iter().map(|&c| job(c)).collect();
            match rollout_batch(&jobs, &models.physics, len) {
                Ok(v) => {
                    for (&c, tr) in idx.iter().zip(v) {
                        preds[c] = Some(tr);
                    }
                }
                Err(Error::RolloutDiverged { .. }) => {
                    for &c in &idx {
                        match rollout(job(c), &models.physics, len) {
                            Ok(tr) => preds[c] = Some(tr),
                            Err(Error::RolloutDiverged { .. }) => {}
                            Err(e) => return Err(e),
                        }
                    }
                }
                Err(e) => return Err(e),
            }
        }
        for (c, &(k, b, steps)) in cells.iter().enumerate() {
            let error_cm = match &preds[c] {
                Some(pred) => {
                    let e = trajectory_error(pred, &window(&tests[k], t, steps))?;
                    e.is_finite().then_some(e)
                }
                None => None,
            };
            rows.push(ErrorRow {
                trajectory_id: k,
                baseline: b,
                t_belief: t,
                error_cm,
            });
        }
    }
    rows.sort_by_key(|r| (r.trajectory_id, r.baseline, r.t_belief));
    Ok(rows)
}

/// Mean, standard deviation and standard error per (baseline, time point),
/// over the rollouts that did not diverge.
pub fn summarize(rows: &[ErrorRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(BaselineKind, usize)> = rows.iter().map(|r| (r.baseline, r.t_belief)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(b, t)| {
            let cell: Vec<&ErrorRow> = rows.iter().filter(|r| r.baseline == b && r.t_belief == t).collect();
            let v: Vec<f64> = cell.iter().filter_map(|r| r.error_cm).collect();
            let n = v.len();
            let mean = if n > 0 { v.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let std = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                baseline: b,
                t_belief: t,
                n,
                diverged: cell.len() - n,
                mean_cm: mean,
                std_cm: std,
                stderr_cm: if n > 0 { std / (n as f64).sqrt() } else { f64::NAN },
            }
        })
        .collect()
}

/// Pooled accuracy of `params` at every step `0..=steps`.
pub fn relation_accuracy_table(params: &BeliefParams, tests: &[Trajectory], steps: usize) -> Result<Vec<AccuracyRow>> {
    let refs: Vec<&Trajectory> = tests.iter().collect();
    let mut counts = vec![(0usize, 0usize, 0usize); steps + 1];
    let mut err = None;
    run_beliefs(&refs, params, steps, |k, t, s| {
        match relation_counts(&crate::belief::classify_relations(s), tests[k].initial()) {
            Ok((n, raw, eq)) => {
                counts[t].0 += n;
                counts[t].1 += raw;
                counts[t].2 += eq;
            }
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(t, (n, raw, eq))| {
            let f = |x: usize| if n == 0 { 1.0 } else { x as f64 / n as f64 };
            AccuracyRow {
                t,
                raw: f(raw),
                equivalent: f(eq),
            }
        })
        .collect())
}

fn errors_csv(rows: &[ErrorRow]) -> String {
    let mut s = format!("{ERROR_CSV_HEADER}\n");
    for r in rows {
        let e = r.error_cm.map_or("diverged".to_string(), |e| format!("{e:.6}"));
        let _ = writeln!(s, "{},{},{},{e}", r.trajectory_id, r.baseline, r.t_belief);
    }
    s
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("baseline,t_belief,n,diverged,mean_cm,std_cm,stderr_cm\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{:.6}",
            r.baseline, r.t_belief, r.n, r.diverged, r.mean_cm, r.std_cm, r.stderr_cm
        );
    }
    s
}

fn accuracy_csv(tables: &[(&str, Vec<AccuracyRow>)]) -> String {
    let mut s = String::from("model,t,raw,equivalent\n");
    for (model, rows) in tables {
        for r in rows {
            let _ = writeln!(s, "{model},{},{:.6},{:.6}", r.t, r.raw, r.equivalent);
        }
    }
    s
}

fn error_plot(title: &str, summary: &[SummaryRow]) -> String {
    let mut series = Vec::new();
    for b in BaselineKind::ALL {
        let points: Vec<(f64, f64)> = summary
            .iter()
            .filter(|r| r.baseline == b && r.mean_cm.is_finite())
            .map(|r| (r.t_belief as f64, r.mean_cm))
            .collect();
        if !points.is_empty() {
            series.push(Series {
                label: b.name().to_string(),
                points,
                dashed: !b.needs_belief(),
            });
        }
    }
    line_plot_svg(title, "belief time step", "mean position error (cm)", &series)
}

fn accuracy_plot(title: &str, tables: &[(&str, Vec<AccuracyRow>)]) -> String {
    let mut series = Vec::new();
    for (model, rows) in tables {
        series.push(Series {
            label: format!("{model} raw"),
            points: rows.iter().map(|r| (r.t as f64, r.raw)).collect(),
            dashed: false,
        });
        series.push(Series {
            label: format!("{model} equivalence-aware"),
            points: rows.iter().map(|r| (r.t as f64, r.equivalent)).collect(),
            dashed: true,
        });
    }
    line_plot_svg(title, "time step", "relation accuracy", &series)
}

/// Everything `run_experiment` computed, alongside the files it wrote.
#[derive(Clone, Debug)]
pub struct ExperimentOutputs {
    pub sparse: Vec<ErrorRow>,
    pub dense: Vec<ErrorRow>,
    /// `(split, model, table)`.
    pub accuracy: Vec<(String, String, Vec<AccuracyRow>)>,
    pub files: Vec<PathBuf>,
}

/// Loads the test splits from `data_dir` and the networks from `ckpt_dir`,
/// evaluates `baselines` and writes tables and plots into `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    ckpt_dir: &Path,
    out_dir: &Path,
    baselines: &[BaselineKind],
) -> Result<ExperimentOutputs> {
    cfg.validate()?;
    if baselines.is_empty() {
        return Err(Error::Config("no baselines to evaluate".into()));
    }
    let want_belief = baselines.contains(&BaselineKind::BRDPN);
    let want_one = baselines.contains(&BaselineKind::OneStepBRDPN);
    let mut needed = vec![
        data_dir.join("test_sparse.bin"),
        data_dir.join("test_dense.bin"),
        ckpt_dir.join("physics.ckpt"),
    ];
    if want_belief || want_one {
        needed.push(data_dir.join("test_fixed.bin"));
    }
    if want_belief {
        needed.push(ckpt_dir.join("belief.ckpt"));
    }
    if want_one {
        needed.push(ckpt_dir.join("belief_1step.ckpt"));
    }
    let missing: Vec<PathBuf> = needed.into_iter().filter(|p| !p.exists()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let models = Models {
        physics: load_physics(&ckpt_dir.join("physics.ckpt"))?,
        belief: want_belief.then(|| load_belief(&ckpt_dir.join("belief.ckpt"))).transpose()?,
        one_step: want_one.then(|| load_belief(&ckpt_dir.join("belief_1step.ckpt"))).transpose()?,
    };
    let sparse_tests = load_dataset(&data_dir.join("test_sparse.bin"))?.trajectories;
    let dense_tests = load_dataset(&data_dir.join("test_dense.bin"))?.trajectories;

    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut write = |name: &str, text: String| -> Result<()> {
        let p = out_dir.join(name);
        std::fs::write(&p, text)?;
        files.push(p);
        Ok(())
    };
    let sparse = evaluate_errors(&models, &sparse_tests, baselines, &cfg.time_points, cfg.sparse_horizon)?;
    let dense = evaluate_errors(&models, &dense_tests, baselines, &cfg.time_points, cfg.dense_horizon)?;
    for (split, rows, title) in [
        ("sparse", &sparse, "Sparse scenes"),
        ("dense", &dense, "Dense scenes"),
    ] {
        let summary = summarize(rows);
        write(&format!("errors_{split}.csv"), errors_csv(rows))?;
        write(&format!("summary_{split}.csv"), summary_csv(&summary))?;
        write(&format!("errors_{split}.svg"), error_plot(title, &summary))?;
    }

    let mut accuracy = Vec::new();
    if want_belief || want_one {
        let fixed_tests = load_dataset(&data_dir.join("test_fixed.bin"))?.trajectories;
        for (split, tests) in [("sparse", &sparse_tests), ("dense", &dense_tests), ("fixed", &fixed_tests)] {
            let steps = tests.iter().map(|t| t.len()).max().unwrap_or(0);
            let mut tables = Vec::new();
            for (name, p) in [("brdpn", &models.belief), ("brdpn_1step", &models.one_step)] {
                if let Some(p) = p {
                    tables.push((name, relation_accuracy_table(p, tests, steps)?));
                }
            }
            write(&format!("accuracy_{split}.csv"), accuracy_csv(&tables))?;
            write(
                &format!("accuracy_{split}.svg"),
                accuracy_plot(&format!("Relation accuracy, {split} scenes"), &tables),
            )?;
            for (name, t) in tables {
                accuracy.push((split.to_string(), name.to_string(), t));
            }
        }
    }
    Ok(ExperimentOutputs {
        sparse,
        dense,
        accuracy,
        files,
    })
}
