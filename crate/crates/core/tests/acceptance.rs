//! End-to-end acceptance run at desk scale.
//!
//! Prints one `[PASS]`/`[FAIL]` line per criterion. Engineering criteria
//! (gradients, simulator, determinism, persistence) fail the test outright.
//! Learning-outcome criteria are reported; set `ACCEPTANCE_STRICT=1` to make
//! them fail the test as well. `ACCEPTANCE_DIR` keeps the run's files and
//! `ACCEPTANCE_PRESET` swaps the desk preset for another one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use brdpn_core::belief::{sequence_loss, sequence_loss_and_grad, BeliefParams, BeliefSpec, SequenceWindow};
use brdpn_core::harness::{
    load_belief, load_dataset, load_physics, run_pipeline, save_belief, save_dataset, save_physics, split_path,
    trajectory_error, BaselineKind, ErrorRow, ExperimentConfig, ExperimentOutputs,
};
use brdpn_core::numerics::gradcheck::{central_difference, central_difference_params, compare_param_grads, max_relative_error};
use brdpn_core::numerics::{LstmCell, Mlp, MlpSpec, Parameters, RecurrentCellSpec, Tensor2};
use brdpn_core::predictor::{push_physics_scene, GraphBatchBuilder, PredictorParams, PropNetSpec};
use brdpn_core::scene::{EnvironmentMode, JointSpec, JointType, ObjectState, RelationAssignment, SceneState, Trajectory};
use brdpn_core::sim::{
    generate_push, generate_scene, joint_errors, kinetic_energy, rollout_ground_truth, step, PushConfig,
    SceneGenConfig, SceneLayout, SimConfig,
};
use brdpn_core::{Error, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    hard: bool,
    detail: String,
}

fn report(out: &mut Vec<Outcome>, id: &'static str, name: &'static str, hard: bool, pass: bool, detail: String) {
    println!("[{}] {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome {
        id,
        name,
        pass,
        hard,
        detail,
    });
}

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor2 {
    Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor2, b: &Tensor2) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Nonzero biases keep every pre-activation away from the ReLU kink at zero.
fn jitter_biases<P: Parameters>(p: &mut P, rng: &mut ChaCha8Rng) {
    p.visit_params_mut("", &mut |name, t| {
        if name.ends_with("bias") {
            t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.1..0.1));
        }
    });
}

fn worst<P: Parameters>(analytic: &P, numeric: &[(String, Tensor2)]) -> f64 {
    compare_param_grads(analytic, numeric).into_iter().map(|(_, e)| e).fold(0.0, f64::max)
}

fn mlp_instance(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (din, dout) = (rng.gen_range(2..6), rng.gen_range(1..4));
    let hidden: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(2..6)).collect();
    let mut mlp = Mlp::glorot(MlpSpec::new(din, &hidden, dout), &mut rng).unwrap();
    jitter_biases(&mut mlp, &mut rng);
    let x = rand_tensor(&mut rng, 3, din);
    let w = rand_tensor(&mut rng, 3, dout);
    let (_, cache) = mlp.forward_cached(&x).unwrap();
    let mut g = mlp.zeros_like();
    let dx = mlp.backward(&cache, &w, &mut g).unwrap();
    let num = central_difference_params(&mlp, 1e-6, |m| dot(&m.forward(&x).unwrap(), &w));
    let num_x = central_difference(&x, 1e-6, |x| dot(&mlp.forward(x).unwrap(), &w));
    worst(&g, &num).max(max_relative_error(&dx, &num_x))
}

fn lstm_instance(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = RecurrentCellSpec {
        input_dim: rng.gen_range(2..5),
        hidden_dim: rng.gen_range(2..5),
    };
    let mut cell = LstmCell::glorot(spec, &mut rng).unwrap();
    jitter_biases(&mut cell, &mut rng);
    let hd = spec.hidden_dim;
    let x = rand_tensor(&mut rng, 2, spec.input_dim);
    let h = rand_tensor(&mut rng, 2, hd);
    let c = rand_tensor(&mut rng, 2, hd);
    let (wh, wc) = (rand_tensor(&mut rng, 2, hd), rand_tensor(&mut rng, 2, hd));
    let loss = |cell: &LstmCell, x: &Tensor2, h: &Tensor2, c: &Tensor2| {
        let (h2, c2) = cell.step(x, h, c).unwrap();
        dot(&h2, &wh) + dot(&c2, &wc)
    };
    let (_, _, cache) = cell.step_cached(&x, &h, &c).unwrap();
    let mut g = cell.zeros_like();
    let (dx, dh, dc) = cell.backward(&cache, &wh, &wc, &mut g).unwrap();
    let num = central_difference_params(&cell, 1e-6, |m| loss(m, &x, &h, &c));
    let nx = central_difference(&x, 1e-6, |v| loss(&cell, v, &h, &c));
    let nh = central_difference(&h, 1e-6, |v| loss(&cell, &x, v, &c));
    let nc = central_difference(&c, 1e-6, |v| loss(&cell, &x, &h, v));
    worst(&g, &num)
        .max(max_relative_error(&dx, &nx))
        .max(max_relative_error(&dh, &nh))
        .max(max_relative_error(&dc, &nc))
}

/// A pusher touching disc 0, disc 0 jointed to disc 1, a third disc nearby
/// and a fourth far away, all jittered by `seed`.
fn jittered_scene(seed: u64, kind: JointType) -> SceneState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut j = |s: f64| rng.gen_range(-s..s);
    let mut objects = vec![
        ObjectState::at_rest(Vec2::new(0.0, 0.0), 0.1),
        ObjectState::at_rest(Vec2::new(0.205 + j(0.005), j(0.02)), 0.1),
        ObjectState::at_rest(Vec2::new(0.1 + j(0.02), 0.19 + j(0.005)), 0.08),
        ObjectState::at_rest(Vec2::new(1.0, 1.0), 0.1),
    ];
    objects[2].velocity = Vec2::new(j(0.05), j(0.05));
    let mut p = ObjectState::at_rest(Vec2::new(-0.131, j(0.03)), 0.03);
    p.controlled = true;
    objects.push(p);
    let mut s = SceneState {
        objects,
        joints: vec![],
        time: 0,
    };
    s.joints.push(JointSpec::between(&s.objects, 0, 1, kind).unwrap());
    s
}

fn predictor_instance(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = PredictorParams::glorot(PropNetSpec::tiny(), &mut rng).unwrap();
    jitter_biases(&mut p, &mut rng);
    let kind = JointType::from_index(1 + seed as usize % 3).unwrap();
    let s = jittered_scene(seed, kind);
    let mut b = GraphBatchBuilder::new(Some(&p.normalizer));
    push_physics_scene(&mut b, &s, &RelationAssignment::ground_truth(&s), Vec2::new(0.1, 0.02)).unwrap();
    let batch = b.finish();
    let targets = rand_tensor(&mut rng, s.num_free(), 2);
    let mut g = p.zeros_like();
    p.loss_and_grad(&batch, &targets, &mut g).unwrap();
    let num = central_difference_params(&p, 1e-6, |q| q.loss(&batch, &targets).unwrap());
    worst(&g, &num)
}

fn belief_instance(seed: u64, recurrent: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = BeliefSpec {
        recurrent,
        ..BeliefSpec::tiny()
    };
    let mut p = BeliefParams::glorot(spec, &mut rng).unwrap();
    p.classifier = Mlp::glorot(p.classifier.spec().clone(), &mut rng).unwrap();
    jitter_biases(&mut p, &mut rng);
    let s = jittered_scene(seed + 10, JointType::from_index(1 + seed as usize % 3).unwrap());
    let traj = rollout_ground_truth(&s, &[Vec2::new(0.1, 0.0); 5], &SimConfig::default(), EnvironmentMode::Mixed).unwrap();
    let w = SequenceWindow {
        steps: 5,
        first: 2,
        last: 5,
    };
    let mut g = p.zeros_like();
    sequence_loss_and_grad(&p, &[&traj], w, &mut g).unwrap();
    let num = central_difference_params(&p, 1e-6, |q| sequence_loss(q, &[&traj], w).unwrap());
    worst(&g, &num)
}

fn gradient_suite(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut errors: Vec<(String, f64)> = Vec::new();
    for seed in 0..6 {
        errors.push((format!("mlp {seed}"), mlp_instance(seed)));
        errors.push((format!("lstm {seed}"), lstm_instance(seed)));
    }
    for seed in 0..5 {
        errors.push((format!("propnet {seed}"), predictor_instance(seed)));
    }
    for seed in 0..3 {
        errors.push((format!("belief {seed}"), belief_instance(seed, true)));
        errors.push((format!("belief one-step {seed}"), belief_instance(seed, false)));
    }
    let elapsed = start.elapsed();
    let (name, max) = errors.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let pass = errors.len() >= 20 && max < 1e-5 && errors.iter().all(|e| e.1.is_finite()) && elapsed < Duration::from_secs(60);
    report(
        out,
        "1",
        "gradient suite",
        true,
        pass,
        format!(
            "{} instances, max relative error {max:.2e} ({name}), {:.1}s",
            errors.len(),
            elapsed.as_secs_f64()
        ),
    );
}

fn simulator_suite(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let cfg = SimConfig::default();
    let push = PushConfig {
        speed: 0.03,
        ..PushConfig::default()
    };
    let (mut scenes, mut seed) = (0, 0u64);
    let (mut drift, mut angle, mut penetration) = (0.0f64, 0.0f64, 0.0f64);
    let (mut steps, mut energy_ok) = (0usize, true);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    while scenes < 30 {
        seed += 1;
        let layout = if scenes % 2 == 0 { SceneLayout::Sparse } else { SceneLayout::Dense };
        let gen = SceneGenConfig {
            seed,
            layout,
            environment_mode: EnvironmentMode::Mixed,
            ..SceneGenConfig::default()
        };
        let Ok(s) = generate_scene(&gen) else { continue };
        let Ok(plan) = generate_push(&s, &push, seed) else { continue };
        let s = plan.apply(&s).unwrap();
        let t = rollout_ground_truth(&s, &plan.controls, &cfg, EnvironmentMode::Mixed).unwrap();
        steps = steps.max(t.len());
        scenes += 1;
        for st in &t.states {
            for (lin, ang) in joint_errors(st) {
                drift = drift.max(lin);
                angle = angle.max(ang);
            }
            for (i, j) in RelationAssignment::pairs(st.objects.len()) {
                if st.joints.iter().all(|jt| !jt.involves(i, j)) {
                    penetration = penetration.max(-st.surface_gap(i, j));
                }
            }
        }
        let mut idle = t.states.last().unwrap().clone();
        for o in idle.objects.iter_mut().filter(|o| !o.controlled) {
            o.velocity = Vec2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            o.angular_velocity = rng.gen_range(-2.0..2.0);
        }
        let mut e = kinetic_energy(&idle);
        for _ in 0..50 {
            idle = step(&idle, Vec2::ZERO, &cfg).unwrap();
            let e1 = kinetic_energy(&idle);
            energy_ok &= e1 <= e * (1.0 + 1e-12) + 1e-15;
            e = e1;
        }
    }
    let elapsed = start.elapsed();
    let pass = steps == 200
        && drift <= 1e-3
        && angle <= 1e-2
        && penetration <= 1e-3
        && energy_ok
        && elapsed < Duration::from_secs(120);
    report(
        out,
        "2",
        "simulator suite",
        true,
        pass,
        format!(
            "{scenes} scenes x {steps} steps, joint drift {drift:.2e} m / {angle:.2e} rad, penetration {:.2e} m, \
             idle energy non-increasing {energy_ok}, {:.1}s",
            penetration.max(0.0),
            elapsed.as_secs_f64()
        ),
    );
}

/// `trajectory -> error` for one baseline at one belief time; diverged rollouts are infinite.
fn errors_of(rows: &[ErrorRow], kind: BaselineKind, t: usize) -> BTreeMap<usize, f64> {
    rows.iter()
        .filter(|r| r.baseline == kind && r.t_belief == t)
        .map(|r| (r.trajectory_id, r.error_cm.unwrap_or(f64::INFINITY)))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn stderr(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0).max(1.0);
    (var / v.len() as f64).sqrt()
}

/// Mean of `b - a` over trajectories where both are finite, its standard
/// error and the number of trajectories used.
fn paired_gap(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> (f64, f64, usize) {
    let d: Vec<f64> = a
        .iter()
        .filter_map(|(k, x)| b.get(k).map(|y| y - x))
        .filter(|v| v.is_finite())
        .collect();
    (mean(&d), stderr(&d), d.len())
}

fn finite_mean(m: &BTreeMap<usize, f64>) -> f64 {
    let v: Vec<f64> = m.values().cloned().filter(|x| x.is_finite()).collect();
    mean(&v)
}

fn physics_efficacy(out: &mut Vec<Outcome>, cfg: &ExperimentConfig, data: &Path, res: &ExperimentOutputs) {
    let tests = load_dataset(&split_path(data, "test_sparse")).unwrap().trajectories;
    let statics: Vec<f64> = tests
        .iter()
        .map(|t| {
            let steps = cfg.sparse_horizon.min(t.len());
            let truth = t.truncated(steps);
            let still = Trajectory {
                states: vec![t.initial().clone(); steps + 1],
                ..truth.clone()
            };
            trajectory_error(&still, &truth).unwrap()
        })
        .collect();
    let gt = errors_of(&res.sparse, BaselineKind::PropNetGT, 0);
    let gt_mean = mean(&gt.values().cloned().collect::<Vec<_>>());
    let static_mean = mean(&statics);
    report(
        out,
        "3a",
        "rollout error below half the static baseline",
        false,
        gt_mean < 0.5 * static_mean,
        format!("propnet_gt {gt_mean:.3} cm vs static {static_mean:.3} cm (ratio {:.3})", gt_mean / static_mean),
    );
    let n = errors_of(&res.sparse, BaselineKind::PropNetN, 0);
    let wins = gt.iter().filter(|(k, e)| **e < n[k]).count();
    let frac = wins as f64 / gt.len() as f64;
    report(
        out,
        "3b",
        "propnet_gt beats propnet_n per scene",
        false,
        frac >= 0.8,
        format!("{wins}/{} mixed scenes ({:.1}%)", gt.len(), 100.0 * frac),
    );
}

fn belief_accuracy(out: &mut Vec<Outcome>, t: usize, res: &ExperimentOutputs) {
    let at = |split: &str, field: fn(&brdpn_core::harness::AccuracyRow) -> f64| {
        res.accuracy
            .iter()
            .find(|(s, m, _)| s == split && m == "brdpn")
            .and_then(|(_, _, rows)| rows.iter().find(|r| r.t == t))
            .map(field)
            .unwrap_or(f64::NAN)
    };
    let fixed = at("fixed", |r| r.raw);
    let mixed = at("sparse", |r| r.equivalent);
    report(
        out,
        "4a",
        "fixed-only raw accuracy",
        false,
        fixed >= 0.90,
        format!("{fixed:.4} at t = {t} (need >= 0.90)"),
    );
    report(
        out,
        "4b",
        "mixed equivalence-aware accuracy",
        false,
        mixed >= 0.80,
        format!("{mixed:.4} at t = {t} (need >= 0.80)"),
    );
}

fn error_ordering(out: &mut Vec<Outcome>, t: usize, res: &ExperimentOutputs) {
    let gt = errors_of(&res.sparse, BaselineKind::PropNetGT, t);
    let br = errors_of(&res.sparse, BaselineKind::BRDPN, t);
    let n = errors_of(&res.sparse, BaselineKind::PropNetN, t);
    let (g1, s1, k1) = paired_gap(&gt, &br);
    let (g2, s2, k2) = paired_gap(&br, &n);
    report(
        out,
        "5a",
        "gt <= brdpn <= n on sparse scenes",
        false,
        g1 > s1 && g2 > s2,
        format!(
            "t = {t}: gt {:.3}, brdpn {:.3}, n {:.3} cm; brdpn-gt {g1:.3} (se {s1:.3}, {k1} scenes), \
             n-brdpn {g2:.3} (se {s2:.3}, {k2} scenes)",
            finite_mean(&gt),
            finite_mean(&br),
            finite_mean(&n)
        ),
    );
    let t0 = *res.sparse.iter().map(|r| r.t_belief).collect::<std::collections::BTreeSet<_>>().first().unwrap();
    let (early, late) = (finite_mean(&errors_of(&res.sparse, BaselineKind::BRDPN, t0)), finite_mean(&br));
    report(
        out,
        "5b",
        "brdpn improves with observation",
        false,
        late < early,
        format!("brdpn t = {t}: {late:.3} cm, t = {t0}: {early:.3} cm"),
    );
}

fn dense_scenes(out: &mut Vec<Outcome>, t: usize, res: &ExperimentOutputs) {
    let n = finite_mean(&errors_of(&res.dense, BaselineKind::PropNetN, t));
    let one = finite_mean(&errors_of(&res.dense, BaselineKind::OneStepBRDPN, t));
    let br = finite_mean(&errors_of(&res.dense, BaselineKind::BRDPN, t));
    report(
        out,
        "6",
        "dense scenes: belief models beat propnet_n",
        false,
        one < n && br < n,
        format!("t = {t}: brdpn_1step {one:.3}, brdpn {br:.3}, propnet_n {n:.3} cm"),
    );
}

fn csv_files(dir: &Path, rel: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        let name = rel.join(p.file_name().unwrap());
        if p.is_dir() {
            csv_files(&p, &name, acc);
        } else if p.extension().is_some_and(|e| e == "csv") {
            acc.insert(name, std::fs::read(&p).unwrap());
        }
    }
}

fn determinism(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let cfg = ExperimentConfig::preset("mini").unwrap();
    let runs: Vec<BTreeMap<PathBuf, Vec<u8>>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            run_pipeline(&cfg, dir.path(), |_, _| {}).unwrap();
            let mut files = BTreeMap::new();
            csv_files(dir.path(), Path::new(""), &mut files);
            files
        })
        .collect();
    let differing: Vec<String> = runs[0]
        .iter()
        .filter(|(k, v)| runs[1].get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let pass = !runs[0].is_empty() && runs[0].len() == runs[1].len() && differing.is_empty();
    report(
        out,
        "7",
        "same-seed re-run is byte-identical",
        true,
        pass,
        format!(
            "{} CSV files compared across two {} pipeline runs, {} differ, {:.1}s",
            runs[0].len(),
            cfg.preset,
            differing.len(),
            start.elapsed().as_secs_f64()
        ),
    );
}

fn patched(bytes: &[u8], offset: usize, value: u32) -> Vec<u8> {
    let mut b = bytes.to_vec();
    b[offset..offset + 4].copy_from_slice(&value.to_le_bytes());
    b
}

fn persistence(out: &mut Vec<Outcome>, data: &Path, ckpt: &Path) {
    let tmp = tempfile::tempdir().unwrap();
    let mut checks: Vec<(&str, bool)> = Vec::new();

    let src = split_path(data, "test_sparse");
    let d = load_dataset(&src).unwrap();
    let copy = tmp.path().join("copy.bin");
    save_dataset(&copy, &d).unwrap();
    let again = load_dataset(&copy).unwrap();
    checks.push(("dataset bytes", std::fs::read(&src).unwrap() == std::fs::read(&copy).unwrap()));
    checks.push(("dataset values", format!("{:?}", d.trajectories) == format!("{:?}", again.trajectories)));

    let bits = |p: &dyn Fn(&mut dyn FnMut(String, &Tensor2))| {
        let mut v = Vec::new();
        p(&mut |name, t| v.push((name, t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>())));
        v
    };
    let phys_src = ckpt.join("physics.ckpt");
    let phys = load_physics(&phys_src).unwrap();
    let phys_copy = tmp.path().join("physics.ckpt");
    save_physics(&phys_copy, &phys).unwrap();
    let phys2 = load_physics(&phys_copy).unwrap();
    checks.push(("physics bytes", std::fs::read(&phys_src).unwrap() == std::fs::read(&phys_copy).unwrap()));
    checks.push((
        "physics params",
        bits(&|f| phys.visit_params("", f)) == bits(&|f| phys2.visit_params("", f)) && phys.normalizer == phys2.normalizer,
    ));
    let bel_src = ckpt.join("belief.ckpt");
    let bel = load_belief(&bel_src).unwrap();
    let bel_copy = tmp.path().join("belief.ckpt");
    save_belief(&bel_copy, &bel).unwrap();
    let bel2 = load_belief(&bel_copy).unwrap();
    checks.push(("belief bytes", std::fs::read(&bel_src).unwrap() == std::fs::read(&bel_copy).unwrap()));
    checks.push(("belief params", bits(&|f| bel.visit_params("", f)) == bits(&|f| bel2.visit_params("", f))));

    let bad = tmp.path().join("bad");
    let raw = std::fs::read(&src).unwrap();
    std::fs::write(&bad, patched(&raw, 8, 2)).unwrap();
    checks.push((
        "dataset format version",
        matches!(load_dataset(&bad), Err(Error::FormatVersion { expected: 1, found: 2, .. })),
    ));
    std::fs::write(&bad, patched(&raw, 12, 99)).unwrap();
    checks.push((
        "dataset layout version",
        matches!(load_dataset(&bad), Err(Error::LayoutVersion { found: 99, .. })),
    ));
    let raw = std::fs::read(&phys_src).unwrap();
    std::fs::write(&bad, patched(&raw, 8, 7)).unwrap();
    checks.push((
        "checkpoint format version",
        matches!(load_physics(&bad), Err(Error::FormatVersion { expected: 1, found: 7, .. })),
    ));
    std::fs::write(&bad, patched(&raw, 12, 99)).unwrap();
    checks.push((
        "checkpoint layout version",
        matches!(load_physics(&bad), Err(Error::LayoutVersion { found: 99, .. })),
    ));
    checks.push(("wrong file kind", matches!(load_physics(&src), Err(Error::BadMagic(_)))));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report(
        out,
        "8",
        "persistence round trips and version checks",
        true,
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} checks", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    );
}

fn main() {
    let mut out = Vec::new();
    gradient_suite(&mut out);
    simulator_suite(&mut out);

    let keep = std::env::var_os("ACCEPTANCE_DIR").map(PathBuf::from);
    let tmp = tempfile::tempdir().unwrap();
    let root = keep.unwrap_or_else(|| tmp.path().to_path_buf());
    let preset = std::env::var("ACCEPTANCE_PRESET").unwrap_or_else(|_| "sparse-desk".into());
    let cfg = ExperimentConfig::preset(&preset).unwrap();
    let start = Instant::now();
    let res = run_pipeline(&cfg, &root, |stage, e| {
        if e.epoch % 10 == 0 {
            eprintln!("{stage} epoch {} loss {:.5} validation {:.5}", e.epoch, e.train_loss, e.validation_score)
        }
    })
    .unwrap();
    let elapsed = start.elapsed();
    println!("{preset} pipeline finished in {:.1} min", elapsed.as_secs_f64() / 60.0);
    let (data, ckpt) = (root.join("data"), root.join("checkpoints"));
    let t_final = *cfg.time_points.iter().max().unwrap();

    physics_efficacy(&mut out, &cfg, &data, &res);
    belief_accuracy(&mut out, t_final, &res);
    error_ordering(&mut out, t_final, &res);
    dense_scenes(&mut out, t_final, &res);
    determinism(&mut out);
    persistence(&mut out, &data, &ckpt);

    let passed = out.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria passed", out.len());
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let blocking: Vec<String> = out
        .iter()
        .filter(|o| !o.pass && (o.hard || strict))
        .map(|o| format!("{} {}: {}", o.id, o.name, o.detail))
        .collect();
    if !blocking.is_empty() {
        eprintln!("failed criteria:\n{}", blocking.join("\n"));
        std::process::exit(1);
    }
}
