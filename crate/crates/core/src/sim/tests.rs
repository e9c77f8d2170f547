use proptest::prelude::*;

use super::*;
use crate::scene::{JointSpec, JointType, ObjectState, RelationAssignment};

fn pusher_at(p: Vec2) -> ObjectState {
    let mut o = ObjectState::at_rest(p, 0.03);
    o.controlled = true;
    o
}

fn scene_of(objects: Vec<ObjectState>) -> SceneState {
    SceneState {
        objects,
        joints: vec![],
        time: 0,
    }
}

fn run(scene: &SceneState, u: Vec2, steps: usize, cfg: &SimConfig) -> Vec<SceneState> {
    let t = rollout_ground_truth(scene, &vec![u; steps], cfg, EnvironmentMode::Mixed).unwrap();
    t.states
}

#[test]
fn resting_scene_only_advances_time() {
    let s = scene_of(vec![
        ObjectState::at_rest(Vec2::new(0.0, 0.0), 0.1),
        ObjectState::at_rest(Vec2::new(0.5, 0.0), 0.12),
        pusher_at(Vec2::new(-1.0, 0.0)),
    ]);
    let n = step(&s, Vec2::ZERO, &SimConfig::default()).unwrap();
    assert_eq!(n.time, 1);
    assert_eq!(n.objects, s.objects);
}

#[test]
fn sliding_disc_stops_after_one_centimetre() {
    let mut disc = ObjectState::at_rest(Vec2::new(0.0, 0.0), 0.1);
    disc.velocity = Vec2::new(0.1, 0.0);
    let s = scene_of(vec![disc, pusher_at(Vec2::new(-1.0, 0.0))]);
    let states = run(&s, Vec2::ZERO, 10, &SimConfig::default());
    // v²/2a = 0.01 m, reached after v/a = 0.2 s = 4 steps
    assert!((states[10].objects[0].position.x - 0.01).abs() < 1e-4);
    assert_eq!(states[4].objects[0].velocity, Vec2::ZERO);
    assert!(states[3].objects[0].velocity.x > 0.0);
}

#[test]
fn head_on_push_matches_fine_timestep_and_closed_form() {
    let s = scene_of(vec![
        ObjectState::at_rest(Vec2::new(0.0, 0.0), 0.1),
        pusher_at(Vec2::new(-0.147, 0.0)),
    ]);
    let u = Vec2::new(0.1, 0.0);
    let coarse = SimConfig::default();
    let fine = SimConfig {
        dt: coarse.dt / 100.0,
        ..coarse
    };
    let a = run(&s, u, 10, &coarse);
    let b = run(&s, u, 1000, &fine);
    let xa = a[10].objects[0].position.x;
    let xb = b[1000].objects[0].position.x;
    assert!(xa > 0.0);
    assert!((xa - xb).abs() < 2e-3, "coarse {xa} fine {xb}");
    // pusher closes the 1.7 cm gap, then carries the disc: 5 cm - 1.7 cm
    assert!((xa - 0.033).abs() < 2e-3, "{xa}");
    assert!(a[10].objects[0].position.y.abs() < 1e-12);
}

#[test]
fn pusher_follows_controls_exactly() {
    let s = scene_of(vec![
        ObjectState::at_rest(Vec2::new(0.0, 0.0), 0.1),
        pusher_at(Vec2::new(-0.2, 0.02)),
    ]);
    let u = Vec2::new(0.1, 0.0);
    let st = run(&s, u, 20, &SimConfig::default());
    for (t, w) in st.windows(2).enumerate() {
        let d = w[1].objects[1].position - w[0].objects[1].position;
        assert!((d - u * 0.05).norm() < 1e-15, "step {t}");
    }
}

fn pair(kind: JointType, gap: f64) -> SceneState {
    let a = ObjectState::at_rest(Vec2::new(0.0, 0.0), 0.1);
    let b = ObjectState::at_rest(Vec2::new(0.2 + 0.12 + gap, 0.0), 0.12);
    let mut s = scene_of(vec![a, b, pusher_at(Vec2::new(-0.14, 0.0))]);
    s.joints.push(JointSpec::between(&s.objects, 0, 1, kind).unwrap());
    s
}

#[test]
fn welded_pair_moves_as_one() {
    let s = pair(JointType::Fixed, 0.01);
    let st = run(&s, Vec2::new(0.1, 0.0), 5, &SimConfig::default());
    let last = &st[5];
    let (va, vb) = (last.objects[0].velocity, last.objects[1].velocity);
    assert!(va.x > 0.05);
    assert!((va - vb).norm() < 1e-6, "{va:?} {vb:?}");
}

fn anchor_of(o: &ObjectState, local: Vec2) -> Vec2 {
    o.position + local.rotate(o.angle)
}

/// Off-centre push that swings the pair for 200 steps.
fn swing(kind: JointType) -> Vec<SceneState> {
    let mut s = pair(kind, 0.01);
    s.objects[2].position = Vec2::new(-0.14, 0.06);
    let cfg = SimConfig::default();
    let mut states = vec![s];
    for t in 0..200 {
        let u = if t < 80 { Vec2::new(0.1, 0.0) } else { Vec2::new(0.0, -0.03) };
        let next = step(states.last().unwrap(), u, &cfg).unwrap();
        states.push(next);
    }
    states
}

#[test]
fn revolute_anchor_drift_is_bounded() {
    let st = swing(JointType::Revolute);
    let j = st[0].joints[0];
    let mut max_rot: f64 = 0.0;
    for s in &st {
        let (a, b) = (&s.objects[0], &s.objects[1]);
        let drift = (anchor_of(a, j.local_anchor_a) - anchor_of(b, j.local_anchor_b)).norm();
        assert!(drift <= 1e-3, "t={} drift {drift}", s.time);
        max_rot = max_rot.max((b.angle - a.angle).abs());
    }
    assert!(max_rot > 0.05, "joint never flexed: {max_rot}");
}

#[test]
fn prismatic_lateral_drift_is_bounded() {
    let st = swing(JointType::Prismatic);
    let j = st[0].joints[0];
    for s in &st {
        let (a, b) = (&s.objects[0], &s.objects[1]);
        let axis = j.local_axis_a.rotate(a.angle);
        let lateral = (b.position - a.position).dot(axis.perp());
        assert!(lateral.abs() <= 1e-3, "t={} lateral {lateral}", s.time);
        assert!((b.angle - a.angle - j.reference_angle).abs() <= 1e-2);
    }
}

#[test]
fn fixed_relative_pose_drift_is_bounded() {
    let st = swing(JointType::Fixed);
    let d0 = (st[0].objects[1].position - st[0].objects[0].position).rotate(-st[0].objects[0].angle);
    let mut turned: f64 = 0.0;
    for s in &st {
        let (a, b) = (&s.objects[0], &s.objects[1]);
        let d = (b.position - a.position).rotate(-a.angle);
        assert!((d - d0).norm() <= 1e-3, "t={}", s.time);
        assert!((b.angle - a.angle).abs() <= 1e-2);
        turned = turned.max(a.angle.abs());
    }
    assert!(turned > 0.01, "pair never rotated");
}

#[test]
fn divergence_is_reported() {
    let mut fast = ObjectState::at_rest(Vec2::ZERO, 0.1);
    fast.velocity = Vec2::new(20.0, 0.0);
    let s = scene_of(vec![fast, pusher_at(Vec2::new(-1.0, 0.0))]);
    assert!(matches!(
        step(&s, Vec2::ZERO, &SimConfig::default()),
        Err(Error::SolverDivergence { object: 0, .. })
    ));
}

#[test]
fn bad_config_is_rejected() {
    let s = scene_of(vec![pusher_at(Vec2::ZERO)]);
    for cfg in [
        SimConfig { dt: 0.0, ..Default::default() },
        SimConfig { solver_iterations: 0, ..Default::default() },
        SimConfig { baumgarte_beta: 1.5, ..Default::default() },
    ] {
        assert!(matches!(step(&s, Vec2::ZERO, &cfg), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn empty_controls_give_single_state() {
    let s = scene_of(vec![pusher_at(Vec2::ZERO)]);
    let t = rollout_ground_truth(&s, &[], &SimConfig::default(), EnvironmentMode::FixedOnly).unwrap();
    assert_eq!(t.states.len(), 1);
    assert!(t.is_empty());
}

fn gen_cfg(seed: u64, layout: SceneLayout, mode: EnvironmentMode, n: usize) -> SceneGenConfig {
    SceneGenConfig {
        n_objects: n,
        layout,
        environment_mode: mode,
        seed,
        ..SceneGenConfig::default()
    }
}

#[test]
fn sparse_generation_is_deterministic_and_separated() {
    let cfg = gen_cfg(7, SceneLayout::Sparse, EnvironmentMode::Mixed, 9);
    let a = generate_scene(&cfg).unwrap();
    let b = generate_scene(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.num_free(), 9);
    assert_eq!(a.pusher_index(), Some(9));
    for (i, j) in RelationAssignment::pairs(10) {
        assert!(a.surface_gap(i, j) > 0.0);
    }
    for o in a.free_indices() {
        let r = a.objects[o].radius;
        assert!((0.08..0.16).contains(&r));
    }
}

#[test]
fn dense_generation_is_a_grid() {
    let s = generate_scene(&gen_cfg(3, SceneLayout::Dense, EnvironmentMode::Mixed, 8)).unwrap();
    assert_eq!(s.num_free(), 8);
    let max_d = s.free_indices().map(|i| 2.0 * s.objects[i].radius).fold(0.0, f64::max);
    let spacing = s.objects[1].position.x - s.objects[0].position.x;
    assert!((spacing - (max_d + 0.01)).abs() < 1e-12);
    assert!((s.objects[3].position.y - s.objects[0].position.y - spacing).abs() < 1e-12);
}

#[test]
fn fixed_only_mode_samples_only_fixed_joints() {
    let mut total = 0;
    for seed in 0..20 {
        let s = generate_scene(&gen_cfg(seed, SceneLayout::Dense, EnvironmentMode::FixedOnly, 9)).unwrap();
        total += s.joints.len();
        assert!(s.joints.iter().all(|j| j.kind == JointType::Fixed));
    }
    assert!(total > 0);
}

fn is_forest(s: &SceneState) -> bool {
    let n = s.objects.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            i = p[i];
        }
        i
    }
    for j in &s.joints {
        let (ra, rb) = (root(&mut parent, j.a), root(&mut parent, j.b));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

#[test]
fn impossible_placement_fails() {
    let cfg = SceneGenConfig {
        n_objects: 30,
        workspace: Rect::centered(0.3, 0.3),
        ..SceneGenConfig::default()
    };
    assert!(matches!(generate_scene(&cfg), Err(Error::Generation(_))));
}

#[test]
fn push_has_fixed_length_and_clear_start() {
    let s = generate_scene(&gen_cfg(11, SceneLayout::Sparse, EnvironmentMode::Mixed, 9)).unwrap();
    let cfg = PushConfig::default();
    let plan = generate_push(&s, &cfg, 5).unwrap();
    assert_eq!(plan.controls.len(), 60);
    let len: f64 = plan.controls.iter().map(|u| u.norm() * cfg.dt).sum();
    assert!((len - 0.30).abs() < 1e-9);
    let started = plan.apply(&s).unwrap();
    for i in started.free_indices() {
        assert!(started.surface_gap(i, 9) > 0.0);
    }
    assert_eq!(plan, generate_push(&s, &cfg, 5).unwrap());
}

#[test]
fn single_object_push_aims_at_it() {
    for seed in 0..10 {
        let s = scene_of(vec![
            ObjectState::at_rest(Vec2::new(0.1, -0.2), 0.12),
            pusher_at(Vec2::new(-1.0, 0.0)),
        ]);
        let plan = generate_push(&s, &PushConfig::default(), seed).unwrap();
        let rel = s.objects[0].position - plan.start;
        let lateral = rel.dot(plan.direction.perp()).abs();
        assert!(lateral <= 0.12);
    }
}

#[test]
fn push_steps_must_be_whole() {
    let cfg = PushConfig {
        speed: 0.07,
        ..PushConfig::default()
    };
    assert!(matches!(cfg.steps(), Err(Error::InvalidConfig(_))));
    let slow = PushConfig {
        speed: 0.03,
        ..PushConfig::default()
    };
    assert_eq!(slow.steps().unwrap(), 200);
}

fn pushed_scene(seed: u64, dense: bool) -> (SceneState, PushPlan) {
    let layout = if dense { SceneLayout::Dense } else { SceneLayout::Sparse };
    let s = generate_scene(&gen_cfg(seed, layout, EnvironmentMode::Mixed, 9)).unwrap();
    let plan = generate_push(&s, &PushConfig::default(), seed ^ 0x55).unwrap();
    (plan.apply(&s).unwrap(), plan)
}

#[test]
fn rollouts_are_bit_identical() {
    let (s, plan) = pushed_scene(4, false);
    let cfg = SimConfig::default();
    let a = rollout_ground_truth(&s, &plan.controls, &cfg, EnvironmentMode::Mixed).unwrap();
    let b = rollout_ground_truth(&s, &plan.controls, &cfg, EnvironmentMode::Mixed).unwrap();
    assert_eq!(a, b);
    a.validate().unwrap();
}

#[test]
fn generated_pushes_move_objects() {
    let cfg = SimConfig::default();
    let mut total = 0.0;
    let mut count = 0;
    for seed in 0..6 {
        let (s, plan) = pushed_scene(seed, seed % 2 == 1);
        let t = rollout_ground_truth(&s, &plan.controls, &cfg, EnvironmentMode::Mixed).unwrap();
        let last = t.states.last().unwrap();
        for i in s.free_indices() {
            total += (last.objects[i].position - s.objects[i].position).norm();
            count += 1;
        }
    }
    let mean = total / count as f64;
    assert!(mean.is_finite() && mean > 0.0, "{mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kinetic_energy_never_increases_without_pusher_motion(
        seed in 0u64..10_000,
        dense in any::<bool>(),
        vels in prop::collection::vec((-0.3..0.3f64, -0.3..0.3f64, -2.0..2.0f64), 9),
    ) {
        let layout = if dense { SceneLayout::Dense } else { SceneLayout::Sparse };
        let mut s = generate_scene(&gen_cfg(seed, layout, EnvironmentMode::Mixed, 9)).unwrap();
        for (o, (vx, vy, w)) in s.objects.iter_mut().filter(|o| !o.controlled).zip(vels) {
            o.velocity = Vec2::new(vx, vy);
            o.angular_velocity = w;
        }
        let cfg = SimConfig::default();
        let mut e = kinetic_energy(&s);
        for _ in 0..30 {
            s = step(&s, Vec2::ZERO, &cfg).unwrap();
            let e1 = kinetic_energy(&s);
            prop_assert!(e1 <= e * (1.0 + 1e-12) + 1e-15, "{e} -> {e1}");
            e = e1;
        }
    }

    #[test]
    fn generated_scenes_are_valid_forests(seed in 0u64..10_000, dense in any::<bool>(), fixed in any::<bool>()) {
        let layout = if dense { SceneLayout::Dense } else { SceneLayout::Sparse };
        let mode = if fixed { EnvironmentMode::FixedOnly } else { EnvironmentMode::Mixed };
        let s = generate_scene(&gen_cfg(seed, layout, mode, 9)).unwrap();
        prop_assert!(is_forest(&s));
        prop_assert!(s.validate().is_ok());
    }

    #[test]
    fn pushed_scenes_keep_discs_apart_and_joints_together(seed in 0u64..10_000, dense in any::<bool>()) {
        let (s, plan) = pushed_scene(seed, dense);
        let t = rollout_ground_truth(&s, &plan.controls, &SimConfig::default(), EnvironmentMode::Mixed).unwrap();
        let n = s.objects.len();
        for st in &t.states {
            for (i, j) in RelationAssignment::pairs(n) {
                if st.joints.iter().any(|jt| jt.involves(i, j)) {
                    continue;
                }
                prop_assert!(st.surface_gap(i, j) >= -1e-3, "t={} ({i},{j}) gap {}", st.time, st.surface_gap(i, j));
            }
            for (lin, ang) in joint_errors(st) {
                prop_assert!(lin <= 1e-3 && ang <= 1e-2, "t={} joint error {lin} {ang}", st.time);
            }
        }
    }
}

#[test]
fn joint_drift_stays_bounded_across_generated_pushes() {
    let cfg = SimConfig::default();
    for seed in 0..100u64 {
        let (s, plan) = pushed_scene(seed, seed % 2 == 0);
        let t = rollout_ground_truth(&s, &plan.controls, &cfg, EnvironmentMode::Mixed).unwrap();
        for st in &t.states {
            for (lin, ang) in joint_errors(st) {
                assert!(lin <= 1e-3 && ang <= 1e-2, "seed {seed} t={} error {lin} {ang}", st.time);
            }
        }
    }
}
