use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scene::{EnvironmentMode, JointSpec, JointType, ObjectState, SceneState};
use crate::{Error, Result, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneLayout {
    Sparse,
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn centered(half_width: f64, half_height: f64) -> Self {
        Rect {
            min: Vec2::new(-half_width, -half_height),
            max: Vec2::new(half_width, half_height),
        }
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    fn contains_disc(&self, p: Vec2, r: f64) -> bool {
        p.x - r >= self.min.x && p.x + r <= self.max.x && p.y - r >= self.min.y && p.y + r <= self.max.y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub n_objects: usize,
    pub radius_range: (f64, f64),
    pub layout: SceneLayout,
    pub environment_mode: EnvironmentMode,
    /// Chance that an eligible neighbouring pair is jointed.
    pub joint_probability: f64,
    pub workspace: Rect,
    pub seed: u64,
    pub pusher_radius: f64,
    /// Largest surface gap at which a sparse pair may be jointed.
    pub joint_max_gap: f64,
    /// Chance that a sparse object is placed next to an earlier one.
    pub cluster_probability: f64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            n_objects: 9,
            radius_range: (0.08, 0.16),
            layout: SceneLayout::Sparse,
            environment_mode: EnvironmentMode::Mixed,
            joint_probability: 0.5,
            workspace: Rect::centered(0.6, 0.6),
            seed: 0,
            pusher_radius: 0.03,
            joint_max_gap: 0.025,
            cluster_probability: 0.6,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 1000;
const MIN_PLACEMENT_GAP: f64 = 0.003;

impl SceneGenConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.radius_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidConfig(format!("radius range ({lo}, {hi})")));
        }
        if self.n_objects == 0 {
            return Err(Error::InvalidConfig("n_objects must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.joint_probability) || !(0.0..=1.0).contains(&self.cluster_probability) {
            return Err(Error::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        if !(self.pusher_radius > 0.0) {
            return Err(Error::InvalidConfig("pusher_radius must be positive".into()));
        }
        if !(self.workspace.max.x > self.workspace.min.x && self.workspace.max.y > self.workspace.min.y) {
            return Err(Error::InvalidConfig("empty workspace".into()));
        }
        Ok(())
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Random scene with the pusher parked outside the workspace as the last object.
pub fn generate_scene(cfg: &SceneGenConfig) -> Result<SceneState> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.radius_range;
    let radii: Vec<f64> = (0..cfg.n_objects)
        .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
        .collect();

    let (mut objects, candidates) = match cfg.layout {
        SceneLayout::Sparse => place_sparse(cfg, &radii, &mut rng)?,
        SceneLayout::Dense => place_dense(cfg, &radii)?,
    };

    let mut candidates = candidates;
    candidates.shuffle(&mut rng);
    let mut uf = UnionFind((0..objects.len()).collect());
    let mut joints = Vec::new();
    for (i, j) in candidates {
        if rng.gen::<f64>() >= cfg.joint_probability {
            continue;
        }
        if !uf.union(i, j) {
            continue;
        }
        let kind = match cfg.environment_mode {
            EnvironmentMode::FixedOnly => JointType::Fixed,
            EnvironmentMode::Mixed => [JointType::Fixed, JointType::Revolute, JointType::Prismatic][rng.gen_range(0..3)],
        };
        let (a, b) = (i.min(j), i.max(j));
        joints.push(JointSpec::between(&objects, a, b, kind)?);
    }
    joints.sort_by_key(|j| (j.a, j.b));

    let mut pusher = ObjectState::at_rest(
        cfg.workspace.min - Vec2::new(cfg.pusher_radius + 0.1, cfg.pusher_radius + 0.1),
        cfg.pusher_radius,
    );
    pusher.controlled = true;
    objects.push(pusher);
    let scene = SceneState {
        objects,
        joints,
        time: 0,
    };
    scene.validate()?;
    Ok(scene)
}

type Placement = (Vec<ObjectState>, Vec<(usize, usize)>);

fn place_sparse(cfg: &SceneGenConfig, radii: &[f64], rng: &mut ChaCha8Rng) -> Result<Placement> {
    let ws = cfg.workspace;
    let mut objects: Vec<ObjectState> = Vec::with_capacity(radii.len() + 1);
    for (k, &r) in radii.iter().enumerate() {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let p = if k > 0 && rng.gen::<f64>() < cfg.cluster_probability {
                let anchor = &objects[rng.gen_range(0..objects.len())];
                let gap = rng.gen_range(0.005..0.02);
                let dir = Vec2::from_angle(rng.gen_range(0.0..std::f64::consts::TAU));
                anchor.position + dir * (anchor.radius + r + gap)
            } else {
                Vec2::new(
                    rng.gen_range(ws.min.x + r..=ws.max.x - r),
                    rng.gen_range(ws.min.y + r..=ws.max.y - r),
                )
            };
            let ok = ws.contains_disc(p, r)
                && objects
                    .iter()
                    .all(|o| (o.position - p).norm() - o.radius - r > MIN_PLACEMENT_GAP);
            if ok {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place object {k} of {} after {PLACEMENT_ATTEMPTS} attempts",
                radii.len()
            ))
        })?;
        objects.push(ObjectState::at_rest(p, r));
    }
    let mut candidates = Vec::new();
    for i in 0..objects.len() {
        for j in i + 1..objects.len() {
            let gap = (objects[i].position - objects[j].position).norm() - objects[i].radius - objects[j].radius;
            if gap < cfg.joint_max_gap {
                candidates.push((i, j));
            }
        }
    }
    Ok((objects, candidates))
}

fn place_dense(cfg: &SceneGenConfig, radii: &[f64]) -> Result<Placement> {
    let n = radii.len();
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let max_r = radii.iter().cloned().fold(0.0, f64::max);
    let spacing = 2.0 * max_r + 0.01;
    let width = spacing * (cols - 1) as f64;
    let height = spacing * (rows - 1) as f64;
    let c = cfg.workspace.center();
    let origin = c - Vec2::new(width / 2.0, height / 2.0);
    let mut objects = Vec::with_capacity(n + 1);
    for (k, &r) in radii.iter().enumerate() {
        let p = origin + Vec2::new((k % cols) as f64 * spacing, (k / cols) as f64 * spacing);
        if !cfg.workspace.contains_disc(p, r) {
            return Err(Error::Generation(format!("grid of {rows}x{cols} does not fit the workspace")));
        }
        objects.push(ObjectState::at_rest(p, r));
    }
    let mut candidates = Vec::new();
    for k in 0..n {
        if k % cols + 1 < cols && k + 1 < n {
            candidates.push((k, k + 1));
        }
        if k + cols < n {
            candidates.push((k, k + cols));
        }
    }
    Ok((objects, candidates))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushConfig {
    /// Pusher speed, m/s.
    pub speed: f64,
    pub length: f64,
    pub dt: f64,
    pub candidates: usize,
    /// Free space left between the pusher and the first object it will hit.
    pub start_clearance: f64,
}

impl Default for PushConfig {
    fn default() -> Self {
        PushConfig {
            speed: 0.1,
            length: 0.30,
            dt: 0.05,
            candidates: 8,
            start_clearance: 0.01,
        }
    }
}

impl PushConfig {
    pub fn steps(&self) -> Result<usize> {
        if !(self.speed > 0.0 && self.dt > 0.0 && self.length > 0.0) {
            return Err(Error::InvalidConfig("push speed, length and dt must be positive".into()));
        }
        let exact = self.length / (self.speed * self.dt);
        let t = exact.round();
        if (exact - t).abs() > 1e-6 || t < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "push length {} is not a whole number of steps at {} m/s and dt {}",
                self.length, self.speed, self.dt
            )));
        }
        Ok(t as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushPlan {
    pub start: Vec2,
    pub direction: Vec2,
    pub controls: Vec<Vec2>,
}

impl PushPlan {
    /// The scene with its pusher moved to the start of the push, at rest.
    pub fn apply(&self, scene: &SceneState) -> Result<SceneState> {
        let mut s = scene.clone();
        let p = s
            .pusher_index()
            .ok_or_else(|| Error::InvalidScene("scene has no pusher".into()))?;
        s.objects[p].position = self.start;
        s.objects[p].velocity = Vec2::ZERO;
        Ok(s)
    }
}

/// Entry and exit of the pusher centre through each object's inflated disc,
/// measured along the line `origin + s * dir`.
fn crossings(scene: &SceneState, rp: f64, origin: Vec2, dir: Vec2) -> Vec<(f64, f64)> {
    let perp = dir.perp();
    scene
        .objects
        .iter()
        .filter(|o| !o.controlled)
        .filter_map(|o| {
            let rel = o.position - origin;
            let along = rel.dot(dir);
            let lat = rel.dot(perp);
            let big = o.radius + rp;
            (lat.abs() < big).then(|| {
                let half = (big * big - lat * lat).sqrt();
                (along - half, along + half)
            })
        })
        .collect()
}

/// Picks the straight push, among `cfg.candidates` random approach lines, that
/// passes near the most objects.
pub fn generate_push(scene: &SceneState, cfg: &PushConfig, seed: u64) -> Result<PushPlan> {
    let steps = cfg.steps()?;
    let pusher = scene
        .pusher_index()
        .ok_or_else(|| Error::InvalidScene("scene has no pusher".into()))?;
    let rp = scene.objects[pusher].radius;
    let free: Vec<usize> = scene.free_indices().collect();
    if free.is_empty() || cfg.candidates == 0 {
        return Err(Error::Generation("no feasible approach: nothing to push".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vec2, Vec2)> = None;
    for _ in 0..cfg.candidates {
        let target = &scene.objects[free[rng.gen_range(0..free.len())]];
        let dir = Vec2::from_angle(rng.gen_range(0.0..std::f64::consts::TAU));
        let offset = rng.gen_range(-0.5..=0.5) * target.radius;
        let origin = target.position + dir.perp() * offset;
        let spans = crossings(scene, rp, origin, dir);
        let target_entry = {
            let rel = target.position - origin;
            let lat = rel.dot(dir.perp());
            let big = target.radius + rp;
            rel.dot(dir) - (big * big - lat * lat).sqrt()
        };
        let mut s0 = target_entry - cfg.start_clearance;
        for _ in 0..=spans.len() {
            match spans
                .iter()
                .find(|&&(enter, exit)| s0 > enter - cfg.start_clearance && s0 < exit)
            {
                Some(&(enter, _)) => s0 = enter - cfg.start_clearance,
                None => break,
            }
        }
        let s1 = s0 + cfg.length;
        let score = spans.iter().filter(|&&(enter, exit)| exit > s0 && enter < s1).count();
        if best.map_or(true, |(b, _, _)| score > b) {
            best = Some((score, origin + dir * s0, dir));
        }
    }
    let (_, start, direction) = best.expect("at least one candidate");
    Ok(PushPlan {
        start,
        direction,
        controls: vec![direction * cfg.speed; steps],
    })
}
