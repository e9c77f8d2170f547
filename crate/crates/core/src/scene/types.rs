use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

/// Joint class between two objects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JointType {
    NoJoint,
    Fixed,
    Revolute,
    Prismatic,
}

impl JointType {
    pub const ALL: [JointType; 4] = [
        JointType::NoJoint,
        JointType::Fixed,
        JointType::Revolute,
        JointType::Prismatic,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<JointType> {
        JointType::ALL.get(i).copied()
    }

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self.index()] = 1.0;
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            JointType::NoJoint => "none",
            JointType::Fixed => "fixed",
            JointType::Revolute => "revolute",
            JointType::Prismatic => "prismatic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub angle: f64,
    pub angular_velocity: f64,
    pub radius: f64,
    /// True only for the pusher.
    pub controlled: bool,
}

impl ObjectState {
    pub fn at_rest(position: Vec2, radius: f64) -> Self {
        ObjectState {
            position,
            velocity: Vec2::ZERO,
            angle: 0.0,
            angular_velocity: 0.0,
            radius,
            controlled: false,
        }
    }
}

/// A joint between objects `a` and `b`.
///
/// `anchor` and `axis` are the world-frame values at creation; the `local_*`
/// fields hold the same geometry in each body's frame and are what the
/// simulator integrates against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub a: usize,
    pub b: usize,
    pub kind: JointType,
    pub anchor: Vec2,
    pub axis: Vec2,
    pub local_anchor_a: Vec2,
    pub local_anchor_b: Vec2,
    pub local_axis_a: Vec2,
    /// `angle_b - angle_a` at creation.
    pub reference_angle: f64,
}

impl JointSpec {
    /// Joint anchored at the midpoint of the center segment, prismatic axis
    /// along the center line.
    pub fn between(objects: &[ObjectState], a: usize, b: usize, kind: JointType) -> Result<Self> {
        if a == b || a >= objects.len() || b >= objects.len() {
            return Err(Error::InvalidScene(format!("bad joint pair ({a}, {b})")));
        }
        if kind == JointType::NoJoint {
            return Err(Error::InvalidScene("joint kind must not be NoJoint".into()));
        }
        let (oa, ob) = (&objects[a], &objects[b]);
        let anchor = (oa.position + ob.position) * 0.5;
        let axis = (ob.position - oa.position).normalized();
        if axis == Vec2::ZERO {
            return Err(Error::InvalidScene(format!("coincident joint bodies ({a}, {b})")));
        }
        Ok(JointSpec {
            a,
            b,
            kind,
            anchor,
            axis,
            local_anchor_a: (anchor - oa.position).rotate(-oa.angle),
            local_anchor_b: (anchor - ob.position).rotate(-ob.angle),
            local_axis_a: axis.rotate(-oa.angle),
            reference_angle: ob.angle - oa.angle,
        })
    }

    pub fn involves(&self, i: usize, j: usize) -> bool {
        (self.a == i && self.b == j) || (self.a == j && self.b == i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub objects: Vec<ObjectState>,
    pub joints: Vec<JointSpec>,
    pub time: usize,
}

/// Overlap allowed between non-pusher discs in a valid scene.
pub const PENETRATION_TOLERANCE: f64 = 1e-3;

impl SceneState {
    pub fn pusher_index(&self) -> Option<usize> {
        self.objects.iter().position(|o| o.controlled)
    }

    pub fn free_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.controlled)
            .map(|(i, _)| i)
    }

    pub fn num_free(&self) -> usize {
        self.objects.iter().filter(|o| !o.controlled).count()
    }

    /// Ground-truth joint type of the unordered pair `(i, j)`.
    pub fn joint_between(&self, i: usize, j: usize) -> JointType {
        self.joints
            .iter()
            .find(|jt| jt.involves(i, j))
            .map_or(JointType::NoJoint, |jt| jt.kind)
    }

    pub fn surface_gap(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.objects[i], &self.objects[j]);
        (a.position - b.position).norm() - a.radius - b.radius
    }

    pub fn validate(&self) -> Result<()> {
        let n_ctrl = self.objects.iter().filter(|o| o.controlled).count();
        if n_ctrl != 1 {
            return Err(Error::InvalidScene(format!("expected exactly one pusher, found {n_ctrl}")));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !(o.radius > 0.0) {
                return Err(Error::InvalidScene(format!("object {i} has radius {}", o.radius)));
            }
            if !o.position.is_finite() || !o.velocity.is_finite() {
                return Err(Error::InvalidScene(format!("object {i} has non-finite state")));
            }
        }
        for jt in &self.joints {
            if jt.a >= self.objects.len() || jt.b >= self.objects.len() || jt.a == jt.b {
                return Err(Error::InvalidScene(format!("joint ({}, {}) out of range", jt.a, jt.b)));
            }
            if self.objects[jt.a].controlled || self.objects[jt.b].controlled {
                return Err(Error::InvalidScene("the pusher cannot be jointed".into()));
            }
        }
        let n = self.objects.len();
        for i in 0..n {
            for j in i + 1..n {
                if self.objects[i].controlled || self.objects[j].controlled {
                    continue;
                }
                let gap = self.surface_gap(i, j);
                if gap < -PENETRATION_TOLERANCE {
                    return Err(Error::InvalidScene(format!("objects {i} and {j} overlap by {:.4} m", -gap)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvironmentMode {
    FixedOnly,
    Mixed,
}

/// A pushed scene over time: `states.len() == controls.len() + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SceneState>,
    /// Pusher velocity command applied between `states[t]` and `states[t+1]`.
    pub controls: Vec<Vec2>,
    pub dt: f64,
    pub environment_mode: EnvironmentMode,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn initial(&self) -> &SceneState {
        &self.states[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.controls.len() + 1 {
            return Err(Error::LengthMismatch(format!(
                "{} states for {} controls",
                self.states.len(),
                self.controls.len()
            )));
        }
        for w in self.states.windows(2) {
            if w[1].time != w[0].time + 1 {
                return Err(Error::TimeGap {
                    previous: w[0].time,
                    current: w[1].time,
                });
            }
        }
        Ok(())
    }

    /// Copy truncated to the first `steps` controls.
    pub fn truncated(&self, steps: usize) -> Trajectory {
        let steps = steps.min(self.len());
        Trajectory {
            states: self.states[..=steps].to_vec(),
            controls: self.controls[..steps].to_vec(),
            dt: self.dt,
            environment_mode: self.environment_mode,
        }
    }
}

/// Joint type for every unordered pair of an `n`-object scene.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationAssignment {
    n: usize,
    /// Upper triangle, row-major, `i < j`.
    pairs: Vec<Option<JointType>>,
}

impl RelationAssignment {
    /// Every pair unset.
    pub fn empty(n: usize) -> Self {
        RelationAssignment {
            n,
            pairs: vec![None; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn uniform(n: usize, kind: JointType) -> Self {
        RelationAssignment {
            n,
            pairs: vec![Some(kind); n * n.saturating_sub(1) / 2],
        }
    }

    pub fn ground_truth(scene: &SceneState) -> Self {
        let n = scene.objects.len();
        let mut r = RelationAssignment::uniform(n, JointType::NoJoint);
        for jt in &scene.joints {
            r.set(jt.a, jt.b, jt.kind);
        }
        r
    }

    pub fn num_objects(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        pair_slot(self.n, i, j)
    }

    pub fn set(&mut self, i: usize, j: usize, kind: JointType) {
        let s = self.slot(i, j);
        self.pairs[s] = Some(kind);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<JointType> {
        if i == j || i >= self.n || j >= self.n {
            return None;
        }
        self.pairs[self.slot(i, j)]
    }

    pub fn require(&self, i: usize, j: usize) -> Result<JointType> {
        self.get(i, j).ok_or(Error::MissingRelation(i.min(j), i.max(j)))
    }

    /// Unordered pairs `(i, j)` with `i < j`, in slot order.
    pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }
}

/// Position of the unordered pair `{i, j}` in the order of [`RelationAssignment::pairs`].
pub fn pair_slot(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(j < n && i != j);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_has_width_four() {
        for k in JointType::ALL {
            let v = k.one_hot();
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            assert_eq!(v[k.index()], 1.0);
        }
    }

    #[test]
    fn assignment_slots_are_symmetric_and_dense() {
        let mut r = RelationAssignment::empty(5);
        let mut seen = std::collections::BTreeSet::new();
        for (i, j) in RelationAssignment::pairs(5) {
            assert!(seen.insert(r.slot(i, j)));
            assert_eq!(r.slot(i, j), r.slot(j, i));
        }
        assert_eq!(seen.len(), 10);
        r.set(3, 1, JointType::Revolute);
        assert_eq!(r.get(1, 3), Some(JointType::Revolute));
        assert!(matches!(r.require(0, 4), Err(Error::MissingRelation(0, 4))));
    }

    #[test]
    fn joint_anchor_sits_between_centers() {
        let objs = vec![
            ObjectState::at_rest(Vec2::new(0.0, 0.0), 0.1),
            ObjectState::at_rest(Vec2::new(0.3, 0.0), 0.12),
        ];
        let j = JointSpec::between(&objs, 0, 1, JointType::Prismatic).unwrap();
        assert_eq!(j.anchor, Vec2::new(0.15, 0.0));
        assert_eq!(j.axis, Vec2::new(1.0, 0.0));
        assert!(JointSpec::between(&objs, 0, 0, JointType::Fixed).is_err());
        assert!(JointSpec::between(&objs, 0, 1, JointType::NoJoint).is_err());
    }
}
