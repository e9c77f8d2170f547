//! Ground-truth 2D physics for discs sliding on a table, connected by fixed,
//! revolute and prismatic joints and pushed by a kinematic pusher.

mod generate;
mod solver;

use serde::{Deserialize, Serialize};

pub use generate::{generate_push, generate_scene, PushConfig, PushPlan, Rect, SceneGenConfig, SceneLayout};

use crate::scene::{EnvironmentMode, SceneState, Trajectory};
use crate::{Error, Result, Vec2};
use crate::scene::JointSpec;
use solver::{Body, JointGroup};

/// Areal density in kg/m². Only mass ratios matter to the solver.
pub const DENSITY: f64 = 1.0;
/// Any free-body speed above this aborts the step.
pub const DIVERGENCE_SPEED: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub solver_iterations: usize,
    pub baumgarte_beta: f64,
    /// Linear deceleration from table friction, m/s².
    pub table_friction_decel: f64,
    pub restitution: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.05,
            solver_iterations: 20,
            baumgarte_beta: 0.2,
            table_friction_decel: 0.5,
            restitution: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.solver_iterations == 0 {
            return Err(Error::InvalidConfig("solver_iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.baumgarte_beta) {
            return Err(Error::InvalidConfig(format!("baumgarte_beta {} outside [0, 1]", self.baumgarte_beta)));
        }
        if !(self.table_friction_decel >= 0.0) {
            return Err(Error::InvalidConfig("table_friction_decel must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(Error::InvalidConfig(format!("restitution {} outside [0, 1]", self.restitution)));
        }
        Ok(())
    }
}

/// Velocity after one step of uniform deceleration and the exact displacement
/// covered during it.
fn decelerate(v: f64, decel: f64, dt: f64) -> (f64, f64) {
    let s = v.abs();
    if decel <= 0.0 {
        return (v, v * dt);
    }
    if s <= decel * dt * (1.0 + 1e-12) {
        (0.0, v.signum() * s * s / (2.0 * decel))
    } else {
        let sign = v.signum();
        (sign * (s - decel * dt), sign * (s * dt - 0.5 * decel * dt * dt))
    }
}

fn decelerate_vec(v: Vec2, decel: f64, dt: f64) -> (Vec2, Vec2) {
    let s = v.norm();
    if s == 0.0 {
        return (Vec2::ZERO, Vec2::ZERO);
    }
    let dir = v / s;
    let (s1, d) = decelerate(s, decel, dt);
    (dir * s1, dir * d)
}

pub fn kinetic_energy(scene: &SceneState) -> f64 {
    scene
        .objects
        .iter()
        .filter(|o| !o.controlled)
        .map(|o| {
            let m = DENSITY * std::f64::consts::PI * o.radius * o.radius;
            0.5 * m * o.velocity.norm_sq() + 0.25 * m * o.radius * o.radius * o.angular_velocity * o.angular_velocity
        })
        .sum()
}

/// Advances the scene by one `cfg.dt`, moving the pusher with `pusher_velocity`.
pub fn step(scene: &SceneState, pusher_velocity: Vec2, cfg: &SimConfig) -> Result<SceneState> {
    cfg.validate()?;
    let dt = cfg.dt;
    let a = cfg.table_friction_decel;
    let n = scene.objects.len();

    let mut bodies = Vec::with_capacity(n);
    let mut free_disp = Vec::with_capacity(n);
    let mut vmax = pusher_velocity.norm();
    for o in &scene.objects {
        if o.controlled {
            bodies.push(Body {
                pos: o.position,
                angle: o.angle,
                vel: pusher_velocity,
                omega: 0.0,
                inv_mass: 0.0,
                inv_inertia: 0.0,
                radius: o.radius,
            });
            free_disp.push((pusher_velocity * dt, 0.0));
            continue;
        }
        let m = DENSITY * std::f64::consts::PI * o.radius * o.radius;
        let (v, dx) = decelerate_vec(o.velocity, a, dt);
        // uniform pressure under a disc: torque 2/3 μ m g r over inertia m r²/2
        let (w, dth) = decelerate(o.angular_velocity, 4.0 * a / (3.0 * o.radius), dt);
        vmax = vmax.max(o.velocity.norm() + o.angular_velocity.abs() * o.radius);
        bodies.push(Body {
            pos: o.position,
            angle: o.angle,
            vel: v,
            omega: w,
            inv_mass: 1.0 / m,
            inv_inertia: 2.0 / (m * o.radius * o.radius),
            radius: o.radius,
        });
        free_disp.push((dx, dth));
    }

    let jointed = |i: usize, j: usize| scene.joints.iter().any(|jt| jt.involves(i, j));
    let range = 4.0 * vmax * dt + 0.01;
    let mut contacts = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if jointed(i, j) {
                continue;
            }
            if let Some(c) = solver::make_contact(&bodies, i, j, range, dt, cfg.restitution) {
                contacts.push(c);
            }
        }
    }

    let groups = joint_groups(&scene.joints, n);
    let mut group_of = vec![usize::MAX; n];
    for (g, joints) in groups.iter().enumerate() {
        for j in joints {
            group_of[j.a] = g;
            group_of[j.b] = g;
        }
    }
    let mut solvers: Vec<JointGroup> = groups.iter().map(|g| JointGroup::new(&bodies, g)).collect();
    for g in solvers.iter_mut() {
        g.solve_velocity(&mut bodies);
    }
    // Contacts are swept in the joints' reduced coordinates: each response
    // already includes the reaction of the jointed groups it touches.
    let responses: Vec<_> = contacts
        .iter()
        .map(|c| {
            let (ga, gb) = (group_of[c.a], group_of[c.b]);
            let mut involved = Vec::new();
            if ga != usize::MAX {
                involved.push(&solvers[ga]);
            }
            if gb != usize::MAX && gb != ga {
                involved.push(&solvers[gb]);
            }
            solver::contact_response(&bodies, c, &involved)
        })
        .collect();
    for _ in 0..cfg.solver_iterations {
        for (c, r) in contacts.iter_mut().zip(&responses) {
            solver::solve_contact_velocity(&mut bodies, c, r);
        }
    }

    let mut touched = vec![false; n];
    for (c, r) in contacts.iter().zip(&responses) {
        if c.impulse != 0.0 {
            for k in solver::response_bodies(r) {
                touched[k] = true;
            }
        }
    }
    for (g, s) in groups.iter().zip(&solvers) {
        if s.impulse.iter().any(|&l| l != 0.0) {
            for j in g {
                touched[j.a] = true;
                touched[j.b] = true;
            }
        }
    }

    for (k, b) in bodies.iter_mut().enumerate() {
        if b.inv_mass == 0.0 || !touched[k] {
            b.pos += free_disp[k].0;
            b.angle += free_disp[k].1;
        } else {
            b.pos += b.vel * dt;
            b.angle += b.omega * dt;
        }
    }

    for _ in 0..cfg.solver_iterations {
        for i in 0..n {
            for j in i + 1..n {
                if jointed(i, j) {
                    continue;
                }
                let (gi, gj) = (group_of[i], group_of[j]);
                let mut involved: Vec<&[&JointSpec]> = Vec::new();
                if gi != usize::MAX {
                    involved.push(&groups[gi]);
                }
                if gj != usize::MAX && gj != gi {
                    involved.push(&groups[gj]);
                }
                solver::solve_contact_position(&mut bodies, i, j, cfg.baumgarte_beta, &involved);
            }
        }
        for g in &groups {
            JointGroup::solve_position(&mut bodies, g, cfg.baumgarte_beta);
        }
    }

    let mut next = scene.clone();
    next.time = scene.time + 1;
    for (k, (o, b)) in next.objects.iter_mut().zip(&bodies).enumerate() {
        o.position = b.pos;
        o.angle = b.angle;
        if o.controlled {
            o.velocity = pusher_velocity;
            o.angular_velocity = 0.0;
            continue;
        }
        o.velocity = b.vel;
        o.angular_velocity = b.omega;
        let speed = b.vel.norm();
        if !(speed <= DIVERGENCE_SPEED) || !b.pos.is_finite() || !b.angle.is_finite() {
            return Err(Error::SolverDivergence {
                time: next.time,
                object: k,
                speed,
            });
        }
    }
    Ok(next)
}

/// Joints split into connected groups, each in scene order.
fn joint_groups(joints: &[JointSpec], n: usize) -> Vec<Vec<&JointSpec>> {
    let mut comp: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], mut i: usize) -> usize {
        while c[i] != i {
            c[i] = c[c[i]];
            i = c[i];
        }
        i
    }
    for j in joints {
        let (ra, rb) = (root(&mut comp, j.a), root(&mut comp, j.b));
        comp[ra.max(rb)] = ra.min(rb);
    }
    let mut groups: Vec<(usize, Vec<&JointSpec>)> = Vec::new();
    for j in joints {
        let r = root(&mut comp, j.a);
        match groups.iter_mut().find(|(k, _)| *k == r) {
            Some((_, g)) => g.push(j),
            None => groups.push((r, vec![j])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

/// Applies `controls` in order and records every state.
pub fn rollout_ground_truth(
    scene: &SceneState,
    controls: &[Vec2],
    cfg: &SimConfig,
    mode: EnvironmentMode,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(scene.clone());
    for &u in controls {
        let next = step(states.last().expect("non-empty"), u, cfg)?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
        dt: cfg.dt,
        environment_mode: mode,
    })
}

/// Position and angle error of every joint in the scene, as reported by the
/// solver's own constraint functions.
pub fn joint_errors(scene: &SceneState) -> Vec<(f64, f64)> {
    let bodies: Vec<Body> = scene
        .objects
        .iter()
        .map(|o| Body {
            pos: o.position,
            angle: o.angle,
            vel: o.velocity,
            omega: o.angular_velocity,
            inv_mass: 0.0,
            inv_inertia: 0.0,
            radius: o.radius,
        })
        .collect();
    scene
        .joints
        .iter()
        .map(|j| {
            let (lin, ang) = solver::joint_position_error(&bodies, j);
            (lin.norm(), ang.abs())
        })
        .collect()
}

#[cfg(test)]
mod tests;
