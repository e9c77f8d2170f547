//! Sequential-impulse solver for frictionless disc contacts and the three
//! joint types. Velocities are solved without bias terms; positional drift is
//! removed afterwards by a separate position pass so it never injects energy.

use crate::scene::{JointSpec, JointType};
use crate::Vec2;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Body {
    pub pos: Vec2,
    pub angle: f64,
    pub vel: Vec2,
    pub omega: f64,
    pub inv_mass: f64,
    pub inv_inertia: f64,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Contact {
    pub a: usize,
    pub b: usize,
    /// Unit vector from `a` to `b`.
    pub normal: Vec2,
    /// Minimum normal velocity allowed after the solve.
    pub target: f64,
    pub impulse: f64,
}

/// Builds a contact for the pair if they are close enough to touch this step.
pub(crate) fn make_contact(bodies: &[Body], a: usize, b: usize, range: f64, dt: f64, restitution: f64) -> Option<Contact> {
    let (ba, bb) = (&bodies[a], &bodies[b]);
    if ba.inv_mass == 0.0 && bb.inv_mass == 0.0 {
        return None;
    }
    let d = bb.pos - ba.pos;
    let dist = d.norm();
    let gap = dist - ba.radius - bb.radius;
    if gap > range {
        return None;
    }
    let normal = if dist > 0.0 { d / dist } else { Vec2::new(1.0, 0.0) };
    let mut target = if gap > 0.0 { -gap / dt } else { 0.0 };
    if restitution > 0.0 {
        let vn0 = (bb.vel - ba.vel).dot(normal);
        if vn0 < 0.0 && vn0 * dt < -gap {
            target = target.max(-restitution * vn0);
        }
    }
    Some(Contact {
        a,
        b,
        normal,
        target,
        impulse: 0.0,
    })
}

/// Velocity change of every affected body per unit contact impulse, with the
/// joint groups of both bodies already reacting to it.
pub(crate) struct ContactResponse {
    delta: Vec<(usize, Vec2, f64)>,
    /// Normal velocity change per unit impulse.
    compliance: f64,
}

pub(crate) fn contact_response(bodies: &[Body], c: &Contact, groups: &[&JointGroup]) -> ContactResponse {
    let mut probe: Vec<Body> = bodies
        .iter()
        .map(|b| Body {
            vel: Vec2::ZERO,
            omega: 0.0,
            ..*b
        })
        .collect();
    let (ma, mb) = (probe[c.a].inv_mass, probe[c.b].inv_mass);
    probe[c.a].vel -= c.normal * ma;
    probe[c.b].vel += c.normal * mb;
    for g in groups {
        g.project(&mut probe);
    }
    let delta: Vec<_> = probe
        .iter()
        .enumerate()
        .filter(|(_, b)| b.vel != Vec2::ZERO || b.omega != 0.0)
        .map(|(k, b)| (k, b.vel, b.omega))
        .collect();
    let compliance = (probe[c.b].vel - probe[c.a].vel).dot(c.normal);
    ContactResponse { delta, compliance }
}

pub(crate) fn solve_contact_velocity(bodies: &mut [Body], c: &mut Contact, r: &ContactResponse) {
    if !(r.compliance > 0.0) {
        return;
    }
    let vn = (bodies[c.b].vel - bodies[c.a].vel).dot(c.normal);
    let new_impulse = (c.impulse + (c.target - vn) / r.compliance).max(0.0);
    let d = new_impulse - c.impulse;
    c.impulse = new_impulse;
    if d != 0.0 {
        for &(k, dv, dw) in &r.delta {
            bodies[k].vel += dv * d;
            bodies[k].omega += dw * d;
        }
    }
}

/// Bodies whose velocity a contact impulse can change.
pub(crate) fn response_bodies(r: &ContactResponse) -> impl Iterator<Item = usize> + '_ {
    r.delta.iter().map(|d| d.0)
}

/// Pushes overlapping discs apart by a `beta` fraction of the overlap. Any
/// jointed group of either disc moves with it so joints are not torn apart.
pub(crate) fn solve_contact_position(bodies: &mut [Body], a: usize, b: usize, beta: f64, groups: &[&[&JointSpec]]) {
    if bodies[a].inv_mass == 0.0 && bodies[b].inv_mass == 0.0 {
        return;
    }
    let d = bodies[b].pos - bodies[a].pos;
    let dist = d.norm();
    let gap = dist - bodies[a].radius - bodies[b].radius;
    if gap >= 0.0 {
        return;
    }
    let c = Contact {
        a,
        b,
        normal: if dist > 0.0 { d / dist } else { Vec2::new(1.0, 0.0) },
        target: 0.0,
        impulse: 0.0,
    };
    let solved: Vec<JointGroup> = groups.iter().map(|g| JointGroup::new(bodies, g)).collect();
    let refs: Vec<&JointGroup> = solved.iter().collect();
    let r = contact_response(bodies, &c, &refs);
    if !(r.compliance > 0.0) {
        return;
    }
    let lambda = -beta * gap / r.compliance;
    for &(k, dv, dw) in &r.delta {
        bodies[k].pos += dv * lambda;
        bodies[k].angle += dw * lambda;
    }
}

fn arms(bodies: &[Body], j: &JointSpec) -> (Vec2, Vec2) {
    (
        j.local_anchor_a.rotate(bodies[j.a].angle),
        j.local_anchor_b.rotate(bodies[j.b].angle),
    )
}

/// One scalar constraint row acting on bodies `a` and `b`, with Jacobian
/// entries over `(vx, vy, omega)` of each.
#[derive(Clone, Copy, Debug)]
struct Row {
    a: usize,
    b: usize,
    ja: [f64; 3],
    jb: [f64; 3],
    /// Position-level violation.
    error: f64,
}

fn joint_rows(bodies: &[Body], j: &JointSpec, out: &mut Vec<Row>) {
    let (a, b) = (j.a, j.b);
    let (ra, rb) = arms(bodies, j);
    let sep = bodies[b].pos + rb - bodies[a].pos - ra;
    let dangle = bodies[b].angle - bodies[a].angle - j.reference_angle;
    let point_x = Row {
        a,
        b,
        ja: [-1.0, 0.0, ra.y],
        jb: [1.0, 0.0, -rb.y],
        error: sep.x,
    };
    let point_y = Row {
        a,
        b,
        ja: [0.0, -1.0, -ra.x],
        jb: [0.0, 1.0, rb.x],
        error: sep.y,
    };
    let angle = Row {
        a,
        b,
        ja: [0.0, 0.0, -1.0],
        jb: [0.0, 0.0, 1.0],
        error: dangle,
    };
    match j.kind {
        JointType::NoJoint => {}
        JointType::Fixed => out.extend([point_x, point_y, angle]),
        JointType::Revolute => out.extend([point_x, point_y]),
        JointType::Prismatic => {
            let perp = j.local_axis_a.rotate(bodies[a].angle).perp();
            let d = bodies[b].pos + rb - bodies[a].pos - ra;
            out.push(Row {
                a,
                b,
                ja: [-perp.x, -perp.y, -(d + ra).cross(perp)],
                jb: [perp.x, perp.y, rb.cross(perp)],
                error: perp.dot(sep),
            });
            out.push(angle);
        }
    }
}

/// All joint rows of one connected group of jointed bodies, with the
/// Cholesky factor of `J M⁻¹ Jᵀ`. Solving the group in one block keeps long
/// chains rigid where pairwise sweeps converge slowly.
pub(crate) struct JointGroup {
    rows: Vec<Row>,
    /// Lower-triangular factor, row-major `m × m`.
    factor: Vec<f64>,
    pub impulse: Vec<f64>,
}

fn inv_mass_dot(bodies: &[Body], body: usize, x: &[f64; 3], y: &[f64; 3]) -> f64 {
    let b = &bodies[body];
    b.inv_mass * (x[0] * y[0] + x[1] * y[1]) + b.inv_inertia * x[2] * y[2]
}

impl JointGroup {
    pub fn new(bodies: &[Body], joints: &[&JointSpec]) -> Self {
        let mut rows = Vec::new();
        for j in joints {
            joint_rows(bodies, j, &mut rows);
        }
        let factor = factorize(bodies, &rows);
        let m = rows.len();
        JointGroup {
            rows,
            factor,
            impulse: vec![0.0; m],
        }
    }

    fn velocity_residual(&self, bodies: &[Body]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let (va, vb) = (&bodies[r.a], &bodies[r.b]);
                r.ja[0] * va.vel.x + r.ja[1] * va.vel.y + r.ja[2] * va.omega + r.jb[0] * vb.vel.x + r.jb[1] * vb.vel.y
                    + r.jb[2] * vb.omega
            })
            .collect()
    }

    /// Projects velocities onto the group's constraint manifold, returning the
    /// row impulses used.
    pub fn project(&self, bodies: &mut [Body]) -> Vec<f64> {
        let mut rhs = self.velocity_residual(bodies);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let lambda = cholesky_solve(&self.factor, rhs);
        for (r, l) in self.rows.iter().zip(&lambda) {
            apply_row(bodies, r, *l, false);
        }
        lambda
    }

    /// Drives the relative velocity of every row in the group to zero.
    pub fn solve_velocity(&mut self, bodies: &mut [Body]) {
        let lambda = self.project(bodies);
        for (acc, l) in self.impulse.iter_mut().zip(lambda) {
            *acc += l;
        }
    }

    /// Removes a `beta` fraction of the group's position error, relinearised
    /// at the current poses.
    pub fn solve_position(bodies: &mut [Body], joints: &[&JointSpec], beta: f64) {
        let mut rows = Vec::new();
        for j in joints {
            joint_rows(bodies, j, &mut rows);
        }
        let factor = factorize(bodies, &rows);
        let rhs = rows.iter().map(|r| -beta * r.error).collect();
        let lambda = cholesky_solve(&factor, rhs);
        for (r, l) in rows.iter().zip(&lambda) {
            apply_row(bodies, r, *l, true);
        }
    }
}

fn apply_row(bodies: &mut [Body], r: &Row, l: f64, position: bool) {
    for (body, jac) in [(r.a, &r.ja), (r.b, &r.jb)] {
        let b = &mut bodies[body];
        let dv = Vec2::new(b.inv_mass * jac[0] * l, b.inv_mass * jac[1] * l);
        let dw = b.inv_inertia * jac[2] * l;
        if position {
            b.pos += dv;
            b.angle += dw;
        } else {
            b.vel += dv;
            b.omega += dw;
        }
    }
}

fn factorize(bodies: &[Body], rows: &[Row]) -> Vec<f64> {
    let m = rows.len();
    let mut a = vec![0.0; m * m];
    for p in 0..m {
        for q in 0..=p {
            let (rp, rq) = (&rows[p], &rows[q]);
            let mut v = 0.0;
            for (bp, jp) in [(rp.a, &rp.ja), (rp.b, &rp.jb)] {
                for (bq, jq) in [(rq.a, &rq.ja), (rq.b, &rq.jb)] {
                    if bp == bq {
                        v += inv_mass_dot(bodies, bp, jp, jq);
                    }
                }
            }
            a[p * m + q] = v;
            a[q * m + p] = v;
        }
    }
    // in-place Cholesky, lower triangle
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        let d = if d > 0.0 { d.sqrt() } else { f64::INFINITY };
        a[j * m + j] = d;
        for i in j + 1..m {
            let mut v = a[i * m + j];
            for k in 0..j {
                v -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = v / d;
        }
    }
    a
}

/// Solves `L Lᵀ x = b`. A non-positive pivot (redundant row) was stored as an
/// infinite diagonal, which zeroes that row's multiplier.
fn cholesky_solve(l: &[f64], mut b: Vec<f64>) -> Vec<f64> {
    let m = b.len();
    for i in 0..m {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * m + k] * b[k];
        }
        b[i] = v / l[i * m + i];
    }
    for i in (0..m).rev() {
        let mut v = b[i];
        for k in i + 1..m {
            v -= l[k * m + i] * b[k];
        }
        b[i] = v / l[i * m + i];
    }
    b
}

/// Position-level error of the joint: linear part and angular part.
pub(crate) fn joint_position_error(bodies: &[Body], j: &JointSpec) -> (Vec2, f64) {
    let mut rows = Vec::new();
    joint_rows(bodies, j, &mut rows);
    let e: Vec<f64> = rows.iter().map(|r| r.error).collect();
    match j.kind {
        JointType::NoJoint => (Vec2::ZERO, 0.0),
        JointType::Fixed => (Vec2::new(e[0], e[1]), e[2]),
        JointType::Revolute => (Vec2::new(e[0], e[1]), 0.0),
        JointType::Prismatic => (Vec2::new(e[0], 0.0), e[1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_a_known_system() {
        let bodies = [Body {
            pos: Vec2::ZERO,
            angle: 0.0,
            vel: Vec2::ZERO,
            omega: 0.0,
            inv_mass: 2.0,
            inv_inertia: 5.0,
            radius: 0.1,
        }; 2];
        let rows = [
            Row { a: 0, b: 1, ja: [-1.0, 0.0, 0.3], jb: [1.0, 0.0, -0.1], error: 0.0 },
            Row { a: 0, b: 1, ja: [0.0, -1.0, -0.2], jb: [0.0, 1.0, 0.4], error: 0.0 },
            Row { a: 0, b: 1, ja: [0.0, 0.0, -1.0], jb: [0.0, 0.0, 1.0], error: 0.0 },
        ];
        let l = factorize(&bodies, &rows);
        // dense J M⁻¹ Jᵀ built independently
        let m = |r: &Row, s: &Row| {
            let w = [2.0, 2.0, 5.0];
            (0..3).map(|k| w[k] * (r.ja[k] * s.ja[k] + r.jb[k] * s.jb[k])).sum::<f64>()
        };
        let x = [0.7, -1.1, 0.25];
        let b: Vec<f64> = (0..3).map(|p| (0..3).map(|q| m(&rows[p], &rows[q]) * x[q]).sum()).collect();
        let got = cholesky_solve(&l, b);
        for k in 0..3 {
            assert!((got[k] - x[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn contact_stops_approach_at_touch() {
        let mut bodies = vec![
            Body {
                pos: Vec2::new(0.0, 0.0),
                angle: 0.0,
                vel: Vec2::new(0.1, 0.0),
                omega: 0.0,
                inv_mass: 0.0,
                inv_inertia: 0.0,
                radius: 0.03,
            },
            Body {
                pos: Vec2::new(0.135, 0.0),
                angle: 0.0,
                vel: Vec2::ZERO,
                omega: 0.0,
                inv_mass: 1.0,
                inv_inertia: 1.0,
                radius: 0.1,
            },
        ];
        let mut c = make_contact(&bodies, 0, 1, 0.1, 0.05, 0.0).unwrap();
        let r = contact_response(&bodies, &c, &[]);
        solve_contact_velocity(&mut bodies, &mut c, &r);
        // gap 5 mm, pusher covers 5 mm per step: disc stays put
        assert!(bodies[1].vel.norm() < 1e-12);
        bodies[0].pos.x = 0.0;
        bodies[1].pos.x = 0.131;
        let mut c = make_contact(&bodies, 0, 1, 0.1, 0.05, 0.0).unwrap();
        let r = contact_response(&bodies, &c, &[]);
        solve_contact_velocity(&mut bodies, &mut c, &r);
        // 1 mm gap: approach limited to 0.02 m/s
        assert!((bodies[1].vel.x - 0.08).abs() < 1e-12);
    }
}
