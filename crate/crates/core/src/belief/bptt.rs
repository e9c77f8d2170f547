//! Sequence loss for the belief network and its gradient by backpropagation
//! through time, including the path through fed-back soft attributes.

use super::{advance, BeliefParams, BeliefState, Observation, StepRecord};
use crate::numerics::Tensor2;
use crate::scene::{RelationAssignment, Trajectory, EDGE_ONEHOT_OFFSET};
use crate::{Error, Result};

/// Unroll `steps` observations; cross-entropy is taken on the beliefs after
/// observations `first..=last`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceWindow {
    pub steps: usize,
    pub first: usize,
    pub last: usize,
}

impl SequenceWindow {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.first && self.first <= self.last && self.last <= self.steps) {
            return Err(Error::InvalidConfig(format!(
                "loss window [{}, {}] must lie inside steps 1..={}",
                self.first, self.last, self.steps
            )));
        }
        Ok(())
    }

    fn contains(&self, t: usize) -> bool {
        (self.first..=self.last).contains(&t)
    }
}

/// Mean cross-entropy over free pairs and supervised steps.
pub fn sequence_loss(params: &BeliefParams, trajs: &[&Trajectory], window: SequenceWindow) -> Result<f64> {
    run(params, trajs, window, None)
}

/// As [`sequence_loss`], accumulating parameter gradients into `grads`.
pub fn sequence_loss_and_grad(
    params: &BeliefParams,
    trajs: &[&Trajectory],
    window: SequenceWindow,
    grads: &mut BeliefParams,
) -> Result<f64> {
    run(params, trajs, window, Some(grads))
}

struct PairGrad {
    dh: Vec<f64>,
    dc: Vec<f64>,
    dd: [f64; 4],
}

fn run(params: &BeliefParams, trajs: &[&Trajectory], window: SequenceWindow, grads: Option<&mut BeliefParams>) -> Result<f64> {
    window.validate()?;
    if trajs.is_empty() {
        return Err(Error::InvalidConfig("belief loss needs at least one trajectory".into()));
    }
    let recurrent = params.spec.recurrent;
    let hd = params.spec.hidden_dim;
    let keep = grads.is_some();
    let mut states: Vec<BeliefState> = trajs.iter().map(|t| BeliefState::prior(t.initial(), hd)).collect();
    let labels: Vec<Vec<(usize, usize)>> = trajs
        .iter()
        .zip(&states)
        .map(|(t, s)| {
            let gt = RelationAssignment::ground_truth(t.initial());
            s.free_pairs().map(|(slot, i, j)| (slot, gt.get(i, j).expect("pair").index())).collect()
        })
        .collect();
    let count: usize = (window.first..=window.last)
        .map(|t| trajs.iter().zip(&labels).filter(|(tr, _)| t <= tr.len()).map(|(_, l)| l.len()).sum::<usize>())
        .sum();
    if count == 0 {
        return Err(Error::InvalidConfig("no supervised pairs inside the loss window".into()));
    }
    let w = 1.0 / count as f64;

    let mut records: Vec<Option<StepRecord>> = Vec::new();
    // beliefs after each supervised step, per scene and slot
    let mut seen: Vec<Vec<Vec<[f64; 4]>>> = Vec::new();
    let mut loss = 0.0;
    for t in 1..=window.steps {
        let obs: Vec<_> = trajs
            .iter()
            .map(|tr| (t <= tr.len()).then(|| Observation::from_trajectory(tr, t)))
            .collect();
        let rec = advance(params, &mut states, &obs, recurrent)?;
        if keep {
            records.push(rec);
        }
        if window.contains(t) {
            for (k, s) in states.iter().enumerate() {
                if t > trajs[k].len() {
                    continue;
                }
                for &(slot, y) in &labels[k] {
                    loss -= s.pairs[slot].dist[y].ln() * w;
                }
            }
            if keep {
                seen.push(states.iter().map(|s| s.pairs.iter().map(|p| p.dist).collect()).collect());
            }
        }
    }
    let Some(grads) = grads else {
        return Ok(loss);
    };

    let mut acc: Vec<Vec<PairGrad>> = states
        .iter()
        .map(|s| {
            (0..s.pairs.len())
                .map(|_| PairGrad {
                    dh: vec![0.0; hd],
                    dc: vec![0.0; hd],
                    dd: [0.0; 4],
                })
                .collect()
        })
        .collect();
    for t in (1..=window.steps).rev() {
        if window.contains(t) {
            let after = &seen[t - window.first];
            for k in 0..trajs.len() {
                if t > trajs[k].len() {
                    continue;
                }
                for &(slot, y) in &labels[k] {
                    acc[k][slot].dd[y] -= w / after[k][slot][y];
                }
            }
        }
        if let Some(rec) = &records[t - 1] {
            backward_step(params, rec, &mut acc, grads, recurrent)?;
        }
        if !recurrent {
            for g in acc.iter_mut().flatten() {
                g.dh.iter_mut().for_each(|x| *x = 0.0);
                g.dc.iter_mut().for_each(|x| *x = 0.0);
                g.dd = [0.0; 4];
            }
        }
    }
    Ok(loss)
}

fn backward_step(
    params: &BeliefParams,
    rec: &StepRecord,
    acc: &mut [Vec<PairGrad>],
    grads: &mut BeliefParams,
    recurrent: bool,
) -> Result<()> {
    let hd = params.spec.hidden_dim;
    let d = params.spec.net.code_dim;
    let nu = rec.updates.len();
    let mut dlogits = Tensor2::zeros(nu, 4);
    let mut dhp = Tensor2::zeros(nu, hd);
    let mut dcp = Tensor2::zeros(nu, hd);
    for (u, &(k, slot, _, _)) in rec.updates.iter().enumerate() {
        let g = &mut acc[k][slot];
        let p = rec.dists[u];
        let dot: f64 = (0..4).map(|m| g.dd[m] * p[m]).sum();
        for m in 0..4 {
            dlogits.set(u, m, p[m] * (g.dd[m] - dot));
        }
        g.dd = [0.0; 4];
        dhp.row_mut(u).copy_from_slice(&g.dh);
        dcp.row_mut(u).copy_from_slice(&g.dc);
        g.dh.iter_mut().for_each(|x| *x = 0.0);
        g.dc.iter_mut().for_each(|x| *x = 0.0);
    }
    let dh_cls = params.classifier.backward(&rec.classifier, &dlogits, &mut grads.classifier)?;
    dhp.add_assign(&dh_cls)?;
    let mut dh2 = Tensor2::zeros(2 * nu, hd);
    let mut dc2 = Tensor2::zeros(2 * nu, hd);
    for u in 0..nu {
        for r in [2 * u, 2 * u + 1] {
            for (x, y) in dh2.row_mut(r).iter_mut().zip(dhp.row(u)) {
                *x = 0.5 * y;
            }
            for (x, y) in dc2.row_mut(r).iter_mut().zip(dcp.row(u)) {
                *x = 0.5 * y;
            }
        }
    }
    let (dx, dh, dc) = params.cell.backward(&rec.lstm, &dh2, &dc2, &mut grads.cell)?;
    if recurrent {
        for (u, &(k, slot, _, _)) in rec.updates.iter().enumerate() {
            let g = &mut acc[k][slot];
            for r in [2 * u, 2 * u + 1] {
                for (a, b) in g.dh.iter_mut().zip(dh.row(r)) {
                    *a += b;
                }
                for (a, b) in g.dc.iter_mut().zip(dc.row(r)) {
                    *a += b;
                }
            }
        }
    }
    let mut d_eff = Tensor2::zeros(rec.num_edges, d);
    for (u, &(_, _, ea, eb)) in rec.updates.iter().enumerate() {
        d_eff.row_mut(ea).copy_from_slice(dx.row(2 * u));
        d_eff.row_mut(eb).copy_from_slice(dx.row(2 * u + 1));
    }
    let d_obj = Tensor2::zeros(rec.num_objects, d);
    let (_, d_edge) = params.net.backward(&rec.prop, &d_obj, Some(&d_eff), &mut grads.net)?;
    if recurrent {
        for &(e, k, slot) in &rec.attributes {
            let row = d_edge.row(e);
            for m in 0..4 {
                let col = EDGE_ONEHOT_OFFSET + m;
                acc[k][slot].dd[m] += row[col] / params.normalizer.edge_column_scale(col);
            }
        }
    }
    Ok(())
}

