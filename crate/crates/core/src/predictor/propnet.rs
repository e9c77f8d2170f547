use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::GraphBatch;
use crate::numerics::params::join;
use crate::numerics::{Mlp, MlpCache, MlpSpec, Parameters, Tensor2};
use crate::scene::{EDGE_FEATURE_DIM, OBJECT_FEATURE_DIM};
use crate::{Error, Result};

/// Widths of the encoder and propagator stacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropNetSpec {
    pub object_hidden: Vec<usize>,
    pub relation_hidden: Vec<usize>,
    pub relation_propagator_hidden: Vec<usize>,
    pub object_propagator_hidden: Vec<usize>,
    /// Width of codes and effects.
    pub code_dim: usize,
    pub steps: usize,
}

impl Default for PropNetSpec {
    fn default() -> Self {
        PropNetSpec {
            object_hidden: vec![150, 150, 150],
            relation_hidden: vec![100],
            relation_propagator_hidden: vec![150, 150],
            object_propagator_hidden: vec![100],
            code_dim: 150,
            steps: 3,
        }
    }
}

impl PropNetSpec {
    /// Narrow variant used where finite differences must stay cheap.
    pub fn tiny() -> Self {
        PropNetSpec {
            object_hidden: vec![6],
            relation_hidden: vec![5],
            relation_propagator_hidden: vec![6],
            object_propagator_hidden: vec![5],
            code_dim: 4,
            steps: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("propagation steps must be at least 1".into()));
        }
        if self.code_dim == 0 {
            return Err(Error::InvalidConfig("code width must be at least 1".into()));
        }
        Ok(())
    }

    fn mlp_specs(&self) -> [MlpSpec; 4] {
        let d = self.code_dim;
        [
            MlpSpec::new(OBJECT_FEATURE_DIM, &self.object_hidden, d),
            MlpSpec::new(EDGE_FEATURE_DIM, &self.relation_hidden, d),
            MlpSpec::new(3 * d, &self.relation_propagator_hidden, d),
            MlpSpec::new(3 * d, &self.object_propagator_hidden, d),
        ]
    }
}

/// Object and relation encoders plus one relation and one object propagator
/// shared across all propagation steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationNet {
    pub spec: PropNetSpec,
    pub object_encoder: Mlp,
    pub relation_encoder: Mlp,
    pub relation_propagator: Mlp,
    pub object_propagator: Mlp,
}

/// Everything the reverse pass needs from one forward pass.
pub struct PropCache {
    object_encoder: MlpCache,
    relation_encoder: MlpCache,
    c_o: Tensor2,
    c_r: Tensor2,
    /// `p^0 .. p^L`
    p: Vec<Tensor2>,
    relation_steps: Vec<MlpCache>,
    object_steps: Vec<MlpCache>,
    senders: Vec<usize>,
    receivers: Vec<usize>,
}

/// Final object states `p^L` and final edge effects `e^L`.
pub struct PropOutput {
    pub objects: Tensor2,
    pub effects: Tensor2,
}

impl PropagationNet {
    pub fn zeros(spec: PropNetSpec) -> Result<Self> {
        spec.validate()?;
        let [a, b, c, d] = spec.mlp_specs();
        Ok(PropagationNet {
            spec,
            object_encoder: Mlp::zeros(a)?,
            relation_encoder: Mlp::zeros(b)?,
            relation_propagator: Mlp::zeros(c)?,
            object_propagator: Mlp::zeros(d)?,
        })
    }

    pub fn glorot<R: Rng>(spec: PropNetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let [a, b, c, d] = spec.mlp_specs();
        Ok(PropagationNet {
            spec,
            object_encoder: Mlp::glorot(a, rng)?,
            relation_encoder: Mlp::glorot(b, rng)?,
            relation_propagator: Mlp::glorot(c, rng)?,
            object_propagator: Mlp::glorot(d, rng)?,
        })
    }

    pub fn forward(&self, batch: &GraphBatch) -> Result<PropOutput> {
        let (out, _) = self.run(batch, false)?;
        Ok(out)
    }

    pub fn forward_cached(&self, batch: &GraphBatch) -> Result<(PropOutput, PropCache)> {
        let (out, cache) = self.run(batch, true)?;
        Ok((out, cache.expect("requested")))
    }

    fn run(&self, batch: &GraphBatch, keep: bool) -> Result<(PropOutput, Option<PropCache>)> {
        let n = batch.num_objects();
        let d = self.spec.code_dim;
        let (c_o, enc_o) = self.object_encoder.forward_cached(&batch.objects)?;
        let (c_r, enc_r) = self.relation_encoder.forward_cached(&batch.edges)?;
        let mut p = vec![Tensor2::zeros(n, d)];
        let mut rel_steps = Vec::new();
        let mut obj_steps = Vec::new();
        let mut effects = Tensor2::zeros(batch.num_edges(), d);
        for _ in 0..self.spec.steps {
            let prev = p.last().expect("p0");
            let x_r = Tensor2::hcat(&[&c_r, &prev.gather_rows(&batch.receivers), &prev.gather_rows(&batch.senders)])?;
            let (e, rc) = self.relation_propagator.forward_cached(&x_r)?;
            let mut agg = Tensor2::zeros(n, d);
            agg.scatter_add_rows(&batch.receivers, &e);
            let x_o = Tensor2::hcat(&[&c_o, prev, &agg])?;
            let (next, oc) = self.object_propagator.forward_cached(&x_o)?;
            if keep {
                rel_steps.push(rc);
                obj_steps.push(oc);
            }
            effects = e;
            p.push(next);
        }
        let objects = p.last().expect("pL").clone();
        let cache = keep.then(|| PropCache {
            object_encoder: enc_o,
            relation_encoder: enc_r,
            c_o,
            c_r,
            p,
            relation_steps: rel_steps,
            object_steps: obj_steps,
            senders: batch.senders.clone(),
            receivers: batch.receivers.clone(),
        });
        Ok((PropOutput { objects, effects }, cache))
    }

    /// Reverse pass from gradients on `p^L` and (optionally) `e^L`. Returns
    /// gradients with respect to the object and edge feature rows.
    pub fn backward(
        &self,
        cache: &PropCache,
        d_objects: &Tensor2,
        d_effects: Option<&Tensor2>,
        grads: &mut PropagationNet,
    ) -> Result<(Tensor2, Tensor2)> {
        let d = self.spec.code_dim;
        let steps = self.spec.steps;
        if cache.object_steps.len() != steps || cache.relation_steps.len() != steps {
            return Err(Error::MissingCache("propagation network".into()));
        }
        let n = cache.c_o.rows();
        let ne = cache.c_r.rows();
        if d_objects.shape() != (n, d) {
            return Err(Error::dims("propagation output gradient", format!("({n},{d})"), format!("{:?}", d_objects.shape())));
        }
        let mut d_co = Tensor2::zeros(n, d);
        let mut d_cr = Tensor2::zeros(ne, d);
        let mut dp = d_objects.clone();
        for l in (0..steps).rev() {
            let dx_o = self
                .object_propagator
                .backward(&cache.object_steps[l], &dp, &mut grads.object_propagator)?;
            let mut dp_prev = dx_o.slice_cols(d, d);
            d_co.add_assign(&dx_o.slice_cols(0, d))?;
            let mut de = dx_o.slice_cols(2 * d, d).gather_rows(&cache.receivers);
            if l + 1 == steps {
                if let Some(g) = d_effects {
                    de.add_assign(g)?;
                }
            }
            let dx_r = self
                .relation_propagator
                .backward(&cache.relation_steps[l], &de, &mut grads.relation_propagator)?;
            d_cr.add_assign(&dx_r.slice_cols(0, d))?;
            dp_prev.scatter_add_cols_window(&cache.receivers, &dx_r, d);
            dp_prev.scatter_add_cols_window(&cache.senders, &dx_r, 2 * d);
            dp = dp_prev;
        }
        // p^0 is a constant: dp is dropped here
        let d_obj = self
            .object_encoder
            .backward(&cache.object_encoder, &d_co, &mut grads.object_encoder)?;
        let d_edge = self
            .relation_encoder
            .backward(&cache.relation_encoder, &d_cr, &mut grads.relation_encoder)?;
        Ok((d_obj, d_edge))
    }

    /// `p^l` for every step, used by locality tests.
    pub fn object_states(cache: &PropCache) -> &[Tensor2] {
        &cache.p
    }
}

impl Parameters for PropagationNet {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor2)) {
        self.object_encoder.visit_params(&join(prefix, "object_encoder"), f);
        self.relation_encoder.visit_params(&join(prefix, "relation_encoder"), f);
        self.relation_propagator.visit_params(&join(prefix, "relation_propagator"), f);
        self.object_propagator.visit_params(&join(prefix, "object_propagator"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor2)) {
        self.object_encoder.visit_params_mut(&join(prefix, "object_encoder"), f);
        self.relation_encoder.visit_params_mut(&join(prefix, "relation_encoder"), f);
        self.relation_propagator.visit_params_mut(&join(prefix, "relation_propagator"), f);
        self.object_propagator.visit_params_mut(&join(prefix, "object_propagator"), f);
    }
}
