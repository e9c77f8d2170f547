use serde::{Deserialize, Serialize};

use super::{Parameters, Tensor2};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state. Moment slots follow the parameter visit order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
}

impl AdamState {
    pub fn new<P: Parameters>(cfg: AdamConfig, params: &P) -> Result<Self> {
        if !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
            return Err(Error::InvalidConfig(format!("Adam hyperparameters out of range: {cfg:?}")));
        }
        let mut first = Vec::new();
        params.visit_params("", &mut |_, t| first.push(Tensor2::zeros(t.rows(), t.cols())));
        let second = first.clone();
        Ok(AdamState {
            step: 0,
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            first,
            second,
        })
    }

    /// One bias-corrected Adam update. Gradients are checked for finiteness
    /// and shape before any parameter is touched.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let mut g = Vec::with_capacity(self.first.len());
        let mut bad: Option<Error> = None;
        grads.visit_params("", &mut |name, t| {
            if bad.is_none() && !t.is_finite() {
                bad = Some(Error::NonFinite(format!("gradient of {name}")));
            }
            g.push(t.clone());
        });
        if let Some(e) = bad {
            return Err(e);
        }
        if g.len() != self.first.len() {
            return Err(Error::dims("adam parameter count", self.first.len(), g.len()));
        }
        for (k, t) in g.iter().enumerate() {
            if t.shape() != self.first[k].shape() {
                return Err(Error::dims(
                    format!("adam slot {k}"),
                    format!("{:?}", self.first[k].shape()),
                    format!("{:?}", t.shape()),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let mut k = 0;
        let first = &mut self.first;
        let second = &mut self.second;
        params.visit_params_mut("", &mut |_, p| {
            let gk = g[k].data();
            let m = first[k].data_mut();
            let v = second[k].data_mut();
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(gk).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= lr * mhat / (vhat.sqrt() + eps);
            }
            k += 1;
        });
        if !params.all_params_finite() {
            return Err(Error::NonFinite("parameters after Adam step".into()));
        }
        Ok(())
    }
}
