use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{glorot_uniform, join, Parameters};
use super::Tensor2;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentCellSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

/// Long short-term memory cell, gates packed as `[input, forget, candidate, output]`.
///
/// ```text
/// z  = x·Wx + h·Wh + b
/// i, f, o = σ(z_i), σ(z_f), σ(z_o);  g = tanh(z_g)
/// c' = f ⊙ c + i ⊙ g
/// h' = o ⊙ tanh(c')
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    spec: RecurrentCellSpec,
    /// `(input, 4·hidden)`.
    pub w_input: Tensor2,
    /// `(hidden, 4·hidden)`.
    pub w_hidden: Tensor2,
    /// `(1, 4·hidden)`.
    pub bias: Tensor2,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    x: Tensor2,
    h: Tensor2,
    c: Tensor2,
    /// Post-nonlinearity gate values, `(rows, 4·hidden)`.
    gates: Tensor2,
    tanh_c: Tensor2,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmCell {
    pub fn zeros(spec: RecurrentCellSpec) -> Result<Self> {
        Self::check_spec(spec)?;
        let g = 4 * spec.hidden_dim;
        Ok(LstmCell {
            spec,
            w_input: Tensor2::zeros(spec.input_dim, g),
            w_hidden: Tensor2::zeros(spec.hidden_dim, g),
            bias: Tensor2::zeros(1, g),
        })
    }

    pub fn glorot<R: Rng>(spec: RecurrentCellSpec, rng: &mut R) -> Result<Self> {
        Self::check_spec(spec)?;
        let g = 4 * spec.hidden_dim;
        Ok(LstmCell {
            spec,
            w_input: glorot_uniform(rng, spec.input_dim, g),
            w_hidden: glorot_uniform(rng, spec.hidden_dim, g),
            bias: Tensor2::zeros(1, g),
        })
    }

    fn check_spec(spec: RecurrentCellSpec) -> Result<()> {
        if spec.input_dim == 0 || spec.hidden_dim == 0 {
            return Err(Error::InvalidConfig(format!("LSTM dims must be >= 1: {spec:?}")));
        }
        Ok(())
    }

    pub fn spec(&self) -> RecurrentCellSpec {
        self.spec
    }

    fn check_shapes(&self, x: &Tensor2, h: &Tensor2, c: &Tensor2) -> Result<()> {
        let hd = self.spec.hidden_dim;
        if x.cols() != self.spec.input_dim {
            return Err(Error::dims("lstm input", self.spec.input_dim, x.cols()));
        }
        if h.shape() != (x.rows(), hd) {
            return Err(Error::dims("lstm hidden state", format!("({},{hd})", x.rows()), format!("{:?}", h.shape())));
        }
        if c.shape() != (x.rows(), hd) {
            return Err(Error::dims("lstm cell state", format!("({},{hd})", x.rows()), format!("{:?}", c.shape())));
        }
        Ok(())
    }

    pub fn step(&self, x: &Tensor2, h: &Tensor2, c: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        let (h2, c2, _) = self.step_cached(x, h, c)?;
        Ok((h2, c2))
    }

    pub fn step_cached(&self, x: &Tensor2, h: &Tensor2, c: &Tensor2) -> Result<(Tensor2, Tensor2, LstmCache)> {
        self.check_shapes(x, h, c)?;
        let hd = self.spec.hidden_dim;
        let mut z = x.matmul(&self.w_input)?;
        z.add_assign(&h.matmul(&self.w_hidden)?)?;
        z.add_row(&self.bias)?;
        let rows = x.rows();
        let mut c2 = Tensor2::zeros(rows, hd);
        let mut h2 = Tensor2::zeros(rows, hd);
        let mut tanh_c = Tensor2::zeros(rows, hd);
        for r in 0..rows {
            let zr = z.row_mut(r);
            for k in 0..hd {
                zr[k] = sigmoid(zr[k]);
                zr[hd + k] = sigmoid(zr[hd + k]);
                zr[2 * hd + k] = zr[2 * hd + k].tanh();
                zr[3 * hd + k] = sigmoid(zr[3 * hd + k]);
            }
            let zr = z.row(r);
            let cr = c.row(r);
            for k in 0..hd {
                let cn = zr[hd + k] * cr[k] + zr[k] * zr[2 * hd + k];
                let tc = cn.tanh();
                c2.set(r, k, cn);
                tanh_c.set(r, k, tc);
                h2.set(r, k, zr[3 * hd + k] * tc);
            }
        }
        let cache = LstmCache {
            x: x.clone(),
            h: h.clone(),
            c: c.clone(),
            gates: z,
            tanh_c,
        };
        Ok((h2, c2, cache))
    }

    /// Given `dL/dh'` and `dL/dc'`, accumulates parameter gradients and
    /// returns `(dL/dx, dL/dh, dL/dc)`.
    pub fn backward(
        &self,
        cache: &LstmCache,
        dh_next: &Tensor2,
        dc_next: &Tensor2,
        grads: &mut LstmCell,
    ) -> Result<(Tensor2, Tensor2, Tensor2)> {
        let hd = self.spec.hidden_dim;
        let rows = cache.x.rows();
        if dh_next.shape() != (rows, hd) || dc_next.shape() != (rows, hd) {
            return Err(Error::dims(
                "lstm backward state grads",
                format!("({rows},{hd})"),
                format!("{:?}/{:?}", dh_next.shape(), dc_next.shape()),
            ));
        }
        let mut dz = Tensor2::zeros(rows, 4 * hd);
        let mut dc = Tensor2::zeros(rows, hd);
        for r in 0..rows {
            let g = cache.gates.row(r);
            let tc = cache.tanh_c.row(r);
            let c_prev = cache.c.row(r);
            let dhr = dh_next.row(r);
            let dcr = dc_next.row(r);
            let dzr = dz.row_mut(r);
            let mut dc_row = vec![0.0; hd];
            for k in 0..hd {
                let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                let do_ = dhr[k] * tc[k];
                let dct = dcr[k] + dhr[k] * o * (1.0 - tc[k] * tc[k]);
                dzr[k] = dct * gg * i * (1.0 - i);
                dzr[hd + k] = dct * c_prev[k] * f * (1.0 - f);
                dzr[2 * hd + k] = dct * i * (1.0 - gg * gg);
                dzr[3 * hd + k] = do_ * o * (1.0 - o);
                dc_row[k] = dct * f;
            }
            dc.row_mut(r).copy_from_slice(&dc_row);
        }
        cache.x.t_matmul_acc(&dz, &mut grads.w_input)?;
        cache.h.t_matmul_acc(&dz, &mut grads.w_hidden)?;
        dz.sum_rows_acc(&mut grads.bias)?;
        let dx = dz.matmul_t(&self.w_input)?;
        let dh = dz.matmul_t(&self.w_hidden)?;
        Ok((dx, dh, dc))
    }
}

impl Parameters for LstmCell {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor2)) {
        f(join(prefix, "w_input"), &self.w_input);
        f(join(prefix, "w_hidden"), &self.w_hidden);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor2)) {
        f(join(prefix, "w_input"), &mut self.w_input);
        f(join(prefix, "w_hidden"), &mut self.w_hidden);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::gradcheck::{central_difference_params, compare_param_grads};

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, s: f64) -> Tensor2 {
        Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-s..s)).collect()).unwrap()
    }

    #[test]
    fn zero_params_zero_state_stays_zero() {
        let cell = LstmCell::zeros(RecurrentCellSpec { input_dim: 3, hidden_dim: 4 }).unwrap();
        let x = Tensor2::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let (h, c) = cell.step(&x, &Tensor2::zeros(1, 4), &Tensor2::zeros(1, 4)).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_unit_cell_halves() {
        let cell = LstmCell::zeros(RecurrentCellSpec { input_dim: 2, hidden_dim: 3 }).unwrap();
        let (h, c) = cell
            .step(&Tensor2::zeros(1, 2), &Tensor2::zeros(1, 3), &Tensor2::filled(1, 3, 1.0))
            .unwrap();
        for k in 0..3 {
            assert_eq!(c.get(0, k), 0.5);
            assert!((h.get(0, k) - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let cell = LstmCell::zeros(RecurrentCellSpec { input_dim: 2, hidden_dim: 3 }).unwrap();
        assert!(cell
            .step(&Tensor2::zeros(1, 2), &Tensor2::zeros(1, 2), &Tensor2::zeros(1, 3))
            .is_err());
    }

    /// Unrolled sequence loss `Σ_t w_t · h_t`, for the BPTT check.
    fn unrolled_loss(cell: &LstmCell, xs: &[Tensor2], w: &[Tensor2], h0: &Tensor2, c0: &Tensor2) -> f64 {
        let (mut h, mut c) = (h0.clone(), c0.clone());
        let mut loss = 0.0;
        for (x, wt) in xs.iter().zip(w) {
            let (h2, c2) = cell.step(x, &h, &c).unwrap();
            loss += h2.data().iter().zip(wt.data()).map(|(a, b)| a * b).sum::<f64>();
            h = h2;
            c = c2;
        }
        loss
    }

    #[test]
    fn bptt_over_100_steps_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = RecurrentCellSpec { input_dim: 3, hidden_dim: 4 };
        let cell = LstmCell::glorot(spec, &mut rng).unwrap();
        let steps = 100;
        let xs: Vec<_> = (0..steps).map(|_| rand_tensor(&mut rng, 2, 3, 1.0)).collect();
        let ws: Vec<_> = (0..steps).map(|_| rand_tensor(&mut rng, 2, 4, 0.1)).collect();
        let h0 = rand_tensor(&mut rng, 2, 4, 0.5);
        let c0 = rand_tensor(&mut rng, 2, 4, 0.5);

        let mut caches = Vec::new();
        let (mut h, mut c) = (h0.clone(), c0.clone());
        for x in &xs {
            let (h2, c2, cache) = cell.step_cached(x, &h, &c).unwrap();
            caches.push(cache);
            h = h2;
            c = c2;
        }
        let mut grads = cell.zeros_like();
        let mut dh = Tensor2::zeros(2, 4);
        let mut dc = Tensor2::zeros(2, 4);
        for t in (0..steps).rev() {
            dh.add_assign(&ws[t]).unwrap();
            let (_, dh_prev, dc_prev) = cell.backward(&caches[t], &dh, &dc, &mut grads).unwrap();
            dh = dh_prev;
            dc = dc_prev;
        }
        let numeric = central_difference_params(&cell, 1e-5, |p| unrolled_loss(p, &xs, &ws, &h0, &c0));
        for (name, err) in compare_param_grads(&grads, &numeric) {
            assert!(err < 1e-5, "{name}: {err}");
        }
    }

    proptest! {
        #[test]
        fn hidden_output_is_bounded(seed in 0u64..1000, scale in 0.1f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = RecurrentCellSpec { input_dim: 4, hidden_dim: 5 };
            let mut cell = LstmCell::glorot(spec, &mut rng).unwrap();
            cell.bias = rand_tensor(&mut rng, 1, 20, scale);
            let x = rand_tensor(&mut rng, 3, 4, scale);
            let h = rand_tensor(&mut rng, 3, 5, 1.0);
            let c = rand_tensor(&mut rng, 3, 5, scale);
            let (h2, c2) = cell.step(&x, &h, &c).unwrap();
            prop_assert_eq!(h2.shape(), (3, 5));
            prop_assert_eq!(c2.shape(), (3, 5));
            prop_assert!(h2.data().iter().all(|v| v.abs() < 1.0));
        }
    }
}
