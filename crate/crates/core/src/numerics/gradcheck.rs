//! Central finite differences for verifying analytic gradients.
//!
//! Deliberately naive: perturbs one coordinate at a time and re-evaluates the
//! scalar objective, so it shares no code path with the reverse-mode passes.

use super::{Parameters, Tensor2};

/// `∂f/∂x` estimated as `(f(x+h) - f(x-h)) / 2h` for every entry of `x`.
pub fn central_difference(x: &Tensor2, h: f64, mut f: impl FnMut(&Tensor2) -> f64) -> Tensor2 {
    let mut grad = Tensor2::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.data().len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Finite-difference gradient of `f` with respect to every parameter of `model`.
/// Entries are returned in visit order.
pub fn central_difference_params<P: Parameters + Clone>(
    model: &P,
    h: f64,
    mut f: impl FnMut(&P) -> f64,
) -> Vec<(String, Tensor2)> {
    let mut shapes = Vec::new();
    model.visit_params("", &mut |name, t| shapes.push((name, t.rows(), t.cols())));
    let mut out = Vec::with_capacity(shapes.len());
    let mut probe = model.clone();
    for (slot, (name, rows, cols)) in shapes.into_iter().enumerate() {
        let mut grad = Tensor2::zeros(rows, cols);
        for i in 0..rows * cols {
            let mut orig = 0.0;
            set_entry(&mut probe, slot, i, |v| {
                orig = *v;
                *v += h
            });
            let fp = f(&probe);
            set_entry(&mut probe, slot, i, |v| *v = orig - h);
            let fm = f(&probe);
            set_entry(&mut probe, slot, i, |v| *v = orig);
            grad.data_mut()[i] = (fp - fm) / (2.0 * h);
        }
        out.push((name, grad));
    }
    out
}

fn set_entry<P: Parameters>(model: &mut P, slot: usize, index: usize, mut g: impl FnMut(&mut f64)) {
    let mut k = 0;
    model.visit_params_mut("", &mut |_, t| {
        if k == slot {
            g(&mut t.data_mut()[index]);
        }
        k += 1;
    });
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both are exactly zero.
pub fn max_relative_error(a: &Tensor2, b: &Tensor2) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Relative error of each analytic gradient group against its numerical twin.
pub fn compare_param_grads<P: Parameters>(analytic: &P, numeric: &[(String, Tensor2)]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut k = 0;
    analytic.visit_params("", &mut |name, t| {
        let (nname, nt) = &numeric[k];
        debug_assert_eq!(&name, nname);
        out.push((name, max_relative_error(t, nt)));
        k += 1;
    });
    out
}
