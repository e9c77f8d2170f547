use rand::Rng;

use super::Tensor2;

/// Anything that owns named trainable tensors.
///
/// Visit order is the serialization order for checkpoints and the slot order
/// for optimizer state, so implementations must visit deterministically.
pub trait Parameters {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor2));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor2));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, t| n += t.data().len());
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params("", &mut |name, _| names.push(name));
        names
    }

    fn fill_params(&mut self, v: f64) {
        self.visit_params_mut("", &mut |_, t| t.fill(v));
    }

    /// A copy with every tensor zeroed; the natural gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.fill_params(0.0);
        z
    }

    /// Adds `other`'s tensors into `self` (both must have identical layout).
    fn add_params(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let mut src = Vec::new();
        other.visit_params("", &mut |_, t| src.push(t.clone()));
        let mut i = 0;
        self.visit_params_mut("", &mut |_, t| {
            t.add_assign(&src[i]).expect("identical parameter layout");
            i += 1;
        });
    }

    fn scale_params(&mut self, s: f64) {
        self.visit_params_mut("", &mut |_, t| t.scale(s));
    }

    fn all_params_finite(&self) -> bool {
        let mut ok = true;
        self.visit_params("", &mut |_, t| ok &= t.is_finite());
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform in ±√(6/(fan_in+fan_out)).
pub fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor2 {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor2::from_vec(fan_in, fan_out, data).expect("shape by construction")
}
