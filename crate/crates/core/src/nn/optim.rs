use super::params::{ParamId, ParamStore};
use super::tape::Grads;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Plain SGD with an L2 penalty applied in gradient form:
/// `w <- w - eta * dE/dw - eta * 2 * lambda * w`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SgdL2 {
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for SgdL2 {
    fn default() -> Self {
        Self { learning_rate: 0.01, l2: 1e-4 }
    }
}

/// One update of `weights` in place. Refuses non-finite gradients and leaves
/// the weights untouched in that case.
pub fn sgd_l2_step(weights: &mut Tensor, gradient: &Tensor, eta: f64, lambda: f64) -> Result<()> {
    if !(eta > 0.0) {
        return Err(Error::Invalid(format!("learning rate must be positive, got {eta}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Invalid(format!("L2 coefficient must be non-negative, got {lambda}")));
    }
    weights.expect_same_shape(gradient)?;
    if !gradient.all_finite() {
        return Err(Error::Numeric("refusing SGD step on a non-finite gradient".into()));
    }
    for (w, g) in weights.data_mut().iter_mut().zip(gradient.data()) {
        *w -= eta * g + eta * 2.0 * lambda * *w;
    }
    Ok(())
}

impl SgdL2 {
    /// Updates every parameter in `trainable` that received a gradient.
    pub fn apply(&self, store: &mut ParamStore, grads: &Grads, trainable: &[ParamId]) -> Result<()> {
        // check everything first so a bad gradient leaves the model untouched
        let mut updates = Vec::with_capacity(trainable.len());
        for &id in trainable {
            if let Some(g) = grads.param(id) {
                if !g.all_finite() {
                    return Err(Error::Numeric(format!("non-finite gradient for {}", store.name(id))));
                }
                updates.push((id, g));
            }
        }
        for (id, g) in updates {
            sgd_l2_step(store.get_mut(id), &g, self.learning_rate, self.l2)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lambda_is_plain_step() {
        let mut w = Tensor::from_vec(vec![1.0, -2.0]);
        sgd_l2_step(&mut w, &Tensor::from_vec(vec![0.5, 1.0]), 0.1, 0.0).unwrap();
        assert_eq!(w.data(), &[1.0 - 0.05, -2.0 - 0.1]);
    }

    #[test]
    fn zero_gradient_shrinks_toward_zero() {
        let mut w = Tensor::from_vec(vec![1.0, -2.0]);
        sgd_l2_step(&mut w, &Tensor::zeros(&[2]), 0.1, 0.5).unwrap();
        // factor 1 - 2 * 0.1 * 0.5 = 0.9
        assert!((w.data()[0] - 0.9).abs() < 1e-15);
        assert!((w.data()[1] + 1.8).abs() < 1e-15);
    }

    #[test]
    fn quadratic_step_matches_closed_form() {
        // E(w) = 0.5 * k * (w - c)^2, dE/dw = k (w - c)
        let (k, c, w0, eta, lambda) = (3.0, 0.7, -1.3, 0.05, 0.2);
        let mut w = Tensor::from_vec(vec![w0]);
        let g = Tensor::from_vec(vec![k * (w0 - c)]);
        sgd_l2_step(&mut w, &g, eta, lambda).unwrap();
        let expected = w0 * (1.0 - eta * k - 2.0 * eta * lambda) + eta * k * c;
        assert!((w.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_refused() {
        let mut w = Tensor::from_vec(vec![1.0]);
        let err = sgd_l2_step(&mut w, &Tensor::from_vec(vec![f64::NAN]), 0.1, 0.0);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!(w.data(), &[1.0]);
    }
}
