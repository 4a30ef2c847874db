use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        Self {
            first_moment: Tensor::zeros(shape),
            second_moment: Tensor::zeros(shape),
            step_count: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
///
/// With `checked`, a non-finite gradient is rejected before anything is
/// modified.
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamState, checked: bool) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != state.first_moment.shape() {
        return Err(Error::Shape {
            op: "adam_step",
            lhs: param.shape().to_vec(),
            rhs: grad.shape().to_vec(),
        });
    }
    if checked && !grad.is_finite() {
        return Err(Error::NonFinite { op: "adam_step" });
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    let m = state.first_moment.data_mut();
    let v = state.second_moment.data_mut();
    for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

/// Adam over an ordered group of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam {
    pub states: Vec<AdamState>,
    pub checked: bool,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, config: AdamConfig) -> Self {
        Self {
            states: params.into_iter().map(|p| AdamState::new(p.shape(), config)).collect(),
            checked: true,
        }
    }

    /// Update every parameter; all gradients are validated before any
    /// parameter changes.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer has {} parameters, got {} parameters and {} gradients",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        if self.checked && grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { op: "adam_step" });
        }
        for ((p, g), s) in params.into_iter().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s, false)?;
        }
        Ok(())
    }
}

/// Scale `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_caps_joint_norm() {
        let mut g = vec![Tensor::from_vec(vec![3.0]), Tensor::from_vec(vec![4.0])];
        assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
        assert_eq!(g[0].item(), 3.0);
        clip_global_norm(&mut g, 1.0);
        assert!((g[0].item() - 0.6).abs() < 1e-15 && (g[1].item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn group_step_validates_all_gradients_first() {
        let mut a = Tensor::from_vec(vec![1.0]);
        let mut b = Tensor::from_vec(vec![2.0]);
        let mut opt = Adam::new([&a, &b], AdamConfig::default());
        let grads = [Tensor::from_vec(vec![1.0]), Tensor::from_vec(vec![f64::INFINITY])];
        assert!(opt.step(vec![&mut a, &mut b], &grads).is_err());
        assert_eq!(a.item(), 1.0);
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_identity() {
        let mut p = Tensor::from_vec(vec![0.3, -1.2, 4.0]);
        let before = p.clone();
        let mut s = AdamState::new(&[3], AdamConfig::default());
        adam_step(&mut p, &Tensor::zeros(&[3]), &mut s, true).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = Tensor::from_vec(vec![1.0]);
        let mut s = AdamState::new(&[1], AdamConfig::default());
        adam_step(&mut p, &Tensor::from_vec(vec![2.0]), &mut s, true).unwrap();
        let (m0, v0) = (s.first_moment.item(), s.second_moment.item());
        adam_step(&mut p, &Tensor::zeros(&[1]), &mut s, true).unwrap();
        assert_eq!(s.first_moment.item(), 0.9 * m0);
        assert_eq!(s.second_moment.item(), 0.999 * v0);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::from_vec(vec![0.5]);
        let mut s = AdamState::new(&[1], AdamConfig::with_lr(1e-3));
        adam_step(&mut p, &Tensor::from_vec(vec![1.0]), &mut s, true).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((p.item() - expected).abs() < 1e-15);
        assert!((0.5 - p.item() - 1e-3).abs() < 1e-10);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = Tensor::from_vec(vec![0.1, 0.2]);
        let before = p.clone();
        let mut s = AdamState::new(&[2], AdamConfig::with_lr(0.0));
        for _ in 0..5 {
            adam_step(&mut p, &Tensor::from_vec(vec![3.0, -7.0]), &mut s, true).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn rejects_non_finite_gradient_when_checked() {
        let mut p = Tensor::from_vec(vec![0.0]);
        let mut s = AdamState::new(&[1], AdamConfig::default());
        let err = adam_step(&mut p, &Tensor::from_vec(vec![f64::NAN]), &mut s, true);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = Tensor::zeros(&[2]);
        let mut s = AdamState::new(&[2], AdamConfig::default());
        assert!(adam_step(&mut p, &Tensor::zeros(&[3]), &mut s, false).is_err());
    }
}
