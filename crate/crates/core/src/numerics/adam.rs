use alloc::vec::Vec;

use super::math;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moments and step count for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
}

impl Moments {
    pub fn new(like: &Tensor) -> Self {
        Self {
            m: Tensor::zeros(like.rows(), like.cols()),
            v: Tensor::zeros(like.rows(), like.cols()),
            t: 0,
        }
    }
}

/// Adam with bias correction. Moments are tracked per parameter, so a
/// parameter that sits out a step keeps its own step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub moments: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self { config, moments: params.iter().map(Moments::new).collect() }
    }

    /// Applies one update to the parameters at `indices`, whose gradients are
    /// given in the same order.
    pub fn step_subset(&mut self, params: &mut [Tensor], indices: &[usize], grads: &[Option<&Tensor>]) -> Result<()> {
        if indices.len() != grads.len() {
            return Err(Error::InvalidParameter("one gradient per updated parameter".into()));
        }
        for (&i, g) in indices.iter().zip(grads) {
            let g = g.ok_or_else(|| Error::MissingGradient(alloc::format!("#{i}")))?;
            let mom = self.moments.get(i).ok_or(Error::IndexOutOfBounds { op: "adam_step", index: i, len: self.moments.len() })?;
            let p = params.get(i).ok_or(Error::IndexOutOfBounds { op: "adam_step", index: i, len: params.len() })?;
            if p.shape() != g.shape() || p.shape() != mom.m.shape() {
                return Err(Error::ShapeMismatch { op: "adam_step", left: p.shape(), right: g.shape() });
            }
        }
        for (&i, g) in indices.iter().zip(grads) {
            adam_update(&self.config, &mut params[i], g.expect("checked above"), &mut self.moments[i]);
        }
        Ok(())
    }

    /// Updates every parameter; each must come with a gradient.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Option<&Tensor>]) -> Result<()> {
        if params.len() != self.moments.len() || grads.len() != params.len() {
            return Err(Error::InvalidParameter("parameter/gradient count mismatch".into()));
        }
        let idx: Vec<usize> = (0..params.len()).collect();
        self.step_subset(params, &idx, grads)
    }
}

fn adam_update(cfg: &AdamConfig, p: &mut Tensor, g: &Tensor, mom: &mut Moments) {
    mom.t += 1;
    let t = mom.t as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for (((x, &gi), m), v) in p
        .data_mut()
        .iter_mut()
        .zip(g.data())
        .zip(mom.m.data_mut())
        .zip(mom.v.data_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *x -= cfg.lr * m_hat / (math::sqrt(v_hat) + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = vec![Tensor::from_rows(&[[1.0, -1.0, 0.5]]).unwrap()];
        let g = Tensor::from_rows(&[[3.0, -0.2, 10.0]]).unwrap();
        let mut opt = OptimizerState::new(AdamConfig::default(), &params);
        opt.step(&mut params, &[Some(&g)]).unwrap();
        let d: Vec<f64> = params[0].data().iter().zip([1.0, -1.0, 0.5]).map(|(a, b)| a - b).collect();
        for (delta, sign) in d.iter().zip([1.0, -1.0, 1.0]) {
            assert!((delta + 1e-3 * sign).abs() < 1e-8, "{delta}");
        }
        assert_eq!(opt.moments[0].t, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::from_rows(&[[1.0, 2.0]]).unwrap()];
        let g = Tensor::zeros(1, 2);
        let mut opt = OptimizerState::new(AdamConfig::default(), &params);
        opt.step(&mut params, &[Some(&g)]).unwrap();
        assert_eq!(params[0].data(), &[1.0, 2.0]);
    }

    #[test]
    fn second_step_not_larger_under_constant_gradient() {
        // closed-form recurrence: m_t = (1-b1^t) g, v_t = (1-b2^t) g^2, so the
        // bias-corrected step is lr * |g| / (|g| + eps) at every t.
        let cfg = AdamConfig::default();
        let g0 = 0.37_f64;
        let closed = |t: i32| {
            let m = (1.0 - cfg.beta1.powi(t)) * g0 / (1.0 - cfg.beta1.powi(t));
            let v = (1.0 - cfg.beta2.powi(t)) * g0 * g0 / (1.0 - cfg.beta2.powi(t));
            cfg.lr * m / (v.sqrt() + cfg.eps)
        };
        let mut params = vec![Tensor::scalar(0.0)];
        let g = Tensor::scalar(g0);
        let mut opt = OptimizerState::new(cfg, &params);
        opt.step(&mut params, &[Some(&g)]).unwrap();
        let first = -params[0].item();
        opt.step(&mut params, &[Some(&g)]).unwrap();
        let second = -params[0].item() - first;
        assert!((first - closed(1)).abs() < 1e-12);
        assert!((second - closed(2)).abs() < 1e-12);
        assert!(second <= first + 1e-9);
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut params = vec![Tensor::scalar(0.0), Tensor::scalar(1.0)];
        let g = Tensor::scalar(1.0);
        let mut opt = OptimizerState::new(AdamConfig::default(), &params);
        assert!(matches!(opt.step(&mut params, &[Some(&g), None]), Err(Error::MissingGradient(_))));
    }
}
