use serde::{Deserialize, Serialize};

use super::network::Network;
use super::tensor::Tensor;
use crate::error::{arg, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
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

/// Bias-corrected adaptive-moment optimizer state for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn for_network(config: AdamConfig, net: &Network) -> Self {
        Self::new(config, net.params())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::Shape(format!("tensor {i}: param {:?}, grad {:?}", p.shape(), g.shape())));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of tensor {i}")));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((pv, gv), mv), vv) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut()).zip(v.data_mut().iter_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut Network, online: &Network, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return arg(format!("tau must lie in [0, 1], got {tau}"));
    }
    if target.spec() != online.spec() {
        return Err(Error::Shape("soft update between networks of different specs".into()));
    }
    if tau == 0.0 {
        return Ok(());
    }
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        for (tv, ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = if tau == 1.0 { *ov } else { tau * ov + (1.0 - tau) * *tv };
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::filled(&[3], 0.7)];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        adam.step(&mut params, &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(params[0].data(), &[0.7; 3]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        // m_hat = g, v_hat = g^2 after one step, so the move is lr * g / (|g| + eps)
        for g in [1e-3, 0.5, 40.0] {
            let mut params = vec![Tensor::zeros(&[1])];
            let cfg = AdamConfig { lr: 0.01, ..Default::default() };
            let mut adam = Adam::new(cfg, &params);
            adam.step(&mut params, &[Tensor::filled(&[1], g)]).unwrap();
            let expected = -0.01 * g / (g + 1e-8);
            assert!((params[0].data()[0] - expected).abs() < 1e-15);
            assert!((params[0].data()[0] + 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut params = vec![Tensor::zeros(&[2])];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let bad = Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(adam.step(&mut params, &[bad]), Err(Error::NonFinite(_))));
        assert_eq!(adam.step_count(), 0);
    }
}
