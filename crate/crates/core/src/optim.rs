//! Adam, AdaDelta and the per-epoch multiplicative learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub trait Optimizer {
    /// Apply one update. `params` and `grads` are matched by position and must
    /// keep the same order and shapes across calls. Nothing is modified if any
    /// gradient is non-finite.
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()>;

    /// Scale the step size for the following updates (schedule output).
    fn set_lr_multiplier(&mut self, multiplier: f64);
}

fn validate(params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape {
            op: "optimizer",
            left: vec![params.len()],
            right: vec![grads.len()],
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "optimizer",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient { param: i });
        }
    }
    Ok(())
}

fn zeros_like(params: &[&mut Tensor]) -> Vec<Vec<f64>> {
    params.iter().map(|p| vec![0.0; p.len()]).collect()
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    multiplier: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            multiplier: 1.0,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        validate(params, grads)?;
        if self.m.is_empty() {
            self.m = zeros_like(params);
            self.v = zeros_like(params);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let lr = self.lr * self.multiplier;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gv;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gv * gv;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    fn set_lr_multiplier(&mut self, multiplier: f64) {
        self.multiplier = multiplier;
    }
}

#[derive(Clone, Debug)]
pub struct AdaDelta {
    pub rho: f64,
    pub eps: f64,
    lr_multiplier: f64,
    sq_grad: Vec<Vec<f64>>,
    sq_delta: Vec<Vec<f64>>,
}

impl Default for AdaDelta {
    fn default() -> Self {
        Self::new(0.9, 1e-6)
    }
}

impl AdaDelta {
    pub fn new(rho: f64, eps: f64) -> Self {
        Self {
            rho,
            eps,
            lr_multiplier: 1.0,
            sq_grad: Vec::new(),
            sq_delta: Vec::new(),
        }
    }
}

impl Optimizer for AdaDelta {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        validate(params, grads)?;
        if self.sq_grad.is_empty() {
            self.sq_grad = zeros_like(params);
            self.sq_delta = zeros_like(params);
        }
        let rho = self.rho;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (eg, ed) = (&mut self.sq_grad[k], &mut self.sq_delta[k]);
            for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                eg[i] = rho * eg[i] + (1.0 - rho) * gv * gv;
                let delta = -((ed[i] + self.eps).sqrt() / (eg[i] + self.eps).sqrt())
                    * gv
                    * self.lr_multiplier;
                ed[i] = rho * ed[i] + (1.0 - rho) * delta * delta;
                *pv += delta;
            }
        }
        Ok(())
    }

    fn set_lr_multiplier(&mut self, multiplier: f64) {
        self.lr_multiplier = multiplier;
    }
}

/// `base_lr * gamma^epoch`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub gamma: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base_lr: 1.0,
            gamma: 1.0,
        }
    }
}

impl LrSchedule {
    pub fn new(base_lr: f64, gamma: f64) -> Result<Self> {
        let s = Self { base_lr, gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "schedule needs base_lr > 0 and 0 < gamma <= 1, got {} and {}",
                self.base_lr, self.gamma
            )));
        }
        Ok(())
    }

    /// Multiplier for `epoch`. The product is rounded to 15 significant
    /// digits, so a decimal gamma such as 0.7 yields exactly the decimal
    /// values 1.0, 0.7, 0.49, 0.343 rather than their binary rounding drift.
    pub fn lr(&self, epoch: usize) -> f64 {
        let raw = self.base_lr * self.gamma.powi(epoch as i32);
        format!("{raw:.14e}").parse().unwrap_or(raw)
    }
}
