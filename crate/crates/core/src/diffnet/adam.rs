use super::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let cfg = AdamConfig {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("adam lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("adam {name} must be in [0,1), got {b}")));
            }
        }
        Ok(())
    }
}

/// Adam moments for a fixed subset of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    targets: Vec<ParamId>,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore, targets: Vec<ParamId>) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Matrix> = targets
            .iter()
            .map(|&id| {
                let (r, c) = params.get(id).shape();
                Matrix::zeros(r, c)
            })
            .collect();
        Ok(AdamState {
            config,
            targets,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn targets(&self) -> &[ParamId] {
        &self.targets
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One bias-corrected Adam update; `grads` align with [`Self::targets`].
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix]) -> Result<()> {
        if grads.len() != self.targets.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.targets.len()
            )));
        }
        for (k, (g, &id)) in grads.iter().zip(&self.targets).enumerate() {
            if g.shape() != params.get(id).shape() {
                return Err(Error::Shape(format!(
                    "gradient {:?} for parameter {} {:?}",
                    g.shape(),
                    params.name(id),
                    params.get(id).shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient #{k} ({})", params.name(id))));
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, &id) in self.targets.iter().enumerate() {
            let g = grads[k].data();
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            let p = params.get_mut(id).data_mut();
            for j in 0..g.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
