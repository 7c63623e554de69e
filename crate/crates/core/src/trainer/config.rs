use sha2::{Digest, Sha256};

use crate::adgan::{Architecture, PenaltyMode, DEFAULT_LAMBDA};
use crate::batching::{NoiseSpec, SamplingStrategy};
use crate::error::{Error, Result};
use crate::features::CONSUMER_DIMS;

/// Training hyperparameters. The text form is `key = value` lines using the
/// field names below; architecture keys (`survey_groups`, `trunk_width`, ...)
/// may appear in the same file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Number of epochs.
    pub step: usize,
    pub size: usize,
    /// Discriminator steps per epoch.
    pub i_d: usize,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lr_d: f64,
    /// Learning rate of both the generator and the aligned discriminator.
    pub lr_gd: f64,
    pub mu: f64,
    pub sigma: f64,
    pub c: usize,
    pub strategy: SamplingStrategy,
    pub seed: u64,
    pub penalty_mode: PenaltyMode,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step: 1000,
            size: 64,
            i_d: 20,
            lambda: DEFAULT_LAMBDA,
            beta1: 0.5,
            beta2: 0.9,
            lr_d: 1e-4,
            lr_gd: 1e-3,
            mu: 0.0,
            sigma: 0.01,
            c: 5,
            strategy: SamplingStrategy::Oversample,
            seed: 0,
            penalty_mode: PenaltyMode::Generated,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    /// The published experiment settings.
    pub fn paper() -> Self {
        TrainConfig {
            step: 4000,
            lr_d: 1e-4,
            lr_gd: 1e-3,
            beta1: 0.5,
            beta2: 0.9,
            c: 5,
            ..TrainConfig::default()
        }
    }

    /// Settings used for the synthetic desk-scale experiments.
    pub fn desk() -> Self {
        TrainConfig {
            step: 1000,
            ..TrainConfig::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(TrainConfig::paper()),
            "desk" => Ok(TrainConfig::desk()),
            other => Err(Error::Config(format!("unknown preset {other:?} (desk, paper)"))),
        }
    }

    pub fn noise(&self) -> Result<NoiseSpec> {
        NoiseSpec::new(self.c, self.mu, self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("step", self.step), ("size", self.size), ("i_d", self.i_d)];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        for (name, lr) in [("lr_d", self.lr_d), ("lr_gd", self.lr_gd)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {lr}")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.c > CONSUMER_DIMS {
            return Err(Error::Config(format!(
                "c = {} exceeds the {CONSUMER_DIMS} consumer dims",
                self.c
            )));
        }
        self.noise()?;
        self.arch.validate()
    }

    fn scalars(&self) -> Vec<(&'static str, String)> {
        vec![
            ("step", self.step.to_string()),
            ("size", self.size.to_string()),
            ("i_d", self.i_d.to_string()),
            ("lambda", self.lambda.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("lr_d", self.lr_d.to_string()),
            ("lr_gd", self.lr_gd.to_string()),
            ("mu", self.mu.to_string()),
            ("sigma", self.sigma.to_string()),
            ("c", self.c.to_string()),
            ("strategy", self.strategy.to_string()),
            ("seed", self.seed.to_string()),
            ("penalty_mode", self.penalty_mode.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.scalars() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (k, v) in self.arch.to_kv() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Short hex digest of the text form, for provenance headers.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Applies one setting. `lr_g` is accepted for `lr_gd`.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = || Error::Config(format!("bad value {value:?} for {key}"));
        let u = || value.parse::<usize>().map_err(|_| bad());
        let f = || value.parse::<f64>().map_err(|_| bad());
        match key {
            "step" => self.step = u()?,
            "size" => self.size = u()?,
            "i_d" => self.i_d = u()?,
            "lambda" => self.lambda = f()?,
            "beta1" => self.beta1 = f()?,
            "beta2" => self.beta2 = f()?,
            "lr_d" => self.lr_d = f()?,
            "lr_gd" | "lr_g" => self.lr_gd = f()?,
            "mu" => self.mu = f()?,
            "sigma" => self.sigma = f()?,
            "c" => self.c = u()?,
            "strategy" => self.strategy = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "penalty_mode" => self.penalty_mode = value.parse()?,
            _ => {
                if !self.arch.apply_kv(key, value)? {
                    return Err(Error::Config(format!("unknown config key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Applies a `key = value` file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", n + 1)))?;
            self.apply(k.trim(), v)
                .map_err(|e| Error::Config(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }
}
