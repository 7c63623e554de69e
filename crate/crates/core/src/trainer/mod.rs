//! Adversarial training loop: `i_d` discriminator steps on class-sampled
//! paired batches, then one generator + aligned-discriminator step on a
//! mixed batch, per epoch.

mod checkpoint;
mod config;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{
    checkpoint_load, checkpoint_save, checkpoint_save_with, checkpoint_text, checkpoint_text_with, parse_checkpoint,
};
pub use config::TrainConfig;

use crate::adgan::{
    generate, loss_d, loss_g_dalign, AlignBatch, AlignLoss, DiscriminatorBatch, LossBreakdown, ParameterSet,
};
use crate::batching::{fuse_rows, sample_batch_b, BatchASampler};
use crate::dataset::TrainingSet;
use crate::diffnet::{AdamConfig, AdamState, Matrix};
use crate::error::{Error, Result};

/// Losses of one epoch. The discriminator entry averages the `i_d` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub discriminator: LossBreakdown,
    pub align: AlignLoss,
}

#[derive(Clone, Debug)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub discriminator_steps: u64,
    pub generator_steps: u64,
    pub aligned_steps: u64,
    /// Discriminator samples with an exactly zero critic input gradient.
    pub degenerate_events: usize,
    pub wall_clock: Duration,
}

/// Equality ignores `wall_clock`.
impl PartialEq for TrainLog {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
            && self.discriminator_steps == other.discriminator_steps
            && self.generator_steps == other.generator_steps
            && self.aligned_steps == other.aligned_steps
            && self.degenerate_events == other.degenerate_events
    }
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,d_total,d_wasserstein,d_gradient_penalty,d_cls_fake,d_cls_real,d_degenerate,g_total,g_adversarial,g_cls_fake,g_cls_real,g_weight";

    /// One CSV line per epoch (no header), full precision.
    pub fn csv_rows(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| {
                let d = &r.discriminator;
                let g = &r.align;
                format!(
                    "{},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e},{:e},{:e},{:e}",
                    r.epoch,
                    d.total,
                    d.wasserstein_term,
                    d.gradient_penalty_term,
                    d.classification_fake,
                    d.classification_real,
                    d.degenerate,
                    g.total,
                    g.adversarial,
                    g.classification_fake,
                    g.classification_real,
                    g.weight
                )
            })
            .collect()
    }
}

fn mean_breakdown(steps: &[LossBreakdown]) -> LossBreakdown {
    let n = steps.len() as f64;
    let avg = |f: fn(&LossBreakdown) -> f64| steps.iter().map(f).sum::<f64>() / n;
    LossBreakdown {
        wasserstein_term: avg(|b| b.wasserstein_term),
        gradient_penalty_term: avg(|b| b.gradient_penalty_term),
        classification_fake: avg(|b| b.classification_fake),
        classification_real: avg(|b| b.classification_real),
        total: avg(|b| b.total),
        penalty: avg(|b| b.penalty),
        degenerate: steps.iter().map(|b| b.degenerate).sum(),
    }
}

fn abort(epoch: usize, phase: &str, e: Error) -> Error {
    match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}, {phase}: {msg}")),
        other => other,
    }
}

/// Points in an epoch at which `train_observed` reports the parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainEvent {
    /// After discriminator update `step` (1-based) of `epoch`.
    Discriminator { epoch: usize, step: usize },
    /// After the aligned-discriminator update.
    Aligned { epoch: usize },
    /// After the generator update, which ends the epoch.
    Generator { epoch: usize },
}

/// Trains a fresh parameter set. Everything random (initialisation,
/// sampling, noise) derives from `config.seed`.
pub fn train(data: &TrainingSet, config: &TrainConfig) -> Result<(ParameterSet, TrainLog)> {
    train_observed(data, config, |_, _| {})
}

/// `train`, calling `observe` after every parameter update.
pub fn train_observed(
    data: &TrainingSet,
    config: &TrainConfig,
    mut observe: impl FnMut(TrainEvent, &ParameterSet),
) -> Result<(ParameterSet, TrainLog)> {
    config.validate()?;
    data.validate()?;
    config.arch.validate_for_data()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParameterSet::init(config.arch.clone(), &mut rng)?;

    let d_ids = params.discriminator_ids();
    let align_ids = params.d_align_ids();
    let gen_ids = params.generator_ids();
    let mut adam_d = AdamState::new(
        AdamConfig::new(config.lr_d, config.beta1, config.beta2)?,
        &params.store,
        d_ids.clone(),
    )?;
    let gd = AdamConfig::new(config.lr_gd, config.beta1, config.beta2)?;
    let mut adam_align = AdamState::new(gd, &params.store, align_ids.clone())?;
    let mut adam_g = AdamState::new(gd, &params.store, gen_ids.clone())?;

    let noise = config.noise()?;
    let mut sampler = BatchASampler::new(&data.paired_labels, config.strategy, config.size)?;
    let mut records = Vec::with_capacity(config.step);
    let mut degenerate_events = 0;

    for epoch in 1..=config.step {
        let mut d_steps = Vec::with_capacity(config.i_d);
        for step in 1..=config.i_d {
            let idx = sampler.next_batch(&mut rng)?;
            let u = fuse_rows(&data.paired_u.select_rows(&idx), &noise, &mut rng)?.map(|v| v.clamp(0.0, 1.0));
            let real = data.paired_s.select_rows(&idx);
            let labels: Vec<usize> = idx.iter().map(|&i| data.paired_labels[i]).collect();
            let fake = generate(&params, &u).map_err(|e| abort(epoch, "generator", e))?;
            let batch = DiscriminatorBatch {
                u: &u,
                real: &real,
                fake: &fake,
                labels: &labels,
            };
            let (breakdown, grads) = loss_d(&params, &batch, config.lambda, config.penalty_mode, &mut rng)
                .map_err(|e| abort(epoch, "discriminator step", e))?;
            let g = grads.select(&d_ids, &params.store);
            adam_d
                .step(&mut params.store, &g)
                .map_err(|e| abort(epoch, "discriminator update", e))?;
            observe(TrainEvent::Discriminator { epoch, step }, &params);
            degenerate_events += breakdown.degenerate;
            d_steps.push(breakdown);
        }

        let b = sample_batch_b(&data.paired_labels, &data.unpaired_labels, config.size, &mut rng)?;
        let u_l = data.unpaired_u.select_rows(&b.unpaired);
        let labels_l: Vec<usize> = b.unpaired.iter().map(|&i| data.unpaired_labels[i]).collect();
        let u_f = data.paired_u.select_rows(&b.paired);
        let s_f = fuse_rows(&data.paired_s.select_rows(&b.paired), &noise, &mut rng)?;
        let labels_f: Vec<usize> = b.paired.iter().map(|&i| data.paired_labels[i]).collect();
        let batch = AlignBatch {
            u_unpaired: &u_l,
            labels_unpaired: &labels_l,
            u_paired: &u_f,
            s_paired: &s_f,
            labels_paired: &labels_f,
        };
        let (align, grads) = loss_g_dalign(&params, &batch).map_err(|e| abort(epoch, "generator step", e))?;
        let (g_align, g_gen) = (
            grads.select(&align_ids, &params.store),
            grads.select(&gen_ids, &params.store),
        );
        adam_align
            .step(&mut params.store, &g_align)
            .map_err(|e| abort(epoch, "aligned update", e))?;
        observe(TrainEvent::Aligned { epoch }, &params);
        adam_g
            .step(&mut params.store, &g_gen)
            .map_err(|e| abort(epoch, "generator update", e))?;
        observe(TrainEvent::Generator { epoch }, &params);

        records.push(EpochRecord {
            epoch,
            discriminator: mean_breakdown(&d_steps),
            align,
        });
    }

    let log = TrainLog {
        records,
        discriminator_steps: adam_d.steps(),
        generator_steps: adam_g.steps(),
        aligned_steps: adam_align.steps(),
        degenerate_events,
        wall_clock: started.elapsed(),
    };
    Ok((params, log))
}

/// Predicted classes for consumers with surveys.
pub fn predict(params: &ParameterSet, u: &Matrix, s: &Matrix) -> Result<Vec<usize>> {
    crate::adgan::classify(params, u, s)
}
