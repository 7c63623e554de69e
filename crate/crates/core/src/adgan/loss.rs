use rand::Rng;

use super::model::{build_consumer_channel, build_discriminator, build_generator, clamp_unit};
use super::{ParameterSet, PenaltyMode};
use crate::diffnet::{GradientPenalty, Graph, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Gradients for a subset of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub ids: Vec<ParamId>,
    pub values: Vec<Matrix>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.ids.iter().position(|&i| i == id).map(|k| &self.values[k])
    }

    /// Gradients for `ids`, zero for parameters this set does not cover.
    pub fn select(&self, ids: &[ParamId], store: &ParamStore) -> Vec<Matrix> {
        ids.iter()
            .map(|&id| match self.get(id) {
                Some(g) => g.clone(),
                None => {
                    let (r, c) = store.get(id).shape();
                    Matrix::zeros(r, c)
                }
            })
            .collect()
    }
}

/// Parts of the discriminator loss.
///
/// `total = wasserstein_term + gradient_penalty_term
///          + (classification_fake + classification_real) / 2`
/// with `gradient_penalty_term = lambda * penalty`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    /// Mean critic on generated minus mean critic on real surveys.
    pub wasserstein_term: f64,
    pub gradient_penalty_term: f64,
    pub classification_fake: f64,
    pub classification_real: f64,
    pub total: f64,
    /// Unweighted penalty.
    pub penalty: f64,
    /// Samples whose critic had an exactly zero input gradient.
    pub degenerate: usize,
}

impl LossBreakdown {
    pub fn new(wasserstein: f64, lambda: f64, penalty: f64, cls_fake: f64, cls_real: f64) -> Self {
        let gp = lambda * penalty;
        LossBreakdown {
            wasserstein_term: wasserstein,
            gradient_penalty_term: gp,
            classification_fake: cls_fake,
            classification_real: cls_real,
            total: wasserstein + gp + 0.5 * (cls_fake + cls_real),
            penalty,
            degenerate: 0,
        }
    }

    pub fn parts_sum(&self) -> f64 {
        self.wasserstein_term + self.gradient_penalty_term + 0.5 * (self.classification_fake + self.classification_real)
    }
}

/// A discriminator batch: consumers with real surveys and generated ones.
pub struct DiscriminatorBatch<'a> {
    pub u: &'a Matrix,
    pub real: &'a Matrix,
    pub fake: &'a Matrix,
    pub labels: &'a [usize],
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Discriminator loss and its gradient for every discriminator parameter.
/// Generated surveys enter as constants, so nothing flows to the generator.
pub fn loss_d(
    params: &ParameterSet,
    batch: &DiscriminatorBatch<'_>,
    lambda: f64,
    mode: PenaltyMode,
    rng: &mut impl Rng,
) -> Result<(LossBreakdown, Gradients)> {
    let n = batch.u.rows();
    if n == 0 {
        return Err(Error::Data("empty discriminator batch".into()));
    }
    if batch.real.rows() != n || batch.fake.rows() != n || batch.labels.len() != n {
        return Err(Error::Shape("discriminator batch parts disagree on size".into()));
    }
    let (sd, ud) = (params.arch.survey_dim(), params.arch.consumer_dim());

    let mut graph = Graph::new();
    let u = graph.input(n, ud);
    let real = graph.input(n, sd);
    let fake = graph.input(n, sd);
    let cm = build_consumer_channel(&mut graph, params, u)?;
    let d_real = build_discriminator(&mut graph, params, cm, real)?;
    let d_fake = build_discriminator(&mut graph, params, cm, fake)?;

    let mean_fake = graph.mean(d_fake.critic);
    let mean_real = graph.mean(d_real.critic);
    let wasserstein = graph.combine(mean_fake, 1.0, mean_real, -1.0)?;
    let ce_fake = graph.softmax_cross_entropy(d_fake.logits, batch.labels)?;
    let ce_real = graph.softmax_cross_entropy(d_real.logits, batch.labels)?;
    let ce = graph.combine(ce_fake, 0.5, ce_real, 0.5)?;
    let rest = graph.combine(wasserstein, 1.0, ce, 1.0)?;

    let mut inputs = vec![batch.u.clone(), batch.real.clone(), batch.fake.clone()];
    let penalty = match mode {
        PenaltyMode::Generated => GradientPenalty::attach(&mut graph, d_fake.critic, fake)?,
        PenaltyMode::Interpolate => {
            let mixed = graph.input(n, sd);
            let d_mixed = build_discriminator(&mut graph, params, cm, mixed)?;
            let mut m = batch.fake.clone();
            for r in 0..n {
                let eps: f64 = rng.random();
                let real_row = batch.real.row(r);
                for (v, &rv) in m.row_mut(r).iter_mut().zip(real_row) {
                    *v = eps * rv + (1.0 - eps) * *v;
                }
            }
            inputs.push(m);
            GradientPenalty::attach(&mut graph, d_mixed.critic, mixed)?
        }
    };

    let ids = params.discriminator_ids();
    let mut tape = graph.forward(&params.store, &inputs)?;
    let mut grads = graph.grad_params(&tape, rest, &params.store, &ids)?;
    let gp = penalty.evaluate(&graph, &mut tape, &params.store, &ids)?;
    for (g, extra) in grads.iter_mut().zip(&gp.grads) {
        g.add_scaled(extra, lambda);
    }

    let mut breakdown = LossBreakdown::new(
        tape.scalar(wasserstein)?,
        lambda,
        gp.penalty,
        tape.scalar(ce_fake)?,
        tape.scalar(ce_real)?,
    );
    breakdown.degenerate = gp.degenerate;
    finite(breakdown.total, "discriminator loss")?;
    Ok((breakdown, Gradients { ids, values: grads }))
}

/// Batch for the generator / aligned-discriminator step.
pub struct AlignBatch<'a> {
    /// Consumer vectors without surveys.
    pub u_unpaired: &'a Matrix,
    pub labels_unpaired: &'a [usize],
    /// Consumers with surveys.
    pub u_paired: &'a Matrix,
    pub s_paired: &'a Matrix,
    pub labels_paired: &'a [usize],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignLoss {
    /// `-mean critic(G(U))` over the unpaired consumers.
    pub adversarial: f64,
    /// Paired-to-unpaired count ratio weighting the generated-sample class loss.
    pub weight: f64,
    pub classification_fake: f64,
    pub classification_real: f64,
    pub total: f64,
}

/// Generator + aligned-discriminator loss. Gradients cover the generator
/// and the aligned discriminator subset only.
pub fn loss_g_dalign(params: &ParameterSet, batch: &AlignBatch<'_>) -> Result<(AlignLoss, Gradients)> {
    let nl = batch.u_unpaired.rows();
    let nf = batch.u_paired.rows();
    if nl == 0 || nf == 0 {
        return Err(Error::Data(format!(
            "alignment batch needs both populations, got {nf} paired and {nl} unpaired"
        )));
    }
    if batch.labels_unpaired.len() != nl || batch.labels_paired.len() != nf || batch.s_paired.rows() != nf {
        return Err(Error::Shape("alignment batch parts disagree on size".into()));
    }
    let weight = nf as f64 / nl as f64;
    let (sd, ud) = (params.arch.survey_dim(), params.arch.consumer_dim());

    let mut graph = Graph::new();
    let ul = graph.input(nl, ud);
    let uf = graph.input(nf, ud);
    let sf = graph.input(nf, sd);
    let generated = build_generator(&mut graph, params, ul)?;
    let cm_l = build_consumer_channel(&mut graph, params, ul)?;
    let d_fake = build_discriminator(&mut graph, params, cm_l, generated)?;
    let cm_f = build_consumer_channel(&mut graph, params, uf)?;
    let d_real = build_discriminator(&mut graph, params, cm_f, sf)?;

    let mean_fake = graph.mean(d_fake.critic);
    let ce_fake = graph.softmax_cross_entropy(d_fake.logits, batch.labels_unpaired)?;
    let ce_real = graph.softmax_cross_entropy(d_real.logits, batch.labels_paired)?;
    let adv_cls = graph.combine(mean_fake, -1.0, ce_fake, weight)?;
    let total = graph.combine(adv_cls, 1.0, ce_real, 1.0)?;

    let u_l = clamp_unit(batch.u_unpaired);
    let u_f = clamp_unit(batch.u_paired);
    let tape = graph.forward(&params.store, &[u_l, u_f, batch.s_paired.clone()])?;

    let mut ids = params.generator_ids();
    ids.extend(params.d_align_ids());
    let values = graph.grad_params(&tape, total, &params.store, &ids)?;
    let loss = AlignLoss {
        adversarial: -tape.scalar(mean_fake)?,
        weight,
        classification_fake: tape.scalar(ce_fake)?,
        classification_real: tape.scalar(ce_real)?,
        total: finite(tape.scalar(total)?, "generator/alignment loss")?,
    };
    Ok((loss, Gradients { ids, values }))
}
