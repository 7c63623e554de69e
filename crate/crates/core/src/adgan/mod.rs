//! ADGAN architecture: structural view embeddings, the generator mapping a
//! consumer model vector to a survey vector, and the two-channel
//! discriminator with a critic head and a four-way classifier head.

mod loss;
mod model;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use loss::{loss_d, loss_g_dalign, AlignBatch, AlignLoss, DiscriminatorBatch, Gradients, LossBreakdown};
pub use model::{classify, discriminate, generate, view_embed};

use crate::diffnet::{glorot_uniform, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::features::{CONSUMER_DIMS, NUM_CLASSES, SURVEY_QUESTIONS};

/// Default gradient-penalty weight.
pub const DEFAULT_LAMBDA: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CriticActivation {
    #[default]
    Linear,
    Sigmoid,
}

impl FromStr for CriticActivation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "sigmoid" => Ok(Self::Sigmoid),
            other => Err(Error::Config(format!("unknown critic activation {other:?}"))),
        }
    }
}

impl fmt::Display for CriticActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Sigmoid => "sigmoid",
        })
    }
}

/// Where the gradient penalty is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PenaltyMode {
    /// At the generated surveys.
    #[default]
    Generated,
    /// At random per-sample interpolates between real and generated surveys.
    Interpolate,
}

impl FromStr for PenaltyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "generated" => Ok(Self::Generated),
            "interpolate" => Ok(Self::Interpolate),
            other => Err(Error::Config(format!("unknown penalty mode {other:?}"))),
        }
    }
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Generated => "generated",
            Self::Interpolate => "interpolate",
        })
    }
}

/// Embedding over contiguous dimension groups: each group goes through its
/// own FC+ReLU, the results are concatenated and combined by a further
/// FC+ReLU. The flat variant is a single FC+ReLU over the whole input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewEmbeddingSpec {
    pub groups: Vec<usize>,
    pub group_width: usize,
    pub combined_width: usize,
    pub structured: bool,
}

impl ViewEmbeddingSpec {
    pub fn new(groups: Vec<usize>, group_width: usize, combined_width: usize) -> Result<Self> {
        let spec = ViewEmbeddingSpec {
            groups,
            group_width,
            combined_width,
            structured: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn flat(self) -> Self {
        ViewEmbeddingSpec {
            structured: false,
            ..self
        }
    }

    pub fn survey_default() -> Self {
        ViewEmbeddingSpec::new(vec![18, 17, 17], 16, 32).expect("valid default")
    }

    pub fn consumer_default() -> Self {
        ViewEmbeddingSpec::new(vec![3, 17], 16, 32).expect("valid default")
    }

    pub fn input_dim(&self) -> usize {
        self.groups.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.groups.contains(&0) {
            return Err(Error::Config(format!(
                "view embedding groups must be non-empty, got {:?}",
                self.groups
            )));
        }
        if self.group_width == 0 || self.combined_width == 0 {
            return Err(Error::Config("view embedding widths must be >= 1".into()));
        }
        Ok(())
    }

    fn init(&self, prefix: &str, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        if self.structured {
            for (k, &size) in self.groups.iter().enumerate() {
                dense(store, &format!("{prefix}.g{k}"), size, self.group_width, rng)?;
            }
            let concat = self.groups.len() * self.group_width;
            dense(store, &format!("{prefix}.comb"), concat, self.combined_width, rng)
        } else {
            dense(
                store,
                &format!("{prefix}.flat"),
                self.input_dim(),
                self.combined_width,
                rng,
            )
        }
    }
}

fn dense(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Result<()> {
    store.insert(format!("{name}.w"), glorot_uniform(fan_in, fan_out, rng))?;
    store.insert(format!("{name}.b"), Matrix::zeros(1, fan_out))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub survey: ViewEmbeddingSpec,
    pub consumer: ViewEmbeddingSpec,
    pub trunk_width: usize,
    pub critic: CriticActivation,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            survey: ViewEmbeddingSpec::survey_default(),
            consumer: ViewEmbeddingSpec::consumer_default(),
            trunk_width: 32,
            critic: CriticActivation::Linear,
        }
    }
}

impl Architecture {
    pub fn survey_dim(&self) -> usize {
        self.survey.input_dim()
    }

    pub fn consumer_dim(&self) -> usize {
        self.consumer.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.survey.validate()?;
        self.consumer.validate()?;
        if self.trunk_width == 0 {
            return Err(Error::Config("trunk width must be >= 1".into()));
        }
        Ok(())
    }

    /// Checks that the architecture matches the real feature dimensions.
    pub fn validate_for_data(&self) -> Result<()> {
        self.validate()?;
        if self.survey_dim() != SURVEY_QUESTIONS || self.consumer_dim() != CONSUMER_DIMS {
            return Err(Error::Config(format!(
                "architecture expects {} survey and {} consumer dims, data has {SURVEY_QUESTIONS} and {CONSUMER_DIMS}",
                self.survey_dim(),
                self.consumer_dim()
            )));
        }
        Ok(())
    }

    /// `key = value` lines describing the architecture.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let join = |g: &[usize]| g.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut out = Vec::new();
        for (name, spec) in [("survey", &self.survey), ("consumer", &self.consumer)] {
            out.push((format!("{name}_groups"), join(&spec.groups)));
            out.push((format!("{name}_group_width"), spec.group_width.to_string()));
            out.push((format!("{name}_combined_width"), spec.combined_width.to_string()));
            let kind = if spec.structured { "structured" } else { "flat" };
            out.push((format!("{name}_embedding"), kind.to_string()));
        }
        out.push(("trunk_width".into(), self.trunk_width.to_string()));
        out.push(("critic_activation".into(), self.critic.to_string()));
        out
    }

    /// Applies one `key = value` setting; returns false for unknown keys.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = |k: &str| Error::Config(format!("bad value {value:?} for {k}"));
        let parse_usize = |k: &str| value.trim().parse::<usize>().map_err(|_| bad(k));
        let (spec, field) = match key.split_once('_') {
            Some(("survey", f)) => (Some(&mut self.survey), f),
            Some(("consumer", f)) => (Some(&mut self.consumer), f),
            _ => (None, key),
        };
        match (spec, field) {
            (Some(spec), "groups") => {
                spec.groups = value
                    .split(',')
                    .map(|v| v.trim().parse::<usize>().map_err(|_| bad(key)))
                    .collect::<Result<_>>()?;
            }
            (Some(spec), "group_width") => spec.group_width = parse_usize(key)?,
            (Some(spec), "combined_width") => spec.combined_width = parse_usize(key)?,
            (Some(spec), "embedding") => {
                spec.structured = match value.trim() {
                    "structured" => true,
                    "flat" => false,
                    _ => return Err(bad(key)),
                }
            }
            (None, "trunk_width") => self.trunk_width = parse_usize(key)?,
            (None, "critic_activation") => self.critic = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// All ADGAN weights: generator (`gen.*`) and discriminator (`dis.*`).
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub arch: Architecture,
    pub store: ParamStore,
}

/// Name prefixes of the discriminator parameters co-trained with the
/// generator: survey embedding, trunk and classifier head.
const D_ALIGN_PREFIXES: [&str; 3] = ["dis.sv.", "dis.trunk.", "dis.cls."];

impl ParameterSet {
    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Architecture, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        arch.consumer.init("gen.cm", &mut store, rng)?;
        dense(
            &mut store,
            "gen.out",
            arch.consumer.combined_width,
            arch.survey_dim(),
            rng,
        )?;
        arch.survey.init("dis.sv", &mut store, rng)?;
        arch.consumer.init("dis.cm", &mut store, rng)?;
        let joint = arch.survey.combined_width + arch.consumer.combined_width;
        dense(&mut store, "dis.trunk", joint, arch.trunk_width, rng)?;
        dense(&mut store, "dis.critic", arch.trunk_width, 1, rng)?;
        dense(&mut store, "dis.cls", arch.trunk_width, NUM_CLASSES, rng)?;
        Ok(ParameterSet { arch, store })
    }

    fn ids_where(&self, pred: impl Fn(&str) -> bool) -> Vec<ParamId> {
        self.store
            .iter()
            .filter(|(_, n, _)| pred(n))
            .map(|(id, _, _)| id)
            .collect()
    }

    /// Generator weights (theta).
    pub fn generator_ids(&self) -> Vec<ParamId> {
        self.ids_where(|n| n.starts_with("gen."))
    }

    /// Discriminator weights (w), both heads included.
    pub fn discriminator_ids(&self) -> Vec<ParamId> {
        self.ids_where(|n| n.starts_with("dis."))
    }

    /// The aligned subset of the discriminator.
    pub fn d_align_ids(&self) -> Vec<ParamId> {
        self.ids_where(|n| D_ALIGN_PREFIXES.iter().any(|p| n.starts_with(p)))
    }

    pub fn critic_ids(&self) -> Vec<ParamId> {
        self.ids_where(|n| n.starts_with("dis.critic."))
    }

    pub fn is_d_align(&self, id: ParamId) -> bool {
        let name = self.store.name(id);
        D_ALIGN_PREFIXES.iter().any(|p| name.starts_with(p))
    }
}
