//! Batch construction for the two training phases and Gaussian noise fusion.
//!
//! Samplers work on indices: `BatchASampler` yields indices into the paired
//! population, `sample_batch_b` indices into both populations.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diffnet::Matrix;
use crate::error::{Error, Result};
use crate::features::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplingStrategy {
    Random,
    Oversample,
    Undersample,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 3] = [
        SamplingStrategy::Random,
        SamplingStrategy::Undersample,
        SamplingStrategy::Oversample,
    ];

    /// Model-variant name used in reports.
    pub fn variant_name(self) -> &'static str {
        match self {
            SamplingStrategy::Random => "RADGAN",
            SamplingStrategy::Undersample => "UADGAN",
            SamplingStrategy::Oversample => "OADGAN",
        }
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(SamplingStrategy::Random),
            "over" | "oversample" => Ok(SamplingStrategy::Oversample),
            "under" | "undersample" => Ok(SamplingStrategy::Undersample),
            other => Err(Error::Config(format!(
                "unknown sampling strategy {other:?} (random, over, under)"
            ))),
        }
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingStrategy::Random => "random",
            SamplingStrategy::Oversample => "over",
            SamplingStrategy::Undersample => "under",
        })
    }
}

fn class_members(labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        members
            .get_mut(l)
            .ok_or_else(|| Error::Data(format!("label {l} outside 0..{NUM_CLASSES}")))?
            .push(i);
    }
    Ok(members)
}

pub fn class_counts(labels: &[usize]) -> [usize; NUM_CLASSES] {
    let mut c = [0; NUM_CLASSES];
    for &l in labels {
        c[l] += 1;
    }
    c
}

/// One pass of the sampling pool. Oversampling replicates each class by
/// exact copies (cycling through a shuffled member list) up to the majority
/// count; undersampling draws the minority count from every class.
pub fn build_pool(labels: &[usize], strategy: SamplingStrategy, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::Data("cannot sample from an empty population".into()));
    }
    let members = class_members(labels)?;
    let mut pool = Vec::new();
    match strategy {
        SamplingStrategy::Random => pool.extend(0..labels.len()),
        SamplingStrategy::Oversample | SamplingStrategy::Undersample => {
            if let Some(k) = members.iter().position(Vec::is_empty) {
                return Err(Error::Data(format!(
                    "class {k} absent; {strategy} sampling needs every class"
                )));
            }
            let sizes = members.iter().map(Vec::len);
            let target = if strategy == SamplingStrategy::Oversample {
                sizes.max().unwrap_or(0)
            } else {
                sizes.min().unwrap_or(0)
            };
            for class in &members {
                let mut order = class.clone();
                order.shuffle(rng);
                pool.extend(order.iter().cycle().take(target));
            }
        }
    }
    pool.shuffle(rng);
    Ok(pool)
}

/// Streams discriminator batches from successive shuffled pools.
#[derive(Clone, Debug)]
pub struct BatchASampler {
    labels: Vec<usize>,
    strategy: SamplingStrategy,
    size: usize,
    pool: Vec<usize>,
    cursor: usize,
    pools_built: usize,
}

impl BatchASampler {
    pub fn new(labels: &[usize], strategy: SamplingStrategy, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if labels.is_empty() {
            return Err(Error::Data("cannot sample from an empty population".into()));
        }
        let members = class_members(labels)?;
        if strategy != SamplingStrategy::Random {
            if let Some(k) = members.iter().position(Vec::is_empty) {
                return Err(Error::Data(format!(
                    "class {k} absent; {strategy} sampling needs every class"
                )));
            }
        }
        Ok(BatchASampler {
            labels: labels.to_vec(),
            strategy,
            size,
            pool: Vec::new(),
            cursor: 0,
            pools_built: 0,
        })
    }

    pub fn strategy(&self) -> SamplingStrategy {
        self.strategy
    }

    /// Pools started so far.
    pub fn pools_built(&self) -> usize {
        self.pools_built
    }

    /// Next batch of indices. The random strategy draws without replacement
    /// from the whole population each time; the balanced strategies consume
    /// their pool in order and rebuild it when exhausted.
    pub fn next_batch(&mut self, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.strategy == SamplingStrategy::Random {
            let n = self.size.min(self.labels.len());
            self.pools_built += 1;
            return Ok(index::sample(rng, self.labels.len(), n).into_vec());
        }
        let mut batch = Vec::with_capacity(self.size);
        while batch.len() < self.size {
            if self.cursor == self.pool.len() {
                self.pool = build_pool(&self.labels, self.strategy, rng)?;
                self.cursor = 0;
                self.pools_built += 1;
            }
            let take = (self.size - batch.len()).min(self.pool.len() - self.cursor);
            batch.extend_from_slice(&self.pool[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        Ok(batch)
    }
}

/// Mixed batch: paired members (indices into the paired population) and
/// unpaired members (indices into the unpaired population).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchB {
    pub paired: Vec<usize>,
    pub unpaired: Vec<usize>,
    /// Members per class after supplementation.
    pub per_class: usize,
}

impl BatchB {
    /// Paired-to-unpaired ratio weighting the generated-sample class loss.
    pub fn weight(&self) -> f64 {
        self.paired.len() as f64 / self.unpaired.len() as f64
    }

    pub fn len(&self) -> usize {
        self.paired.len() + self.unpaired.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Largest-remainder apportionment of `n` seats by `counts`; ties go to
/// the lower class index.
pub fn largest_remainder(counts: &[usize], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut alloc: Vec<usize> = counts.iter().map(|&c| c * n / total).collect();
    let mut rem: Vec<(usize, usize)> = counts.iter().enumerate().map(|(k, &c)| (c * n % total, k)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - alloc.iter().sum::<usize>();
    for &(_, k) in rem.iter().take(short) {
        alloc[k] += 1;
    }
    alloc
}

/// Paired members drawn proportionally to their class distribution, then
/// unpaired members added per class until all classes hold
/// `round(size / 4)` members (at least 2). Every class keeps at least one
/// unpaired slot so the class-loss weight is defined.
pub fn sample_batch_b(
    labels_paired: &[usize],
    labels_unpaired: &[usize],
    size: usize,
    rng: &mut impl Rng,
) -> Result<BatchB> {
    if labels_paired.is_empty() || labels_unpaired.is_empty() {
        return Err(Error::Data(
            "mixed batch needs both paired and unpaired consumers".into(),
        ));
    }
    let per_class = ((size as f64 / NUM_CLASSES as f64).round() as usize).max(2);
    let paired_members = class_members(labels_paired)?;
    let unpaired_members = class_members(labels_unpaired)?;
    if let Some(k) = unpaired_members.iter().position(Vec::is_empty) {
        return Err(Error::Data(format!(
            "no unpaired consumer of class {k} to balance the mixed batch"
        )));
    }
    let counts: Vec<usize> = paired_members.iter().map(Vec::len).collect();
    let caps: Vec<usize> = counts.iter().map(|&c| c.min(per_class - 1)).collect();
    let alloc = (1..=NUM_CLASSES * (per_class - 1))
        .rev()
        .map(|n| largest_remainder(&counts, n))
        .find(|a| a.iter().zip(&caps).all(|(x, cap)| x <= cap))
        .unwrap_or_else(|| vec![0; NUM_CLASSES]);

    let mut paired = Vec::new();
    let mut unpaired = Vec::new();
    for k in 0..NUM_CLASSES {
        let pm = &paired_members[k];
        paired.extend(index::sample(rng, pm.len(), alloc[k]).into_iter().map(|i| pm[i]));
        let um = &unpaired_members[k];
        let need = per_class - alloc[k];
        if need <= um.len() {
            unpaired.extend(index::sample(rng, um.len(), need).into_iter().map(|i| um[i]));
        } else {
            unpaired.extend((0..need).map(|_| um[rng.random_range(0..um.len())]));
        }
    }
    Ok(BatchB {
        paired,
        unpaired,
        per_class,
    })
}

/// Noise added at `c` random coordinates, drawn from `N(mu, sigma^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub c: usize,
    pub mu: f64,
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn new(c: usize, mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::Config(format!(
                "noise needs finite mu and sigma >= 0, got {mu}, {sigma}"
            )));
        }
        Ok(NoiseSpec { c, mu, sigma })
    }

    pub fn none() -> Self {
        NoiseSpec {
            c: 0,
            mu: 0.0,
            sigma: 0.0,
        }
    }
}

/// Copy of `v` with noise added at `spec.c` distinct coordinates chosen
/// uniformly.
pub fn gaussian_fuse(v: &[f64], spec: &NoiseSpec, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fuse_in_place(&mut out, spec, rng)?;
    Ok(out)
}

fn fuse_in_place(v: &mut [f64], spec: &NoiseSpec, rng: &mut impl Rng) -> Result<()> {
    if spec.c > v.len() {
        return Err(Error::Config(format!(
            "noise count {} exceeds vector length {}",
            spec.c,
            v.len()
        )));
    }
    let normal = Normal::new(spec.mu, spec.sigma).map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    for i in index::sample(rng, v.len(), spec.c) {
        v[i] += normal.sample(rng);
    }
    Ok(())
}

/// Applies `gaussian_fuse` to every row.
pub fn fuse_rows(m: &Matrix, spec: &NoiseSpec, rng: &mut impl Rng) -> Result<Matrix> {
    let mut out = m.clone();
    for r in 0..out.rows() {
        fuse_in_place(out.row_mut(r), spec, rng)?;
    }
    Matrix::new(out.rows(), out.cols(), out.into_data())
}
