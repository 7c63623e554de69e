//! Assembles model inputs from raw records: consumer vectors for everyone,
//! compressed surveys for the paired consumers, and a stratified train/test
//! split of the paired population.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffnet::Matrix;
use crate::error::{Error, Result};
use crate::features::{
    compress_survey, extract_consumer_models, CategoryScheme, ConsumerId, LabelRecord, SurveyRecord, SurveyStats,
    TransactionRecord, CONSUMER_DIMS, NUM_CLASSES, SURVEY_QUESTIONS,
};

/// Inputs to the training loop.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub paired_u: Matrix,
    /// Compressed surveys, aligned with `paired_u`.
    pub paired_s: Matrix,
    pub paired_labels: Vec<usize>,
    pub unpaired_u: Matrix,
    pub unpaired_labels: Vec<usize>,
}

impl TrainingSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.paired_labels.len();
        if n == 0 || self.unpaired_labels.is_empty() {
            return Err(Error::Data("training needs paired and unpaired consumers".into()));
        }
        if self.paired_u.shape() != (n, CONSUMER_DIMS)
            || self.paired_s.shape() != (n, SURVEY_QUESTIONS)
            || self.unpaired_u.shape() != (self.unpaired_labels.len(), CONSUMER_DIMS)
        {
            return Err(Error::Shape("training set matrices disagree with label counts".into()));
        }
        if self
            .paired_labels
            .iter()
            .chain(&self.unpaired_labels)
            .any(|&l| l >= NUM_CLASSES)
        {
            return Err(Error::Data(format!("labels must be below {NUM_CLASSES}")));
        }
        Ok(())
    }
}

/// Held-out paired consumers with their real surveys.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSet {
    pub ids: Vec<ConsumerId>,
    pub u: Matrix,
    pub s: Matrix,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub train: TrainingSet,
    pub test: TestSet,
    /// Survey statistics fitted on the training split.
    pub stats: SurveyStats,
    /// Consumers with transactions but no known label; not used.
    pub unlabelled: usize,
}

/// Test-set consumers per class: `round(fraction * n)`, keeping at least
/// one training member when the class has two or more.
fn test_count(n: usize, fraction: f64) -> usize {
    let t = (fraction * n as f64).round() as usize;
    if n >= 2 {
        t.min(n - 1)
    } else {
        0
    }
}

/// Builds training and test matrices. Paired consumers are those with a
/// labelled survey; unpaired ones are consumers without a survey whose
/// label appears in `labels`. `test_fraction` of each class of paired
/// consumers (shuffled with `split_seed`) is held out.
pub fn prepare(
    transactions: &[TransactionRecord],
    surveys: &[SurveyRecord],
    labels: &[LabelRecord],
    scheme: &CategoryScheme,
    test_fraction: f64,
    split_seed: u64,
) -> Result<PreparedData> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    let mut survey_by_id: BTreeMap<ConsumerId, &SurveyRecord> = BTreeMap::new();
    for s in surveys {
        if s.label.is_none() {
            continue;
        }
        if survey_by_id.insert(s.consumer_id, s).is_some() {
            return Err(Error::Data(format!("consumer {} has two surveys", s.consumer_id)));
        }
    }
    let mut label_by_id: BTreeMap<ConsumerId, usize> = BTreeMap::new();
    for l in labels {
        if label_by_id.insert(l.consumer_id, usize::from(l.label)).is_some() {
            return Err(Error::Data(format!("consumer {} labelled twice", l.consumer_id)));
        }
    }

    let ids: Vec<ConsumerId> = survey_by_id
        .keys()
        .chain(label_by_id.keys())
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let models = extract_consumer_models(transactions, scheme, &ids);
    let u_by_id: BTreeMap<ConsumerId, Vec<f64>> = models.iter().map(|m| (m.consumer_id, m.to_vec())).collect();

    let mut by_class: Vec<Vec<ConsumerId>> = vec![Vec::new(); NUM_CLASSES];
    for (&id, s) in &survey_by_id {
        by_class[usize::from(s.label.unwrap_or(0))].push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let t = test_count(members.len(), test_fraction);
        test_ids.extend_from_slice(&members[..t]);
        train_ids.extend_from_slice(&members[t..]);
    }
    train_ids.sort_unstable();
    test_ids.sort_unstable();
    if train_ids.is_empty() {
        return Err(Error::Data("no labelled surveys to train on".into()));
    }

    let answers: Vec<&[u8]> = train_ids.iter().map(|id| survey_by_id[id].answers.as_slice()).collect();
    let stats = SurveyStats::fit(&answers)?;
    let block = |ids: &[ConsumerId]| -> Result<(Matrix, Matrix, Vec<usize>)> {
        let mut u = Vec::with_capacity(ids.len() * CONSUMER_DIMS);
        let mut s = Vec::with_capacity(ids.len() * SURVEY_QUESTIONS);
        let mut l = Vec::with_capacity(ids.len());
        for id in ids {
            let rec = survey_by_id[id];
            u.extend_from_slice(&u_by_id[id]);
            s.extend(compress_survey(&rec.answers, &stats)?);
            l.push(usize::from(rec.label.unwrap_or(0)));
        }
        Ok((
            Matrix::new(ids.len(), CONSUMER_DIMS, u)?,
            Matrix::new(ids.len(), SURVEY_QUESTIONS, s)?,
            l,
        ))
    };
    let (paired_u, paired_s, paired_labels) = block(&train_ids)?;
    let (test_u, test_s, test_labels) = block(&test_ids)?;

    let mut unpaired = Vec::new();
    let mut unpaired_labels = Vec::new();
    for (&id, &label) in &label_by_id {
        if survey_by_id.contains_key(&id) {
            continue;
        }
        unpaired.extend_from_slice(&u_by_id[&id]);
        unpaired_labels.push(label);
    }
    let unlabelled = models
        .iter()
        .filter(|m| !survey_by_id.contains_key(&m.consumer_id) && !label_by_id.contains_key(&m.consumer_id))
        .count();

    Ok(PreparedData {
        train: TrainingSet {
            paired_u,
            paired_s,
            paired_labels,
            unpaired_u: Matrix::new(unpaired_labels.len(), CONSUMER_DIMS, unpaired)?,
            unpaired_labels,
        },
        test: TestSet {
            ids: test_ids,
            u: test_u,
            s: test_s,
            labels: test_labels,
        },
        stats,
        unlabelled,
    })
}
