//! Synthetic two-domain datasets: transactions for every consumer, surveys
//! for a small labelled subset, and planted cross-label survey collisions.
//!
//! Each class owns a latent prototype. The prototype tilts the consumer's
//! Dirichlet category mixture, the log-normal transaction amounts, and the
//! mean answer of every question, each by an amount proportional to
//! `signal_strength`.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal, Poisson};

use crate::batching::largest_remainder;
use crate::error::{Error, Result};
use crate::features::{
    write_labels, write_surveys, write_transactions, Category, ConsumerId, LabelRecord, SurveyRecord,
    TransactionRecord, CATEGORY_LABELS, NUM_CLASSES, SURVEY_QUESTIONS,
};

/// Answers changed in the second member of a planted collision: 50 of 52
/// answers agree, above a 95% similarity threshold.
pub const COLLISION_EDITS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_total: usize,
    /// Consumers with a survey.
    pub n_paired: usize,
    pub class_proportions: [f64; NUM_CLASSES],
    /// Fraction of surveyed consumers that also have transactions.
    pub pairing_overlap: f64,
    /// Planted cross-label near-duplicate survey pairs.
    pub collision_count: usize,
    /// 0 gives label-independent features; 1 gives nearly separable ones.
    pub signal_strength: f64,
    pub seed: u64,
    /// Mean transactions per consumer.
    pub mean_transactions: f64,
}

/// Class sizes of the paired population in the source study.
pub const REFERENCE_CLASS_COUNTS: [f64; NUM_CLASSES] = [700.0, 997.0, 2076.0, 719.0];

fn reference_proportions() -> [f64; NUM_CLASSES] {
    let total: f64 = REFERENCE_CLASS_COUNTS.iter().sum();
    REFERENCE_CLASS_COUNTS.map(|c| c / total)
}

/// Desk-scale preset: 10,000 consumers, 450 of them surveyed.
pub fn default_desk_preset() -> SynthConfig {
    SynthConfig {
        n_total: 10_000,
        n_paired: 450,
        class_proportions: reference_proportions(),
        pairing_overlap: 1.0,
        collision_count: 50,
        signal_strength: 0.2,
        seed: 0,
        mean_transactions: 24.0,
    }
}

/// Source-study scale: 104,960 consumers, 4,492 surveyed, about 79
/// transactions each.
pub fn paper_scale_preset() -> SynthConfig {
    SynthConfig {
        n_total: 104_960,
        n_paired: 4_492,
        mean_transactions: 8_297_231.0 / 104_960.0,
        ..default_desk_preset()
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_paired == 0 || self.n_paired > self.n_total {
            return err(format!(
                "need 0 < n_paired <= n_total, got {} and {}",
                self.n_paired, self.n_total
            ));
        }
        let sum: f64 = self.class_proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.class_proportions.iter().any(|&p| !(p > 0.0)) {
            return err(format!(
                "class proportions must be positive and sum to 1, got {:?}",
                self.class_proportions
            ));
        }
        if !(self.pairing_overlap > 0.0 && self.pairing_overlap <= 1.0) {
            return err(format!(
                "pairing_overlap must be in (0, 1], got {}",
                self.pairing_overlap
            ));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return err(format!(
                "signal_strength must be in [0, 1], got {}",
                self.signal_strength
            ));
        }
        if !(self.mean_transactions > 1.0 && self.mean_transactions.is_finite()) {
            return err(format!("mean_transactions must be > 1, got {}", self.mean_transactions));
        }
        if 2 * self.collision_count > self.n_paired {
            return err(format!(
                "{} collision pairs need {} surveyed consumers, only {} exist",
                self.collision_count,
                2 * self.collision_count,
                self.n_paired
            ));
        }
        let unpaired = class_sizes(&self.class_proportions, self.n_total - self.n_paired);
        if unpaired.contains(&0) {
            return err("every class needs at least one consumer without a survey".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        let p = self.class_proportions.map(|v| v.to_string()).join(",");
        vec![
            ("n_total", self.n_total.to_string()),
            ("n_paired", self.n_paired.to_string()),
            ("class_proportions", p),
            ("pairing_overlap", self.pairing_overlap.to_string()),
            ("collision_count", self.collision_count.to_string()),
            ("signal_strength", self.signal_strength.to_string()),
            ("seed", self.seed.to_string()),
            ("mean_transactions", self.mean_transactions.to_string()),
        ]
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = || Error::Config(format!("bad value {value:?} for {key}"));
        match key {
            "n_total" => self.n_total = value.parse().map_err(|_| bad())?,
            "n_paired" => self.n_paired = value.parse().map_err(|_| bad())?,
            "class_proportions" => {
                let v: Vec<f64> = value
                    .split(',')
                    .map(|x| x.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                let total: f64 = v.iter().sum();
                if v.len() != NUM_CLASSES || !(total > 0.0) {
                    return Err(bad());
                }
                // Counts are accepted and normalised.
                for (p, x) in self.class_proportions.iter_mut().zip(&v) {
                    *p = x / total;
                }
            }
            "pairing_overlap" => self.pairing_overlap = value.parse().map_err(|_| bad())?,
            "collision_count" => self.collision_count = value.parse().map_err(|_| bad())?,
            "signal_strength" => self.signal_strength = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "mean_transactions" => self.mean_transactions = value.parse().map_err(|_| bad())?,
            _ => return Err(Error::Config(format!("unknown synth key {key:?}"))),
        }
        Ok(())
    }
}

/// Largest-remainder class sizes for `n` consumers.
pub fn class_sizes(proportions: &[f64; NUM_CLASSES], n: usize) -> [usize; NUM_CLASSES] {
    // Proportions scaled to integer weights with ample resolution.
    let weights: Vec<usize> = proportions.iter().map(|p| (p * 1e9).round() as usize).collect();
    let a = largest_remainder(&weights, n);
    [a[0], a[1], a[2], a[3]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub transactions: Vec<TransactionRecord>,
    /// Surveys of the paired consumers, labelled.
    pub surveys: Vec<SurveyRecord>,
    /// Labels of consumers without a survey.
    pub labels: Vec<LabelRecord>,
    pub planted_pairs: Vec<(ConsumerId, ConsumerId)>,
}

impl SynthData {
    /// Writes `transactions.csv`, `surveys.csv` and `labels.csv`.
    pub fn write_dir(&self, dir: &Path, provenance: Option<&str>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_transactions(&dir.join("transactions.csv"), &self.transactions, provenance)?;
        write_surveys(&dir.join("surveys.csv"), &self.surveys, provenance)?;
        write_labels(&dir.join("labels.csv"), &self.labels, provenance)
    }
}

const CATEGORIES: usize = CATEGORY_LABELS.len();

/// Class-specific tilts shared by every consumer.
struct Prototypes {
    log_pref: [[f64; CATEGORIES]; NUM_CLASSES],
    log_amount: [[f64; CATEGORIES]; NUM_CLASSES],
    answer_mean: [[f64; SURVEY_QUESTIONS]; NUM_CLASSES],
}

/// Scale of the category-preference tilt at full signal.
const PREF_SCALE: f64 = 4.0;
/// Scale of the log-amount tilt at full signal.
const AMOUNT_SCALE: f64 = 2.0;
/// Answer-mean shift (in answer units) at full signal.
const ANSWER_SCALE: f64 = 0.6;
/// Concentration of each consumer's Dirichlet category mixture.
const MIX_CONCENTRATION: f64 = 8.0;

impl Prototypes {
    fn draw(s: f64, rng: &mut impl Rng) -> Self {
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let base_pref: Vec<f64> = (0..CATEGORIES).map(|_| n.sample(rng) * 0.7).collect();
        let base_amount: Vec<f64> = (0..CATEGORIES).map(|_| rng.random_range(2.0..5.0)).collect();
        let base_answer: Vec<f64> = (0..SURVEY_QUESTIONS).map(|_| rng.random_range(3.0..5.0)).collect();
        let mut p = Prototypes {
            log_pref: [[0.0; CATEGORIES]; NUM_CLASSES],
            log_amount: [[0.0; CATEGORIES]; NUM_CLASSES],
            answer_mean: [[0.0; SURVEY_QUESTIONS]; NUM_CLASSES],
        };
        for k in 0..NUM_CLASSES {
            for c in 0..CATEGORIES {
                p.log_pref[k][c] = base_pref[c] + s * PREF_SCALE * n.sample(rng);
                p.log_amount[k][c] = base_amount[c] + s * AMOUNT_SCALE * n.sample(rng);
            }
            for q in 0..SURVEY_QUESTIONS {
                p.answer_mean[k][q] = base_answer[q] + s * ANSWER_SCALE * n.sample(rng);
            }
        }
        p
    }
}

fn dirichlet(alpha: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / alpha.len() as f64);
    }
    v
}

fn pick(weights: &[f64], rng: &mut impl Rng) -> usize {
    let mut r = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

fn shuffled_labels(sizes: [usize; NUM_CLASSES], rng: &mut impl Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat_n(k, n))
        .collect();
    labels.shuffle(rng);
    labels
}

/// Generates a dataset. Consumer ids run from 1 to `n_total`; which of
/// them are surveyed is random.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.signal_strength;
    let proto = Prototypes::draw(s, &mut rng);

    let ids: Vec<ConsumerId> = (1..=config.n_total as ConsumerId).collect();
    let paired_pos: Vec<usize> = {
        let mut v = index::sample(&mut rng, config.n_total, config.n_paired).into_vec();
        v.sort_unstable();
        v
    };
    let mut is_paired = vec![false; config.n_total];
    paired_pos.iter().for_each(|&i| is_paired[i] = true);
    let paired_labels = shuffled_labels(class_sizes(&config.class_proportions, config.n_paired), &mut rng);
    let unpaired_labels = shuffled_labels(
        class_sizes(&config.class_proportions, config.n_total - config.n_paired),
        &mut rng,
    );
    let with_transactions = (config.pairing_overlap * config.n_paired as f64).round() as usize;
    let mut no_tx = vec![false; config.n_total];
    for &k in paired_pos.iter().skip(with_transactions) {
        no_tx[k] = true;
    }

    let count_dist = Poisson::new(config.mean_transactions - 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut transactions = Vec::new();
    let mut surveys = Vec::with_capacity(config.n_paired);
    let mut labels = Vec::with_capacity(config.n_total - config.n_paired);
    let (mut pi, mut ui) = (0, 0);
    for (pos, &id) in ids.iter().enumerate() {
        let label = if is_paired[pos] {
            pi += 1;
            paired_labels[pi - 1]
        } else {
            ui += 1;
            unpaired_labels[ui - 1]
        };
        let alpha: Vec<f64> = proto.log_pref[label].iter().map(|l| l.exp()).collect();
        let norm: f64 = alpha.iter().sum();
        let alpha: Vec<f64> = alpha.iter().map(|a| MIX_CONCENTRATION * a / norm).collect();
        let mix = dirichlet(&alpha, &mut rng);
        let n_tx = 1 + count_dist.sample(&mut rng) as usize;
        for _ in 0..n_tx {
            let c = pick(&mix, &mut rng);
            let amount = LogNormal::new(proto.log_amount[label][c], 0.8)
                .expect("finite parameters")
                .sample(&mut rng);
            if !no_tx[pos] {
                let category = Category::from_index(c).expect("category index in range");
                transactions.push(TransactionRecord::new(id, category, (amount * 100.0).round() / 100.0)?);
            }
        }
        if is_paired[pos] {
            let answers = (0..SURVEY_QUESTIONS)
                .map(|q| {
                    (proto.answer_mean[label][q] + noise.sample(&mut rng))
                        .round()
                        .clamp(1.0, 7.0) as u8
                })
                .collect();
            surveys.push(SurveyRecord {
                consumer_id: id,
                answers,
                label: Some(label as u8),
            });
        } else {
            labels.push(LabelRecord {
                consumer_id: id,
                label: label as u8,
            });
        }
    }

    let planted_pairs = plant_collisions(&mut surveys, config.collision_count, &mut rng)?;
    Ok(SynthData {
        transactions,
        surveys,
        labels,
        planted_pairs,
    })
}

/// Pairs up distinct, differently labelled surveys and makes the second of
/// each pair a copy of the first with `COLLISION_EDITS` answers changed.
fn plant_collisions(
    surveys: &mut [SurveyRecord],
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(ConsumerId, ConsumerId)>> {
    let mut order: Vec<usize> = (0..surveys.len()).collect();
    order.shuffle(rng);
    let mut used = vec![false; surveys.len()];
    let mut pairs = Vec::with_capacity(count);
    for a_pos in 0..order.len() {
        if pairs.len() == count {
            break;
        }
        let a = order[a_pos];
        if used[a] {
            continue;
        }
        let Some(&b) = order[a_pos + 1..]
            .iter()
            .find(|&&b| !used[b] && surveys[b].label != surveys[a].label)
        else {
            continue;
        };
        used[a] = true;
        used[b] = true;
        let mut answers = surveys[a].answers.clone();
        for q in index::sample(rng, SURVEY_QUESTIONS, COLLISION_EDITS) {
            let old = answers[q];
            let shift = rng.random_range(1..7u8);
            answers[q] = (old - 1 + shift) % 7 + 1;
        }
        surveys[b].answers = answers;
        pairs.push((surveys[a].consumer_id, surveys[b].consumer_id));
    }
    if pairs.len() < count {
        return Err(Error::Config(format!(
            "only {} cross-label collision pairs could be formed, {count} requested",
            pairs.len()
        )));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::multivalued_report;

    fn small() -> SynthConfig {
        SynthConfig {
            n_total: 400,
            n_paired: 120,
            collision_count: 10,
            ..default_desk_preset()
        }
    }

    #[test]
    fn preset_is_valid_and_near_reference_pairing() {
        let p = default_desk_preset();
        p.validate().unwrap();
        let frac = p.n_paired as f64 / p.n_total as f64;
        assert!((frac - 0.043).abs() <= 0.01);
    }

    #[test]
    fn class_sizes_proportional() {
        let p = reference_proportions();
        let sizes = class_sizes(&p, 449);
        for k in 0..4 {
            assert!((sizes[k] as f64 - p[k] * 449.0).abs() <= 1.0);
        }
        assert_eq!(sizes.iter().sum::<usize>(), 449);
    }

    #[test]
    fn generation_is_deterministic_and_complete() {
        let d = generate(&small()).unwrap();
        assert_eq!(d, generate(&small()).unwrap());
        assert_eq!(d.surveys.len(), 120);
        assert_eq!(d.labels.len(), 280);
        let mut classes = [false; 4];
        d.labels.iter().for_each(|l| classes[usize::from(l.label)] = true);
        assert!(classes.iter().all(|&c| c));
    }

    #[test]
    fn planted_collisions_are_flagged() {
        let d = generate(&small()).unwrap();
        let report = multivalued_report(&d.surveys, 0.95).unwrap();
        for (a, b) in &d.planted_pairs {
            assert!(report.flagged.contains(a) && report.flagged.contains(b));
        }
        assert!(report.count() >= 20);
    }

    #[test]
    fn infeasible_configs_rejected() {
        let mut c = small();
        c.collision_count = 61;
        assert!(generate(&c).is_err());
        let mut c = small();
        c.n_paired = 401;
        assert!(c.validate().is_err());
        let mut c = small();
        c.class_proportions = [0.5, 0.5, 0.0, 0.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_overlap_leaves_some_surveyed_consumers_without_transactions() {
        let mut c = small();
        c.pairing_overlap = 0.5;
        let d = generate(&c).unwrap();
        let with_tx: std::collections::BTreeSet<_> = d.transactions.iter().map(|t| t.consumer_id).collect();
        let surveyed_with_tx = d.surveys.iter().filter(|s| with_tx.contains(&s.consumer_id)).count();
        assert_eq!(surveyed_with_tx, 60);
    }
}
