//! Consumer consumption model (stratum and life scores), expense-decile
//! group analysis, survey compression and multivalued-answer detection.

mod io;
mod scheme;

use std::collections::{BTreeMap, BTreeSet};

pub use io::{
    read_labels, read_surveys, read_transactions, write_labels, write_surveys, write_transactions, LabelRecord,
    SurveyRecord,
};
pub use scheme::{Category, CategoryScheme, Stratum, Target, CATEGORY_LABELS, LIFE_DIMS};

use crate::error::{Error, Result};

/// Number of questionnaire items.
pub const SURVEY_QUESTIONS: usize = 52;
/// Length of a consumer model vector: 3 stratum ratios then 17 life ratios.
pub const CONSUMER_DIMS: usize = 3 + LIFE_DIMS;
/// Number of risk-tolerance classes.
pub const NUM_CLASSES: usize = 4;

pub type ConsumerId = u64;

#[derive(Clone, Debug, PartialEq)]
pub struct TransactionRecord {
    pub consumer_id: ConsumerId,
    pub category: Category,
    pub amount: f64,
}

impl TransactionRecord {
    pub fn new(consumer_id: ConsumerId, category: Category, amount: f64) -> Result<Self> {
        if !(amount >= 0.0 && amount.is_finite()) {
            return Err(Error::Data(format!(
                "consumer {consumer_id}: transaction amount {amount} must be finite and >= 0"
            )));
        }
        Ok(TransactionRecord {
            consumer_id,
            category,
            amount,
        })
    }
}

/// Jaccard overlap `|a & b| / |a | b|` of two shopping scopes.
pub fn overlap_rate<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64> {
    let union = a.union(b).count();
    if union == 0 {
        return Err(Error::Data("overlap of two empty scopes is undefined".into()));
    }
    Ok(a.intersection(b).count() as f64 / union as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StratumScores {
    /// BASIC, SOCIAL, SELF expense shares.
    pub scores: [f64; 3],
    /// Set when the consumer has no stratum expense; scores are then zero.
    pub zero_expense: bool,
}

/// Share of each stratum in the consumer's total stratum expense.
pub fn stratum_scores<'a>(
    transactions: impl IntoIterator<Item = &'a TransactionRecord>,
    scheme: &CategoryScheme,
) -> StratumScores {
    let mut expense = [0.0; 3];
    for t in transactions {
        if let Target::Stratum(s) = scheme.target(t.category) {
            expense[s.index()] += t.amount;
        }
    }
    let total: f64 = expense.iter().sum();
    if total > 0.0 {
        StratumScores {
            scores: expense.map(|e| e / total),
            zero_expense: false,
        }
    } else {
        StratumScores {
            scores: [0.0; 3],
            zero_expense: true,
        }
    }
}

/// Transaction counts per life dimension.
pub fn life_frequencies<'a>(
    transactions: impl IntoIterator<Item = &'a TransactionRecord>,
    scheme: &CategoryScheme,
) -> [u32; LIFE_DIMS] {
    let mut freq = [0; LIFE_DIMS];
    for t in transactions {
        if let Target::Life(d) = scheme.target(t.category) {
            freq[d] += 1;
        }
    }
    freq
}

/// Frequency divided by the population maximum of that dimension; zero
/// where nobody in the population is active.
pub fn life_scores(freq: &[u32; LIFE_DIMS], population_max: &[u32; LIFE_DIMS]) -> [f64; LIFE_DIMS] {
    let mut out = [0.0; LIFE_DIMS];
    for d in 0..LIFE_DIMS {
        if population_max[d] > 0 {
            out[d] = f64::from(freq[d]) / f64::from(population_max[d]);
        }
    }
    out
}

/// The 20-dimensional consumer consumption model vector `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumerModelVector {
    pub consumer_id: ConsumerId,
    pub stratum: [f64; 3],
    pub life: [f64; LIFE_DIMS],
    pub zero_expense: bool,
}

impl ConsumerModelVector {
    pub fn to_vec(&self) -> Vec<f64> {
        self.stratum.iter().chain(&self.life).copied().collect()
    }
}

/// Builds `U` for every consumer in `consumers` (sorted, deduplicated).
/// Consumers without transactions get an all-zero, flagged vector.
pub fn extract_consumer_models(
    transactions: &[TransactionRecord],
    scheme: &CategoryScheme,
    consumers: &[ConsumerId],
) -> Vec<ConsumerModelVector> {
    let mut by_consumer: BTreeMap<ConsumerId, Vec<&TransactionRecord>> = BTreeMap::new();
    for &id in consumers {
        by_consumer.entry(id).or_default();
    }
    for t in transactions {
        by_consumer.entry(t.consumer_id).or_default().push(t);
    }
    let freqs: Vec<(ConsumerId, StratumScores, [u32; LIFE_DIMS])> = by_consumer
        .iter()
        .map(|(&id, ts)| {
            (
                id,
                stratum_scores(ts.iter().copied(), scheme),
                life_frequencies(ts.iter().copied(), scheme),
            )
        })
        .collect();
    let mut max = [0u32; LIFE_DIMS];
    for (_, _, f) in &freqs {
        for d in 0..LIFE_DIMS {
            max[d] = max[d].max(f[d]);
        }
    }
    freqs
        .into_iter()
        .map(|(id, strat, f)| ConsumerModelVector {
            consumer_id: id,
            stratum: strat.scores,
            life: life_scores(&f, &max),
            zero_expense: strat.zero_expense,
        })
        .collect()
}

/// Expense-decile analysis of shopping behaviour.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    /// Consumer ids per group, group 0 holding the smallest spenders.
    pub groups: Vec<Vec<ConsumerId>>,
    pub total_expense: Vec<f64>,
    /// Union of categories bought by each group.
    pub scopes: Vec<BTreeSet<Category>>,
    /// `overlap[a][b]` between the scopes of groups `a` and `b`.
    pub overlap: Vec<Vec<f64>>,
    /// Consumers left out because their total expense is zero.
    pub excluded_zero_expense: usize,
}

pub const GROUP_COUNT: usize = 10;

/// Splits consumers into ten groups by ascending total expense (ties broken
/// by consumer id) and measures pairwise scope overlap.
pub fn group_analysis(transactions: &[TransactionRecord]) -> Result<GroupReport> {
    let mut totals: BTreeMap<ConsumerId, (f64, BTreeSet<Category>)> = BTreeMap::new();
    for t in transactions {
        let e = totals.entry(t.consumer_id).or_default();
        e.0 += t.amount;
        e.1.insert(t.category);
    }
    let before = totals.len();
    let mut ranked: Vec<(ConsumerId, f64, BTreeSet<Category>)> = totals
        .into_iter()
        .filter(|(_, (total, _))| *total > 0.0)
        .map(|(id, (total, scope))| (id, total, scope))
        .collect();
    let excluded = before - ranked.len();
    if ranked.len() < GROUP_COUNT {
        return Err(Error::Data(format!(
            "group analysis needs at least {GROUP_COUNT} consumers with expense, got {}",
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let n = ranked.len();
    let (base, extra) = (n / GROUP_COUNT, n % GROUP_COUNT);
    let mut groups = Vec::with_capacity(GROUP_COUNT);
    let mut total_expense = Vec::with_capacity(GROUP_COUNT);
    let mut scopes = Vec::with_capacity(GROUP_COUNT);
    let mut start = 0;
    for g in 0..GROUP_COUNT {
        let size = base + usize::from(g < extra);
        let members = &ranked[start..start + size];
        groups.push(members.iter().map(|m| m.0).collect());
        total_expense.push(members.iter().map(|m| m.1).sum());
        scopes.push(members.iter().flat_map(|m| m.2.iter().copied()).collect());
        start += size;
    }
    let mut overlap = vec![vec![0.0; GROUP_COUNT]; GROUP_COUNT];
    for a in 0..GROUP_COUNT {
        for b in 0..GROUP_COUNT {
            overlap[a][b] = overlap_rate(&scopes[a], &scopes[b])?;
        }
    }
    Ok(GroupReport {
        groups,
        total_expense,
        scopes,
        overlap,
        excluded_zero_expense: excluded,
    })
}

/// Per-question mean and population standard deviation of raw answers.
#[derive(Clone, Debug, PartialEq)]
pub struct SurveyStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SurveyStats {
    pub fn fit<A: AsRef<[u8]>>(answers: &[A]) -> Result<Self> {
        let n = answers.len();
        if n == 0 {
            return Err(Error::Data("cannot fit survey statistics on no answers".into()));
        }
        let q = answers[0].as_ref().len();
        let mut mean = vec![0.0; q];
        for a in answers {
            let a = a.as_ref();
            if a.len() != q {
                return Err(Error::Data("ragged survey answers".into()));
            }
            for (m, &x) in mean.iter_mut().zip(a) {
                *m += f64::from(x);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; q];
        for a in answers {
            for ((v, &x), m) in var.iter_mut().zip(a.as_ref()).zip(&mean) {
                let d = f64::from(x) - m;
                *v += d * d;
            }
        }
        let std = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
        Ok(SurveyStats { mean, std })
    }
}

/// Standardises each answer with the fitted statistics and squashes it with
/// the logistic function. Questions with zero spread map to 0.5.
pub fn compress_survey(raw: &[u8], stats: &SurveyStats) -> Result<Vec<f64>> {
    if raw.len() != stats.mean.len() {
        return Err(Error::Data(format!(
            "{} answers for {} fitted questions",
            raw.len(),
            stats.mean.len()
        )));
    }
    Ok(raw
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(&x, (&mu, &sd))| {
            if sd > 0.0 {
                crate::diffnet::sigmoid((f64::from(x) - mu) / sd)
            } else {
                0.5
            }
        })
        .collect())
}

/// Validates a raw 7-point answer vector.
pub fn check_answers(raw: &[u8]) -> Result<()> {
    if raw.len() != SURVEY_QUESTIONS {
        return Err(Error::Data(format!(
            "survey has {} answers, expected {SURVEY_QUESTIONS}",
            raw.len()
        )));
    }
    if let Some(bad) = raw.iter().find(|a| !(1..=7).contains(*a)) {
        return Err(Error::Data(format!("survey answer {bad} outside 1..=7")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultivaluedReport {
    pub threshold: f64,
    /// Consumers with at least one differently labelled near-duplicate.
    pub flagged: Vec<ConsumerId>,
    /// Unordered cross-label pairs at or above the threshold.
    pub pairs: usize,
}

impl MultivaluedReport {
    pub fn count(&self) -> usize {
        self.flagged.len()
    }
}

/// Finds consumers whose answers agree with a differently labelled consumer
/// on at least `threshold` of the questions. Unlabelled surveys are skipped.
pub fn multivalued_report(surveys: &[SurveyRecord], threshold: f64) -> Result<MultivaluedReport> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "similarity threshold must be in (0,1], got {threshold}"
        )));
    }
    let labelled: Vec<&SurveyRecord> = surveys.iter().filter(|s| s.label.is_some()).collect();
    let mut flagged = vec![false; labelled.len()];
    let mut pairs = 0;
    for i in 0..labelled.len() {
        let (a, la) = (&labelled[i].answers, labelled[i].label);
        let needed = threshold * a.len() as f64 - 1e-9;
        for j in i + 1..labelled.len() {
            if labelled[j].label == la {
                continue;
            }
            let b = &labelled[j].answers;
            let matches = a.iter().zip(b.iter()).filter(|(x, y)| x == y).count();
            if matches as f64 >= needed {
                flagged[i] = true;
                flagged[j] = true;
                pairs += 1;
            }
        }
    }
    let mut ids: Vec<ConsumerId> = labelled
        .iter()
        .zip(&flagged)
        .filter(|(_, &f)| f)
        .map(|(s, _)| s.consumer_id)
        .collect();
    ids.sort_unstable();
    Ok(MultivaluedReport {
        threshold,
        flagged: ids,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(name: &str) -> Category {
        name.parse().unwrap()
    }

    fn tx(id: ConsumerId, c: &str, amount: f64) -> TransactionRecord {
        TransactionRecord::new(id, cat(c), amount).unwrap()
    }

    #[test]
    fn overlap_examples() {
        let a: BTreeSet<_> = ["X", "Y", "Z"].into();
        let b: BTreeSet<_> = ["Y", "Z", "W"].into();
        assert_eq!(overlap_rate(&a, &b).unwrap(), 0.5);
        assert_eq!(overlap_rate(&a, &a).unwrap(), 1.0);
        let c: BTreeSet<_> = ["Q"].into();
        assert_eq!(overlap_rate(&a, &c).unwrap(), 0.0);
        let empty: BTreeSet<&str> = BTreeSet::new();
        assert!(overlap_rate(&empty, &empty).is_err());
    }

    #[test]
    fn stratum_examples() {
        let scheme = CategoryScheme::default();
        let t = [tx(1, "BASIC", 50.0), tx(1, "SOCIAL", 30.0), tx(1, "SELF", 20.0)];
        assert_eq!(stratum_scores(&t, &scheme).scores, [0.5, 0.3, 0.2]);
        let t = [tx(1, "BASIC", 7.0), tx(1, "TRAVEL", 70.0)];
        assert_eq!(stratum_scores(&t, &scheme).scores, [1.0, 0.0, 0.0]);
        let t = [tx(1, "BASIC", 1.0), tx(1, "SOCIAL", 1.0), tx(1, "SELF", 1.0)];
        assert_eq!(stratum_scores(&t, &scheme).scores, [1.0 / 3.0; 3]);
        let t = [tx(1, "TRAVEL", 70.0)];
        let s = stratum_scores(&t, &scheme);
        assert!(s.zero_expense);
        assert_eq!(s.scores, [0.0; 3]);
    }

    #[test]
    fn life_examples() {
        let mut freq = [0u32; LIFE_DIMS];
        let mut max = [0u32; LIFE_DIMS];
        freq[0] = 5;
        max[0] = 10;
        freq[1] = 10;
        max[1] = 10;
        max[2] = 4;
        let s = life_scores(&freq, &max);
        assert_eq!(s[0], 0.5);
        assert_eq!(s[1], 1.0);
        assert_eq!(s[2], 0.0);
        // Dimension nobody touches.
        assert_eq!(s[3], 0.0);
    }

    #[test]
    fn extraction_normalises_by_population_max() {
        let scheme = CategoryScheme::default();
        let t = vec![
            tx(1, "TRAVEL", 1.0),
            tx(1, "TRAVEL", 1.0),
            tx(2, "TRAVEL", 1.0),
            tx(2, "BASIC", 3.0),
        ];
        let models = extract_consumer_models(&t, &scheme, &[3]);
        assert_eq!(models.len(), 3);
        let travel = scheme.life_index("TRAVEL").unwrap();
        assert_eq!(models[0].life[travel], 1.0);
        assert_eq!(models[1].life[travel], 0.5);
        assert!(models[0].zero_expense);
        assert!(!models[1].zero_expense);
        assert!(models[2].zero_expense);
        assert_eq!(models[2].to_vec(), vec![0.0; CONSUMER_DIMS]);
    }

    #[test]
    fn deciles_one_consumer_each() {
        let t: Vec<_> = (0..10).map(|i| tx(100 - i, "BASIC", (i + 1) as f64)).collect();
        let report = group_analysis(&t).unwrap();
        for (g, members) in report.groups.iter().enumerate() {
            assert_eq!(members, &vec![100 - g as u64]);
            assert_eq!(report.total_expense[g], (g + 1) as f64);
        }
        assert!(report.overlap.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn deciles_are_near_equal_and_exclude_zero_spenders() {
        let mut t: Vec<_> = (0..37).map(|i| tx(i, "HOME", (i % 7) as f64 + 1.0)).collect();
        t.push(tx(99, "HOME", 0.0));
        let report = group_analysis(&t).unwrap();
        let sizes: Vec<_> = report.groups.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 37);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(report.excluded_zero_expense, 1);
        // Ties on expense are ordered by id.
        let flat: Vec<_> = report.groups.concat();
        assert_eq!(flat[0], 0);
        assert_eq!(flat[1], 7);
    }

    #[test]
    fn too_few_consumers() {
        let t: Vec<_> = (0..9).map(|i| tx(i, "BASIC", 1.0)).collect();
        assert!(matches!(group_analysis(&t), Err(Error::Data(_))));
    }

    #[test]
    fn sliding_scopes_give_descending_stable_ascending_curves() {
        // Group g buys a window of categories starting at g; expense grows
        // with g so decile g is exactly consumer g.
        let names = CATEGORY_LABELS;
        let mut t = Vec::new();
        for g in 0..10u64 {
            for k in 0..8 {
                let c = names[(g as usize + k) % names.len()];
                t.push(tx(g, c, 10.0 * (g + 1) as f64));
            }
        }
        let r = group_analysis(&t).unwrap();
        let first = &r.overlap[0];
        let last = &r.overlap[9];
        assert!(first.windows(2).all(|w| w[0] >= w[1]), "{first:?}");
        assert!(last.windows(2).all(|w| w[0] <= w[1]), "{last:?}");
        let mid = &r.overlap[5];
        let spread = mid[3..8].iter().cloned().fold(0.0, f64::max) - mid[3..8].iter().cloned().fold(1.0, f64::min);
        assert!(spread < first[0] - first[9], "{mid:?}");
    }

    #[test]
    fn compression_examples() {
        let stats = SurveyStats {
            mean: vec![4.0, 4.0, 3.0],
            std: vec![1.0, 2.0, 0.0],
        };
        let c = compress_survey(&[4, 5, 7], &stats).unwrap();
        assert_eq!(c[0], 0.5);
        assert!((c[1] - 1.0 / (1.0 + (-0.5f64).exp())).abs() < 1e-15);
        assert_eq!(c[2], 0.5);
        let one_sigma = compress_survey(&[5, 6, 3], &stats).unwrap();
        assert!((one_sigma[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((one_sigma[1] - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn survey_stats_fit() {
        let stats = SurveyStats::fit(&[vec![1u8, 7], vec![3, 7]]).unwrap();
        assert_eq!(stats.mean, vec![2.0, 7.0]);
        assert_eq!(stats.std, vec![1.0, 0.0]);
    }

    fn survey(id: ConsumerId, answers: Vec<u8>, label: Option<u8>) -> SurveyRecord {
        SurveyRecord {
            consumer_id: id,
            answers,
            label,
        }
    }

    #[test]
    fn multivalued_exact_duplicates() {
        let a = vec![3u8; SURVEY_QUESTIONS];
        let s = [survey(1, a.clone(), Some(0)), survey(2, a.clone(), Some(2))];
        assert_eq!(multivalued_report(&s, 0.95).unwrap().count(), 2);
        let s = [survey(1, a.clone(), Some(1)), survey(2, a.clone(), Some(1))];
        assert_eq!(multivalued_report(&s, 0.95).unwrap().count(), 0);
        let s = [survey(1, a.clone(), None), survey(2, a, Some(1))];
        assert_eq!(multivalued_report(&s, 0.95).unwrap().count(), 0);
    }

    #[test]
    fn multivalued_threshold_boundary() {
        // 50 of 52 agree = 96.2% >= 95%; 49 of 52 = 94.2% < 95%.
        let a = vec![4u8; SURVEY_QUESTIONS];
        let mut b = a.clone();
        b[0] = 1;
        b[1] = 1;
        let s = [survey(1, a.clone(), Some(0)), survey(2, b.clone(), Some(3))];
        assert_eq!(multivalued_report(&s, 0.95).unwrap().pairs, 1);
        b[2] = 1;
        let s = [survey(1, a, Some(0)), survey(2, b, Some(3))];
        assert_eq!(multivalued_report(&s, 0.95).unwrap().pairs, 0);
        assert!(multivalued_report(&s, 0.0).is_err());
        assert!(multivalued_report(&s, 1.5).is_err());
    }
}
