//! Train-and-evaluate helpers shared by the CLI and the test suites.

use crate::adgan::{classify, ParameterSet};
use crate::batching::SamplingStrategy;
use crate::dataset::{PreparedData, TestSet};
use crate::error::Result;
use crate::evalmetrics::{
    baseline_logreg, compute_metrics, hconcat, repeated_runs, ConfusionMatrix, LogRegConfig, MetricsReport,
    RepeatedReport,
};
use crate::trainer::{train, TrainConfig};

/// Metrics of the classifier head on held-out consumers with real surveys.
pub fn evaluate(params: &ParameterSet, test: &TestSet) -> Result<MetricsReport> {
    let predicted = classify(params, &test.u, &test.s)?;
    compute_metrics(&ConfusionMatrix::from_predictions(&test.labels, &predicted)?)
}

pub fn train_and_evaluate(data: &PreparedData, config: &TrainConfig) -> Result<MetricsReport> {
    let (params, _) = train(&data.train, config)?;
    evaluate(&params, &data.test)
}

/// `runs` trainings with seeds `config.seed`, `config.seed + 1`, ...
pub fn adgan_suite(
    data: &PreparedData,
    config: &TrainConfig,
    strategy: SamplingStrategy,
    runs: usize,
) -> Result<RepeatedReport> {
    repeated_runs(runs, |i| {
        let mut c = config.clone();
        c.strategy = strategy;
        c.seed = config.seed.wrapping_add(i as u64);
        train_and_evaluate(data, &c)
    })
}

/// `adgan_suite` with the runs spread over `jobs` threads. Each run is
/// seeded independently, so the report does not depend on `jobs`.
pub fn adgan_suite_parallel(
    data: &PreparedData,
    config: &TrainConfig,
    strategy: SamplingStrategy,
    runs: usize,
    jobs: usize,
) -> Result<RepeatedReport> {
    let jobs = jobs.clamp(1, runs.max(1));
    if jobs == 1 {
        return adgan_suite(data, config, strategy, runs);
    }
    let run_one = |i: usize| {
        let mut c = config.clone();
        c.strategy = strategy;
        c.seed = config.seed.wrapping_add(i as u64);
        train_and_evaluate(data, &c)
    };
    let mut results: Vec<Option<Result<MetricsReport>>> = (0..runs).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let run_one = &run_one;
                s.spawn(move || (j..runs).step_by(jobs).map(|i| (i, run_one(i))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("training thread panicked") {
                results[i] = Some(r);
            }
        }
    });
    let mut results = results.into_iter();
    repeated_runs(runs, |_| results.next().flatten().expect("every run finished"))
}

/// Logistic regression on paired consumers only, features `U` followed by
/// the compressed survey.
pub fn baseline(data: &PreparedData) -> Result<MetricsReport> {
    let train_x = hconcat(&data.train.paired_u, &data.train.paired_s)?;
    let test_x = hconcat(&data.test.u, &data.test.s)?;
    baseline_logreg(
        &train_x,
        &data.train.paired_labels,
        &test_x,
        &data.test.labels,
        &LogRegConfig::default(),
    )
}
