//! Classification metrics, repeated-run aggregation and a multinomial
//! logistic-regression reference model.

use crate::diffnet::{softmax_rows, Matrix};
use crate::error::{Error, Result};
use crate::features::NUM_CLASSES;

/// Counts with rows = true class, columns = predicted class.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = ConfusionMatrix::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(Error::Data(format!("class index outside 0..{NUM_CLASSES}")));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_class_f1: [f64; NUM_CLASSES],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Per-class precision, recall and F1 take 0 when their denominator is 0;
/// macro values are unweighted means over the four classes.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data(
            "cannot compute metrics of an empty confusion matrix".into(),
        ));
    }
    let mut f1 = [0.0; NUM_CLASSES];
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    let mut trace = 0;
    for k in 0..NUM_CLASSES {
        let tp = cm.counts[k][k] as f64;
        let predicted: u64 = (0..NUM_CLASSES).map(|t| cm.counts[t][k]).sum();
        let actual: u64 = cm.counts[k].iter().sum();
        let p = ratio(tp, predicted as f64);
        let r = ratio(tp, actual as f64);
        f1[k] = ratio(2.0 * p * r, p + r);
        p_sum += p;
        r_sum += r;
        trace += cm.counts[k][k];
    }
    let n = NUM_CLASSES as f64;
    Ok(MetricsReport {
        per_class_f1: f1,
        macro_precision: p_sum / n,
        macro_recall: r_sum / n,
        macro_f1: f1.iter().sum::<f64>() / n,
        accuracy: trace as f64 / total as f64,
    })
}

/// Mean and population standard deviation of one metric over runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        if let Some(&first) = values.first() {
            if values.iter().all(|&v| v == first) {
                return MeanStd { mean: first, std: 0.0 };
            }
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for MeanStd {
    /// `0.40495(0.013)`: mean to five decimals, std to three.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.5}({:.3})", self.mean, self.std)
    }
}

/// Column names of a metrics row, in `RepeatedReport::columns` order.
pub const METRIC_COLUMNS: [&str; 8] = [
    "f1_0",
    "f1_1",
    "f1_2",
    "f1_3",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "accuracy",
];

impl MetricsReport {
    pub fn values(&self) -> [f64; 8] {
        let f = self.per_class_f1;
        [
            f[0],
            f[1],
            f[2],
            f[3],
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.accuracy,
        ]
    }
}

/// Mean-of-run-metrics summary of repeated runs.
#[derive(Clone, Debug, PartialEq)]
pub struct RepeatedReport {
    pub runs: Vec<MetricsReport>,
    /// `(run index, error)` of runs that aborted.
    pub failures: Vec<(usize, String)>,
}

impl RepeatedReport {
    pub fn columns(&self) -> Vec<MeanStd> {
        (0..METRIC_COLUMNS.len())
            .map(|c| MeanStd::of(&self.runs.iter().map(|r| r.values()[c]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn macro_f1(&self) -> MeanStd {
        self.columns()[6]
    }

    pub fn accuracy(&self) -> MeanStd {
        self.columns()[7]
    }

    pub fn class_f1(&self, k: usize) -> MeanStd {
        self.columns()[k]
    }
}

/// Runs `run(i)` for `i in 0..n` and aggregates the metrics. Failed runs
/// are recorded and left out of the statistics; at least one run must
/// succeed.
pub fn repeated_runs(n: usize, mut run: impl FnMut(usize) -> Result<MetricsReport>) -> Result<RepeatedReport> {
    if n < 2 {
        return Err(Error::Config(format!("repeated runs need n >= 2, got {n}")));
    }
    let mut runs = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for i in 0..n {
        match run(i) {
            Ok(m) => runs.push(m),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    if runs.is_empty() {
        return Err(Error::Data(format!("all {n} runs failed; first: {}", failures[0].1)));
    }
    Ok(RepeatedReport { runs, failures })
}

/// Multinomial logistic regression trained by full-batch gradient descent
/// from zero weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LogReg {
    /// `(features + 1) x classes`, bias in the last row.
    pub weights: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            learning_rate: 0.5,
            iterations: 2000,
            l2: 1e-3,
        }
    }
}

fn with_bias(x: &Matrix) -> Matrix {
    let mut data = Vec::with_capacity(x.rows() * (x.cols() + 1));
    for r in 0..x.rows() {
        data.extend_from_slice(x.row(r));
        data.push(1.0);
    }
    Matrix::new(x.rows(), x.cols() + 1, data).expect("finite features")
}

impl LogReg {
    pub fn fit(x: &Matrix, labels: &[usize], config: &LogRegConfig) -> Result<LogReg> {
        if x.rows() == 0 || x.rows() != labels.len() {
            return Err(Error::Data(
                "logistic regression needs one label per training row".into(),
            ));
        }
        if labels.iter().any(|&l| l >= NUM_CLASSES) {
            return Err(Error::Data(format!("labels must be below {NUM_CLASSES}")));
        }
        if labels.iter().all(|&l| l == labels[0]) {
            return Err(Error::Data("training labels contain a single class".into()));
        }
        let xb = with_bias(x);
        let xt = xb.transpose();
        let n = x.rows() as f64;
        let mut w = Matrix::zeros(xb.cols(), NUM_CLASSES);
        for _ in 0..config.iterations {
            let mut p = softmax_rows(&xb.matmul(&w)?);
            for (r, &l) in labels.iter().enumerate() {
                p.row_mut(r)[l] -= 1.0;
            }
            let mut grad = xt.matmul(&p)?;
            grad.scale(1.0 / n);
            let rows = w.rows();
            for r in 0..rows - 1 {
                for c in 0..NUM_CLASSES {
                    let v = grad.get(r, c) + config.l2 * w.get(r, c);
                    grad.set(r, c, v);
                }
            }
            w.add_scaled(&grad, -config.learning_rate);
        }
        if !w.is_finite() {
            return Err(Error::NonFinite("logistic regression diverged".into()));
        }
        Ok(LogReg { weights: w })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(with_bias(x).matmul(&self.weights)?.argmax_rows())
    }
}

/// Fits on the training rows and reports metrics on the test rows.
pub fn baseline_logreg(
    train_x: &Matrix,
    train_labels: &[usize],
    test_x: &Matrix,
    test_labels: &[usize],
    config: &LogRegConfig,
) -> Result<MetricsReport> {
    if test_x.rows() == 0 {
        return Err(Error::Data("empty test split".into()));
    }
    let model = LogReg::fit(train_x, train_labels, config)?;
    let cm = ConfusionMatrix::from_predictions(test_labels, &model.predict(test_x)?)?;
    compute_metrics(&cm)
}

/// Row-wise concatenation `[a | b]`.
pub fn hconcat(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!("{} rows vs {} rows", a.rows(), b.rows())));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for r in 0..a.rows() {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    Matrix::new(a.rows(), a.cols() + b.cols(), data)
}
