use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::output::{write_text, Cell, Format, Table};
use super::{Command, DataArgs, OutArgs, Preset, TrainArgs};
use crate::adgan::ViewEmbeddingSpec;
use crate::batching::SamplingStrategy;
use crate::dataset::{prepare, PreparedData};
use crate::error::{Error, Result};
use crate::evalmetrics::{compute_metrics, ConfusionMatrix, MeanStd, MetricsReport, RepeatedReport, METRIC_COLUMNS};
use crate::experiment::{adgan_suite_parallel, baseline, evaluate};
use crate::features::{
    extract_consumer_models, group_analysis, multivalued_report, read_labels, read_surveys, read_transactions,
    CategoryScheme, ConsumerId, GroupReport, LabelRecord, SurveyRecord, TransactionRecord, CATEGORY_LABELS, LIFE_DIMS,
    NUM_CLASSES, SURVEY_QUESTIONS,
};
use crate::synthgen::{default_desk_preset, generate, paper_scale_preset, SynthConfig};
use crate::trainer::{checkpoint_load, checkpoint_save_with, checkpoint_text, train, TrainConfig, TrainLog};

fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn provenance(command: &str, seed: u64, hash: &str) -> String {
    format!("adgan {command} seed={seed} config={hash}")
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn emit(stdout: &mut dyn Write, table: &Table, format: Format) -> Result<()> {
    stdout
        .write_all(table.render(format)?.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Applies `key = value` lines; `#` starts a comment.
fn apply_kv_text(text: &str, mut apply: impl FnMut(&str, &str) -> Result<()>) -> Result<()> {
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", n + 1)))?;
        apply(k.trim(), v.trim()).map_err(|e| Error::Config(format!("config line {}: {e}", n + 1)))?;
    }
    Ok(())
}

pub(super) fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Synth {
            config,
            preset,
            seed,
            out,
        } => synth(config.as_deref(), preset, seed, &out, stdout),
        Command::Featurize { data, out } => featurize(&data, &out, stdout),
        Command::Train { data, train, out } => train_cmd(&data, &train, &out, stdout, stderr),
        Command::Eval { data, checkpoint, out } => eval(&data, &checkpoint, &out, stdout),
        Command::Analyze { data, threshold, out } => analyze(&data, threshold, &out, stdout),
        Command::Reproduce {
            train,
            synth_config,
            runs,
            jobs,
            out,
        } => reproduce(&train, synth_config.as_deref(), runs, jobs, &out, stdout, stderr),
    }
}

fn synth_config(preset: Preset, file: Option<&Path>, seed: Option<u64>) -> Result<SynthConfig> {
    let mut c = match preset {
        Preset::Desk => default_desk_preset(),
        Preset::Paper => paper_scale_preset(),
    };
    if let Some(path) = file {
        apply_kv_text(&read_file(path)?, |k, v| c.apply(k, v))?;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn kv_text(kv: &[(&str, String)]) -> String {
    kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn class_count_table(surveys: &[SurveyRecord], labels: &[LabelRecord]) -> Table {
    let mut paired = [0usize; NUM_CLASSES];
    let mut unpaired = [0usize; NUM_CLASSES];
    surveys
        .iter()
        .filter_map(|s| s.label)
        .for_each(|l| paired[usize::from(l)] += 1);
    labels.iter().for_each(|l| unpaired[usize::from(l.label)] += 1);
    let mut t = Table::new(&["class", "paired", "unpaired"]);
    for k in 0..NUM_CLASSES {
        t.push(vec![k.into(), paired[k].into(), unpaired[k].into()]);
    }
    t
}

fn synth(file: Option<&Path>, preset: Preset, seed: Option<u64>, out: &OutArgs, stdout: &mut dyn Write) -> Result<()> {
    let config = synth_config(preset, file, seed)?;
    let text = kv_text(&config.to_kv());
    let prov = provenance("synth", config.seed, &digest(&text));
    let data = generate(&config)?;
    data.write_dir(&out.out, Some(&prov))?;
    write_text(&out.out.join("synth_config.txt"), &format!("# {prov}\n{text}"))?;
    let mut pairs = Table::new(&["consumer_a", "consumer_b"]);
    for &(a, b) in &data.planted_pairs {
        pairs.push(vec![a.into(), b.into()]);
    }
    pairs.save_csv(&out.out.join("planted_pairs.csv"), &prov)?;
    emit(stdout, &class_count_table(&data.surveys, &data.labels), out.format)
}

struct Loaded {
    transactions: Vec<TransactionRecord>,
    surveys: Vec<SurveyRecord>,
    labels: Vec<LabelRecord>,
    scheme: CategoryScheme,
    /// Hash of the input files, scheme and split settings.
    hash: String,
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let dir = &args.data;
    let scheme_text = match &args.scheme {
        Some(p) => read_file(p)?,
        None => CategoryScheme::default().to_text(),
    };
    let scheme = CategoryScheme::parse(&scheme_text)?;
    let mut h = Sha256::new();
    for name in ["transactions.csv", "surveys.csv", "labels.csv"] {
        let p = dir.join(name);
        h.update(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
    }
    h.update(scheme.to_text().as_bytes());
    h.update(format!("split_seed={} test_fraction={}", args.split_seed, args.test_fraction).as_bytes());
    let hash = h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect();
    Ok(Loaded {
        transactions: read_transactions(&dir.join("transactions.csv"))?,
        surveys: read_surveys(&dir.join("surveys.csv"))?,
        labels: read_labels(&dir.join("labels.csv"))?,
        scheme,
        hash,
    })
}

impl Loaded {
    fn prepare(&self, args: &DataArgs) -> Result<PreparedData> {
        prepare(
            &self.transactions,
            &self.surveys,
            &self.labels,
            &self.scheme,
            args.test_fraction,
            args.split_seed,
        )
    }

    /// Known label of every consumer, from surveys and the label file.
    fn label_map(&self) -> BTreeMap<ConsumerId, usize> {
        let mut m: BTreeMap<ConsumerId, usize> = self
            .labels
            .iter()
            .map(|l| (l.consumer_id, usize::from(l.label)))
            .collect();
        for s in &self.surveys {
            if let Some(l) = s.label {
                m.insert(s.consumer_id, usize::from(l));
            }
        }
        m
    }

    fn all_ids(&self) -> Vec<ConsumerId> {
        let mut ids: Vec<ConsumerId> = self
            .transactions
            .iter()
            .map(|t| t.consumer_id)
            .chain(self.surveys.iter().map(|s| s.consumer_id))
            .chain(self.labels.iter().map(|l| l.consumer_id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn life_label(d: usize) -> &'static str {
    CATEGORY_LABELS[3 + d]
}

fn consumer_columns() -> Vec<String> {
    let mut cols = vec!["consumer_id".to_string()];
    cols.extend(["stratum_basic", "stratum_social", "stratum_self"].map(String::from));
    cols.extend((0..LIFE_DIMS).map(|d| format!("life_{}", life_label(d).to_lowercase())));
    cols
}

fn group_tables(report: &GroupReport) -> (Table, Table) {
    let mut capacity = Table::new(&[
        "group",
        "consumers",
        "total_expense",
        "mean_expense",
        "scope_size",
        "overlap_next",
    ]);
    let g = report.groups.len();
    for i in 0..g {
        let n = report.groups[i].len();
        let next = if i + 1 < g {
            Cell::Num(report.overlap[i][i + 1])
        } else {
            Cell::Text(String::new())
        };
        capacity.push(vec![
            i.into(),
            n.into(),
            report.total_expense[i].into(),
            (report.total_expense[i] / n as f64).into(),
            report.scopes[i].len().into(),
            next,
        ]);
    }
    let mut cols = vec!["group".to_string()];
    cols.extend((0..g).map(|j| format!("g{j}")));
    let mut overlap = Table::new(&cols);
    for (i, row) in report.overlap.iter().enumerate() {
        let mut r: Vec<Cell> = vec![i.into()];
        r.extend(row.iter().map(|&v| Cell::Num(v)));
        overlap.push(r);
    }
    (capacity, overlap)
}

fn featurize(args: &DataArgs, out: &OutArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = load(args)?;
    let prepared = data.prepare(args)?;
    let prov = provenance("featurize", args.split_seed, &data.hash);
    create_dir(&out.out)?;

    let labels = data.label_map();
    let surveyed: BTreeMap<ConsumerId, ()> = data
        .surveys
        .iter()
        .filter(|s| s.label.is_some())
        .map(|s| (s.consumer_id, ()))
        .collect();
    let test: std::collections::BTreeSet<ConsumerId> = prepared.test.ids.iter().copied().collect();
    let mut cols = consumer_columns();
    cols.extend(["zero_expense", "role", "label"].map(String::from));
    let mut consumers = Table::new(&cols);
    for m in extract_consumer_models(&data.transactions, &data.scheme, &data.all_ids()) {
        let id = m.consumer_id;
        let role = match (surveyed.contains_key(&id), test.contains(&id), labels.contains_key(&id)) {
            (true, true, _) => "test",
            (true, false, _) => "paired",
            (false, _, true) => "unpaired",
            _ => "unlabelled",
        };
        let mut row: Vec<Cell> = vec![id.into()];
        row.extend(m.to_vec().into_iter().map(Cell::Num));
        row.push(usize::from(m.zero_expense).into());
        row.push(role.into());
        row.push(labels.get(&id).map_or(Cell::Text(String::new()), |&l| l.into()));
        consumers.push(row);
    }
    consumers.save_csv(&out.out.join("consumer_features.csv"), &prov)?;

    let mut cols = vec!["consumer_id".to_string(), "split".to_string()];
    cols.extend((1..=SURVEY_QUESTIONS).map(|q| format!("s{q}")));
    cols.push("label".into());
    let mut surveys = Table::new(&cols);
    let mut train_ids: Vec<ConsumerId> = surveyed.keys().filter(|id| !test.contains(id)).copied().collect();
    train_ids.sort_unstable();
    let blocks = [
        (
            "train",
            &train_ids,
            &prepared.train.paired_s,
            &prepared.train.paired_labels,
        ),
        ("test", &prepared.test.ids, &prepared.test.s, &prepared.test.labels),
    ];
    for (split, ids, s, l) in blocks {
        for (r, id) in ids.iter().enumerate() {
            let mut row: Vec<Cell> = vec![(*id).into(), split.into()];
            row.extend(s.row(r).iter().map(|&v| Cell::Num(v)));
            row.push(l[r].into());
            surveys.push(row);
        }
    }
    surveys.save_csv(&out.out.join("survey_features.csv"), &prov)?;

    let mut stats = Table::new(&["question", "mean", "std"]);
    for q in 0..SURVEY_QUESTIONS {
        stats.push(vec![
            (q + 1).into(),
            prepared.stats.mean[q].into(),
            prepared.stats.std[q].into(),
        ]);
    }
    stats.save_csv(&out.out.join("survey_stats.csv"), &prov)?;

    let report = group_analysis(&data.transactions)?;
    let (capacity, overlap) = group_tables(&report);
    capacity.save_csv(&out.out.join("group_report.csv"), &prov)?;
    overlap.save_csv(&out.out.join("group_overlap.csv"), &prov)?;

    let mut summary = Table::new(&["set", "consumers"]);
    summary.push(vec!["paired_train".into(), prepared.train.paired_labels.len().into()]);
    summary.push(vec!["paired_test".into(), prepared.test.labels.len().into()]);
    summary.push(vec!["unpaired".into(), prepared.train.unpaired_labels.len().into()]);
    summary.push(vec!["unlabelled".into(), prepared.unlabelled.into()]);
    summary.push(vec![
        "zero_expense_excluded".into(),
        report.excluded_zero_expense.into(),
    ]);
    emit(stdout, &summary, out.format)
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut c = match args.preset {
        Preset::Desk => TrainConfig::desk(),
        Preset::Paper => TrainConfig::paper(),
    };
    if let Some(path) = &args.config {
        c.apply_text(&read_file(path)?)?;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(s) = args.strategy {
        c.strategy = s.into();
    }
    c.validate()?;
    Ok(c)
}

fn train_log_text(log: &TrainLog, config: &TrainConfig, prov: &str) -> String {
    let mut text = format!(
        "# {prov}\n# I_d={} c={} size={} mu={} sigma={} step={} strategy={} lr_d={} lr_gd={} lambda={}\n",
        config.i_d,
        config.c,
        config.size,
        config.mu,
        config.sigma,
        config.step,
        config.strategy,
        config.lr_d,
        config.lr_gd,
        config.lambda
    );
    text.push_str(&format!(
        "# discriminator_steps={} generator_steps={} aligned_steps={} degenerate_events={}\n",
        log.discriminator_steps, log.generator_steps, log.aligned_steps, log.degenerate_events
    ));
    text.push_str(TrainLog::CSV_HEADER);
    text.push('\n');
    for row in log.csv_rows() {
        text.push_str(&row);
        text.push('\n');
    }
    text
}

fn metrics_table(rows: &[(&str, &MetricsReport)]) -> Table {
    let mut cols = vec!["model"];
    cols.extend(METRIC_COLUMNS);
    let mut t = Table::new(&cols);
    for (name, m) in rows {
        let mut r: Vec<Cell> = vec![(*name).into()];
        r.extend(m.values().into_iter().map(Cell::Num));
        t.push(r);
    }
    t
}

fn train_cmd(
    args: &DataArgs,
    targs: &TrainArgs,
    out: &OutArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let data = load(args)?;
    let prepared = data.prepare(args)?;
    let config = train_config(targs)?;
    let prov = provenance(
        "train",
        config.seed,
        &digest(&format!("{}{}", config.to_text(), data.hash)),
    );
    create_dir(&out.out)?;
    let started = Instant::now();
    let (params, log) = train(&prepared.train, &config)?;
    let _ = writeln!(stderr, "trained {} epochs in {:.1?}", config.step, started.elapsed());
    checkpoint_save_with(&params, &out.out.join("checkpoint.txt"), &prov)?;
    write_text(&out.out.join("train_log.csv"), &train_log_text(&log, &config, &prov))?;
    write_text(
        &out.out.join("train_config.txt"),
        &format!("# {prov}\n{}", config.to_text()),
    )?;
    let m = evaluate(&params, &prepared.test)?;
    emit(
        stdout,
        &metrics_table(&[(config.strategy.variant_name(), &m)]),
        out.format,
    )
}

fn confusion_table(cm: &ConfusionMatrix) -> Table {
    let mut cols = vec!["true_class".to_string()];
    cols.extend((0..NUM_CLASSES).map(|k| format!("pred_{k}")));
    let mut t = Table::new(&cols);
    for (k, row) in cm.counts.iter().enumerate() {
        let mut r: Vec<Cell> = vec![k.into()];
        r.extend(row.iter().map(|&c| Cell::Int(c)));
        t.push(r);
    }
    t
}

fn eval(args: &DataArgs, checkpoint: &Path, out: &OutArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = load(args)?;
    let prepared = data.prepare(args)?;
    let params = checkpoint_load(checkpoint)?;
    let prov = provenance(
        "eval",
        args.split_seed,
        &digest(&format!("{}{}", checkpoint_text(&params), data.hash)),
    );
    let predicted = crate::trainer::predict(&params, &prepared.test.u, &prepared.test.s)?;
    let cm = ConfusionMatrix::from_predictions(&prepared.test.labels, &predicted)?;
    let m = compute_metrics(&cm)?;
    let b = baseline(&prepared)?;
    let table = metrics_table(&[("adgan", &m), ("baseline", &b)]);
    create_dir(&out.out)?;
    table.save_csv(&out.out.join("metrics.csv"), &prov)?;
    confusion_table(&cm).save_csv(&out.out.join("confusion.csv"), &prov)?;
    emit(stdout, &table, out.format)
}

fn analyze(args: &DataArgs, threshold: f64, out: &OutArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = load(args)?;
    let prov = provenance(
        "analyze",
        args.split_seed,
        &digest(&format!("{}threshold={threshold}", data.hash)),
    );
    create_dir(&out.out)?;

    let report = group_analysis(&data.transactions)?;
    let (capacity, overlap) = group_tables(&report);
    capacity.save_csv(&out.out.join("group_capacity.csv"), &prov)?;
    overlap.save_csv(&out.out.join("group_overlap.csv"), &prov)?;

    // Stratum and life means per known class, then over everyone.
    let labels = data.label_map();
    let models = extract_consumer_models(&data.transactions, &data.scheme, &data.all_ids());
    let mut sums = vec![(0usize, vec![0.0; 3 + LIFE_DIMS]); NUM_CLASSES + 1];
    for m in &models {
        let v = m.to_vec();
        let mut add = |slot: usize| {
            sums[slot].0 += 1;
            sums[slot].1.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
        };
        if let Some(&l) = labels.get(&m.consumer_id) {
            add(l);
        }
        add(NUM_CLASSES);
    }
    let mut cols = vec!["class".to_string(), "consumers".to_string()];
    cols.extend(consumer_columns().into_iter().skip(1));
    let (mut stratum, mut life) = (Table::new(&cols[..5]), Table::new(&[&cols[..2], &cols[5..]].concat()));
    for (slot, (n, s)) in sums.iter().enumerate() {
        let name: Cell = if slot < NUM_CLASSES { slot.into() } else { "all".into() };
        let mean = |x: f64| Cell::Num(if *n > 0 { x / *n as f64 } else { 0.0 });
        let mut sr = vec![name.clone(), (*n).into()];
        sr.extend(s[..3].iter().map(|&x| mean(x)));
        stratum.push(sr);
        let mut lr = vec![name, (*n).into()];
        lr.extend(s[3..].iter().map(|&x| mean(x)));
        life.push(lr);
    }
    stratum.save_csv(&out.out.join("stratum_summary.csv"), &prov)?;
    life.save_csv(&out.out.join("life_summary.csv"), &prov)?;

    let mv = multivalued_report(&data.surveys, threshold)?;
    let mut flagged = Table::new(&["consumer_id", "label"]);
    for id in &mv.flagged {
        flagged.push(vec![
            (*id).into(),
            labels.get(id).map_or(Cell::Text(String::new()), |&l| l.into()),
        ]);
    }
    flagged.save_csv(&out.out.join("multivalued.csv"), &prov)?;

    class_count_table(&data.surveys, &data.labels).save_csv(&out.out.join("class_counts.csv"), &prov)?;

    // Answer distribution per survey dimension and class.
    let dims = ViewEmbeddingSpec::survey_default().groups;
    let mut counts = vec![[[0usize; 7]; NUM_CLASSES]; dims.len()];
    for s in data.surveys.iter().filter(|s| s.label.is_some()) {
        let k = usize::from(s.label.unwrap_or(0));
        let mut q = 0;
        for (d, &size) in dims.iter().enumerate() {
            for a in &s.answers[q..q + size] {
                counts[d][k][usize::from(*a) - 1] += 1;
            }
            q += size;
        }
    }
    let mut feedback = Table::new(&["dimension", "class", "answer", "fraction"]);
    for (d, per_class) in counts.iter().enumerate() {
        for (k, hist) in per_class.iter().enumerate() {
            let total: usize = hist.iter().sum();
            for (a, &c) in hist.iter().enumerate() {
                let f = if total > 0 { c as f64 / total as f64 } else { 0.0 };
                feedback.push(vec![d.into(), k.into(), (a + 1).into(), f.into()]);
            }
        }
    }
    feedback.save_csv(&out.out.join("feedback_distribution.csv"), &prov)?;

    let mut summary = Table::new(&["quantity", "value"]);
    summary.push(vec!["consumers".into(), models.len().into()]);
    summary.push(vec![
        "zero_expense_excluded".into(),
        report.excluded_zero_expense.into(),
    ]);
    summary.push(vec!["multivalued_threshold".into(), threshold.into()]);
    summary.push(vec!["multivalued_consumers".into(), mv.count().into()]);
    summary.push(vec!["multivalued_pairs".into(), mv.pairs.into()]);
    emit(stdout, &summary, out.format)
}

fn suite_row(name: &str, report: &RepeatedReport) -> Vec<Cell> {
    let mut r: Vec<Cell> = vec![name.into()];
    r.extend(report.columns().into_iter().map(Cell::Stat));
    r
}

#[allow(clippy::too_many_arguments)]
fn reproduce(
    targs: &TrainArgs,
    synth_file: Option<&Path>,
    runs: usize,
    jobs: usize,
    out: &OutArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let sc = synth_config(targs.preset, synth_file, targs.seed)?;
    let config = train_config(targs)?;
    let text = format!("{}{}runs={runs}\n", kv_text(&sc.to_kv()), config.to_text());
    let prov = provenance("reproduce", config.seed, &digest(&text));
    let data = generate(&sc)?;
    let prepared = prepare(
        &data.transactions,
        &data.surveys,
        &data.labels,
        &CategoryScheme::default(),
        0.3,
        0,
    )?;

    let mut cols = vec!["model"];
    cols.extend(METRIC_COLUMNS);
    let mut table = Table::new(&cols);
    let mut per_run = Table::new(&[&["model", "run", "seed"][..], &METRIC_COLUMNS[..]].concat());

    let b = baseline(&prepared)?;
    let mut row: Vec<Cell> = vec!["Baseline".into()];
    row.extend(b.values().into_iter().map(|v| Cell::Stat(MeanStd::of(&[v]))));
    table.push(row);

    for strategy in [
        SamplingStrategy::Random,
        SamplingStrategy::Undersample,
        SamplingStrategy::Oversample,
    ] {
        let started = Instant::now();
        let report = adgan_suite_parallel(&prepared, &config, strategy, runs, jobs)?;
        let name = strategy.variant_name();
        let _ = writeln!(stderr, "{name}: {} runs in {:.1?}", runs, started.elapsed());
        for (i, msg) in &report.failures {
            let _ = writeln!(stderr, "warning: {name} run {i} failed: {msg}");
        }
        let failed: Vec<usize> = report.failures.iter().map(|f| f.0).collect();
        for (m, i) in report.runs.iter().zip((0..runs).filter(|i| !failed.contains(i))) {
            let mut r: Vec<Cell> = vec![name.into(), i.into(), config.seed.wrapping_add(i as u64).into()];
            r.extend(m.values().into_iter().map(Cell::Num));
            per_run.push(r);
        }
        table.push(suite_row(name, &report));
    }
    create_dir(&out.out)?;
    table.save_csv(&out.out.join("results.csv"), &prov)?;
    per_run.save_csv(&out.out.join("runs.csv"), &prov)?;
    write_text(&out.out.join("reproduce_config.txt"), &format!("# {prov}\n{text}"))?;
    emit(stdout, &table, out.format)
}
