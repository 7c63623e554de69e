use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use adgan_core::cli::{run, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};

fn adgan(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv: Vec<&str> = std::iter::once("adgan").chain(args.iter().copied()).collect();
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = adgan(args);
    assert_eq!(code, EXIT_OK, "{args:?}: {err}");
    out
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small dataset plus a short training config.
fn setup(root: &Path) -> (String, String) {
    let synth_cfg = root.join("synth.txt");
    std::fs::write(&synth_cfg, "n_total = 600\nn_paired = 120\ncollision_count = 5\n").unwrap();
    let data = root.join("data");
    ok(&["synth", "--config", s(&synth_cfg), "--seed", "7", "--out", s(&data)]);
    let train_cfg = root.join("train.txt");
    std::fs::write(&train_cfg, "# short run\nstep = 3\n").unwrap();
    (s(&data).to_string(), s(&train_cfg).to_string())
}

#[test]
fn every_command_is_repeatable_byte_for_byte() {
    let root = tempfile::tempdir().unwrap();
    let (data, cfg) = setup(root.path());
    let again = root.path().join("data2");
    let synth_cfg = root.path().join("synth.txt");
    ok(&["synth", "--config", s(&synth_cfg), "--seed", "7", "--out", s(&again)]);
    assert_eq!(dir_contents(Path::new(&data)), dir_contents(&again));

    for round in ["a", "b"] {
        let o = |name: &str| s(&root.path().join(round).join(name)).to_string();
        let outs = [
            ok(&["featurize", "--data", &data, "--out", &o("feat"), "--format", "csv"]),
            ok(&[
                "train",
                "--data",
                &data,
                "--config",
                &cfg,
                "--seed",
                "3",
                "--out",
                &o("train"),
            ]),
            ok(&[
                "eval",
                "--data",
                &data,
                "--checkpoint",
                &o("train/checkpoint.txt"),
                "--out",
                &o("eval"),
            ]),
            ok(&[
                "analyze",
                "--data",
                &data,
                "--out",
                &o("analyze"),
                "--format",
                "json-lines",
            ]),
        ];
        std::fs::write(root.path().join(round).join("stdout.txt"), outs.concat()).unwrap();
    }
    for sub in ["feat", "train", "eval", "analyze"] {
        let (a, b) = (root.path().join("a").join(sub), root.path().join("b").join(sub));
        let ca = dir_contents(&a);
        assert!(!ca.is_empty());
        assert_eq!(ca, dir_contents(&b), "{sub} differs");
        for (name, bytes) in ca {
            if name.ends_with(".csv") || name.ends_with(".txt") {
                let text = String::from_utf8(bytes).unwrap();
                // Checkpoints keep their format line first.
                let skip = usize::from(text.starts_with("adgan-checkpoint"));
                let first = text.lines().nth(skip).unwrap_or("");
                assert!(
                    first.starts_with("# adgan ") && first.contains(" seed=") && first.contains(" config="),
                    "{sub}/{name}: {first}"
                );
            }
        }
    }
    assert_eq!(
        std::fs::read(root.path().join("a/stdout.txt")).unwrap(),
        std::fs::read(root.path().join("b/stdout.txt")).unwrap()
    );
}

#[test]
fn train_log_header_records_batch_settings() {
    let root = tempfile::tempdir().unwrap();
    let (data, cfg) = setup(root.path());
    let out = root.path().join("t");
    ok(&[
        "train",
        "--data",
        &data,
        "--preset",
        "paper",
        "--strategy",
        "oversample",
        "--config",
        &cfg,
        "--out",
        s(&out),
    ]);
    let log = std::fs::read_to_string(out.join("train_log.csv")).unwrap();
    let header: Vec<&str> = log.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(header[1].contains("I_d=20 c=5 size=64"), "{header:?}");
    assert!(header[1].contains("strategy=over"));
    assert!(header[2].contains("discriminator_steps=60 generator_steps=3"));
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 1 + 3);
    let config = std::fs::read_to_string(out.join("train_config.txt")).unwrap();
    assert!(config.contains("lr_d = 0.0001") && config.contains("lr_gd = 0.001"));
}

#[test]
fn reproduce_table_has_four_rows_and_ignores_job_count() {
    let root = tempfile::tempdir().unwrap();
    let synth = root.path().join("synth.txt");
    std::fs::write(&synth, "n_total = 600\nn_paired = 120\ncollision_count = 5\n").unwrap();
    let cfg = root.path().join("train.txt");
    std::fs::write(&cfg, "step = 2\n").unwrap();
    let args = |out: &str, jobs: &str| -> Vec<String> {
        [
            "reproduce",
            "--synth-config",
            s(&synth),
            "--config",
            s(&cfg),
            "--runs",
            "3",
            "--jobs",
            jobs,
            "--out",
            out,
        ]
        .map(String::from)
        .to_vec()
    };
    let (o1, o2) = (root.path().join("r1"), root.path().join("r2"));
    let t1 = ok(&args(s(&o1), "1").iter().map(String::as_str).collect::<Vec<_>>());
    let t2 = ok(&args(s(&o2), "3").iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(t1, t2);
    assert_eq!(dir_contents(&o1), dir_contents(&o2));
    let rows: Vec<&str> = t1
        .lines()
        .skip(2)
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(rows, ["Baseline", "RADGAN", "UADGAN", "OADGAN"]);
    // The baseline is deterministic, so its spread is zero.
    assert!(t1.lines().nth(2).unwrap().contains("(0.000)"));
    let results = std::fs::read_to_string(o1.join("results.csv")).unwrap();
    assert!(results.lines().nth(1).unwrap().starts_with("model,f1_0_mean,f1_0_std,"));
    let runs = std::fs::read_to_string(o1.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 2 + 9);
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    assert_eq!(adgan(&[]).0, EXIT_USAGE);
    assert_eq!(adgan(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(adgan(&["train", "--strategy", "smote", "--data", "x"]).0, EXIT_USAGE);
    assert_eq!(adgan(&["--help"]).0, EXIT_OK);

    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("missing");
    assert_eq!(
        adgan(&["featurize", "--data", s(&missing), "--out", s(&root.path().join("o"))]).0,
        EXIT_DATA
    );
    let (data, _) = setup(root.path());
    let bad = root.path().join("bad.txt");
    std::fs::write(&bad, "step = 0\n").unwrap();
    assert_eq!(
        adgan(&[
            "train",
            "--data",
            &data,
            "--config",
            s(&bad),
            "--out",
            s(&root.path().join("o"))
        ])
        .0,
        EXIT_DATA
    );

    let huge = root.path().join("huge.txt");
    std::fs::write(&huge, "step = 50\nlr_d = 1e300\nlr_gd = 1e300\n").unwrap();
    let (code, _, err) = adgan(&[
        "train",
        "--data",
        &data,
        "--config",
        s(&huge),
        "--out",
        s(&root.path().join("o")),
    ]);
    assert_eq!(code, EXIT_NUMERICAL, "{err}");
    assert!(err.contains("epoch"), "{err}");
}

#[test]
fn binary_uses_output_directory_from_environment() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("synth.txt");
    std::fs::write(&cfg, "n_total = 300\nn_paired = 60\ncollision_count = 2\n").unwrap();
    let target = root.path().join("from_env");
    let status = Command::new(env!("CARGO_BIN_EXE_adgan"))
        .args(["synth", "--config", s(&cfg)])
        .env("ADGAN_OUT", &target)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(target.join("surveys.csv").exists());
    let code = Command::new(env!("CARGO_BIN_EXE_adgan"))
        .arg("nope")
        .output()
        .unwrap()
        .status
        .code();
    assert_eq!(code, Some(EXIT_USAGE));
}
