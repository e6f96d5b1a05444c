use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn comet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comet"))
        .args(args)
        .env_remove("COMET_WORKERS")
        .output()
        .expect("spawn comet")
}

fn ok(args: &[&str]) -> String {
    let out = comet(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    comet(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small dataset and splits it into four blocks.
fn blocks(dir: &Path, classes: &str) -> std::path::PathBuf {
    let data = dir.join("data.csv");
    ok(&[
        "synth",
        "--n",
        "1200",
        "--d",
        "4",
        "--classes",
        classes,
        "--separation",
        "1.5",
        "--seed",
        "3",
        "--out",
        s(&data),
    ]);
    let out = dir.join("blocks");
    ok(&[
        "shuffle",
        "--input",
        s(&data),
        "--blocks",
        "4",
        "--seed",
        "7",
        "--out-dir",
        s(&out),
    ]);
    out
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["simulate", "--help"]), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["simulate", "--bogus"]), 1);
    assert_eq!(code(&["simulate", "--trials", "0"]), 1);
    assert_eq!(code(&["simulate", "--rule", "g7"]), 1);
    assert_eq!(
        code(&["table", "--m", "1000000", "--rule", "mlee", "--out", "/dev/null"]),
        1
    );
    assert_eq!(code(&["simulate", "--preset", "paper-sim", "--m", "100"]), 1);
}

#[test]
fn shuffle_is_deterministic_and_rejects_zero_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    ok(&["synth", "--n", "300", "--d", "3", "--seed", "1", "--out", s(&data)]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let listed = ok(&[
        "shuffle",
        "--input",
        s(&data),
        "--blocks",
        "4",
        "--seed",
        "7",
        "--out-dir",
        s(&a),
    ]);
    assert_eq!(listed.lines().count(), 4);
    ok(&[
        "shuffle",
        "--input",
        s(&data),
        "--blocks",
        "4",
        "--seed",
        "7",
        "--out-dir",
        s(&b),
    ]);
    for i in 0..4 {
        let name = format!("block-{i}.csv");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    assert_eq!(
        code(&["shuffle", "--input", s(&data), "--blocks", "0", "--out-dir", s(&a)]),
        1
    );
    assert_eq!(
        code(&[
            "shuffle",
            "--input",
            s(&dir.path().join("missing.csv")),
            "--blocks",
            "2",
            "--out-dir",
            s(&a)
        ]),
        2
    );
}

#[test]
fn train_then_predict_full_lazy_and_committee() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = blocks(dir.path(), "2");
    let ens = dir.path().join("ens");
    let out = ok(&[
        "train",
        "--blocks-dir",
        s(&blocks),
        "--trees-per-block",
        "50",
        "--partitions",
        "1",
        "--seed",
        "5",
        "--out-dir",
        s(&ens),
    ]);
    assert!(out.contains("total trees: 200"), "{out}");
    let header = fs::read_to_string(ens.join("part-1.ensemble")).unwrap();
    assert!(header.starts_with("COMET-ENSEMBLE v1 trees=200 features=4 classes=2\n"));

    let test = dir.path().join("test.csv");
    ok(&[
        "synth",
        "--n",
        "400",
        "--d",
        "4",
        "--separation",
        "1.5",
        "--seed",
        "4",
        "--out",
        s(&test),
    ]);
    let part = ens.join("part-1.ensemble");
    let full = ok(&["predict", "--ensemble", s(&part), "--test", s(&test), "--rule", "full"]);
    let lazy_csv = dir.path().join("lazy.csv");
    let lazy = ok(&[
        "predict",
        "--ensemble",
        s(&part),
        "--test",
        s(&test),
        "--rule",
        "g1-fpc",
        "--alpha",
        "0.01",
        "--out",
        s(&lazy_csv),
    ]);
    let votes = |text: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix("mean votes:"))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert_eq!(votes(&full), 200.0);
    assert!(votes(&lazy) < 100.0, "{lazy}");
    let rows = fs::read_to_string(&lazy_csv).unwrap();
    assert!(rows.starts_with("id,prediction,votes_used,stage\n"));
    assert_eq!(rows.lines().count(), 401);

    let ens4 = dir.path().join("ens4");
    ok(&[
        "train",
        "--blocks-dir",
        s(&blocks),
        "--trees-per-block",
        "50",
        "--partitions",
        "3",
        "--seed",
        "5",
        "--out-dir",
        s(&ens4),
    ]);
    let parts: Vec<String> = (1..=3)
        .map(|r| s(&ens4.join(format!("part-{r}.ensemble"))).to_string())
        .collect();
    let committee_csv = dir.path().join("committee.csv");
    ok(&[
        "predict",
        "--ensemble",
        &parts.join(","),
        "--test",
        s(&test),
        "--rule",
        "g1-fpc",
        "--committee",
        "--out",
        s(&committee_csv),
    ]);
    let stages: Vec<String> = fs::read_to_string(&committee_csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    assert_eq!(stages.len(), 400);
    assert!(stages.iter().all(|st| st == "subcommittee" || st == "full"));
}

#[test]
fn train_reports_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_ne!(
        code(&[
            "train",
            "--blocks-dir",
            s(&missing),
            "--out-dir",
            s(&dir.path().join("o"))
        ]),
        0
    );
    let bad = dir.path().join("bad");
    fs::create_dir_all(&bad).unwrap();
    fs::write(bad.join("block-0.csv"), "f0,label\n1.0,0\nx,1\n").unwrap();
    let out = dir.path().join("o2");
    assert_eq!(code(&["train", "--blocks-dir", s(&bad), "--out-dir", s(&out)]), 2);
    assert!(!out.join("part-1.ensemble").exists());
}

#[test]
fn mlee_on_multiclass_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = blocks(dir.path(), "3");
    let ens = dir.path().join("ens");
    ok(&[
        "train",
        "--blocks-dir",
        s(&blocks),
        "--trees-per-block",
        "5",
        "--out-dir",
        s(&ens),
    ]);
    let out = comet(&[
        "predict",
        "--ensemble",
        s(&ens.join("part-1.ensemble")),
        "--test",
        s(&blocks.join("block-0.csv")),
        "--rule",
        "mlee",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MLEE"));
}

#[test]
fn simulate_sweeps_and_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    ok(&[
        "simulate",
        "--m",
        "101",
        "--alpha",
        "0.05",
        "--rule",
        "all",
        "--trials",
        "2000",
        "--out",
        s(&sweep),
    ]);
    let text = fs::read_to_string(&sweep).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("rule,m,alpha,frac_evaluated,rel_error,lazy_acc,full_acc")
    );
    let rules: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rules, ["mlee", "g1", "g2", "g1-fpc", "g2-fpc"]);

    let hist = dir.path().join("hist.csv");
    ok(&["simulate", "--m", "101", "--trials", "2000", "--histogram", s(&hist)]);
    let text = fs::read_to_string(&hist).unwrap();
    let total: u64 = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 2000);
    assert_eq!(
        code(&["simulate", "--m", "101,201", "--trials", "10", "--histogram", s(&hist)]),
        1
    );

    // Same flags, same bytes.
    let again = dir.path().join("again.csv");
    ok(&[
        "simulate",
        "--m",
        "101",
        "--alpha",
        "0.05",
        "--rule",
        "all",
        "--trials",
        "2000",
        "--out",
        s(&again),
    ]);
    assert_eq!(fs::read(&sweep).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn table_rows_and_bench_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    ok(&[
        "table",
        "--m",
        "100000",
        "--rule",
        "g1-fpc",
        "--alpha",
        "0.01",
        "--out",
        s(&out),
    ]);
    // Header plus one row per n from the 15-vote floor to m.
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 100_000 - 15 + 1);

    let bench = ok(&[
        "bench-table",
        "--m-list",
        "100,1000",
        "--rules",
        "g1,mlee",
        "--repeats",
        "1",
    ]);
    assert!(bench.contains("g1 log-log slope"), "{bench}");
    assert!(bench.contains("mlee m=1000"), "{bench}");
}

#[test]
fn bite_sweep_writes_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let hold = dir.path().join("hold.csv");
    ok(&["synth", "--n", "600", "--d", "4", "--seed", "1", "--out", s(&train)]);
    ok(&["synth", "--n", "200", "--d", "4", "--seed", "2", "--out", s(&hold)]);
    let out = dir.path().join("sweep.csv");
    ok(&[
        "bite-sweep",
        "--train",
        s(&train),
        "--holdout",
        s(&hold),
        "--sizes",
        "20,60",
        "--iterations",
        "5",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("bite_size,accuracy"));
    assert_eq!(text.lines().count(), 3);
    assert_eq!(
        code(&[
            "bite-sweep",
            "--train",
            s(&train),
            "--holdout",
            s(&hold),
            "--sizes",
            "7"
        ]),
        1
    );
}
