use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepconn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_args<'a>(reviews: &'a Path, glove: &'a Path, out: &'a Path) -> Vec<&'a str> {
    vec![
        "train",
        "--data",
        s(reviews),
        "--embeddings",
        s(glove),
        "--dim",
        "50",
        "--out-dir",
        s(out),
    ]
}

#[test]
fn stats_reports_fixture_counts() {
    let o = run(&["stats", "--data", s(&data("sample_reviews.jsonl"))]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("reviews\t1000"));
    assert!(text.contains("users\t100"));
    assert!(text.contains("items\t60"));
}

#[test]
fn stats_on_empty_file_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = run(&["stats", "--json", "--data", s(&empty)]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n_reviews"], 0);
    assert_eq!(v["n_users"], 0);
    assert_eq!(v["n_items"], 0);
}

#[test]
fn missing_file_exits_with_io_code() {
    let o = run(&["stats", "--data", "/definitely/not/here.jsonl"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("not/here.jsonl"));
}

#[test]
fn malformed_line_in_strict_mode_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(
        &bad,
        "{\"reviewerID\":\"u\",\"asin\":\"i\",\"reviewText\":\"x\",\"overall\":4}\nnot json\n",
    )
    .unwrap();
    let o = run(&["stats", "--strict", "--data", s(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert!(run(&["stats", "--data", s(&bad)]).status.success());
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let reviews = data("sample_reviews.jsonl");
    let glove = data("toy_glove.50d.txt");
    let mut args = train_args(&reviews, &glove, dir.path());
    args.extend(["--dropout", "2", "--lr=-1", "--batch-size", "0"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("dropout"), "{err}");
    assert!(err.contains("learning rate"), "{err}");
    assert!(err.contains("batch_size"), "{err}");
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn infeasible_split_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let reviews = data("sample_reviews.jsonl");
    let glove = data("toy_glove.50d.txt");
    let mut args = train_args(&reviews, &glove, dir.path());
    args.extend(["--test-fraction", "1.5"]);
    assert_eq!(run(&args).status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_catches_corruption() {
    let ok = run(&["gradcheck"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    let passed = stdout(&ok)
        .lines()
        .filter(|l| l.starts_with("PASS"))
        .count();
    assert_eq!(passed, 14);

    let bad = run(&["gradcheck", "--corrupt-scale", "1.1"]);
    assert_eq!(bad.status.code(), Some(5));
    assert!(stdout(&bad).contains("FAIL"));
    assert!(stdout(&bad).contains("4.762e-2"));
}

#[test]
fn baseline_query_on_hand_fixture() {
    let o = run(&[
        "baseline",
        "--data",
        s(&data("cf_hand.jsonl")),
        "--query",
        "u1:m2",
        "--query",
        "u1:m1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let first = text.lines().next().unwrap();
    let value: f64 = first.split('\t').nth(1).unwrap().parse().unwrap();
    // u1 rated m1=4, m3=2; similarities to m2 are 0.96 and 23/(5*sqrt(26)).
    let s13 = 23.0 / (5.0 * 26f64.sqrt());
    let want = (0.96 * 4.0 + s13 * 2.0) / (0.96 + s13);
    assert!((value - want).abs() < 1e-12, "{value} vs {want}");
    assert!(text.contains("u1:m1"));
}

#[test]
fn baseline_unknown_user_is_an_error() {
    let o = run(&[
        "baseline",
        "--data",
        s(&data("cf_hand.jsonl")),
        "--query",
        "nobody:m2",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nobody"));
}

#[test]
fn baseline_exports_similarity_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sims.tsv");
    let o = run(&[
        "baseline",
        "--data",
        s(&data("cf_hand.jsonl")),
        "--export-sims",
        s(&out),
        "--test-fraction",
        "0.25",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(stdout(&o).contains("CF test MSE"));
}

#[test]
fn zero_epochs_gives_validation_only_report() {
    let dir = tempfile::tempdir().unwrap();
    let reviews = data("sample_reviews.jsonl");
    let glove = data("toy_glove.50d.txt");
    let mut args = train_args(&reviews, &glove, dir.path());
    args.extend(["--epochs", "0", "--doc-len", "50"]);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("validation MSE before training"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["steps"], 0);
    assert_eq!(report["epochs"].as_array().unwrap().len(), 0);
    assert!(report["initial_val_loss"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("run.toml");
    fs::write(
        &toml,
        format!(
            "data = {:?}\nembeddings = {:?}\ndim = 50\ntower = \"gru\"\nepochs = 5\ndoc-len = 40\n",
            s(&data("sample_reviews.jsonl")),
            s(&data("toy_glove.50d.txt")),
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = run(&[
        "--config",
        s(&toml),
        "train",
        "--epochs",
        "1",
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("Model | Embedding"));
    assert!(stdout(&o).contains("GRU |"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 1);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("run.toml");
    fs::write(&toml, "epochz = 3\n").unwrap();
    let o = run(&[
        "--config",
        s(&toml),
        "stats",
        "--data",
        s(&data("cf_hand.jsonl")),
    ]);
    // stats takes no run config, so only commands that read it fail
    assert!(o.status.success());
    let o = run(&[
        "--config",
        s(&toml),
        "baseline",
        "--data",
        s(&data("cf_hand.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epochz"), "{}", stderr(&o));
}

#[test]
fn evaluate_reproduces_training_mse_and_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let reviews = data("sample_reviews.jsonl");
    let glove = data("toy_glove.50d.txt");
    let mut args = train_args(&reviews, &glove, dir.path());
    args.extend([
        "--epochs",
        "1",
        "--doc-len",
        "60",
        "--head",
        "fm",
        "--seed",
        "3",
    ]);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let ckpt = dir.path().join("model.ckpt");
    let e = run(&["evaluate", "--json", "--checkpoint", s(&ckpt)]);
    assert!(e.status.success(), "{}", stderr(&e));
    let v: serde_json::Value = serde_json::from_slice(&e.stdout).unwrap();
    assert_eq!(v["test"]["mse"], report["test"]["mse"]);
    assert!(dir.path().join("best.ckpt").exists());

    let bytes = fs::read(&ckpt).unwrap();
    let cut = dir.path().join("cut.ckpt");
    fs::write(&cut, &bytes[..bytes.len() - 8]).unwrap();
    let e = run(&["evaluate", "--checkpoint", s(&cut)]);
    assert!(!e.status.success());
    assert!(stderr(&e).contains("corrupt checkpoint"), "{}", stderr(&e));

    let e = run(&["evaluate", "--checkpoint", s(&ckpt), "--filters", "2"]);
    assert!(!e.status.success());
    assert!(stderr(&e).contains("shape error"), "{}", stderr(&e));
}

#[test]
fn embedding_width_mismatch_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let reviews = data("sample_reviews.jsonl");
    let glove = data("toy_glove.50d.txt");
    let mut args = train_args(&reviews, &glove, dir.path());
    args[6] = "100";
    let o = run(&args);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn hundred_dimensional_gru_run() {
    let dir = tempfile::tempdir().unwrap();
    let glove = dir.path().join("glove.100d.txt");
    let wide: String = fs::read_to_string(data("toy_glove.50d.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (tok, rest) = l.split_once(' ').unwrap();
            format!("{tok} {rest} {rest}\n")
        })
        .collect();
    fs::write(&glove, wide).unwrap();
    let out = dir.path().join("run");
    let o = run(&[
        "train",
        "--data",
        s(&data("sample_reviews.jsonl")),
        "--embeddings",
        s(&glove),
        "--dim",
        "100",
        "--tower",
        "gru",
        "--doc-len",
        "30",
        "--epochs",
        "1",
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("GRU | 100d"));
}

#[test]
fn export_curves_from_report() {
    let dir = tempfile::tempdir().unwrap();
    let reviews = data("sample_reviews.jsonl");
    let glove = data("toy_glove.50d.txt");
    let mut args = train_args(&reviews, &glove, dir.path());
    args.extend(["--epochs", "2", "--doc-len", "40"]);
    assert!(run(&args).status.success());
    let csv = dir.path().join("curve.csv");
    let o = run(&[
        "export-curves",
        "--report",
        s(&dir.path().join("report.json")),
        "--out",
        s(&csv),
        "--timing",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<_> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], "epoch,train_loss,val_loss,seconds");
    assert!(!rows[1].ends_with(','));
}
