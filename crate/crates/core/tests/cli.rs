use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lexnorm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexnorm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn small_fixture(dir: &Path) -> (String, String) {
    let (corpus, gold) = (p(dir, "corpus.txt"), p(dir, "gold.tsv"));
    let out = lexnorm(&["synth", "--corpus", &corpus, "--gold", &gold, "--bases", "60"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (corpus, gold)
}

#[test]
fn encode_writes_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = p(dir.path(), "words.txt");
    fs::write(&input, "mustaqbil aur kursi\n").unwrap();
    let out = lexnorm(&["encode", "--input", &input]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("mustaqbil\tM_1_2_7_9_17"));
    assert!(text.contains("kursi\tK_14_1_0_0_0\n"));

    let out = lexnorm(&["encode", "--input", &input, "--scheme", "soundex"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("mustaqbil\tM_2_3_2\n"));
}

#[test]
fn evaluate_gold_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, gold) = small_fixture(dir.path());
    let out = lexnorm(&["evaluate", "--input", &corpus, "--clustering", &gold, "--gold", &gold]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("precision = 1.000000\n"), "{text}");
    assert!(text.contains("f_measure = 1.000000\n"), "{text}");
}

#[test]
fn cluster_is_repeatable_and_flags_beat_config() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, gold) = small_fixture(dir.path());
    let config = p(dir.path(), "run.conf");
    fs::write(&config, "# defaults for this run\nthreshold = 0.9\nfeatures = phonetic,string\n").unwrap();

    let run = |name: &str, extra: &[&str]| -> Vec<u8> {
        let out_path = p(dir.path(), name);
        let mut args = vec!["cluster", "--input", &corpus, "--gold", &gold, "--output", &out_path];
        args.extend_from_slice(extra);
        let out = lexnorm(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(&out_path).unwrap()
    };
    let a = run("a.tsv", &["--threshold", "0.5"]);
    let b = run("b.tsv", &["--threshold", "0.5"]);
    assert_eq!(a, b);
    let with_config = run("c.tsv", &["--config", &config, "--threshold", "0.5", "--features", "phonetic,string,context"]);
    assert_eq!(a, with_config);
    let from_config = run("d.tsv", &["--config", &config]);
    assert_ne!(a, from_config);

    let first = String::from_utf8(a).unwrap();
    let row = first.lines().next().unwrap();
    assert_eq!(row.split('\t').count(), 3, "{row}");
}

#[test]
fn report_needs_gold_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = small_fixture(dir.path());

    let out = lexnorm(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    let out = lexnorm(&["cluster", "--input", &corpus, "--threshold", "abc"]);
    assert_eq!(out.status.code(), Some(2));

    let missing = p(dir.path(), "missing.txt");
    let out = lexnorm(&["preprocess", "--input", &missing]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: preprocess:"));

    let out = lexnorm(&["cluster", "--input", &corpus, "--threshold", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clustering"));

    let report = p(dir.path(), "report.txt");
    let out = lexnorm(&["cluster", "--input", &corpus, "--report", &report]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: evaluation:"));
}

#[test]
fn learn_costs_writes_cost_table() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = small_fixture(dir.path());
    let costs = p(dir.path(), "costs.tsv");
    let out = lexnorm(&["learn-costs", "--input", &corpus, "--neighborhood", "3", "--output", &costs]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&costs).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3, "{line}");
        let cost: f64 = fields[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&cost));
    }
    // the learned table feeds back into clustering
    let out = lexnorm(&["cluster", "--input", &corpus, "--costs", &costs]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
