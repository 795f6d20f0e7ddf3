use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn citefn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_citefn"))
        .args(args)
        .env_remove("CITEFN_ENDPOINT")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = citefn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn extract_single_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v1_2.txt");
    ok(&["extract", "--in", s(&fixtures().join("jats/v1_2.xml")), "--out", s(&out), "--jats-version", "1.2"]);
    let want = std::fs::read_to_string(fixtures().join("jats/v1_2.expected.txt")).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap().trim_end(), want.trim_end());

    let bad = citefn(&["extract", "--in", s(&fixtures().join("jats/v1_2.xml")), "--out", s(&out), "--jats-version", "1.3"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("1.2"));
}

#[test]
fn run_score_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let pipeline = fixtures().join("pipeline");
    let (pairs, script, gold) = (pipeline.join("pairs.jsonl"), pipeline.join("script.json"), pipeline.join("gold.jsonl"));
    let args = ["run", "--pairs", s(&pairs), "--out-dir", s(&run), "--mock", s(&script), "--gold", s(&gold)];
    ok(&args);
    let machine = std::fs::read_to_string(run.join("machine.jsonl")).unwrap();
    assert_eq!(machine.lines().count(), 2);
    // second run needs no model replies
    ok(&args);
    assert_eq!(std::fs::read_to_string(run.join("machine.jsonl")).unwrap(), machine);

    let tables = fixtures().join("tables");
    let scores = tmp.path().join("scores.jsonl");
    ok(&[
        "score",
        "--gold",
        s(&tables.join("gold.jsonl")),
        "--machine",
        s(&tables.join("machine.jsonl")),
        "--decisions",
        s(&tables.join("decisions.jsonl")),
        "--out",
        s(&scores),
        "--set",
        "Evaluation",
    ]);
    let csv = ok(&["report", "--scores", s(&scores), "--format", "csv"]);
    let overall = csv.lines().find(|l| l.starts_with("Evaluation,Overall")).unwrap();
    assert!(overall.ends_with(",8,1,0,9"), "{overall}");

    // an unadjudicated pair cannot be scored
    let none = tmp.path().join("none.jsonl");
    let out = citefn(&[
        "score",
        "--gold",
        s(&tables.join("gold.jsonl")),
        "--machine",
        s(&tables.join("machine.jsonl")),
        "--decisions",
        s(&none),
        "--out",
        s(&scores),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("xoo-2018"));
}

#[test]
fn estimate_cost_prints_rounded_total() {
    let out = ok(&[
        "estimate-cost",
        "--pairs",
        "122292",
        "--in-tokens",
        "54600",
        "--out-tokens",
        "246",
        "--in-price",
        "0.0024",
        "--out-price",
        "0.0024",
    ]);
    assert!(out.contains("$16,097"), "{out}");
    assert!(!citefn(&["estimate-cost", "--pairs", "1", "--in-tokens", "1", "--out-tokens", "1", "--in-price", "-1", "--out-price", "0"])
        .status
        .success());
}

#[test]
fn sample_writes_a_subcorpus() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(&spec, r#"{"cutoff_date": "2015-01-01", "sample_size": 1, "seed": 3}"#).unwrap();
    let out = tmp.path().join("sample.jsonl");
    ok(&["sample", "--pairs", s(&fixtures().join("pipeline/pairs.jsonl")), "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn context_for_one_accession() {
    let tmp = tempfile::tempdir().unwrap();
    let meta = tmp.path().join("meta.json");
    std::fs::write(
        &meta,
        r#"{"identifier_class": "nucleotide-sequence", "source_db": "GenBank Nucleotide Database",
            "metadata": {"record_kind": "Nucleotide Sequence", "data_description": "a complete genome",
                         "organism": "Brucella suis"}}"#,
    )
    .unwrap();
    let out = ok(&["context", "--accession", "NC_004310", "--metadata", s(&meta)]);
    assert!(out.starts_with("The accession \"NC_004310\" refers to a Nucleotide Sequence record"), "{out}");
}
