use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")
}

fn stbam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stbam"))
        .args(args)
        .env_remove("STBAM_ENDPOINT")
        .env_remove("STBAM_MODEL")
        .env_remove("STBAM_API_KEY")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn replay_then_eval_reproduces_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("models");
    let out = stbam(&[
        "replay",
        "--corpus",
        s(&corpus()),
        "--out",
        s(&models),
        "--parallel",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(std::fs::read_dir(&models).unwrap().count(), 21);

    let csv = dir.path().join("rows.csv");
    let report = dir.path().join("report.json");
    let gold = corpus().join("gold.json");
    let table = corpus().join("table1.csv");
    let out = stbam(&[
        "eval",
        "--models",
        s(&models),
        "--gold",
        s(&gold),
        "--published",
        s(&table),
        "--csv",
        s(&csv),
        "--report",
        s(&report),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 22);
    assert!(rows.contains("Test 13 (A13),Yes,No,4,7,4,5,6"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["published"]["full_successes"], 6);
    assert_eq!(report["published"]["partial_successes"], 15);
    let stderr = String::from_utf8_lossy(&out.stderr);
    for n in [2, 9, 12] {
        assert!(
            stderr.contains(&format!("divergence: Test {n} (A{n})")),
            "{stderr}"
        );
    }
}

#[test]
fn sequential_and_parallel_replays_match() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(stbam(&["replay", "--corpus", s(&corpus()), "--out", s(&a)])
        .status
        .success());
    assert!(stbam(&[
        "replay",
        "--corpus",
        s(&corpus()),
        "--out",
        s(&b),
        "--parallel"
    ])
    .status
    .success());
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn extract_with_scripted_backend_from_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_stbam"))
        .args([
            "extract",
            "--topic",
            "purchase",
            "--backend",
            "scripted",
            "--id",
            "doc",
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"Ann and Bo bought a lamp and pears.")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let model: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(model["id"], "doc");
    assert_eq!(model["links"].as_array().unwrap().len(), 4);
}

#[test]
fn strict_halt_exits_six_and_still_writes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let transcript = dir.path().join("t.jsonl");
    let out = stbam(&[
        "extract",
        "--topic",
        "purchase",
        "--mode",
        "strict",
        "--backend",
        "replay",
        "--input",
        s(&corpus().join("inputs/test04.txt")),
        "--replay-file",
        s(&corpus().join("replay/test04.jsonl")),
        "--out",
        s(&model),
        "--transcript",
        s(&transcript),
    ]);
    assert_eq!(out.status.code(), Some(6));
    assert_eq!(stdout(&out), "No topic-related activity was modeled.");
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m["halted_early"], true);
    assert_eq!(m["errors"][0]["cause"], "non_enumerable_element");
    assert!(
        std::fs::read_to_string(&transcript)
            .unwrap()
            .lines()
            .count()
            > 0
    );
}

#[test]
fn report_formats() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("m");
    assert!(stbam(&[
        "replay",
        "--corpus",
        s(&corpus()),
        "--out",
        s(&models),
        "--only",
        "test01"
    ])
    .status
    .success());
    let file = models.join("test01.json");
    let summary = stbam(&["report", "--format", "summary", s(&file)]);
    assert_eq!(
        stdout(&summary),
        "Results: Subjects: [1, Tom]\nObjects: [2, bike]\nActions: [1, bought, Tom, bike]\n"
    );
    let prose = stdout(&stbam(&["report", s(&file)]));
    assert!(prose.starts_with("Topic: purchase\n"));
    assert!(prose.ends_with("Tom bought bike.\n"), "{prose}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // usage
    assert_eq!(stbam(&["extract"]).status.code(), Some(2));
    let input = corpus().join("inputs/test01.txt");
    assert_eq!(
        stbam(&["extract", "--topic", "purchase", "--input", s(&input)])
            .status
            .code(),
        Some(2),
        "live backend without an endpoint"
    );
    // io
    let missing = dir.path().join("nope.txt");
    assert_eq!(
        stbam(&[
            "extract",
            "--topic",
            "t",
            "--backend",
            "scripted",
            "--input",
            s(&missing)
        ])
        .status
        .code(),
        Some(3)
    );
    // backend: nothing listens on this port
    let out = stbam(&[
        "extract",
        "--topic",
        "purchase",
        "--input",
        s(&input),
        "--endpoint",
        "http://127.0.0.1:9",
        "--model-name",
        "m",
        "--timeout",
        "1",
        "--mode",
        "strict",
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    // validation
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let gold = corpus().join("gold.json");
    assert_eq!(
        stbam(&["eval", "--models", s(&empty), "--gold", s(&gold)])
            .status
            .code(),
        Some(5)
    );
    let bad = dir.path().join("bad");
    std::fs::create_dir(&bad).unwrap();
    std::fs::write(
        bad.join("x.json"),
        r#"{"topic":"purchase","containers":[],"links":[{"id":1,"action":"bought","subject_id":1,"object_id":2}]}"#,
    )
    .unwrap();
    let out = stbam(&["eval", "--models", s(&bad), "--gold", s(&gold)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("link 1"));
}
