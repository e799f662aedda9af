//! End-to-end CLI tests: the full offline pipeline and its exit-code
//! contract (0 success, 1 runtime failure, 2 usage failure).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use srpg_core::{GuardRecord, ReportEnvelope};

fn srpg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_srpg"))
}

fn run(args: &[&str]) -> Output {
    srpg().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

struct PipelineFiles {
    _dir: tempfile::TempDir,
    dialogues: PathBuf,
    injected: PathBuf,
    profiles: PathBuf,
}

fn run_gen_and_inject(count: usize, seed: u64) -> PipelineFiles {
    let dir = tempfile::tempdir().unwrap();
    let dialogues = dir.path().join("dialogues.jsonl");
    let injected = dir.path().join("injected.jsonl");
    let profiles = dir.path().join("profiles.json");
    std::fs::write(
        &profiles,
        serde_json::to_string(&srpg_core::InjectionBank::bundled_profiles()).unwrap(),
    )
    .unwrap();

    let out = run(&[
        "gen",
        "--seed",
        &seed.to_string(),
        "--count",
        &count.to_string(),
        "--out",
        path_str(&dialogues),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), count.to_string());

    let out = run(&[
        "inject",
        "--in",
        path_str(&dialogues),
        "--profiles",
        path_str(&profiles),
        "--seed",
        &seed.to_string(),
        "--out",
        path_str(&injected),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    PipelineFiles { _dir: dir, dialogues, injected, profiles }
}

#[test]
fn gen_writes_count_lines_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for path in [&a, &b] {
        let out = run(&["gen", "--seed", "7", "--count", "25", "--out", path_str(path)]);
        assert!(out.status.success());
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed must give identical files");
    assert_eq!(bytes_a.iter().filter(|b| **b == b'\n').count(), 25);
}

#[test]
fn gen_missing_out_is_a_usage_error() {
    let out = run(&["gen", "--seed", "7", "--count", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_zero_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.jsonl");
    let out = run(&["gen", "--seed", "7", "--count", "0", "--out", path_str(&p)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inject_outputs_validate_and_align() {
    let files = run_gen_and_inject(20, 11);
    let items = srpg_core::corpus::load_dialogues(&files.dialogues).unwrap();
    let injected = srpg_core::load_corpus(&files.injected).unwrap();
    assert_eq!(items.len(), injected.len());
    for (dialogue, inj) in items.iter().zip(&injected) {
        assert_eq!(dialogue.id, inj.id());
        assert!(!inj.pii.is_empty());
    }

    // deterministic per seed
    let again = run_gen_and_inject(20, 11);
    assert_eq!(
        std::fs::read(&files.injected).unwrap(),
        std::fs::read(&again.injected).unwrap()
    );
}

#[test]
fn guard_purellm_needs_llm_backend() {
    let files = run_gen_and_inject(3, 3);
    let out_path = files.injected.with_extension("guarded.jsonl");
    let out = run(&[
        "guard",
        "--in",
        path_str(&files.injected),
        "--method",
        "purellm",
        "--backend",
        "deterministic",
        "--out",
        path_str(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn guard_unknown_method_is_usage_error() {
    let files = run_gen_and_inject(3, 3);
    let out = run(&[
        "guard",
        "--in",
        path_str(&files.injected),
        "--method",
        "foo",
        "--out",
        "/tmp/never-written.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn offline_pipeline_reports_zero_asr_for_srpg() {
    let files = run_gen_and_inject(40, 42);
    let guarded = files.injected.with_extension("srpg.jsonl");
    let report_path = files.injected.with_extension("report.json");

    let out = run(&[
        "guard",
        "--in",
        path_str(&files.injected),
        "--method",
        "srpg",
        "--backend",
        "deterministic",
        "--out",
        path_str(&guarded),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // output ids are bijective with input ids
    let records: Vec<GuardRecord> = std::fs::read_to_string(&guarded)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let gold = srpg_core::load_corpus(&files.injected).unwrap();
    let mut pred_ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut gold_ids: Vec<&str> = gold.iter().map(|g| g.id()).collect();
    pred_ids.sort();
    gold_ids.sort();
    assert_eq!(pred_ids, gold_ids);

    let out = run(&[
        "eval",
        "--pred",
        path_str(&guarded),
        "--gold",
        path_str(&files.injected),
        "--out",
        path_str(&report_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.0000"), "table shows four-decimal asr: {stdout}");

    let envelope: ReportEnvelope =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(envelope.payload.asr, 0.0);
    assert_eq!(envelope.payload.exact_match_rate, 1.0);
    assert_eq!(envelope.payload.backend, "deterministic");
}

#[test]
fn eval_none_reports_full_asr_without_tripwire() {
    let files = run_gen_and_inject(15, 5);
    let guarded = files.injected.with_extension("none.jsonl");
    let report_path = files.injected.with_extension("none-report.json");
    let out = run(&[
        "guard", "--in", path_str(&files.injected),
        "--method", "none",
        "--out", path_str(&guarded),
    ]);
    assert!(out.status.success());
    let out = run(&[
        "eval",
        "--pred", path_str(&guarded),
        "--gold", path_str(&files.injected),
        "--out", path_str(&report_path),
    ]);
    assert!(out.status.success(), "tripwire only applies to srpg");
    let envelope: ReportEnvelope =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(envelope.payload.asr, 1.0);
}

#[test]
fn eval_tripwire_fails_on_leaky_srpg_predictions() {
    let files = run_gen_and_inject(5, 9);
    let gold = srpg_core::load_corpus(&files.injected).unwrap();
    // forge "srpg" records that actually leak the raw text
    let forged: Vec<String> = gold
        .iter()
        .map(|item| {
            let record = GuardRecord {
                id: item.id().to_string(),
                backend: "deterministic".into(),
                output: srpg_core::GuardOutput {
                    method: srpg_core::GuardMethod::Srpg,
                    masked_text: item.injected_text.clone(),
                    context: None,
                    fused_text: item.injected_text.clone(),
                    audit: vec![],
                    degraded: false,
                },
            };
            serde_json::to_string(&record).unwrap()
        })
        .collect();
    let forged_path = files.injected.with_extension("forged.jsonl");
    std::fs::write(&forged_path, forged.join("\n") + "\n").unwrap();
    let report_path = files.injected.with_extension("forged-report.json");
    let out = run(&[
        "eval",
        "--pred", path_str(&forged_path),
        "--gold", path_str(&files.injected),
        "--out", path_str(&report_path),
    ]);
    assert_eq!(out.status.code(), Some(1), "srpg with nonzero ASR must trip");
}

#[test]
fn eval_id_mismatch_lists_ids() {
    let files = run_gen_and_inject(4, 13);
    let guarded = files.injected.with_extension("g.jsonl");
    let out = run(&[
        "guard", "--in", path_str(&files.injected),
        "--method", "none",
        "--out", path_str(&guarded),
    ]);
    assert!(out.status.success());
    // drop one record
    let lines: Vec<String> =
        std::fs::read_to_string(&guarded).unwrap().lines().map(String::from).collect();
    std::fs::write(&guarded, lines[..lines.len() - 1].join("\n") + "\n").unwrap();
    let out = run(&[
        "eval",
        "--pred", path_str(&guarded),
        "--gold", path_str(&files.injected),
        "--out", "/tmp/never.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("item-00004"), "missing id is listed: {stderr}");
}

#[test]
fn guard_with_mock_backend_runs_offline() {
    let files = run_gen_and_inject(6, 21);
    let guarded = files.injected.with_extension("mock.jsonl");
    let out = run(&[
        "guard",
        "--in", path_str(&files.injected),
        "--method", "srpg",
        "--backend", "mock",
        "--out", path_str(&guarded),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report_path = files.injected.with_extension("mock-report.json");
    let out = run(&[
        "eval",
        "--pred", path_str(&guarded),
        "--gold", path_str(&files.injected),
        "--out", path_str(&report_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let envelope: ReportEnvelope =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(envelope.payload.asr, 0.0);
    assert_eq!(envelope.payload.backend, "mock");
}

#[test]
fn reruns_are_byte_identical_modulo_timestamp() {
    let files = run_gen_and_inject(10, 42);
    let mut payloads = Vec::new();
    for tag in ["r1", "r2"] {
        let guarded = files.injected.with_extension(format!("{tag}.jsonl"));
        let report = files.injected.with_extension(format!("{tag}.json"));
        assert!(run(&[
            "guard", "--in", path_str(&files.injected),
            "--method", "srpg",
            "--out", path_str(&guarded),
        ])
        .status
        .success());
        assert!(run(&[
            "eval",
            "--pred", path_str(&guarded),
            "--gold", path_str(&files.injected),
            "--out", path_str(&report),
        ])
        .status
        .success());
        let envelope: ReportEnvelope =
            serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        payloads.push((
            serde_json::to_string(&envelope.payload).unwrap(),
            envelope.payload_sha256,
        ));
    }
    assert_eq!(payloads[0], payloads[1]);
    let _ = &files.profiles;
}
