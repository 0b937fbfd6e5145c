//! End-to-end tests for the four subcommands, driving the compiled binary
//! against the scripted fixtures shared with the library test suite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../specforge/tests/fixtures")
        .join(name)
}

fn specforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn synth_fig1(out_dir: &Path) -> Output {
    specforge(&[
        "synth",
        "--bundle",
        fixture("fig1.bundle.json").to_str().unwrap(),
        "--script",
        fixture("fig1.script.jsonl").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ])
}

#[test]
fn scripted_synthesis_converges_and_reruns_byte_identically() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");

    let output = synth_fig1(&first);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("1 converged"));

    let manifest = fs::read_to_string(first.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"outcome\": \"converged\""));
    assert!(manifest.contains("\"iterations\": 1"));
    assert!(manifest.contains("\"suite_size\": 7"));

    let rerun = synth_fig1(&second);
    assert_eq!(rerun.status.code(), Some(0));
    assert_eq!(
        fs::read(first.join("trajectories.jsonl")).unwrap(),
        fs::read(second.join("trajectories.jsonl")).unwrap(),
        "scripted runs must be reproducible byte for byte"
    );
}

#[test]
fn missing_bundle_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let output = specforge(&[
        "synth",
        "--bundle",
        dir.path().join("absent.json").to_str().unwrap(),
        "--script",
        fixture("fig1.script.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("cannot read bundle"));
}

#[test]
fn scripted_backend_without_a_script_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let output = specforge(&[
        "synth",
        "--bundle",
        fixture("fig1.bundle.json").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("--script"));
}

#[test]
fn exhausted_script_yields_exit_one_and_a_partial_store() {
    let dir = TempDir::new().unwrap();
    // Enough replies to decompose, generate, and map — but none for the
    // specification itself.
    let full = fs::read_to_string(fixture("fig1.script.jsonl")).unwrap();
    let truncated: Vec<&str> = full
        .lines()
        .filter(|line| !line.contains("direct_specgen"))
        .collect();
    let script = dir.path().join("truncated.jsonl");
    fs::write(&script, truncated.join("\n")).unwrap();

    let out = dir.path().join("out");
    let output = specforge(&[
        "synth",
        "--bundle",
        fixture("fig1.bundle.json").to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stdout(&output).contains("1 error"));

    let store = fs::read_to_string(out.join("trajectories.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = store
        .lines()
        .map(|line| serde_json::from_str(line).unwrap())
        .collect();
    assert!(records.len() > 1, "progress before the failure is persisted");
    let last = records.last().unwrap();
    assert_eq!(last["step_kind"], "final");
    assert_eq!(last["payload"]["outcome"], "error");

    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("script is exhausted"));
}

#[test]
fn never_repairing_script_exhausts_the_iteration_budget() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let output = specforge(&[
        "synth",
        "--bundle",
        fixture("fig1.bundle.json").to_str().unwrap(),
        "--script",
        fixture("budget.script.jsonl").to_str().unwrap(),
        "--max-iterations",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("1 budget_exhausted"));

    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"outcome\": \"budget_exhausted\""));
    assert!(manifest.contains("\"iterations\": 3"));
    assert!(manifest.contains("\"final_unverified\": true"));
}

#[test]
fn replay_confirms_a_converged_store() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    assert_eq!(synth_fig1(&out).status.code(), Some(0));

    let output = specforge(&[
        "replay",
        "--store",
        out.join("trajectories.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout(&output).contains("most_frequent: 7 verdicts match"));
}

#[test]
fn tampered_verdict_fails_replay_with_a_diff() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    assert_eq!(synth_fig1(&out).status.code(), Some(0));

    let store_path = out.join("trajectories.jsonl");
    let tampered: Vec<String> = fs::read_to_string(&store_path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut record: serde_json::Value = serde_json::from_str(line).unwrap();
            if record["step_kind"] == "eval" && record["step_index"] == 8 {
                for row in record["payload"]["eval"]["results"]
                    .as_array_mut()
                    .unwrap()
                {
                    if row["test_id"] == "t7" {
                        row["status"] = "lean_fail".into();
                        row["result_status"] = "fail".into();
                    }
                }
            }
            record.to_string()
        })
        .collect();
    fs::write(&store_path, tampered.join("\n") + "\n").unwrap();

    let output = specforge(&["replay", "--store", store_path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let text = stdout(&output);
    assert!(text.contains("1 verdict(s) diverge"));
    assert!(text.contains("t7: recorded fail, replayed pass"));
}

#[test]
fn distill_writes_shards_stats_and_honors_variants() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    assert_eq!(synth_fig1(&run).status.code(), Some(0));
    let store = run.join("trajectories.jsonl");

    let full_out = dir.path().join("full");
    let output = specforge(&[
        "distill",
        "--store",
        store.to_str().unwrap(),
        "--out",
        full_out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    assert!(full_out.join("stats.txt").exists());
    let shard = fs::read_to_string(full_out.join("sft-full-00000.jsonl")).unwrap();
    assert_eq!(shard.lines().count(), 15);
    assert!(stdout(&output).contains("test_mapping"));

    let spec_only_out = dir.path().join("spec-only");
    let output = specforge(&[
        "distill",
        "--store",
        store.to_str().unwrap(),
        "--variant",
        "spec-only",
        "--out",
        spec_only_out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    let shard = fs::read_to_string(spec_only_out.join("sft-spec_only-00000.jsonl")).unwrap();
    for line in shard.lines() {
        let example: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(example["task"], "direct_specgen");
    }

    let no_test_out = dir.path().join("no-test");
    let output = specforge(&[
        "distill",
        "--store",
        store.to_str().unwrap(),
        "--variant",
        "no-test",
        "--out",
        no_test_out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    let shard = fs::read_to_string(no_test_out.join("sft-no_test-00000.jsonl")).unwrap();
    let core = [
        "ar_decomposition",
        "direct_specgen",
        "spec_refinement",
        "feedback_generation",
        "signature_generation",
    ];
    assert_eq!(shard.lines().count(), 5);
    for line in shard.lines() {
        let example: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(core.contains(&example["task"].as_str().unwrap()));
    }
}

#[test]
fn benchmark_overlap_drops_the_contaminated_problem() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    assert_eq!(synth_fig1(&run).status.code(), Some(0));

    // The benchmark entry quotes the problem statement, so they share a
    // 10-gram and the whole problem must be excluded.
    let description =
        "Find the most frequent element in a list of integers. If several \
         elements share the highest frequency, return the smallest one.";
    let benchmark = dir.path().join("benchmark.json");
    fs::write(
        &benchmark,
        serde_json::to_string(&vec![description]).unwrap(),
    )
    .unwrap();

    let out = dir.path().join("out");
    let output = specforge(&[
        "distill",
        "--store",
        run.join("trajectories.jsonl").to_str().unwrap(),
        "--benchmark",
        benchmark.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let report = stdout(&output);
    assert!(report.contains("problems dropped by decontamination: 1 (most_frequent)"));
    assert!(!out.join("sft-full-00000.jsonl").exists());
}

#[test]
fn stats_reads_shards_and_rejects_missing_paths() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    assert_eq!(synth_fig1(&run).status.code(), Some(0));
    let sft = dir.path().join("sft");
    let output = specforge(&[
        "distill",
        "--store",
        run.join("trajectories.jsonl").to_str().unwrap(),
        "--out",
        sft.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));

    let output = specforge(&["stats", sft.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    assert!(text.contains("test_mapping"));
    assert!(text.contains("full             15"));

    let output = specforge(&["stats", dir.path().join("absent").to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unreadable_store_is_a_config_error_for_distill() {
    let dir = TempDir::new().unwrap();
    let output = specforge(&[
        "distill",
        "--store",
        dir.path().join("absent.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}
