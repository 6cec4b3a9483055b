//! Black-box tests of the `depsim` binary: exit codes, printed lines, and
//! one capture → serve → query round trip through real processes.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

fn depsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_depsim"))
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Kills the spawned server even when an assertion panics first.
struct KillOnDrop(Child);

impl Drop for KillOnDrop {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn help_lists_every_command_group() {
    let output = depsim().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    for group in ["mock", "trace", "demo", "eval", "ir"] {
        assert!(text.contains(group), "--help must mention {group:?}:\n{text}");
    }
}

#[test]
fn missing_required_flag_is_reported_before_anything_starts() {
    let output = depsim().args(["mock", "serve", "--mode", "ir"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr(&output).contains("--ir is required"),
        "stderr:\n{}",
        stderr(&output)
    );
}

#[test]
fn unknown_mode_names_the_valid_choices() {
    let output = depsim()
        .args(["mock", "serve", "--mode", "telepathy"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr(&output).contains("replay | pattern | ir | online"),
        "stderr:\n{}",
        stderr(&output)
    );
}

#[test]
fn unreadable_config_is_a_usage_error() {
    let output = depsim()
        .args(["demo", "capture", "--config", "/no/such/config.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr(&output).contains("cannot read config"),
        "stderr:\n{}",
        stderr(&output)
    );
}

#[test]
fn validate_blesses_the_shipped_v2_contract() {
    let path = fixture("ir/inventory_v2.json");
    let output = depsim()
        .args(["ir", "validate", "--ir"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr:\n{}", stderr(&output));
    assert_eq!(
        stdout(&output),
        format!("ok: {} (v2, 8 transition(s))\n", path.display())
    );
}

#[test]
fn validate_lists_v2_constructs_found_in_a_v1_contract() {
    // The shipped v2 inventory contract relabeled as v1: every v2-only
    // construct it uses must come back as its own diagnostic line.
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("ir/inventory_v2.json")).unwrap())
            .unwrap();
    doc["version"] = serde_json::json!("v1");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("downgraded.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();

    let output = depsim().args(["ir", "validate", "--ir"]).arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let text = stderr(&output);
    assert!(text.contains("is invalid:"), "stderr:\n{text}");
    assert!(text.contains("\n  - "), "diagnostics are listed one per line:\n{text}");
    assert!(text.contains("requires a v2"), "stderr:\n{text}");
}

#[tokio::test]
async fn capture_then_replay_serves_recorded_traffic_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let capture = depsim()
        .args(["demo", "capture", "--rounds", "1", "--seed", "7", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(capture.status.code(), Some(0), "stderr:\n{}", stderr(&capture));
    let listing = stdout(&capture);
    let wrote: Vec<&str> = listing
        .lines()
        .filter_map(|l| l.strip_prefix("wrote "))
        .collect();
    assert_eq!(wrote.len(), 3, "stdout:\n{listing}");
    for path in &wrote {
        let metadata = std::fs::metadata(path).unwrap();
        assert!(metadata.len() > 0, "{path} must not be empty");
    }
    let inventory_trace = wrote
        .iter()
        .find(|p| p.ends_with("inventory.jsonl"))
        .expect("inventory trace listed");

    let mut child = KillOnDrop(
        depsim()
            .args(["mock", "serve", "--mode", "replay", "--port", "0", "--traces"])
            .arg(inventory_trace)
            .args(["--id-pattern", "item-[0-9]+", "--id-pattern", "rsv-[0-9]+"])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap(),
    );
    let mut line = String::new();
    BufReader::new(child.0.stdout.as_mut().unwrap())
        .read_line(&mut line)
        .unwrap();
    let base = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected startup line {line:?}"))
        .to_string();

    let http = reqwest::Client::new();
    let listed = http.get(format!("{base}/items")).send().await.unwrap();
    assert_eq!(listed.status().as_u16(), 200, "recorded endpoint replays");

    // An id the workload never minted: only the --id-pattern flags folding
    // it onto /items/{id} can produce an answer here.
    let folded = http.get(format!("{base}/items/item-424242")).send().await.unwrap();
    assert_eq!(folded.status().as_u16(), 200, "unseen id folds onto the recorded pattern");

    let missed = http.get(format!("{base}/definitely/not/recorded")).send().await.unwrap();
    assert_eq!(missed.status().as_u16(), 501);

    let reset = http.post(format!("{base}/__mock__/reset")).send().await.unwrap();
    assert_eq!(reset.status().as_u16(), 204);
}

#[test]
fn eval_run_exits_with_infrastructure_code_when_nothing_listens() {
    let dir = tempfile::tempdir().unwrap();
    let output = depsim()
        .args(["eval", "run", "--suite"])
        .arg(fixture("suites/smoke_inventory.json"))
        .args(["--live", "http://127.0.0.1:1", "--sim", "http://127.0.0.1:1", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "stderr:\n{}", stderr(&output));
    assert!(
        stderr(&output).contains("infrastructure errors"),
        "stderr:\n{}",
        stderr(&output)
    );
    // Reports are still written so a broken run can be inspected.
    assert!(dir.path().join("report.json").exists());
}
