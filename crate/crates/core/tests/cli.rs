//! End-to-end CLI checks through the real binary.

use std::io::Write;
use std::process::{Command, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mechabench"))
}

fn write_temp(name: &str, content: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mechabench-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

const BUILD_SCRIPT: &str = r#"{"name": "start", "arguments": {"init_shift": [0.0, 0.0, 1.0], "note": "cli chassis"}}
{"name": "attach_block_to", "arguments": {"base_block": 0, "face": "east", "new_block": "PoweredWheel", "note": "right wheel"}}
{"name": "attach_block_to", "arguments": {"base_block": 0, "face": "west", "new_block": "PoweredWheel", "note": "left wheel"}}
{"name": "bind_key", "arguments": {"key": "Alpha1", "action": "spin_forward", "block_id": 1}}
{"name": "bind_key", "arguments": {"key": "Alpha1", "action": "spin_backward", "block_id": 2}}
{"name": "add_control_sequence", "arguments": {"time": 0.0, "key": "Alpha1", "hold_for": 3.0}}
{"name": "finalize"}
"#;

#[test]
fn build_replay_evaluate_describe_export() {
    let script = write_temp("script.jsonl", BUILD_SCRIPT);
    let scene_path = script.with_file_name("scene.json");

    // build
    let out = bin()
        .args(["build", "--script"])
        .arg(&script)
        .arg("--out")
        .arg(&scene_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("state hash:"));

    // replay reproduces the hash
    let out = bin().arg("replay").arg(&scene_path).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("replay OK"));

    // describe
    let out = bin()
        .args(["describe", "--scene"])
        .arg(&scene_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("3 block(s)"));
    assert!(text.contains("cli chassis"));

    // evaluate against the stock transport task; exit code 0 regardless of
    // task success
    let out = bin()
        .args(["evaluate", "--task", "transport_lv1", "--scene"])
        .arg(&scene_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let record: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("evaluate emits a JSON record");
    assert_eq!(record["task_id"], "transport");
    assert!(record["indicator"].as_f64().unwrap() > 0.0);

    // export machine file
    let out = bin()
        .args(["export", "--format", "machine", "--scene"])
        .arg(&scene_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let xml = String::from_utf8_lossy(&out.stdout);
    assert!(xml.contains("<Machine"));
    assert!(xml.contains("mb:KeyBinding"));
}

#[test]
fn serve_on_stdio() {
    let mut child = bin()
        .arg("serve")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    stdin
        .write_all(
            b"{\"id\": 1, \"action\": {\"name\": \"start\"}}\nnot json\n{\"id\": 2, \"action\": {\"name\": \"get_machine_summary\"}}\n",
        )
        .unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<&str> = std::str::from_utf8(&out.stdout)
        .unwrap()
        .trim()
        .lines()
        .collect();
    assert_eq!(lines.len(), 3);
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["ok"], true);
    let second: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    assert_eq!(second["error"], "ProtocolError");
}

#[test]
fn bench_writes_reports() {
    let spec = r#"{
        "planner": ["<building_plan>engine</building_plan>"],
        "drafter": ["cannon and torch"],
        "reviewer": ["TERMINATE"],
        "guidance": ["Start.", "Cannon east, jet down.", "Torch on top, flame east.", "Done. TERMINATE"],
        "builder": [
            "```json\n{\"tool\": \"start\", \"arguments\": {}}\n```",
            "```json\n{\"tool\": \"attach_block_to\", \"arguments\": {\"base_block\": 0, \"face\": \"east\", \"new_block\": \"WaterCannon\", \"pointing\": \"down\"}}\n```",
            "```json\n{\"tool\": \"attach_block_to\", \"arguments\": {\"base_block\": 0, \"face\": \"top\", \"new_block\": \"Torch\", \"pointing\": \"east\"}}\n```"
        ]
    }"#;
    let spec_path = write_temp("backend.json", spec);
    let out_dir = spec_path.with_file_name("bench-out");
    let out = bin()
        .args(["bench", "--task", "lift_lv1", "--samples", "4", "--backend"])
        .arg(&spec_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("success_rate"));

    let records = std::fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert_eq!(records.trim().lines().count(), 5, "header plus four rows");
    assert!(records.contains("lift,1,2,true"));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.contains("lift,1,4,4,100"));
}

#[test]
fn catalog_env_override() {
    // A deliberately broken catalog makes every subcommand fail fast.
    let bad = write_temp("bad_catalog.toml", "version = 1\nblocks = []\n");
    let out = bin()
        .env("MECHABENCH_CATALOG", &bad)
        .args(["describe", "--scene", "/nonexistent.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("catalog error"));
}
