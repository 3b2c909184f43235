use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStderr, Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_replen");

fn replen(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("REPLEN_CONFIG").env_remove("REPLEN_SERVER").output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Starts `replen serve` on an ephemeral port and returns it with its base URL.
fn serve(extra: &[&str]) -> (Child, String, BufReader<ChildStderr>) {
    let mut child = Command::new(BIN)
        .args(["serve", "--http-port", "0"])
        .args(extra)
        .env_remove("REPLEN_CONFIG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    loop {
        line.clear();
        assert!(err.read_line(&mut line).unwrap() > 0, "server exited before listening");
        if let Some(rest) = line.trim().strip_prefix("api listening on ") {
            return (child, rest.to_string(), err);
        }
    }
}

fn interrupt(child: &Child) {
    let ok = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap().success();
    assert!(ok);
}

fn wait_exit(child: &mut Child) -> std::process::ExitStatus {
    for _ in 0..200 {
        if let Some(s) = child.try_wait().unwrap() {
            return s;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    child.kill().unwrap();
    panic!("server did not stop");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(replen(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(replen(&["sim", "run"]).status.code(), Some(1));
    assert_eq!(replen(&["kpis", "--from-audit", "/nonexistent/audit.jsonl"]).status.code(), Some(1));
    assert_eq!(replen(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreachable_server_exits_with_two() {
    let out = replen(&["approvals", "list", "--server", "http://127.0.0.1:9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot reach"));
}

#[test]
fn scenario_files_drive_runs() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.json");
    let out = replen(&["scenario", "generate", "--outlets", "2", "--skus", "4", "--seed", "3", "--zero-variance", "--out", world.to_str().unwrap()]);
    assert!(out.status.success());
    let run = stdout_json(&replen(&["--json", "sim", "run", "--days", "20", "--auto-approve", "--config", world.to_str().unwrap()]));
    assert_eq!(run["days"], 20);
    assert_eq!(run["kpis"]["stockout_days"], 0);
    assert_eq!(run["stage_errors"], 0);
}

#[test]
fn audit_replay_matches_the_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("audit.jsonl");
    let run = stdout_json(&replen(&["--json", "sim", "run", "--days", "30", "--seed", "11", "--auto-approve", "--audit-out", audit.to_str().unwrap()]));
    let replayed = stdout_json(&replen(&["--json", "kpis", "--from-audit", audit.to_str().unwrap()]));
    assert_eq!(run["kpis"], replayed);

    let text = std::fs::read_to_string(&audit).unwrap();
    let tampered = text.replacen("\"sold\":", "\"sold\":1", 1);
    assert_ne!(text, tampered);
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, tampered).unwrap();
    assert_eq!(replen(&["kpis", "--from-audit", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn operator_commands_against_a_live_server() {
    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("serve.jsonl");
    let (mut child, base, _err) = serve(&["--seed", "7", "--audit-out", audit.to_str().unwrap()]);
    let cmd = |args: &[&str]| {
        let mut full = vec!["--json"];
        full.extend_from_slice(args);
        full.extend_from_slice(&["--server", &base]);
        replen(&full)
    };

    let step = || ureq::post(&format!("{base}/api/sim/step")).send_json(serde_json::json!({ "days": 1 })).unwrap();
    let mut plan_id = None;
    for _ in 0..10 {
        step();
        let pending = stdout_json(&cmd(&["approvals", "list"]));
        plan_id = pending.as_array().unwrap().iter().find(|a| a["kind"] == "replenishment_plan").map(|a| a["id"].as_str().unwrap().to_string());
        if plan_id.is_some() {
            break;
        }
    }
    let plan_id = plan_id.expect("a plan is drafted within ten days");
    let decided = stdout_json(&cmd(&["approvals", "approve", &plan_id, "--decider", "tester"]));
    assert_eq!(decided["state"], "Approved");
    assert_eq!(decided["decider"], "human:tester");

    let again = cmd(&["approvals", "approve", &plan_id]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("pending"));

    // an approved plan is still waiting for dispatch, so nothing new is drafted
    let regenerated = stdout_json(&cmd(&["plan", "generate", "--decider", "tester"]));
    assert!(regenerated["plan_id"].is_null(), "{regenerated}");

    assert_eq!(cmd(&["plan", "show", "PLAN-999"]).status.code(), Some(1));
    let shown = cmd(&["plan", "show", &plan_id]);
    assert!(shown.status.success());

    let table = replen(&["plan", "show", &plan_id, "--server", &base]);
    assert!(String::from_utf8_lossy(&table.stdout).starts_with(&plan_id));

    interrupt(&child);
    assert!(wait_exit(&mut child).success());
    let log = std::fs::read_to_string(&audit).unwrap();
    assert!(log.contains("\"approval_decided\""));
    assert!(log.contains("human:tester"));
}

#[test]
fn stdio_mcp_session_ends_with_input() {
    let (mut child, _base, mut err) = serve(&["--seed", "7", "--mcp", "--mcp-transport", "stdio", "--workflow", "procurement"]);
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, r#"{{"jsonrpc":"2.0","id":1,"method":"tools/list"}}"#).unwrap();
    drop(stdin);
    let mut out = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut out).unwrap();
    let v: Value = serde_json::from_str(&out).unwrap();
    let names: Vec<&str> = v["result"]["tools"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"approve_order"), "{names:?}");
    assert!(wait_exit(&mut child).success());
    let mut rest = String::new();
    std::io::Read::read_to_string(&mut err, &mut rest).unwrap();
    assert!(rest.contains("shutting down"), "{rest}");
}

#[test]
fn help_lists_every_command() {
    let out = replen(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for c in ["scenario", "sim", "serve", "approvals", "alerts", "plan", "kpis"] {
        assert!(text.contains(c), "{c} missing from help");
    }
    assert!(Path::new(BIN).exists());
}
