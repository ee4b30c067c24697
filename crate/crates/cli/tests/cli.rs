use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden(scenario: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(scenario)
}

fn unlinkid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unlinkid")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn v4_demo_succeeds_with_two_authorisations() {
    let out = tempfile::tempdir().unwrap();
    let o = unlinkid(&["run", arg(&root().join("scenarios/v4-demo.toml")), "--out", arg(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().any(|l| l == "authorisations 2"));
    for f in ["transcript.txt", "ledger.txt", "summary.txt"] {
        assert!(out.path().join(f).exists(), "{f} written");
    }
}

#[test]
fn revoke_before_authorize_fails_with_reason() {
    let out = tempfile::tempdir().unwrap();
    let o = unlinkid(&["run", arg(&fixture("revoke-before-authorize.toml")), "--out", arg(out.path())]);
    assert_eq!(o.status.code(), Some(3));
    let s = stdout(&o);
    assert!(s.contains("reason revoked-credential 2"), "{s}");
    assert!(s.lines().any(|l| l == "status failed"));
}

#[test]
fn corrupt_scenario_is_a_parse_error_and_writes_nothing() {
    let out = tempfile::tempdir().unwrap();
    let target = out.path().join("run");
    let o = unlinkid(&["run", arg(&fixture("corrupt.toml")), "--out", arg(&target)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!target.exists());
}

#[test]
fn unknown_parameter_set_is_a_parse_error() {
    let out = tempfile::tempdir().unwrap();
    let target = out.path().join("run");
    let scenario = root().join("scenarios/v4-demo.toml");
    let o = unlinkid(&["run", arg(&scenario), "--params", "huge", "--out", arg(&target)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!target.exists());
}

#[test]
fn missing_scenario_is_an_io_error() {
    let o = unlinkid(&["run", "/nonexistent/scenario.toml", "--out", "/nonexistent/out"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_reports_all_constraints() {
    let o = unlinkid(&["analyze", arg(&golden("v4-demo").join("transcript.txt"))]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for c in 1..=8 {
        assert!(s.contains(&format!("\nc{c} ")), "c{c} missing from\n{s}");
    }
    assert!(s.contains("c3 mass surveillance: pass"));
    assert!(s.contains("c2 processes and practices: governance: not machine-checkable"));
}

#[test]
fn analyze_v0_with_ap_alone_fails_surveillance() {
    let o = unlinkid(&["analyze", arg(&golden("v0-baseline").join("transcript.txt")), "--coalition", "ap"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("accuracy 1.0000"), "{s}");
    assert!(s.contains("c3 mass surveillance: fail"));
}

#[test]
fn analyze_timing_flag_exposes_timing_scenario() {
    let t = golden("timing-caveat").join("transcript.txt");
    let off = stdout(&unlinkid(&["analyze", arg(&t)]));
    let on = stdout(&unlinkid(&["analyze", arg(&t), "--include-timing"]));
    assert!(off.contains("expected-accuracy 0.3333"), "{off}");
    assert!(on.contains("accuracy 1.0000"), "{on}");
}

#[test]
fn analyze_rejects_unknown_coalition_role() {
    let o = unlinkid(&["analyze", arg(&golden("v4-demo").join("transcript.txt")), "--coalition", "cp,isp"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("valid roles"));
}

#[test]
fn analyze_rejects_corrupt_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.txt");
    fs::write(&p, "not a transcript\n").unwrap();
    assert_eq!(unlinkid(&["analyze", arg(&p)]).status.code(), Some(2));
}

#[test]
fn audit_replays_every_golden_transcript() {
    for entry in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")).unwrap() {
        let dir = entry.unwrap().path();
        let o = unlinkid(&["audit", arg(&dir.join("transcript.txt"))]);
        assert_eq!(o.status.code(), Some(0), "{}", dir.display());
        assert!(stdout(&o).contains(", 0 mismatches"));
    }
}

#[test]
fn audit_single_event_and_bad_index() {
    let t = golden("revoke-all").join("transcript.txt");
    let text = fs::read_to_string(&t).unwrap();
    let first_decision = text
        .lines()
        .find(|l| l.starts_with("D ") && l.contains(" ap-authorize "))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .to_string();
    let o = unlinkid(&["audit", arg(&t), "--event", &first_decision]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("replay: match"));
    assert!(s.contains("cites registry seq"));
    assert_eq!(unlinkid(&["audit", arg(&t), "--event", "0"]).status.code(), Some(4));
    assert_eq!(unlinkid(&["audit", arg(&t), "--event", "999999"]).status.code(), Some(4));
}

#[test]
fn audit_cites_revoke_all_entry() {
    let o = unlinkid(&["audit", arg(&golden("revoke-all").join("transcript.txt"))]);
    let s = stdout(&o);
    assert!(s.contains("rejected (revoked-credential)"));
    assert!(s.contains("(revoke-all)"), "{s}");
}

#[test]
fn ledger_dump_verifies_and_tampering_is_caught() {
    let dump = golden("v4-demo").join("ledger.txt");
    let o = unlinkid(&["ledger", arg(&dump)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("chain ok"));

    let text = fs::read_to_string(&dump).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let last = lines.last_mut().unwrap();
    let flipped = if last.ends_with('0') { '1' } else { '0' };
    last.pop();
    last.push(flipped);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ledger.txt");
    fs::write(&p, lines.join("\n")).unwrap();
    assert_eq!(unlinkid(&["ledger", arg(&p)]).status.code(), Some(2));
}

#[test]
fn golden_files_regenerate_byte_identically() {
    let out = tempfile::tempdir().unwrap();
    let o = unlinkid(&["golden", arg(&root().join("scenarios")), "--out", arg(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let expected = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut names: Vec<_> = fs::read_dir(&expected).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        for f in ["transcript.txt", "ledger.txt", "summary.txt", "analysis.txt"] {
            let want = fs::read(expected.join(&name).join(f)).unwrap();
            let got = fs::read(out.path().join(&name).join(f)).unwrap();
            assert!(want == got, "{}/{f} differs from golden", name.to_string_lossy());
        }
    }
}
