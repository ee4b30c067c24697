#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use unlinkid::harness::{run_scenario, RunOptions, RunResult, Scenario};

pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Scenario library files in name order.
pub fn library() -> Vec<(String, Scenario)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let s = Scenario::parse(&std::fs::read_to_string(&p).unwrap()).unwrap();
            (name, s)
        })
        .collect()
}

pub fn run(toml: &str) -> RunResult {
    run_seeded(toml, None)
}

pub fn run_seeded(toml: &str, seed: Option<u64>) -> RunResult {
    let s = Scenario::parse(toml).unwrap_or_else(|e| panic!("{e}\n{toml}"));
    run_scenario(&s, &RunOptions { seed, params: None }).unwrap()
}

pub fn header(name: &str, variant: &str, seed: u64) -> String {
    format!("name = \"{name}\"\nvariant = \"{variant}\"\nscale = \"test\"\nseed = {seed}\n")
}

pub fn party(out: &mut String, id: &str, role: &str, extra: &str) {
    let _ = write!(out, "\n[[party]]\nid = \"{id}\"\nrole = \"{role}\"\n{extra}");
}

pub fn action(out: &mut String, body: &str) {
    let _ = write!(out, "\n[[action]]\n{body}\n");
}

pub fn user(i: usize) -> String {
    format!("u{i}")
}

/// k users enrol for interval 1 and each authorises once at one service.
pub fn v4_sessions(k: usize, seed: u64) -> String {
    let mut s = header("v4-sessions", "V4", seed);
    party(&mut s, "cp1", "cp", "intervals = 2\n");
    party(&mut s, "ap1", "ap", "");
    party(&mut s, "svc", "service", "");
    for i in 0..k {
        party(&mut s, &user(i), "user", "");
    }
    for i in 0..k {
        action(&mut s, &format!("do = \"enroll\"\nuser = \"{}\"\ncp = \"cp1\"\nintervals = [1]", user(i)));
    }
    action(&mut s, "do = \"advance\"\nticks = 2");
    for i in 0..k {
        action(
            &mut s,
            &format!("do = \"authorize\"\nuser = \"{}\"\nservice = \"svc\"\nap = \"ap1\"\nexpect = \"accepted\"", user(i)),
        );
    }
    s
}

/// k users each authorise once at one service through the single-sign-on
/// baseline.
pub fn v0_sessions(k: usize, seed: u64) -> String {
    let mut s = header("v0-sessions", "V0", seed);
    party(&mut s, "cp1", "cp", "");
    party(&mut s, "ap1", "ap", "");
    party(&mut s, "svc", "service", "");
    for i in 0..k {
        party(&mut s, &user(i), "user", "");
    }
    for i in 0..k {
        action(&mut s, &format!("do = \"enroll\"\nuser = \"{}\"\ncp = \"cp1\"\nap = \"ap1\"", user(i)));
    }
    action(&mut s, "do = \"advance\"");
    for i in 0..k {
        action(
            &mut s,
            &format!("do = \"authorize\"\nuser = \"{}\"\nservice = \"svc\"\nap = \"ap1\"\nexpect = \"accepted\"", user(i)),
        );
    }
    s
}

/// One user prefetches a voucher, then redeems it and presents a copy of it
/// concurrently at the same service.
pub fn double_voucher(variant: &str, seed: u64) -> String {
    let mut s = header("double-voucher", variant, seed);
    let tokens = variant.starts_with("V5");
    party(&mut s, "cp1", "cp", "intervals = 2\n");
    party(&mut s, "ap1", "ap", "");
    party(&mut s, "svc", "service", "");
    party(&mut s, "alice", "user", "");
    if tokens {
        action(&mut s, "do = \"enroll\"\nuser = \"alice\"\ncp = \"cp1\"\nkeys = 1\nservice = \"svc\"");
    } else {
        action(&mut s, "do = \"enroll\"\nuser = \"alice\"\ncp = \"cp1\"\nintervals = [1]");
    }
    action(&mut s, "do = \"advance\"\nticks = 2");
    action(&mut s, "do = \"prefetch\"\nuser = \"alice\"\nap = \"ap1\"\nservice = \"svc\"\nexpect = \"accepted\"");
    action(&mut s, "do = \"partition\"\nap = \"ap1\"");
    s.push_str(
        "\n[[action]]\ndo = \"parallel\"\n\
         tasks = [\n  { do = \"redeem\", user = \"alice\", service = \"svc\" },\n  \
         { do = \"replay\", user = \"alice\", service = \"svc\" },\n]\n",
    );
    s
}
