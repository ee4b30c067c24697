//! `unlinkid`: run scenarios, analyse and audit transcripts, inspect ledgers
//! and regenerate golden files.
//!
//! Exit codes: 0 success, 1 I/O error, 2 parse error, 3 protocol failure,
//! 4 analysis error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use unlinkid::harness::{
    audit, link, render_analysis, run_scenario, AuditStatus, Coalition, HarnessError, OracleOptions, RunOptions,
    RunResult, Scenario, Transcript,
};
use unlinkid::ledger::Ledger;

const EXIT_IO: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_PROTOCOL: u8 = 3;
const EXIT_ANALYSIS: u8 = 4;

#[derive(Parser)]
#[command(name = "unlinkid", version, about = "Unlinkable identity protocols over a simulated ledger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its transcript, ledger dump and summary.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Parameter set: toy, compact or desk.
        #[arg(long)]
        params: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Linkage oracle, anonymity sets and constraint report for a transcript.
    Analyze {
        transcript: PathBuf,
        /// Colluding roles, comma separated: cp, ap, service, ledger.
        #[arg(long, default_value = "cp,ap,service")]
        coalition: String,
        #[arg(long)]
        include_timing: bool,
    },
    /// Replay recorded decisions against the ledger and explain them.
    Audit {
        transcript: PathBuf,
        /// Transcript index of one decision; all decisions when omitted.
        #[arg(long)]
        event: Option<u64>,
    },
    /// Verify a ledger dump and list its entries.
    Ledger { dump: PathBuf },
    /// Run every scenario in a directory and write golden outputs.
    Golden {
        #[arg(default_value = "scenarios")]
        scenarios: PathBuf,
        #[arg(long, default_value = "golden")]
        out: PathBuf,
        #[arg(long)]
        coalition: Option<String>,
    },
}

/// Failure carrying its exit code.
struct Fail(u8, String);

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail(EXIT_IO, e.to_string())
    }
}

fn harness_fail(e: HarnessError) -> Fail {
    let code = match e {
        HarnessError::Parse(_) | HarnessError::Transcript(_) => EXIT_PARSE,
        HarnessError::Setup(_) => EXIT_PROTOCOL,
        HarnessError::Analysis(_) => EXIT_ANALYSIS,
    };
    Fail(code, e.to_string())
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn load_transcript(path: &Path) -> Result<Transcript, Fail> {
    Transcript::parse(&read(path)?).map_err(harness_fail)
}

fn run_one(path: &Path, seed: Option<u64>, params: Option<&str>) -> Result<RunResult, Fail> {
    let scenario = Scenario::parse(&read(path)?).map_err(harness_fail)?;
    let params = params
        .map(|p| unlinkid::harness::scenario::parse_params(p).map_err(|e| Fail(EXIT_PARSE, e)))
        .transpose()?;
    run_scenario(&scenario, &RunOptions { seed, params }).map_err(harness_fail)
}

fn write_run(out: &Path, r: &RunResult) -> Result<(), Fail> {
    fs::create_dir_all(out)?;
    fs::write(out.join("transcript.txt"), r.transcript.render())?;
    fs::write(out.join("ledger.txt"), r.ledger.dump())?;
    fs::write(out.join("summary.txt"), r.summary())?;
    Ok(())
}

fn cmd_run(scenario: &Path, seed: Option<u64>, params: Option<&str>, out: &Path) -> Result<(), Fail> {
    let r = run_one(scenario, seed, params)?;
    write_run(out, &r)?;
    print!("{}", r.summary());
    if r.success() {
        Ok(())
    } else {
        Err(Fail(EXIT_PROTOCOL, "one or more actions failed".into()))
    }
}

fn cmd_analyze(path: &Path, coalition: &str, include_timing: bool) -> Result<(), Fail> {
    let coalition: Coalition = coalition.parse().map_err(harness_fail)?;
    let t = load_transcript(path)?;
    let linkage = link(&t, &coalition, OracleOptions { include_timing });
    print!("{}", render_analysis(&t, &linkage));
    linkage.map(|_| ()).map_err(harness_fail)
}

fn cmd_audit(path: &Path, event: Option<u64>) -> Result<(), Fail> {
    let t = load_transcript(path)?;
    let lines = audit(&t, event).map_err(harness_fail)?;
    let mut mismatches = 0;
    for l in &lines {
        print!("{}", l.explain(&t));
        if matches!(l.status, AuditStatus::Mismatch(_)) {
            mismatches += 1;
        }
    }
    let replayed = lines.iter().filter(|l| l.status != AuditStatus::NotAuditable).count();
    println!("audited {replayed} decisions, {mismatches} mismatches");
    if mismatches == 0 {
        Ok(())
    } else {
        Err(Fail(EXIT_ANALYSIS, format!("{mismatches} decisions did not replay")))
    }
}

fn cmd_ledger(path: &Path) -> Result<(), Fail> {
    let l = Ledger::load(&read(path)?).map_err(|e| Fail(EXIT_PARSE, e.to_string()))?;
    println!("entries {}", l.len());
    println!("chain {}", if l.verify_chain() { "ok" } else { "BROKEN" });
    println!("head {}", hex_head(&l));
    for e in l.entries() {
        println!("{} tick {} {} author {}", e.seq, e.timestamp, e.kind(), e.author_key_id.short());
    }
    Ok(())
}

fn hex_head(l: &Ledger) -> String {
    l.head_hash().iter().map(|b| format!("{b:02x}")).collect()
}

fn cmd_golden(dir: &Path, out: &Path, coalition: Option<&str>) -> Result<(), Fail> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let coalition: Coalition = coalition.unwrap_or("cp,ap,service").parse().map_err(harness_fail)?;
    for p in paths {
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let r = run_one(&p, None, None)?;
        let target = out.join(&name);
        write_run(&target, &r)?;
        let linkage = link(&r.transcript, &coalition, OracleOptions::default());
        fs::write(target.join("analysis.txt"), render_analysis(&r.transcript, &linkage))?;
        println!("{name}: {}", if r.success() { "ok" } else { "failed" });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, seed, params, out } => cmd_run(scenario, *seed, params.as_deref(), out),
        Command::Analyze { transcript, coalition, include_timing } => cmd_analyze(transcript, coalition, *include_timing),
        Command::Audit { transcript, event } => cmd_audit(transcript, *event),
        Command::Ledger { dump } => cmd_ledger(dump),
        Command::Golden { scenarios, out, coalition } => cmd_golden(scenarios, out, coalition.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
