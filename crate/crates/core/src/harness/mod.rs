//! Deterministic simulated network and clock that drives scenarios, records
//! transcripts, and analyses them: linkage oracle, audit replay and the
//! constraint report.

pub mod audit;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod transcript;
pub mod world;

pub use audit::{audit, AuditLine, AuditStatus};
pub use oracle::{link, Coalition, LinkageResult, OracleOptions};
pub use report::{anonymity_sets, constraint_report, render_analysis, Finding, Status};
pub use scenario::{ActionSpec, Expectation, Party, Scale, Scenario};
pub use transcript::{Event, Line, Transcript};
pub use world::{run_scenario, ActionOutcome, RunOptions, RunResult};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error("scenario: {0}")]
    Parse(String),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("setup: {0}")]
    Setup(String),
    #[error("analysis: {0}")]
    Analysis(String),
}
