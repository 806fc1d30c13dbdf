//! Source-to-source rewriting of e2e test files.
//!
//! The transformer works on a statement-level subset of JavaScript and
//! TypeScript: a command is a call chain that starts a statement and ends
//! at a `;`, a line break or a closing brace. Command chains anywhere else
//! (inside expressions, expression-bodied arrows, unbraced `if` bodies) are
//! reported as unsupported and left alone.
//!
//! Every inserted region is wrapped in sentinel comments so that it can be
//! removed again byte-exactly.

mod fix;
mod lexer;
mod rewrite;
mod runtime;
mod sites;

use thiserror::Error;

pub use fix::{fix_source, plan_fixes, FixEntry, FixOptions, FixOutcome, SkipReason};
pub use rewrite::{
    insert_waits, instrument_recording, strip_hooks, FixPlan, Instrumented, PlanMode, SentinelKind, WaitInsertion,
    SENTINEL_BEGIN_PREFIX, SENTINEL_END,
};
pub use runtime::{runtime_file_name, runtime_source, ModuleKind, RUNTIME_BASENAME};
pub use sites::{find_commands, find_commands_in, CommandScan, CommandSite, SiteContext, Unsupported};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("{file}:{line}: cannot parse: {reason}")]
    ParseFailure { file: String, line: u32, reason: String },
    #[error("line {line}: command `{name}` in an unsupported position")]
    UnsupportedConstruct { line: u32, name: String },
    #[error("file already contains wefix sentinels")]
    AlreadyInstrumented,
    #[error("line {line}: unbalanced wefix sentinel")]
    UnbalancedSentinels { line: u32 },
    #[error("line {line}: planned site no longer matches the source")]
    StaleSites { line: u32 },
    #[error("line {line}: snippet dialect does not match the site")]
    DialectMismatch { line: u32 },
    #[error("line {line}: site already has a wait")]
    DuplicateWait { line: u32 },
    #[error("plan mode {0:?} cannot be applied by insert_waits")]
    WrongPlanMode(PlanMode),
}

impl TransformError {
    /// Attach a file name to parse failures.
    pub fn in_file(self, file: &str) -> Self {
        match self {
            TransformError::ParseFailure { line, reason, .. } => TransformError::ParseFailure {
                file: file.to_string(),
                line,
                reason,
            },
            other => other,
        }
    }
}
