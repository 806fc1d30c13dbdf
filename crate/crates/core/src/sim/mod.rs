//! Seeded discrete-event simulation of e2e test runs.
//!
//! A test is a sequence of commands. Each command settles after its base
//! duration and triggers mutations at sampled delays relative to its
//! settle time. Assertions after a command pass iff the mutations they
//! depend on have happened by the time they run. Wait strategies decide
//! how long the test pauses between a command and what follows it.

mod corpus;
mod dist;
mod report;
mod run;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsm::{DEFAULT_MAX_PROPS, DEFAULT_POLL_MS, DEFAULT_TIMEOUT_MS};

pub use corpus::{gen_corpus, record_log, Corpus, CorpusSpec, CorpusSummary};
pub use dist::{quantile, DelayDistribution};
pub use report::{report_csv, report_table, SimConfig};
pub use run::{
    evaluate, run_trial, run_trial_rerun, sample_delays, simulate_test, SimReport, StrategyReport, TestOutcome,
    TestRun, TrialResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("bad distribution: {0}")]
    BadDistribution(String),
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error("at least one rerun is required")]
    NoReruns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationSpec {
    /// Label of the property the mutation writes.
    pub target: String,
    /// Delay relative to the command's settle time; negative values happen
    /// before settle.
    pub delay: DelayDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCommand {
    pub name: String,
    pub base_duration_ms: i64,
    pub mutations: Vec<MutationSpec>,
    /// Mutations are causally chained: sampled delays are sorted and
    /// handed out in spec order, so later specs never happen earlier.
    #[serde(default)]
    pub causal: bool,
}

/// Reference to mutation spec `spec` of command `command` in the same test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpecRef {
    pub command: usize,
    pub spec: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAssertion {
    /// Index of the command the assertion follows.
    pub after_command: usize,
    pub depends_on: Vec<SpecRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTest {
    pub id: u32,
    pub commands: Vec<SimCommand>,
    pub assertions: Vec<SimAssertion>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimSuite {
    pub tests: Vec<SimTest>,
}

impl SimSuite {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |why: String| Err(SimError::InvalidSuite(why));
        for t in &self.tests {
            for (k, c) in t.commands.iter().enumerate() {
                if c.base_duration_ms <= 0 {
                    return bad(format!("test {} command {k}: base duration must be positive", t.id));
                }
                for m in &c.mutations {
                    m.delay.validate()?;
                }
            }
            for a in &t.assertions {
                if a.after_command >= t.commands.len() {
                    return bad(format!(
                        "test {}: assertion after missing command {}",
                        t.id, a.after_command
                    ));
                }
                for d in &a.depends_on {
                    if d.command > a.after_command || d.spec >= t.commands[d.command].mutations.len() {
                        return bad(format!("test {}: assertion depends on unknown or later mutation", t.id));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn command_count(&self) -> usize {
        self.tests.iter().map(|t| t.commands.len()).sum()
    }
}

fn default_poll() -> u64 {
    DEFAULT_POLL_MS
}
fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}
fn default_props() -> usize {
    DEFAULT_MAX_PROPS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    None,
    /// Sleep a fixed time after every command.
    Implicit {
        wait_ms: u64,
    },
    /// Poll the recorded oracle after every command that was flaky-prone
    /// in the recording run.
    ExplicitOracle {
        #[serde(default = "default_poll")]
        poll_ms: u64,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
        #[serde(default = "default_props")]
        max_props: usize,
    },
}

impl Strategy {
    pub fn explicit() -> Self {
        Strategy::ExplicitOracle {
            poll_ms: DEFAULT_POLL_MS,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_props: DEFAULT_MAX_PROPS,
        }
    }

    /// none, implicit 0.2/0.5/1/2 s, explicit oracle.
    pub fn ladder() -> Vec<Strategy> {
        let mut v = vec![Strategy::None];
        v.extend([200, 500, 1000, 2000].map(|wait_ms| Strategy::Implicit { wait_ms }));
        v.push(Strategy::explicit());
        v
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::None => f.write_str("none"),
            Strategy::Implicit { wait_ms } => write!(f, "implicit {wait_ms}ms"),
            Strategy::ExplicitOracle {
                poll_ms, timeout_ms, ..
            } => {
                write!(f, "explicit oracle ({poll_ms}/{timeout_ms}ms)")
            }
        }
    }
}

/// Random stream used when sampling the recording run.
pub const RECORD_STREAM: u32 = u32::MAX;
/// Random stream used when generating a corpus.
pub const CORPUS_STREAM: u32 = u32::MAX - 1;

/// Independent stream `stream` of test `test_id` under `seed`.
pub fn stream_rng(seed: u64, test_id: u32, stream: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(test_id) << 32) | u64::from(stream));
    rng
}
