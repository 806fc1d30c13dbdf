//! Synthetic corpora and their recorded logs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dist::quantile;
use super::run::sample_delays;
use super::{
    stream_rng, DelayDistribution, MutationSpec, SimAssertion, SimCommand, SimError, SimSuite, SimTest, SpecRef,
    CORPUS_STREAM, RECORD_STREAM,
};
use crate::trace::{
    Change, CommandSpan, ElementLocator, MutationLog, MutationRecord, SourceLoc, TextChange, WindowClose,
};
use crate::window::compute_window;

/// Parameters of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub min_commands: usize,
    pub max_commands: usize,
    /// Promise settle time of a command.
    pub base_duration: DelayDistribution,
    /// Probability that a command has mutations after it settles.
    pub flaky_prone_share: f64,
    pub max_mutations: usize,
    /// Typical post-settle delay of a mutation of a flaky-prone command.
    pub delay: DelayDistribution,
    /// Each run draws a mutation's delay uniformly within ±jitter of its
    /// typical delay.
    pub jitter: f64,
    /// Most mutations a command that is not flaky-prone carries; they
    /// happen up to `pre_settle_ms` before it settles.
    pub quiet_mutations: usize,
    pub pre_settle_ms: f64,
    /// Probability that a command is followed by an assertion on its last
    /// mutation.
    pub assertion_share: f64,
    /// Only mutations that always happen within this bound are asserted on.
    pub assertion_bound_ms: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            min_commands: 3,
            max_commands: 9,
            base_duration: DelayDistribution::Uniform {
                lo_ms: 600.0,
                hi_ms: 1800.0,
            },
            flaky_prone_share: 0.657,
            max_mutations: 1,
            delay: DelayDistribution::LogNormal {
                p95_ms: 3000.0,
                sigma: 1.3,
                cap_ms: 3300.0,
            },
            jitter: 0.2,
            quiet_mutations: 0,
            pre_settle_ms: 300.0,
            assertion_share: 0.5,
            assertion_bound_ms: 2000.0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |why: &str| Err(SimError::BadDistribution(why.to_string()));
        self.base_duration.validate()?;
        self.delay.validate()?;
        if self.min_commands == 0 || self.min_commands > self.max_commands {
            return bad("command count range is empty");
        }
        if self.max_mutations == 0 {
            return bad("max_mutations must be at least 1");
        }
        for (name, p) in [
            ("flaky_prone_share", self.flaky_prone_share),
            ("assertion_share", self.assertion_share),
            ("jitter", self.jitter),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::BadDistribution(format!("{name} must be within [0, 1]")));
            }
        }
        if !(self.pre_settle_ms >= 0.0) {
            return bad("pre_settle_ms must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub seed: u64,
    pub tests: usize,
    pub commands: usize,
    pub flaky_prone_commands: usize,
    pub assertions: usize,
    /// 95th percentile of 10,000 draws from the delay distribution.
    pub delay_p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub suite: SimSuite,
    pub summary: CorpusSummary,
}

fn jittered(typical: f64, jitter: f64) -> DelayDistribution {
    if jitter == 0.0 {
        DelayDistribution::Constant { ms: typical }
    } else {
        DelayDistribution::Uniform {
            lo_ms: typical * (1.0 - jitter),
            hi_ms: typical * (1.0 + jitter),
        }
    }
}

/// Generate `n_tests` tests; deterministic in `seed`.
pub fn gen_corpus(spec: &CorpusSpec, n_tests: usize, seed: u64) -> Result<Corpus, SimError> {
    spec.validate()?;
    let mut flaky_prone_commands = 0;
    let mut tests = Vec::with_capacity(n_tests);
    for id in 0..n_tests as u32 {
        let mut rng = stream_rng(seed, id, CORPUS_STREAM);
        let n_cmds = rng.gen_range(spec.min_commands..=spec.max_commands);
        let mut commands = Vec::with_capacity(n_cmds);
        let mut assertions = Vec::new();
        for k in 0..n_cmds {
            let base = (spec.base_duration.sample(&mut rng).round() as i64).max(1);
            let flaky = rng.gen_bool(spec.flaky_prone_share);
            let n_mut = if flaky {
                rng.gen_range(1..=spec.max_mutations)
            } else {
                rng.gen_range(0..=spec.quiet_mutations)
            };
            let mutations: Vec<MutationSpec> = (0..n_mut)
                .map(|s| {
                    let delay = if flaky {
                        jittered(spec.delay.sample(&mut rng).max(0.0), spec.jitter)
                    } else {
                        DelayDistribution::Uniform {
                            lo_ms: -(spec.pre_settle_ms.min(base as f64)),
                            hi_ms: 0.0,
                        }
                    };
                    MutationSpec {
                        target: format!("t{id}c{k}m{s}"),
                        delay,
                    }
                })
                .collect();
            if flaky && mutations.iter().any(|m| m.delay.upper_bound() > 0.0) {
                flaky_prone_commands += 1;
            }
            let assertable = mutations
                .iter()
                .all(|m| m.delay.upper_bound() <= spec.assertion_bound_ms);
            if n_mut > 0 && assertable && rng.gen_bool(spec.assertion_share) {
                assertions.push(SimAssertion {
                    after_command: k,
                    depends_on: vec![SpecRef {
                        command: k,
                        spec: n_mut - 1,
                    }],
                });
            }
            commands.push(SimCommand {
                name: format!("cmd{k}"),
                base_duration_ms: base,
                mutations,
                causal: true,
            });
        }
        tests.push(SimTest {
            id,
            commands,
            assertions,
        });
    }
    let mut rng = stream_rng(seed, u32::MAX, CORPUS_STREAM);
    let draws: Vec<f64> = (0..10_000).map(|_| spec.delay.sample(&mut rng)).collect();
    let suite = SimSuite { tests };
    let summary = CorpusSummary {
        seed,
        tests: n_tests,
        commands: suite.command_count(),
        flaky_prone_commands,
        assertions: suite.tests.iter().map(|t| t.assertions.len()).sum(),
        delay_p95_ms: quantile(&draws, 0.95),
    };
    Ok(Corpus { suite, summary })
}

/// The mutation log a recording run of the suite would produce: tests run
/// back to back, each command starting when the previous one settles.
/// Uses the same delays the explicit strategy's oracles are built from.
pub fn record_log(suite: &SimSuite, seed: u64) -> MutationLog {
    let mut log = MutationLog::new("simulated", 0);
    let mut cursor = 0i64;
    let mut cmd_id = 0u32;
    for t in &suite.tests {
        let delays = sample_delays(t, &mut stream_rng(seed, t.id, RECORD_STREAM));
        for (k, (c, d)) in t.commands.iter().zip(&delays).enumerate() {
            cmd_id += 1;
            let start = cursor;
            let settle = start + c.base_duration_ms;
            let mut span = CommandSpan::new(
                cmd_id,
                c.name.clone(),
                SourceLoc {
                    file: format!("test{}.js", t.id),
                    line: k as u32 + 1,
                },
                start,
                settle,
            );
            let mut times: Vec<(i64, usize)> = d.iter().enumerate().map(|(s, &x)| (settle + x, s)).collect();
            times.sort();
            for (seq, (time, s)) in times.into_iter().enumerate() {
                span.mutations.push(MutationRecord::new(
                    cmd_id,
                    seq as u32 + 1,
                    time,
                    ElementLocator::new(format!("/html/body/div[{}]/span[{}]", t.id + 1, k * 8 + s + 1)),
                    Change::Text(TextChange {
                        old: String::new(),
                        new: c.mutations[s].target.clone(),
                    }),
                ));
            }
            let rel: Vec<f64> = span
                .mutations
                .iter()
                .map(|m| (m.t_ms - settle).max(0) as f64 / 1000.0)
                .collect();
            let w = compute_window(&rel).expect("sorted, non-negative");
            span.window = Some(WindowClose {
                close_ms: settle + w.close_ms(),
                omega_s: w.omega_final_s,
            });
            log.spans.push(span);
            cursor = settle;
        }
    }
    log.flag_late();
    log
}
