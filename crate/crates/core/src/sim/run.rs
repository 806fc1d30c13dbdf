//! Trials and strategy evaluation.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{stream_rng, SimError, SimSuite, SimTest, SpecRef, Strategy, RECORD_STREAM};
use crate::window::compute_window;

/// Delays in ms for every mutation spec of a test, per command.
pub fn sample_delays<R: Rng + ?Sized>(test: &SimTest, rng: &mut R) -> Vec<Vec<i64>> {
    test.commands
        .iter()
        .map(|c| {
            let mut d: Vec<i64> = c
                .mutations
                .iter()
                .map(|m| (m.delay.sample(rng).round() as i64).max(-c.base_duration_ms))
                .collect();
            if c.causal {
                d.sort_unstable();
            }
            d
        })
        .collect()
}

/// Spec indices the explicit wait after each command polls for, `None`
/// for commands that were not flaky-prone when recorded.
fn oracle_plan(recorded: &[Vec<i64>], max_props: usize) -> Vec<Option<Vec<usize>>> {
    recorded
        .iter()
        .map(|d| {
            if !d.iter().any(|&x| x > 0) {
                return None;
            }
            let mut idx: Vec<usize> = (0..d.len()).collect();
            // latest first; later spec wins ties, as in the state machine
            idx.sort_by(|&a, &b| d[b].cmp(&d[a]).then(b.cmp(&a)));
            idx.truncate(max_props.max(1));
            Some(idx)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TestRun {
    pub test_id: u32,
    pub passed: bool,
    pub time_ms: i64,
    /// Time spent in strategy waits.
    pub waited_ms: i64,
    pub timeouts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: i64,
    at: SpecRef,
}

struct Timeline {
    heap: BinaryHeap<Reverse<Event>>,
    occurred: Vec<Vec<bool>>,
}

impl Timeline {
    fn advance(&mut self, now: i64) {
        while let Some(Reverse(ev)) = self.heap.peek() {
            if ev.time > now {
                break;
            }
            let Reverse(ev) = self.heap.pop().unwrap();
            self.occurred[ev.at.command][ev.at.spec] = true;
        }
    }

    fn happened(&self, r: SpecRef) -> bool {
        self.occurred[r.command][r.spec]
    }
}

/// Replay one test with fixed delays. `plan` is required for the explicit
/// strategy.
pub fn simulate_test(
    test: &SimTest,
    strategy: &Strategy,
    delays: &[Vec<i64>],
    plan: Option<&[Option<Vec<usize>>]>,
) -> TestRun {
    let mut tl = Timeline {
        heap: BinaryHeap::new(),
        occurred: delays.iter().map(|d| vec![false; d.len()]).collect(),
    };
    let mut run = TestRun {
        test_id: test.id,
        passed: true,
        time_ms: 0,
        waited_ms: 0,
        timeouts: 0,
    };
    let mut now = 0i64;
    for (k, cmd) in test.commands.iter().enumerate() {
        let settle = now + cmd.base_duration_ms;
        for (s, &d) in delays[k].iter().enumerate() {
            tl.heap.push(Reverse(Event {
                time: settle + d,
                at: SpecRef { command: k, spec: s },
            }));
        }
        let end = match *strategy {
            Strategy::None => settle,
            Strategy::Implicit { wait_ms } => settle + wait_ms as i64,
            Strategy::ExplicitOracle {
                poll_ms, timeout_ms, ..
            } => match plan.and_then(|p| p[k].as_ref()) {
                None => settle,
                Some(specs) => {
                    let deadline = settle + timeout_ms as i64;
                    let mut t = settle;
                    loop {
                        tl.advance(t);
                        if specs.iter().all(|&s| tl.happened(SpecRef { command: k, spec: s })) {
                            break t;
                        }
                        if t >= deadline {
                            run.timeouts += 1;
                            break deadline;
                        }
                        t = (t + poll_ms.max(1) as i64).min(deadline);
                    }
                }
            },
        };
        tl.advance(end);
        run.waited_ms += end - settle;
        for a in test.assertions.iter().filter(|a| a.after_command == k) {
            if !a.depends_on.iter().all(|&d| tl.happened(d)) {
                run.passed = false;
            }
        }
        now = end;
    }
    run.time_ms = now;
    run
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialResult {
    pub runs: Vec<TestRun>,
    pub suite_time_ms: i64,
}

fn recorded_plan(test: &SimTest, seed: u64, strategy: &Strategy) -> Option<Vec<Option<Vec<usize>>>> {
    match strategy {
        Strategy::ExplicitOracle { max_props, .. } => {
            let recorded = sample_delays(test, &mut stream_rng(seed, test.id, RECORD_STREAM));
            Some(oracle_plan(&recorded, *max_props))
        }
        _ => None,
    }
}

/// One run of the whole suite; rerun 0.
pub fn run_trial(suite: &SimSuite, strategy: &Strategy, seed: u64) -> TrialResult {
    run_trial_rerun(suite, strategy, seed, 0)
}

/// Run of the suite with the delays of rerun `rerun`.
pub fn run_trial_rerun(suite: &SimSuite, strategy: &Strategy, seed: u64, rerun: u32) -> TrialResult {
    let runs: Vec<TestRun> = suite
        .tests
        .iter()
        .map(|t| {
            let delays = sample_delays(t, &mut stream_rng(seed, t.id, rerun));
            let plan = recorded_plan(t, seed, strategy);
            simulate_test(t, strategy, &delays, plan.as_deref())
        })
        .collect();
    let suite_time_ms = runs.iter().map(|r| r.time_ms).sum();
    TrialResult { runs, suite_time_ms }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub test_id: u32,
    /// Reruns that passed.
    pub passes: u32,
    pub c_flaky: bool,
    pub fixed: bool,
    pub time_ms: i64,
    pub timeouts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub label: String,
    pub fixed: usize,
    /// fixed ÷ c-flaky tests; 1 when nothing is c-flaky.
    pub fix_rate: f64,
    pub total_time_ms: i64,
    pub overhead: f64,
    pub timeouts: u64,
    pub per_test: Vec<TestOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub reruns: u32,
    pub tests: usize,
    pub commands: usize,
    /// Tests failing at least one rerun without added waits.
    pub c_flaky: usize,
    /// Suite time without added waits, summed over reruns.
    pub baseline_time_ms: i64,
    /// One recording run with the dynamic listen window after every
    /// command.
    pub recording_time_ms: i64,
    pub recording_overhead: f64,
    pub strategies: Vec<StrategyReport>,
}

fn recording_time(test: &SimTest, seed: u64) -> i64 {
    let recorded = sample_delays(test, &mut stream_rng(seed, test.id, RECORD_STREAM));
    test.commands
        .iter()
        .zip(&recorded)
        .map(|(c, d)| {
            let mut rel: Vec<f64> = d.iter().map(|&x| x.max(0) as f64 / 1000.0).collect();
            rel.sort_by(f64::total_cmp);
            let w = compute_window(&rel).expect("sorted, non-negative");
            c.base_duration_ms + w.close_ms()
        })
        .sum()
}

/// Run every strategy `reruns` times on every test. Reruns of different
/// strategies see the same delays, so strategies are compared on equal
/// footing.
pub fn evaluate(suite: &SimSuite, strategies: &[Strategy], reruns: u32, seed: u64) -> Result<SimReport, SimError> {
    if reruns == 0 {
        return Err(SimError::NoReruns);
    }
    suite.validate()?;

    struct PerTest {
        baseline_passes: u32,
        baseline_time: i64,
        recording: i64,
        per_strategy: Vec<(u32, i64, u32)>,
    }

    let per_test: Vec<PerTest> = suite
        .tests
        .par_iter()
        .map(|t| {
            let delays: Vec<Vec<Vec<i64>>> = (0..reruns)
                .map(|r| sample_delays(t, &mut stream_rng(seed, t.id, r)))
                .collect();
            let mut outcome = |s: &Strategy| {
                let plan = recorded_plan(t, seed, s);
                let mut acc = (0u32, 0i64, 0u32);
                for d in &delays {
                    let run = simulate_test(t, s, d, plan.as_deref());
                    acc.0 += u32::from(run.passed);
                    acc.1 += run.time_ms;
                    acc.2 += run.timeouts;
                }
                acc
            };
            let (baseline_passes, baseline_time, _) = outcome(&Strategy::None);
            PerTest {
                baseline_passes,
                baseline_time,
                recording: recording_time(t, seed),
                per_strategy: strategies.iter().map(&mut outcome).collect(),
            }
        })
        .collect();

    let c_flaky_of = |p: &PerTest| p.baseline_passes < reruns;
    let c_flaky = per_test.iter().filter(|p| c_flaky_of(p)).count();
    let baseline_time_ms: i64 = per_test.iter().map(|p| p.baseline_time).sum();
    let recording_time_ms: i64 = per_test.iter().map(|p| p.recording).sum();
    let ratio = |x: i64| {
        if baseline_time_ms > 0 {
            x as f64 / baseline_time_ms as f64
        } else {
            1.0
        }
    };

    let reports = strategies
        .iter()
        .enumerate()
        .map(|(si, s)| {
            let outcomes: Vec<TestOutcome> = suite
                .tests
                .iter()
                .zip(&per_test)
                .map(|(t, p)| {
                    let (passes, time_ms, timeouts) = p.per_strategy[si];
                    TestOutcome {
                        test_id: t.id,
                        passes,
                        c_flaky: c_flaky_of(p),
                        fixed: c_flaky_of(p) && passes == reruns,
                        time_ms,
                        timeouts,
                    }
                })
                .collect();
            let fixed = outcomes.iter().filter(|o| o.fixed).count();
            let total_time_ms = outcomes.iter().map(|o| o.time_ms).sum();
            StrategyReport {
                strategy: *s,
                label: s.to_string(),
                fixed,
                fix_rate: if c_flaky == 0 {
                    1.0
                } else {
                    fixed as f64 / c_flaky as f64
                },
                total_time_ms,
                overhead: ratio(total_time_ms),
                timeouts: outcomes.iter().map(|o| u64::from(o.timeouts)).sum(),
                per_test: outcomes,
            }
        })
        .collect();

    Ok(SimReport {
        seed,
        reruns,
        tests: suite.tests.len(),
        commands: suite.command_count(),
        c_flaky,
        baseline_time_ms,
        recording_time_ms,
        recording_overhead: ratio(recording_time_ms * i64::from(reruns)),
        strategies: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DelayDistribution, MutationSpec, SimAssertion, SimCommand};

    fn one_command(delay_ms: f64) -> SimSuite {
        SimSuite {
            tests: vec![SimTest {
                id: 0,
                commands: vec![SimCommand {
                    name: "click".into(),
                    base_duration_ms: 100,
                    mutations: vec![MutationSpec {
                        target: "#age text".into(),
                        delay: DelayDistribution::Constant { ms: delay_ms },
                    }],
                    causal: true,
                }],
                assertions: vec![SimAssertion {
                    after_command: 0,
                    depends_on: vec![SpecRef { command: 0, spec: 0 }],
                }],
            }],
        }
    }

    #[test]
    fn hand_traced_single_command() {
        let s = one_command(300.0);
        let none = run_trial(&s, &Strategy::None, 0);
        assert!(!none.runs[0].passed);
        assert_eq!(none.suite_time_ms, 100);

        let imp = run_trial(&s, &Strategy::Implicit { wait_ms: 500 }, 0);
        assert!(imp.runs[0].passed);
        assert_eq!(imp.suite_time_ms, 600);

        let exp = run_trial(&s, &Strategy::explicit(), 0);
        assert!(exp.runs[0].passed);
        assert_eq!(exp.runs[0].waited_ms, 300);
        assert_eq!(exp.runs[0].timeouts, 0);
    }

    #[test]
    fn waits_shorter_than_delay_fail() {
        let s = one_command(2500.0);
        assert!(!run_trial(&s, &Strategy::Implicit { wait_ms: 2000 }, 0).runs[0].passed);
    }

    #[test]
    fn explicit_timeout() {
        let s = one_command(5000.0);
        let r = run_trial(&s, &Strategy::explicit(), 0);
        assert!(!r.runs[0].passed);
        assert_eq!(r.runs[0].timeouts, 1);
        assert_eq!(r.runs[0].waited_ms, 4000);
    }

    #[test]
    fn poll_grid_rounds_up() {
        let s = one_command(301.0);
        let r = run_trial(&s, &Strategy::explicit(), 0);
        assert_eq!(r.runs[0].waited_ms, 400);
    }

    #[test]
    fn zero_delays_never_flaky() {
        let rep = evaluate(&one_command(0.0), &Strategy::ladder(), 10, 3).unwrap();
        assert_eq!(rep.c_flaky, 0);
        for s in &rep.strategies {
            assert_eq!(s.fix_rate, 1.0);
        }
        assert_eq!(rep.strategies[0].overhead, 1.0);
    }

    #[test]
    fn reruns_required() {
        assert_eq!(evaluate(&one_command(1.0), &[], 0, 0).unwrap_err(), SimError::NoReruns);
    }

    #[test]
    fn oracle_plan_picks_latest() {
        let p = oracle_plan(&[vec![-5, 10, 30, 20], vec![-1, 0]], 2);
        assert_eq!(p, vec![Some(vec![2, 3]), None]);
    }
}
