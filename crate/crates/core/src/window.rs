//! Dynamic listen window.
//!
//! After a command settles, the recording hook keeps draining mutation
//! records for a window of ω seconds. ω starts at one second; every mutation
//! that arrives while the window is open stretches it to twice the
//! mutation's relative time, never shrinking it and never beyond the cap.

use thiserror::Error;

use crate::trace::CommandSpan;

/// Initial window size in seconds.
pub const DEFAULT_INIT_S: f64 = 1.0;
/// Upper bound on the window size in seconds.
pub const DEFAULT_CAP_S: f64 = 20.0;
/// Polling cadence of the real recording loop; recorded window ends may
/// differ from a continuous-time replay by this much.
pub const REPLAY_TOLERANCE_MS: i64 = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowError {
    #[error("event times must be sorted ascending and non-negative (index {index})")]
    UnsortedInput { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPolicy {
    pub init_s: f64,
    pub cap_s: f64,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            init_s: DEFAULT_INIT_S,
            cap_s: DEFAULT_CAP_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowTrace {
    /// Absolute listen start in ms (0 for pure relative-time evaluation).
    pub start_ms: i64,
    /// `(event_rel_s, omega_after_s)` for every captured event.
    pub omega_history: Vec<(f64, f64)>,
    pub omega_final_s: f64,
    /// Indices of the captured events.
    pub captured: Vec<usize>,
}

impl WindowTrace {
    pub fn close_ms(&self) -> i64 {
        self.start_ms + (self.omega_final_s * 1000.0).round() as i64
    }
}

impl WindowPolicy {
    /// Run the policy over event times relative to the listen start.
    pub fn compute(&self, event_rel_s: &[f64]) -> Result<WindowTrace, WindowError> {
        for (i, w) in event_rel_s.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(WindowError::UnsortedInput { index: i + 1 });
            }
        }
        if let Some(i) = event_rel_s.iter().position(|t| !(*t >= 0.0)) {
            return Err(WindowError::UnsortedInput { index: i });
        }

        let mut omega = self.init_s;
        let mut history = Vec::new();
        let mut captured = Vec::new();
        for (i, &rt) in event_rel_s.iter().enumerate() {
            // the loop runs while now < T + ω; an event at or past ω finds
            // the listener gone, and so do all later ones
            if rt >= omega {
                break;
            }
            omega = (2.0 * rt).max(omega);
            omega = omega.min(self.cap_s);
            history.push((rt, omega));
            captured.push(i);
        }
        Ok(WindowTrace {
            start_ms: 0,
            omega_history: history,
            omega_final_s: omega,
            captured,
        })
    }
}

/// [`WindowPolicy::compute`] with the default constants.
pub fn compute_window(event_rel_s: &[f64]) -> Result<WindowTrace, WindowError> {
    WindowPolicy::default().compute(event_rel_s)
}

/// Result of replaying the policy over a recorded span.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowReplay {
    pub trace: WindowTrace,
    /// Window end implied by the replay.
    pub replayed_close_ms: i64,
    /// Seqs of recorded mutations the policy would not have captured.
    pub missed: Vec<u32>,
    /// Recorded minus replayed window end, when it exceeds the polling
    /// tolerance.
    pub divergence_ms: Option<i64>,
}

impl WindowPolicy {
    pub fn replay(&self, span: &CommandSpan) -> WindowReplay {
        // mutations seen before settle were already in the channel when
        // listening began; they count as arriving at relative time zero
        let rel: Vec<f64> = span
            .mutations
            .iter()
            .map(|m| ((m.t_ms - span.settle_ms).max(0)) as f64 / 1000.0)
            .collect();
        let mut trace = self.compute(&rel).expect("span mutations are time-ordered");
        trace.start_ms = span.settle_ms;
        let replayed_close_ms = trace.close_ms();
        let missed = span
            .mutations
            .iter()
            .enumerate()
            .filter(|(i, _)| trace.captured.binary_search(i).is_err())
            .map(|(_, m)| m.seq)
            .collect();
        let divergence_ms = span.window.and_then(|w| {
            let d = w.close_ms - replayed_close_ms;
            (d.abs() > REPLAY_TOLERANCE_MS).then_some(d)
        });
        WindowReplay {
            trace,
            replayed_close_ms,
            missed,
            divergence_ms,
        }
    }
}

pub fn replay_window(span: &CommandSpan) -> WindowReplay {
    WindowPolicy::default().replay(span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Change, ElementLocator, MutationRecord, SourceLoc, TextChange, WindowClose};

    fn omega(events: &[f64]) -> f64 {
        compute_window(events).unwrap().omega_final_s
    }

    #[test]
    fn hand_traced() {
        let t = compute_window(&[]).unwrap();
        assert_eq!(t.omega_final_s, 1.0);
        assert!(t.captured.is_empty());

        let t = compute_window(&[0.3]).unwrap();
        assert_eq!(t.omega_final_s, 1.0);
        assert_eq!(t.captured, vec![0]);

        let t = compute_window(&[0.8, 1.4]).unwrap();
        assert_eq!(t.omega_history, vec![(0.8, 1.6), (1.4, 2.8)]);
        assert_eq!(t.omega_final_s, 2.8);

        let t = compute_window(&[0.9, 11.0]).unwrap();
        assert_eq!(t.omega_final_s, 1.8);
        assert_eq!(t.captured, vec![0]);
    }

    #[test]
    fn cap_at_twenty_seconds() {
        let t = compute_window(&[0.9, 1.7, 3.3, 6.5, 12.9]).unwrap();
        assert_eq!(t.captured, vec![0, 1, 2, 3, 4]);
        assert_eq!(t.omega_final_s, 20.0);
        // 10.5 s is outside a 2.2 s window: missed, not capped
        assert_eq!(omega(&[0.6, 1.1, 10.5]), 2.2);
        assert_eq!(omega(&[0.6, 10.5]), 1.2);
    }

    #[test]
    fn event_exactly_at_omega_is_missed() {
        let t = compute_window(&[1.0]).unwrap();
        assert!(t.captured.is_empty());
        assert_eq!(t.omega_final_s, 1.0);
    }

    #[test]
    fn unsorted_input() {
        assert_eq!(
            compute_window(&[0.5, 0.2]).unwrap_err(),
            WindowError::UnsortedInput { index: 1 }
        );
        assert!(compute_window(&[-0.1]).is_err());
        assert!(compute_window(&[f64::NAN]).is_err());
    }

    fn span_with(settle: i64, ts: &[i64], recorded_close: Option<i64>) -> CommandSpan {
        let mut span = CommandSpan::new(
            1,
            "click",
            SourceLoc {
                file: "a.js".into(),
                line: 1,
            },
            0,
            settle,
        );
        for (i, &t) in ts.iter().enumerate() {
            span.mutations.push(MutationRecord::new(
                1,
                i as u32 + 1,
                t,
                ElementLocator::with_id("x"),
                Change::Text(TextChange {
                    old: String::new(),
                    new: i.to_string(),
                }),
            ));
        }
        span.window = recorded_close.map(|c| WindowClose {
            close_ms: c,
            omega_s: (c - settle) as f64 / 1000.0,
        });
        span
    }

    #[test]
    fn replay_over_span() {
        let r = replay_window(&span_with(100, &[400], Some(1100)));
        assert_eq!(r.trace.omega_final_s, 1.0);
        assert_eq!(r.replayed_close_ms, 1100);
        assert_eq!(r.divergence_ms, None);
        assert!(r.missed.is_empty());

        let r = replay_window(&span_with(100, &[], None));
        assert_eq!(r.trace.omega_final_s, 1.0);
        assert_eq!(r.replayed_close_ms, 1100);
    }

    #[test]
    fn replay_flags_divergence_and_misses() {
        // corrupted close: 1300 vs replayed 1100
        let r = replay_window(&span_with(100, &[400], Some(1300)));
        assert_eq!(r.divergence_ms, Some(200));
        // within polling tolerance
        let r = replay_window(&span_with(100, &[400], Some(1140)));
        assert_eq!(r.divergence_ms, None);

        let r = replay_window(&span_with(100, &[400, 5000], Some(1100)));
        assert_eq!(r.missed, vec![2]);
    }

    #[test]
    fn pre_settle_mutations_are_captured_without_growth() {
        let r = replay_window(&span_with(500, &[100, 300], None));
        assert_eq!(r.trace.captured, vec![0, 1]);
        assert_eq!(r.trace.omega_final_s, 1.0);
    }
}
