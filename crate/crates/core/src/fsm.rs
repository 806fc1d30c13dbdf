//! Per-command mutation state machine and wait-oracle synthesis.
//!
//! States are DOM statuses; the transition into state `t` is the command's
//! `t`-th kept mutation. Every property remembers the index of the mutation
//! that last wrote it (0 for untouched). The oracle for a command is a
//! conjunction over the properties written last in the end state.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::trace::{is_truncated_value, Change, CommandSpan, ElementLocator, MutationRecord};

pub const DEFAULT_MAX_PROPS: usize = 3;
pub const DEFAULT_POLL_MS: u64 = 100;
pub const DEFAULT_TIMEOUT_MS: u64 = 4000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FsmError {
    #[error("no property was mutated; no wait is needed")]
    NoMutatedProperty,
    #[error("initial state must have index 0, got {0}")]
    NotInitialState(usize),
    #[error("mutation seq {seq} belongs to command {cmd_id}, not {expected}")]
    ForeignMutation { cmd_id: u32, seq: u32, expected: u32 },
    #[error("mutation seq {seq} is out of time order")]
    Unordered { seq: u32 },
}

/// A property value tagged with the index of the mutation that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamped<T> {
    pub value: T,
    pub last_mut_idx: usize,
    /// The value is a capture-time prefix of the real value.
    pub truncated: bool,
}

impl<T> Stamped<T> {
    fn untouched(value: T) -> Self {
        Stamped {
            value,
            last_mut_idx: 0,
            truncated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementStatus {
    /// `None` values mean the attribute was removed.
    pub attrs: BTreeMap<String, Stamped<Option<String>>>,
    pub text: Stamped<String>,
    pub child_count: Stamped<u32>,
}

impl Default for ElementStatus {
    fn default() -> Self {
        ElementStatus {
            attrs: BTreeMap::new(),
            text: Stamped::untouched(String::new()),
            child_count: Stamped::untouched(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DomState {
    pub index: usize,
    pub elements: BTreeMap<ElementLocator, ElementStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PropertyKind {
    Attr(String),
    Text,
    ChildLen,
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyKind::Attr(n) => write!(f, "attr {n}"),
            PropertyKind::Text => f.write_str("text"),
            PropertyKind::ChildLen => f.write_str("child length"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropValue {
    Str(String),
    /// Attribute not present.
    Absent,
    Count(u32),
}

impl fmt::Display for PropValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropValue::Str(s) => write!(f, "{s:?}"),
            PropValue::Absent => f.write_str("<absent>"),
            PropValue::Count(n) => write!(f, "{n}"),
        }
    }
}

impl DomState {
    pub fn initial() -> Self {
        DomState::default()
    }

    /// Current value of a property, if the element is present.
    pub fn value_of(&self, element: &ElementLocator, kind: &PropertyKind) -> Option<PropValue> {
        let status = self.elements.get(element)?;
        Some(match kind {
            PropertyKind::Attr(name) => match status.attrs.get(name).and_then(|s| s.value.clone()) {
                Some(v) => PropValue::Str(v),
                None => PropValue::Absent,
            },
            PropertyKind::Text => PropValue::Str(status.text.value.clone()),
            PropertyKind::ChildLen => PropValue::Count(status.child_count.value),
        })
    }

    /// Every property with a non-zero mutation index.
    pub fn mutated_properties(&self) -> Vec<PropertyRef> {
        let mut out = Vec::new();
        for (loc, st) in &self.elements {
            for (name, a) in &st.attrs {
                if a.last_mut_idx > 0 {
                    out.push(PropertyRef {
                        element: loc.clone(),
                        kind: PropertyKind::Attr(name.clone()),
                        value: a.value.clone().map_or(PropValue::Absent, PropValue::Str),
                        last_mut_idx: a.last_mut_idx,
                        truncated: a.truncated,
                    });
                }
            }
            if st.text.last_mut_idx > 0 {
                out.push(PropertyRef {
                    element: loc.clone(),
                    kind: PropertyKind::Text,
                    value: PropValue::Str(st.text.value.clone()),
                    last_mut_idx: st.text.last_mut_idx,
                    truncated: st.text.truncated,
                });
            }
            if st.child_count.last_mut_idx > 0 {
                out.push(PropertyRef {
                    element: loc.clone(),
                    kind: PropertyKind::ChildLen,
                    value: PropValue::Count(st.child_count.value),
                    last_mut_idx: st.child_count.last_mut_idx,
                    truncated: false,
                });
            }
        }
        out
    }
}

/// A child-list record whose resulting count disagrees with the replayed
/// count. Replay trusts the recorded count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inconsistency {
    pub seq: u32,
    pub element: ElementLocator,
    pub replayed: i64,
    pub recorded: u32,
}

/// Apply mutation number `t` to `prev`, producing state `t`.
pub fn apply(prev: &DomState, m: &MutationRecord, t: usize) -> (DomState, Option<Inconsistency>) {
    let mut next = prev.clone();
    next.index = t;
    let mut issue = None;
    let status = next.elements.entry(m.target.clone()).or_default();
    match &m.change {
        Change::Attribute(a) => {
            let truncated = a.new.as_deref().is_some_and(|v| is_truncated_value(v, m.truncated));
            status.attrs.insert(
                a.name.clone(),
                Stamped {
                    value: a.new.clone(),
                    last_mut_idx: t,
                    truncated,
                },
            );
        }
        Change::Text(tc) => {
            status.text = Stamped {
                value: tc.new.clone(),
                last_mut_idx: t,
                truncated: is_truncated_value(&tc.new, m.truncated),
            };
        }
        Change::ChildList(c) => {
            // only a count established by an earlier mutation can be checked
            if status.child_count.last_mut_idx > 0 {
                let replayed = i64::from(status.child_count.value) + i64::from(c.added) - i64::from(c.removed);
                if replayed != i64::from(c.resulting_count) {
                    issue = Some(Inconsistency {
                        seq: m.seq,
                        element: m.target.clone(),
                        replayed,
                        recorded: c.resulting_count,
                    });
                }
            }
            status.child_count = Stamped {
                value: c.resulting_count,
                last_mut_idx: t,
                truncated: false,
            };
            if c.resulting_count == 0 && c.removed > 0 {
                // every descendant is gone; the parent's child length speaks for them
                let prefix = format!("{}/", m.target.xpath);
                next.elements.retain(|loc, _| !loc.xpath.starts_with(&prefix));
            }
        }
    }
    (next, issue)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationFSM {
    /// `S_0 ..= S_j`.
    pub states: Vec<DomState>,
    /// `(from, mutation seq, to)`, always `to = from + 1`.
    pub transitions: Vec<(usize, u32, usize)>,
    pub inconsistencies: Vec<Inconsistency>,
}

impl MutationFSM {
    pub fn end_state(&self) -> &DomState {
        self.states.last().expect("an FSM always has S_0")
    }

    pub fn state(&self, index: usize) -> &DomState {
        &self.states[index]
    }
}

/// Replay a command's kept mutations from `initial`.
pub fn build_fsm(span: &CommandSpan, kept: &[MutationRecord], initial: DomState) -> Result<MutationFSM, FsmError> {
    if initial.index != 0 {
        return Err(FsmError::NotInitialState(initial.index));
    }
    let mut states = Vec::with_capacity(kept.len() + 1);
    let mut transitions = Vec::with_capacity(kept.len());
    let mut inconsistencies = Vec::new();
    states.push(initial);
    let mut prev_t = i64::MIN;
    for (i, m) in kept.iter().enumerate() {
        if m.cmd_id != span.cmd_id {
            return Err(FsmError::ForeignMutation {
                cmd_id: m.cmd_id,
                seq: m.seq,
                expected: span.cmd_id,
            });
        }
        if m.t_ms < prev_t {
            return Err(FsmError::Unordered { seq: m.seq });
        }
        prev_t = m.t_ms;
        let t = i + 1;
        let (next, issue) = apply(&states[i], m, t);
        if let Some(issue) = issue {
            log::warn!(
                "command {}: child count of {} replays to {} but was recorded as {}",
                span.cmd_id,
                issue.element,
                issue.replayed,
                issue.recorded
            );
            inconsistencies.push(issue);
        }
        states.push(next);
        transitions.push((i, m.seq, t));
    }
    Ok(MutationFSM {
        states,
        transitions,
        inconsistencies,
    })
}

pub fn end_state(fsm: &MutationFSM) -> &DomState {
    fsm.end_state()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyRef {
    pub element: ElementLocator,
    pub kind: PropertyKind,
    pub value: PropValue,
    pub last_mut_idx: usize,
    pub truncated: bool,
}

fn by_recency(a: &PropertyRef, b: &PropertyRef) -> std::cmp::Ordering {
    b.last_mut_idx
        .cmp(&a.last_mut_idx)
        .then_with(|| a.element.xpath.cmp(&b.element.xpath))
        .then_with(|| a.kind.cmp(&b.kind))
        .then_with(|| a.element.cmp(&b.element))
}

/// Mutated properties ordered latest first, ties by (xpath, kind, name).
pub fn ranked_properties(end: &DomState) -> Vec<PropertyRef> {
    let mut props = end.mutated_properties();
    props.sort_by(by_recency);
    props
}

/// The up-to-`max_props` properties written last.
pub fn select_properties(end: &DomState, max_props: usize) -> Result<Vec<PropertyRef>, FsmError> {
    let mut props = ranked_properties(end);
    if props.is_empty() {
        return Err(FsmError::NoMutatedProperty);
    }
    props.truncate(max_props.max(1));
    Ok(props)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expected {
    Equals(PropValue),
    /// The value starts with this prefix; used for truncated captures.
    Prefix(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub element: ElementLocator,
    pub kind: PropertyKind,
    pub expected: Expected,
}

impl Predicate {
    pub fn from_property(p: &PropertyRef) -> Self {
        let expected = match (&p.value, p.truncated) {
            (PropValue::Str(s), true) => Expected::Prefix(s.clone()),
            (v, _) => Expected::Equals(v.clone()),
        };
        Predicate {
            element: p.element.clone(),
            kind: p.kind.clone(),
            expected,
        }
    }

    pub fn holds(&self, state: &DomState) -> bool {
        let Some(actual) = state.value_of(&self.element, &self.kind) else {
            return false;
        };
        match (&self.expected, actual) {
            (Expected::Equals(want), got) => *want == got,
            (Expected::Prefix(pre), PropValue::Str(got)) => got.starts_with(pre.as_str()),
            (Expected::Prefix(_), _) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaitOracle {
    pub predicates: Vec<Predicate>,
    pub poll_ms: u64,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    /// 1 to 5.
    pub max_props: usize,
    pub poll_ms: u64,
    pub timeout_ms: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_props: DEFAULT_MAX_PROPS,
            poll_ms: DEFAULT_POLL_MS,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

impl OracleConfig {
    fn oracle(&self, props: &[PropertyRef]) -> WaitOracle {
        WaitOracle {
            predicates: props.iter().map(Predicate::from_property).collect(),
            poll_ms: self.poll_ms,
            timeout_ms: self.timeout_ms,
        }
    }
}

/// Conjunction over the latest-written properties of the end state.
pub fn generate_oracle(end: &DomState, config: &OracleConfig) -> Result<WaitOracle, FsmError> {
    let props = select_properties(end, config.max_props)?;
    Ok(config.oracle(&props))
}

/// [`generate_oracle`] on the FSM's end state, re-anchored when the latest
/// write did not change the value it compares.
///
/// If the raw selection already holds in the state just before its latest
/// write, that write was value-preserving and the oracle cannot tell the
/// two states apart. The selection then starts from the latest property
/// whose final write did change its observable value, followed by the next
/// older properties. Without such a property the raw selection is kept.
pub fn synthesize_oracle(fsm: &MutationFSM, config: &OracleConfig) -> Result<WaitOracle, FsmError> {
    let end = fsm.end_state();
    let ranked = ranked_properties(end);
    if ranked.is_empty() {
        return Err(FsmError::NoMutatedProperty);
    }
    let k = config.max_props.max(1);
    let raw = &ranked[..k.min(ranked.len())];
    let raw_oracle = config.oracle(raw);
    let t_star = raw[0].last_mut_idx;
    if !eval_oracle(&raw_oracle, fsm.state(t_star - 1)) {
        return Ok(raw_oracle);
    }
    let distinguishing = ranked
        .iter()
        .position(|p| !Predicate::from_property(p).holds(fsm.state(p.last_mut_idx - 1)));
    match distinguishing {
        Some(start) => {
            let end_idx = (start + k).min(ranked.len());
            Ok(config.oracle(&ranked[start..end_idx]))
        }
        None => Ok(raw_oracle),
    }
}

/// True iff every predicate's element exists in `state` with the expected
/// value. Mutation indices play no part.
pub fn eval_oracle(oracle: &WaitOracle, state: &DomState) -> bool {
    oracle.predicates.iter().all(|p| p.holds(state))
}
