//! Random small state-machine instances checked against independent
//! bookkeeping.

use std::collections::BTreeMap;

use rand::Rng;
use wefix_core::fsm::{
    build_fsm, eval_oracle, generate_oracle, ranked_properties, synthesize_oracle, DomState, OracleConfig, PropValue,
    PropertyKind,
};
use wefix_core::trace::{
    AttrChange, Change, ChildChange, CommandSpan, ElementLocator, MutationRecord, SourceLoc, TextChange,
};

#[derive(Debug, Clone)]
pub enum Op {
    Attr(usize, usize, Option<usize>),
    Text(usize, usize),
    Child(usize, u32),
}

const ATTRS: [&str; 2] = ["class", "hidden"];
const VALS: [&str; 3] = ["a", "b", "c"];

fn loc(e: usize) -> ElementLocator {
    ElementLocator::new(format!("/html/body/section[{}]", e + 1))
}

pub fn record(i: usize, op: &Op) -> MutationRecord {
    let (e, change) = match *op {
        Op::Attr(e, a, v) => (
            e,
            Change::Attribute(AttrChange {
                name: ATTRS[a].into(),
                old: None,
                new: v.map(|v| VALS[v].to_string()),
            }),
        ),
        Op::Text(e, v) => (
            e,
            Change::Text(TextChange {
                old: String::new(),
                new: VALS[v].into(),
            }),
        ),
        Op::Child(e, n) => (
            e,
            Change::ChildList(ChildChange {
                added: n,
                removed: 0,
                resulting_count: n,
            }),
        ),
    };
    MutationRecord::new(1, i as u32 + 1, 200 + 10 * i as i64, loc(e), change)
}

type Key = (usize, PropertyKind);

/// Independent bookkeeping: per property, value and index of last write
/// after the first `t` ops; element presence is "touched by some op".
fn naive_state(ops: &[Op], t: usize) -> (BTreeMap<Key, (PropValue, usize)>, Vec<bool>) {
    let mut props = BTreeMap::new();
    let mut present = vec![false; 10];
    for (i, op) in ops[..t].iter().enumerate() {
        let (key, v) = match *op {
            Op::Attr(e, a, v) => (
                (e, PropertyKind::Attr(ATTRS[a].into())),
                v.map_or(PropValue::Absent, |v| PropValue::Str(VALS[v].into())),
            ),
            Op::Text(e, v) => ((e, PropertyKind::Text), PropValue::Str(VALS[v].into())),
            Op::Child(e, n) => ((e, PropertyKind::ChildLen), PropValue::Count(n)),
        };
        present[key.0] = true;
        props.insert(key, (v, i + 1));
    }
    (props, present)
}

fn naive_value(ops: &[Op], t: usize, key: &Key) -> Option<PropValue> {
    let (props, present) = naive_state(ops, t);
    if !present[key.0] {
        return None;
    }
    Some(match props.get(key) {
        Some((v, _)) => v.clone(),
        None => match key.1 {
            PropertyKind::Attr(_) => PropValue::Absent,
            PropertyKind::Text => PropValue::Str(String::new()),
            PropertyKind::ChildLen => PropValue::Count(0),
        },
    })
}

fn elem_index(l: &ElementLocator) -> usize {
    let n: usize = l
        .xpath
        .trim_start_matches("/html/body/section[")
        .trim_end_matches(']')
        .parse()
        .unwrap();
    n - 1
}

pub fn random_ops<R: Rng>(rng: &mut R) -> Vec<Op> {
    let n = rng.gen_range(1..=20);
    (0..n)
        .map(|_| match rng.gen_range(0..3) {
            0 => Op::Attr(
                rng.gen_range(0..10),
                rng.gen_range(0..2),
                rng.gen_bool(0.75).then(|| rng.gen_range(0..3)),
            ),
            1 => Op::Text(rng.gen_range(0..10), rng.gen_range(0..3)),
            _ => Op::Child(rng.gen_range(0..10), rng.gen_range(0..3)),
        })
        .collect()
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Superscripts, end-state truth and pre-final falsity (with the revert
/// rule) for one instance.
pub fn check_instance(ops: &[Op], max_props: usize) -> Result<(), String> {
    let mut span = CommandSpan::new(
        1,
        "click",
        SourceLoc {
            file: "a.js".into(),
            line: 1,
        },
        0,
        100,
    );
    span.mutations = ops.iter().enumerate().map(|(i, o)| record(i, o)).collect();
    let fsm = build_fsm(&span, &span.mutations, DomState::initial()).map_err(|e| e.to_string())?;
    ensure!(fsm.states.len() == ops.len() + 1, "state count");

    for t in 0..=ops.len() {
        let (want, _) = naive_state(ops, t);
        let got: BTreeMap<Key, (PropValue, usize)> = fsm.states[t]
            .mutated_properties()
            .into_iter()
            .map(|p| ((elem_index(&p.element), p.kind), (p.value, p.last_mut_idx)))
            .collect();
        ensure!(got == want, "superscripts differ at S_{t}: {got:?} vs {want:?}");
    }

    let cfg = OracleConfig {
        max_props,
        ..OracleConfig::default()
    };
    let end = fsm.end_state();
    let raw = generate_oracle(end, &cfg).map_err(|e| e.to_string())?;
    ensure!(eval_oracle(&raw, end), "raw oracle false on the end state");
    ensure!(
        raw.predicates.len() == max_props.min(ranked_properties(end).len()),
        "raw oracle size"
    );

    let oracle = synthesize_oracle(&fsm, &cfg).map_err(|e| e.to_string())?;
    ensure!(eval_oracle(&oracle, end), "oracle false on the end state");
    ensure!(oracle.predicates.len() <= max_props, "oracle too large");

    let (end_props, _) = naive_state(ops, ops.len());
    let t_star = oracle
        .predicates
        .iter()
        .map(|p| end_props[&(elem_index(&p.element), p.kind.clone())].1)
        .max()
        .unwrap();
    // some property whose last write changed what an oracle can observe
    let distinguishable = end_props
        .iter()
        .any(|(k, (v, idx))| naive_value(ops, idx - 1, k).as_ref() != Some(v));
    if distinguishable {
        ensure!(
            !eval_oracle(&oracle, fsm.state(t_star - 1)),
            "oracle already true at S_{}",
            t_star - 1
        );
    } else {
        ensure!(oracle == raw, "fallback must keep the raw selection");
    }
    Ok(())
}
