//! Mutation pruning, flaky-prone classification and suite statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::trace::{CommandSpan, MutationId, MutationKind, MutationLog, MutationRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyzeError {
    #[error("log has no commands")]
    EmptyLog,
    #[error("bucket width must be positive")]
    BadBucket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    OutsideBody,
    NoCssEffect,
    InvisibleTarget,
    Background,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PruneResult {
    pub kept: Vec<MutationRecord>,
    pub pruned: Vec<(MutationRecord, PruneReason)>,
}

/// Drop mutations that cannot change what the user sees. The first matching
/// rule wins: outside `<body>`, then no style effect, then invisible target.
pub fn prune_gui_irrelevant(mutations: &[MutationRecord]) -> PruneResult {
    let mut out = PruneResult::default();
    for m in mutations {
        let reason = if !m.in_body {
            Some(PruneReason::OutsideBody)
        } else if !m.css_effective {
            Some(PruneReason::NoCssEffect)
        } else if !m.visible {
            Some(PruneReason::InvisibleTarget)
        } else {
            None
        };
        match reason {
            Some(r) => out.pruned.push((m.clone(), r)),
            None => out.kept.push(m.clone()),
        }
    }
    out
}

/// Thresholds for the periodicity test on background mutations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundConfig {
    pub min_occurrences: usize,
    /// Inter-arrival coefficient of variation below which a signature is
    /// considered periodic.
    pub max_cv: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            min_occurrences: 3,
            max_cv: 0.2,
        }
    }
}

type Signature<'a> = (&'a str, MutationKind, Option<&'a str>);

fn signature(m: &MutationRecord) -> Signature<'_> {
    (m.target.xpath.as_str(), m.kind(), m.attr_name())
}

/// Population coefficient of variation of the gaps between sorted times.
/// `None` when there are fewer than two gaps or the mean gap is zero.
pub fn inter_arrival_cv(times: &[i64]) -> Option<f64> {
    let mut ts = times.to_vec();
    ts.sort_unstable();
    let gaps: Vec<f64> = ts.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    if gaps.len() < 2 {
        return None;
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    if mean <= 0.0 {
        return None;
    }
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
    Some(var.sqrt() / mean)
}

/// Identify mutations not caused by the test: signatures seen in a
/// command-free baseline recording, or signatures recurring at a regular
/// interval across the log.
pub fn detect_background(
    log: &MutationLog,
    baseline: Option<&MutationLog>,
    config: &BackgroundConfig,
) -> BTreeSet<MutationId> {
    let base_sigs: BTreeSet<Signature<'_>> = baseline
        .map(|b| b.mutations().map(signature).collect())
        .unwrap_or_default();

    let mut groups: BTreeMap<Signature<'_>, Vec<&MutationRecord>> = BTreeMap::new();
    for m in log.mutations() {
        groups.entry(signature(m)).or_default().push(m);
    }

    let mut flagged = BTreeSet::new();
    for (sig, ms) in groups {
        let periodic = ms.len() >= config.min_occurrences.max(2) && {
            let times: Vec<i64> = ms.iter().map(|m| m.t_ms).collect();
            inter_arrival_cv(&times).is_some_and(|cv| cv < config.max_cv)
        };
        if periodic || base_sigs.contains(&sig) {
            flagged.extend(ms.iter().map(|m| m.id()));
        }
    }
    flagged
}

/// A command is flaky-prone when at least one of its kept mutations happens
/// strictly after its promise settled.
pub fn classify_flaky_prone(span: &CommandSpan, kept: &[MutationRecord]) -> bool {
    kept.iter().any(|m| m.t_ms > span.settle_ms)
}

/// A log after pruning, with the per-span pruning decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedLog {
    /// Same spans as the input, holding only kept mutations.
    pub log: MutationLog,
    /// Per span, in span order.
    pub results: Vec<PruneResult>,
}

/// Apply GUI-irrelevance pruning and background removal to a whole log.
pub fn prune_log(log: &MutationLog, baseline: Option<&MutationLog>, config: &BackgroundConfig) -> PrunedLog {
    let background = detect_background(log, baseline, config);
    let mut out = log.clone();
    let mut results = Vec::with_capacity(log.spans.len());
    for span in &mut out.spans {
        let mut res = prune_gui_irrelevant(&span.mutations);
        let (bg, kept): (Vec<_>, Vec<_>) = res.kept.into_iter().partition(|m| background.contains(&m.id()));
        res.kept = kept;
        res.pruned.extend(bg.into_iter().map(|m| (m, PruneReason::Background)));
        res.pruned.sort_by_key(|(m, _)| m.seq);
        span.mutations = res.kept.clone();
        results.push(res);
    }
    PrunedLog { log: out, results }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandStats {
    pub cmd_id: u32,
    pub name: String,
    pub loc: String,
    pub latest_rt_ms: Option<i64>,
    pub flaky_prone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteStats {
    pub suite: String,
    /// Mean RT over all kept mutations; `None` when there are none.
    pub avg_rt_ms: Option<f64>,
    /// Mean over commands with kept mutations of their latest RT.
    pub avg_latest_rt_ms: Option<f64>,
    pub pct_flaky_prone: f64,
    pub commands: usize,
    pub mutations: usize,
    pub per_command: Vec<CommandStats>,
}

/// Relative time of every mutation in span order: against the next
/// command's start, or the span's own settle time for the last command.
pub fn relative_times(log: &MutationLog) -> Vec<Vec<i64>> {
    log.spans
        .iter()
        .enumerate()
        .map(|(i, span)| {
            let reference = log.spans.get(i + 1).map_or(span.settle_ms, |next| next.start_ms);
            span.mutations.iter().map(|m| m.t_ms - reference).collect()
        })
        .collect()
}

/// Statistics over an already-pruned log.
pub fn compute_stats(log: &MutationLog) -> Result<SuiteStats, AnalyzeError> {
    if log.spans.is_empty() {
        return Err(AnalyzeError::EmptyLog);
    }
    let rts = relative_times(log);
    let all: Vec<i64> = rts.iter().flatten().copied().collect();
    let mut per_command = Vec::with_capacity(log.spans.len());
    let mut latest = Vec::new();
    let mut flaky = 0usize;
    for (span, span_rts) in log.spans.iter().zip(&rts) {
        let latest_rt = span_rts.iter().copied().max();
        let prone = classify_flaky_prone(span, &span.mutations);
        if let Some(l) = latest_rt {
            latest.push(l);
        }
        flaky += usize::from(prone);
        per_command.push(CommandStats {
            cmd_id: span.cmd_id,
            name: span.name.clone(),
            loc: span.source_loc.to_string(),
            latest_rt_ms: latest_rt,
            flaky_prone: prone,
        });
    }
    Ok(SuiteStats {
        suite: log.suite_name.clone(),
        avg_rt_ms: mean(&all),
        avg_latest_rt_ms: mean(&latest),
        pct_flaky_prone: flaky as f64 / log.spans.len() as f64,
        commands: log.spans.len(),
        mutations: all.len(),
        per_command,
    })
}

fn mean(xs: &[i64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len() as f64)
}

/// Cumulative distribution of mutation RT as `(upper_bound_ms, fraction)`
/// steps. Buckets are `(ub - bucket_ms, ub]` with `ub` a multiple of
/// `bucket_ms`, contiguous from the lowest to the highest occupied bucket.
pub fn rt_cdf(log: &MutationLog, bucket_ms: i64) -> Result<Vec<(i64, f64)>, AnalyzeError> {
    if bucket_ms <= 0 {
        return Err(AnalyzeError::BadBucket);
    }
    let rts: Vec<i64> = relative_times(log).into_iter().flatten().collect();
    cdf_of(&rts, bucket_ms)
}

pub fn cdf_of(rts: &[i64], bucket_ms: i64) -> Result<Vec<(i64, f64)>, AnalyzeError> {
    if bucket_ms <= 0 {
        return Err(AnalyzeError::BadBucket);
    }
    if rts.is_empty() {
        return Err(AnalyzeError::EmptyLog);
    }
    let upper = |rt: i64| -> i64 {
        rt.div_euclid(bucket_ms) * bucket_ms + if rt.rem_euclid(bucket_ms) == 0 { 0 } else { bucket_ms }
    };
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &rt in rts {
        *counts.entry(upper(rt)).or_default() += 1;
    }
    let lo = *counts.keys().next().expect("non-empty");
    let hi = *counts.keys().next_back().expect("non-empty");
    let n = rts.len() as f64;
    let mut acc = 0usize;
    let mut out = Vec::new();
    let mut ub = lo;
    while ub <= hi {
        acc += counts.get(&ub).copied().unwrap_or(0);
        let frac = if ub == hi { 1.0 } else { acc as f64 / n };
        out.push((ub, frac));
        ub += bucket_ms;
    }
    Ok(out)
}

/// Fraction of values at or below `bound_ms`.
pub fn fraction_at_most(rts: &[i64], bound_ms: i64) -> f64 {
    if rts.is_empty() {
        return 0.0;
    }
    rts.iter().filter(|&&r| r <= bound_ms).count() as f64 / rts.len() as f64
}
