//! From a recorded log to explicit waits in a test file.

use std::collections::BTreeMap;
use std::fmt;

use super::rewrite::{insert_waits, FixPlan, WaitInsertion};
use super::sites::{find_commands_in, CommandSite, Unsupported};
use super::TransformError;
use crate::analyzer::{classify_flaky_prone, prune_log, BackgroundConfig};
use crate::fsm::{build_fsm, synthesize_oracle, DomState, FsmError, OracleConfig, WaitOracle};
use crate::render::{render_oracle_for, Dialect, RenderTarget, Snippet};
use crate::trace::MutationLog;

#[derive(Debug, Clone, Default)]
pub struct FixOptions {
    pub oracle: OracleConfig,
    pub background: BackgroundConfig,
    pub baseline: Option<MutationLog>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixEntry {
    pub site: CommandSite,
    pub cmd_id: u32,
    pub oracle: WaitOracle,
    pub snippet: Snippet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    NotFlakyProne,
    /// The span's location names no command site in the file.
    NoMatchingSite,
    /// An earlier span already produced the wait for this site.
    SiteTaken {
        by_cmd: u32,
    },
    Oracle(FsmError),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::NotFlakyProne => f.write_str("not flaky-prone"),
            SkipReason::NoMatchingSite => f.write_str("no command site at the recorded location"),
            SkipReason::SiteTaken { by_cmd } => write!(f, "site already fixed from command {by_cmd}"),
            SkipReason::Oracle(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixOutcome {
    pub entries: Vec<FixEntry>,
    pub skipped: Vec<(u32, SkipReason)>,
    pub unsupported: Vec<Unsupported>,
}

impl FixOutcome {
    pub fn plan(&self, file: &str) -> FixPlan {
        let mut plan = FixPlan::waits(file);
        plan.insertions = self
            .entries
            .iter()
            .map(|e| WaitInsertion {
                after_site: e.site.clone(),
                cmd_id: e.cmd_id,
                snippet: e.snippet.clone(),
            })
            .collect();
        plan
    }
}

fn base_name(path: &str) -> &str {
    path.rsplit(['/', '\\']).next().unwrap_or(path)
}

/// Work out which sites in `source` get a wait, using the spans of `log`
/// recorded for this file. The first flaky-prone span per site wins.
pub fn plan_fixes(
    file: &str,
    source: &str,
    dialect: Dialect,
    log: &MutationLog,
    opts: &FixOptions,
) -> Result<FixOutcome, TransformError> {
    let scan = find_commands_in(file, source, dialect)?;
    let pruned = prune_log(log, opts.baseline.as_ref(), &opts.background);
    let name = base_name(file);

    let mut out = FixOutcome {
        entries: Vec::new(),
        skipped: Vec::new(),
        unsupported: scan.unsupported.clone(),
    };
    let mut taken: BTreeMap<usize, u32> = BTreeMap::new();
    for span in pruned.log.spans.iter().filter(|s| s.source_loc.file_name() == name) {
        let line = span.source_loc.line;
        let Some(site) = scan.sites.iter().find(|s| s.line <= line && line <= s.end_line) else {
            out.skipped.push((span.cmd_id, SkipReason::NoMatchingSite));
            continue;
        };
        if !classify_flaky_prone(span, &span.mutations) {
            out.skipped.push((span.cmd_id, SkipReason::NotFlakyProne));
            continue;
        }
        if let Some(&by_cmd) = taken.get(&site.start) {
            out.skipped.push((span.cmd_id, SkipReason::SiteTaken { by_cmd }));
            continue;
        }
        let oracle = match build_fsm(span, &span.mutations, DomState::initial())
            .and_then(|fsm| synthesize_oracle(&fsm, &opts.oracle))
        {
            Ok(o) => o,
            Err(e) => {
                out.skipped.push((span.cmd_id, SkipReason::Oracle(e)));
                continue;
            }
        };
        let target = RenderTarget {
            driver: scan.driver_for(site),
            awaited: site.awaited,
        };
        let text = render_oracle_for(&oracle, dialect, &target).expect("synthesized oracles are non-empty");
        taken.insert(site.start, span.cmd_id);
        out.entries.push(FixEntry {
            site: site.clone(),
            cmd_id: span.cmd_id,
            oracle,
            snippet: Snippet { dialect, text },
        });
    }
    out.entries.sort_by_key(|e| e.site.start);
    Ok(out)
}

/// [`plan_fixes`] followed by [`insert_waits`].
pub fn fix_source(
    file: &str,
    source: &str,
    dialect: Dialect,
    log: &MutationLog,
    opts: &FixOptions,
) -> Result<(String, FixOutcome), TransformError> {
    let outcome = plan_fixes(file, source, dialect, log, opts)?;
    let text = insert_waits(source, &outcome.plan(file))?;
    Ok((text, outcome))
}
