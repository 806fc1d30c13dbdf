//! Hook insertion, wait insertion and sentinel stripping.

use std::fmt;

use super::runtime::{runtime_file_name, ModuleKind};
use super::sites::{find_commands_in, CommandScan, CommandSite, Unsupported};
use super::TransformError;
use crate::render::{js_string, Dialect, Snippet};

pub const SENTINEL_BEGIN_PREFIX: &str = "/* wefix:begin ";
pub const SENTINEL_END: &str = "/* wefix:end */";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SentinelKind {
    HookPre,
    HookPost,
    Wait,
}

impl SentinelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SentinelKind::HookPre => "hook-pre",
            SentinelKind::HookPost => "hook-post",
            SentinelKind::Wait => "wait",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "hook-pre" => Some(SentinelKind::HookPre),
            "hook-post" => Some(SentinelKind::HookPost),
            "wait" => Some(SentinelKind::Wait),
            _ => None,
        }
    }
}

impl fmt::Display for SentinelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn begin_marker(kind: SentinelKind, id: u32) -> String {
    format!("{SENTINEL_BEGIN_PREFIX}{kind} {id} */")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    RecordingHooks,
    ExplicitWaits,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaitInsertion {
    pub after_site: CommandSite,
    /// Command id of the recorded span the oracle came from; goes into
    /// the sentinel.
    pub cmd_id: u32,
    pub snippet: Snippet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixPlan {
    pub file: String,
    pub insertions: Vec<WaitInsertion>,
    pub mode: PlanMode,
}

impl FixPlan {
    pub fn waits(file: impl Into<String>) -> Self {
        FixPlan {
            file: file.into(),
            insertions: Vec::new(),
            mode: PlanMode::ExplicitWaits,
        }
    }
}

/// Pending insertion; ties at the same offset keep creation order.
struct Insert {
    at: usize,
    text: String,
}

fn splice(source: &str, mut inserts: Vec<Insert>) -> String {
    inserts.sort_by_key(|i| i.at);
    let extra: usize = inserts.iter().map(|i| i.text.len()).sum();
    let mut out = String::with_capacity(source.len() + extra);
    let mut pos = 0;
    for ins in inserts {
        out.push_str(&source[pos..ins.at]);
        out.push_str(&ins.text);
        pos = ins.at;
    }
    out.push_str(&source[pos..]);
    out
}

fn line_start(src: &str, pos: usize) -> usize {
    src[..pos].rfind('\n').map_or(0, |i| i + 1)
}

/// Leading whitespace of the line holding `pos`.
fn indent_at(src: &str, pos: usize) -> &str {
    let ls = line_start(src, pos);
    let rest = &src[ls..];
    let n = rest.len() - rest.trim_start_matches([' ', '\t']).len();
    &rest[..n]
}

fn newline_style(src: &str) -> &'static str {
    if src.contains("\r\n") {
        "\r\n"
    } else {
        "\n"
    }
}

/// Insert `body` as its own line(s) before the line holding `site.start`
/// when the statement starts its line, inline otherwise.
fn before_site(src: &str, site: &CommandSite, marker: &str, stmt: &str) -> Insert {
    let ls = line_start(src, site.start);
    if src[ls..site.start].trim().is_empty() {
        let indent = &src[ls..site.start];
        Insert {
            at: ls,
            text: format!("{indent}{marker} {stmt} {SENTINEL_END}{}", newline_style(src)),
        }
    } else {
        Insert {
            at: site.start,
            text: format!("{marker} {stmt} {SENTINEL_END}"),
        }
    }
}

/// Offset just past the newline ending the site's last line, when nothing
/// but whitespace follows the statement on that line.
fn own_line_end(src: &str, site: &CommandSite) -> Option<usize> {
    let nl = src[site.end..].find('\n')? + site.end;
    src[site.end..nl].trim().is_empty().then_some(nl + 1)
}

fn hook_lines(site: &CommandSite, scan: &CommandScan, file: &str, id: u32) -> (String, String) {
    let loc = js_string(&format!("{file}:{}", site.line));
    let name = js_string(&site.name);
    match site.dialect {
        Dialect::Cypress => (
            format!("__wefix.pre({id});"),
            format!("__wefix.post({id}, {loc}, {name});"),
        ),
        Dialect::SeleniumWebdriver => {
            let aw = if site.awaited { "await " } else { "" };
            let d = scan.driver_for(site);
            (
                format!("{aw}__wefix.pre({d}, {id});"),
                format!("{aw}__wefix.post({d}, {id}, {loc}, {name});"),
            )
        }
    }
}

/// Offset where the helper import goes: after a shebang line and any
/// leading directive prologue.
fn import_offset(src: &str) -> usize {
    let mut pos = 0;
    if src.starts_with("#!") {
        pos = src.find('\n').map_or(src.len(), |i| i + 1);
    }
    loop {
        let rest = &src[pos..];
        let trimmed = rest.trim_start();
        let lead = rest.len() - trimmed.len();
        let is_directive = ["'use strict'", "\"use strict\""]
            .iter()
            .any(|d| trimmed.starts_with(d));
        if !is_directive {
            return pos;
        }
        match src[pos + lead..].find('\n') {
            Some(i) => pos = pos + lead + i + 1,
            None => return pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instrumented {
    pub text: String,
    /// Sites that received hooks, in order; hook ids are 1-based indices
    /// into this list.
    pub sites: Vec<CommandSite>,
    /// Sites left alone because they sit in setup/teardown hooks.
    pub skipped: Vec<CommandSite>,
    pub unsupported: Vec<Unsupported>,
    pub module_kind: ModuleKind,
}

/// Wrap every test-body command with recording hooks and add the helper
/// import. `file` is the label written into hook locations; it should be
/// the path the log will be matched against.
pub fn instrument_recording(source: &str, dialect: Dialect, file: &str) -> Result<Instrumented, TransformError> {
    if source.contains(SENTINEL_BEGIN_PREFIX) || source.contains(SENTINEL_END) {
        return Err(TransformError::AlreadyInstrumented);
    }
    let scan = find_commands_in(file, source, dialect)?;
    let module_kind = if scan.is_module {
        ModuleKind::Esm
    } else {
        ModuleKind::CommonJs
    };
    let nl = newline_style(source);
    let helper = format!("./{}", runtime_file_name(module_kind));
    let import = match module_kind {
        ModuleKind::CommonJs => format!("const __wefix = require({});", js_string(&helper)),
        ModuleKind::Esm => format!("import * as __wefix from {};", js_string(&helper)),
    };
    let mut inserts = vec![Insert {
        at: import_offset(source),
        text: format!("{} {import} {SENTINEL_END}{nl}", begin_marker(SentinelKind::HookPre, 0)),
    }];

    let label = file.rsplit(['/', '\\']).next().unwrap_or(file);
    let mut sites = Vec::new();
    for site in scan.instrumentable() {
        let id = sites.len() as u32 + 1;
        let (pre, post) = hook_lines(site, &scan, label, id);
        inserts.push(before_site(
            source,
            site,
            &begin_marker(SentinelKind::HookPre, id),
            &pre,
        ));
        let post_marker = begin_marker(SentinelKind::HookPost, id);
        inserts.push(match own_line_end(source, site) {
            Some(at) => Insert {
                at,
                text: format!(
                    "{}{post_marker} {post} {SENTINEL_END}{nl}",
                    indent_at(source, site.start)
                ),
            },
            None => {
                // keep the statement terminated when it relied on a line break
                let semi = if source[..site.end].ends_with(';') { "" } else { ";" };
                Insert {
                    at: site.end,
                    text: format!("{post_marker}{semi} {post} {SENTINEL_END}"),
                }
            }
        });
        sites.push(site.clone());
    }
    let skipped = scan.sites.iter().filter(|s| !sites.contains(s)).cloned().collect();
    Ok(Instrumented {
        text: splice(source, inserts),
        sites,
        skipped,
        unsupported: scan.unsupported,
        module_kind,
    })
}

fn wait_block(src: &str, ins: &WaitInsertion) -> Insert {
    let site = &ins.after_site;
    let nl = newline_style(src);
    let indent = indent_at(src, site.start);
    let marker = begin_marker(SentinelKind::Wait, ins.cmd_id);
    let body: Vec<String> = ins
        .snippet
        .text
        .lines()
        .map(|l| {
            if l.is_empty() {
                String::new()
            } else {
                format!("{indent}{l}")
            }
        })
        .collect();
    match own_line_end(src, site) {
        Some(at) => Insert {
            at,
            text: format!("{indent}{marker}{nl}{}{nl}{indent}{SENTINEL_END}{nl}", body.join(nl)),
        },
        None => {
            let semi = if src[..site.end].ends_with(';') { "" } else { ";" };
            Insert {
                at: site.end,
                text: format!("{marker}{semi} {} {SENTINEL_END}", body.join(nl).trim_start()),
            }
        }
    }
}

/// Insert rendered waits after their sites.
pub fn insert_waits(source: &str, plan: &FixPlan) -> Result<String, TransformError> {
    if plan.mode != PlanMode::ExplicitWaits {
        return Err(TransformError::WrongPlanMode(plan.mode));
    }
    if plan.insertions.is_empty() {
        return Ok(source.to_string());
    }
    let dialect = plan.insertions[0].after_site.dialect;
    let scan = find_commands_in(&plan.file, source, dialect)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut inserts = Vec::new();
    for ins in &plan.insertions {
        let site = &ins.after_site;
        if ins.snippet.dialect != site.dialect {
            return Err(TransformError::DialectMismatch { line: site.line });
        }
        let current = scan
            .sites
            .iter()
            .any(|s| s.start == site.start && s.end == site.end && s.name == site.name);
        if !current {
            return Err(TransformError::StaleSites { line: site.line });
        }
        let following = source[site.end..].trim_start();
        if !seen.insert(site.start) || following.starts_with(&format!("{SENTINEL_BEGIN_PREFIX}wait ")) {
            return Err(TransformError::DuplicateWait { line: site.line });
        }
        inserts.push(wait_block(source, ins));
    }
    Ok(splice(source, inserts))
}

fn line_of(src: &str, pos: usize) -> u32 {
    src[..pos].matches('\n').count() as u32 + 1
}

/// Remove every sentinel-delimited region. Regions that occupy whole
/// lines take their line break with them.
pub fn strip_hooks(source: &str) -> Result<String, TransformError> {
    let mut out = String::with_capacity(source.len());
    let mut pos = 0;
    loop {
        let next_begin = source[pos..].find(SENTINEL_BEGIN_PREFIX).map(|i| i + pos);
        let next_end = source[pos..].find(SENTINEL_END).map(|i| i + pos);
        let b = match (next_begin, next_end) {
            (None, None) => break,
            (None, Some(e)) => {
                return Err(TransformError::UnbalancedSentinels {
                    line: line_of(source, e),
                })
            }
            (Some(b), Some(e)) if e < b => {
                return Err(TransformError::UnbalancedSentinels {
                    line: line_of(source, e),
                })
            }
            (Some(b), _) => b,
        };
        let bad = || TransformError::UnbalancedSentinels {
            line: line_of(source, b),
        };
        let header_end = source[b..].find("*/").ok_or_else(bad)? + b + 2;
        let header = &source[b + SENTINEL_BEGIN_PREFIX.len()..header_end - 2];
        let mut parts = header.split_whitespace();
        let valid = parts.next().and_then(SentinelKind::parse).is_some()
            && parts.next().is_some_and(|id| id.parse::<u32>().is_ok())
            && parts.next().is_none();
        if !valid {
            return Err(bad());
        }
        let e = source[header_end..].find(SENTINEL_END).ok_or_else(bad)? + header_end;
        if source[header_end..e].contains(SENTINEL_BEGIN_PREFIX) {
            return Err(bad());
        }
        let mut from = b;
        let mut to = e + SENTINEL_END.len();
        let ls = line_start(source, b);
        let whole_line = source[ls..b].chars().all(|c| c == ' ' || c == '\t')
            && ls >= pos
            && (source[to..].starts_with('\n') || source[to..].starts_with("\r\n"));
        if whole_line {
            from = ls;
            to += if source[to..].starts_with("\r\n") { 2 } else { 1 };
        }
        out.push_str(&source[pos..from]);
        pos = to;
    }
    out.push_str(&source[pos..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::find_commands;

    const LISTING: &str = "it('searches age', async function () {\n  let driver = await new Builder().forBrowser('chrome').build();\n  await driver.get('http://localhost:5000');\n  await driver.findElement(By.id('name'))\n    .sendKeys('Bob', Key.ENTER);\n  assert.equal(await driver.findElement(By.id('age')).getText(), '23');\n});\n";

    #[test]
    fn listing_hooks() {
        let out = instrument_recording(LISTING, Dialect::SeleniumWebdriver, "age.test.js").unwrap();
        assert_eq!(out.sites.len(), 2);
        assert_eq!(out.text.matches(SENTINEL_END).count(), 5);
        assert!(out.text.starts_with(
            "/* wefix:begin hook-pre 0 */ const __wefix = require(\"./wefix-runtime.cjs\"); /* wefix:end */\n"
        ));
        assert!(out.text.contains(
            "  /* wefix:begin hook-post 2 */ await __wefix.post(driver, 2, \"age.test.js:4\", \"sendKeys\"); /* wefix:end */\n  assert.equal"
        ));
        assert_eq!(strip_hooks(&out.text).unwrap(), LISTING);
        let again = find_commands(&out.text, Dialect::SeleniumWebdriver).unwrap();
        let names: Vec<_> = again.sites.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["get", "sendKeys"]);
    }

    #[test]
    fn refuses_instrumented_input() {
        let out = instrument_recording(LISTING, Dialect::SeleniumWebdriver, "a.js").unwrap();
        assert_eq!(
            instrument_recording(&out.text, Dialect::SeleniumWebdriver, "a.js").unwrap_err(),
            TransformError::AlreadyInstrumented
        );
    }

    #[test]
    fn empty_body_gets_import_only() {
        let src = "it('nothing', () => {\n});\n";
        let out = instrument_recording(src, Dialect::Cypress, "n.cy.js").unwrap();
        assert_eq!(out.text.matches(SENTINEL_BEGIN_PREFIX).count(), 1);
        assert_eq!(strip_hooks(&out.text).unwrap(), src);
    }

    #[test]
    fn inline_forms_round_trip() {
        let src = "it('t', () => { cy.visit('/'); cy.get('a').click() }) // tail";
        let out = instrument_recording(src, Dialect::Cypress, "t.cy.js").unwrap();
        assert!(out
            .text
            .contains("cy.get('a').click()/* wefix:begin hook-post 2 */; __wefix.post(2"));
        assert_eq!(strip_hooks(&out.text).unwrap(), src);
    }

    #[test]
    fn directives_stay_first() {
        let src = "#!/usr/bin/env node\n'use strict';\nit('t', () => {\n  cy.visit('/')\n});\n";
        let out = instrument_recording(src, Dialect::Cypress, "t.js").unwrap();
        assert!(out
            .text
            .starts_with("#!/usr/bin/env node\n'use strict';\n/* wefix:begin hook-pre 0 */"));
        assert_eq!(strip_hooks(&out.text).unwrap(), src);
    }

    #[test]
    fn esm_files_import() {
        let src =
            "import { Builder } from 'selenium-webdriver';\ntest('t', async () => {\n  await driver.get('/');\n});\n";
        let out = instrument_recording(src, Dialect::SeleniumWebdriver, "t.mjs").unwrap();
        assert_eq!(out.module_kind, ModuleKind::Esm);
        assert!(out.text.contains("import * as __wefix from \"./wefix-runtime.mjs\";"));
    }

    #[test]
    fn crlf_sources() {
        let src = "it('t', () => {\r\n  cy.visit('/');\r\n});\r\n";
        let out = instrument_recording(src, Dialect::Cypress, "t.js").unwrap();
        assert!(!out.text.replace("\r\n", "").contains('\n'));
        assert_eq!(strip_hooks(&out.text).unwrap(), src);
    }

    #[test]
    fn strip_errors() {
        assert_eq!(strip_hooks("a();\n").unwrap(), "a();\n");
        assert_eq!(
            strip_hooks("a();\n/* wefix:begin wait 1 */\nb();\n").unwrap_err(),
            TransformError::UnbalancedSentinels { line: 2 }
        );
        assert!(strip_hooks("/* wefix:end */").is_err());
        assert!(strip_hooks("/* wefix:begin bogus 1 */ x /* wefix:end */").is_err());
        assert!(strip_hooks("/* wefix:begin wait 1 */ /* wefix:begin wait 2 */ /* wefix:end */").is_err());
    }

    fn age_site(src: &str) -> CommandSite {
        find_commands_in("age.test.js", src, Dialect::SeleniumWebdriver)
            .unwrap()
            .sites[1]
            .clone()
    }

    #[test]
    fn waits_follow_site_indentation() {
        let plan = FixPlan {
            file: "age.test.js".into(),
            insertions: vec![WaitInsertion {
                after_site: age_site(LISTING),
                cmd_id: 2,
                snippet: Snippet {
                    dialect: Dialect::SeleniumWebdriver,
                    text: "await driver.wait(async () => {\n  return true;\n}, 4000);".into(),
                },
            }],
            mode: PlanMode::ExplicitWaits,
        };
        let out = insert_waits(LISTING, &plan).unwrap();
        assert!(out.contains(
            "Key.ENTER);\n  /* wefix:begin wait 2 */\n  await driver.wait(async () => {\n    return true;\n  }, 4000);\n  /* wefix:end */\n  assert"
        ));
        assert_eq!(strip_hooks(&out).unwrap(), LISTING);
        assert_eq!(
            insert_waits(&out, &plan).unwrap_err(),
            TransformError::DuplicateWait { line: 4 }
        );
        let shifted = format!("\n{LISTING}");
        assert_eq!(
            insert_waits(&shifted, &plan).unwrap_err(),
            TransformError::StaleSites { line: 4 }
        );
    }

    #[test]
    fn wait_plan_checks() {
        assert_eq!(insert_waits(LISTING, &FixPlan::waits("a.js")).unwrap(), LISTING);
        let mut ins = WaitInsertion {
            after_site: age_site(LISTING),
            cmd_id: 1,
            snippet: Snippet {
                dialect: Dialect::Cypress,
                text: "x();".into(),
            },
        };
        let mut plan = FixPlan::waits("a.js");
        plan.insertions.push(ins.clone());
        assert_eq!(
            insert_waits(LISTING, &plan).unwrap_err(),
            TransformError::DialectMismatch { line: 4 }
        );
        ins.snippet.dialect = Dialect::SeleniumWebdriver;
        plan.insertions = vec![ins.clone(), ins];
        assert_eq!(
            insert_waits(LISTING, &plan).unwrap_err(),
            TransformError::DuplicateWait { line: 4 }
        );
        plan.mode = PlanMode::RecordingHooks;
        assert!(matches!(
            insert_waits(LISTING, &plan),
            Err(TransformError::WrongPlanMode(_))
        ));
    }
}
