//! Mutation trace data model and the line-delimited `mutation.log` format.
//!
//! Every line of a log is a flat JSON object whose `type` field names the
//! record kind (`meta`, `cmd_start`, `cmd_settle`, `mutation`,
//! `window_close`). Field order is irrelevant on input and fixed on output,
//! so serialization is byte-stable.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Current on-disk format version.
pub const FORMAT_VERSION: u32 = 1;

/// Attribute and text values longer than this many characters are truncated
/// at capture time and carry the `truncated` flag.
pub const MAX_VALUE_CHARS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line_no}: malformed record: {reason}")]
    MalformedRecord { line_no: usize, reason: String },
    #[error("mutation seq {seq} references unknown command {cmd_id}")]
    OrphanMutation { cmd_id: u32, seq: u32 },
    #[error("command {cmd_id}: mutation seq {seq} goes back in time")]
    NonMonotonicTime { cmd_id: u32, seq: u32 },
    #[error("command {cmd_id}: {reason}")]
    InvalidSpan { cmd_id: u32, reason: String },
    #[error("log has no meta header")]
    MissingHeader,
}

/// How a mutated element is addressed in the page.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementLocator {
    pub xpath: String,
    pub dom_id: Option<String>,
}

impl ElementLocator {
    pub fn new(xpath: impl Into<String>) -> Self {
        ElementLocator {
            xpath: xpath.into(),
            dom_id: None,
        }
    }

    pub fn with_id(id: impl Into<String>) -> Self {
        let id = id.into();
        ElementLocator {
            xpath: id_rooted_xpath(&id),
            dom_id: Some(id),
        }
    }

    /// XPath a driver can use to fetch the element. Elements with an id are
    /// addressed by an id-rooted path; otherwise the recorded path is used
    /// as-is (the recorder already roots it at the nearest ancestor id).
    pub fn to_xpath(&self) -> String {
        match &self.dom_id {
            Some(id) => id_rooted_xpath(id),
            None => self.xpath.clone(),
        }
    }
}

impl fmt::Display for ElementLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_xpath())
    }
}

fn id_rooted_xpath(id: &str) -> String {
    format!("//*[@id={}]", xpath_literal(id))
}

/// Quote a string as an XPath 1.0 literal.
pub fn xpath_literal(s: &str) -> String {
    if !s.contains('"') {
        format!("\"{s}\"")
    } else if !s.contains('\'') {
        format!("'{s}'")
    } else {
        let parts: Vec<String> = s.split('"').map(|p| format!("\"{p}\"")).collect();
        format!("concat({})", parts.join(", '\"', "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MutationKind {
    #[serde(rename = "attributes")]
    Attributes,
    #[serde(rename = "childList")]
    ChildList,
    #[serde(rename = "characterData")]
    CharacterData,
}

impl MutationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MutationKind::Attributes => "attributes",
            MutationKind::ChildList => "childList",
            MutationKind::CharacterData => "characterData",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrChange {
    pub name: String,
    pub old: Option<String>,
    /// `None` when the attribute was removed.
    pub new: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextChange {
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChildChange {
    pub added: u32,
    pub removed: u32,
    pub resulting_count: u32,
}

/// The payload of a mutation. Exactly one per record, matching its kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    Attribute(AttrChange),
    Text(TextChange),
    ChildList(ChildChange),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationRecord {
    pub seq: u32,
    pub t_ms: i64,
    pub cmd_id: u32,
    pub target: ElementLocator,
    pub change: Change,
    pub in_body: bool,
    pub visible: bool,
    pub css_effective: bool,
    pub truncated: bool,
    /// Observed after the command's listen window closed.
    pub late: bool,
}

/// `(cmd_id, seq)` pair identifying a mutation within a log.
pub type MutationId = (u32, u32);

impl MutationRecord {
    pub fn kind(&self) -> MutationKind {
        match self.change {
            Change::Attribute(_) => MutationKind::Attributes,
            Change::Text(_) => MutationKind::CharacterData,
            Change::ChildList(_) => MutationKind::ChildList,
        }
    }

    pub fn id(&self) -> MutationId {
        (self.cmd_id, self.seq)
    }

    pub fn attr_name(&self) -> Option<&str> {
        match &self.change {
            Change::Attribute(a) => Some(&a.name),
            _ => None,
        }
    }

    /// Build a GUI-relevant record (in body, visible, style-affecting),
    /// truncating long values.
    pub fn new(cmd_id: u32, seq: u32, t_ms: i64, target: ElementLocator, change: Change) -> Self {
        let mut rec = MutationRecord {
            seq,
            t_ms,
            cmd_id,
            target,
            change,
            in_body: true,
            visible: true,
            css_effective: true,
            truncated: false,
            late: false,
        };
        rec.apply_truncation();
        rec
    }

    fn apply_truncation(&mut self) {
        let mut hit = false;
        let mut cut = |s: &mut String| {
            if let Some((idx, _)) = s.char_indices().nth(MAX_VALUE_CHARS) {
                s.truncate(idx);
                hit = true;
            }
        };
        match &mut self.change {
            Change::Attribute(a) => {
                if let Some(v) = a.old.as_mut() {
                    cut(v);
                }
                if let Some(v) = a.new.as_mut() {
                    cut(v);
                }
            }
            Change::Text(t) => {
                cut(&mut t.old);
                cut(&mut t.new);
            }
            Change::ChildList(_) => {}
        }
        if hit {
            self.truncated = true;
        }
    }
}

/// Returns true if `value` was produced by capture-time truncation.
pub fn is_truncated_value(value: &str, record_truncated: bool) -> bool {
    record_truncated && value.chars().count() >= MAX_VALUE_CHARS
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceLoc {
    pub file: String,
    pub line: u32,
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

impl SourceLoc {
    pub fn parse(s: &str) -> Option<SourceLoc> {
        let (file, line) = s.rsplit_once(':')?;
        Some(SourceLoc {
            file: file.to_string(),
            line: line.parse().ok()?,
        })
    }

    /// File name without directories, for matching logs against sources.
    pub fn file_name(&self) -> &str {
        self.file.rsplit(['/', '\\']).next().unwrap_or(&self.file)
    }
}

/// End of a command's listen window as recorded by the post-command hook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowClose {
    pub close_ms: i64,
    pub omega_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandSpan {
    pub cmd_id: u32,
    pub name: String,
    pub source_loc: SourceLoc,
    pub start_ms: i64,
    pub settle_ms: i64,
    pub window: Option<WindowClose>,
    pub mutations: Vec<MutationRecord>,
}

impl CommandSpan {
    pub fn new(cmd_id: u32, name: impl Into<String>, loc: SourceLoc, start_ms: i64, settle_ms: i64) -> Self {
        CommandSpan {
            cmd_id,
            name: name.into(),
            source_loc: loc,
            start_ms,
            settle_ms,
            window: None,
            mutations: Vec::new(),
        }
    }

    /// Time the listen window ended; the settle time when no window was
    /// recorded.
    pub fn window_close_ms(&self) -> i64 {
        self.window.map_or(self.settle_ms, |w| w.close_ms)
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |reason: String| TraceError::InvalidSpan {
            cmd_id: self.cmd_id,
            reason,
        };
        if self.settle_ms < self.start_ms {
            return Err(bad(format!("settle {} before start {}", self.settle_ms, self.start_ms)));
        }
        if let Some(w) = self.window {
            if w.close_ms < self.settle_ms {
                return Err(bad(format!(
                    "window close {} before settle {}",
                    w.close_ms, self.settle_ms
                )));
            }
        }
        let mut prev: Option<&MutationRecord> = None;
        for m in &self.mutations {
            if m.cmd_id != self.cmd_id {
                return Err(bad(format!("mutation seq {} belongs to command {}", m.seq, m.cmd_id)));
            }
            if let Some(p) = prev {
                if m.seq <= p.seq {
                    return Err(bad(format!("seq {} not after {}", m.seq, p.seq)));
                }
                if m.t_ms < p.t_ms {
                    return Err(TraceError::NonMonotonicTime {
                        cmd_id: self.cmd_id,
                        seq: m.seq,
                    });
                }
            }
            prev = Some(m);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutationLog {
    pub version: u32,
    pub suite_name: String,
    pub started_at_ms: i64,
    pub spans: Vec<CommandSpan>,
}

impl MutationLog {
    pub fn new(suite_name: impl Into<String>, started_at_ms: i64) -> Self {
        MutationLog {
            version: FORMAT_VERSION,
            suite_name: suite_name.into(),
            started_at_ms,
            spans: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        for (i, span) in self.spans.iter().enumerate() {
            let expected = (i + 1) as u32;
            if span.cmd_id != expected {
                return Err(TraceError::InvalidSpan {
                    cmd_id: span.cmd_id,
                    reason: format!("expected command id {expected}"),
                });
            }
            if i > 0 && span.start_ms < self.spans[i - 1].start_ms {
                return Err(TraceError::InvalidSpan {
                    cmd_id: span.cmd_id,
                    reason: "spans not ordered by start time".into(),
                });
            }
            span.validate()?;
        }
        Ok(())
    }

    pub fn mutation_count(&self) -> usize {
        self.spans.iter().map(|s| s.mutations.len()).sum()
    }

    pub fn mutations(&self) -> impl Iterator<Item = &MutationRecord> {
        self.spans.iter().flat_map(|s| s.mutations.iter())
    }

    /// Mark every mutation observed after its span's window closed as late.
    pub fn flag_late(&mut self) {
        for span in &mut self.spans {
            if let Some(w) = span.window {
                for m in &mut span.mutations {
                    if m.t_ms > w.close_ms {
                        m.late = true;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// wire format

#[derive(Serialize, Deserialize)]
struct MetaLine {
    version: u32,
    suite: String,
    started_at_ms: i64,
}

#[derive(Serialize, Deserialize)]
struct CmdStartLine {
    cmd_id: u32,
    name: String,
    loc: String,
    t_ms: i64,
}

#[derive(Serialize, Deserialize)]
struct CmdSettleLine {
    cmd_id: u32,
    t_ms: i64,
}

#[derive(Serialize, Deserialize)]
struct WindowCloseLine {
    cmd_id: u32,
    t_ms: i64,
    omega_s: f64,
}

#[derive(Serialize, Deserialize)]
struct MutationLine {
    cmd_id: u32,
    seq: u32,
    t_ms: i64,
    kind: MutationKind,
    xpath: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dom_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attr_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attr_old: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attr_new: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_old: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_new: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    child_added: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    child_removed: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    child_count: Option<u32>,
    in_body: bool,
    visible: bool,
    css_effective: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    truncated: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    late: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    #[serde(rename = "type")]
    kind: &'a str,
    #[serde(flatten)]
    body: T,
}

fn write_line<T: Serialize>(out: &mut Vec<u8>, kind: &str, body: T) {
    serde_json::to_writer(&mut *out, &Tagged { kind, body }).expect("log records always serialize");
    out.push(b'\n');
}

impl MutationLine {
    fn from_record(m: &MutationRecord) -> Self {
        let mut line = MutationLine {
            cmd_id: m.cmd_id,
            seq: m.seq,
            t_ms: m.t_ms,
            kind: m.kind(),
            xpath: m.target.xpath.clone(),
            dom_id: m.target.dom_id.clone(),
            attr_name: None,
            attr_old: None,
            attr_new: None,
            text_old: None,
            text_new: None,
            child_added: None,
            child_removed: None,
            child_count: None,
            in_body: m.in_body,
            visible: m.visible,
            css_effective: m.css_effective,
            truncated: m.truncated,
            late: m.late,
        };
        match &m.change {
            Change::Attribute(a) => {
                line.attr_name = Some(a.name.clone());
                line.attr_old = a.old.clone();
                line.attr_new = a.new.clone();
            }
            Change::Text(t) => {
                line.text_old = Some(t.old.clone());
                line.text_new = Some(t.new.clone());
            }
            Change::ChildList(c) => {
                line.child_added = Some(c.added);
                line.child_removed = Some(c.removed);
                line.child_count = Some(c.resulting_count);
            }
        }
        line
    }

    fn into_record(self) -> Result<MutationRecord, String> {
        let has_attr = self.attr_name.is_some() || self.attr_old.is_some() || self.attr_new.is_some();
        let has_text = self.text_old.is_some() || self.text_new.is_some();
        let has_child = self.child_added.is_some() || self.child_removed.is_some() || self.child_count.is_some();
        let change = match self.kind {
            MutationKind::Attributes => {
                if has_text || has_child {
                    return Err("attributes record carries text or child fields".into());
                }
                Change::Attribute(AttrChange {
                    name: self.attr_name.ok_or("attributes record without attr_name")?,
                    old: self.attr_old,
                    new: self.attr_new,
                })
            }
            MutationKind::CharacterData => {
                if has_attr || has_child {
                    return Err("characterData record carries attribute or child fields".into());
                }
                Change::Text(TextChange {
                    old: self.text_old.unwrap_or_default(),
                    new: self.text_new.ok_or("characterData record without text_new")?,
                })
            }
            MutationKind::ChildList => {
                if has_attr || has_text {
                    return Err("childList record carries attribute or text fields".into());
                }
                Change::ChildList(ChildChange {
                    added: self.child_added.unwrap_or(0),
                    removed: self.child_removed.unwrap_or(0),
                    resulting_count: self.child_count.ok_or("childList record without child_count")?,
                })
            }
        };
        if self.xpath.is_empty() {
            return Err("empty xpath".into());
        }
        let mut rec = MutationRecord {
            seq: self.seq,
            t_ms: self.t_ms,
            cmd_id: self.cmd_id,
            target: ElementLocator {
                xpath: self.xpath,
                dom_id: self.dom_id,
            },
            change,
            in_body: self.in_body,
            visible: self.visible,
            css_effective: self.css_effective,
            truncated: self.truncated,
            late: self.late,
        };
        rec.apply_truncation();
        Ok(rec)
    }
}

/// Encode a log in the line-delimited format.
pub fn serialize_log(log: &MutationLog) -> Vec<u8> {
    let mut out = Vec::new();
    write_line(
        &mut out,
        "meta",
        MetaLine {
            version: log.version,
            suite: log.suite_name.clone(),
            started_at_ms: log.started_at_ms,
        },
    );
    for span in &log.spans {
        write_line(
            &mut out,
            "cmd_start",
            CmdStartLine {
                cmd_id: span.cmd_id,
                name: span.name.clone(),
                loc: span.source_loc.to_string(),
                t_ms: span.start_ms,
            },
        );
        write_line(
            &mut out,
            "cmd_settle",
            CmdSettleLine {
                cmd_id: span.cmd_id,
                t_ms: span.settle_ms,
            },
        );
        for m in &span.mutations {
            write_line(&mut out, "mutation", MutationLine::from_record(m));
        }
        if let Some(w) = span.window {
            write_line(
                &mut out,
                "window_close",
                WindowCloseLine {
                    cmd_id: span.cmd_id,
                    t_ms: w.close_ms,
                    omega_s: w.omega_s,
                },
            );
        }
    }
    out
}

/// A parsed log plus the number of records skipped because they came from a
/// newer format version.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub log: MutationLog,
    pub skipped_records: usize,
}

pub fn parse_log(bytes: &[u8]) -> Result<MutationLog, TraceError> {
    parse_log_with_warnings(bytes).map(|p| p.log)
}

struct PendingSpan {
    name: String,
    loc: SourceLoc,
    start_ms: i64,
    settle_ms: Option<i64>,
    window: Option<WindowClose>,
}

fn decode_line<T: serde::de::DeserializeOwned>(v: Value, line_no: usize) -> Result<T, TraceError> {
    serde_json::from_value(v).map_err(|e| TraceError::MalformedRecord {
        line_no,
        reason: e.to_string(),
    })
}

pub fn parse_log_with_warnings(bytes: &[u8]) -> Result<ParsedLog, TraceError> {
    let text = std::str::from_utf8(bytes).map_err(|e| TraceError::MalformedRecord {
        line_no: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        reason: "invalid UTF-8".into(),
    })?;

    let mut meta: Option<MetaLine> = None;
    let mut pending: BTreeMap<u32, PendingSpan> = BTreeMap::new();
    let mut mutations: Vec<MutationRecord> = Vec::new();
    let mut skipped = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| TraceError::MalformedRecord { line_no, reason };
        let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let kind = value
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("missing record type".into()))?
            .to_string();
        if kind != "meta" && meta.is_none() {
            return Err(TraceError::MissingHeader);
        }
        match kind.as_str() {
            "meta" => {
                if meta.is_some() {
                    return Err(malformed("duplicate meta record".into()));
                }
                meta = Some(decode_line(value, line_no)?);
            }
            "cmd_start" => {
                let rec: CmdStartLine = decode_line(value, line_no)?;
                let loc = SourceLoc::parse(&rec.loc).ok_or_else(|| malformed(format!("bad loc {:?}", rec.loc)))?;
                if pending.contains_key(&rec.cmd_id) {
                    return Err(malformed(format!("duplicate cmd_start for command {}", rec.cmd_id)));
                }
                pending.insert(
                    rec.cmd_id,
                    PendingSpan {
                        name: rec.name,
                        loc,
                        start_ms: rec.t_ms,
                        settle_ms: None,
                        window: None,
                    },
                );
            }
            "cmd_settle" => {
                let rec: CmdSettleLine = decode_line(value, line_no)?;
                let span = pending
                    .get_mut(&rec.cmd_id)
                    .ok_or_else(|| malformed(format!("settle for unknown command {}", rec.cmd_id)))?;
                span.settle_ms = Some(rec.t_ms);
            }
            "window_close" => {
                let rec: WindowCloseLine = decode_line(value, line_no)?;
                let span = pending
                    .get_mut(&rec.cmd_id)
                    .ok_or_else(|| malformed(format!("window_close for unknown command {}", rec.cmd_id)))?;
                span.window = Some(WindowClose {
                    close_ms: rec.t_ms,
                    omega_s: rec.omega_s,
                });
            }
            "mutation" => {
                let rec: MutationLine = decode_line(value, line_no)?;
                mutations.push(rec.into_record().map_err(malformed)?);
            }
            other => {
                let version = meta.as_ref().map_or(FORMAT_VERSION, |m| m.version);
                if version > FORMAT_VERSION {
                    log::warn!("line {line_no}: skipping unknown record type {other:?} (format v{version})");
                    skipped += 1;
                } else {
                    return Err(malformed(format!("unknown record type {other:?}")));
                }
            }
        }
    }

    let meta = meta.ok_or(TraceError::MissingHeader)?;

    let mut spans: Vec<CommandSpan> = Vec::with_capacity(pending.len());
    for (cmd_id, p) in pending {
        let settle_ms = p.settle_ms.ok_or_else(|| TraceError::InvalidSpan {
            cmd_id,
            reason: "missing cmd_settle".into(),
        })?;
        spans.push(CommandSpan {
            cmd_id,
            name: p.name,
            source_loc: p.loc,
            start_ms: p.start_ms,
            settle_ms,
            window: p.window,
            mutations: Vec::new(),
        });
    }
    for m in mutations {
        // ids are 1..n once validated; the lookup works before validation too
        match spans.binary_search_by_key(&m.cmd_id, |s| s.cmd_id) {
            Ok(i) => spans[i].mutations.push(m),
            Err(_) => {
                return Err(TraceError::OrphanMutation {
                    cmd_id: m.cmd_id,
                    seq: m.seq,
                })
            }
        }
    }
    for span in &mut spans {
        // arrival order breaks ties, so a stable sort on seq keeps it
        let mut prev_t = i64::MIN;
        for m in &span.mutations {
            if m.t_ms < prev_t {
                return Err(TraceError::NonMonotonicTime {
                    cmd_id: span.cmd_id,
                    seq: m.seq,
                });
            }
            prev_t = m.t_ms;
        }
    }
    spans.sort_by_key(|s| (s.start_ms, s.cmd_id));

    let mut log = MutationLog {
        version: meta.version,
        suite_name: meta.suite,
        started_at_ms: meta.started_at_ms,
        spans,
    };
    log.flag_late();
    log.validate()?;
    Ok(ParsedLog {
        log,
        skipped_records: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(ls: &[&str]) -> Vec<u8> {
        let mut s = ls.join("\n");
        s.push('\n');
        s.into_bytes()
    }

    const META: &str = r#"{"type":"meta","version":1,"suite":"s","started_at_ms":0}"#;

    #[test]
    fn start_and_settle_only() {
        let log = parse_log(&lines(&[
            META,
            r#"{"type":"cmd_start","cmd_id":1,"name":"get","loc":"a.js:3","t_ms":0}"#,
            r#"{"type":"cmd_settle","cmd_id":1,"t_ms":40}"#,
        ]))
        .unwrap();
        assert_eq!(log.spans.len(), 1);
        assert!(log.spans[0].mutations.is_empty());
        assert_eq!(log.spans[0].settle_ms, 40);
        assert_eq!(log.spans[0].window_close_ms(), 40);
    }

    #[test]
    fn orphan_mutation() {
        let err = parse_log(&lines(&[
            META,
            r#"{"type":"cmd_start","cmd_id":1,"name":"get","loc":"a.js:3","t_ms":0}"#,
            r#"{"type":"cmd_settle","cmd_id":1,"t_ms":40}"#,
            r#"{"type":"cmd_start","cmd_id":2,"name":"click","loc":"a.js:4","t_ms":50}"#,
            r#"{"type":"cmd_settle","cmd_id":2,"t_ms":60}"#,
            r#"{"type":"mutation","cmd_id":9,"seq":1,"t_ms":70,"kind":"characterData","xpath":"/html/body","text_new":"x","in_body":true,"visible":true,"css_effective":true}"#,
        ]))
        .unwrap_err();
        assert_eq!(err, TraceError::OrphanMutation { cmd_id: 9, seq: 1 });
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_log(&lines(&[META, "{not json"])).unwrap_err();
        assert!(matches!(err, TraceError::MalformedRecord { line_no: 2, .. }));
    }

    #[test]
    fn time_going_backwards_is_rejected() {
        let err = parse_log(&lines(&[
            META,
            r#"{"type":"cmd_start","cmd_id":1,"name":"click","loc":"a.js:3","t_ms":0}"#,
            r#"{"type":"cmd_settle","cmd_id":1,"t_ms":40}"#,
            r#"{"type":"mutation","cmd_id":1,"seq":1,"t_ms":90,"kind":"characterData","xpath":"/html/body","text_new":"x","in_body":true,"visible":true,"css_effective":true}"#,
            r#"{"type":"mutation","cmd_id":1,"seq":2,"t_ms":80,"kind":"characterData","xpath":"/html/body","text_new":"y","in_body":true,"visible":true,"css_effective":true}"#,
        ]))
        .unwrap_err();
        assert_eq!(err, TraceError::NonMonotonicTime { cmd_id: 1, seq: 2 });
    }

    #[test]
    fn kind_payload_mismatch_is_malformed() {
        let err = parse_log(&lines(&[
            META,
            r#"{"type":"cmd_start","cmd_id":1,"name":"click","loc":"a.js:3","t_ms":0}"#,
            r#"{"type":"cmd_settle","cmd_id":1,"t_ms":40}"#,
            r#"{"type":"mutation","cmd_id":1,"seq":1,"t_ms":90,"kind":"characterData","xpath":"/html/body","attr_name":"class","text_new":"x","in_body":true,"visible":true,"css_effective":true}"#,
        ]))
        .unwrap_err();
        assert!(matches!(err, TraceError::MalformedRecord { line_no: 4, .. }));
    }

    #[test]
    fn unknown_records_skipped_only_for_newer_versions() {
        let newer = lines(&[
            r#"{"type":"meta","version":2,"suite":"s","started_at_ms":0}"#,
            r#"{"type":"screenshot","cmd_id":1}"#,
        ]);
        let parsed = parse_log_with_warnings(&newer).unwrap();
        assert_eq!(parsed.skipped_records, 1);

        let same = lines(&[META, r#"{"type":"screenshot","cmd_id":1}"#]);
        assert!(matches!(
            parse_log(&same).unwrap_err(),
            TraceError::MalformedRecord { line_no: 2, .. }
        ));
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let log = parse_log(&lines(&[
            r#"{"type":"meta","version":1,"suite":"s","started_at_ms":0,"host":"ci-7"}"#,
            r#"{"loc":"a.js:3","t_ms":0,"type":"cmd_start","cmd_id":1,"name":"get","extra":[1,2]}"#,
            r#"{"type":"cmd_settle","cmd_id":1,"t_ms":40}"#,
        ]))
        .unwrap();
        assert_eq!(
            log.spans[0].source_loc,
            SourceLoc {
                file: "a.js".into(),
                line: 3
            }
        );
    }

    #[test]
    fn missing_header() {
        let err = parse_log(&lines(&[r#"{"type":"cmd_settle","cmd_id":1,"t_ms":40}"#])).unwrap_err();
        assert_eq!(err, TraceError::MissingHeader);
        assert_eq!(parse_log(b"").unwrap_err(), TraceError::MissingHeader);
    }

    #[test]
    fn empty_log_is_header_only() {
        let log = MutationLog::new("empty", 0);
        let bytes = serialize_log(&log);
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "{\"type\":\"meta\",\"version\":1,\"suite\":\"empty\",\"started_at_ms\":0}\n"
        );
        assert_eq!(parse_log(&bytes).unwrap(), log);
    }

    #[test]
    fn late_mutations_are_flagged() {
        let log = parse_log(&lines(&[
            META,
            r#"{"type":"cmd_start","cmd_id":1,"name":"click","loc":"a.js:3","t_ms":0}"#,
            r#"{"type":"cmd_settle","cmd_id":1,"t_ms":40}"#,
            r#"{"type":"mutation","cmd_id":1,"seq":1,"t_ms":90,"kind":"characterData","xpath":"/html/body","text_new":"x","in_body":true,"visible":true,"css_effective":true}"#,
            r#"{"type":"mutation","cmd_id":1,"seq":2,"t_ms":1200,"kind":"characterData","xpath":"/html/body","text_new":"y","in_body":true,"visible":true,"css_effective":true}"#,
            r#"{"type":"window_close","cmd_id":1,"t_ms":1040,"omega_s":1.0}"#,
        ]))
        .unwrap();
        let ms = &log.spans[0].mutations;
        assert!(!ms[0].late);
        assert!(ms[1].late);
        // the flag survives a round trip
        assert_eq!(parse_log(&serialize_log(&log)).unwrap(), log);
    }

    #[test]
    fn long_values_are_truncated() {
        let long = "x".repeat(300);
        let m = MutationRecord::new(
            1,
            1,
            10,
            ElementLocator::with_id("a"),
            Change::Text(TextChange {
                old: String::new(),
                new: long,
            }),
        );
        assert!(m.truncated);
        match &m.change {
            Change::Text(t) => assert_eq!(t.new.chars().count(), MAX_VALUE_CHARS),
            _ => unreachable!(),
        }
    }

    #[test]
    fn id_rooted_xpaths() {
        assert_eq!(ElementLocator::with_id("age").to_xpath(), r#"//*[@id="age"]"#);
        assert_eq!(xpath_literal(r#"a"b"#), r#"'a"b'"#);
        assert_eq!(xpath_literal(r#"a"b'c"#), r#"concat("a", '"', "b'c")"#);
    }

    #[test]
    fn cmd_ids_must_be_consecutive() {
        let err = parse_log(&lines(&[
            META,
            r#"{"type":"cmd_start","cmd_id":2,"name":"get","loc":"a.js:3","t_ms":0}"#,
            r#"{"type":"cmd_settle","cmd_id":2,"t_ms":40}"#,
        ]))
        .unwrap_err();
        assert!(matches!(err, TraceError::InvalidSpan { cmd_id: 2, .. }));
    }
}
