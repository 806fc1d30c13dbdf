//! Render wait oracles as test-language source.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsm::{Expected, Predicate, PropValue, PropertyKind, WaitOracle};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("unsupported dialect {0:?} (expected cypress or selenium)")]
    UnsupportedDialect(String),
    #[error("oracle has no predicates")]
    EmptyOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    Cypress,
    SeleniumWebdriver,
}

impl Dialect {
    pub fn as_str(self) -> &'static str {
        match self {
            Dialect::Cypress => "cypress",
            Dialect::SeleniumWebdriver => "selenium",
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dialect {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cypress" => Ok(Dialect::Cypress),
            "selenium" | "selenium-webdriver" | "webdriver" => Ok(Dialect::SeleniumWebdriver),
            _ => Err(RenderError::UnsupportedDialect(s.to_string())),
        }
    }
}

/// Where a rendered wait is going to live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderTarget {
    /// Expression holding the WebDriver instance (selenium only).
    pub driver: String,
    /// Whether the surrounding code awaits its commands.
    pub awaited: bool,
}

impl Default for RenderTarget {
    fn default() -> Self {
        RenderTarget {
            driver: "driver".into(),
            awaited: true,
        }
    }
}

/// A rendered snippet tagged with the dialect it was rendered for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub dialect: Dialect,
    pub text: String,
}

const PREFIX_NOTE: &str = "// wefix: truncated value, prefix match";

/// A JS string literal for `s`. JSON string syntax is a subset of JS.
pub fn js_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub fn render_oracle(oracle: &WaitOracle, dialect: Dialect) -> Result<String, RenderError> {
    render_oracle_for(oracle, dialect, &RenderTarget::default())
}

/// Render without a trailing newline; multi-line output uses `\n` and
/// two-space inner indentation.
pub fn render_oracle_for(oracle: &WaitOracle, dialect: Dialect, target: &RenderTarget) -> Result<String, RenderError> {
    if oracle.predicates.is_empty() {
        return Err(RenderError::EmptyOracle);
    }
    Ok(match dialect {
        Dialect::Cypress => render_cypress(oracle),
        Dialect::SeleniumWebdriver => render_selenium(oracle, target),
    })
}

fn render_cypress(oracle: &WaitOracle) -> String {
    let mut lines = Vec::new();
    for p in &oracle.predicates {
        let get = format!(
            "cy.get({}, {{ timeout: {} }})",
            js_string(&p.element.to_xpath()),
            oracle.timeout_ms
        );
        let line = match (&p.kind, &p.expected) {
            (PropertyKind::Text, Expected::Equals(v)) => format!("{get}.should(\"have.text\", {});", value_literal(v)),
            (PropertyKind::Attr(name), Expected::Equals(PropValue::Absent)) => {
                format!("{get}.should(\"not.have.attr\", {});", js_string(name))
            }
            (PropertyKind::Attr(name), Expected::Equals(v)) => {
                format!(
                    "{get}.should(\"have.attr\", {}, {});",
                    js_string(name),
                    value_literal(v)
                )
            }
            (PropertyKind::ChildLen, Expected::Equals(v)) => {
                format!("{get}.children().should(\"have.length\", {});", value_literal(v))
            }
            (PropertyKind::Text, Expected::Prefix(pre)) => {
                lines.push(PREFIX_NOTE.to_string());
                format!(
                    "{get}.invoke(\"text\").should(\"satisfy\", (v) => v.startsWith({}));",
                    js_string(pre)
                )
            }
            (PropertyKind::Attr(name), Expected::Prefix(pre)) => {
                lines.push(PREFIX_NOTE.to_string());
                format!(
                    "{get}.invoke(\"attr\", {}).should(\"satisfy\", (v) => typeof v === \"string\" && v.startsWith({}));",
                    js_string(name),
                    js_string(pre)
                )
            }
            (PropertyKind::ChildLen, Expected::Prefix(_)) => unreachable!("child lengths are never truncated"),
        };
        lines.push(line);
    }
    lines.join("\n")
}

fn value_literal(v: &PropValue) -> String {
    match v {
        PropValue::Str(s) => js_string(s),
        PropValue::Count(n) => n.to_string(),
        PropValue::Absent => "null".into(),
    }
}

fn selenium_check(p: &Predicate, handle: &str) -> String {
    let el = format!("{handle}[0]");
    match (&p.kind, &p.expected) {
        (PropertyKind::Text, Expected::Equals(v)) => format!("(await {el}.getText()) !== {}", value_literal(v)),
        (PropertyKind::Attr(name), Expected::Equals(v)) => {
            format!(
                "(await {el}.getAttribute({})) !== {}",
                js_string(name),
                value_literal(v)
            )
        }
        (PropertyKind::ChildLen, Expected::Equals(v)) => {
            format!(
                "(await {el}.findElements({{ xpath: \"./*\" }})).length !== {}",
                value_literal(v)
            )
        }
        (PropertyKind::Text, Expected::Prefix(pre)) => {
            format!("!(await {el}.getText()).startsWith({})", js_string(pre))
        }
        (PropertyKind::Attr(name), Expected::Prefix(pre)) => format!(
            "!String(await {el}.getAttribute({})).startsWith({})",
            js_string(name),
            js_string(pre)
        ),
        (PropertyKind::ChildLen, Expected::Prefix(_)) => unreachable!("child lengths are never truncated"),
    }
}

fn render_selenium(oracle: &WaitOracle, target: &RenderTarget) -> String {
    let d = &target.driver;
    let mut out = String::new();
    if target.awaited {
        out.push_str("await ");
    }
    out.push_str(&format!("{d}.wait(async () => {{\n"));
    for (i, p) in oracle.predicates.iter().enumerate() {
        let handle = format!("e{}", i + 1);
        if matches!(p.expected, Expected::Prefix(_)) {
            out.push_str(&format!("  {PREFIX_NOTE}\n"));
        }
        out.push_str(&format!(
            "  const {handle} = await {d}.findElements({{ xpath: {} }});\n",
            js_string(&p.element.to_xpath())
        ));
        out.push_str(&format!(
            "  if ({handle}.length === 0 || {}) return false;\n",
            selenium_check(p, &handle)
        ));
    }
    out.push_str("  return true;\n");
    out.push_str(&format!(
        "}}, {}, \"wefix: explicit wait timed out\", {});",
        oracle.timeout_ms, oracle.poll_ms
    ));
    out
}
