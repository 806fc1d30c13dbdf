//! Command-site recognition.

use std::collections::BTreeSet;
use std::ops::Range;

use super::lexer::{match_brackets, tokenize, LineIndex, TokKind, Token};
use super::TransformError;
use crate::render::Dialect;

/// Where a statement sits relative to the test framework's blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SiteContext {
    /// Inside an `it`/`test`/`specify` callback.
    Test,
    /// Inside a `before*`/`after*` hook callback.
    Hook,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CommandSite {
    pub file: String,
    /// Byte offsets of the statement, terminator included when present.
    pub start: usize,
    pub end: usize,
    /// Line of the first token.
    pub line: u32,
    pub end_line: u32,
    pub name: String,
    pub dialect: Dialect,
    /// Receiver path the chain starts from (`driver`, `this.driver`, `cy`,
    /// or an element variable).
    pub chain_root: String,
    pub awaited: bool,
    pub context: SiteContext,
}

impl CommandSite {
    pub fn byte_range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// A command chain found somewhere the transformer will not touch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unsupported {
    pub line: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandScan {
    pub sites: Vec<CommandSite>,
    pub unsupported: Vec<Unsupported>,
    /// The file declares at least one test block.
    pub has_tests: bool,
    /// First driver-like receiver seen, for snippets that need a driver
    /// while their site is rooted at an element variable.
    pub driver_handle: Option<String>,
    /// The file uses `import`/`export` statements.
    pub is_module: bool,
}

impl CommandScan {
    /// Sites that get hooks: those in test bodies, or, in files without
    /// test blocks, everything outside hooks.
    pub fn instrumentable(&self) -> impl Iterator<Item = &CommandSite> {
        let has_tests = self.has_tests;
        self.sites.iter().filter(move |s| match s.context {
            SiteContext::Test => true,
            SiteContext::Hook => false,
            SiteContext::Other => !has_tests,
        })
    }

    pub fn driver_for(&self, site: &CommandSite) -> String {
        if is_driver_like(&site.chain_root) {
            site.chain_root.clone()
        } else {
            self.driver_handle.clone().unwrap_or_else(|| "driver".into())
        }
    }
}

const TEST_FNS: &[&str] = &["it", "test", "specify"];
const HOOK_FNS: &[&str] = &["before", "beforeEach", "beforeAll", "after", "afterEach", "afterAll"];

const RESERVED: &[&str] = &[
    "if",
    "else",
    "for",
    "while",
    "do",
    "return",
    "const",
    "let",
    "var",
    "function",
    "class",
    "new",
    "typeof",
    "delete",
    "void",
    "throw",
    "try",
    "catch",
    "finally",
    "switch",
    "case",
    "default",
    "break",
    "continue",
    "yield",
    "import",
    "export",
    "in",
    "of",
    "instanceof",
    "async",
    "with",
    "debugger",
];

const CYPRESS_NAV: &[&str] = &["visit", "reload", "go"];
const CYPRESS_ACTIONS: &[&str] = &[
    "click",
    "dblclick",
    "rightclick",
    "type",
    "clear",
    "check",
    "uncheck",
    "select",
    "trigger",
    "submit",
    "selectFile",
    "scrollTo",
    "focus",
    "blur",
];
const SELENIUM_DRIVER_CMDS: &[&str] = &["get", "navigate", "executeScript", "executeAsyncScript"];
const SELENIUM_ACTIONS: &[&str] = &["click", "sendKeys", "clear", "submit"];

fn is_driver_like(root: &str) -> bool {
    let last = root.rsplit('.').next().unwrap_or(root).to_ascii_lowercase();
    last.contains("driver") || last.contains("browser")
}

/// A parsed call chain `a.b.c(...).d(...)`.
struct Chain {
    end_tok: usize,
    root: String,
    calls: Vec<String>,
    awaited: bool,
}

struct Scanner<'a> {
    src: &'a str,
    toks: Vec<Token>,
    partner: Vec<Option<usize>>,
    lines: LineIndex,
}

impl<'a> Scanner<'a> {
    fn punct(&self, i: usize, p: &str) -> bool {
        self.toks.get(i).is_some_and(|t| t.is_punct(self.src, p))
    }

    fn ident(&self, i: usize) -> Option<&'a str> {
        let t = self.toks.get(i)?;
        (t.kind == TokKind::Ident).then(|| t.text(self.src))
    }

    fn parse_chain(&self, i: usize) -> Option<Chain> {
        let mut j = i;
        let mut awaited = false;
        if self.ident(j) == Some("await") {
            awaited = true;
            j += 1;
        }
        let first = self.ident(j)?;
        if RESERVED.contains(&first) || first == "await" {
            return None;
        }
        let mut segs: Vec<(String, bool)> = vec![(first.to_string(), false)];
        j += 1;
        loop {
            if (self.punct(j, ".") || self.punct(j, "?.")) && self.ident(j + 1).is_some() {
                segs.push((self.ident(j + 1).unwrap().to_string(), false));
                j += 2;
            } else if self.punct(j, "(") {
                let close = self.partner[j]?;
                let last = segs.last_mut().unwrap();
                if last.1 {
                    segs.push((String::new(), true));
                } else {
                    last.1 = true;
                }
                j = close + 1;
            } else {
                break;
            }
        }
        let first_call = segs.iter().position(|s| s.1)?;
        if !segs.last().unwrap().1 {
            return None;
        }
        let root = segs[..first_call]
            .iter()
            .map(|s| s.0.as_str())
            .collect::<Vec<_>>()
            .join(".");
        let calls = segs[first_call..].iter().filter(|s| s.1).map(|s| s.0.clone()).collect();
        Some(Chain {
            end_tok: j,
            root,
            calls,
            awaited,
        })
    }

    /// Whether the token at `i` can begin a statement we may wrap.
    fn at_statement_start(&self, i: usize) -> bool {
        if i == 0 {
            return true;
        }
        let prev = &self.toks[i - 1];
        if prev.kind == TokKind::Punct {
            match prev.text(self.src) {
                ";" | "{" | "}" => return true,
                ")" => {
                    // `if (c) stmt` and friends: not a free-standing statement
                    let open = self.partner[i - 1].unwrap_or(0);
                    if open > 0 && matches!(self.ident(open - 1), Some("if" | "for" | "while" | "with")) {
                        return false;
                    }
                }
                "]" => {}
                _ => return false,
            }
        }
        if prev.kind == TokKind::Ident && matches!(prev.text(self.src), "else" | "do" | "return" | "await" | "yield") {
            return false;
        }
        self.toks[i].nl_before
    }

    /// End offset and next token index when a statement ends right after
    /// `end_tok - 1`.
    fn terminator(&self, end_tok: usize) -> Option<(usize, usize)> {
        match self.toks.get(end_tok) {
            None => Some((self.toks[end_tok - 1].end, end_tok)),
            Some(t) if t.is_punct(self.src, ";") => Some((t.end, end_tok + 1)),
            Some(t) if t.nl_before || t.is_punct(self.src, "}") => Some((self.toks[end_tok - 1].end, end_tok)),
            _ => None,
        }
    }

    /// Context of every token, from the enclosing test/hook callbacks.
    fn contexts(&self) -> Vec<SiteContext> {
        let mut out = Vec::with_capacity(self.toks.len());
        let mut stack = vec![SiteContext::Other];
        for (i, t) in self.toks.iter().enumerate() {
            let top = *stack.last().unwrap();
            out.push(top);
            if t.kind != TokKind::Punct {
                continue;
            }
            match t.text(self.src) {
                "(" => stack.push(self.call_context(i).unwrap_or(top)),
                "[" | "{" => stack.push(top),
                ")" | "]" | "}" if stack.len() > 1 => {
                    stack.pop();
                }
                _ => {}
            }
        }
        out
    }

    /// `it(`, `it.only(`, `beforeEach(` and so on.
    fn call_context(&self, open: usize) -> Option<SiteContext> {
        let name = self.ident(open.checked_sub(1)?)?;
        let base = if open >= 3 && self.punct(open - 2, ".") && matches!(name, "only" | "skip") {
            self.ident(open - 3)?
        } else {
            name
        };
        let before = open.checked_sub(if base == name { 2 } else { 4 });
        if before.is_some_and(|b| self.punct(b, ".")) {
            return None;
        }
        if TEST_FNS.contains(&base) {
            Some(SiteContext::Test)
        } else if HOOK_FNS.contains(&base) {
            Some(SiteContext::Hook)
        } else {
            None
        }
    }
}

fn classify(dialect: Dialect, chain: &Chain, element_vars: &BTreeSet<String>) -> Option<String> {
    let last_of = |set: &[&str]| chain.calls.iter().rev().find(|c| set.contains(&c.as_str())).cloned();
    match dialect {
        Dialect::Cypress => {
            if chain.root != "cy" {
                return None;
            }
            let first = chain.calls[0].as_str();
            if CYPRESS_NAV.contains(&first) {
                return Some(first.to_string());
            }
            if let Some(name) = last_of(CYPRESS_ACTIONS) {
                return Some(name);
            }
            if first == "contains" && !chain.calls.iter().any(|c| c == "should" || c == "and") {
                return Some("contains".into());
            }
            None
        }
        Dialect::SeleniumWebdriver => {
            if is_driver_like(&chain.root) {
                let first = chain.calls[0].as_str();
                if first == "actions" {
                    return chain.calls.iter().any(|c| c == "perform").then(|| "actions".into());
                }
                if SELENIUM_DRIVER_CMDS.contains(&first) {
                    return Some(first.to_string());
                }
                if first == "findElement" {
                    return last_of(SELENIUM_ACTIONS);
                }
                None
            } else if element_vars.contains(&chain.root) {
                last_of(SELENIUM_ACTIONS)
            } else {
                None
            }
        }
    }
}

pub fn find_commands(source: &str, dialect: Dialect) -> Result<CommandScan, TransformError> {
    find_commands_in("", source, dialect)
}

/// Scan a file for command sites. `file` only labels the results.
pub fn find_commands_in(file: &str, source: &str, dialect: Dialect) -> Result<CommandScan, TransformError> {
    let lines = LineIndex::new(source);
    let toks = tokenize(source, &lines).map_err(|e| e.in_file(file))?;
    let partner = match_brackets(source, &toks, &lines).map_err(|e| e.in_file(file))?;
    let sc = Scanner {
        src: source,
        toks,
        partner,
        lines,
    };
    let ctx = sc.contexts();

    let mut scan = CommandScan {
        sites: Vec::new(),
        unsupported: Vec::new(),
        has_tests: false,
        driver_handle: None,
        is_module: false,
    };
    let mut element_vars = BTreeSet::new();
    let mut i = 0;
    while i < sc.toks.len() {
        let tok = sc.toks[i];
        if tok.kind == TokKind::Punct && tok.is_punct(source, "(") && sc.call_context(i) == Some(SiteContext::Test) {
            scan.has_tests = true;
        }
        if tok.kind != TokKind::Ident || (i > 0 && (sc.punct(i - 1, ".") || sc.punct(i - 1, "?."))) {
            i += 1;
            continue;
        }
        let text = tok.text(source);
        if matches!(text, "import" | "export")
            && sc.at_statement_start(i)
            && !(sc.punct(i + 1, "(") || sc.punct(i + 1, "."))
        {
            scan.is_module = true;
        }
        // element handles: `const el = await driver.findElement(...)`, optionally `el: WebElement`
        let eq = if sc.punct(i + 2, ":") && sc.ident(i + 3).is_some() {
            i + 4
        } else {
            i + 2
        };
        if matches!(text, "const" | "let" | "var") && sc.punct(eq, "=") {
            if let (Some(var), Some(chain)) = (sc.ident(i + 1), sc.parse_chain(eq + 1)) {
                if is_driver_like(&chain.root) && chain.calls.first().is_some_and(|c| c == "findElement") {
                    element_vars.insert(var.to_string());
                }
            }
        }
        let Some(chain) = sc.parse_chain(i) else {
            i += 1;
            continue;
        };
        if is_driver_like(&chain.root) && scan.driver_handle.is_none() && dialect == Dialect::SeleniumWebdriver {
            scan.driver_handle = Some(chain.root.clone());
        }
        let Some(name) = classify(dialect, &chain, &element_vars) else {
            i += 1;
            continue;
        };
        let line = sc.lines.line_of(tok.start);
        match sc.terminator(chain.end_tok).filter(|_| sc.at_statement_start(i)) {
            Some((end, next)) => {
                scan.sites.push(CommandSite {
                    file: file.to_string(),
                    start: tok.start,
                    end,
                    line,
                    end_line: sc.lines.line_of(end.saturating_sub(1).max(tok.start)),
                    name,
                    dialect,
                    chain_root: chain.root,
                    awaited: chain.awaited,
                    context: ctx[i],
                });
                i = next;
            }
            None => {
                scan.unsupported.push(Unsupported { line, name });
                i = chain.end_tok;
            }
        }
    }
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(src: &str, d: Dialect) -> Vec<(u32, String)> {
        find_commands(src, d)
            .unwrap()
            .sites
            .into_iter()
            .map(|s| (s.line, s.name))
            .collect()
    }

    #[test]
    fn listing_one_sites() {
        let src = "it('searches age', async function () {\n  let driver = await new Builder().forBrowser('chrome').build();\n  await driver.get('http://localhost:5000');\n  await driver.findElement(By.id('name'))\n    .sendKeys('Bob', Key.ENTER);\n  assert.equal(await driver.findElement(By.id('age')).getText(), '23');\n});\n";
        let scan = find_commands(src, Dialect::SeleniumWebdriver).unwrap();
        let got: Vec<_> = scan
            .sites
            .iter()
            .map(|s| (s.line, s.end_line, s.name.as_str()))
            .collect();
        assert_eq!(got, vec![(3, 3, "get"), (4, 5, "sendKeys")]);
        assert!(scan.sites.iter().all(|s| s.awaited && s.chain_root == "driver"));
        assert!(scan.sites.iter().all(|s| s.context == SiteContext::Test));
        assert!(src[scan.sites[1].byte_range()].ends_with("Key.ENTER);"));
        assert!(scan.unsupported.is_empty());
    }

    #[test]
    fn assertions_only() {
        let src = "it('x', () => {\n  cy.get('#a').should('have.text', 'b');\n  expect(1).to.equal(1);\n});\n";
        assert!(names(src, Dialect::Cypress).is_empty());
    }

    #[test]
    fn cypress_vocabulary() {
        let src = "describe('s', () => {\n  beforeEach(() => {\n    cy.visit('/');\n  })\n  it('t', () => {\n    cy.get('#q').type('x{enter}')\n    cy.contains('Go').click();\n    cy.contains('Result');\n    cy.contains('Done').should('be.visible');\n    cy.reload()\n    cy.get('#sel').select('b').should('have.value', 'b');\n  });\n});\n";
        let scan = find_commands(src, Dialect::Cypress).unwrap();
        let got: Vec<_> = scan
            .sites
            .iter()
            .map(|s| (s.line, s.name.as_str(), s.context))
            .collect();
        assert_eq!(
            got,
            vec![
                (3, "visit", SiteContext::Hook),
                (6, "type", SiteContext::Test),
                (7, "click", SiteContext::Test),
                (8, "contains", SiteContext::Test),
                (10, "reload", SiteContext::Test),
                (11, "select", SiteContext::Test),
            ]
        );
        assert_eq!(scan.instrumentable().count(), 5);
    }

    #[test]
    fn selenium_vocabulary() {
        let src = "test('t', async () => {\n  await driver.navigate().to(url);\n  const btn = await driver.findElement(By.css('b'));\n  await btn.click();\n  await driver.executeScript('x()');\n  await driver.actions().move({origin: btn}).press().release().perform();\n  await driver.wait(until.elementLocated(By.id('x')), 1000);\n  await this.driver.findElement(By.id('q')).clear();\n});\n";
        assert_eq!(
            names(src, Dialect::SeleniumWebdriver),
            vec![
                (2, "navigate".into()),
                (4, "click".into()),
                (5, "executeScript".into()),
                (6, "actions".into()),
                (8, "clear".into())
            ]
        );
    }

    #[test]
    fn unsupported_positions() {
        let src = "it('t', () => {\n  if (ok) cy.get('a').click();\n  const p = cy.get('b').click();\n  [1].forEach(() => cy.get('c').click());\n  cy.get('d').click();\n});\n";
        let scan = find_commands(src, Dialect::Cypress).unwrap();
        assert_eq!(names(src, Dialect::Cypress), vec![(5, "click".into())]);
        let lines: Vec<u32> = scan.unsupported.iter().map(|u| u.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
    }

    #[test]
    fn same_line_statements_and_asi() {
        let src = "it('t', () => { cy.visit('/'); cy.get('a').click() })\n";
        let scan = find_commands(src, Dialect::Cypress).unwrap();
        assert_eq!(scan.sites.len(), 2);
        assert_eq!(&src[scan.sites[0].byte_range()], "cy.visit('/');");
        assert_eq!(&src[scan.sites[1].byte_range()], "cy.get('a').click()");
    }

    #[test]
    fn files_without_tests_instrument_top_level() {
        let src = "await driver.get('x');\nawait driver.findElement(By.id('a')).click();\n";
        let scan = find_commands(src, Dialect::SeleniumWebdriver).unwrap();
        assert!(!scan.has_tests);
        assert_eq!(scan.instrumentable().count(), 2);
    }

    #[test]
    fn parse_failure_names_file() {
        match find_commands_in("a.js", "it('x', () => {\n", Dialect::Cypress) {
            Err(TransformError::ParseFailure { file, line, .. }) => {
                assert_eq!(file, "a.js");
                assert_eq!(line, 1);
            }
            other => panic!("{other:?}"),
        }
    }
}
