//! JavaScript support file that instrumented tests import.
//!
//! The helper talks to the in-page observer over the labeled cookie
//! channel: the pre-hook makes sure the observer is installed and clears
//! labeled cookies, the post-hook drains them under the dynamic listen
//! window and appends records to `mutation.log`.

use crate::render::Dialect;
use crate::window::{DEFAULT_CAP_S, DEFAULT_INIT_S};

pub const RUNTIME_BASENAME: &str = "wefix-runtime";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModuleKind {
    CommonJs,
    Esm,
}

pub fn runtime_file_name(kind: ModuleKind) -> String {
    match kind {
        ModuleKind::CommonJs => format!("{RUNTIME_BASENAME}.cjs"),
        ModuleKind::Esm => format!("{RUNTIME_BASENAME}.mjs"),
    }
}

const SHARED: &str = r#"const PREFIX = "__wefix__";
const RECORD_PREFIX = PREFIX + "r";
const INIT_S = @INIT@;
const CAP_S = @CAP@;
const POLL_MS = 50;
const LOG_PATH = (typeof process !== "undefined" && process.env && process.env.WEFIX_LOG) || "mutation.log";
const SHIM_PATH = (typeof process !== "undefined" && process.env && process.env.WEFIX_SHIM) || "wefix-shim.js";

const state = { started: Date.now(), cmdId: 0, current: null, seq: 0, lastSeen: 0, opened: false };

function decodeRecord(value) {
  const b64 = value.replace(/-/g, "+").replace(/_/g, "/");
  const pad = b64.length % 4 === 0 ? "" : "=".repeat(4 - (b64.length % 4));
  const text = typeof Buffer !== "undefined"
    ? Buffer.from(b64 + pad, "base64").toString("utf8")
    : decodeURIComponent(escape(atob(b64 + pad)));
  return JSON.parse(text);
}

function recordCookies(cookies) {
  return cookies
    .filter((c) => c.name.startsWith(RECORD_PREFIX))
    .map((c) => ({ n: Number(c.name.slice(RECORD_PREFIX.length)), c }))
    .filter((x) => Number.isFinite(x.n) && x.n > state.lastSeen)
    .sort((a, b) => a.n - b.n);
}

function toLine(rec, late) {
  const line = Object.assign({}, rec, {
    type: "mutation",
    cmd_id: state.current,
    seq: ++state.seq,
    t_ms: rec.t_ms - state.started,
  });
  if (late) line.late = true;
  return JSON.stringify(line);
}

function header() {
  return JSON.stringify({ type: "meta", version: 1, suite: "@SUITE@", started_at_ms: 0 });
}
"#;

const SELENIUM_BODY: &str = r#"const fs = require("fs");

function emit(obj) {
  if (!state.opened) {
    fs.writeFileSync(LOG_PATH, header() + "\n");
    state.opened = true;
  }
  fs.appendFileSync(LOG_PATH, (typeof obj === "string" ? obj : JSON.stringify(obj)) + "\n");
}

const sleep = (ms) => new Promise((r) => setTimeout(r, ms));

async function ensureObserver(driver) {
  const present = await driver.executeScript("return !!(window.__wefix && window.__wefix.installed);");
  if (!present && fs.existsSync(SHIM_PATH)) {
    await driver.executeScript(fs.readFileSync(SHIM_PATH, "utf8"));
  }
}

async function drain(driver, late) {
  const fresh = recordCookies(await driver.manage().getCookies());
  const out = [];
  for (const { n, c } of fresh) {
    state.lastSeen = n;
    const rec = decodeRecord(c.value);
    out.push(rec);
    if (state.current !== null) emit(toLine(rec, late));
  }
  return out;
}

async function clearChannel(driver) {
  for (const c of await driver.manage().getCookies()) {
    if (c.name.startsWith(PREFIX)) await driver.manage().deleteCookie(c.name);
  }
  state.lastSeen = 0;
}

async function pre(driver, siteId) {
  // leftovers belong to the previous command and arrived after its window
  await drain(driver, true);
  await clearChannel(driver);
  await ensureObserver(driver);
  state.current = ++state.cmdId;
  state.seq = 0;
  state.pendingStart = Date.now() - state.started;
}

async function post(driver, siteId, loc, name) {
  const settle = Date.now();
  emit({ type: "cmd_start", cmd_id: state.current, name, loc, t_ms: state.pendingStart });
  emit({ type: "cmd_settle", cmd_id: state.current, t_ms: settle - state.started });
  let omega = INIT_S;
  while (Date.now() < settle + omega * 1000) {
    for (const rec of await drain(driver, false)) {
      const rt = (rec.t_ms - settle) / 1000;
      if (rt < omega) {
        omega = Math.min(CAP_S, Math.max(2 * rt, omega));
      }
    }
    await sleep(POLL_MS);
  }
  emit({ type: "window_close", cmd_id: state.current, t_ms: settle + Math.round(omega * 1000) - state.started, omega_s: omega });
}
"#;

const CYPRESS_BODY: &str = r#"function emit(obj) {
  const text = (typeof obj === "string" ? obj : JSON.stringify(obj)) + "\n";
  if (!state.opened) {
    state.opened = true;
    cy.writeFile(LOG_PATH, header() + "\n", { log: false });
  }
  cy.writeFile(LOG_PATH, text, { flag: "a+", log: false });
}

function drain(late, onRecord) {
  return cy.getCookies({ log: false }).then((cookies) => {
    for (const { n, c } of recordCookies(cookies)) {
      state.lastSeen = n;
      const rec = decodeRecord(c.value);
      if (onRecord) onRecord(rec);
      if (state.current !== null) emit(toLine(rec, late));
    }
  });
}

function pre(siteId) {
  drain(true);
  cy.getCookies({ log: false }).then((cookies) => {
    for (const c of cookies) {
      if (c.name.startsWith(PREFIX)) cy.clearCookie(c.name, { log: false });
    }
    state.lastSeen = 0;
  });
  cy.window({ log: false }).then((win) => {
    if (!(win.__wefix && win.__wefix.installed)) {
      cy.readFile(SHIM_PATH, { log: false }).then((src) => win.eval(src));
    }
  });
  cy.then(() => {
    state.current = ++state.cmdId;
    state.seq = 0;
    state.pendingStart = Date.now() - state.started;
  });
}

function post(siteId, loc, name) {
  cy.then(() => {
    const ctx = { settle: Date.now(), omega: INIT_S };
    emit({ type: "cmd_start", cmd_id: state.current, name, loc, t_ms: state.pendingStart });
    emit({ type: "cmd_settle", cmd_id: state.current, t_ms: ctx.settle - state.started });
    const listen = () => {
      if (Date.now() >= ctx.settle + ctx.omega * 1000) {
        emit({
          type: "window_close",
          cmd_id: state.current,
          t_ms: ctx.settle + Math.round(ctx.omega * 1000) - state.started,
          omega_s: ctx.omega,
        });
        return;
      }
      drain(false, (rec) => {
        const rt = (rec.t_ms - ctx.settle) / 1000;
        if (rt < ctx.omega) ctx.omega = Math.min(CAP_S, Math.max(2 * rt, ctx.omega));
      });
      cy.wait(POLL_MS, { log: false }).then(listen);
    };
    listen();
  });
}
"#;

/// Source of the helper for a dialect and module system.
pub fn runtime_source(dialect: Dialect, kind: ModuleKind, suite: &str) -> String {
    let shared = SHARED
        .replace("@INIT@", &format!("{DEFAULT_INIT_S:?}"))
        .replace("@CAP@", &format!("{DEFAULT_CAP_S:?}"))
        .replace("\"@SUITE@\"", &crate::render::js_string(suite));
    let body = match dialect {
        Dialect::SeleniumWebdriver => SELENIUM_BODY,
        Dialect::Cypress => CYPRESS_BODY,
    };
    let mut out = format!("// wefix recording runtime ({dialect}); generated file\n");
    let body = match kind {
        // the selenium body loads fs through require; ESM needs createRequire
        ModuleKind::Esm => body.replace(
            "const fs = require(\"fs\");",
            "import { createRequire } from \"module\";\nconst fs = createRequire(import.meta.url)(\"fs\");",
        ),
        ModuleKind::CommonJs => body.to_string(),
    };
    if kind == ModuleKind::CommonJs {
        out.push_str("\"use strict\";\n");
    }
    out.push_str(&shared);
    out.push('\n');
    out.push_str(&body);
    out.push('\n');
    match kind {
        ModuleKind::CommonJs => out.push_str("module.exports = { pre, post };\n"),
        ModuleKind::Esm => out.push_str("export { pre, post };\n"),
    }
    out
}
