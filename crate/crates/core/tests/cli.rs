mod common;

use std::fs;
use std::process::{Command, Output};

use common::{fixture, read_fixture};

fn wefix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wefix")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fix_writes_listing_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("age.fix.js");
    let o = wefix(&[
        "fix",
        s(&fixture("e2e/age.test.js")),
        "--log",
        s(&fixture("e2e/mutation.log")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap(), read_fixture("e2e/age.fix.js"));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "inserted 1 waits\n");
}

#[test]
fn fix_dry_run_prints_plan() {
    let o = wefix(&[
        "fix",
        s(&fixture("e2e/age.test.js")),
        "--log",
        s(&fixture("e2e/mutation.log")),
        "--dry-run",
    ]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("age.test.js:8 → await driver.wait("), "{stdout}");
    assert!(stdout.contains("!== \"23\""));
}

#[test]
fn fix_with_max_props_one_and_custom_timeout() {
    let o = wefix(&[
        "fix",
        s(&fixture("e2e/age.test.js")),
        "--log",
        s(&fixture("e2e/mutation.log")),
        "--dry-run",
        "--max-props",
        "1",
        "--timeout-ms",
        "6000",
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("}, 6000, "));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&wefix(&[])), 1);
    assert_eq!(code(&wefix(&["frobnicate"])), 1);
    // --out is required without --dry-run
    assert_eq!(code(&wefix(&["fix", "a.js", "--log", "m.log"])), 1);
    assert_eq!(
        code(&wefix(&[
            "fix",
            "a.js",
            "--log",
            "m.log",
            "--dry-run",
            "--max-props",
            "9"
        ])),
        1
    );
    assert_eq!(
        code(&wefix(&["instrument", "x", "--framework", "playwright", "--out", "y"])),
        1
    );
    assert_eq!(code(&wefix(&["--help"])), 0);
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.log");
    fs::write(&log, "{\"type\":\"meta\",\"version\":1,\"suite\":\"x\"\n").unwrap();
    assert_eq!(code(&wefix(&["analyze", s(&log)])), 2);
    assert_eq!(code(&wefix(&["analyze", s(&dir.path().join("missing.log"))])), 2);
    let o = wefix(&["fix", s(&fixture("e2e/age.test.js")), "--log", s(&log), "--dry-run"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));

    let broken = dir.path().join("broken.js");
    fs::write(&broken, "x /* wefix:end */\n").unwrap();
    assert_eq!(code(&wefix(&["strip", s(&broken)])), 2);
}

#[test]
fn analyze_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let o = wefix(&[
        "analyze",
        s(&fixture("logs/two_commands.log")),
        s(&fixture("e2e/mutation.log")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(
        stdout.contains("age: flaky-prone: age.test.js:8 (sendKeys)"),
        "{stdout}"
    );

    let stats = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(stats.as_bytes());
    let header: Vec<String> = rows.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "log",
            "suite",
            "commands",
            "mutations",
            "avg_rt_ms",
            "avg_latest_rt_ms",
            "pct_flaky_prone",
            "window_divergences"
        ]
    );
    let recs: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), 2);
    assert_eq!(
        recs[0].iter().skip(1).collect::<Vec<_>>(),
        ["two", "2", "3", "0.000", "25.000", "0.5000", "0"]
    );
    // age: RTs -1040 and +561
    assert_eq!(
        recs[1].iter().skip(1).collect::<Vec<_>>(),
        ["age", "2", "2", "-239.500", "-239.500", "0.5000", "0"]
    );

    let cmds = fs::read_to_string(dir.path().join("commands.csv")).unwrap();
    assert!(
        cmds.lines().any(|l| l.ends_with(",2,sendKeys,age.test.js:8,561,true")),
        "{cmds}"
    );
    let cdf = fs::read_to_string(dir.path().join("cdf.csv")).unwrap();
    assert!(cdf.starts_with("log,rt_upper_ms,cumulative\n"));
}

#[test]
fn instrument_then_strip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = wefix(&[
        "instrument",
        s(&fixture("corpus/cypress")),
        "--framework",
        "cypress",
        "--out",
        s(&out),
    ]);
    // conditional.cy.js has a command the transformer cannot reach
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("wefix-runtime.cjs").is_file());
    assert!(out.join("wefix-runtime.mjs").is_file());
    let o = wefix(&["strip", s(&out.join("todo.cy.js"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        read_fixture("corpus/cypress/todo.cy.js")
    );

    let sel = dir.path().join("sel");
    let src = dir.path().join("src");
    fs::create_dir(&src).unwrap();
    fs::copy(fixture("e2e/age.test.js"), src.join("age.test.js")).unwrap();
    let o = wefix(&["instrument", s(&src), "--framework", "selenium", "--out", s(&sel)]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        "instrumented 2 commands in 1 files; 0 unsupported, 0 failed\n"
    );
    let runtime = fs::read_to_string(sel.join("wefix-runtime.cjs")).unwrap();
    assert!(runtime.contains("__wefix__"));
}

#[test]
fn simulate_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(&cfg, "seed = 3\ntests = 40\nreruns = 2\n").unwrap();
    let out = dir.path().join("o");
    let o = wefix(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv_text = fs::read_to_string(out.join("sim.csv")).unwrap();
    assert_eq!(csv_text.lines().count(), 7);
    assert!(csv_text.starts_with("strategy,overhead,fixed,c_flaky,fix_rate,total_time_ms,baseline_time_ms,timeouts\n"));
    let again = wefix(&["simulate", "--config", s(&cfg)]);
    assert_eq!(again.stdout, o.stdout);
    fs::write(&cfg, "tests = 4\nbogus = 1\n").unwrap();
    assert_eq!(code(&wefix(&["simulate", "--config", s(&cfg)])), 2);
}

#[test]
fn report_combines_both() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(&cfg, "tests = 20\nreruns = 2\n").unwrap();
    let o = wefix(&[
        "report",
        s(&fixture("e2e/mutation.log")),
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("## Recorded suites") && summary.contains("explicit oracle (100/4000ms)"));
}
