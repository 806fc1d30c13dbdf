//! Command-line entry point.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analyzer::{compute_stats, prune_log, rt_cdf, BackgroundConfig, SuiteStats};
use crate::fsm::OracleConfig;
use crate::render::Dialect;
use crate::sim::{evaluate, gen_corpus, report_csv, report_table, SimConfig, SimReport};
use crate::trace::{parse_log_with_warnings, MutationLog};
use crate::transform::{
    fix_source, instrument_recording, plan_fixes, runtime_source, strip_hooks, FixOptions, ModuleKind,
};
use crate::window::replay_window;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "wefix", version, about = "Find and fix UI-timing flakiness in web e2e tests")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads for file- and test-level parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Add recording hooks around every command of a test directory.
    Instrument {
        dir: PathBuf,
        #[arg(long)]
        framework: Dialect,
        #[arg(long)]
        out: PathBuf,
    },
    /// Statistics over recorded mutation logs.
    Analyze {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Log recorded on the idle page, for background detection.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Directory for stats.csv, cdf.csv and commands.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        bucket_ms: i64,
        #[command(flatten)]
        bg: BgArgs,
    },
    /// Insert explicit waits after flaky-prone commands.
    Fix {
        file: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, required_unless_present = "dry_run")]
        out: Option<PathBuf>,
        /// Print the planned waits instead of writing a file.
        #[arg(long)]
        dry_run: bool,
        /// Inferred from the source when omitted.
        #[arg(long)]
        framework: Option<Dialect>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        bg: BgArgs,
    },
    /// Compare wait strategies on a synthetic suite.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for sim.csv and corpus.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Log statistics and simulation results in one summary.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        bg: BgArgs,
    },
    /// Remove all wefix-inserted code from a file.
    Strip {
        file: PathBuf,
        /// Written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct BgArgs {
    /// Occurrences needed before a signature can count as periodic.
    #[arg(long, default_value_t = 3)]
    min_occurrences: usize,
    /// Inter-arrival coefficient of variation below which a signature is
    /// periodic.
    #[arg(long, default_value_t = 0.2)]
    max_cv: f64,
}

impl BgArgs {
    fn config(self) -> BackgroundConfig {
        BackgroundConfig {
            min_occurrences: self.min_occurrences,
            max_cv: self.max_cv,
        }
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct OracleArgs {
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=5))]
    max_props: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(10..=1000))]
    poll_ms: u64,
    #[arg(long, default_value_t = 4000, value_parser = clap::value_parser!(u64).range(500..=60000))]
    timeout_ms: u64,
}

/// Error with the exit code it maps to.
struct Failure {
    code: i32,
    msg: String,
}

fn data(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_DATA,
        msg: msg.into(),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        msg: msg.into(),
    }
}

type CliResult = Result<i32, Failure>;

fn read_text(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| data(format!("{}: {e}", p.display())))
}

fn write_text(p: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| data(format!("{}: {e}", parent.display())))?;
    }
    fs::write(p, text).map_err(|e| data(format!("{}: {e}", p.display())))
}

fn read_log(p: &Path) -> Result<MutationLog, Failure> {
    let bytes = fs::read(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
    let parsed = parse_log_with_warnings(&bytes).map_err(|e| data(format!("{}: {e}", p.display())))?;
    if parsed.skipped_records > 0 {
        log::warn!(
            "{}: skipped {} records of unknown kind",
            p.display(),
            parsed.skipped_records
        );
    }
    Ok(parsed.log)
}

/// Parse `argv` (program name first) and run the subcommand.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(cli.cmd)) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn dispatch(cmd: Cmd) -> CliResult {
    match cmd {
        Cmd::Instrument { dir, framework, out } => instrument(&dir, framework, &out),
        Cmd::Analyze {
            logs,
            baseline,
            out,
            bucket_ms,
            bg,
        } => analyze(&logs, baseline.as_deref(), out.as_deref(), bucket_ms, bg.config()),
        Cmd::Fix {
            file,
            log,
            out,
            dry_run,
            framework,
            baseline,
            oracle,
            bg,
        } => fix(
            &file,
            &log,
            out.as_deref(),
            dry_run,
            framework,
            baseline.as_deref(),
            oracle,
            bg,
        ),
        Cmd::Simulate { config, seed, out } => simulate(config.as_deref(), seed, out.as_deref()),
        Cmd::Report {
            logs,
            config,
            seed,
            out,
            bg,
        } => report(&logs, config.as_deref(), seed, out.as_deref(), bg.config()),
        Cmd::Strip { file, out } => strip(&file, out.as_deref()),
    }
}

const SOURCE_EXTS: &[&str] = &["js", "mjs", "cjs", "ts", "mts", "cts"];

fn is_source(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| SOURCE_EXTS.contains(&e))
}

enum FileResult {
    Copied,
    Instrumented {
        sites: usize,
        unsupported: usize,
        module: ModuleKind,
    },
    Failed(String),
}

fn instrument(dir: &Path, dialect: Dialect, out: &Path) -> CliResult {
    if !dir.is_dir() {
        return Err(usage(format!("{} is not a directory", dir.display())));
    }
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.file_name() != "node_modules" && e.file_name() != ".git")
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .collect();
    files.sort();

    let results: Vec<(PathBuf, FileResult)> = files
        .par_iter()
        .map(|src| {
            let rel = src.strip_prefix(dir).expect("walked under dir").to_path_buf();
            let dest = out.join(&rel);
            let res = (|| -> Result<FileResult, String> {
                if let Some(parent) = dest.parent() {
                    fs::create_dir_all(parent).map_err(|e| e.to_string())?;
                }
                let text = match is_source(src).then(|| fs::read_to_string(src)) {
                    Some(Ok(t)) => t,
                    _ => {
                        fs::copy(src, &dest).map_err(|e| e.to_string())?;
                        return Ok(FileResult::Copied);
                    }
                };
                let label = rel.to_string_lossy().replace('\\', "/");
                let inst = instrument_recording(&text, dialect, &label).map_err(|e| e.in_file(&label).to_string())?;
                if inst.sites.is_empty() && inst.skipped.is_empty() {
                    fs::write(&dest, &text).map_err(|e| e.to_string())?;
                    return Ok(FileResult::Copied);
                }
                for u in &inst.unsupported {
                    log::warn!(
                        "{label}:{}: `{}` in an unsupported position; not instrumented",
                        u.line,
                        u.name
                    );
                }
                fs::write(&dest, &inst.text).map_err(|e| e.to_string())?;
                Ok(FileResult::Instrumented {
                    sites: inst.sites.len(),
                    unsupported: inst.unsupported.len(),
                    module: inst.module_kind,
                })
            })();
            (rel, res.unwrap_or_else(FileResult::Failed))
        })
        .collect();

    let mut helper_dirs = std::collections::BTreeSet::new();
    let (mut n_files, mut n_sites, mut n_unsupported, mut n_failed) = (0, 0, 0, 0);
    for (rel, r) in &results {
        match r {
            FileResult::Copied => {}
            FileResult::Instrumented {
                sites,
                unsupported,
                module,
            } => {
                n_files += 1;
                n_sites += sites;
                n_unsupported += unsupported;
                helper_dirs.insert((rel.parent().map(Path::to_path_buf).unwrap_or_default(), *module));
            }
            FileResult::Failed(msg) => {
                n_failed += 1;
                eprintln!("error: {msg}");
            }
        }
    }
    for (d, module) in &helper_dirs {
        let name = crate::transform::runtime_file_name(*module);
        let suite = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        write_text(&out.join(d).join(name), &runtime_source(dialect, *module, &suite))?;
    }
    println!("instrumented {n_sites} commands in {n_files} files; {n_unsupported} unsupported, {n_failed} failed");
    Ok(if n_failed > 0 {
        EXIT_DATA
    } else if n_unsupported > 0 {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    })
}

struct Analysis {
    name: String,
    stats: SuiteStats,
    cdf: Vec<(i64, f64)>,
    divergences: usize,
}

fn analyze_one(
    path: &Path,
    baseline: Option<&MutationLog>,
    bucket_ms: i64,
    bg: BackgroundConfig,
) -> Result<Analysis, Failure> {
    let log = read_log(path)?;
    let divergences = log
        .spans
        .iter()
        .filter(|s| replay_window(s).divergence_ms.is_some())
        .count();
    let pruned = prune_log(&log, baseline, &bg);
    let stats = compute_stats(&pruned.log).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let cdf = rt_cdf(&pruned.log, bucket_ms).map_err(|e| usage(e.to_string()))?;
    Ok(Analysis {
        name: path.display().to_string(),
        stats,
        cdf,
        divergences,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.1}"))
}

fn stats_table(results: &[Analysis]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<28} {:>9} {:>10} {:>12} {:>18} {:>13}",
        "suite", "commands", "mutations", "avg RT(ms)", "avg latest RT(ms)", "%flaky-prone"
    );
    for a in results {
        let _ = writeln!(
            s,
            "{:<28} {:>9} {:>10} {:>12} {:>18} {:>12.1}%",
            a.stats.suite,
            a.stats.commands,
            a.stats.mutations,
            fmt_opt(a.stats.avg_rt_ms),
            fmt_opt(a.stats.avg_latest_rt_ms),
            a.stats.pct_flaky_prone * 100.0
        );
    }
    s
}

fn csv_of<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
}

#[derive(serde::Serialize)]
struct StatsRow<'a> {
    log: &'a str,
    suite: &'a str,
    commands: usize,
    mutations: usize,
    avg_rt_ms: String,
    avg_latest_rt_ms: String,
    pct_flaky_prone: String,
    window_divergences: usize,
}

fn write_analysis(results: &[Analysis], out: &Path) -> Result<(), Failure> {
    let stats = csv_of(results.iter().map(|a| StatsRow {
        log: &a.name,
        suite: &a.stats.suite,
        commands: a.stats.commands,
        mutations: a.stats.mutations,
        avg_rt_ms: a.stats.avg_rt_ms.map_or(String::new(), |x| format!("{x:.3}")),
        avg_latest_rt_ms: a.stats.avg_latest_rt_ms.map_or(String::new(), |x| format!("{x:.3}")),
        pct_flaky_prone: format!("{:.4}", a.stats.pct_flaky_prone),
        window_divergences: a.divergences,
    }));
    let cdf = csv_of(results.iter().flat_map(|a| {
        a.cdf
            .iter()
            .map(move |(ub, p)| (a.name.as_str(), *ub, format!("{p:.6}")))
    }));
    let commands = csv_of(results.iter().flat_map(|a| {
        a.stats.per_command.iter().map(move |c| {
            (
                a.name.as_str(),
                c.cmd_id,
                c.name.as_str(),
                c.loc.as_str(),
                c.latest_rt_ms.map_or(String::new(), |x| x.to_string()),
                c.flaky_prone,
            )
        })
    }));
    write_text(&out.join("stats.csv"), &stats)?;
    write_text(&out.join("cdf.csv"), &format!("log,rt_upper_ms,cumulative\n{cdf}"))?;
    write_text(
        &out.join("commands.csv"),
        &format!("log,cmd_id,name,loc,latest_rt_ms,flaky_prone\n{commands}"),
    )
}

fn run_analysis(
    logs: &[PathBuf],
    baseline: Option<&Path>,
    bucket_ms: i64,
    bg: BackgroundConfig,
) -> Result<Vec<Analysis>, Failure> {
    if bucket_ms <= 0 {
        return Err(usage("--bucket-ms must be positive"));
    }
    let baseline = baseline.map(read_log).transpose()?;
    logs.par_iter()
        .map(|p| analyze_one(p, baseline.as_ref(), bucket_ms, bg))
        .collect()
}

fn analyze(
    logs: &[PathBuf],
    baseline: Option<&Path>,
    out: Option<&Path>,
    bucket_ms: i64,
    bg: BackgroundConfig,
) -> CliResult {
    let results = run_analysis(logs, baseline, bucket_ms, bg)?;
    print!("{}", stats_table(&results));
    for a in &results {
        let fp: Vec<String> = a
            .stats
            .per_command
            .iter()
            .filter(|c| c.flaky_prone)
            .map(|c| format!("{} ({})", c.loc, c.name))
            .collect();
        if !fp.is_empty() {
            println!("{}: flaky-prone: {}", a.stats.suite, fp.join(", "));
        }
    }
    if let Some(out) = out {
        write_analysis(&results, out)?;
    }
    Ok(EXIT_OK)
}

fn infer_dialect(source: &str) -> Dialect {
    if source.contains("cy.") {
        Dialect::Cypress
    } else {
        Dialect::SeleniumWebdriver
    }
}

#[allow(clippy::too_many_arguments)]
fn fix(
    file: &Path,
    log_path: &Path,
    out: Option<&Path>,
    dry_run: bool,
    framework: Option<Dialect>,
    baseline: Option<&Path>,
    oracle: OracleArgs,
    bg: BgArgs,
) -> CliResult {
    let source = read_text(file)?;
    let log = read_log(log_path)?;
    let dialect = framework.unwrap_or_else(|| infer_dialect(&source));
    let opts = FixOptions {
        oracle: OracleConfig {
            max_props: oracle.max_props as usize,
            poll_ms: oracle.poll_ms,
            timeout_ms: oracle.timeout_ms,
        },
        background: bg.config(),
        baseline: baseline.map(read_log).transpose()?,
    };
    let label = file.to_string_lossy().replace('\\', "/");
    let outcome = if dry_run {
        let outcome = plan_fixes(&label, &source, dialect, &log, &opts).map_err(|e| data(e.to_string()))?;
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for e in &outcome.entries {
            println!("{name}:{} → {}", e.site.line, e.snippet.text);
        }
        outcome
    } else {
        let (text, outcome) = fix_source(&label, &source, dialect, &log, &opts).map_err(|e| data(e.to_string()))?;
        write_text(out.expect("clap requires --out without --dry-run"), &text)?;
        outcome
    };
    for (cmd, why) in &outcome.skipped {
        log::info!("command {cmd}: skipped: {why}");
    }
    for u in &outcome.unsupported {
        log::warn!("{}:{}: `{}` in an unsupported position", label, u.line, u.name);
    }
    if !dry_run {
        println!("inserted {} waits", outcome.entries.len());
    }
    Ok(if outcome.unsupported.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    })
}

fn load_sim_config(config: Option<&Path>, seed: Option<u64>) -> Result<(SimConfig, u64), Failure> {
    let cfg = match config {
        Some(p) => SimConfig::from_toml(&read_text(p)?).map_err(|e| data(format!("{}: {e}", p.display())))?,
        None => SimConfig::default(),
    };
    let seed = seed.or(cfg.seed).unwrap_or(0);
    Ok((cfg, seed))
}

fn run_sim(cfg: &SimConfig, seed: u64) -> Result<(SimReport, crate::sim::CorpusSummary), Failure> {
    let corpus = gen_corpus(&cfg.corpus, cfg.tests, seed).map_err(|e| data(e.to_string()))?;
    let report = evaluate(&corpus.suite, &cfg.strategies, cfg.reruns, seed).map_err(|e| data(e.to_string()))?;
    Ok((report, corpus.summary))
}

fn simulate(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> CliResult {
    let (cfg, seed) = load_sim_config(config, seed)?;
    let (report, summary) = run_sim(&cfg, seed)?;
    println!("delay p95 {:.0} ms over 10000 draws", summary.delay_p95_ms);
    print!("{}", report_table(&report));
    if let Some(out) = out {
        write_text(&out.join("sim.csv"), &report_csv(&report))?;
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_text(&out.join("corpus.json"), &format!("{json}\n"))?;
    }
    Ok(EXIT_OK)
}

fn report(
    logs: &[PathBuf],
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
    bg: BackgroundConfig,
) -> CliResult {
    let results = run_analysis(logs, None, 100, bg)?;
    let (cfg, seed) = load_sim_config(config, seed)?;
    let (sim, _) = run_sim(&cfg, seed)?;
    let mut text = String::from("## Recorded suites\n\n");
    text.push_str(&stats_table(&results));
    text.push_str("\n## Wait strategies (simulated)\n\n");
    text.push_str(&report_table(&sim));
    print!("{text}");
    if let Some(out) = out {
        write_analysis(&results, out)?;
        write_text(&out.join("sim.csv"), &report_csv(&sim))?;
        write_text(&out.join("summary.txt"), &text)?;
    }
    Ok(EXIT_OK)
}

fn strip(file: &Path, out: Option<&Path>) -> CliResult {
    let text = read_text(file)?;
    let stripped = strip_hooks(&text).map_err(|e| data(format!("{}: {e}", file.display())))?;
    match out {
        Some(p) => write_text(p, &stripped)?,
        None => print!("{stripped}"),
    }
    Ok(EXIT_OK)
}
