//! Simulation config and report rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::run::SimReport;
use super::{CorpusSpec, SimError, Strategy};

fn default_tests() -> usize {
    1000
}
fn default_reruns() -> u32 {
    10
}

/// Contents of a `simulate --config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_tests")]
    pub tests: usize,
    #[serde(default = "default_reruns")]
    pub reruns: u32,
    #[serde(default)]
    pub corpus: CorpusSpec,
    #[serde(default = "Strategy::ladder", rename = "strategy")]
    pub strategies: Vec<Strategy>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: None,
            tests: default_tests(),
            reruns: default_reruns(),
            corpus: CorpusSpec::default(),
            strategies: Strategy::ladder(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        if cfg.reruns == 0 {
            return Err(SimError::NoReruns.to_string());
        }
        cfg.corpus.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

/// Human-readable summary: one row per strategy.
pub fn report_table(r: &SimReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "seed {}  tests {}  commands {}  reruns {}  c-flaky {}",
        r.seed, r.tests, r.commands, r.reruns, r.c_flaky
    );
    let _ = writeln!(
        s,
        "baseline {:.1} s per run  recording {:.1} s ({:.2}x)",
        r.baseline_time_ms as f64 / 1000.0 / f64::from(r.reruns),
        r.recording_time_ms as f64 / 1000.0,
        r.recording_overhead
    );
    let _ = writeln!(
        s,
        "{:<32} {:>9} {:>8} {:>9} {:>12} {:>9}",
        "strategy", "overhead", "#fixed", "fix rate", "time/run s", "timeouts"
    );
    for st in &r.strategies {
        let _ = writeln!(
            s,
            "{:<32} {:>8.2}x {:>8} {:>9.3} {:>12.1} {:>9}",
            st.label,
            st.overhead,
            format!("{}/{}", st.fixed, r.c_flaky),
            st.fix_rate,
            st.total_time_ms as f64 / 1000.0 / f64::from(r.reruns),
            st.timeouts
        );
    }
    s
}

#[derive(Serialize)]
struct CsvRow<'a> {
    strategy: &'a str,
    overhead: String,
    fixed: usize,
    c_flaky: usize,
    fix_rate: String,
    total_time_ms: i64,
    baseline_time_ms: i64,
    timeouts: u64,
}

pub fn report_csv(r: &SimReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for st in &r.strategies {
        w.serialize(CsvRow {
            strategy: &st.label,
            overhead: format!("{:.4}", st.overhead),
            fixed: st.fixed,
            c_flaky: r.c_flaky,
            fix_rate: format!("{:.4}", st.fix_rate),
            total_time_ms: st.total_time_ms,
            baseline_time_ms: r.baseline_time_ms,
            timeouts: st.timeouts,
        })
        .expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg = SimConfig::from_toml(
            r#"
seed = 4
tests = 20
[corpus]
jitter = 0.1
[[strategy]]
kind = "none"
[[strategy]]
kind = "implicit"
wait_ms = 500
[[strategy]]
kind = "explicit_oracle"
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.reruns, 10);
        assert_eq!(cfg.corpus.jitter, 0.1);
        assert_eq!(cfg.strategies[2], Strategy::explicit());
        assert_eq!(SimConfig::from_toml("").unwrap(), SimConfig::default());
        assert!(SimConfig::from_toml("reruns = 0").is_err());
        assert!(SimConfig::from_toml("bogus = 1").is_err());
    }
}
