use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::environment::{best_fair_in_hindsight, ComparatorResult, LabelCurtain, RealizedRound, Stream};
use crate::error::{Error, Result};
use crate::hypothesis::HypothesisFamily;
use crate::learners::{Learner, Mode, RoundLog};

pub const CSV_HEADER: &str = "t,cum_error,cum_violations,lambda,oracle_calls,cum_oracle_calls";
pub const OUT_ENV: &str = "FAIRSTREAM_OUT";
const DEFAULT_OUT: &str = "fairstream-out";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: usize,
    pub cum_error: u64,
    pub cum_violations: u64,
    /// `λ` after the round's update.
    pub lambda: f64,
    pub oracle_calls: u64,
    pub cum_oracle_calls: u64,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t, r.cum_error, r.cum_violations, r.lambda, r.oracle_calls, r.cum_oracle_calls
        );
    }
    out
}

/// The family and the fully realized input sequence of one `(config, seed)`.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub family: HypothesisFamily,
    pub rounds: Vec<RealizedRound>,
}

impl Scenario {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let (family, _) = config.validate()?;
        let stream = Stream::new(config.stream.clone(), config.seed, config.horizon)?;
        Ok(Self { family, rounds: stream.rounds().collect() })
    }

    pub fn comparator(&self, alpha_c: f64) -> Result<ComparatorResult> {
        best_fair_in_hindsight(&self.rounds, &self.family, alpha_c)
    }
}

/// Plays the learner over a scenario, calling `observe` after every round.
pub fn play_with<'s>(
    config: &RunConfig,
    scenario: &'s Scenario,
    mut observe: impl FnMut(&Learner<'s>, &RealizedRound, &RoundLog),
) -> Result<Vec<MetricsRow>> {
    let (_, hyper) = config.validate()?;
    let mut learner = Learner::new(&scenario.family, hyper, config.seed)?;
    let mut rows = Vec::with_capacity(scenario.rounds.len());
    let (mut cum_error, mut cum_violations) = (0u64, 0u64);
    for round in &scenario.rounds {
        let log = match config.mode {
            Mode::Full => learner.full_info_round(&round.individuals, &round.labels, &round.scheme)?,
            Mode::Partial => {
                let mut curtain = LabelCurtain::new(round.labels.clone());
                learner.partial_info_round(&round.individuals, &mut curtain, &round.scheme)?
            }
        };
        cum_error += log.realized_error as u64;
        cum_violations += u64::from(!log.report.is_null());
        rows.push(MetricsRow {
            t: log.t,
            cum_error,
            cum_violations,
            lambda: log.lambda_after,
            oracle_calls: log.oracle_calls,
            cum_oracle_calls: learner.state().cum_oracle_calls,
        });
        observe(&learner, round, &log);
    }
    Ok(rows)
}

pub fn play(config: &RunConfig, scenario: &Scenario) -> Result<Vec<MetricsRow>> {
    play_with(config, scenario, |_, _, _| {})
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub b: f64,
    pub cum_error: u64,
    pub violations: u64,
    pub comparator_error: f64,
    /// `cum_error − comparator_error`.
    pub regret: f64,
    pub cum_oracle_calls: u64,
    pub separator_size: usize,
    pub family_size: usize,
    pub wall_time_secs: f64,
}

pub fn summarize(
    config: &RunConfig,
    scenario: &Scenario,
    rows: &[MetricsRow],
    comparator_error: f64,
    wall_time_secs: f64,
) -> RunSummary {
    let last = rows.last().copied().unwrap_or(MetricsRow {
        t: 0,
        cum_error: 0,
        cum_violations: 0,
        lambda: 0.0,
        oracle_calls: 0,
        cum_oracle_calls: 0,
    });
    RunSummary {
        mode: config.mode,
        horizon: config.horizon,
        seed: config.seed,
        b: config.b,
        cum_error: last.cum_error,
        violations: last.cum_violations,
        comparator_error,
        regret: last.cum_error as f64 - comparator_error,
        cum_oracle_calls: last.cum_oracle_calls,
        separator_size: scenario.family.separator_size(),
        family_size: scenario.family.len(),
        wall_time_secs,
    }
}

/// `--out` beats `FAIRSTREAM_OUT`, which beats the config's `out_dir`.
pub fn resolve_out_dir(cli: Option<&Path>, config: &RunConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs one experiment and writes `metrics.csv`, `summary.json`,
/// `comparator.json` and `config.json` into `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let start = Instant::now();
    let scenario = Scenario::new(config)?;
    let rows = play(config, &scenario)?;
    let comparator = scenario.comparator(config.comparator_alpha())?;
    let summary = summarize(config, &scenario, &rows, comparator.total_error, start.elapsed().as_secs_f64());
    create_dir(out_dir)?;
    write_file(&out_dir.join("metrics.csv"), &metrics_csv(&rows))?;
    write_file(&out_dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    write_file(&out_dir.join("comparator.json"), &serde_json::to_string_pretty(&comparator)?)?;
    write_file(&out_dir.join("config.json"), &serde_json::to_string_pretty(config)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formats_floats_with_display() {
        let rows =
            [MetricsRow { t: 1, cum_error: 2, cum_violations: 0, lambda: 0.1, oracle_calls: 5, cum_oracle_calls: 5 }];
        assert_eq!(metrics_csv(&rows), format!("{CSV_HEADER}\n1,2,0,0.1,5,5\n"));
        assert_eq!(metrics_csv(&[]), format!("{CSV_HEADER}\n"));
    }
}
