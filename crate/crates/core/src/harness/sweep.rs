use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{create_dir, play, summarize, write_file, RunSummary, Scenario};
use crate::error::{Error, Result};
use crate::learners::Mode;

/// Seed means at one `(T, b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub b: f64,
    pub seeds: usize,
    pub mean_regret: f64,
    pub mean_violations: f64,
    pub mean_error: f64,
    pub mean_comparator_error: f64,
}

/// Log-log slopes across `T` at one `b`; absent when undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub b: f64,
    pub regret_slope: Option<f64>,
    pub violation_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub mode: Mode,
    pub points: Vec<SweepPoint>,
    pub slopes: Vec<SlopeFit>,
}

impl SweepTable {
    pub fn point(&self, horizon: usize, b: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.horizon == horizon && p.b == b)
    }

    pub fn slope(&self, b: f64) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.b == b)
    }

    /// Whitespace-separated columns for plotting tools.
    pub fn to_dat(&self) -> String {
        let mut out = String::from("# T b mean_regret mean_violations mean_error mean_comparator_error\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                p.horizon, p.b, p.mean_regret, p.mean_violations, p.mean_error, p.mean_comparator_error
            );
        }
        out
    }
}

/// Least-squares slope of `ln y` against `ln x`. `None` with fewer than two
/// distinct `x` or any nonpositive value.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Comparator totals keyed by `(seed, T)`. Only valid while the stream,
/// family and `α − ε` stay fixed.
#[derive(Clone, Debug, Default)]
pub struct ComparatorCache {
    totals: HashMap<(u64, usize), f64>,
}

impl ComparatorCache {
    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }
}

pub fn sweep(base: &RunConfig, horizons: &[usize], seeds: &[u64], bs: &[f64]) -> Result<SweepTable> {
    sweep_cached(base, horizons, seeds, bs, &mut ComparatorCache::default(), |_| {})
}

/// Runs every `(T, seed, b)` combination, reusing one stream and comparator
/// per `(seed, T)`. `on_run` sees each finished run.
pub fn sweep_cached(
    base: &RunConfig,
    horizons: &[usize],
    seeds: &[u64],
    bs: &[f64],
    cache: &mut ComparatorCache,
    mut on_run: impl FnMut(&RunSummary),
) -> Result<SweepTable> {
    if horizons.is_empty() || seeds.is_empty() || bs.is_empty() {
        return Err(Error::Config("sweep needs at least one T, one seed and one b".into()));
    }
    let mut sums: HashMap<(usize, usize), [f64; 4]> = HashMap::new();
    for &horizon in horizons {
        for &seed in seeds {
            let mut start = Instant::now();
            let mut config = RunConfig { horizon, seed, ..base.clone() };
            let scenario = Scenario::new(&config)?;
            let comparator_error = match cache.totals.get(&(seed, horizon)) {
                Some(v) => *v,
                None => {
                    let v = scenario.comparator(config.comparator_alpha())?.total_error;
                    cache.totals.insert((seed, horizon), v);
                    v
                }
            };
            for (bi, &b) in bs.iter().enumerate() {
                config.b = b;
                let rows = play(&config, &scenario)?;
                let last = rows.last().copied();
                let cum_error = last.map_or(0, |r| r.cum_error) as f64;
                let violations = last.map_or(0, |r| r.cum_violations) as f64;
                let acc = sums.entry((horizon, bi)).or_insert([0.0; 4]);
                acc[0] += cum_error - comparator_error;
                acc[1] += violations;
                acc[2] += cum_error;
                acc[3] += comparator_error;
                on_run(&summarize(&config, &scenario, &rows, comparator_error, start.elapsed().as_secs_f64()));
                start = Instant::now();
            }
        }
    }
    let n = seeds.len() as f64;
    let mut points = Vec::new();
    for &horizon in horizons {
        for (bi, &b) in bs.iter().enumerate() {
            let s = sums[&(horizon, bi)];
            points.push(SweepPoint {
                horizon,
                b,
                seeds: seeds.len(),
                mean_regret: s[0] / n,
                mean_violations: s[1] / n,
                mean_error: s[2] / n,
                mean_comparator_error: s[3] / n,
            });
        }
    }
    let slopes = bs
        .iter()
        .map(|&b| {
            let at_b: Vec<&SweepPoint> = points.iter().filter(|p| p.b == b).collect();
            let xs: Vec<f64> = at_b.iter().map(|p| p.horizon as f64).collect();
            let regret: Vec<f64> = at_b.iter().map(|p| p.mean_regret).collect();
            let violations: Vec<f64> = at_b.iter().map(|p| p.mean_violations).collect();
            SlopeFit { b, regret_slope: loglog_slope(&xs, &regret), violation_slope: loglog_slope(&xs, &violations) }
        })
        .collect();
    Ok(SweepTable { mode: base.mode, points, slopes })
}

/// Writes `sweep.json` and `frontier.dat`.
pub fn write_sweep(table: &SweepTable, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    write_file(&out_dir.join("sweep.json"), &serde_json::to_string_pretty(table)?)?;
    write_file(&out_dir.join("frontier.dat"), &table.to_dat())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [1000.0, 4000.0, 16000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.75)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn undefined_slopes() {
        assert_eq!(loglog_slope(&[1000.0], &[5.0]), None);
        assert_eq!(loglog_slope(&[1000.0, 1000.0], &[5.0, 6.0]), None);
        assert_eq!(loglog_slope(&[10.0, 100.0], &[-1.0, 6.0]), None);
    }
}
