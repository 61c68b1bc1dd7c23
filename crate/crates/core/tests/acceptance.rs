//! Acceptance criteria 1–9, one PASS/FAIL line each.
//!
//! `ACCEPTANCE_ONLY=1,3,9` restricts the run to the listed criteria.
//! Failing criteria are reported but do not fail the process unless
//! `ACCEPTANCE_STRICT=1` is set.

use std::path::Path;
use std::time::Instant;

use fairstream::auditing::{enumerate_monotone, random_monotone};
use fairstream::harness::verify::{
    containment, geometric_mean, measure_concentration, monotonicity_classification, oracle_accounting,
    pivot_equivalence, pivot_figure_fixture, proxy_dominance, small_config, Check,
};
use fairstream::harness::{run, sweep_cached, ComparatorCache, RunConfig, SweepTable};
use fairstream::learners::Mode;
use fairstream::rng::substream;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const HORIZONS: [usize; 3] = [1000, 4000, 16000];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn describe(c: &Check) -> String {
    let mut s = format!("{}: {}/{} ok", c.name, c.trials - c.failures, c.trials);
    if let Some(note) = &c.note {
        s += &format!(" ({note})");
    }
    if let Some(ce) = &c.counterexample {
        s += &format!(" first failure {ce}");
    }
    s
}

fn benchmark(mode: Mode) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json");
    RunConfig { mode, ..RunConfig::load(&path).expect("benchmark config") }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = substream(2024, "acceptance-pivot");
    let arity3 = enumerate_monotone(3);
    let wide: Vec<_> = (0..50).map(|i| random_monotone(4 + i % 2, &mut rng)).collect();
    let a = pivot_equivalence("arity 3, all 20", &arity3, 40, &mut rng).unwrap();
    let b = pivot_equivalence("arity 4-5, 50 random", &wide, 40, &mut rng).unwrap();
    let fig = pivot_figure_fixture().unwrap();
    let nonconstant: Vec<_> = arity3.iter().filter(|f| !f.table().iter().all(|v| *v)).cloned().collect();
    let without_one = pivot_equivalence("arity 3 without f≡1", &nonconstant, 40, &mut rng).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let cases = a.trials + b.trials;
    let passed = a.passed && b.passed && fig.passed && cases >= 1_000_000 && secs < 30.0;
    verdict(
        passed,
        format!(
            "{cases} cases in {secs:.1}s; {}; {}; {}; control {}",
            describe(&a),
            describe(&b),
            describe(&fig),
            describe(&without_one)
        ),
    )
}

fn criterion_2() -> Verdict {
    let c = monotonicity_classification().unwrap();
    verdict(c.passed, describe(&c))
}

fn criterion_3() -> Verdict {
    let mut rng = substream(2024, "acceptance-lemmas");
    let dominance = proxy_dominance(100_000, &mut rng).unwrap();
    let base = RunConfig { horizon: 60, ..small_config(Mode::Full) };
    let seeds: Vec<u64> = SEEDS.collect();
    let contained = containment(&base, &seeds, 50, 1e-9, &mut rng).unwrap();
    let passed = dominance.passed && dominance.trials == 100_000 && contained.passed && contained.trials == 1000;
    verdict(passed, format!("{}; {}", describe(&dominance), describe(&contained)))
}

fn criterion_4() -> Verdict {
    let base = RunConfig { horizon: 4, ..small_config(Mode::Full) };
    let seeds: Vec<u64> = (1..=200).collect();
    let c = measure_concentration(&base, &seeds, 1_000_000).unwrap();
    verdict(
        c.bad_fraction() <= c.delta,
        format!(
            "{} of {} estimates off by more than eps/8 (fraction {:.5}, delta {})",
            c.bad,
            c.checked,
            c.bad_fraction(),
            c.delta
        ),
    )
}

fn criterion_5() -> Verdict {
    let mut lines = Vec::new();
    let mut passed = true;
    for mode in [Mode::Full, Mode::Partial] {
        let cfg = RunConfig { horizon: 200, ..benchmark(mode) };
        let check = oracle_accounting(&cfg, &[1, 2, 3]).unwrap();
        let (_, hyper) = cfg.validate().unwrap();
        let k = cfg.stream.k as u64;
        let cap = hyper.draws as u64 + 1 + k * u64::from(hyper.max_draws.unwrap_or(0));
        passed &= check.passed;
        lines.push(format!("{} (R+1 = {}, per-round cap {cap})", describe(&check), hyper.draws + 1));
    }
    verdict(passed, lines.join("; "))
}

fn criterion_6() -> Verdict {
    let (_, hyper) = RunConfig { horizon: 1000, ..benchmark(Mode::Partial) }.validate().unwrap();
    let m = hyper.max_draws.unwrap();
    let mut rng = substream(2024, "acceptance-geometric");
    let c = geometric_mean(&[0.2, 0.5, 0.8], m, 100_000, 0.01, &mut rng);
    verdict(c.passed, format!("M = {m}; {}", describe(&c)))
}

fn run_sweep(mode: Mode, bs: &[f64], cache: &mut ComparatorCache) -> SweepTable {
    let seeds: Vec<u64> = SEEDS.collect();
    let start = Instant::now();
    sweep_cached(&benchmark(mode), &HORIZONS, &seeds, bs, cache, |s| {
        eprintln!(
            "  [{:>6.0}s] {:?} T={} seed={} b={} error={} comparator={:.1} regret={:.1} violations={} ({:.1}s)",
            start.elapsed().as_secs_f64(),
            s.mode,
            s.horizon,
            s.seed,
            s.b,
            s.cum_error,
            s.comparator_error,
            s.regret,
            s.violations,
            s.wall_time_secs
        )
    })
    .unwrap()
}

/// Violation slopes are undefined when every seed mean is zero; a count
/// that stays at zero is read as meeting any slope bound.
fn slope_ok(table: &SweepTable, b: f64, regret_max: f64, violations_max: f64) -> (bool, String) {
    let fit = table.slope(b).unwrap();
    let zero_violations = table.points.iter().filter(|p| p.b == b).all(|p| p.mean_violations == 0.0);
    let regret_ok = fit.regret_slope.is_some_and(|s| s <= regret_max);
    let violations_ok = match fit.violation_slope {
        Some(s) => s <= violations_max,
        None => zero_violations,
    };
    let fmt = |s: Option<f64>| s.map_or("undefined".to_owned(), |v| format!("{v:.3}"));
    let means: Vec<String> = table
        .points
        .iter()
        .filter(|p| p.b == b)
        .map(|p| format!("T={}: regret {:.1}, violations {:.2}", p.horizon, p.mean_regret, p.mean_violations))
        .collect();
    (
        regret_ok && violations_ok,
        format!(
            "{:?} regret slope {} (max {regret_max}), violation slope {} (max {violations_max}{}) [{}]",
            table.mode,
            fmt(fit.regret_slope),
            fmt(fit.violation_slope),
            if zero_violations { ", all zero" } else { "" },
            means.join("; ")
        ),
    )
}

fn criteria_7_8() -> (Verdict, Verdict) {
    let start = Instant::now();
    let mut cache = ComparatorCache::default();
    eprintln!("criterion 7/8: full-information sweep");
    let full = run_sweep(Mode::Full, &[0.0, 0.125], &mut cache);
    eprintln!("criterion 7: one-sided feedback sweep");
    let partial = run_sweep(Mode::Partial, &[0.0], &mut cache);
    let secs = start.elapsed().as_secs_f64();
    let (full_ok, full_text) = slope_ok(&full, 0.0, 0.85, 0.90);
    let (partial_ok, partial_text) = slope_ok(&partial, 0.0, 0.92, 0.95);
    let seven = verdict(
        full_ok && partial_ok && secs <= 7200.0,
        format!("{full_text}; {partial_text}; sweeps took {secs:.0}s"),
    );
    let (base, wide) = (full.point(16000, 0.0).unwrap(), full.point(16000, 0.125).unwrap());
    let eight = verdict(
        wide.mean_regret > base.mean_regret && wide.mean_violations < base.mean_violations,
        format!(
            "T=16000: b=0 regret {:.1}, violations {:.2}; b=1/8 regret {:.1}, violations {:.2}",
            base.mean_regret, base.mean_violations, wide.mean_regret, wide.mean_violations
        ),
    );
    (seven, eight)
}

fn criterion_9() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut passed = true;
    for mode in [Mode::Full, Mode::Partial] {
        let cfg = RunConfig { horizon: 300, ..benchmark(mode) };
        let read = |name: &str| {
            let dir = tmp.path().join(name);
            run(&cfg, &dir).unwrap();
            std::fs::read(dir.join("metrics.csv")).unwrap()
        };
        let (a, b) = (read(&format!("{mode:?}-a")), read(&format!("{mode:?}-b")));
        passed &= a == b;
        details.push(format!("{mode:?}: {} bytes, identical {}", a.len(), a == b));
    }
    verdict(passed, details.join("; "))
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let names = [
        "pivot characterization",
        "monotonicity detector",
        "lemma inequality suites",
        "approximation concentration",
        "oracle-call accounting",
        "geometric-resampling mean",
        "sublinearity trends",
        "frontier ordering",
        "determinism",
    ];
    let mut results: Vec<(u32, Verdict)> = Vec::new();
    let report = |n: u32, v: Verdict, results: &mut Vec<(u32, Verdict)>| {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n} ({}): {}", names[n as usize - 1], v.detail);
        results.push((n, v));
    };
    let single: [(u32, fn() -> Verdict); 6] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5), (6, criterion_6)];
    for (n, f) in single {
        if wanted(n) {
            report(n, f(), &mut results);
        }
    }
    if wanted(7) || wanted(8) {
        let (seven, eight) = criteria_7_8();
        if wanted(7) {
            report(7, seven, &mut results);
        }
        if wanted(8) {
            report(8, eight, &mut results);
        }
    }
    if wanted(9) {
        report(9, criterion_9(), &mut results);
    }
    let failed: Vec<u32> = results.iter().filter(|(_, v)| !v.passed).map(|(n, _)| *n).collect();
    println!("acceptance: {} of {} criteria passed; failed: {:?}", results.len() - failed.len(), results.len(), failed);
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
