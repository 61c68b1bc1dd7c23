//! Randomized invariant suites behind `fairstream verify`.
//!
//! Every check counts trials and failures and keeps the first
//! counterexample as JSON so it can be replayed by hand.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::RunConfig;
use super::run::{play_with, Scenario};
use crate::auditing::{
    enumerate_monotone, is_monotone, random_monotone, AggregationFunction, AggregationRule, AuditingScheme, Auditor,
    Distance, ViolationReport,
};
use crate::environment::{containment_check, FairnessLp};
use crate::error::{Error, Result};
use crate::ftpl::{truncated_geometric, truncated_geometric_mean, ContextFtpl, PerturbationConfig};
use crate::hypothesis::{erm_oracle, HypothesisFamily, Individual, OracleCounter, Rule};
use crate::learners::{Learner, Mode};
use crate::losses::{proxy_dominates_unfair, LagrangianRound, ProxyContext};
use crate::rng::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Auditing,
    Lemmas,
    Ftpl,
    Comparator,
    Accounting,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [Suite::Auditing, Suite::Lemmas, Suite::Ftpl, Suite::Comparator, Suite::Accounting];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Auditing => "auditing",
            Suite::Lemmas => "lemmas",
            Suite::Ftpl => "ftpl",
            Suite::Comparator => "comparator",
            Suite::Accounting => "accounting",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub trials: u64,
    pub failures: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// First failing case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Value>,
}

impl Check {
    fn new(name: &str) -> Self {
        Self { name: name.into(), passed: true, trials: 0, failures: 0, note: None, counterexample: None }
    }

    fn record(&mut self, ok: bool, case: impl FnOnce() -> Value) {
        self.trials += 1;
        if !ok {
            self.failures += 1;
            self.passed = false;
            if self.counterexample.is_none() {
                self.counterexample = Some(case());
            }
        }
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        Self { suite, passed: checks.iter().all(|c| c.passed), checks }
    }
}

/// Runs one suite (or all of them) at default sizes.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<SuiteReport>> {
    if suite == Suite::All {
        return Suite::EACH.into_iter().map(|s| run_one(s, seed)).collect();
    }
    Ok(vec![run_one(suite, seed)?])
}

fn run_one(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let mut rng = substream(seed, suite.name());
    let checks = match suite {
        Suite::Auditing => {
            let arity3 = enumerate_monotone(3);
            let wide: Vec<_> = (0..10).map(|i| random_monotone(4 + i % 2, &mut rng)).collect();
            vec![
                pivot_equivalence("pivot_equivalence_arity3", &arity3, 10, &mut rng)?,
                pivot_equivalence("pivot_equivalence_arity4_5", &wide, 10, &mut rng)?,
                pivot_figure_fixture()?,
                monotonicity_classification()?,
            ]
        }
        Suite::Lemmas => {
            let base = small_config(Mode::Full);
            vec![proxy_dominance(10_000, &mut rng)?, containment(&base, &[seed, seed + 1], 50, 1e-9, &mut rng)?]
        }
        Suite::Ftpl => vec![
            leader_cross_check(200, &mut rng)?,
            geometric_mean(&[0.2, 0.5, 0.8], 118, 100_000, 0.01, &mut rng),
            concentration(&small_config(Mode::Full), &[seed], 100_000)?,
        ],
        Suite::Comparator => vec![comparator_grid(10, 50, &mut rng)?],
        Suite::Accounting => {
            vec![
                oracle_accounting(&small_config(Mode::Full), &[seed])?,
                oracle_accounting(&small_config(Mode::Partial), &[seed])?,
            ]
        }
        Suite::All => unreachable!("expanded by run_suite"),
    };
    Ok(SuiteReport::new(suite, checks))
}

/// A deliberately small experiment used by the default suites.
pub fn small_config(mode: Mode) -> RunConfig {
    let text = r#"{
        "mode": "full", "T": 30, "alpha": 0.3, "epsilon": 0.3, "delta": 0.05, "seed": 0,
        "family": {
            "thresholds": [{"coord": 0, "cutoffs": [-1.0, -0.5, 0.0, 0.5, 1.0], "positive": true}],
            "pool": {"kind": "grid", "dim": 1, "lo": -1.5, "hi": 1.5, "per_axis": 13}
        },
        "stream": {
            "k": 2,
            "features": {"kind": "iid_gaussian", "dim": 1},
            "labels": {"kind": "noisy_threshold", "coord": 0, "cutoff": 0.0, "flip": 0.1},
            "schemes": [{
                "panel": [
                    {"kind": "l1", "weights": [0.05]},
                    {"kind": "l1", "weights": [0.2]},
                    {"kind": "constant", "value": 0.05}
                ],
                "aggregation": {"kind": "majority"}
            }]
        }
    }"#;
    let config: RunConfig = serde_json::from_str(text).expect("built-in config parses");
    RunConfig { mode, ..config }
}

fn constant_panel(distances: &[f64]) -> Result<Vec<Auditor>> {
    distances.iter().map(|&value| Auditor::new(Distance::Constant { value })).collect()
}

/// Random distances in `[0, 1]`; a third of the panels are drawn on a
/// coarse grid so that ties occur.
fn random_distances<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    let coarse = rng.random_range(0..3) == 0;
    (0..m).map(|_| if coarse { f64::from(rng.random_range(0..=4u8)) / 4.0 } else { rng.random::<f64>() }).collect()
}

pub const PIVOT_ALPHAS: [f64; 4] = [0.0, 0.05, 0.1, 0.3];

/// Aggregate decision versus pivot decision on random constant-distance
/// panels, over prediction gaps on a 0.02 grid plus every `d_j + α`
/// boundary, for each `α` in [`PIVOT_ALPHAS`].
pub fn pivot_equivalence<R: Rng + ?Sized>(
    name: &str,
    functions: &[AggregationFunction],
    panels_per_function: usize,
    rng: &mut R,
) -> Result<Check> {
    let mut check = Check::new(name);
    let (a, b) = (Individual::new(vec![0.0])?, Individual::new(vec![1.0])?);
    let mut bad_tables: Vec<Vec<bool>> = Vec::new();
    for f in functions {
        let m = f.arity();
        for _ in 0..panels_per_function {
            let distances = random_distances(m, rng);
            let scheme = AuditingScheme::new(constant_panel(&distances)?, f.clone())?;
            let pivot = scheme.pivot(&a, &b)?;
            for alpha in PIVOT_ALPHAS {
                let grid = (0..=100).map(|i| f64::from(i) * 0.02 - 1.0);
                let edges = distances.iter().flat_map(|d| [d + alpha, (d + alpha).next_up()]);
                for gap in grid.chain(edges).filter(|g| g.abs() <= 1.0) {
                    let aggregate = scheme.decide(&a, &b, gap, alpha);
                    let single = pivot.objects(gap, alpha);
                    if aggregate != single && !bad_tables.contains(&f.table().to_vec()) {
                        bad_tables.push(f.table().to_vec());
                    }
                    check.record(aggregate == single, || {
                        json!({
                            "table": f.table(), "distances": distances, "gap": gap, "alpha": alpha,
                            "aggregate": aggregate, "pivot_position": pivot.position, "pivot_distance": pivot.distance,
                        })
                    });
                }
            }
        }
    }
    let note = if bad_tables.is_empty() {
        format!("{} functions", functions.len())
    } else {
        format!("{} functions; failing truth tables: {:?}", functions.len(), bad_tables)
    };
    Ok(check.with_note(note))
}

/// Five auditors with `d² < d³ < d⁵ < d¹ < d⁴`: "j³ or at least 4 of 5"
/// pivots on j³, "j¹ and j⁵" pivots on j¹.
pub fn pivot_figure_fixture() -> Result<Check> {
    let mut check = Check::new("pivot_figure_fixture");
    let distances = [0.6, 0.1, 0.2, 0.8, 0.4];
    let (a, b) = (Individual::new(vec![0.0])?, Individual::new(vec![1.0])?);
    let rules = [
        (AggregationRule::Veto { vetoers: vec![2], theta: Some(0.8) }, 2),
        (AggregationRule::Conjunction { members: vec![0, 4] }, 0),
    ];
    for (rule, expected) in rules {
        let scheme = AuditingScheme::new(constant_panel(&distances)?, AggregationFunction::monotone(5, &rule)?)?;
        let pivot = scheme.pivot(&a, &b)?;
        check.record(pivot.auditor == Some(expected), || json!({ "rule": rule, "pivot": pivot.auditor }));
    }
    Ok(check)
}

/// Majority, veto, AND and OR are monotone; exactly-one and XOR are not.
pub fn monotonicity_classification() -> Result<Check> {
    let mut check = Check::new("monotonicity_classification");
    for m in 1..=6usize {
        let all: Vec<usize> = (0..m).collect();
        let mut cases = vec![
            (AggregationRule::Majority { theta: 0.5 }, true),
            (AggregationRule::Majority { theta: 1.0 }, true),
            (AggregationRule::Veto { vetoers: vec![0], theta: Some(0.8) }, true),
            (AggregationRule::Veto { vetoers: vec![m - 1], theta: None }, true),
            (AggregationRule::Conjunction { members: all.clone() }, true),
            (AggregationRule::Disjunction { members: all }, true),
        ];
        if m >= 2 {
            let size = 1usize << m;
            let exactly_one = (0..size).map(|z| z.count_ones() == 1).collect();
            let xor = (0..size).map(|z| z.count_ones() % 2 == 1).collect();
            cases.push((AggregationRule::TruthTable { table: exactly_one }, false));
            cases.push((AggregationRule::TruthTable { table: xor }, false));
        }
        for (rule, expected) in cases {
            let got = is_monotone(&AggregationFunction::new(m, &rule)?);
            check.record(got == expected, || json!({ "arity": m, "rule": rule, "classified_monotone": got }));
        }
    }
    Ok(check)
}

/// `Unfair_α(π) ≤ (2/ε′)·UnfairProxy(π, π̃, α − ε′, ε′)` on random monotone
/// schemes with `|π − π̃| ≤ ε′/4`.
pub fn proxy_dominance<R: Rng + ?Sized>(trials: u64, rng: &mut R) -> Result<Check> {
    let mut check = Check::new("proxy_dominance");
    let mut unfair_cases = 0u64;
    for _ in 0..trials {
        let k = rng.random_range(2..=6usize);
        let dim = rng.random_range(1..=2usize);
        let individuals: Vec<Individual> = (0..k)
            .map(|_| Individual::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect::<Result<_>>()?;
        let m = rng.random_range(1..=5usize);
        let panel: Vec<Auditor> = (0..m)
            .map(|_| Auditor::l1((0..dim).map(|_| rng.random_range(0.0..1.0)).collect()))
            .collect::<Result<_>>()?;
        let scheme = AuditingScheme::new(panel, random_monotone(m, rng))?;
        let eps_prime = rng.random_range(0.01..=0.5);
        let alpha = rng.random_range(0.0..=1.0);
        let tilde: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let reach = 0.999_999 * eps_prime / 4.0;
        let pi: Vec<f64> = tilde
            .iter()
            .map(|t| {
                let shift = if rng.random_bool(0.5) {
                    reach * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
                } else {
                    rng.random_range(-reach..=reach)
                };
                (t + shift).clamp(0.0, 1.0)
            })
            .collect();
        let witness = proxy_dominates_unfair(&scheme, &individuals, &pi, &tilde, alpha, eps_prime)?;
        unfair_cases += u64::from(witness.unfair);
        check.record(witness.holds(), || {
            json!({
                "individuals": individuals, "table": scheme.aggregation().table(), "pi": pi, "tilde": tilde,
                "alpha": alpha, "eps_prime": eps_prime, "unfair": witness.unfair, "bound": witness.bound,
            })
        });
    }
    Ok(check.with_note(format!("{unfair_cases} instances with an actual violation")))
}

/// Every LP-feasible policy of the `α − ε` class has nonpositive proxy loss
/// against the learner's frozen round contexts, up to `tolerance`.
pub fn containment<R: Rng + ?Sized>(
    base: &RunConfig,
    seeds: &[u64],
    policies_per_seed: usize,
    tolerance: f64,
    rng: &mut R,
) -> Result<Check> {
    let mut check = Check::new("containment");
    let mut reported = 0usize;
    for &seed in seeds {
        let config = RunConfig { seed, ..base.clone() };
        let scenario = Scenario::new(&config)?;
        let mut contexts: Vec<ProxyContext> = Vec::with_capacity(scenario.rounds.len());
        play_with(&config, &scenario, |learner, _, _| {
            let frozen = learner.state().ftpl.history().rounds().last().expect("round was pushed");
            contexts.push(frozen.round.proxy.clone());
        })?;
        reported += contexts.iter().filter(|c| !c.report.is_null()).count();
        let lp = FairnessLp::build(&scenario.rounds, &scenario.family, config.comparator_alpha())?;
        for policy in lp.random_feasible(policies_per_seed, 8, rng)? {
            let slack = lp.max_slack(policy.weights());
            let witness = containment_check(&scenario.rounds, &contexts, &scenario.family, &policy)?;
            check.record(witness.holds(tolerance) && slack <= tolerance, || {
                json!({
                    "seed": seed, "weights": policy.weights(), "lp_slack": slack,
                    "max_proxy": witness.max_proxy, "round": witness.round,
                })
            });
        }
    }
    Ok(check.with_note(format!("{reported} reported rounds across {} runs", seeds.len())))
}

fn threshold_family(n: usize) -> Result<HypothesisFamily> {
    let mut rules = vec![Rule::Constant(false), Rule::Constant(true)];
    rules.extend((0..n).map(|i| Rule::Threshold { coord: 0, cutoff: i as f64 - n as f64 / 2.0, positive: i % 2 == 0 }));
    let pool: Vec<Individual> =
        (0..=4 * n).map(|i| Individual::new(vec![i as f64 / 2.0 - n as f64])).collect::<Result<_>>()?;
    HypothesisFamily::build(rules, &pool)
}

/// The closed-form perturbed leader agrees with a brute-force ERM over the
/// history plus the fake separator records.
pub fn leader_cross_check<R: Rng + ?Sized>(trials: u64, rng: &mut R) -> Result<Check> {
    let mut check = Check::new("leader_cross_check");
    let family = threshold_family(10)?;
    let mut ftpl = ContextFtpl::new(&family, PerturbationConfig::new(rng.random_range(0.2..2.0))?);
    for t in 0..40 {
        let k = rng.random_range(1..=3usize);
        let individuals: Vec<Individual> =
            (0..k).map(|_| Individual::new(vec![rng.random_range(-6.0..6.0)])).collect::<Result<_>>()?;
        let labels: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
        let tilde: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let report = if k >= 2 && t % 3 == 0 { ViolationReport::Pair { l: 0, r: 1 } } else { ViolationReport::Null };
        ftpl.push(LagrangianRound {
            slot_error_losses: LagrangianRound::zero_one_losses(&labels),
            individuals,
            error_weight: 1.0 / k as f64,
            proxy: ProxyContext::new(report, &tilde, 0.15, 0.15),
            lambda: rng.random_range(0.0..3.0),
            mu: 0.1,
        });
    }
    let mut counter = OracleCounter::default();
    for _ in 0..trials {
        let noise = ftpl.draw_noise(rng);
        let mut records: Vec<_> = ftpl.history().records().cloned().collect();
        records.extend(ftpl.fake_records(&noise));
        let fast = ftpl.leader_with_noise(&noise);
        let slow = erm_oracle(&records, &family, &mut counter);
        check.record(fast == slow, || json!({ "noise": noise, "fast": fast, "generic": slow }));
    }
    Ok(check)
}

/// Empirical mean of the truncated geometric count against
/// `(1 − (1 − q)^M)/q`, relative tolerance `tolerance`.
pub fn geometric_mean<R: Rng + ?Sized>(qs: &[f64], max_draws: u32, draws: u64, tolerance: f64, rng: &mut R) -> Check {
    let mut check = Check::new("geometric_mean");
    let mut notes = Vec::new();
    for &q in qs {
        let total: u64 = (0..draws).map(|_| u64::from(truncated_geometric(max_draws, || rng.random_bool(q)))).sum();
        let empirical = total as f64 / draws as f64;
        let exact = truncated_geometric_mean(q, max_draws);
        let rel = (empirical - exact).abs() / exact;
        notes.push(format!("q={q}: {empirical:.4} vs {exact:.4}"));
        check.record(rel <= tolerance, || json!({ "q": q, "M": max_draws, "empirical": empirical, "exact": exact }));
    }
    check.with_note(notes.join("; "))
}

/// Outcome of the `π̃` concentration experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Concentration {
    pub checked: u64,
    pub bad: u64,
    pub delta: f64,
}

impl Concentration {
    pub fn bad_fraction(&self) -> f64 {
        self.bad as f64 / self.checked.max(1) as f64
    }
}

/// For every round `t` and slot `i`, compares an `R`-draw estimate of the
/// FTPL policy against a `reference_draws` estimate of the same state and
/// counts `|π̃(x_i) − π_ref(x_i)| > ε/8`.
pub fn measure_concentration(base: &RunConfig, seeds: &[u64], reference_draws: usize) -> Result<Concentration> {
    let mut out = Concentration { checked: 0, bad: 0, delta: base.delta };
    for &seed in seeds {
        let config = RunConfig { seed, ..base.clone() };
        let scenario = Scenario::new(&config)?;
        let (_, hyper) = config.validate()?;
        let limit = config.epsilon / 8.0;
        let mut rng = substream(seed, "concentration");
        let mut states = vec![Learner::new(&scenario.family, hyper.clone(), seed)?.state().ftpl.clone()];
        play_with(&config, &scenario, |learner, _, _| states.push(learner.state().ftpl.clone()))?;
        for (state, round) in states.iter_mut().zip(&scenario.rounds) {
            let table = scenario.family.prediction_table(&round.individuals);
            let estimate = state.estimate_policy(hyper.draws, &mut rng)?.values(&table);
            let reference = state.estimate_policy(reference_draws, &mut rng)?.values(&table);
            for (e, r) in estimate.iter().zip(&reference) {
                out.checked += 1;
                out.bad += u64::from((e - r).abs() > limit);
            }
        }
    }
    Ok(out)
}

pub fn concentration(base: &RunConfig, seeds: &[u64], reference_draws: usize) -> Result<Check> {
    let c = measure_concentration(base, seeds, reference_draws)?;
    let mut check = Check::new("concentration");
    check.record(c.bad_fraction() <= c.delta, || json!({ "checked": c.checked, "bad": c.bad, "delta": c.delta }));
    Ok(check.with_note(format!("{} of {} estimates off by more than ε/8", c.bad, c.checked)))
}

/// The LP comparator against brute force over a `1/steps` simplex grid on
/// random four-member families. The LP optimum must be feasible and no
/// worse than any feasible grid point.
pub fn comparator_grid<R: Rng + ?Sized>(instances: u64, steps: usize, rng: &mut R) -> Result<Check> {
    let mut check = Check::new("comparator_grid");
    for _ in 0..instances {
        let mut config = small_config(Mode::Full);
        config.horizon = rng.random_range(3..=8);
        config.seed = rng.random();
        config.family.thresholds[0].cutoffs = vec![rng.random_range(-0.6..0.0), rng.random_range(0.0..0.6)];
        config.family.thresholds[0].positive = Some(true);
        let scenario = Scenario::new(&config)?;
        let lp = FairnessLp::build(&scenario.rounds, &scenario.family, config.comparator_alpha())?;
        let solved = lp.minimize(lp.errors())?;
        let value: f64 = solved.weights().iter().zip(lp.errors()).map(|(w, e)| w * e).sum();
        let n = lp.errors().len();
        let mut best = f64::INFINITY;
        let mut weights = vec![0.0; n];
        for_each_composition(steps, n, &mut weights, &mut |w| {
            if lp.max_slack(w) <= 0.0 {
                best = best.min(w.iter().zip(lp.errors()).map(|(a, e)| a * e).sum());
            }
        });
        let slack = lp.max_slack(solved.weights());
        check.record(slack <= 1e-9 && value <= best + 1e-9, || {
            json!({ "seed": config.seed, "T": config.horizon, "lp_value": value, "lp_slack": slack, "grid_best": best })
        });
    }
    Ok(check)
}

fn for_each_composition(steps: usize, n: usize, weights: &mut [f64], visit: &mut impl FnMut(&[f64])) {
    fn go(left: usize, i: usize, steps: usize, weights: &mut [f64], visit: &mut impl FnMut(&[f64])) {
        if i + 1 == weights.len() {
            weights[i] = left as f64 / steps as f64;
            visit(weights);
            return;
        }
        for c in 0..=left {
            weights[i] = c as f64 / steps as f64;
            go(left - c, i + 1, steps, weights, visit);
        }
    }
    if n > 0 {
        go(steps, 0, steps, weights, visit);
    }
}

/// Per-round oracle calls equal `R + 1` (plus `Σ K_i` under one-sided
/// feedback, with `Σ K_i ≤ kM`), and the cumulative column adds up.
pub fn oracle_accounting(base: &RunConfig, seeds: &[u64]) -> Result<Check> {
    let mut check = Check::new(&format!("oracle_accounting_{}", mode_name(base.mode)));
    let mut resample_total = 0u64;
    for &seed in seeds {
        let config = RunConfig { seed, ..base.clone() };
        let scenario = Scenario::new(&config)?;
        let (_, hyper) = config.validate()?;
        let draws = hyper.draws as u64;
        let cap = config.stream.k as u64 * u64::from(hyper.max_draws.unwrap_or(0));
        let mut running = 0u64;
        let rows = play_with(&config, &scenario, |learner, _, log| {
            running += log.oracle_calls;
            resample_total += log.resample_draws;
            let expected = match config.mode {
                Mode::Full => draws + 1,
                Mode::Partial => draws + 1 + log.resample_draws,
            };
            let within = config.mode == Mode::Full && log.resample_draws == 0 || log.resample_draws <= cap;
            let ok = log.oracle_calls == expected && within && learner.state().cum_oracle_calls == running;
            check.record(ok, || {
                json!({ "seed": seed, "t": log.t, "oracle_calls": log.oracle_calls, "expected": expected,
                        "resample_draws": log.resample_draws, "cap": cap })
            });
        })?;
        let last = rows.last().map_or(0, |r| r.cum_oracle_calls);
        check.record(last == running, || json!({ "seed": seed, "csv_total": last, "sum": running }));
    }
    Ok(check.with_note(format!("{resample_total} resampling draws")))
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Full => "full",
        Mode::Partial => "partial",
    }
}
