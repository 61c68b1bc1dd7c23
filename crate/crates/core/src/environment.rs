//! Input streams, the one-sided label curtain, and the best fair policy in
//! hindsight.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::auditing::{AggregationFunction, AggregationRule, AuditingScheme, Auditor, Distance};
use crate::error::{Error, Result};
use crate::hypothesis::{HypothesisFamily, Individual, Policy};
use crate::losses::{unfair_proxy_at, ProxyContext};
use crate::lp::LinearProgram;
use crate::rng::round_stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Independent `N(mean, std²)` coordinates.
    IidGaussian {
        dim: usize,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        std: f64,
    },
    /// Each slot is drawn uniformly from `points`.
    Grid { points: Vec<Individual> },
    /// Round `t` replays `rounds[(t − 1) mod len]`.
    Scripted { rounds: Vec<Vec<Individual>> },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelSpec {
    /// `y = 1[x[coord] ≥ cutoff]`, flipped with probability `flip`.
    NoisyThreshold {
        coord: usize,
        cutoff: f64,
        #[serde(default)]
        flip: f64,
    },
    /// Round `t` uses `rounds[(t − 1) mod len]`.
    Scripted { rounds: Vec<Vec<bool>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub panel: Vec<Distance>,
    pub aggregation: AggregationRule,
}

impl SchemeSpec {
    pub fn build(&self) -> Result<AuditingScheme> {
        let panel = self.panel.iter().cloned().map(Auditor::new).collect::<Result<Vec<_>>>()?;
        let aggregation = AggregationFunction::new(panel.len(), &self.aggregation)?;
        AuditingScheme::new(panel, aggregation)
    }
}

/// How the adversary picks individuals, labels and auditing schemes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub k: usize,
    pub features: FeatureSpec,
    pub labels: LabelSpec,
    /// Reverses the noisy-threshold label rule for rounds after `T/2`.
    #[serde(default)]
    pub drift: bool,
    /// Round `t` is audited by `schemes[(t − 1) mod len]`.
    pub schemes: Vec<SchemeSpec>,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return bad("stream needs at least one auditing scheme".into());
        }
        let dim = match &self.features {
            FeatureSpec::IidGaussian { dim, std, mean } => {
                if *dim == 0 || !(std.is_finite() && *std >= 0.0) || !mean.is_finite() {
                    return bad("iid_gaussian needs dim ≥ 1 and a finite std ≥ 0".into());
                }
                Some(*dim)
            }
            FeatureSpec::Grid { points } => {
                if points.is_empty() {
                    return bad("grid has no points".into());
                }
                Some(points[0].dim())
            }
            FeatureSpec::Scripted { rounds } => {
                if rounds.is_empty() || rounds.iter().any(|r| r.len() != self.k) {
                    return bad(format!("scripted rounds must each hold k = {} individuals", self.k));
                }
                rounds.first().and_then(|r| r.first()).map(Individual::dim)
            }
        };
        match &self.labels {
            LabelSpec::NoisyThreshold { coord, flip, cutoff } => {
                if !(0.0..=1.0).contains(flip) || !cutoff.is_finite() {
                    return bad("label flip probability must lie in [0, 1]".into());
                }
                if dim.is_some_and(|d| *coord >= d) {
                    return bad(format!("label coordinate {coord} out of range"));
                }
            }
            LabelSpec::Scripted { rounds } => {
                if rounds.is_empty() || rounds.iter().any(|r| r.len() != self.k) {
                    return bad(format!("scripted labels must each hold k = {} entries", self.k));
                }
            }
        }
        Ok(())
    }
}

/// One round as the adversary produced it, with every label.
#[derive(Clone, Debug)]
pub struct RealizedRound {
    pub t: usize,
    pub individuals: Vec<Individual>,
    pub labels: Vec<bool>,
    pub scheme: Arc<AuditingScheme>,
}

/// A seeded stream over a fixed horizon.
#[derive(Clone, Debug)]
pub struct Stream {
    spec: StreamSpec,
    seed: u64,
    horizon: usize,
    schemes: Vec<Arc<AuditingScheme>>,
}

impl Stream {
    pub fn new(spec: StreamSpec, seed: u64, horizon: usize) -> Result<Self> {
        spec.validate()?;
        let schemes = spec.schemes.iter().map(|s| s.build().map(Arc::new)).collect::<Result<_>>()?;
        Ok(Self { spec, seed, horizon, schemes })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Round `t ∈ 1..=T`; a pure function of `(spec, seed, T, t)`.
    pub fn round(&self, t: usize) -> RealizedRound {
        let mut rng = round_stream(self.seed, t);
        let k = self.spec.k;
        let individuals: Vec<Individual> = match &self.spec.features {
            FeatureSpec::IidGaussian { dim, mean, std } => (0..k)
                .map(|_| {
                    let v = (0..*dim)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            mean + std * z
                        })
                        .collect();
                    Individual::new(v).expect("gaussian features are finite")
                })
                .collect(),
            FeatureSpec::Grid { points } => (0..k).map(|_| points[rng.random_range(0..points.len())].clone()).collect(),
            FeatureSpec::Scripted { rounds } => rounds[(t - 1) % rounds.len()].clone(),
        };
        let labels = match &self.spec.labels {
            LabelSpec::NoisyThreshold { coord, cutoff, flip } => {
                let reversed = self.spec.drift && 2 * t > self.horizon;
                individuals
                    .iter()
                    .map(|x| {
                        let clean = (x.features()[*coord] >= *cutoff) != reversed;
                        clean != (rng.random::<f64>() < *flip)
                    })
                    .collect()
            }
            LabelSpec::Scripted { rounds } => rounds[(t - 1) % rounds.len()].clone(),
        };
        let scheme = Arc::clone(&self.schemes[(t - 1) % self.schemes.len()]);
        RealizedRound { t, individuals, labels, scheme }
    }

    pub fn rounds(&self) -> impl Iterator<Item = RealizedRound> + '_ {
        (1..=self.horizon).map(|t| self.round(t))
    }
}

pub fn generate_round(spec: &StreamSpec, seed: u64, horizon: usize, t: usize) -> Result<RealizedRound> {
    if t == 0 || t > horizon {
        return Err(Error::InvalidRange(format!("round {t} outside 1..={horizon}")));
    }
    Ok(Stream::new(spec.clone(), seed, horizon)?.round(t))
}

/// Labels that the learner may read only on slots it predicted positive.
#[derive(Clone, Debug)]
pub struct LabelCurtain {
    labels: Vec<bool>,
    revealed: Vec<bool>,
}

impl LabelCurtain {
    pub fn new(labels: Vec<bool>) -> Self {
        let revealed = vec![false; labels.len()];
        Self { labels, revealed }
    }

    /// The label of slot `i`, available only after committing prediction 1.
    pub fn reveal(&mut self, i: usize, prediction: bool) -> Option<bool> {
        if !prediction {
            return None;
        }
        self.revealed[i] = true;
        Some(self.labels[i])
    }

    pub fn revealed(&self) -> &[bool] {
        &self.revealed
    }

    /// Mistakes of a committed prediction vector, kept for telemetry only.
    pub fn mistakes(&self, predictions: &[bool]) -> usize {
        self.labels.iter().zip(predictions).filter(|(y, p)| y != p).count()
    }
}

/// One linear fairness constraint `Σ_h w_h·pattern_h ≤ bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct FairnessConstraint {
    pub pattern: Vec<i8>,
    pub bound: f64,
}

impl FairnessConstraint {
    pub fn lhs(&self, weights: &[f64]) -> f64 {
        self.pattern.iter().zip(weights).map(|(&a, w)| f64::from(a) * w).sum()
    }

    pub fn violation(&self, weights: &[f64]) -> f64 {
        self.lhs(weights) - self.bound
    }
}

/// The fair-in-hindsight feasible set: every realized ordered pair's
/// pivot-auditor constraint at sensitivity `α_c`, deduplicated by pattern.
#[derive(Clone, Debug)]
pub struct FairnessLp {
    errors: Vec<f64>,
    constraints: Vec<FairnessConstraint>,
}

const MAX_SLACK: f64 = 1e-9;

impl FairnessLp {
    pub fn build(rounds: &[RealizedRound], family: &HypothesisFamily, alpha_c: f64) -> Result<Self> {
        if !(alpha_c.is_finite() && alpha_c >= 0.0) {
            return Err(Error::InvalidRange(format!("comparator sensitivity {alpha_c} must be ≥ 0")));
        }
        let n = family.len();
        let mut errors = vec![0.0; n];
        let mut tightest: BTreeMap<Vec<i8>, f64> = BTreeMap::new();
        for round in rounds {
            if !round.scheme.is_monotone() {
                return Err(Error::NonMonotoneScheme { round: round.t });
            }
            let table = family.prediction_table(&round.individuals);
            for (h, e) in errors.iter_mut().enumerate() {
                *e += table.row(h).iter().zip(&round.labels).filter(|(p, y)| p != y).count() as f64;
            }
            let k = round.individuals.len();
            for l in 0..k {
                for r in 0..k {
                    if l == r {
                        continue;
                    }
                    let pattern: Vec<i8> = (0..n).map(|h| table.get(h, l) as i8 - table.get(h, r) as i8).collect();
                    if pattern.iter().all(|&a| a == 0) {
                        continue;
                    }
                    let pivot = round.scheme.pivot(&round.individuals[l], &round.individuals[r])?;
                    let bound = pivot.distance + alpha_c;
                    if bound >= 1.0 {
                        continue;
                    }
                    tightest.entry(pattern).and_modify(|b| *b = b.min(bound)).or_insert(bound);
                }
            }
        }
        let constraints = tightest.into_iter().map(|(pattern, bound)| FairnessConstraint { pattern, bound }).collect();
        Ok(Self { errors, constraints })
    }

    /// Total mistakes of each member over the rounds.
    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn constraints(&self) -> &[FairnessConstraint] {
        &self.constraints
    }

    /// Largest constraint violation of `weights` (0 when feasible).
    pub fn max_slack(&self, weights: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.violation(weights)).fold(0.0, f64::max)
    }

    /// Minimizes `objective · w` over the feasible set by constraint
    /// generation: solve with a working set, add every violated
    /// constraint, repeat.
    pub fn minimize(&self, objective: &[f64]) -> Result<Policy> {
        let n = self.errors.len();
        let mut active = vec![false; self.constraints.len()];
        loop {
            let mut lp = LinearProgram::new(objective.to_vec());
            lp.add_equal(vec![1.0; n], 1.0);
            for (c, _) in self.constraints.iter().zip(&active).filter(|(_, a)| **a) {
                lp.add_upper(c.pattern.iter().map(|&a| f64::from(a)).collect(), c.bound);
            }
            let sol = lp.solve()?;
            let weights = clean_weights(sol.x)?;
            let mut added = false;
            for (c, a) in self.constraints.iter().zip(active.iter_mut()) {
                if !*a && c.violation(&weights) > MAX_SLACK / 10.0 {
                    *a = true;
                    added = true;
                }
            }
            if !added {
                return Policy::new(weights);
            }
        }
    }
}

impl FairnessLp {
    /// Random feasible policies: convex combinations of LP optima under
    /// random objectives, plus point masses on members that break no
    /// constraint.
    pub fn random_feasible<R: Rng + ?Sized>(&self, count: usize, vertices: usize, rng: &mut R) -> Result<Vec<Policy>> {
        let n = self.errors.len();
        let mut extreme: Vec<Policy> =
            (0..n).map(|h| Policy::point_mass(n, h)).filter(|p| self.max_slack(p.weights()) == 0.0).collect();
        for _ in 0..vertices {
            let objective: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            extreme.push(self.minimize(&objective)?);
        }
        if extreme.is_empty() {
            return Err(Error::Lp("no feasible policy found".into()));
        }
        (0..count)
            .map(|_| {
                let mix: Vec<f64> = extreme.iter().map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
                let total: f64 = mix.iter().sum();
                let mut weights = vec![0.0; n];
                for (p, m) in extreme.iter().zip(&mix) {
                    for (w, v) in weights.iter_mut().zip(p.weights()) {
                        *w += m / total * v;
                    }
                }
                Policy::normalized(weights)
            })
            .collect()
    }
}

fn clean_weights(x: Vec<f64>) -> Result<Vec<f64>> {
    let clipped: Vec<f64> = x.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Lp("solution has no mass".into()));
    }
    Ok(clipped.into_iter().map(|v| v / total).collect())
}

/// The best fixed policy satisfying every realized fairness constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparatorResult {
    pub weights: Policy,
    pub total_error: f64,
    pub max_slack: f64,
}

pub fn best_fair_in_hindsight(
    rounds: &[RealizedRound],
    family: &HypothesisFamily,
    alpha_c: f64,
) -> Result<ComparatorResult> {
    let lp = FairnessLp::build(rounds, family, alpha_c)?;
    comparator_from(&lp)
}

pub fn comparator_from(lp: &FairnessLp) -> Result<ComparatorResult> {
    let weights = lp.minimize(lp.errors())?;
    let total_error = weights.weights().iter().zip(lp.errors()).map(|(w, e)| w * e).sum();
    let max_slack = lp.max_slack(weights.weights());
    Ok(ComparatorResult { weights, total_error, max_slack })
}

/// Largest unfairness proxy of `policy` over frozen round contexts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContainmentWitness {
    pub max_proxy: f64,
    /// Round (1-based) attaining `max_proxy`, if any round was checked.
    pub round: Option<usize>,
}

impl ContainmentWitness {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.max_proxy <= tolerance
    }
}

/// Evaluates `policy`'s proxy loss against each round's frozen context;
/// `contexts[i]` belongs to `rounds[i]`.
pub fn containment_check(
    rounds: &[RealizedRound],
    contexts: &[ProxyContext],
    family: &HypothesisFamily,
    policy: &Policy,
) -> Result<ContainmentWitness> {
    if rounds.len() != contexts.len() {
        return Err(Error::DimensionMismatch { expected: rounds.len(), got: contexts.len() });
    }
    let mut witness = ContainmentWitness { max_proxy: f64::NEG_INFINITY, round: None };
    for (round, ctx) in rounds.iter().zip(contexts) {
        let values = policy.values(&family.prediction_table(&round.individuals));
        let p = unfair_proxy_at(&values, ctx);
        if p > witness.max_proxy {
            witness = ContainmentWitness { max_proxy: p, round: Some(round.t) };
        }
    }
    Ok(witness)
}
