//! Finite hypothesis families, policies over them and the batch ERM oracle.
//!
//! The oracle is an exhaustive scan. Only the number of *calls* matters for
//! the oracle-efficiency accounting, so every entry point that answers an ERM
//! query takes an [`OracleCounter`] and bumps it exactly once.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Individual {
    features: Vec<f64>,
}

impl Individual {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if let Some(index) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { index });
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

impl TryFrom<Vec<f64>> for Individual {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Individual::new(v)
    }
}

impl From<Individual> for Vec<f64> {
    fn from(x: Individual) -> Self {
        x.features
    }
}

/// One literal of a conjunction over binarized features: the bit is
/// `x[coord] >= cut`, optionally negated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Literal {
    pub coord: usize,
    pub cut: f64,
    pub negated: bool,
}

impl Literal {
    fn holds(&self, x: &Individual) -> bool {
        (x.features[self.coord] >= self.cut) != self.negated
    }
}

/// The decision rule of a hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    Constant(bool),
    /// `x[coord] >= cutoff` when `positive`, else `x[coord] < cutoff`.
    Threshold {
        coord: usize,
        cutoff: f64,
        positive: bool,
    },
    /// Empty conjunction is the constant 1.
    Conjunction(Vec<Literal>),
    /// Explicit outputs on a finite context pool; contexts outside the pool
    /// are predicted 0.
    TruthTable {
        pool: Arc<[Individual]>,
        outputs: Vec<bool>,
    },
}

impl Rule {
    pub fn predict(&self, x: &Individual) -> bool {
        match self {
            Rule::Constant(b) => *b,
            Rule::Threshold { coord, cutoff, positive } => (x.features[*coord] >= *cutoff) == *positive,
            Rule::Conjunction(lits) => lits.iter().all(|l| l.holds(x)),
            Rule::TruthTable { pool, outputs } => pool.iter().position(|p| p == x).map(|i| outputs[i]).unwrap_or(false),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Rule::Constant(_))
    }
}

/// A binary predictor with a stable id inside its family.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub id: usize,
    pub rule: Rule,
}

impl Hypothesis {
    pub fn predict(&self, x: &Individual) -> bool {
        self.rule.predict(x)
    }
}

/// Predictions of every member on a fixed list of individuals, laid out
/// member-major: `get(h, i)`.
#[derive(Clone, Debug)]
pub struct PredictionTable {
    k: usize,
    bits: Vec<bool>,
}

impl PredictionTable {
    pub fn get(&self, h: usize, i: usize) -> bool {
        self.bits[h * self.k + i]
    }

    pub fn row(&self, h: usize) -> &[bool] {
        &self.bits[h * self.k..(h + 1) * self.k]
    }

    pub fn individuals(&self) -> usize {
        self.k
    }
}

/// A deduplicated family of hypotheses together with a separating set `Q`.
#[derive(Clone, Debug)]
pub struct HypothesisFamily {
    members: Vec<Hypothesis>,
    separator: Vec<Individual>,
}

impl HypothesisFamily {
    /// Builds a family from `rules`, removing members that agree on every
    /// point of `pool`, and derives `Q` greedily from the same pool.
    pub fn build(rules: Vec<Rule>, pool: &[Individual]) -> Result<Self> {
        let members = dedup(rules, pool)?;
        let separator = greedy_separator(&members, pool)?;
        Ok(Self { members, separator })
    }

    /// Builds a family with a caller-supplied separating set. Members that
    /// agree on all of `separator` are treated as duplicates.
    pub fn with_separator(rules: Vec<Rule>, separator: Vec<Individual>) -> Result<Self> {
        let members = dedup(rules, &separator)?;
        Ok(Self { members, separator })
    }

    pub fn members(&self) -> &[Hypothesis] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn separator(&self) -> &[Individual] {
        &self.separator
    }

    /// `s = |Q|`.
    pub fn separator_size(&self) -> usize {
        self.separator.len()
    }

    pub fn predict(&self, h: usize, x: &Individual) -> bool {
        self.members[h].predict(x)
    }

    pub fn prediction_table(&self, xs: &[Individual]) -> PredictionTable {
        let mut bits = Vec::with_capacity(self.members.len() * xs.len());
        for h in &self.members {
            bits.extend(xs.iter().map(|x| h.predict(x)));
        }
        PredictionTable { k: xs.len(), bits }
    }
}

fn dedup(rules: Vec<Rule>, pool: &[Individual]) -> Result<Vec<Hypothesis>> {
    if rules.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut seen: Vec<Vec<bool>> = Vec::new();
    let mut members = Vec::new();
    for rule in rules {
        let sig: Vec<bool> = pool.iter().map(|x| rule.predict(x)).collect();
        if seen.contains(&sig) {
            continue;
        }
        seen.push(sig);
        members.push(Hypothesis { id: members.len(), rule });
    }
    if !members.iter().any(|h| h.rule.is_constant()) {
        return Err(Error::MissingConstant);
    }
    Ok(members)
}

/// Greedy separating set: repeatedly takes the pool element that splits the
/// most still-unseparated member pairs (ties to the lowest pool index).
pub fn greedy_separator(members: &[Hypothesis], pool: &[Individual]) -> Result<Vec<Individual>> {
    // Members not yet separated form blocks; a candidate splits a block with
    // `a` ones and `b` zeros into a·b newly separated pairs.
    let sigs: Vec<Vec<bool>> = pool.iter().map(|x| members.iter().map(|h| h.predict(x)).collect()).collect();
    let mut blocks: Vec<Vec<usize>> = vec![(0..members.len()).collect()];
    blocks.retain(|b| b.len() > 1);
    let mut chosen = Vec::new();
    while !blocks.is_empty() {
        let mut best: Option<(usize, usize)> = None;
        for (c, sig) in sigs.iter().enumerate() {
            let gain: usize = blocks
                .iter()
                .map(|b| {
                    let ones = b.iter().filter(|&&h| sig[h]).count();
                    ones * (b.len() - ones)
                })
                .sum();
            if gain > 0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((c, gain));
            }
        }
        let Some((c, _)) = best else {
            let b = &blocks[0];
            return Err(Error::UnseparablePair { first: members[b[0]].id, second: members[b[1]].id });
        };
        chosen.push(pool[c].clone());
        let sig = &sigs[c];
        let mut next = Vec::with_capacity(blocks.len() * 2);
        for b in blocks {
            let (ones, zeros): (Vec<usize>, Vec<usize>) = b.into_iter().partition(|&h| sig[h]);
            next.extend([ones, zeros].into_iter().filter(|p| p.len() > 1));
        }
        blocks = next;
    }
    Ok(chosen)
}

/// Checks that every pair of distinct members disagrees somewhere on `q`.
pub fn separates_all(members: &[Hypothesis], q: &[Individual]) -> bool {
    for (a, ha) in members.iter().enumerate() {
        for hb in &members[a + 1..] {
            if q.iter().all(|x| ha.predict(x) == hb.predict(x)) {
                return false;
            }
        }
    }
    true
}

/// A distribution over the members of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Policy {
    weights: Vec<f64>,
}

const SIMPLEX_TOL: f64 = 1e-12;

impl Policy {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPolicy("no weights".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPolicy("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidPolicy(format!("weights sum to {total}")));
        }
        Ok(Self { weights })
    }

    /// Normalizes nonnegative weights onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPolicy("weights have no mass".into()));
        }
        Policy::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn point_mass(n: usize, h: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[h] = 1.0;
        Self { weights }
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n] }
    }

    /// `a·p + (1−a)·q`.
    pub fn mix(a: f64, p: &Policy, q: &Policy) -> Self {
        let weights = p.weights.iter().zip(&q.weights).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Acceptance probability at each column of `table`.
    pub fn values(&self, table: &PredictionTable) -> Vec<f64> {
        let mut out = vec![0.0; table.individuals()];
        for (h, w) in self.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (i, &bit) in table.row(h).iter().enumerate() {
                if bit {
                    out[i] += w;
                }
            }
        }
        out
    }
}

impl TryFrom<Vec<f64>> for Policy {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Policy::new(v)
    }
}

impl From<Policy> for Vec<f64> {
    fn from(p: Policy) -> Self {
        p.weights
    }
}

/// `π(x) = Pr_{h∼π}[h(x) = 1]`.
pub fn policy_eval(policy: &Policy, family: &HypothesisFamily, x: &Individual) -> f64 {
    policy.weights.iter().zip(family.members()).filter(|(_, h)| h.predict(x)).map(|(w, _)| w).sum()
}

/// Uniform distribution over a multiset of sampled member ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPolicy {
    sample_ids: Vec<usize>,
}

impl EmpiricalPolicy {
    pub fn new(sample_ids: Vec<usize>) -> Result<Self> {
        if sample_ids.is_empty() {
            return Err(Error::InvalidPolicy("empirical policy needs at least one sample".into()));
        }
        Ok(Self { sample_ids })
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    pub fn to_policy(&self, n: usize) -> Policy {
        let mut weights = vec![0.0; n];
        for &h in &self.sample_ids {
            weights[h] += 1.0;
        }
        let r = self.sample_ids.len() as f64;
        weights.iter_mut().for_each(|w| *w /= r);
        Policy { weights }
    }

    /// Fraction of samples predicting 1 at each column of `table`.
    pub fn values(&self, table: &PredictionTable) -> Vec<f64> {
        let mut counts = vec![0u64; table.individuals()];
        for &h in &self.sample_ids {
            for (c, &bit) in counts.iter_mut().zip(table.row(h)) {
                *c += bit as u64;
            }
        }
        let r = self.sample_ids.len() as f64;
        counts.into_iter().map(|c| c as f64 / r).collect()
    }
}

/// Linear per-slot loss handed to the ERM oracle: predicting action `a` on
/// `context` costs `weight · action_losses[a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedLossRecord {
    pub context: Individual,
    pub action_losses: [f64; 2],
    pub weight: f64,
}

impl WeightedLossRecord {
    pub fn loss_of(&self, prediction: bool) -> f64 {
        self.weight * self.action_losses[prediction as usize]
    }
}

/// Number of ERM oracle invocations within one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounter {
    pub calls: u64,
}

impl OracleCounter {
    pub fn bump(&mut self) {
        self.calls += 1;
    }
}

/// Index of the smallest value, ties to the lowest index.
pub fn argmin_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Batch ERM: the member minimizing total weighted loss over `records`.
pub fn erm_oracle(records: &[WeightedLossRecord], family: &HypothesisFamily, counter: &mut OracleCounter) -> usize {
    counter.bump();
    let totals: Vec<f64> =
        family.members().iter().map(|h| records.iter().map(|r| r.loss_of(h.predict(&r.context))).sum()).collect();
    argmin_lowest(&totals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(v: &[f64]) -> Individual {
        Individual::new(v.to_vec()).unwrap()
    }

    fn thr(cutoff: f64) -> Rule {
        Rule::Threshold { coord: 0, cutoff, positive: true }
    }

    #[test]
    fn rejects_non_finite_features() {
        assert!(matches!(Individual::new(vec![0.0, f64::NAN]), Err(Error::NonFiniteFeature { index: 1 })));
    }

    #[test]
    fn erm_prefers_fewer_mistakes() {
        let pool = [ind(&[0.0]), ind(&[1.0]), ind(&[2.0])];
        let fam = HypothesisFamily::build(vec![Rule::Constant(false), Rule::Constant(true)], &pool).unwrap();
        let recs = vec![
            WeightedLossRecord { context: pool[0].clone(), action_losses: [1.0, 0.0], weight: 1.0 },
            WeightedLossRecord { context: pool[1].clone(), action_losses: [1.0, 0.0], weight: 1.0 },
            WeightedLossRecord { context: pool[2].clone(), action_losses: [0.0, 1.0], weight: 1.0 },
        ];
        let mut c = OracleCounter::default();
        assert_eq!(erm_oracle(&recs, &fam, &mut c), 1);
        assert_eq!(erm_oracle(&[], &fam, &mut c), 0);
        assert_eq!(c.calls, 2);
    }

    #[test]
    fn policy_eval_examples() {
        let pool = [ind(&[0.0]), ind(&[1.0])];
        let fam = HypothesisFamily::build(vec![Rule::Constant(false), Rule::Constant(true), thr(0.5)], &pool).unwrap();
        let x = ind(&[0.7]);
        assert_eq!(policy_eval(&Policy::point_mass(3, 1), &fam, &x), 1.0);
        assert_eq!(policy_eval(&Policy::new(vec![0.5, 0.5, 0.0]).unwrap(), &fam, &x), 0.5);
        // weights on the two that disagree at x
        let p = Policy::new(vec![0.3, 0.0, 0.7]).unwrap();
        assert!((policy_eval(&p, &fam, &x) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn greedy_separator_on_thresholds() {
        let pool: Vec<_> = [0.5, 1.5, 2.5, 3.5].iter().map(|v| ind(&[*v])).collect();
        let members: Vec<_> =
            [1.0, 2.0, 3.0].iter().enumerate().map(|(id, c)| Hypothesis { id, rule: thr(*c) }).collect();
        let q = greedy_separator(&members, &pool).unwrap();
        assert_eq!(q, vec![ind(&[1.5]), ind(&[2.5])]);
        assert!(separates_all(&members, &q));

        let mut with_zero = members.clone();
        with_zero.push(Hypothesis { id: 3, rule: Rule::Constant(false) });
        let q = greedy_separator(&with_zero, &pool).unwrap();
        assert_eq!(q, vec![ind(&[2.5]), ind(&[1.5]), ind(&[3.5])]);
        assert!(separates_all(&with_zero, &q));
    }

    #[test]
    fn separator_trivial_cases() {
        let pool = [ind(&[0.0]), ind(&[1.0])];
        let one = [Hypothesis { id: 0, rule: Rule::Constant(true) }];
        assert!(greedy_separator(&one, &pool).unwrap().is_empty());
        let two = [Hypothesis { id: 0, rule: Rule::Constant(false) }, Hypothesis { id: 1, rule: Rule::Constant(true) }];
        assert_eq!(greedy_separator(&two, &pool).unwrap().len(), 1);
    }

    #[test]
    fn unseparable_pair_reported() {
        let pool = [ind(&[0.0]), ind(&[5.0])];
        let members = [Hypothesis { id: 0, rule: thr(1.0) }, Hypothesis { id: 1, rule: thr(2.0) }];
        assert!(matches!(greedy_separator(&members, &pool), Err(Error::UnseparablePair { first: 0, second: 1 })));
    }

    #[test]
    fn build_dedups_and_requires_constant() {
        let pool = [ind(&[0.0]), ind(&[5.0])];
        let fam = HypothesisFamily::build(vec![Rule::Constant(false), thr(1.0), thr(2.0)], &pool).unwrap();
        assert_eq!(fam.len(), 2);
        assert!(matches!(HypothesisFamily::build(vec![thr(1.0)], &pool), Err(Error::MissingConstant)));
        assert!(matches!(HypothesisFamily::build(vec![], &pool), Err(Error::EmptyFamily)));
    }

    #[test]
    fn truth_table_and_conjunction_rules() {
        let pool: Arc<[Individual]> = vec![ind(&[0.0, 0.0]), ind(&[1.0, 1.0])].into();
        let tt = Rule::TruthTable { pool: pool.clone(), outputs: vec![false, true] };
        assert!(tt.predict(&pool[1]));
        assert!(!tt.predict(&ind(&[3.0, 3.0])));
        let conj = Rule::Conjunction(vec![
            Literal { coord: 0, cut: 0.5, negated: false },
            Literal { coord: 1, cut: 0.5, negated: true },
        ]);
        assert!(conj.predict(&ind(&[1.0, 0.0])));
        assert!(!conj.predict(&ind(&[1.0, 1.0])));
    }

    #[test]
    fn policy_validation() {
        assert!(Policy::new(vec![0.5, 0.6]).is_err());
        assert!(Policy::new(vec![-0.1, 1.1]).is_err());
        let e = EmpiricalPolicy::new(vec![1, 1, 0, 2]).unwrap();
        assert_eq!(e.to_policy(3).weights(), &[0.25, 0.5, 0.25]);
        assert!(EmpiricalPolicy::new(vec![]).is_err());
    }
}
