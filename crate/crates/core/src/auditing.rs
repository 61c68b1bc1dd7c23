//! Auditors, objection matrices and monotone auditing schemes.
//!
//! An auditor holds an implicit distance `d` and objects to the ordered pair
//! `(l, r)` iff `π(x_l) − π(x_r) > d(x_l, x_r) + α`. A scheme combines `m`
//! auditors entrywise through a boolean aggregation function `f̄`.
//!
//! For monotone `f̄`, the aggregate decision on a fixed pair always coincides
//! with one *pivot* auditor (possibly one of the two dummies with `d ≡ 0` or
//! `d ≡ 1`), see [`pivot_index`]. The comparator in
//! [`crate::environment`] relies on this to write fairness constraints
//! explicitly.
//!
//! Simulated auditors always produce the full `k×k` matrix. Real panels with
//! veto members only need to name one pair; that distinction does not
//! matter here.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::Individual;

/// Largest arity handled by the truth-table representation.
pub const MAX_ARITY: usize = 20;

/// An auditor's distance function, always symmetric with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distance {
    /// `min(1, Σ_i w_i |x_i − x'_i|)`.
    L1 {
        weights: Vec<f64>,
    },
    /// Explicit distances between pool members; pairs involving individuals
    /// outside the pool use `default`.
    Table {
        pool: Vec<Individual>,
        distances: Vec<Vec<f64>>,
        default: f64,
    },
    Constant {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Auditor {
    distance: Distance,
}

impl Auditor {
    pub fn new(distance: Distance) -> Result<Self> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        match &distance {
            Distance::L1 { weights } => {
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidRange("l1 weights must be finite and nonnegative".into()));
                }
            }
            Distance::Table { pool, distances, default } => {
                let n = pool.len();
                if distances.len() != n || distances.iter().any(|row| row.len() != n) {
                    return Err(Error::InvalidRange("distance table must be square over the pool".into()));
                }
                for i in 0..n {
                    for j in 0..n {
                        if !in_unit(distances[i][j]) || distances[i][j] != distances[j][i] {
                            return Err(Error::InvalidRange(format!("table entry ({i},{j}) not symmetric in [0,1]")));
                        }
                    }
                }
                if !in_unit(*default) {
                    return Err(Error::InvalidRange("table default outside [0,1]".into()));
                }
            }
            Distance::Constant { value } => {
                if !in_unit(*value) {
                    return Err(Error::InvalidRange("constant distance outside [0,1]".into()));
                }
            }
        }
        Ok(Self { distance })
    }

    pub fn l1(weights: Vec<f64>) -> Result<Self> {
        Self::new(Distance::L1 { weights })
    }

    /// Dummy `j⁰`: distance ≡ 0.
    pub fn strictest() -> Self {
        Self { distance: Distance::Constant { value: 0.0 } }
    }

    /// Dummy `j^{m+1}`: distance ≡ 1, never objects.
    pub fn never_objecting() -> Self {
        Self { distance: Distance::Constant { value: 1.0 } }
    }

    pub fn kind(&self) -> &Distance {
        &self.distance
    }

    pub fn distance(&self, a: &Individual, b: &Individual) -> f64 {
        match &self.distance {
            Distance::L1 { weights } => {
                let s: f64 = weights
                    .iter()
                    .zip(a.features().iter().zip(b.features()))
                    .map(|(w, (x, y))| w * (x - y).abs())
                    .sum();
                s.min(1.0)
            }
            Distance::Table { pool, distances, default } => {
                match (pool.iter().position(|p| p == a), pool.iter().position(|p| p == b)) {
                    (Some(i), Some(j)) => distances[i][j],
                    _ if a == b => 0.0,
                    _ => *default,
                }
            }
            Distance::Constant { value } => *value,
        }
    }
}

/// The objection rule shared by every auditor (strict inequality).
pub fn objects(gap: f64, distance: f64, alpha: f64) -> bool {
    gap > distance + alpha
}

/// Binary `k×k` objection matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectionMatrix {
    k: usize,
    bits: Vec<bool>,
}

impl ObjectionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self { k, bits: vec![false; k * k] }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn get(&self, l: usize, r: usize) -> bool {
        self.bits[l * self.k + r]
    }

    fn set(&mut self, l: usize, r: usize, v: bool) {
        self.bits[l * self.k + r] = v;
    }

    pub fn is_zero(&self) -> bool {
        !self.bits.contains(&true)
    }

    /// First 1-entry in row-major order.
    pub fn first_pair(&self) -> Option<(usize, usize)> {
        self.bits.iter().position(|b| *b).map(|p| (p / self.k, p % self.k))
    }
}

/// `Null`, or the ordered pair `(l, r)` on which a violation was reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationReport {
    Null,
    Pair { l: usize, r: usize },
}

impl ViolationReport {
    pub fn from_matrix(m: &ObjectionMatrix) -> Self {
        match m.first_pair() {
            Some((l, r)) => ViolationReport::Pair { l, r },
            None => ViolationReport::Null,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, ViolationReport::Null)
    }

    pub fn pair(&self) -> Option<(usize, usize)> {
        match *self {
            ViolationReport::Pair { l, r } => Some((l, r)),
            ViolationReport::Null => None,
        }
    }
}

/// Entry `(l, r)` is 1 iff `probs[l] − probs[r] > d(x_l, x_r) + α`.
pub fn audit_single(auditor: &Auditor, probs: &[f64], individuals: &[Individual], alpha: f64) -> ObjectionMatrix {
    let k = probs.len();
    let mut m = ObjectionMatrix::zeros(k);
    for l in 0..k {
        for r in 0..k {
            if l != r {
                let d = auditor.distance(&individuals[l], &individuals[r]);
                m.set(l, r, objects(probs[l] - probs[r], d, alpha));
            }
        }
    }
    m
}

/// How an aggregation function is specified. Members are 0-based panel
/// positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationRule {
    /// Output at index `Σ_i v_i·2^i`.
    TruthTable { table: Vec<bool> },
    /// 1 iff at least a `theta` fraction of the panel objects.
    #[serde(alias = "threshold")]
    Majority {
        #[serde(default = "half")]
        theta: f64,
    },
    /// 1 iff any vetoer objects, or at least a `theta` fraction objects.
    Veto {
        vetoers: Vec<usize>,
        #[serde(default)]
        theta: Option<f64>,
    },
    /// 1 iff every listed member objects.
    Conjunction { members: Vec<usize> },
    /// 1 iff some listed member objects.
    Disjunction { members: Vec<usize> },
}

fn half() -> f64 {
    0.5
}

/// `f̄ : {0,1}^m → {0,1}`, stored as a truth table over profile bitmasks
/// (bit `i` set iff auditor `i` objects).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregationFunction {
    arity: usize,
    table: Vec<bool>,
}

impl AggregationFunction {
    pub fn new(arity: usize, rule: &AggregationRule) -> Result<Self> {
        if arity == 0 || arity > MAX_ARITY {
            return Err(Error::InvalidRange(format!("aggregation arity {arity} outside 1..={MAX_ARITY}")));
        }
        let check_members = |ms: &[usize]| -> Result<()> {
            match ms.iter().find(|&&i| i >= arity) {
                Some(i) => Err(Error::InvalidRange(format!("member {i} outside panel of {arity}"))),
                None => Ok(()),
            }
        };
        let at_least = |theta: f64, mask: usize| (mask.count_ones() as f64) >= theta * arity as f64 - 1e-9;
        let size = 1usize << arity;
        let table: Vec<bool> = match rule {
            AggregationRule::TruthTable { table } => {
                if table.len() != size {
                    return Err(Error::InvalidRange(format!("truth table needs {size} entries")));
                }
                table.clone()
            }
            AggregationRule::Majority { theta } => {
                if !(*theta > 0.0 && *theta <= 1.0) {
                    return Err(Error::InvalidRange(format!("majority theta {theta} outside (0,1]")));
                }
                (0..size).map(|m| at_least(*theta, m)).collect()
            }
            AggregationRule::Veto { vetoers, theta } => {
                check_members(vetoers)?;
                let vmask: usize = vetoers.iter().map(|i| 1 << i).sum();
                (0..size).map(|m| m & vmask != 0 || theta.is_some_and(|t| at_least(t, m))).collect()
            }
            AggregationRule::Conjunction { members } => {
                check_members(members)?;
                let need: usize = members.iter().map(|i| 1 << i).sum();
                (0..size).map(|m| m & need == need).collect()
            }
            AggregationRule::Disjunction { members } => {
                check_members(members)?;
                let any: usize = members.iter().map(|i| 1 << i).sum();
                (0..size).map(|m| m & any != 0).collect()
            }
        };
        Ok(Self { arity, table })
    }

    /// Like [`AggregationFunction::new`] but rejects non-monotone rules.
    pub fn monotone(arity: usize, rule: &AggregationRule) -> Result<Self> {
        let f = Self::new(arity, rule)?;
        if !is_monotone(&f) {
            return Err(Error::NotMonotone);
        }
        Ok(f)
    }

    pub fn from_table(arity: usize, table: Vec<bool>) -> Result<Self> {
        Self::new(arity, &AggregationRule::TruthTable { table })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn table(&self) -> &[bool] {
        &self.table
    }

    pub fn eval_mask(&self, mask: usize) -> bool {
        self.table[mask]
    }

    pub fn eval(&self, profile: &[bool]) -> bool {
        let mask = profile.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| 1usize << i).sum();
        self.eval_mask(mask)
    }
}

/// True iff no single 0→1 flip of an input turns the output from 1 to 0,
/// which is equivalent to monotonicity w.r.t. the coordinatewise order.
pub fn is_monotone(f: &AggregationFunction) -> bool {
    (0..f.table.len()).all(|mask| !f.table[mask] || (0..f.arity).all(|i| f.table[mask | (1 << i)]))
}

/// All monotone functions of the given arity (20 for arity 3), ordered by
/// truth-table index. Arity is limited to 4.
pub fn enumerate_monotone(arity: usize) -> Vec<AggregationFunction> {
    assert!((1..=4).contains(&arity), "enumeration supports arity 1..=4");
    let size = 1usize << arity;
    (0u64..(1u64 << size))
        .filter_map(|code| {
            let table = (0..size).map(|m| code >> m & 1 == 1).collect();
            let f = AggregationFunction { arity, table };
            is_monotone(&f).then_some(f)
        })
        .collect()
}

/// A random monotone function: the up-closure of a few random minimal
/// objection sets (possibly none, giving `f̄ ≡ 0`).
pub fn random_monotone<R: Rng + ?Sized>(arity: usize, rng: &mut R) -> AggregationFunction {
    let size = 1usize << arity;
    let terms: Vec<usize> = (0..rng.random_range(0..=arity)).map(|_| rng.random_range(1..size)).collect();
    let table = (0..size).map(|m| terms.iter().any(|t| m & t == *t)).collect();
    AggregationFunction { arity, table }
}

/// A panel of auditors with an aggregation function of matching arity.
#[derive(Clone, Debug)]
pub struct AuditingScheme {
    panel: Vec<Auditor>,
    aggregation: AggregationFunction,
    monotone: bool,
}

impl AuditingScheme {
    pub fn new(panel: Vec<Auditor>, aggregation: AggregationFunction) -> Result<Self> {
        if panel.len() != aggregation.arity() {
            return Err(Error::ArityMismatch { arity: aggregation.arity(), panel: panel.len() });
        }
        let monotone = is_monotone(&aggregation);
        Ok(Self { panel, aggregation, monotone })
    }

    pub fn panel(&self) -> &[Auditor] {
        &self.panel
    }

    pub fn aggregation(&self) -> &AggregationFunction {
        &self.aggregation
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Aggregate decision on a single ordered pair given its prediction gap.
    pub fn decide(&self, a: &Individual, b: &Individual, gap: f64, alpha: f64) -> bool {
        let mask = self
            .panel
            .iter()
            .enumerate()
            .filter(|(_, j)| objects(gap, j.distance(a, b), alpha))
            .map(|(i, _)| 1usize << i)
            .sum();
        self.aggregation.eval_mask(mask)
    }

    pub fn pivot(&self, a: &Individual, b: &Individual) -> Result<Pivot> {
        pivot_index(&self.aggregation, &self.panel, (a, b))
    }
}

/// Applies `f̄` entrywise to the panel's matrices and reports the first
/// objected pair in row-major order.
pub fn aggregate_and_report(
    scheme: &AuditingScheme,
    probs: &[f64],
    individuals: &[Individual],
    alpha: f64,
) -> (ObjectionMatrix, ViolationReport) {
    let k = probs.len();
    let mut agg = ObjectionMatrix::zeros(k);
    for l in 0..k {
        for r in 0..k {
            if l != r {
                agg.set(l, r, scheme.decide(&individuals[l], &individuals[r], probs[l] - probs[r], alpha));
            }
        }
    }
    let report = ViolationReport::from_matrix(&agg);
    (agg, report)
}

/// The auditor whose decision equals the scheme's on a fixed pair.
///
/// `position` indexes `{j⁰, sorted panel…, j^{m+1}}`: 0 is the strict dummy,
/// `1..=m` are panel members sorted by ascending distance on the pair (ties
/// by panel index), `m + 1` is the never-objecting dummy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pivot {
    pub position: usize,
    /// Panel index for `1..=m`, `None` for the dummies.
    pub auditor: Option<usize>,
    pub distance: f64,
}

impl Pivot {
    pub fn objects(&self, gap: f64, alpha: f64) -> bool {
        objects(gap, self.distance, alpha)
    }
}

pub fn pivot_index(f: &AggregationFunction, panel: &[Auditor], pair: (&Individual, &Individual)) -> Result<Pivot> {
    if !is_monotone(f) {
        return Err(Error::NotMonotone);
    }
    if f.arity() != panel.len() {
        return Err(Error::ArityMismatch { arity: f.arity(), panel: panel.len() });
    }
    let m = panel.len();
    let dists: Vec<f64> = panel.iter().map(|j| j.distance(pair.0, pair.1)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    let mut sorted_pos = vec![0usize; m];
    for (q, &i) in order.iter().enumerate() {
        sorted_pos[i] = q + 1;
    }
    let mut best: Option<usize> = None;
    for z in (0..1usize << m).filter(|&z| f.eval_mask(z)) {
        let top = (0..m).filter(|i| z >> i & 1 == 1).map(|i| sorted_pos[i]).max().unwrap_or(0);
        best = Some(best.map_or(top, |b| b.min(top)));
    }
    Ok(match best {
        None => Pivot { position: m + 1, auditor: None, distance: 1.0 },
        Some(0) => Pivot { position: 0, auditor: None, distance: 0.0 },
        Some(q) => {
            let i = order[q - 1];
            Pivot { position: q, auditor: Some(i), distance: dists[i] }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(v: f64) -> Individual {
        Individual::new(vec![v]).unwrap()
    }

    fn constant(d: f64) -> Auditor {
        Auditor::new(Distance::Constant { value: d }).unwrap()
    }

    #[test]
    fn single_auditor_examples() {
        let xs = [ind(0.0), ind(1.0)];
        let m = audit_single(&constant(0.3), &[0.9, 0.2], &xs, 0.2);
        assert!(m.get(0, 1));
        assert!(!m.get(1, 0));
        assert!(audit_single(&constant(0.0), &[0.4, 0.4], &xs, 0.0).is_zero());
        assert!(audit_single(&Auditor::never_objecting(), &[1.0, 0.0], &xs, 0.0).is_zero());
    }

    #[test]
    fn l1_distance_is_clipped_and_symmetric() {
        let a = Auditor::l1(vec![2.0]).unwrap();
        assert_eq!(a.distance(&ind(0.0), &ind(0.2)), 0.4);
        assert_eq!(a.distance(&ind(0.0), &ind(3.0)), 1.0);
        assert_eq!(a.distance(&ind(0.2), &ind(0.0)), 0.4);
        assert!(Auditor::l1(vec![-1.0]).is_err());
    }

    #[test]
    fn table_distance_validation() {
        let pool = vec![ind(0.0), ind(1.0)];
        let ok = Distance::Table { pool: pool.clone(), distances: vec![vec![0.0, 0.3], vec![0.3, 0.0]], default: 1.0 };
        let a = Auditor::new(ok).unwrap();
        assert_eq!(a.distance(&pool[1], &pool[0]), 0.3);
        assert_eq!(a.distance(&pool[1], &ind(7.0)), 1.0);
        let asym = Distance::Table { pool, distances: vec![vec![0.0, 0.3], vec![0.2, 0.0]], default: 1.0 };
        assert!(Auditor::new(asym).is_err());
    }

    #[test]
    fn monotonicity_examples() {
        let maj3 = AggregationFunction::new(3, &AggregationRule::Majority { theta: 2.0 / 3.0 }).unwrap();
        assert!(is_monotone(&maj3));
        let exactly_one = AggregationFunction::from_table(2, vec![false, true, true, false]).unwrap();
        assert!(!is_monotone(&exactly_one));
        let fig1 = AggregationFunction::new(5, &AggregationRule::Veto { vetoers: vec![2], theta: Some(0.8) }).unwrap();
        assert!(is_monotone(&fig1));
        assert!(matches!(
            AggregationFunction::monotone(2, &AggregationRule::TruthTable { table: vec![false, true, true, false] }),
            Err(Error::NotMonotone)
        ));
    }

    #[test]
    fn majority_counts() {
        let f = AggregationFunction::new(5, &AggregationRule::Majority { theta: 0.8 }).unwrap();
        assert!(!f.eval(&[true, true, true, false, false]));
        assert!(f.eval(&[true, true, false, true, true]));
    }

    #[test]
    fn dedekind_count_for_arity_three() {
        assert_eq!(enumerate_monotone(1).len(), 3);
        assert_eq!(enumerate_monotone(2).len(), 6);
        assert_eq!(enumerate_monotone(3).len(), 20);
        assert_eq!(enumerate_monotone(4).len(), 168);
    }

    #[test]
    fn report_examples() {
        let xs = [ind(0.0), ind(1.0)];
        let panel = vec![constant(0.9), constant(0.1), constant(0.9)];
        let veto = AggregationFunction::new(3, &AggregationRule::Veto { vetoers: vec![1], theta: None }).unwrap();
        let s = AuditingScheme::new(panel.clone(), veto).unwrap();
        assert_eq!(aggregate_and_report(&s, &[0.6, 0.2], &xs, 0.0).1, ViolationReport::Pair { l: 0, r: 1 });
        assert_eq!(aggregate_and_report(&s, &[0.3, 0.3], &xs, 0.0).1, ViolationReport::Null);

        let maj = AggregationFunction::new(3, &AggregationRule::Majority { theta: 2.0 / 3.0 }).unwrap();
        let two_object = vec![constant(0.1), constant(0.2), constant(0.9)];
        let s = AuditingScheme::new(two_object, maj).unwrap();
        assert_eq!(aggregate_and_report(&s, &[0.7, 0.2], &xs, 0.0).1, ViolationReport::Pair { l: 0, r: 1 });
    }

    #[test]
    fn arity_must_match_panel() {
        let f = AggregationFunction::new(2, &AggregationRule::Majority { theta: 0.5 }).unwrap();
        assert!(matches!(AuditingScheme::new(vec![constant(0.1)], f), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn figure_one_pivots() {
        // d² < d³ < d⁵ < d¹ < d⁴ (1-based auditor names)
        let panel: Vec<_> = [0.53, 0.1, 0.3, 0.65, 0.38].iter().map(|d| constant(*d)).collect();
        let pair = (&ind(0.0), &ind(1.0));
        let or_80 = AggregationFunction::new(5, &AggregationRule::Veto { vetoers: vec![2], theta: Some(0.8) }).unwrap();
        assert_eq!(pivot_index(&or_80, &panel, pair).unwrap().auditor, Some(2));
        let and15 = AggregationFunction::new(5, &AggregationRule::Conjunction { members: vec![0, 4] }).unwrap();
        assert_eq!(pivot_index(&and15, &panel, pair).unwrap().auditor, Some(0));
    }

    #[test]
    fn pivot_dummies_and_errors() {
        let panel = vec![constant(0.2), constant(0.4)];
        let pair = (&ind(0.0), &ind(1.0));
        let never = AggregationFunction::from_table(2, vec![false; 4]).unwrap();
        assert_eq!(pivot_index(&never, &panel, pair).unwrap().position, 3);
        let always = AggregationFunction::from_table(2, vec![true; 4]).unwrap();
        assert_eq!(pivot_index(&always, &panel, pair).unwrap().position, 0);
        let xor = AggregationFunction::from_table(2, vec![false, true, true, false]).unwrap();
        assert!(matches!(pivot_index(&xor, &panel, pair), Err(Error::NotMonotone)));
    }

    #[test]
    fn majority_pivot_matches_brute_force() {
        let panel: Vec<_> = [0.1, 0.4, 0.2].iter().map(|d| constant(*d)).collect();
        let maj = AggregationFunction::new(3, &AggregationRule::Majority { theta: 2.0 / 3.0 }).unwrap();
        let scheme = AuditingScheme::new(panel.clone(), maj).unwrap();
        let (a, b) = (ind(0.0), ind(1.0));
        // Which single auditor agrees with the scheme everywhere on the grid?
        let agreeing: Vec<usize> = (0..3)
            .filter(|&i| {
                [0.0, 0.1, 0.25].iter().all(|&alpha| {
                    (-100..=100).all(|g| {
                        let gap = g as f64 / 100.0;
                        scheme.decide(&a, &b, gap, alpha) == objects(gap, panel[i].distance(&a, &b), alpha)
                    })
                })
            })
            .collect();
        assert_eq!(agreeing, vec![2]);
        let p = scheme.pivot(&a, &b).unwrap();
        assert_eq!((p.position, p.auditor), (2, Some(2)));
    }
}
