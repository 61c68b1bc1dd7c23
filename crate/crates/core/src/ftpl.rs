//! Context-FTPL over a small separating set, and the geometric-resampling
//! loss estimator used under one-sided feedback.
//!
//! A draw perturbs the history with one fake record per separator point `q`
//! whose action losses `(z_{q,0}, z_{q,1})` are i.i.d. Laplace with density
//! `(ω/2)·exp(−ω|z|)`, then asks the ERM oracle for the leader. The leader
//! computation here keeps running per-member totals of the frozen history, so
//! a draw costs `O(|ℋ|·s)` instead of a rescan of every past record; it
//! returns the same member as [`erm_oracle`](crate::hypothesis::erm_oracle)
//! over `history ∪ fake records`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{EmpiricalPolicy, HypothesisFamily, Individual, OracleCounter, WeightedLossRecord};
use crate::losses::{slot_decomposition, LagrangianRound};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    /// Laplace rate; the noise scale is `1/ω`.
    pub omega: f64,
}

impl PerturbationConfig {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidRange(format!("omega must be finite and positive, got {omega}")));
        }
        Ok(Self { omega })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        if rng.random::<bool>() {
            e / self.omega
        } else {
            -e / self.omega
        }
    }
}

/// Cap `M` on geometric resampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplingConfig {
    pub max_draws: u32,
}

impl ResamplingConfig {
    pub fn new(max_draws: u32) -> Result<Self> {
        if max_draws == 0 {
            return Err(Error::InvalidRange("M must be at least 1".into()));
        }
        Ok(Self { max_draws })
    }
}

/// A history entry; never modified after it is pushed.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenRound {
    pub round: LagrangianRound,
    pub records: Vec<WeightedLossRecord>,
}

/// Append-only list of frozen Lagrangian rounds.
#[derive(Clone, Debug, Default)]
pub struct FtplHistory {
    rounds: Vec<FrozenRound>,
}

impl FtplHistory {
    pub fn rounds(&self) -> &[FrozenRound] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &WeightedLossRecord> {
        self.rounds.iter().flat_map(|r| r.records.iter())
    }
}

/// Context-FTPL sampler bound to one family and one run.
#[derive(Clone, Debug)]
pub struct ContextFtpl<'f> {
    family: &'f HypothesisFamily,
    perturbation: PerturbationConfig,
    history: FtplHistory,
    /// Σ of history record losses per member.
    totals: Vec<f64>,
    /// `membership[q·|ℋ| + h] = h(q)` as 0.0 or 1.0.
    membership: Vec<f64>,
    scores: Vec<f64>,
    oracle: OracleCounter,
    deltas: Vec<f64>,
}

impl<'f> ContextFtpl<'f> {
    pub fn new(family: &'f HypothesisFamily, perturbation: PerturbationConfig) -> Self {
        let membership = family
            .separator()
            .iter()
            .flat_map(|q| family.members().iter().map(move |h| if h.predict(q) { 1.0 } else { 0.0 }))
            .collect();
        Self {
            family,
            perturbation,
            history: FtplHistory::default(),
            totals: vec![0.0; family.len()],
            membership,
            scores: vec![0.0; family.len()],
            oracle: OracleCounter::default(),
            deltas: vec![0.0; family.separator_size()],
        }
    }

    pub fn family(&self) -> &'f HypothesisFamily {
        self.family
    }

    pub fn perturbation(&self) -> PerturbationConfig {
        self.perturbation
    }

    pub fn history(&self) -> &FtplHistory {
        &self.history
    }

    /// History loss of every member (without the dropped constants).
    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn oracle_calls(&self) -> u64 {
        self.oracle.calls
    }

    /// Freezes a round into the history.
    pub fn push(&mut self, round: LagrangianRound) {
        let records = slot_decomposition(&round);
        let table = self.family.prediction_table(&round.individuals);
        for (h, total) in self.totals.iter_mut().enumerate() {
            *total += records.iter().zip(table.row(h)).map(|(r, &p)| r.loss_of(p)).sum::<f64>();
        }
        self.history.rounds.push(FrozenRound { round, records });
    }

    /// Fresh noise `(z_{q,0}, z_{q,1})` for every separator point.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<[f64; 2]> {
        (0..self.family.separator_size())
            .map(|_| [self.perturbation.sample(rng), self.perturbation.sample(rng)])
            .collect()
    }

    pub fn fake_records(&self, noise: &[[f64; 2]]) -> Vec<WeightedLossRecord> {
        self.family
            .separator()
            .iter()
            .zip(noise)
            .map(|(q, z)| WeightedLossRecord { context: q.clone(), action_losses: *z, weight: 1.0 })
            .collect()
    }

    /// ERM over history plus the fake records for `noise`. One oracle call.
    pub fn leader_with_noise(&mut self, noise: &[[f64; 2]]) -> usize {
        for (d, z) in self.deltas.iter_mut().zip(noise) {
            *d = z[1] - z[0];
        }
        self.leader()
    }

    fn leader(&mut self) -> usize {
        self.oracle.bump();
        let n = self.totals.len();
        self.scores.copy_from_slice(&self.totals);
        for (row, &d) in self.membership.chunks_exact(n).zip(&self.deltas) {
            for (score, &bit) in self.scores.iter_mut().zip(row) {
                *score += bit * d;
            }
        }
        let mut best = 0;
        for (h, &score) in self.scores.iter().enumerate() {
            if score < self.scores[best] {
                best = h;
            }
        }
        best
    }

    /// One Context-FTPL draw with fresh noise.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let scale = 1.0 / self.perturbation.omega;
        let (mut signs, mut left) = (0u64, 0u32);
        for d in self.deltas.iter_mut() {
            if left < 2 {
                signs = rng.next_u64();
                left = 64;
            }
            let z0: f64 = Exp1.sample(rng);
            let z1: f64 = Exp1.sample(rng);
            let z0 = f64::from_bits(z0.to_bits() ^ (signs << 63));
            let z1 = f64::from_bits(z1.to_bits() ^ ((signs >> 1) << 63));
            signs >>= 2;
            left -= 2;
            *d = (z1 - z0) * scale;
        }
        self.leader()
    }

    /// `R` independent draws: `π̃ = 𝕌(h₁, …, h_R)`.
    pub fn estimate_policy<R: Rng + ?Sized>(&mut self, draws: usize, rng: &mut R) -> Result<EmpiricalPolicy> {
        if draws == 0 {
            return Err(Error::InvalidRange("R must be at least 1".into()));
        }
        EmpiricalPolicy::new((0..draws).map(|_| self.sample(rng)).collect())
    }

    /// Draws until a sampled member predicts `action` on `x`, at most
    /// `M` times; returns the number of draws `K` (each one oracle call).
    pub fn geometric_resample<R: Rng + ?Sized>(
        &mut self,
        x: &Individual,
        action: bool,
        config: ResamplingConfig,
        rng: &mut R,
    ) -> u32 {
        let family = self.family;
        truncated_geometric(config.max_draws, || family.predict(self.sample(rng), x) == action)
    }
}

/// Index of the first successful trial, or `max_draws` if none succeeds.
pub fn truncated_geometric(max_draws: u32, mut trial: impl FnMut() -> bool) -> u32 {
    for k in 1..=max_draws {
        if trial() {
            return k;
        }
    }
    max_draws
}

/// `E[K] = (1 − (1 − q)^M) / q` for success probability `q`.
pub fn truncated_geometric_mean(q: f64, max_draws: u32) -> f64 {
    if q == 0.0 {
        return f64::from(max_draws);
    }
    (1.0 - (1.0 - q).powi(max_draws as i32)) / q
}

/// Inverse-propensity error losses: slot `i` predicted 1 gets
/// `(K_i·1[y_i ≠ 0], K_i·1[y_i ≠ 1])`; slots predicted 0 get zeros.
pub fn semi_bandit_loss_estimate(
    predictions: &[bool],
    observed_labels: &[Option<bool>],
    k_values: &[Option<u32>],
) -> Result<Vec<[f64; 2]>> {
    predictions
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if !p {
                return Ok([0.0, 0.0]);
            }
            let k = f64::from(k_values.get(i).copied().flatten().ok_or(Error::MissingK { slot: i })?);
            let y = observed_labels.get(i).copied().flatten().ok_or(Error::MissingLabel { slot: i })?;
            Ok(if y { [k, 0.0] } else { [0.0, k] })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auditing::ViolationReport;
    use crate::hypothesis::{erm_oracle, Rule};
    use crate::losses::ProxyContext;
    use crate::rng::substream;

    fn ind(v: f64) -> Individual {
        Individual::new(vec![v]).unwrap()
    }

    fn thresholds(n: usize) -> HypothesisFamily {
        let mut rules = vec![Rule::Constant(false), Rule::Constant(true)];
        rules.extend((0..n).map(|i| Rule::Threshold { coord: 0, cutoff: i as f64, positive: i % 2 == 0 }));
        let pool: Vec<_> = (0..=2 * n + 2).map(|i| ind(i as f64 / 2.0 - 0.75)).collect();
        HypothesisFamily::build(rules, &pool).unwrap()
    }

    fn round(x: Vec<Individual>, labels: &[bool], report: ViolationReport, lambda: f64) -> LagrangianRound {
        let tilde = vec![0.5; x.len()];
        LagrangianRound {
            slot_error_losses: LagrangianRound::zero_one_losses(labels),
            individuals: x,
            error_weight: 0.5,
            proxy: ProxyContext::new(report, &tilde, 0.1, 0.2),
            lambda,
            mu: 0.1,
        }
    }

    #[test]
    fn fast_leader_matches_generic_oracle() {
        let fam = thresholds(8);
        let mut ftpl = ContextFtpl::new(&fam, PerturbationConfig::new(0.5).unwrap());
        let mut rng = substream(1, "test");
        for t in 0..30 {
            let x = vec![ind((t % 9) as f64 - 0.5), ind((t * 7 % 11) as f64 - 1.5)];
            let report = if t % 3 == 0 { ViolationReport::Pair { l: 0, r: 1 } } else { ViolationReport::Null };
            ftpl.push(round(x, &[t % 2 == 0, t % 5 == 0], report, t as f64 * 0.1));
        }
        let mut counter = OracleCounter::default();
        for _ in 0..200 {
            let noise = ftpl.draw_noise(&mut rng);
            let mut records: Vec<_> = ftpl.history().records().cloned().collect();
            records.extend(ftpl.fake_records(&noise));
            assert_eq!(ftpl.leader_with_noise(&noise), erm_oracle(&records, &fam, &mut counter));
        }
        assert_eq!(ftpl.oracle_calls(), 200);
    }

    #[test]
    fn symmetric_race_is_fair_coin() {
        let pool = [ind(0.0), ind(1.0)];
        let fam = HypothesisFamily::build(vec![Rule::Constant(false), Rule::Constant(true)], &pool).unwrap();
        let mut ftpl = ContextFtpl::new(&fam, PerturbationConfig::new(1.0).unwrap());
        let mut rng = substream(2, "test");
        let ones = (0..10_000).filter(|_| ftpl.sample(&mut rng) == 1).count();
        assert!((ones as f64 / 1e4 - 0.5).abs() < 0.02, "{ones}");
    }

    #[test]
    fn dominant_history_wins() {
        let pool = [ind(0.0), ind(1.0)];
        let fam = HypothesisFamily::build(vec![Rule::Constant(false), Rule::Constant(true)], &pool).unwrap();
        let mut ftpl = ContextFtpl::new(&fam, PerturbationConfig::new(1.0).unwrap());
        for _ in 0..200 {
            ftpl.push(round(vec![ind(0.0)], &[true], ViolationReport::Null, 0.0));
        }
        let mut rng = substream(3, "test");
        let wins = (0..1000).filter(|_| ftpl.sample(&mut rng) == 1).count();
        assert!(wins >= 990, "{wins}");
    }

    #[test]
    fn huge_omega_falls_back_to_tie_break() {
        let pool = [ind(0.0), ind(1.0)];
        let fam = HypothesisFamily::build(vec![Rule::Constant(false), Rule::Constant(true)], &pool).unwrap();
        let mut ftpl = ContextFtpl::new(&fam, PerturbationConfig::new(1e300).unwrap());
        let mut rng = substream(4, "test");
        assert!(ftpl.sample(&mut rng) < fam.len());
        assert!(PerturbationConfig::new(0.0).is_err());
    }

    #[test]
    fn estimate_policy_counts_calls() {
        let fam = thresholds(4);
        let mut ftpl = ContextFtpl::new(&fam, PerturbationConfig::new(1.0).unwrap());
        let mut rng = substream(5, "test");
        let single = ftpl.estimate_policy(1, &mut rng).unwrap();
        assert_eq!(single.sample_ids().len(), 1);
        assert_eq!(single.to_policy(fam.len()).weights().iter().filter(|w| **w == 1.0).count(), 1);
        ftpl.estimate_policy(37, &mut rng).unwrap();
        assert_eq!(ftpl.oracle_calls(), 38);
        assert!(ftpl.estimate_policy(0, &mut rng).is_err());
    }

    #[test]
    fn resampling_extremes() {
        let pool = [ind(0.0), ind(1.0)];
        let fam = HypothesisFamily::build(
            vec![Rule::Constant(true), Rule::Threshold { coord: 0, cutoff: 0.5, positive: true }],
            &pool,
        )
        .unwrap();
        let mut ftpl = ContextFtpl::new(&fam, PerturbationConfig::new(1.0).unwrap());
        let mut rng = substream(6, "test");
        let m = ResamplingConfig::new(50).unwrap();
        // every member predicts 1 at x = 2
        for _ in 0..20 {
            assert_eq!(ftpl.geometric_resample(&ind(2.0), true, m, &mut rng), 1);
            assert_eq!(ftpl.geometric_resample(&ind(2.0), false, m, &mut rng), 50);
        }
        assert!(ResamplingConfig::new(0).is_err());
    }

    #[test]
    fn truncated_geometric_mean_closed_form() {
        assert_eq!(truncated_geometric_mean(1.0, 10), 1.0);
        assert_eq!(truncated_geometric_mean(0.0, 10), 10.0);
        assert!((truncated_geometric_mean(0.5, 100) - 2.0).abs() < 1e-12);
        // direct sum Σ_{k<M} k q (1−q)^{k−1} + M (1−q)^{M−1}
        let (q, m) = (0.3, 7u32);
        let direct: f64 = (1..m).map(|k| k as f64 * q * (1.0 - q).powi(k as i32 - 1)).sum::<f64>()
            + m as f64 * (1.0 - q).powi(m as i32 - 1);
        assert!((truncated_geometric_mean(q, m) - direct).abs() < 1e-12);
    }

    #[test]
    fn loss_estimate_examples() {
        assert_eq!(
            semi_bandit_loss_estimate(&[false, false], &[None, None], &[None, None]).unwrap(),
            vec![[0.0, 0.0]; 2]
        );
        assert_eq!(semi_bandit_loss_estimate(&[true], &[Some(true)], &[Some(3)]).unwrap(), vec![[3.0, 0.0]]);
        assert_eq!(semi_bandit_loss_estimate(&[true], &[Some(false)], &[Some(2)]).unwrap(), vec![[0.0, 2.0]]);
        assert!(matches!(semi_bandit_loss_estimate(&[true], &[Some(true)], &[None]), Err(Error::MissingK { slot: 0 })));
    }
}
