//! Misclassification, unfairness and Lagrangian losses.
//!
//! Every loss here is linear in the policy, so functions take the policy's
//! acceptance probabilities at the round's individuals (`values[i] = π(x_i)`)
//! rather than the policy itself.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::auditing::{aggregate_and_report, AuditingScheme, ViolationReport};
use crate::error::{Error, Result};
use crate::hypothesis::{Individual, WeightedLossRecord};

/// Individuals and (possibly unobserved) labels of one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundData {
    pub individuals: Vec<Individual>,
    pub labels: Vec<Option<bool>>,
}

impl RoundData {
    pub fn observed(individuals: Vec<Individual>, labels: &[bool]) -> Self {
        Self { individuals, labels: labels.iter().map(|y| Some(*y)).collect() }
    }

    pub fn k(&self) -> usize {
        self.individuals.len()
    }

    pub fn label(&self, i: usize) -> Result<bool> {
        self.labels[i].ok_or(Error::MissingLabel { slot: i })
    }
}

/// `Σ_i [y_i = 1 ? 1 − π(x_i) : π(x_i)]`, the expected number of mistakes.
pub fn misclassification(values: &[f64], round: &RoundData) -> Result<f64> {
    let mut total = 0.0;
    for (i, v) in values.iter().enumerate() {
        total += if round.label(i)? { 1.0 - v } else { *v };
    }
    Ok(total)
}

pub fn unfair_indicator(report: &ViolationReport) -> u8 {
    u8::from(!report.is_null())
}

/// Everything the unfairness proxy needs besides the evaluated policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyContext {
    pub report: ViolationReport,
    /// `(π̃(x_l), π̃(x_r))` at the reported pair.
    pub tilde_values: Option<[f64; 2]>,
    pub beta: f64,
    pub alpha_query: f64,
}

impl ProxyContext {
    /// Builds the context from the estimate's values at all round slots.
    pub fn new(report: ViolationReport, tilde_all: &[f64], beta: f64, alpha_query: f64) -> Self {
        let tilde_values = report.pair().map(|(l, r)| [tilde_all[l], tilde_all[r]]);
        Self { report, tilde_values, beta, alpha_query }
    }

    /// `β − [π̃(x_l) − π̃(x_r)]` for a reported round, 0 otherwise.
    pub fn offset(&self) -> f64 {
        match self.tilde_values {
            Some([tl, tr]) => self.beta - (tl - tr),
            None => 0.0,
        }
    }
}

/// `[π(x_l) − π(x_r)] − [π̃(x_l) − π̃(x_r)] + β` if a pair was reported, else 0.
pub fn unfair_proxy(pair_values: [f64; 2], ctx: &ProxyContext) -> f64 {
    match ctx.tilde_values {
        Some(_) => pair_values[0] - pair_values[1] + ctx.offset(),
        None => 0.0,
    }
}

/// Proxy evaluated on a policy given its values at every slot of the round.
pub fn unfair_proxy_at(values: &[f64], ctx: &ProxyContext) -> f64 {
    match ctx.report.pair() {
        Some((l, r)) => unfair_proxy([values[l], values[r]], ctx),
        None => 0.0,
    }
}

/// One round's Lagrangian loss, frozen when it enters the FTPL history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianRound {
    pub individuals: Vec<Individual>,
    /// `T^{2b}/k`.
    pub error_weight: f64,
    /// Unweighted error losses `(loss if 0, loss if 1)` per slot; 0-1 losses
    /// under full information, resampling estimates under one-sided feedback.
    pub slot_error_losses: Vec<[f64; 2]>,
    pub proxy: ProxyContext,
    pub lambda: f64,
    pub mu: f64,
}

/// Terms of `L^t` that do not depend on the hypothesis and are therefore
/// left out of the oracle records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DroppedConstants {
    /// `λ·(β − [π̃(x_l) − π̃(x_r)])`.
    pub proxy: f64,
    /// `−μλ²/2`.
    pub regularizer: f64,
}

impl LagrangianRound {
    /// 0-1 slot losses from fully observed labels.
    pub fn zero_one_losses(labels: &[bool]) -> Vec<[f64; 2]> {
        labels.iter().map(|&y| if y { [1.0, 0.0] } else { [0.0, 1.0] }).collect()
    }

    pub fn k(&self) -> usize {
        self.individuals.len()
    }

    pub fn dropped_constants(&self) -> DroppedConstants {
        DroppedConstants {
            proxy: self.lambda * self.proxy.offset(),
            regularizer: -self.mu * self.lambda * self.lambda / 2.0,
        }
    }

    /// Order-sensitive digest of every stored bit.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.individuals.iter().flat_map(|x| x.features()).for_each(|v| v.to_bits().hash(&mut h));
        self.error_weight.to_bits().hash(&mut h);
        self.slot_error_losses.iter().flatten().for_each(|v| v.to_bits().hash(&mut h));
        self.proxy.report.hash(&mut h);
        self.proxy.tilde_values.iter().flatten().for_each(|v| v.to_bits().hash(&mut h));
        self.proxy.beta.to_bits().hash(&mut h);
        self.proxy.alpha_query.to_bits().hash(&mut h);
        self.lambda.to_bits().hash(&mut h);
        self.mu.to_bits().hash(&mut h);
        h.finish()
    }
}

/// `error_weight·Error + λ·proxy`, minus `μλ²/2` when `regularized`.
pub fn lagrangian(values: &[f64], round: &LagrangianRound, regularized: bool) -> f64 {
    let error: f64 = values.iter().zip(&round.slot_error_losses).map(|(v, [l0, l1])| (1.0 - v) * l0 + v * l1).sum();
    let mut total = round.error_weight * error + round.lambda * unfair_proxy_at(values, &round.proxy);
    if regularized {
        total -= round.mu * round.lambda * round.lambda / 2.0;
    }
    total
}

/// Oracle records whose total on any hypothesis `h`, plus
/// [`LagrangianRound::dropped_constants`], equals `L̄(h)`.
pub fn slot_decomposition(round: &LagrangianRound) -> Vec<WeightedLossRecord> {
    let mut records: Vec<WeightedLossRecord> = round
        .individuals
        .iter()
        .zip(&round.slot_error_losses)
        .map(|(x, [l0, l1])| WeightedLossRecord {
            context: x.clone(),
            action_losses: [round.error_weight * l0, round.error_weight * l1],
            weight: 1.0,
        })
        .collect();
    if let Some((l, r)) = round.proxy.report.pair() {
        records[l].action_losses[1] += round.lambda;
        records[r].action_losses[1] -= round.lambda;
    }
    records
}

/// Both sides of `Unfair_α(π) ≤ (2/ε′)·UnfairProxy(π, π̃, α − ε′, ε′)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DominanceWitness {
    pub unfair: u8,
    pub bound: f64,
}

impl DominanceWitness {
    pub fn holds(&self) -> bool {
        f64::from(self.unfair) <= self.bound
    }
}

/// Evaluates the proxy-dominance inequality for a monotone scheme, given
/// `π` and `π̃` values at every slot. Requires `|π − π̃| ≤ ε′/4` pointwise.
pub fn proxy_dominates_unfair(
    scheme: &AuditingScheme,
    individuals: &[Individual],
    pi_values: &[f64],
    tilde_values: &[f64],
    alpha: f64,
    eps_prime: f64,
) -> Result<DominanceWitness> {
    let limit = eps_prime / 4.0;
    let gap = pi_values.iter().zip(tilde_values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if gap > limit {
        return Err(Error::PreconditionViolated { gap, limit });
    }
    let (_, actual) = aggregate_and_report(scheme, pi_values, individuals, alpha);
    let (_, queried) = aggregate_and_report(scheme, tilde_values, individuals, alpha - eps_prime);
    let ctx = ProxyContext::new(queried, tilde_values, eps_prime, alpha - eps_prime);
    Ok(DominanceWitness {
        unfair: unfair_indicator(&actual),
        bound: 2.0 / eps_prime * unfair_proxy_at(pi_values, &ctx),
    })
}
