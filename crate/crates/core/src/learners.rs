//! The full-information and one-sided-feedback learners.
//!
//! Each round draws `R` Context-FTPL samples to form the empirical policy
//! `π̃`, queries the auditing scheme at sensitivity `α − ε/2` on `π̃`,
//! deploys one more sample, freezes the round's Lagrangian loss into the
//! FTPL history and takes a projected gradient step on `λ`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::auditing::{aggregate_and_report, AuditingScheme, ViolationReport};
use crate::environment::LabelCurtain;
use crate::error::{Error, Result};
use crate::ftpl::{semi_bandit_loss_estimate, ContextFtpl, PerturbationConfig, ResamplingConfig};
use crate::hypothesis::{HypothesisFamily, Individual};
use crate::losses::{unfair_proxy_at, DroppedConstants, LagrangianRound, ProxyContext};
use crate::rng::{substream, Rng, DEPLOY, FTPL, RESAMPLE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    Partial,
}

impl Mode {
    /// Largest frontier exponent `b` the mode's schedule allows.
    pub fn max_frontier(self) -> f64 {
        match self {
            Mode::Full => 0.25,
            Mode::Partial => 1.0 / 6.0,
        }
    }
}

/// The inputs from which every learner parameter is derived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub horizon: usize,
    pub k: usize,
    pub separator_size: usize,
    pub family_size: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub b: f64,
    pub mode: Mode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub schedule: Schedule,
    /// Dual step size.
    pub mu: f64,
    pub omega: f64,
    /// FTPL samples per round.
    pub draws: usize,
    /// Geometric-resampling cap (partial mode only).
    pub max_draws: Option<u32>,
    pub eps_prime: f64,
    pub beta: f64,
    pub alpha_query: f64,
    /// `T^{2b}/k`.
    pub error_weight: f64,
}

pub fn make_hyperparameters(schedule: Schedule) -> Result<Hyperparameters> {
    let Schedule { horizon, k, separator_size, family_size, alpha, epsilon, delta, b, mode } = schedule;
    let bad = |m: String| Err(Error::InvalidRange(m));
    if horizon == 0 || k == 0 || separator_size == 0 || family_size == 0 {
        return bad("T, k, s and |H| must be positive".into());
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return bad(format!("alpha = {alpha} outside (0, 1]"));
    }
    if !(epsilon > 0.0 && epsilon <= alpha) {
        return bad(format!("epsilon = {epsilon} outside (0, alpha]"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return bad(format!("delta = {delta} outside (0, 1]"));
    }
    if !(b >= 0.0 && b <= mode.max_frontier()) {
        return bad(format!("b = {b} outside [0, {}] for {mode:?} mode", mode.max_frontier()));
    }
    let t = horizon as f64;
    let kf = k as f64;
    let s = separator_size as f64;
    let draws = (64.0 / (epsilon * epsilon) * (2.0 * kf * t / delta).ln()).ceil().max(1.0) as usize;
    let (mu, omega, max_draws) = match mode {
        Mode::Full => {
            let mu = t.powf(-0.5);
            (mu, mu / (32.0 * kf * s), None)
        }
        Mode::Partial => {
            let mu = t.powf(-1.0 / 3.0);
            let m = (16.0 * kf / (mu * E)).ceil();
            (mu, mu * mu * E / (512.0 * s * kf.powi(4)), Some(m as u32))
        }
    };
    let eps_prime = epsilon / 2.0;
    Ok(Hyperparameters {
        schedule,
        mu,
        omega,
        draws,
        max_draws,
        eps_prime,
        beta: eps_prime,
        alpha_query: alpha - epsilon / 2.0,
        error_weight: t.powf(2.0 * b) / kf,
    })
}

/// Projected gradient step `max{0, λ + μ(g − μλ)}`.
pub fn dual_update(lambda: f64, mu: f64, proxy_at_estimate: f64) -> f64 {
    (lambda + mu * (proxy_at_estimate - mu * lambda)).max(0.0)
}

/// Per-round telemetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub t: usize,
    /// Member deployed this round.
    pub deployed: usize,
    /// Mistakes of the deployed member on the round's labels.
    pub realized_error: usize,
    pub report: ViolationReport,
    /// Unfairness proxy evaluated at `π̃` itself.
    pub proxy: f64,
    pub lambda_before: f64,
    pub lambda_after: f64,
    pub oracle_calls: u64,
    /// `Σ K_i` over the round's positive slots (0 in full mode).
    pub resample_draws: u64,
    pub dropped: DroppedConstants,
}

/// Mutable state of one learner run.
#[derive(Clone, Debug)]
pub struct LearnerState<'f> {
    pub ftpl: ContextFtpl<'f>,
    pub lambda: f64,
    /// Rounds completed so far.
    pub t: usize,
    pub cum_oracle_calls: u64,
}

/// One learner run: hyperparameters, state and its private random streams.
#[derive(Clone, Debug)]
pub struct Learner<'f> {
    hyper: Hyperparameters,
    state: LearnerState<'f>,
    ftpl_rng: Rng,
    deploy_rng: Rng,
    resample_rng: Rng,
}

struct Deployment {
    values: Vec<f64>,
    report: ViolationReport,
    predictions: Vec<bool>,
    deployed: usize,
}

impl<'f> Learner<'f> {
    pub fn new(family: &'f HypothesisFamily, hyper: Hyperparameters, seed: u64) -> Result<Self> {
        if family.len() != hyper.schedule.family_size || family.separator_size() != hyper.schedule.separator_size {
            return Err(Error::Config("hyperparameters were derived for a different family".into()));
        }
        let ftpl = ContextFtpl::new(family, PerturbationConfig::new(hyper.omega)?);
        Ok(Self {
            hyper,
            state: LearnerState { ftpl, lambda: 0.0, t: 0, cum_oracle_calls: 0 },
            ftpl_rng: substream(seed, FTPL),
            deploy_rng: substream(seed, DEPLOY),
            resample_rng: substream(seed, RESAMPLE),
        })
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn state(&self) -> &LearnerState<'f> {
        &self.state
    }

    fn check_round(&self, individuals: &[Individual], scheme: &AuditingScheme) -> Result<()> {
        if !scheme.is_monotone() {
            return Err(Error::NonMonotoneScheme { round: self.state.t + 1 });
        }
        if individuals.len() != self.hyper.schedule.k {
            return Err(Error::DimensionMismatch { expected: self.hyper.schedule.k, got: individuals.len() });
        }
        Ok(())
    }

    /// Estimate `π̃`, query the scheme on it and deploy one more sample.
    fn deploy(&mut self, individuals: &[Individual], scheme: &AuditingScheme) -> Result<Deployment> {
        let family = self.state.ftpl.family();
        let table = family.prediction_table(individuals);
        let tilde = self.state.ftpl.estimate_policy(self.hyper.draws, &mut self.ftpl_rng)?;
        let values = tilde.values(&table);
        let (_, report) = aggregate_and_report(scheme, &values, individuals, self.hyper.alpha_query);
        let deployed = self.state.ftpl.sample(&mut self.deploy_rng);
        let predictions = table.row(deployed).to_vec();
        Ok(Deployment { values, report, predictions, deployed })
    }

    /// Freeze the round, step `λ` and log.
    fn finish(
        &mut self,
        individuals: &[Individual],
        deployment: Deployment,
        slot_error_losses: Vec<[f64; 2]>,
        realized_error: usize,
        resample_draws: u64,
        calls_before: u64,
    ) -> RoundLog {
        let proxy_ctx =
            ProxyContext::new(deployment.report, &deployment.values, self.hyper.beta, self.hyper.alpha_query);
        let proxy = unfair_proxy_at(&deployment.values, &proxy_ctx);
        let lambda_before = self.state.lambda;
        let round = LagrangianRound {
            individuals: individuals.to_vec(),
            error_weight: self.hyper.error_weight,
            slot_error_losses,
            proxy: proxy_ctx,
            lambda: lambda_before,
            mu: self.hyper.mu,
        };
        let dropped = round.dropped_constants();
        self.state.ftpl.push(round);
        self.state.lambda = dual_update(lambda_before, self.hyper.mu, proxy);
        self.state.t += 1;
        let oracle_calls = self.state.ftpl.oracle_calls() - calls_before;
        self.state.cum_oracle_calls += oracle_calls;
        RoundLog {
            t: self.state.t,
            deployed: deployment.deployed,
            realized_error,
            report: deployment.report,
            proxy,
            lambda_before,
            lambda_after: self.state.lambda,
            oracle_calls,
            resample_draws,
            dropped,
        }
    }

    /// One round with every label observed.
    pub fn full_info_round(
        &mut self,
        individuals: &[Individual],
        labels: &[bool],
        scheme: &AuditingScheme,
    ) -> Result<RoundLog> {
        self.check_round(individuals, scheme)?;
        if labels.len() != individuals.len() {
            return Err(Error::DimensionMismatch { expected: individuals.len(), got: labels.len() });
        }
        let calls_before = self.state.ftpl.oracle_calls();
        let deployment = self.deploy(individuals, scheme)?;
        let realized_error = deployment.predictions.iter().zip(labels).filter(|(p, y)| p != y).count();
        let losses = LagrangianRound::zero_one_losses(labels);
        Ok(self.finish(individuals, deployment, losses, realized_error, 0, calls_before))
    }

    /// One round where label `i` is visible only if the deployed member
    /// predicted 1 on slot `i`.
    pub fn partial_info_round(
        &mut self,
        individuals: &[Individual],
        curtain: &mut LabelCurtain,
        scheme: &AuditingScheme,
    ) -> Result<RoundLog> {
        self.check_round(individuals, scheme)?;
        let resampling = ResamplingConfig::new(
            self.hyper.max_draws.ok_or_else(|| Error::Config("partial mode needs a resampling cap".into()))?,
        )?;
        let calls_before = self.state.ftpl.oracle_calls();
        let deployment = self.deploy(individuals, scheme)?;
        let mut observed = vec![None; individuals.len()];
        let mut ks = vec![None; individuals.len()];
        for (i, &p) in deployment.predictions.iter().enumerate() {
            observed[i] = curtain.reveal(i, p);
            if p {
                ks[i] =
                    Some(self.state.ftpl.geometric_resample(&individuals[i], true, resampling, &mut self.resample_rng));
            }
        }
        let losses = semi_bandit_loss_estimate(&deployment.predictions, &observed, &ks)?;
        let resample_draws = ks.iter().flatten().map(|&k| u64::from(k)).sum();
        let realized_error = curtain.mistakes(&deployment.predictions);
        Ok(self.finish(individuals, deployment, losses, realized_error, resample_draws, calls_before))
    }
}
