//! Declarative Monte Carlo experiments over the designs and protocols.
//!
//! A config names a mode, a population, a channel, a slack `eps`, a trial
//! count, a master seed, and a list of budget multipliers. Each multiplier
//! produces one summary row; each trial samples a fresh ground truth, builds
//! the design (or drives the protocol), decodes, and records exact recovery
//! and tests used. Budget multipliers scale every test-count formula in the
//! design, so 0.4 starves it and 2.0 over-provisions it relative to the
//! threshold.

use crate::stats::{mean, percentile, wilson_interval};
use crate::{fmt, HarnessError};
use pooltest_core::channel::NoisyChannel;
use pooltest_core::population::{sample_ground_truth, true_results, ObservedResults};
use pooltest_core::thresholds::ThresholdReport;
use pooltest_core::{presto, spog};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "non-adaptive")]
    NonAdaptive,
    #[serde(rename = "adaptive")]
    Adaptive,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::NonAdaptive => write!(f, "non-adaptive"),
            Mode::Adaptive => write!(f, "adaptive"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub p01: f64,
    pub p10: f64,
}

/// One experiment; unknown JSON keys are rejected to fail fast on typos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n: usize,
    pub alpha: f64,
    pub channel: ChannelSpec,
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(rename = "budget-multipliers", default = "default_multipliers")]
    pub budget_multipliers: Vec<f64>,
}

fn default_multipliers() -> Vec<f64> {
    vec![1.0]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::MalformedInput(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Usage("trials must be >= 1".into()));
        }
        if self.budget_multipliers.is_empty() {
            return Err(HarnessError::Usage(
                "budget-multipliers must be nonempty".into(),
            ));
        }
        if !self
            .budget_multipliers
            .iter()
            .all(|&m| m.is_finite() && m > 0.0)
        {
            return Err(HarnessError::Usage(
                "budget multipliers must be positive".into(),
            ));
        }
        NoisyChannel::new(self.channel.p01, self.channel.p10)?;
        Ok(())
    }
}

/// Aggregated outcome of one (config, multiplier) batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mode: Mode,
    pub n: usize,
    pub alpha: f64,
    pub p01: f64,
    pub p10: f64,
    pub eps: f64,
    pub multiplier: f64,
    pub trials: usize,
    pub tests_mean: f64,
    pub tests_p95: f64,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub seed: u64,
}

/// What a single trial produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub success: bool,
    pub tests: usize,
}

/// The ChaCha stream for one trial. Lane 0 drives ground truth and design
/// randomness; lane 1 feeds the simulated session's observation noise.
pub fn trial_rng(seed: u64, multiplier_index: usize, trial: usize, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = ((multiplier_index as u64) << 33) | ((trial as u64) << 1) | (lane & 1);
    rng.set_stream(stream);
    rng
}

/// Runs one non-adaptive trial: sample truth, build the scaled design, push
/// the ideal results through the channel, decode.
pub fn run_non_adaptive_trial(
    cfg: &ExperimentConfig,
    params: &spog::SpogParams,
    ch: &NoisyChannel,
    multiplier: f64,
    multiplier_index: usize,
    trial: usize,
) -> Result<TrialOutcome, HarnessError> {
    let mut rng = trial_rng(cfg.seed, multiplier_index, trial, 0);
    let sigma = sample_ground_truth(cfg.n, cfg.alpha, &mut rng);
    let design = spog::build_design_with_budget(cfg.n, params, ch, multiplier, &mut rng)?;
    let ideal = true_results(design.design(), &sigma)?;
    let observed = ObservedResults::from_bits(ch.apply_noise(&ideal, &mut rng));
    let decoded = design.decode(&observed, ch)?;
    Ok(TrialOutcome {
        success: decoded == sigma,
        tests: design.total_tests(),
    })
}

/// Runs one adaptive trial against a fresh simulated session.
pub fn run_adaptive_trial(
    cfg: &ExperimentConfig,
    params: &presto::PrestoParams,
    ch: &NoisyChannel,
    multiplier: f64,
    multiplier_index: usize,
    trial: usize,
) -> Result<TrialOutcome, HarnessError> {
    let mut protocol_rng = trial_rng(cfg.seed, multiplier_index, trial, 0);
    let session_rng = trial_rng(cfg.seed, multiplier_index, trial, 1);
    let sigma = sample_ground_truth(cfg.n, cfg.alpha, &mut protocol_rng);
    let mut session = presto::SimulatedSession::new(sigma.clone(), *ch, session_rng);
    let run = presto::run_with_budget(
        &mut session,
        cfg.n,
        ch,
        params,
        multiplier,
        &mut protocol_rng,
    )?;
    Ok(TrialOutcome {
        success: run.estimate == sigma,
        tests: run.tests_used,
    })
}

/// Runs the whole experiment: one summary row per budget multiplier.
///
/// Trials run in parallel but land in a trial-indexed vector before
/// aggregation, so the output is bit-identical at any worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>, HarnessError> {
    cfg.validate()?;
    let ch = NoisyChannel::new(cfg.channel.p01, cfg.channel.p10)?;
    let mut rows = Vec::with_capacity(cfg.budget_multipliers.len());
    for (multiplier_index, &multiplier) in cfg.budget_multipliers.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = match cfg.mode {
            Mode::NonAdaptive => {
                let params = spog::SpogParams::for_constant_prevalence(cfg.alpha, &ch, cfg.eps)?;
                (0..cfg.trials)
                    .into_par_iter()
                    .map(|trial| {
                        run_non_adaptive_trial(
                            cfg,
                            &params,
                            &ch,
                            multiplier,
                            multiplier_index,
                            trial,
                        )
                    })
                    .collect::<Result<_, _>>()?
            }
            Mode::Adaptive => {
                let params = presto::choose_params(cfg.eps, &ch)?;
                (0..cfg.trials)
                    .into_par_iter()
                    .map(|trial| {
                        run_adaptive_trial(cfg, &params, &ch, multiplier, multiplier_index, trial)
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        rows.push(summarize(cfg, multiplier, &outcomes)?);
    }
    Ok(rows)
}

fn summarize(
    cfg: &ExperimentConfig,
    multiplier: f64,
    outcomes: &[TrialOutcome],
) -> Result<SummaryRow, HarnessError> {
    let tests: Vec<usize> = outcomes.iter().map(|o| o.tests).collect();
    let successes = outcomes.iter().filter(|o| o.success).count();
    let (wilson_low, wilson_high) = wilson_interval(successes, outcomes.len())?;
    Ok(SummaryRow {
        mode: cfg.mode,
        n: cfg.n,
        alpha: cfg.alpha,
        p01: cfg.channel.p01,
        p10: cfg.channel.p10,
        eps: cfg.eps,
        multiplier,
        trials: outcomes.len(),
        tests_mean: mean(&tests),
        tests_p95: percentile(&tests, 0.95),
        success_rate: successes as f64 / outcomes.len() as f64,
        wilson_low,
        wilson_high,
        seed: cfg.seed,
    })
}

const SIG: usize = 12;

/// CSV for experiment summaries.
pub fn experiments_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "mode,n,alpha,p01,p10,eps,multiplier,trials,tests_mean,tests_p95,success,wilson_low,wilson_high,seed\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.mode,
            r.n,
            fmt::sig_digits(r.alpha, SIG),
            fmt::sig_digits(r.p01, SIG),
            fmt::sig_digits(r.p10, SIG),
            fmt::sig_digits(r.eps, SIG),
            fmt::sig_digits(r.multiplier, SIG),
            r.trials,
            fmt::sig_digits(r.tests_mean, SIG),
            fmt::sig_digits(r.tests_p95, SIG),
            fmt::sig_digits(r.success_rate, SIG),
            fmt::sig_digits(r.wilson_low, SIG),
            fmt::sig_digits(r.wilson_high, SIG),
            r.seed,
        ));
    }
    out
}

/// CSV for threshold sweeps.
pub fn sweep_csv(reports: &[ThresholdReport]) -> String {
    let mut out = String::from("alpha,p01,p10,gamma_star,xi,c_na,c_ad\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt::sig_digits(r.alpha, SIG),
            fmt::sig_digits(r.p01, SIG),
            fmt::sig_digits(r.p10, SIG),
            r.gamma_star,
            fmt::sig_digits(r.xi_at_gamma_star, SIG),
            fmt::sig_digits(r.c_na, SIG),
            fmt::sig_digits(r.c_ad, SIG),
        ));
    }
    out
}
