//! Batch simulation: seeded episodes per acceptance policy, acceptance
//! statistics, a token-deviation success proxy and speedup estimates.
//!
//! The success proxy is a surrogate computed in token space. It says nothing
//! about whether a robot would complete a task.

mod report;
mod speedup;

pub use report::{aggregate, PolicyReport, Report, ReportSettings, REPORT_SCHEMA_VERSION};
pub use speedup::{analytic_speedup, measure_speedup, CostModel, SpeedupMeasurement};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::action_space::{bin_distance, ActionToken, ACTION_DIMS};
use crate::config::RunConfig;
use crate::error::HarnessError;
use crate::hash::combine;
use crate::models::{make_noisy_draft, HashVerifier, NoisyDraft, PrefixState};
use crate::par::Parallelism;
use crate::verify_engine::{ar_decode, decode_episode, AcceptancePolicy, DecodeParams, Episode, VerifyOutcome};

/// Per-episode acceptance statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub outcomes: Vec<VerifyOutcome>,
    /// Count of verification steps by accepted draft length, `0..=max_depth`.
    pub histogram: Vec<u64>,
    /// Accepted draft tokens summed by step start position mod 7.
    pub position_accepted: [u64; ACTION_DIMS],
    /// Steps by start position mod 7.
    pub position_steps: [u64; ACTION_DIMS],
    pub tokens_per_pass: f64,
    pub tokens: Vec<ActionToken>,
    pub success_proxy: bool,
    pub ar_identical: bool,
    /// Seconds per decoded token. Not part of any byte-stable output.
    pub wall_clock: f64,
}

impl EpisodeStats {
    pub fn steps(&self) -> u64 {
        self.outcomes.len() as u64
    }

    pub fn accepted_total(&self) -> u64 {
        self.outcomes.iter().map(|o| o.accepted as u64).sum()
    }

    pub fn emitted_total(&self) -> u64 {
        self.outcomes.iter().map(|o| o.emitted.len() as u64).sum()
    }

    /// Mean accepted length by start position mod 7 (`None` where no step started).
    pub fn per_position(&self) -> Vec<Option<f64>> {
        (0..ACTION_DIMS)
            .map(|p| {
                (self.position_steps[p] > 0)
                    .then(|| self.position_accepted[p] as f64 / self.position_steps[p] as f64)
            })
            .collect()
    }

    /// Build the statistics of a decoded episode.
    ///
    /// `ar_tokens` is the greedy baseline for the same prefix;
    /// `tolerance_bins` parameterizes the success proxy.
    pub fn from_episode(
        episode: &Episode,
        max_depth: usize,
        ar_tokens: &[ActionToken],
        tolerance_bins: u32,
        wall_clock: f64,
    ) -> Result<Self, HarnessError> {
        let mut histogram = vec![0u64; max_depth + 1];
        let mut position_accepted = [0u64; ACTION_DIMS];
        let mut position_steps = [0u64; ACTION_DIMS];
        for o in &episode.outcomes {
            let slot = histogram
                .get_mut(o.accepted)
                .ok_or(HarnessError::HistogramOverflow { length: o.accepted, max_depth })?;
            *slot += 1;
            position_accepted[o.position % ACTION_DIMS] += o.accepted as u64;
            position_steps[o.position % ACTION_DIMS] += 1;
        }
        let steps = episode.outcomes.len() as u64;
        let accepted: u64 = histogram.iter().enumerate().map(|(len, c)| len as u64 * c).sum();
        let tokens_per_pass = 1.0 + accepted as f64 / steps.max(1) as f64;

        let reference = reference_trace(&episode.outcomes, episode.tokens.len());
        Ok(Self {
            outcomes: episode.outcomes.clone(),
            histogram,
            position_accepted,
            position_steps,
            tokens_per_pass,
            tokens: episode.tokens.clone(),
            success_proxy: success_proxy(&episode.tokens, &reference, tolerance_bins)?,
            ar_identical: episode.tokens == ar_tokens,
            wall_clock,
        })
    }
}

/// The verifier's greedy choice at every emitted position, truncated to `len`.
pub fn reference_trace(outcomes: &[VerifyOutcome], len: usize) -> Vec<ActionToken> {
    outcomes.iter().flat_map(|o| o.references.iter().copied()).take(len).collect()
}

/// True iff every aligned token pair is within `tolerance_bins`.
pub fn success_proxy(
    decoded: &[ActionToken],
    reference: &[ActionToken],
    tolerance_bins: u32,
) -> Result<bool, HarnessError> {
    if decoded.len() != reference.len() {
        return Err(HarnessError::LengthMismatch { left: decoded.len(), right: reference.len() });
    }
    if decoded.len() % ACTION_DIMS != 0 {
        return Err(HarnessError::NotChunked(decoded.len()));
    }
    Ok(decoded.iter().zip(reference).all(|(&a, &b)| bin_distance(a, b) <= tolerance_bins))
}

/// All episodes of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRun {
    pub policy: AcceptancePolicy,
    pub episodes: Vec<EpisodeStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub max_depth: usize,
    pub runs: Vec<PolicyRun>,
}

/// Models built from a run configuration.
pub struct Workload {
    pub verifier: HashVerifier,
    pub draft: NoisyDraft<HashVerifier>,
    pub prefixes: Vec<PrefixState>,
}

const VERIFIER_STREAM: u64 = 1;
const DRAFT_STREAM: u64 = 2;
const PROMPT_STREAM: u64 = 3;
const OBSERVATION_STREAM: u64 = 4;

impl Workload {
    pub fn new(config: &RunConfig, episodes: usize) -> Result<Self, HarnessError> {
        let seed = config.seed;
        let verifier = HashVerifier::new(combine(seed, VERIFIER_STREAM), config.vocab()?);
        let draft = make_noisy_draft(
            verifier,
            config.agreement_p,
            config.noise_sigma,
            combine(seed, DRAFT_STREAM),
        )?;
        let prefixes = (0..episodes as u64)
            .map(|i| {
                PrefixState::new(
                    combine(combine(seed, PROMPT_STREAM), i),
                    combine(combine(seed, OBSERVATION_STREAM), i),
                )
            })
            .collect();
        Ok(Self { verifier, draft, prefixes })
    }
}

/// The policies a configuration sweeps, in configuration order.
pub fn policies(config: &RunConfig) -> Vec<AcceptancePolicy> {
    config
        .relaxation_thresholds
        .iter()
        .map(|&r| {
            let p = AcceptancePolicy::from_threshold(r);
            match config.per_dimension_r {
                Some(per) if r > 0 => p.with_per_dimension(per),
                _ => p,
            }
        })
        .collect()
}

fn run_policy(
    config: &RunConfig,
    workload: &Workload,
    policy: AcceptancePolicy,
    par: Parallelism,
) -> Result<PolicyRun, HarnessError> {
    let mut params = DecodeParams::new(config.tree_params(), policy);
    params.par = Parallelism::Sequential;
    let episodes = par
        .map(&workload.prefixes, |prefix| {
            let started = Instant::now();
            let episode =
                decode_episode(prefix, &workload.verifier, &workload.draft, &params, config.target_length)?;
            let wall = started.elapsed().as_secs_f64() / config.target_length as f64;
            let ar = ar_decode(prefix, &workload.verifier, config.target_length)?;
            EpisodeStats::from_episode(&episode, params.tree.max_depth, &ar, config.success_tolerance_bins, wall)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolicyRun { policy, episodes })
}

/// Run `config.episodes` seeded episodes for every configured policy.
///
/// Every policy sees the same prefixes and the same models, so policies differ
/// only in how drafts are accepted.
pub fn run_batch(config: &RunConfig) -> Result<BatchResult, HarnessError> {
    config.validate()?;
    let workload = Workload::new(config, config.episodes)?;
    let par = Parallelism::from_flag(config.parallel);
    let runs = policies(config)
        .into_iter()
        .map(|policy| run_policy(config, &workload, policy, par))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BatchResult { max_depth: config.tree_depth, runs })
}
