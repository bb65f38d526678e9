use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::Workload;
use crate::config::RunConfig;
use crate::error::HarnessError;
use crate::models::Delayed;
use crate::par::Parallelism;
use crate::verify_engine::{ar_decode, decode_episode, AcceptancePolicy, DecodeParams};

/// Per-call latencies of the two models, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub verify_latency: f64,
    pub draft_latency: f64,
}

impl CostModel {
    pub fn from_millis(verify_ms: f64, draft_ms: f64) -> Self {
        Self { verify_latency: verify_ms / 1000.0, draft_latency: draft_ms / 1000.0 }
    }
}

/// Expected speedup over greedy decoding when each step costs one verifier
/// pass plus `depth` draft passes and yields `tokens_per_pass` tokens:
/// `T * v / (v + d * c)`.
pub fn analytic_speedup(cost: &CostModel, depth: usize, tokens_per_pass: f64) -> Result<f64, HarnessError> {
    if !(cost.verify_latency > 0.0) || !(cost.draft_latency >= 0.0) {
        return Err(HarnessError::Identity(format!(
            "latencies must satisfy verify > 0 and draft >= 0, got {cost:?}"
        )));
    }
    if !(tokens_per_pass >= 1.0) {
        return Err(HarnessError::Identity(format!("tokens per pass must be >= 1, got {tokens_per_pass}")));
    }
    let v = cost.verify_latency;
    Ok(tokens_per_pass * v / (v + depth as f64 * cost.draft_latency))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupMeasurement {
    pub policy: String,
    pub episodes: usize,
    pub target_length: usize,
    pub ar_seconds: f64,
    pub speculative_seconds: f64,
    /// `ar_seconds / speculative_seconds`.
    pub measured: f64,
    /// Cost-model prediction at the observed tokens per pass.
    pub analytic: f64,
    pub tokens_per_pass: f64,
    /// False when no latency was injected; the ratio then reflects only
    /// the synthetic models' own compute and means nothing.
    pub reliable: bool,
}

/// Time greedy and speculative decoding over the same prefixes with the
/// configured latencies injected as sleeps. Runs on the calling thread.
pub fn measure_speedup(
    config: &RunConfig,
    policy: AcceptancePolicy,
    episodes: usize,
    target_length: usize,
) -> Result<SpeedupMeasurement, HarnessError> {
    if episodes == 0 || target_length == 0 {
        return Err(HarnessError::EmptyStats);
    }
    let cost = config.cost_model();
    let workload = Workload::new(config, episodes)?;
    let verify_delay = Duration::from_secs_f64(cost.verify_latency.max(0.0));
    let draft_delay = Duration::from_secs_f64(cost.draft_latency.max(0.0));
    let verifier = Delayed::new(workload.verifier, verify_delay);
    let draft = Delayed::new(workload.draft.clone(), draft_delay);
    let mut params = DecodeParams::new(config.tree_params(), policy);
    params.par = Parallelism::Sequential;

    let started = Instant::now();
    for prefix in &workload.prefixes {
        ar_decode(prefix, &verifier, target_length)?;
    }
    let ar_seconds = started.elapsed().as_secs_f64();

    let mut steps = 0u64;
    let mut emitted = 0u64;
    let started = Instant::now();
    for prefix in &workload.prefixes {
        let ep = decode_episode(prefix, &verifier, &draft, &params, target_length)?;
        steps += ep.outcomes.len() as u64;
        emitted += ep.outcomes.iter().map(|o| o.emitted.len() as u64).sum::<u64>();
    }
    let speculative_seconds = started.elapsed().as_secs_f64();

    let tokens_per_pass = emitted as f64 / steps as f64;
    let reliable = cost.verify_latency > 0.0;
    let analytic = if reliable {
        analytic_speedup(&cost, params.tree.max_depth, tokens_per_pass)?
    } else {
        f64::NAN
    };
    Ok(SpeedupMeasurement {
        policy: policy.label(),
        episodes,
        target_length,
        ar_seconds,
        speculative_seconds,
        measured: ar_seconds / speculative_seconds,
        analytic,
        tokens_per_pass,
        reliable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_examples() {
        let free = CostModel { verify_latency: 0.02, draft_latency: 0.0 };
        assert_eq!(analytic_speedup(&free, 4, 2.7).unwrap(), 2.7);
        assert_eq!(analytic_speedup(&free, 4, 1.0).unwrap(), 1.0);
        let c = CostModel::from_millis(20.0, 1.0);
        assert!((analytic_speedup(&c, 4, 2.4).unwrap() - 2.0).abs() < 1e-12);
        assert!(analytic_speedup(&CostModel::from_millis(0.0, 1.0), 4, 2.0).is_err());
        assert!(analytic_speedup(&c, 4, 0.5).is_err());
    }

    #[test]
    fn perfect_draft_measurement_tracks_the_model() {
        let cfg = RunConfig {
            agreement_p: 1.0,
            verify_latency_ms: 20.0,
            draft_latency_ms: 1.0,
            ..RunConfig::default()
        };
        // 35 tokens = 7 full steps of 5
        let m = measure_speedup(&cfg, AcceptancePolicy::strict(), 2, 35).unwrap();
        assert!(m.reliable);
        assert_eq!(m.tokens_per_pass, 5.0);
        // other tests compete for the CPU here; the tight tolerance lives in the acceptance run
        assert!(m.measured > 2.0 && m.measured < 1.1 * m.analytic, "{m:?}");
    }

    #[test]
    fn expensive_drafts_slow_things_down() {
        let cfg = RunConfig { verify_latency_ms: 5.0, draft_latency_ms: 5.0, ..RunConfig::default() };
        let m = measure_speedup(&cfg, AcceptancePolicy::strict(), 1, 21).unwrap();
        assert!(m.measured < 1.0, "{m:?}");
        assert!(m.analytic < 1.0);
    }

    #[test]
    fn zero_latency_is_flagged() {
        let cfg = RunConfig { verify_latency_ms: 0.0, draft_latency_ms: 0.0, ..RunConfig::default() };
        let m = measure_speedup(&cfg, AcceptancePolicy::strict(), 1, 7).unwrap();
        assert!(!m.reliable);
    }
}
