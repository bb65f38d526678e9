use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{analytic_speedup, BatchResult, CostModel, SpeedupMeasurement};
use crate::config::RunConfig;
use crate::error::HarnessError;
use crate::verify_engine::AcceptMode;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Aggregate statistics of one acceptance policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: String,
    pub r: u32,
    pub episodes: usize,
    pub verification_steps: u64,
    /// Steps by accepted draft length `0..=max_depth`.
    pub length_counts: Vec<u64>,
    /// `length_counts` as proportions of all steps.
    pub length_distribution: Vec<f64>,
    /// Mean accepted draft length by step start position mod 7.
    pub per_position_accepted: Vec<Option<f64>>,
    /// Mean accepted draft tokens per verification step (minimum 0).
    pub mean_accepted: f64,
    /// Mean tokens emitted per verification step, verifier token included (minimum 1).
    pub tokens_per_pass: f64,
    /// Total emitted tokens over total steps, counted separately from the histogram.
    pub emitted_per_pass: f64,
    pub success_proxy_rate: f64,
    pub ar_identical_rate: f64,
    /// `None` when the cost model cannot produce an estimate.
    pub estimated_speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub seed: u64,
    pub vocab_size: u32,
    pub agreement_p: f64,
    pub noise_sigma: f64,
    pub top_k: usize,
    pub tree_depth: usize,
    pub max_nodes: usize,
    pub episodes: usize,
    pub target_length: usize,
    pub success_tolerance_bins: u32,
    pub verify_latency_ms: f64,
    pub draft_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub settings: ReportSettings,
    pub policies: Vec<PolicyReport>,
    /// Wall-clock measurements; present only when requested, and not byte-stable.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub measured_speedup: Option<Vec<SpeedupMeasurement>>,
}

fn mean(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fold per-episode statistics into one row per policy.
pub fn aggregate(batch: &BatchResult, config: &RunConfig) -> Result<Report, HarnessError> {
    if batch.runs.is_empty() || batch.runs.iter().any(|r| r.episodes.is_empty()) {
        return Err(HarnessError::EmptyStats);
    }
    let cost = config.cost_model();
    let positions = config.report_positions;
    let mut policies = Vec::with_capacity(batch.runs.len());
    for run in &batch.runs {
        let mut counts = vec![0u64; batch.max_depth + 1];
        let mut pos_acc = [0u64; 7];
        let mut pos_steps = [0u64; 7];
        let mut emitted = 0u64;
        let mut success = 0usize;
        let mut identical = 0usize;
        for ep in &run.episodes {
            if ep.histogram.len() != counts.len() {
                return Err(HarnessError::Identity(format!(
                    "episode histogram has {} buckets, expected {}",
                    ep.histogram.len(),
                    counts.len()
                )));
            }
            for (c, e) in counts.iter_mut().zip(&ep.histogram) {
                *c += e;
            }
            for p in 0..7 {
                pos_acc[p] += ep.position_accepted[p];
                pos_steps[p] += ep.position_steps[p];
            }
            emitted += ep.emitted_total();
            success += usize::from(ep.success_proxy);
            identical += usize::from(ep.ar_identical);
        }
        let steps: u64 = counts.iter().sum();
        let accepted: u64 = counts.iter().enumerate().map(|(len, c)| len as u64 * c).sum();
        let mean_accepted = mean(accepted, steps);
        let tokens_per_pass = 1.0 + mean_accepted;
        let n = run.episodes.len();
        policies.push(PolicyReport {
            policy: run.policy.label(),
            r: match run.policy.mode {
                AcceptMode::Strict => 0,
                AcceptMode::Relaxed => run.policy.r,
            },
            episodes: n,
            verification_steps: steps,
            length_distribution: counts.iter().map(|&c| mean(c, steps)).collect(),
            length_counts: counts,
            per_position_accepted: (0..positions)
                .map(|p| (pos_steps[p] > 0).then(|| mean(pos_acc[p], pos_steps[p])))
                .collect(),
            mean_accepted,
            tokens_per_pass,
            emitted_per_pass: mean(emitted, steps),
            success_proxy_rate: success as f64 / n as f64,
            ar_identical_rate: identical as f64 / n as f64,
            estimated_speedup: estimate(&cost, batch.max_depth, tokens_per_pass),
        });
    }
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        settings: ReportSettings {
            seed: config.seed,
            vocab_size: config.vocab_size,
            agreement_p: config.agreement_p,
            noise_sigma: config.noise_sigma,
            top_k: config.top_k,
            tree_depth: config.tree_depth,
            max_nodes: config.max_nodes,
            episodes: config.episodes,
            target_length: config.target_length,
            success_tolerance_bins: config.success_tolerance_bins,
            verify_latency_ms: config.verify_latency_ms,
            draft_latency_ms: config.draft_latency_ms,
        },
        policies,
        measured_speedup: None,
    };
    report.check_identities()?;
    Ok(report)
}

fn estimate(cost: &CostModel, depth: usize, tokens_per_pass: f64) -> Option<f64> {
    analytic_speedup(cost, depth, tokens_per_pass).ok()
}

impl Report {
    /// Check the internal consistency of every row.
    pub fn check_identities(&self) -> Result<(), HarnessError> {
        for p in &self.policies {
            let total: f64 = p.length_distribution.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(HarnessError::Identity(format!("{}: proportions sum to {total}", p.policy)));
            }
            if p.length_counts.iter().sum::<u64>() != p.verification_steps {
                return Err(HarnessError::Identity(format!("{}: histogram does not cover every step", p.policy)));
            }
            let accepted: u64 = p.length_counts.iter().enumerate().map(|(l, c)| l as u64 * c).sum();
            let hist_mean = mean(accepted, p.verification_steps);
            if hist_mean + 1.0 != p.tokens_per_pass {
                return Err(HarnessError::Identity(format!(
                    "{}: histogram mean + 1 = {} but tokens_per_pass = {}",
                    p.policy,
                    hist_mean + 1.0,
                    p.tokens_per_pass
                )));
            }
            if (p.emitted_per_pass - p.tokens_per_pass).abs() > 1e-12 {
                return Err(HarnessError::Identity(format!(
                    "{}: emitted tokens per pass {} disagree with the histogram {}",
                    p.policy, p.emitted_per_pass, p.tokens_per_pass
                )));
            }
            if p.r == 0 && (p.ar_identical_rate != 1.0 || p.success_proxy_rate != 1.0) {
                return Err(HarnessError::Identity(format!("{}: strict decoding diverged from greedy", p.policy)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per policy and acceptance length.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,r,length,count,proportion\n");
        for p in &self.policies {
            for (len, (c, prop)) in p.length_counts.iter().zip(&p.length_distribution).enumerate() {
                let _ = writeln!(out, "\"{}\",{},{},{},{:.6}", p.policy, p.r, len, c, prop);
            }
        }
        out
    }

    /// Aligned text: summary, length distribution and per-position means.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let name_w = self.policies.iter().map(|p| p.policy.len()).max().unwrap_or(6).max(6);

        let _ = writeln!(out, "Summary (tokens per pass includes the verifier token)");
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>8}  {:>8}  {:>9}  {:>9}  {:>8}",
            "policy", "length", "accepted", "est.speed", "proxy SR", "= greedy"
        );
        for p in &self.policies {
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>8.3}  {:>8.3}  {:>9}  {:>8.1}%  {:>7.1}%",
                p.policy,
                p.tokens_per_pass,
                p.mean_accepted,
                p.estimated_speedup.map_or("-".to_string(), |s| format!("{s:.3}x")),
                100.0 * p.success_proxy_rate,
                100.0 * p.ar_identical_rate
            );
        }

        let buckets = self.policies.first().map_or(0, |p| p.length_distribution.len());
        let _ = writeln!(out, "\nAccepted draft length distribution");
        let _ = write!(out, "{:<name_w$}", "policy");
        for len in 0..buckets {
            let _ = write!(out, "  {:>7}", len);
        }
        out.push('\n');
        for p in &self.policies {
            let _ = write!(out, "{:<name_w$}", p.policy);
            for prop in &p.length_distribution {
                let _ = write!(out, "  {:>6.2}%", 100.0 * prop);
            }
            out.push('\n');
        }

        let positions = self.policies.first().map_or(0, |p| p.per_position_accepted.len());
        let _ = writeln!(out, "\nMean accepted length by start position");
        let _ = write!(out, "{:<name_w$}", "policy");
        for pos in 0..positions {
            let _ = write!(out, "  {:>5}", pos);
        }
        out.push('\n');
        for p in &self.policies {
            let _ = write!(out, "{:<name_w$}", p.policy);
            for v in &p.per_position_accepted {
                match v {
                    Some(v) => {
                        let _ = write!(out, "  {:>5.2}", v);
                    }
                    None => {
                        let _ = write!(out, "  {:>5}", "-");
                    }
                }
            }
            out.push('\n');
        }

        if let Some(ms) = &self.measured_speedup {
            let _ = writeln!(out, "\nMeasured speedup (wall clock, injected latencies)");
            for m in ms {
                let _ = writeln!(
                    out,
                    "{:<name_w$}  measured {:>6.3}x  analytic {:>6.3}x{}",
                    m.policy,
                    m.measured,
                    m.analytic,
                    if m.reliable { "" } else { "  (unreliable: no injected latency)" }
                );
            }
        }
        out
    }
}
