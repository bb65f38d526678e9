//! Command-line front end: `decode`, `bench` and `ablate`.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::action_space::{detokenize, ActionChunk, ActionToken, DimensionBounds, Vocab, ACTION_DIMS};
use crate::config::{parse_config, ConfigOverrides, OutputFormat, RunConfig};
use crate::draft_tree::{build_tree, enumerate_paths};
use crate::error::{ConfigError, HarnessError, ModelError};
use crate::harness::{aggregate, measure_speedup, policies, run_batch, ReportSettings, Workload, REPORT_SCHEMA_VERSION};
use crate::models::{DraftModel, FeatureContext, PrefixState, ScriptedDraft, ScriptedVerifier, Verifier};
use crate::par::Parallelism;
use crate::verify_engine::{verify_tree, DecodeParams};

/// Verifier argmax trace of the built-in case study.
pub const CASE_STUDY_VERIFIER: [u32; 7] = [137, 128, 128, 109, 98, 82, 256];
/// Draft top proposals of the built-in case study, by position.
pub const CASE_STUDY_DRAFT: [u32; 7] = [128, 128, 115, 109, 90, 60, 250];
pub const CASE_STUDY_VOCAB: u32 = 257;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_OUTPUT: i32 = 7;

#[derive(Debug, Parser)]
#[command(name = "actspec", version, about = "Speculative decoding of robot action tokens")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode one episode per policy and print the per-iteration trace.
    Decode {
        #[command(flatten)]
        common: CommonArgs,
        /// Episode index within the seeded workload.
        #[arg(long, default_value_t = 0)]
        episode: u64,
        /// Replay the scripted case-study trace instead of the synthetic models.
        #[arg(long)]
        case_study: bool,
    },
    /// Run every policy over the seeded workload and report acceptance statistics.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Also time greedy and speculative decoding with injected latencies.
        #[arg(long)]
        measure: bool,
    },
    /// Sweep the relaxation threshold: tokens per pass and proxy success rate per r.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; falls back to the config file, then SPECDEC_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relaxation threshold, repeatable; replaces the configured list. 0 is strict.
    #[arg(long = "r")]
    pub r: Vec<u32>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run episodes on one thread.
    #[arg(long)]
    pub sequential: bool,
}

impl CommonArgs {
    pub fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            seed: self.seed,
            r: self.r.clone(),
            top_k: self.top_k,
            tree_depth: self.depth,
            max_nodes: self.max_nodes,
            episodes: self.episodes,
            target_length: self.length,
            format: self.format,
            output: self.out.clone(),
            parallel: self.sequential.then_some(false),
        }
    }

    pub fn load(&self) -> Result<RunConfig, ConfigError> {
        parse_config(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub r: u32,
    pub policy: String,
    pub tokens_per_pass: f64,
    pub mean_accepted: f64,
    pub success_proxy_rate: f64,
    pub estimated_speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub settings: ReportSettings,
    pub rows: Vec<AblationRow>,
}

/// One row per configured threshold.
pub fn run_ablation(config: &RunConfig) -> Result<AblationReport, HarnessError> {
    if config.relaxation_thresholds.len() < 2 {
        return Err(ConfigError::Invalid(format!(
            "an ablation needs at least 2 thresholds, got {:?}",
            config.relaxation_thresholds
        ))
        .into());
    }
    let report = aggregate(&run_batch(config)?, config)?;
    let rows = report
        .policies
        .iter()
        .map(|p| AblationRow {
            r: p.r,
            policy: p.policy.clone(),
            tokens_per_pass: p.tokens_per_pass,
            mean_accepted: p.mean_accepted,
            success_proxy_rate: p.success_proxy_rate,
            estimated_speedup: p.estimated_speedup,
        })
        .collect();
    Ok(AblationReport { schema_version: REPORT_SCHEMA_VERSION, settings: report.settings, rows })
}

impl AblationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,tokens_per_pass,success_proxy_rate\n");
        for row in &self.rows {
            let _ = writeln!(out, "{},{:.6},{:.6}", row.r, row.tokens_per_pass, row.success_proxy_rate);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:>4}  {:>8}  {:>8}  {:>8}\n", "r", "length", "accepted", "proxy SR");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:>4}  {:>8.3}  {:>8.3}  {:>7.1}%",
                row.r,
                row.tokens_per_pass,
                row.mean_accepted,
                100.0 * row.success_proxy_rate
            );
        }
        out
    }
}

/// One verification iteration of a traced episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    /// Position of the first emitted token, relative to the episode start.
    pub position: usize,
    pub tree_nodes: usize,
    /// Draft path that was verified.
    pub draft: Vec<ActionToken>,
    pub references: Vec<ActionToken>,
    pub accepted: usize,
    pub emitted: Vec<ActionToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub policy: String,
    pub iterations: usize,
    pub steps: Vec<TraceStep>,
    pub tokens: Vec<ActionToken>,
    /// Continuous values of every complete action chunk.
    pub actions: Vec<[f64; ACTION_DIMS]>,
}

/// Decode like [`crate::verify_engine::decode_episode`], keeping the draft
/// path verified at each iteration.
pub fn trace_episode<V, D>(
    state: &PrefixState,
    verifier: &V,
    draft: &D,
    params: &DecodeParams,
    target_len: usize,
    bounds: &DimensionBounds,
) -> Result<DecodeTrace, ModelError>
where
    V: Verifier + ?Sized,
    D: DraftModel + ?Sized,
{
    if target_len == 0 {
        return Err(ModelError::InvalidParameter("target length must be at least 1".into()));
    }
    let start = state.len();
    let mut state = state.clone();
    let mut ctx = FeatureContext::for_prefix(&state, params.feature_width);
    let mut steps = Vec::new();
    while state.len() - start < target_len {
        let tree = build_tree(&state, &ctx, draft, params.tree, params.par)?;
        let refs = verifier.tree_pass(&state, &tree.node_paths()?, params.par);
        let outcome = verify_tree(&tree, &refs, &params.policy, state.len())?;
        let draft_path = match outcome.chosen_path {
            Some(i) => enumerate_paths(&tree)?.swap_remove(i).tokens,
            None => Vec::new(),
        };
        steps.push(TraceStep {
            iteration: steps.len() + 1,
            position: state.len() - start,
            tree_nodes: tree.len(),
            draft: draft_path,
            references: outcome.references.clone(),
            accepted: outcome.accepted,
            emitted: outcome.emitted.clone(),
        });
        state.extend(&outcome.emitted);
        ctx.extend(&outcome.emitted);
    }
    let tokens = state.emitted()[start..start + target_len].to_vec();
    let vocab = verifier.vocab();
    let actions = tokens
        .chunks_exact(ACTION_DIMS)
        .map(|c| detokenize(&ActionChunk::from_slice(c).expect("exact chunk"), bounds, vocab))
        .collect();
    Ok(DecodeTrace { policy: params.policy.label(), iterations: steps.len(), steps, tokens, actions })
}

fn join(tokens: &[ActionToken]) -> String {
    tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn traces_to_table(traces: &[DecodeTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        let _ = writeln!(out, "{}: {} iterations", t.policy, t.iterations);
        for s in &t.steps {
            let _ = writeln!(
                out,
                "  #{:<2} pos {:>3}  draft [{}]  verifier [{}]  accepted {}  emit [{}]",
                s.iteration,
                s.position,
                join(&s.draft),
                join(&s.references),
                s.accepted,
                join(&s.emitted)
            );
        }
        let _ = writeln!(out, "  tokens [{}]", join(&t.tokens));
    }
    out
}

pub fn traces_to_csv(traces: &[DecodeTrace]) -> String {
    let mut out = String::from("policy,iteration,position,tree_nodes,accepted,draft,references,emitted\n");
    for t in traces {
        for s in &t.steps {
            let _ = writeln!(
                out,
                "\"{}\",{},{},{},{},{},{},{}",
                t.policy,
                s.iteration,
                s.position,
                s.tree_nodes,
                s.accepted,
                join(&s.draft),
                join(&s.references),
                join(&s.emitted)
            );
        }
    }
    out
}

fn tokens(bins: &[u32]) -> Vec<ActionToken> {
    bins.iter().copied().map(ActionToken::new).collect()
}

/// Decode traces for every configured policy.
pub fn decode_traces(config: &RunConfig, episode: u64, case_study: bool) -> Result<Vec<DecodeTrace>, HarnessError> {
    let mut out = Vec::new();
    if case_study {
        let vocab = Vocab::new(CASE_STUDY_VOCAB).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let verifier = ScriptedVerifier::new(vocab, tokens(&CASE_STUDY_VERIFIER))?;
        let draft = ScriptedDraft::new(vocab, tokens(&CASE_STUDY_DRAFT))?;
        let mut tree = config.tree_params();
        tree.top_k = 1;
        for policy in policies(config) {
            let params = DecodeParams::new(tree, policy);
            let state = PrefixState::new(0, 0);
            out.push(trace_episode(&state, &verifier, &draft, &params, ACTION_DIMS, &config.bounds)?);
        }
        return Ok(out);
    }
    let workload = Workload::new(config, episode as usize + 1)?;
    let state = &workload.prefixes[episode as usize];
    for policy in policies(config) {
        let mut params = DecodeParams::new(config.tree_params(), policy);
        params.par = Parallelism::from_flag(config.parallel);
        out.push(trace_episode(
            state,
            &workload.verifier,
            &workload.draft,
            &params,
            config.target_length,
            &config.bounds,
        )?);
    }
    Ok(out)
}

fn render_bench(config: &RunConfig, measure: bool) -> Result<String, HarnessError> {
    let mut report = aggregate(&run_batch(config)?, config)?;
    if measure || config.measure_speedup {
        let measured = policies(config)
            .into_iter()
            .map(|p| measure_speedup(config, p, config.measure_episodes, config.target_length))
            .collect::<Result<Vec<_>, _>>()?;
        report.measured_speedup = Some(measured);
    }
    report.check_identities()?;
    Ok(match config.format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Table => report.to_table(),
    })
}

fn render(command: &Command, config: &RunConfig) -> Result<String, HarnessError> {
    match command {
        Command::Decode { episode, case_study, .. } => {
            let traces = decode_traces(config, *episode, *case_study)?;
            Ok(match config.format {
                OutputFormat::Json => {
                    let mut s = serde_json::to_string_pretty(&traces).expect("trace serializes");
                    s.push('\n');
                    s
                }
                OutputFormat::Csv => traces_to_csv(&traces),
                OutputFormat::Table => traces_to_table(&traces),
            })
        }
        Command::Bench { measure, .. } => render_bench(config, *measure),
        Command::Ablate { .. } => {
            let report = run_ablation(config)?;
            Ok(match config.format {
                OutputFormat::Json => report.to_json(),
                OutputFormat::Csv => report.to_csv(),
                OutputFormat::Table => report.to_table(),
            })
        }
    }
}

/// Run a parsed command line and return the process exit code.
///
/// 0 on success, 1 on a failed run or report identity, 3 to 6 for
/// configuration problems (see [`ConfigError::exit_code`]), 7 when the
/// output cannot be written.
pub fn run(cli: &Cli) -> i32 {
    let common = match &cli.command {
        Command::Decode { common, .. } | Command::Bench { common, .. } | Command::Ablate { common } => common,
    };
    let config = match common.load() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let text = match render(&cli.command, &config) {
        Ok(t) => t,
        Err(HarnessError::Config(e)) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    match &config.output {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                eprintln!("error: could not write {}: {e}", path.display());
                return EXIT_OUTPUT;
            }
        }
        None => print!("{text}"),
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig { episodes: 6, target_length: 21, relaxation_thresholds: vec![0, 9], ..RunConfig::default() }
    }

    #[test]
    fn ablation_rows_follow_thresholds() {
        let report = run_ablation(&small()).unwrap();
        assert_eq!(report.rows.iter().map(|r| r.r).collect::<Vec<_>>(), vec![0, 9]);
        assert_eq!(report.rows[0].success_proxy_rate, 1.0);
        assert_eq!(report.to_csv().lines().count(), 3);
        assert_eq!(run_ablation(&small()).unwrap().to_json(), report.to_json());
    }

    #[test]
    fn ablation_needs_two_thresholds() {
        let cfg = RunConfig { relaxation_thresholds: vec![9], ..small() };
        assert!(matches!(run_ablation(&cfg), Err(HarnessError::Config(ConfigError::Invalid(_)))));
    }

    #[test]
    fn case_study_iterations() {
        let traces = decode_traces(&small(), 0, true).unwrap();
        assert_eq!(traces.iter().map(|t| t.iterations).collect::<Vec<_>>(), vec![5, 3]);
        assert_eq!(traces[0].tokens, tokens(&CASE_STUDY_VERIFIER));
    }

    #[test]
    fn strict_trace_matches_episode_tokens() {
        let cfg = small();
        let traces = decode_traces(&cfg, 2, false).unwrap();
        let w = Workload::new(&cfg, 3).unwrap();
        let ar = crate::verify_engine::ar_decode(&w.prefixes[2], &w.verifier, cfg.target_length).unwrap();
        assert_eq!(traces[0].tokens, ar);
        assert_eq!(traces[0].actions.len(), 3);
        for s in &traces[0].steps {
            assert_eq!(s.emitted.len(), s.accepted + 1);
            assert_eq!(&s.draft[..s.accepted], &s.emitted[..s.accepted]);
        }
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["actspec", "ablate", "--r", "0", "--r", "9", "--depth", "5", "--format", "csv"])
            .unwrap();
        let Command::Ablate { common } = cli.command else { panic!("wrong subcommand") };
        let o = common.overrides();
        assert_eq!(o.r, vec![0, 9]);
        assert_eq!(o.tree_depth, Some(5));
        assert_eq!(o.format, Some(OutputFormat::Csv));
        assert!(Cli::try_parse_from(["actspec", "bench", "--format", "xml"]).is_err());
    }
}
