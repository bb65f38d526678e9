//! Acceptance criteria. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line; exits non-zero if any fails.

use std::collections::{HashMap, HashSet};
use std::process::ExitCode;
use std::time::Instant;

use actspec::action_space::{bin_distance, dimension_of, ActionToken, Vocab};
use actspec::config::RunConfig;
use actspec::draft_tree::{build_tree, enumerate_paths, DraftNode, DraftTree, TreeParams};
use actspec::harness::{aggregate, analytic_speedup, measure_speedup, run_batch, Report};
use actspec::models::{
    draft_rank_log_probs, make_noisy_draft, DraftModel, FeatureContext, HashVerifier, PrefixState,
    Proposal, ReferenceTokens, ScriptedDraft, ScriptedVerifier, Verifier,
};
use actspec::par::Parallelism;
use actspec::verify_engine::{
    ar_decode, decode_episode, verify_path, verify_tree, AcceptancePolicy, DecodeParams, VerifyOutcome,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tok(b: u32) -> ActionToken {
    ActionToken::new(b)
}

struct Fuzz {
    verifier: HashVerifier,
    p: f64,
    sigma: f64,
    tree: TreeParams,
    prefix: PrefixState,
    len: usize,
    par: Parallelism,
}

fn fuzz_config(seed: u64) -> Fuzz {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocab::new([8, 16, 64, 256, 257][rng.gen_range(0..5)]).unwrap();
    let top_k = rng.gen_range(1..=8.min(vocab.size() as usize));
    let tree = TreeParams::new(top_k, rng.gen_range(1..=5), rng.gen_range(1..=60));
    let pre: Vec<ActionToken> =
        (0..rng.gen_range(0..10)).map(|_| tok(rng.gen_range(0..vocab.size()))).collect();
    Fuzz {
        verifier: HashVerifier::new(rng.gen(), vocab),
        p: rng.gen_range(0.0..=1.0),
        sigma: rng.gen_range(0.3..20.0),
        tree,
        prefix: PrefixState::with_tokens(rng.gen(), rng.gen(), &pre),
        len: rng.gen_range(1..=40),
        par: if rng.gen() { Parallelism::Rayon } else { Parallelism::Sequential },
    }
}

fn losslessness() -> Outcome {
    let n = 1000;
    let failures: Vec<u64> = Parallelism::Rayon
        .map_range(n, |i| {
            let f = fuzz_config(1_000 + i as u64);
            let draft = make_noisy_draft(f.verifier, f.p, f.sigma, i as u64).unwrap();
            let mut params = DecodeParams::new(f.tree, AcceptancePolicy::strict());
            params.par = f.par;
            let spec = decode_episode(&f.prefix, &f.verifier, &draft, &params, f.len).unwrap();
            let ar = ar_decode(&f.prefix, &f.verifier, f.len).unwrap();
            (spec.tokens != ar).then_some(i as u64)
        })
        .into_iter()
        .flatten()
        .collect();
    check(failures.is_empty(), format!("{n} configurations, {} mismatches {:?}", failures.len(), failures))
}

fn relaxed_soundness() -> Outcome {
    let per_config: Vec<(usize, usize, Vec<String>)> = Parallelism::Rayon.map_range(400, |i| {
        let f = fuzz_config(50_000 + i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let mut policy = AcceptancePolicy::relaxed(rng.gen_range(1..=12));
        if rng.gen_bool(0.3) {
            policy = policy.with_per_dimension(std::array::from_fn(|_| rng.gen_range(0..=10)));
        }
        let draft = make_noisy_draft(f.verifier, f.p, f.sigma, i as u64).unwrap();
        let params = DecodeParams::new(f.tree, policy);
        let ep = decode_episode(&f.prefix, &f.verifier, &draft, &params, 7 * 10).unwrap();
        let mut state = f.prefix.clone();
        let mut checked = 0;
        let mut bad = Vec::new();
        for o in &ep.outcomes {
            for (j, &t) in o.emitted.iter().enumerate() {
                // full distribution, not the verifier's fast argmax path
                let argmax = f.verifier.distribution_after(&state, &o.emitted[..j]).argmax();
                let pos = o.position + j;
                let limit = policy.effective_r(dimension_of(pos));
                if j < o.accepted {
                    checked += 1;
                    if bin_distance(t, argmax) > limit {
                        bad.push(format!("config {i} pos {pos}: {t} vs {argmax} > {limit}"));
                    }
                } else if t != argmax {
                    bad.push(format!("config {i} pos {pos}: verifier token {t} != argmax {argmax}"));
                }
            }
            state.extend(&o.emitted);
        }
        (ep.outcomes.len(), checked, bad)
    });
    let steps: usize = per_config.iter().map(|c| c.0).sum();
    let tokens: usize = per_config.iter().map(|c| c.1).sum();
    let bad: Vec<&String> = per_config.iter().flat_map(|c| &c.2).collect();
    check(
        steps >= 10_000 && bad.is_empty(),
        format!("{steps} steps, {tokens} accepted tokens, {} violations {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>()),
    )
}

fn step_monotonicity() -> Outcome {
    let rows: Vec<Option<String>> = Parallelism::Rayon.map_range(1000, |i| {
        let f = fuzz_config(90_000 + i as u64);
        let draft = make_noisy_draft(f.verifier, f.p, f.sigma, i as u64).unwrap();
        let ctx = FeatureContext::for_prefix(&f.prefix, 8);
        let tree = build_tree(&f.prefix, &ctx, &draft, f.tree, Parallelism::Sequential).unwrap();
        let refs = f.verifier.tree_pass(&f.prefix, &tree.node_paths().unwrap(), Parallelism::Sequential);
        let lens: Vec<usize> = (0..=16)
            .map(|r| verify_tree(&tree, &refs, &AcceptancePolicy::from_threshold(r), f.prefix.len()).unwrap().accepted)
            .collect();
        lens.windows(2).any(|w| w[1] < w[0]).then(|| format!("pair {i}: {lens:?}"))
    });
    let bad: Vec<String> = rows.into_iter().flatten().collect();
    check(bad.is_empty(), format!("1000 (prefix, tree) pairs over r = 0..=16, {} violations {:?}", bad.len(), bad.first()))
}

/// Random valid tree: parents earlier in the order, distinct sibling tokens.
fn random_tree(rng: &mut ChaCha8Rng, vocab: u32) -> DraftTree {
    let n = rng.gen_range(0..=50);
    let mut nodes: Vec<DraftNode> = Vec::with_capacity(n);
    let mut used: HashSet<(Option<usize>, u32)> = HashSet::new();
    while nodes.len() < n {
        let parent = if nodes.is_empty() || rng.gen_bool(0.25) { None } else { Some(rng.gen_range(0..nodes.len())) };
        let token = rng.gen_range(0..vocab);
        if !used.insert((parent, token)) {
            continue;
        }
        let (depth, base) = parent.map_or((1, 0.0), |p| (nodes[p].depth + 1, nodes[p].cum_score));
        // coarse scores so ties between paths are common
        let step = -(rng.gen_range(1..=3) as f64);
        nodes.push(DraftNode { token: tok(token), parent, depth, cum_score: base + step });
    }
    DraftTree::from_nodes(nodes, TreeParams::new(8, 64, 64))
}

/// Accepted length by walking every node's ancestor chain.
fn walk_accepted(tree: &DraftTree, refs: &ReferenceTokens, policy: &AcceptancePolicy, first: usize) -> usize {
    let nodes = tree.nodes();
    let mut ok = vec![false; nodes.len()];
    let mut best = 0;
    for i in 0..nodes.len() {
        let n = nodes[i];
        let parent_ok = n.parent.map_or(true, |p| ok[p]);
        let reference = n.parent.map_or(refs.root, |p| refs.nodes[p]);
        let pos = first + n.depth as usize - 1;
        ok[i] = parent_ok && bin_distance(n.token, reference) <= policy.effective_r(dimension_of(pos));
        if ok[i] {
            best = best.max(n.depth as usize);
        }
    }
    best
}

/// Linear scan over enumerated paths with the documented tie-break.
fn scan_oracle(tree: &DraftTree, refs: &ReferenceTokens, policy: &AcceptancePolicy, first: usize) -> VerifyOutcome {
    let paths = enumerate_paths(tree).unwrap();
    let mut best: Option<(usize, usize, ActionToken, bool)> = None;
    for (i, p) in paths.iter().enumerate() {
        let mut verified = vec![refs.root];
        verified.extend(p.nodes.iter().map(|&n| refs.nodes[n]));
        let v = verify_path(&p.tokens, &verified, policy, first).unwrap();
        let replace = match best {
            None => true,
            Some((b, acc, _, _)) => v.accepted > acc || (v.accepted == acc && p.cum_score > paths[b].cum_score),
        };
        if replace {
            best = Some((i, v.accepted, v.next_token, v.bonus));
        }
    }
    match best {
        None => VerifyOutcome {
            position: first,
            accepted: 0,
            emitted: vec![refs.root],
            references: vec![refs.root],
            correction_used: true,
            bonus_used: false,
            chosen_path: None,
        },
        Some((i, acc, next, bonus)) => {
            let p = &paths[i];
            let mut emitted = p.tokens[..acc].to_vec();
            emitted.push(next);
            let mut references = vec![refs.root];
            references.extend(p.nodes[..acc].iter().map(|&n| refs.nodes[n]));
            VerifyOutcome {
                position: first,
                accepted: acc,
                emitted,
                references,
                correction_used: !bonus,
                bonus_used: bonus,
                chosen_path: Some(i),
            }
        }
    }
}

/// Draft with integer scores drawn from a tiny set, so cumulative ties are frequent.
struct CoarseDraft {
    vocab: Vocab,
    key: u64,
}

impl DraftModel for CoarseDraft {
    fn vocab(&self) -> Vocab {
        self.vocab
    }

    fn propose_after(
        &self,
        state: &PrefixState,
        _ctx: &FeatureContext,
        extra: &[ActionToken],
        k: usize,
    ) -> Result<Vec<Proposal>, actspec::error::ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key ^ state.digest_with(extra));
        let mut bins: Vec<u32> = (0..self.vocab.size()).collect();
        let mut scores: Vec<f64> = (0..k).map(|_| -(rng.gen_range(1..=3) as f64)).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        let mut out = Vec::with_capacity(k);
        for (j, score) in scores.into_iter().enumerate() {
            let pick = rng.gen_range(j..bins.len());
            bins.swap(j, pick);
            out.push(Proposal { token: tok(bins[j]), log_score: score });
        }
        Ok(out)
    }
}

/// Rank every path of the full top-k expansion globally and keep the best
/// `max_nodes` whose parent is kept.
fn brute_force_tree(state: &PrefixState, draft: &dyn DraftModel, params: TreeParams) -> Vec<(Vec<ActionToken>, f64)> {
    let ctx = FeatureContext::for_prefix(state, 8);
    let mut all: Vec<(Vec<ActionToken>, f64)> = Vec::new();
    let mut frontier: Vec<(Vec<ActionToken>, f64)> = vec![(Vec::new(), 0.0)];
    for _ in 0..params.max_depth {
        let mut next = Vec::new();
        for (path, score) in &frontier {
            for p in draft.propose_after(state, &ctx, path, params.top_k).unwrap() {
                let mut child = path.clone();
                child.push(p.token);
                next.push((child, score + p.log_score));
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(a.0.len().cmp(&b.0.len()))
            .then(a.0.last().cmp(&b.0.last()))
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut kept: Vec<(Vec<ActionToken>, f64)> = Vec::new();
    let mut kept_paths: HashSet<Vec<ActionToken>> = HashSet::new();
    for (path, score) in all {
        if kept.len() == params.max_nodes {
            break;
        }
        if path.len() == 1 || kept_paths.contains(&path[..path.len() - 1]) {
            kept_paths.insert(path.clone());
            kept.push((path, score));
        }
    }
    // parents first: stable by depth
    kept.sort_by_key(|(p, _)| p.len());
    kept
}

fn oracle_equivalence() -> Outcome {
    let verify_bad: Vec<String> = Parallelism::Rayon
        .map_range(1000, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(200_000 + i as u64);
            let vocab = rng.gen_range(2..=12);
            let tree = random_tree(&mut rng, vocab);
            let refs = ReferenceTokens {
                root: tok(rng.gen_range(0..vocab)),
                nodes: (0..tree.len()).map(|_| tok(rng.gen_range(0..vocab))).collect(),
            };
            let mut policy = AcceptancePolicy::from_threshold(rng.gen_range(0..=4));
            if rng.gen_bool(0.3) {
                policy = AcceptancePolicy::relaxed(1).with_per_dimension(std::array::from_fn(|_| rng.gen_range(0..=4)));
            }
            let first = rng.gen_range(0..21);
            let got = verify_tree(&tree, &refs, &policy, first).unwrap();
            let want = scan_oracle(&tree, &refs, &policy, first);
            let walked = walk_accepted(&tree, &refs, &policy, first);
            (got != want || got.accepted != walked).then(|| format!("tree {i}: {got:?} vs {want:?} (walk {walked})"))
        })
        .into_iter()
        .flatten()
        .collect();

    let build_bad: Vec<String> = Parallelism::Rayon
        .map_range(1000, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(300_000 + i as u64);
            let vocab = Vocab::new(rng.gen_range(4..=16)).unwrap();
            let params = TreeParams::new(rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=20));
            let state = PrefixState::new(rng.gen(), rng.gen());
            let ctx = FeatureContext::for_prefix(&state, 8);
            let coarse = CoarseDraft { vocab, key: rng.gen() };
            let verifier = HashVerifier::new(rng.gen(), vocab);
            let noisy = make_noisy_draft(verifier, rng.gen_range(0.0..=1.0), 3.0, rng.gen()).unwrap();
            let draft: &dyn DraftModel = if i % 2 == 0 { &coarse } else { &noisy };
            let tree = build_tree(&state, &ctx, draft, params, Parallelism::Sequential).unwrap();
            let got: Vec<(Vec<ActionToken>, f64)> =
                (0..tree.len()).map(|n| (tree.path_tokens(n), tree.nodes()[n].cum_score)).collect();
            let want = brute_force_tree(&state, draft, params);
            (got != want).then(|| format!("build {i}: {} vs {} nodes", got.len(), want.len()))
        })
        .into_iter()
        .flatten()
        .collect();

    check(
        verify_bad.is_empty() && build_bad.is_empty(),
        format!(
            "verify_tree on 1000 random trees: {} mismatches {:?}; build_tree on 1000 trees of <= 20 nodes: {} mismatches {:?}",
            verify_bad.len(),
            verify_bad.first(),
            build_bad.len(),
            build_bad.first()
        ),
    )
}

// Expected tokens per pass for the default draft (p = 0.5, sigma = 6, top_k 8,
// depth 4, 50 nodes), precomputed by the recursion in `expected_tokens_per_pass`.
const FROZEN_STRICT: f64 = 1.9375;
const FROZEN_R9: f64 = 4.768572702327118;

/// Probability that the draft's miss lands `m` bins away.
fn displacement_pmf(sigma: f64, m: u32) -> f64 {
    let n = Normal::new(0.0, sigma).unwrap();
    let band = |lo: f64, hi: f64| 2.0 * (n.cdf(hi) - n.cdf(lo));
    if m == 1 {
        band(0.0, 1.5)
    } else {
        band(m as f64 - 0.5, m as f64 + 0.5)
    }
}

/// Exact expectation of 1 + accepted length, in rank space.
///
/// The kept tree is the global top-`max_nodes` of all rank paths (scores only
/// depend on ranks). All children of one node share one draw of the draft's
/// offset; a child of rank j is accepted iff offset + j <= r.
fn expected_tokens_per_pass(p: f64, sigma: f64, top_k: usize, depth: usize, max_nodes: usize, r: u32) -> (f64, f64) {
    let lp = draft_rank_log_probs(Vocab::new(256).unwrap());
    let mut paths: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..depth {
        let mut next = Vec::new();
        for path in &layer {
            for j in 0..top_k {
                let mut c = path.clone();
                c.push(j);
                next.push(c);
            }
        }
        paths.extend(next.iter().map(|c| (c.iter().map(|&j| lp[j]).sum::<f64>(), c.clone())));
        layer = next;
    }
    paths.sort_by(|a, b| b.0.total_cmp(&a.0));
    let gap = paths[max_nodes - 1].0 - paths[max_nodes].0;
    let kept: HashSet<Vec<usize>> = paths[..max_nodes].iter().map(|(_, c)| c.clone()).collect();

    let mut events = vec![(p, 0u32)];
    events.extend((1..=200).map(|m| ((1.0 - p) * displacement_pmf(sigma, m), m)));

    fn tail(
        node: &[usize],
        n: usize,
        r: u32,
        kept: &HashSet<Vec<usize>>,
        events: &[(f64, u32)],
        top_k: usize,
        memo: &mut HashMap<(Vec<usize>, usize), f64>,
    ) -> f64 {
        if n == 0 {
            return 1.0;
        }
        if let Some(&v) = memo.get(&(node.to_vec(), n)) {
            return v;
        }
        let children: Vec<Vec<usize>> = (0..top_k)
            .map(|j| [node, &[j]].concat())
            .filter(|c| kept.contains(c))
            .collect();
        let below: Vec<f64> = children.iter().map(|c| tail(c, n - 1, r, kept, events, top_k, memo)).collect();
        let mut total = 0.0;
        for &(prob, offset) in events {
            let miss: f64 = children
                .iter()
                .zip(&below)
                .filter(|(c, _)| offset + *c.last().unwrap() as u32 <= r)
                .map(|(_, f)| 1.0 - f)
                .product();
            total += prob * (1.0 - miss);
        }
        memo.insert((node.to_vec(), n), total);
        total
    }

    let mut memo = HashMap::new();
    let expected: f64 = (1..=depth).map(|n| tail(&[], n, r, &kept, &events, top_k, &mut memo)).sum();
    (1.0 + expected, gap)
}

fn relaxation_gain() -> Outcome {
    let (strict_oracle, gap) = expected_tokens_per_pass(0.5, 6.0, 8, 4, 50, 0);
    let (r9_oracle, _) = expected_tokens_per_pass(0.5, 6.0, 8, 4, 50, 9);
    if gap <= 0.0 || (strict_oracle - FROZEN_STRICT).abs() > 1e-9 || (r9_oracle - FROZEN_R9).abs() > 1e-9 {
        return Err(format!("oracle drifted: {strict_oracle} / {r9_oracle}, cut gap {gap}"));
    }
    let cfg = RunConfig { episodes: 500, relaxation_thresholds: vec![0, 9], ..RunConfig::default() };
    let report = aggregate(&run_batch(&cfg).unwrap(), &cfg).unwrap();
    let strict = report.policies[0].tokens_per_pass;
    let r9 = report.policies[1].tokens_per_pass;
    let gain = r9 / strict - 1.0;
    let e0 = strict / FROZEN_STRICT - 1.0;
    let e9 = r9 / FROZEN_R9 - 1.0;
    check(
        gain >= 0.25 && e0.abs() <= 0.02 && e9.abs() <= 0.02,
        format!(
            "tokens/pass strict {strict:.4} (expected {FROZEN_STRICT:.4}, {:+.2}%), r=9 {r9:.4} (expected {FROZEN_R9:.4}, {:+.2}%), gain {:+.1}%",
            100.0 * e0,
            100.0 * e9,
            100.0 * gain
        ),
    )
}

fn speedup() -> Outcome {
    let cfg = RunConfig { verify_latency_ms: 20.0, draft_latency_ms: 1.0, tree_depth: 4, ..RunConfig::default() };
    let mut lines = Vec::new();
    let mut ok = true;
    for policy in [AcceptancePolicy::strict(), AcceptancePolicy::relaxed(9)] {
        // median of three timings; single runs pick up scheduler hiccups
        let mut runs: Vec<(f64, f64)> = (0..3)
            .map(|_| {
                let m = measure_speedup(&cfg, policy, 3, 140).unwrap();
                assert!(m.reliable);
                let analytic = analytic_speedup(&cfg.cost_model(), 4, m.tokens_per_pass).unwrap();
                (m.measured / analytic - 1.0, m.measured)
            })
            .collect();
        let all: Vec<String> = runs.iter().map(|(rel, _)| format!("{:+.1}%", 100.0 * rel)).collect();
        runs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (rel, measured) = runs[1];
        ok &= rel.abs() <= 0.10;
        lines.push(format!("{} measured {measured:.3}x, {:+.1}% vs analytic (runs {})", policy.label(), 100.0 * rel, all.join(", ")));
    }
    check(ok, lines.join("; "))
}

fn report_identities() -> Outcome {
    let mut problems = Vec::new();
    for seed in 0..20u64 {
        let cfg = RunConfig {
            seed,
            episodes: 12,
            target_length: 7 * (1 + seed as usize % 5),
            agreement_p: 0.1 + 0.04 * seed as f64,
            tree_depth: 1 + seed as usize % 5,
            relaxation_thresholds: vec![0, 2, 5, 9],
            ..RunConfig::default()
        };
        let batch = run_batch(&cfg).unwrap();
        let report = aggregate(&batch, &cfg).unwrap();
        for (p, run) in report.policies.iter().zip(&batch.runs) {
            let sum: f64 = p.length_distribution.iter().sum();
            let steps: u64 = run.episodes.iter().map(|e| e.outcomes.len() as u64).sum();
            let accepted: u64 = run.episodes.iter().flat_map(|e| &e.outcomes).map(|o| o.accepted as u64).sum();
            let from_outcomes = 1.0 + accepted as f64 / steps as f64;
            let hist_mean: f64 = p.length_counts.iter().enumerate().map(|(l, &c)| l as u64 * c).sum::<u64>() as f64
                / p.verification_steps as f64;
            if (sum - 1.0).abs() > 1e-9 {
                problems.push(format!("seed {seed} {}: proportions sum {sum}", p.policy));
            }
            if hist_mean + 1.0 != p.tokens_per_pass || from_outcomes != p.tokens_per_pass {
                problems.push(format!("seed {seed} {}: {hist_mean} + 1 vs {}", p.policy, p.tokens_per_pass));
            }
        }
        let again = aggregate(&run_batch(&RunConfig { parallel: false, ..cfg.clone() }).unwrap(), &cfg).unwrap();
        if report.to_json() != again.to_json() || report.to_csv() != again.to_csv() || report.to_table() != again.to_table() {
            problems.push(format!("seed {seed}: renderings differ between runs"));
        }
        let parsed: Report = serde_json::from_str(&report.to_json()).unwrap();
        if parsed.to_json() != report.to_json() {
            problems.push(format!("seed {seed}: JSON does not round-trip"));
        }
    }

    // the installed binary must write identical bytes twice
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, cmd) in [["bench", "json"], ["bench", "json"], ["ablate", "csv"], ["ablate", "csv"]].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_actspec"))
            .args([cmd[0], "--episodes", "10", "--length", "21", "--seed", "5", "--format", cmd[1], "--out"])
            .arg(&out)
            .status()
            .unwrap();
        if !status.success() {
            problems.push(format!("{} exited with {status}", cmd[0]));
        }
        outputs.push(std::fs::read(&out).unwrap_or_default());
    }
    if outputs[0] != outputs[1] || outputs[2] != outputs[3] || outputs[0].is_empty() {
        problems.push("CLI outputs are not byte-stable".into());
    }
    check(problems.is_empty(), if problems.is_empty() { "20 fuzzed configurations, 4 policies each, plus CLI bench/ablate byte comparison".into() } else { problems.join("; ") })
}

fn case_study_replay() -> Outcome {
    let vocab = Vocab::new(257).unwrap();
    let script = |b: &[u32]| b.iter().map(|&x| tok(x)).collect::<Vec<_>>();
    let verifier = ScriptedVerifier::new(vocab, script(&[137, 128, 128, 109, 98, 82, 256])).unwrap();
    let draft = ScriptedDraft::new(vocab, script(&[128, 128, 115, 109, 90, 60, 250])).unwrap();
    let iterations = |policy| {
        let params = DecodeParams::new(TreeParams::new(1, 4, 50), policy);
        decode_episode(&PrefixState::new(0, 0), &verifier, &draft, &params, 7).unwrap().outcomes.len()
    };
    let strict = iterations(AcceptancePolicy::strict());
    let relaxed = iterations(AcceptancePolicy::relaxed(9));
    check(strict == 5 && relaxed == 3, format!("iterations r=0: {strict} (want 5), r=9: {relaxed} (want 3)"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("losslessness", losslessness),
        ("relaxed soundness", relaxed_soundness),
        ("step monotonicity", step_monotonicity),
        ("oracle equivalence", oracle_equivalence),
        ("relaxation gain", relaxation_gain),
        ("speedup", speedup),
        ("report identities", report_identities),
        ("case-study replay", case_study_replay),
    ];
    // ACCEPTANCE_ONLY=<substring> runs a subset
    let only = std::env::var("ACCEPTANCE_ONLY").ok();
    let mut failed = 0;
    for (name, run) in criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
