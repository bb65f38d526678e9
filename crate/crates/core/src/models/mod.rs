//! Verifier and draft model contracts, plus the synthetic stand-ins used by
//! the harness and tests.
//!
//! A verifier maps a decoding prefix to a distribution over the next action
//! token; greedy decoding takes its argmax. A draft model proposes the `k`
//! best next tokens for a prefix, cheaply and less accurately.
//!
//! Both traits take the prefix as a base [`PrefixState`] plus an `extra`
//! slice of tokens appended on top, so tree nodes can be scored without
//! cloning the prefix for every path.

mod latency;
mod scripted;
mod synthetic;

pub use latency::Delayed;
pub use scripted::{ScriptedDraft, ScriptedVerifier};
pub use synthetic::{
    draft_rank_log_probs, make_noisy_draft, HashVerifier, NoisyDraft,
};

use serde::{Deserialize, Serialize};

use crate::action_space::{ActionToken, Vocab};
use crate::draft_tree::DraftTree;
use crate::error::{ModelError, TreeError};
use crate::hash::combine;
use crate::par::Parallelism;

const PREFIX_SEED: u64 = 0x5EED_0FA1_7AC7;

/// Decoding context: which prompt and observation, and the tokens emitted so far.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrefixState {
    prompt_id: u64,
    observation_id: u64,
    emitted: Vec<ActionToken>,
    // rolling hash over (prompt, observation, emitted)
    digest: u64,
}

impl PrefixState {
    pub fn new(prompt_id: u64, observation_id: u64) -> Self {
        let digest = combine(combine(PREFIX_SEED, prompt_id), observation_id);
        Self { prompt_id, observation_id, emitted: Vec::new(), digest }
    }

    pub fn with_tokens(prompt_id: u64, observation_id: u64, tokens: &[ActionToken]) -> Self {
        let mut s = Self::new(prompt_id, observation_id);
        s.extend(tokens);
        s
    }

    pub fn prompt_id(&self) -> u64 {
        self.prompt_id
    }

    pub fn observation_id(&self) -> u64 {
        self.observation_id
    }

    pub fn emitted(&self) -> &[ActionToken] {
        &self.emitted
    }

    pub fn len(&self) -> usize {
        self.emitted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emitted.is_empty()
    }

    pub fn push(&mut self, token: ActionToken) {
        self.digest = fold_token(self.digest, token);
        self.emitted.push(token);
    }

    pub fn extend(&mut self, tokens: &[ActionToken]) {
        for &t in tokens {
            self.push(t);
        }
    }

    pub fn extended(&self, tokens: &[ActionToken]) -> Self {
        let mut s = self.clone();
        s.extend(tokens);
        s
    }

    /// Hash identifying the full prefix.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    /// Digest of this prefix with `extra` appended, without materializing it.
    pub fn digest_with(&self, extra: &[ActionToken]) -> u64 {
        extra.iter().fold(self.digest, |d, &t| fold_token(d, t))
    }
}

fn fold_token(digest: u64, token: ActionToken) -> u64 {
    combine(digest, u64::from(token.bin()) + 1)
}

/// Per-position feature vectors handed to the draft model alongside the prefix.
///
/// Stands in for the verifier's hidden states and embeddings. Rows are
/// derived deterministically from the emitted tokens; the synthetic drafts
/// ignore them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureContext {
    width: usize,
    values: Vec<f32>,
}

pub const DEFAULT_FEATURE_WIDTH: usize = 8;

impl FeatureContext {
    pub fn empty(width: usize) -> Self {
        Self { width: width.max(1), values: Vec::new() }
    }

    pub fn for_prefix(state: &PrefixState, width: usize) -> Self {
        let mut ctx = Self::empty(width);
        ctx.extend(state.emitted());
        ctx
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn extend(&mut self, tokens: &[ActionToken]) {
        for &t in tokens {
            let pos = self.rows();
            for j in 0..self.width {
                let phase = (t.bin() as f32 + 1.0) * (j as f32 + 1.0) * 0.618 + pos as f32 * 0.1;
                self.values.push(phase.sin());
            }
        }
    }

    pub fn check(&self, state: &PrefixState) -> Result<(), ModelError> {
        if self.rows() != state.len() {
            return Err(ModelError::ContextMismatch { rows: self.rows(), emitted: state.len() });
        }
        Ok(())
    }
}

/// A normalized distribution over the vocabulary with a fixed argmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    scores: Vec<f64>,
    argmax: ActionToken,
}

impl Distribution {
    /// Softmax over `logits`. The argmax is taken on the logits, lowest bin on ties.
    pub fn from_logits(logits: &[f64]) -> Self {
        assert!(!logits.is_empty(), "distribution over an empty vocabulary");
        let argmax = argmax_lowest(logits);
        let top = logits[argmax];
        let mut scores: Vec<f64> = logits.iter().map(|&l| (l - top).exp()).collect();
        let z: f64 = scores.iter().sum();
        scores.iter_mut().for_each(|s| *s /= z);
        Self { scores, argmax: ActionToken::new(argmax as u32) }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn argmax(&self) -> ActionToken {
        self.argmax
    }

    pub fn prob(&self, token: ActionToken) -> f64 {
        self.scores.get(token.bin() as usize).copied().unwrap_or(0.0)
    }
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draft candidate with its log-probability under the draft model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub token: ActionToken,
    pub log_score: f64,
}

/// Verifier argmaxes for one tree pass: before the first draft token and after every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceTokens {
    pub root: ActionToken,
    pub nodes: Vec<ActionToken>,
}

impl ReferenceTokens {
    /// Reference token for the position following `node` (`None` = before the root).
    pub fn after(&self, node: Option<usize>) -> ActionToken {
        match node {
            None => self.root,
            Some(i) => self.nodes[i],
        }
    }
}

pub trait Verifier: Send + Sync {
    fn vocab(&self) -> Vocab;

    /// Next-token distribution for `state` followed by `extra`.
    fn distribution_after(&self, state: &PrefixState, extra: &[ActionToken]) -> Distribution;

    fn argmax_after(&self, state: &PrefixState, extra: &[ActionToken]) -> ActionToken {
        self.distribution_after(state, extra).argmax()
    }

    /// One batched verification pass: the argmax before the tree and after
    /// each node path. `paths[i]` is node `i`'s root path, inclusive.
    fn tree_pass(
        &self,
        state: &PrefixState,
        paths: &[Vec<ActionToken>],
        par: Parallelism,
    ) -> ReferenceTokens {
        let root = self.argmax_after(state, &[]);
        let nodes = par.map(paths, |p| self.argmax_after(state, p));
        ReferenceTokens { root, nodes }
    }
}

pub trait DraftModel: Send + Sync {
    fn vocab(&self) -> Vocab;

    /// `k` distinct candidates for the token after `state ++ extra`, best first.
    fn propose_after(
        &self,
        state: &PrefixState,
        ctx: &FeatureContext,
        extra: &[ActionToken],
        k: usize,
    ) -> Result<Vec<Proposal>, ModelError>;

    /// One draft pass over a whole tree frontier.
    fn propose_level(
        &self,
        state: &PrefixState,
        ctx: &FeatureContext,
        extras: &[Vec<ActionToken>],
        k: usize,
        par: Parallelism,
    ) -> Result<Vec<Vec<Proposal>>, ModelError> {
        par.map(extras, |e| self.propose_after(state, ctx, e, k)).into_iter().collect()
    }
}

impl<T: Verifier + ?Sized> Verifier for &T {
    fn vocab(&self) -> Vocab {
        (**self).vocab()
    }
    fn distribution_after(&self, state: &PrefixState, extra: &[ActionToken]) -> Distribution {
        (**self).distribution_after(state, extra)
    }
    fn argmax_after(&self, state: &PrefixState, extra: &[ActionToken]) -> ActionToken {
        (**self).argmax_after(state, extra)
    }
    fn tree_pass(&self, state: &PrefixState, paths: &[Vec<ActionToken>], par: Parallelism) -> ReferenceTokens {
        (**self).tree_pass(state, paths, par)
    }
}

impl<T: DraftModel + ?Sized> DraftModel for &T {
    fn vocab(&self) -> Vocab {
        (**self).vocab()
    }
    fn propose_after(
        &self,
        state: &PrefixState,
        ctx: &FeatureContext,
        extra: &[ActionToken],
        k: usize,
    ) -> Result<Vec<Proposal>, ModelError> {
        (**self).propose_after(state, ctx, extra, k)
    }
    fn propose_level(
        &self,
        state: &PrefixState,
        ctx: &FeatureContext,
        extras: &[Vec<ActionToken>],
        k: usize,
        par: Parallelism,
    ) -> Result<Vec<Vec<Proposal>>, ModelError> {
        (**self).propose_level(state, ctx, extras, k, par)
    }
}

/// Greedy next-token distribution for a prefix.
pub fn verifier_next<V: Verifier + ?Sized>(verifier: &V, state: &PrefixState) -> Distribution {
    verifier.distribution_after(state, &[])
}

/// Distribution after every node of `tree`, in node order.
pub fn verifier_batch<V: Verifier + ?Sized>(
    verifier: &V,
    state: &PrefixState,
    tree: &DraftTree,
    par: Parallelism,
) -> Result<Vec<Distribution>, TreeError> {
    let paths = tree.node_paths()?;
    Ok(par.map(&paths, |p| verifier.distribution_after(state, p)))
}

/// Top-`k` draft proposals for a prefix.
pub fn draft_propose<D: DraftModel + ?Sized>(
    draft: &D,
    state: &PrefixState,
    ctx: &FeatureContext,
    k: usize,
) -> Result<Vec<Proposal>, ModelError> {
    draft.propose_after(state, ctx, &[], k)
}

pub(crate) fn check_top_k(k: usize, vocab: Vocab) -> Result<(), ModelError> {
    if k == 0 || k > vocab.size() as usize {
        return Err(ModelError::TopKOutOfRange { k, vocab: vocab.size() });
    }
    Ok(())
}
