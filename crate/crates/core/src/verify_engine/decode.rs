use serde::{Deserialize, Serialize};

use super::{verify_tree, AcceptancePolicy, VerifyOutcome};
use crate::action_space::ActionToken;
use crate::draft_tree::{build_tree, TreeParams};
use crate::error::ModelError;
use crate::models::{DraftModel, FeatureContext, PrefixState, Verifier, DEFAULT_FEATURE_WIDTH};
use crate::par::Parallelism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub tree: TreeParams,
    pub policy: AcceptancePolicy,
    pub feature_width: usize,
    /// Parallelism inside a step (draft levels and the tree pass).
    pub par: Parallelism,
}

impl DecodeParams {
    pub fn new(tree: TreeParams, policy: AcceptancePolicy) -> Self {
        Self { tree, policy, feature_width: DEFAULT_FEATURE_WIDTH, par: Parallelism::Sequential }
    }
}

/// Output of one speculative decoding run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    /// Exactly `target_len` tokens.
    pub tokens: Vec<ActionToken>,
    /// One entry per verification pass, in order.
    pub outcomes: Vec<VerifyOutcome>,
}

impl Episode {
    pub fn verifier_calls(&self) -> usize {
        self.outcomes.len()
    }
}

fn check_len(target_len: usize) -> Result<(), ModelError> {
    if target_len == 0 {
        return Err(ModelError::InvalidParameter("target length must be at least 1".into()));
    }
    Ok(())
}

/// Draft, verify and append until `target_len` new tokens exist.
///
/// Each iteration builds a draft tree, runs one verifier pass over it and
/// appends the chosen path's accepted tokens plus one verifier token. The
/// final iteration may overshoot; the token list is truncated to
/// `target_len` while the outcomes keep the full emitted lists.
pub fn decode_episode<V, D>(
    state: &PrefixState,
    verifier: &V,
    draft: &D,
    params: &DecodeParams,
    target_len: usize,
) -> Result<Episode, ModelError>
where
    V: Verifier + ?Sized,
    D: DraftModel + ?Sized,
{
    check_len(target_len)?;
    if verifier.vocab() != draft.vocab() {
        return Err(ModelError::InvalidParameter(format!(
            "verifier vocabulary {} differs from draft vocabulary {}",
            verifier.vocab().size(),
            draft.vocab().size()
        )));
    }
    let start = state.len();
    let mut state = state.clone();
    let mut ctx = FeatureContext::for_prefix(&state, params.feature_width);
    let mut outcomes = Vec::new();

    while state.len() - start < target_len {
        let tree = build_tree(&state, &ctx, draft, params.tree, params.par)?;
        let paths = tree.node_paths()?;
        let refs = verifier.tree_pass(&state, &paths, params.par);
        let outcome = verify_tree(&tree, &refs, &params.policy, state.len())?;
        state.extend(&outcome.emitted);
        ctx.extend(&outcome.emitted);
        outcomes.push(outcome);
    }

    let tokens = state.emitted()[start..start + target_len].to_vec();
    Ok(Episode { tokens, outcomes })
}

/// Plain greedy decoding: one verifier query per token.
pub fn ar_decode<V: Verifier + ?Sized>(
    state: &PrefixState,
    verifier: &V,
    target_len: usize,
) -> Result<Vec<ActionToken>, ModelError> {
    check_len(target_len)?;
    let mut state = state.clone();
    let mut out = Vec::with_capacity(target_len);
    for _ in 0..target_len {
        let next = verifier.argmax_after(&state, &[]);
        state.push(next);
        out.push(next);
    }
    Ok(out)
}
