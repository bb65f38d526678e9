//! Verification of draft trees and the speculative decoding loop.
//!
//! A draft token is accepted when it lies within the policy's bin distance of
//! the verifier argmax at its position (distance 0 in strict mode). The first
//! rejected position is replaced by the verifier argmax; if a whole path is
//! accepted the verifier's next argmax is appended as a bonus token. Either
//! way each verification pass emits exactly one verifier token.

mod decode;

pub use decode::{ar_decode, decode_episode, DecodeParams, Episode};

use serde::{Deserialize, Serialize};

use crate::action_space::{bin_distance, dimension_of, ActionToken, ACTION_DIMS};
use crate::draft_tree::{enumerate_paths, DraftTree};
use crate::error::TreeError;
use crate::models::ReferenceTokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcceptMode {
    Strict,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptancePolicy {
    pub mode: AcceptMode,
    /// Relaxation threshold in bins. Ignored in strict mode.
    pub r: u32,
    /// Per-dimension thresholds overriding `r` in relaxed mode.
    pub per_dimension_r: Option<[u32; ACTION_DIMS]>,
}

impl AcceptancePolicy {
    pub fn strict() -> Self {
        Self { mode: AcceptMode::Strict, r: 0, per_dimension_r: None }
    }

    pub fn relaxed(r: u32) -> Self {
        Self { mode: AcceptMode::Relaxed, r, per_dimension_r: None }
    }

    /// Strict for `r == 0`, relaxed otherwise.
    pub fn from_threshold(r: u32) -> Self {
        if r == 0 {
            Self::strict()
        } else {
            Self::relaxed(r)
        }
    }

    pub fn with_per_dimension(mut self, thresholds: [u32; ACTION_DIMS]) -> Self {
        self.per_dimension_r = Some(thresholds);
        self
    }

    pub fn effective_r(&self, dimension: usize) -> u32 {
        match self.mode {
            AcceptMode::Strict => 0,
            AcceptMode::Relaxed => match self.per_dimension_r {
                Some(per) => per[dimension % ACTION_DIMS],
                None => self.r,
            },
        }
    }

    pub fn label(&self) -> String {
        match (self.mode, self.per_dimension_r) {
            (AcceptMode::Strict, _) => "strict".to_string(),
            (AcceptMode::Relaxed, None) => format!("relaxed(r={})", self.r),
            (AcceptMode::Relaxed, Some(per)) => format!("relaxed(r={}, per_dim={per:?})", self.r),
        }
    }
}

pub fn accept_token(
    draft: ActionToken,
    verified: ActionToken,
    policy: &AcceptancePolicy,
    dimension: usize,
) -> bool {
    match policy.mode {
        AcceptMode::Strict => draft == verified,
        AcceptMode::Relaxed => bin_distance(draft, verified) <= policy.effective_r(dimension),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathVerdict {
    /// Number of leading draft tokens accepted.
    pub accepted: usize,
    /// Verifier token emitted after the accepted prefix.
    pub next_token: ActionToken,
    /// True when every draft token was accepted and `next_token` is the bonus.
    pub bonus: bool,
}

/// Verify one draft path.
///
/// `verified[j]` is the verifier argmax at the position of `path[j]`, and
/// `verified[path.len()]` the argmax after the full path. `first_position`
/// is the absolute stream position of `path[0]`, which selects the action
/// dimension for per-dimension thresholds.
pub fn verify_path(
    path: &[ActionToken],
    verified: &[ActionToken],
    policy: &AcceptancePolicy,
    first_position: usize,
) -> Result<PathVerdict, TreeError> {
    if verified.len() < path.len() + 1 {
        return Err(TreeError::ReferenceMismatch { expected: path.len() + 1, actual: verified.len() });
    }
    let accepted = path
        .iter()
        .zip(verified)
        .enumerate()
        .take_while(|(j, (&d, &v))| accept_token(d, v, policy, dimension_of(first_position + j)))
        .count();
    Ok(PathVerdict { accepted, next_token: verified[accepted], bonus: accepted == path.len() })
}

/// Result of one verification pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    /// Absolute stream position of the first emitted token.
    pub position: usize,
    /// Draft tokens accepted (may be 0).
    pub accepted: usize,
    /// Tokens appended this pass: the accepted drafts, then one verifier token.
    pub emitted: Vec<ActionToken>,
    /// Verifier argmax at each emitted position.
    pub references: Vec<ActionToken>,
    pub correction_used: bool,
    pub bonus_used: bool,
    /// Index into [`enumerate_paths`] order; `None` for an empty tree.
    pub chosen_path: Option<usize>,
}

/// Verify every root-to-leaf path and keep the one with the most accepted tokens.
///
/// Ties go to the higher leaf score, then the lower path index.
pub fn verify_tree(
    tree: &DraftTree,
    refs: &ReferenceTokens,
    policy: &AcceptancePolicy,
    first_position: usize,
) -> Result<VerifyOutcome, TreeError> {
    if refs.nodes.len() != tree.len() {
        return Err(TreeError::ReferenceMismatch { expected: tree.len(), actual: refs.nodes.len() });
    }
    let paths = enumerate_paths(tree)?;

    let mut best: Option<(usize, PathVerdict)> = None;
    for (idx, path) in paths.iter().enumerate() {
        let mut verified = Vec::with_capacity(path.nodes.len() + 1);
        verified.push(refs.root);
        verified.extend(path.nodes.iter().map(|&n| refs.nodes[n]));
        let verdict = verify_path(&path.tokens, &verified, policy, first_position)?;
        let better = match &best {
            None => true,
            Some((b, bv)) => {
                verdict.accepted > bv.accepted
                    || (verdict.accepted == bv.accepted && path.cum_score > paths[*b].cum_score)
            }
        };
        if better {
            best = Some((idx, verdict));
        }
    }

    let Some((idx, verdict)) = best else {
        return Ok(VerifyOutcome {
            position: first_position,
            accepted: 0,
            emitted: vec![refs.root],
            references: vec![refs.root],
            correction_used: true,
            bonus_used: false,
            chosen_path: None,
        });
    };
    let path = &paths[idx];
    let mut emitted: Vec<ActionToken> = path.tokens[..verdict.accepted].to_vec();
    emitted.push(verdict.next_token);
    let mut references = Vec::with_capacity(emitted.len());
    references.push(refs.root);
    references.extend(path.nodes[..verdict.accepted].iter().map(|&n| refs.nodes[n]));
    Ok(VerifyOutcome {
        position: first_position,
        accepted: verdict.accepted,
        emitted,
        references,
        correction_used: !verdict.bonus,
        bonus_used: verdict.bonus,
        chosen_path: Some(idx),
    })
}
