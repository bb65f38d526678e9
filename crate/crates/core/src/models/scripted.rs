use super::{
    check_top_k, draft_rank_log_probs, DraftModel, Distribution, FeatureContext, PrefixState,
    Proposal, Verifier,
};
use crate::action_space::{ActionToken, Vocab};
use crate::error::ModelError;

fn script_at(script: &[ActionToken], position: usize) -> ActionToken {
    script[position.min(script.len() - 1)]
}

/// Verifier whose argmax depends only on the absolute token position.
///
/// Replays a fixed token trace regardless of what was actually emitted;
/// positions past the end repeat the last token.
#[derive(Debug, Clone)]
pub struct ScriptedVerifier {
    vocab: Vocab,
    script: Vec<ActionToken>,
}

impl ScriptedVerifier {
    pub fn new(vocab: Vocab, script: Vec<ActionToken>) -> Result<Self, ModelError> {
        validate_script(vocab, &script)?;
        Ok(Self { vocab, script })
    }
}

fn validate_script(vocab: Vocab, script: &[ActionToken]) -> Result<(), ModelError> {
    if script.is_empty() {
        return Err(ModelError::InvalidParameter("script is empty".into()));
    }
    if let Some(bad) = script.iter().find(|t| !vocab.contains(**t)) {
        return Err(ModelError::InvalidParameter(format!(
            "token {bad} is outside a vocabulary of {}",
            vocab.size()
        )));
    }
    Ok(())
}

impl Verifier for ScriptedVerifier {
    fn vocab(&self) -> Vocab {
        self.vocab
    }

    fn distribution_after(&self, state: &PrefixState, extra: &[ActionToken]) -> Distribution {
        let target = script_at(&self.script, state.len() + extra.len());
        let logits: Vec<f64> = (0..self.vocab.size())
            .map(|b| if b == target.bin() { 10.0 } else { 0.0 })
            .collect();
        Distribution::from_logits(&logits)
    }
}

/// Draft that proposes a scripted token per absolute position, followed by
/// its nearest neighbours (+1, -1, +2, -2, ...) as lower-ranked alternatives.
#[derive(Debug, Clone)]
pub struct ScriptedDraft {
    vocab: Vocab,
    script: Vec<ActionToken>,
    rank_log_probs: Vec<f64>,
}

impl ScriptedDraft {
    pub fn new(vocab: Vocab, script: Vec<ActionToken>) -> Result<Self, ModelError> {
        validate_script(vocab, &script)?;
        Ok(Self { vocab, script, rank_log_probs: draft_rank_log_probs(vocab) })
    }
}

impl DraftModel for ScriptedDraft {
    fn vocab(&self) -> Vocab {
        self.vocab
    }

    fn propose_after(
        &self,
        state: &PrefixState,
        ctx: &FeatureContext,
        extra: &[ActionToken],
        k: usize,
    ) -> Result<Vec<Proposal>, ModelError> {
        check_top_k(k, self.vocab)?;
        ctx.check(state)?;
        let center = i64::from(script_at(&self.script, state.len() + extra.len()).bin());
        let max = i64::from(self.vocab.size()) - 1;
        let mut out = Vec::with_capacity(k);
        let mut step = 0i64;
        while out.len() < k {
            for c in [center + step, center - step] {
                if out.len() < k && (0..=max).contains(&c) && (step != 0 || c == center) {
                    let token = ActionToken::new(c as u32);
                    if !out.iter().any(|p: &Proposal| p.token == token) {
                        out.push(Proposal { token, log_score: self.rank_log_probs[out.len()] });
                    }
                }
            }
            step += 1;
        }
        Ok(out)
    }
}
