use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use super::{check_top_k, DraftModel, Distribution, FeatureContext, PrefixState, Proposal, Verifier};
use crate::action_space::{bin_distance, ActionToken, Vocab};
use crate::error::ModelError;
use crate::hash::{combine, mix64, unit_f64};

// power of two, so scaling the hashed uniforms is exact and keeps their order
const LOGIT_SPREAD: f64 = 8.0;
const VERIFIER_SALT: u64 = 0x7E81_F1E5;
const DRAFT_SALT: u64 = 0xD2AF_7000;

// draft log-weights are -RANK_SCALE * rank^RANK_EXPONENT before normalizing
const RANK_SCALE: f64 = 1.2;
const RANK_EXPONENT: f64 = 1.2;

/// Seeded tabular verifier: every (seed, prefix) pair gets its own pseudo-random
/// logit table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashVerifier {
    vocab: Vocab,
    key: u64,
}

impl HashVerifier {
    pub fn new(seed: u64, vocab: Vocab) -> Self {
        Self { vocab, key: combine(VERIFIER_SALT, seed) }
    }

    fn prefix_key(&self, state: &PrefixState, extra: &[ActionToken]) -> u64 {
        combine(self.key, state.digest_with(extra))
    }

    fn uniform(prefix_key: u64, bin: u32) -> f64 {
        unit_f64(mix64(prefix_key ^ mix64(u64::from(bin))))
    }
}

impl Verifier for HashVerifier {
    fn vocab(&self) -> Vocab {
        self.vocab
    }

    fn distribution_after(&self, state: &PrefixState, extra: &[ActionToken]) -> Distribution {
        let key = self.prefix_key(state, extra);
        let logits: Vec<f64> =
            (0..self.vocab.size()).map(|b| LOGIT_SPREAD * Self::uniform(key, b)).collect();
        Distribution::from_logits(&logits)
    }

    fn argmax_after(&self, state: &PrefixState, extra: &[ActionToken]) -> ActionToken {
        let key = self.prefix_key(state, extra);
        let mut best = 0;
        let mut best_u = Self::uniform(key, 0);
        for b in 1..self.vocab.size() {
            let u = Self::uniform(key, b);
            if u > best_u {
                best = b;
                best_u = u;
            }
        }
        ActionToken::new(best)
    }
}

/// Log-probability the synthetic draft assigns to its rank-`j` proposal,
/// for every rank in a vocabulary of `vocab` bins.
pub fn draft_rank_log_probs(vocab: Vocab) -> Vec<f64> {
    let weights: Vec<f64> =
        (0..vocab.size()).map(|j| -RANK_SCALE * f64::from(j).powf(RANK_EXPONENT)).collect();
    let top = weights[0];
    let log_z = top + weights.iter().map(|w| (w - top).exp()).sum::<f64>().ln();
    weights.iter().map(|w| w - log_z).collect()
}

/// Draft model that copies the verifier's argmax with probability
/// `agreement_p` and otherwise misses it by a seeded displacement.
///
/// On a miss the displacement magnitude is `max(1, round(|N(0, noise_sigma)|))`
/// bins, in a random direction. Lower-ranked proposals continue outward from
/// the top one, one bin further from the verifier argmax per rank, so on a miss
/// none of them equals the argmax. A position that would fall outside the
/// vocabulary is mirrored to the other side of the argmax.
#[derive(Debug, Clone)]
pub struct NoisyDraft<V> {
    verifier: V,
    vocab: Vocab,
    agreement_p: f64,
    noise: Normal<f64>,
    key: u64,
    rank_log_probs: Vec<f64>,
}

pub fn make_noisy_draft<V: Verifier>(
    verifier: V,
    agreement_p: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<NoisyDraft<V>, ModelError> {
    if !(0.0..=1.0).contains(&agreement_p) {
        return Err(ModelError::InvalidParameter(format!(
            "agreement_p must lie in [0, 1], got {agreement_p}"
        )));
    }
    if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
        return Err(ModelError::InvalidParameter(format!(
            "noise_sigma must be positive and finite, got {noise_sigma}"
        )));
    }
    let vocab = verifier.vocab();
    let noise = Normal::new(0.0, noise_sigma)
        .map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    Ok(NoisyDraft {
        verifier,
        vocab,
        agreement_p,
        noise,
        key: combine(DRAFT_SALT, seed),
        rank_log_probs: draft_rank_log_probs(vocab),
    })
}

impl<V: Verifier> NoisyDraft<V> {
    pub fn agreement_p(&self) -> f64 {
        self.agreement_p
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise.std_dev()
    }

    pub fn verifier(&self) -> &V {
        &self.verifier
    }

    /// Distance of the top proposal from the verifier argmax, before placement.
    fn sample_offset(&self, rng: &mut ChaCha8Rng) -> (u32, i64) {
        let agree = rng.gen::<f64>() < self.agreement_p;
        let side = if rng.gen::<bool>() { 1 } else { -1 };
        if agree {
            return (0, side);
        }
        let z: f64 = self.noise.sample(rng);
        let cap = f64::from(self.vocab.size());
        let m = z.abs().round().clamp(1.0, cap) as u32;
        (m, side)
    }
}

/// Token `dist` bins from `anchor`, preferring `side`, never reusing `used`.
fn place(anchor: ActionToken, dist: u32, side: i64, vocab: Vocab, used: &[ActionToken]) -> ActionToken {
    let a = i64::from(anchor.bin());
    let max = i64::from(vocab.size()) - 1;
    for s in [side, -side] {
        let c = a + s * i64::from(dist);
        if (0..=max).contains(&c) {
            let tok = ActionToken::new(c as u32);
            if !used.contains(&tok) {
                return tok;
            }
        }
    }
    // both sides exhausted: nearest free distance, lowest bin first
    let mut best: Option<(u32, ActionToken)> = None;
    let mut consider = |tok: ActionToken| {
        let gap = bin_distance(tok, anchor).abs_diff(dist);
        if best.map_or(true, |(g, _)| gap < g) {
            best = Some((gap, tok));
        }
    };
    for b in 0..vocab.size() {
        let tok = ActionToken::new(b);
        if tok != anchor && !used.contains(&tok) {
            consider(tok);
        }
    }
    best.map(|(_, t)| t).unwrap_or(anchor)
}

impl<V: Verifier> DraftModel for NoisyDraft<V> {
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
        let anchor = self.verifier.argmax_after(state, extra);
        let mut rng = ChaCha8Rng::seed_from_u64(combine(self.key, state.digest_with(extra)));
        let (offset, side) = self.sample_offset(&mut rng);
        let mut used: Vec<ActionToken> = Vec::with_capacity(k);
        for rank in 0..k {
            let tok = place(anchor, offset + rank as u32, side, self.vocab, &used);
            used.push(tok);
        }
        Ok(used
            .into_iter()
            .zip(&self.rank_log_probs)
            .map(|(token, &log_score)| Proposal { token, log_score })
            .collect())
    }
}
