use std::time::Duration;

use super::{
    DraftModel, Distribution, FeatureContext, PrefixState, Proposal, ReferenceTokens, Verifier,
};
use crate::action_space::{ActionToken, Vocab};
use crate::error::ModelError;
use crate::par::Parallelism;

/// Wraps a model and sleeps for a fixed latency on every forward pass.
///
/// A verifier pass is one `argmax_after`/`distribution_after` call or one
/// whole `tree_pass`; a draft pass is one `propose_after` call or one whole
/// `propose_level`.
///
/// The wait sleeps for most of the interval and spins for the rest, so the
/// injected latency does not depend on the scheduler's wake-up slack.
#[derive(Debug, Clone)]
pub struct Delayed<M> {
    inner: M,
    latency: Duration,
}

impl<M> Delayed<M> {
    pub fn new(inner: M, latency: Duration) -> Self {
        Self { inner, latency }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    fn wait(&self) {
        if !self.latency.is_zero() {
            spin_sleep::sleep(self.latency);
        }
    }
}

impl<M: Verifier> Verifier for Delayed<M> {
    fn vocab(&self) -> Vocab {
        self.inner.vocab()
    }

    fn distribution_after(&self, state: &PrefixState, extra: &[ActionToken]) -> Distribution {
        self.wait();
        self.inner.distribution_after(state, extra)
    }

    fn argmax_after(&self, state: &PrefixState, extra: &[ActionToken]) -> ActionToken {
        self.wait();
        self.inner.argmax_after(state, extra)
    }

    fn tree_pass(
        &self,
        state: &PrefixState,
        paths: &[Vec<ActionToken>],
        par: Parallelism,
    ) -> ReferenceTokens {
        self.wait();
        self.inner.tree_pass(state, paths, par)
    }
}

impl<M: DraftModel> DraftModel for Delayed<M> {
    fn vocab(&self) -> Vocab {
        self.inner.vocab()
    }

    fn propose_after(
        &self,
        state: &PrefixState,
        ctx: &FeatureContext,
        extra: &[ActionToken],
        k: usize,
    ) -> Result<Vec<Proposal>, ModelError> {
        self.wait();
        self.inner.propose_after(state, ctx, extra, k)
    }

    fn propose_level(
        &self,
        state: &PrefixState,
        ctx: &FeatureContext,
        extras: &[Vec<ActionToken>],
        k: usize,
        par: Parallelism,
    ) -> Result<Vec<Vec<Proposal>>, ModelError> {
        self.wait();
        self.inner.propose_level(state, ctx, extras, k, par)
    }
}
