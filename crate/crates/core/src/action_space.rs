//! Discretized action vocabulary.
//!
//! Each continuous action dimension is split into `V` equal-width bins and a
//! token is the bin ID. A control action is a chunk of seven tokens:
//! three position deltas, three rotation deltas and the gripper.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::ActionError;

/// Number of tokens in one action chunk.
pub const ACTION_DIMS: usize = 7;

/// Default number of bins per dimension.
pub const DEFAULT_VOCAB_SIZE: u32 = 256;

/// A single action token, i.e. a bin ID.
///
/// The valid range depends on the [`Vocab`] it is used with; construct
/// through [`Vocab::token`] when the value comes from outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionToken(u32);

impl ActionToken {
    pub const fn new(bin: u32) -> Self {
        Self(bin)
    }

    pub const fn bin(self) -> u32 {
        self.0
    }
}

impl fmt::Display for ActionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<ActionToken> for u32 {
    fn from(t: ActionToken) -> u32 {
        t.0
    }
}

/// The action vocabulary: `size` bins per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vocab {
    size: u32,
}

impl Default for Vocab {
    fn default() -> Self {
        Self { size: DEFAULT_VOCAB_SIZE }
    }
}

impl Vocab {
    pub fn new(size: u32) -> Result<Self, ActionError> {
        if size < 2 {
            return Err(ActionError::VocabTooSmall(size));
        }
        Ok(Self { size })
    }

    pub const fn size(self) -> u32 {
        self.size
    }

    pub fn token(self, bin: u32) -> Result<ActionToken, ActionError> {
        if bin < self.size {
            Ok(ActionToken(bin))
        } else {
            Err(ActionError::TokenOutOfRange { bin, vocab: self.size })
        }
    }

    pub fn contains(self, token: ActionToken) -> bool {
        token.0 < self.size
    }

    pub fn max_token(self) -> ActionToken {
        ActionToken(self.size - 1)
    }
}

/// Absolute difference between two bin IDs.
pub fn bin_distance(a: ActionToken, b: ActionToken) -> u32 {
    a.0.abs_diff(b.0)
}

/// Action dimension of an absolute token position within a decoded stream.
pub fn dimension_of(position: usize) -> usize {
    position % ACTION_DIMS
}

/// Seven tokens forming one control action:
/// `[dx, dy, dz, droll, dpitch, dyaw, gripper]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionChunk(pub [ActionToken; ACTION_DIMS]);

impl ActionChunk {
    pub fn from_slice(tokens: &[ActionToken]) -> Result<Self, ActionError> {
        let arr: [ActionToken; ACTION_DIMS] = tokens
            .try_into()
            .map_err(|_| ActionError::ChunkLength(tokens.len()))?;
        Ok(Self(arr))
    }

    pub fn tokens(&self) -> &[ActionToken; ACTION_DIMS] {
        &self.0
    }

    /// Split a token stream into chunks. The stream length must be a multiple of 7.
    pub fn split(tokens: &[ActionToken]) -> Result<Vec<Self>, ActionError> {
        if tokens.len() % ACTION_DIMS != 0 {
            return Err(ActionError::ChunkLength(tokens.len()));
        }
        tokens.chunks_exact(ACTION_DIMS).map(Self::from_slice).collect()
    }
}

/// Closed range `[low, high]` of one action dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl Range {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    fn width(self) -> f64 {
        self.high - self.low
    }
}

/// Per-dimension bounds used to map between continuous values and bins.
///
/// Position deltas are in meters, rotation deltas in radians, the gripper is
/// unitless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Range; ACTION_DIMS]", into = "[Range; ACTION_DIMS]")]
pub struct DimensionBounds([Range; ACTION_DIMS]);

impl Default for DimensionBounds {
    fn default() -> Self {
        let pos = Range::new(-0.05, 0.05);
        let rot = Range::new(-0.25, 0.25);
        let grip = Range::new(0.0, 1.0);
        Self([pos, pos, pos, rot, rot, rot, grip])
    }
}

impl DimensionBounds {
    pub fn new(ranges: [Range; ACTION_DIMS]) -> Result<Self, ActionError> {
        for (dim, r) in ranges.iter().enumerate() {
            // written so that NaN bounds are rejected too
            if !(r.low < r.high) || !r.low.is_finite() || !r.high.is_finite() {
                return Err(ActionError::InvalidBounds { dim, low: r.low, high: r.high });
            }
        }
        Ok(Self(ranges))
    }

    /// Same range for every dimension.
    pub fn uniform(low: f64, high: f64) -> Result<Self, ActionError> {
        Self::new([Range::new(low, high); ACTION_DIMS])
    }

    pub fn ranges(&self) -> &[Range; ACTION_DIMS] {
        &self.0
    }

    /// Width of one bin in dimension `dim`.
    pub fn bin_width(&self, dim: usize, vocab: Vocab) -> f64 {
        self.0[dim].width() / f64::from(vocab.size())
    }
}

impl TryFrom<[Range; ACTION_DIMS]> for DimensionBounds {
    type Error = ActionError;

    fn try_from(ranges: [Range; ACTION_DIMS]) -> Result<Self, Self::Error> {
        Self::new(ranges)
    }
}

impl From<DimensionBounds> for [Range; ACTION_DIMS] {
    fn from(b: DimensionBounds) -> Self {
        b.0
    }
}

/// Map one value to its bin, clamping out-of-range values to the edge bins.
pub fn tokenize_value(value: f64, range: Range, vocab: Vocab) -> ActionToken {
    let v = f64::from(vocab.size());
    let clamped = value.clamp(range.low, range.high);
    let scaled = ((clamped - range.low) / range.width() * v).floor();
    // NaN falls through `as` to 0
    let bin = (scaled as i64).clamp(0, i64::from(vocab.size()) - 1);
    ActionToken(bin as u32)
}

/// Center of the bin a token refers to.
pub fn detokenize_value(token: ActionToken, range: Range, vocab: Vocab) -> f64 {
    let v = f64::from(vocab.size());
    range.low + (f64::from(token.bin()) + 0.5) * range.width() / v
}

pub fn tokenize(
    values: &[f64; ACTION_DIMS],
    bounds: &DimensionBounds,
    vocab: Vocab,
) -> ActionChunk {
    let mut out = [ActionToken(0); ACTION_DIMS];
    for (dim, slot) in out.iter_mut().enumerate() {
        *slot = tokenize_value(values[dim], bounds.0[dim], vocab);
    }
    ActionChunk(out)
}

pub fn detokenize(chunk: &ActionChunk, bounds: &DimensionBounds, vocab: Vocab) -> [f64; ACTION_DIMS] {
    let mut out = [0.0; ACTION_DIMS];
    for (dim, slot) in out.iter_mut().enumerate() {
        *slot = detokenize_value(chunk.0[dim], bounds.0[dim], vocab);
    }
    out
}
