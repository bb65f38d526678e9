//! Speculative decoding for discretized robot action tokens.
//!
//! A cheap draft model proposes a tree of candidate action tokens, a verifier
//! checks every path in one pass, and draft tokens are accepted when they sit
//! within a configurable number of bins of the verifier's greedy choice.
//! With a threshold of zero the output is identical to greedy decoding.

pub mod action_space;
pub mod cli;
pub mod config;
pub mod draft_tree;
pub mod error;
pub mod harness;
mod hash;
pub mod models;
pub mod par;
pub mod verify_engine;

pub use action_space::{bin_distance, ActionChunk, ActionToken, DimensionBounds, Vocab};
pub use config::{parse_config, OutputFormat, RunConfig};
pub use draft_tree::{build_tree, enumerate_paths, DraftTree, TreeParams};
pub use par::Parallelism;
pub use verify_engine::{ar_decode, decode_episode, verify_tree, AcceptancePolicy, DecodeParams};
