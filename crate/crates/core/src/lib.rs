//! Feature selection with sparse multilayer perceptrons trained from scratch.
//!
//! A network is trained with dynamic sparse training (SET or RigL, or densely), and the
//! importance of each input feature is accumulated during training either from the
//! strength of its first-layer connections or from the attribution of the output logits
//! to it. The top-K features are then scored by a downstream linear classifier.
//!
//! Modules:
//! - [`net`]: sparse MLP storage, forward/backward passes, Adam, checkpoints
//! - [`dst`]: prune and regrow topology updates
//! - [`importance`]: neuron strength, neuron attribution, accumulators, exports
//! - [`data`]: CSV loading, splits, standardization, synthetic data
//! - [`eval`]: downstream accuracy, coverage, average ranking
//! - [`flops`]: theoretical cost model
//! - [`pipeline`]: training loop, grid search, sweeps, coverage benchmark
//! - [`cli`]: the command implementations behind the `dstfs` binary

pub mod cli;
pub mod data;
pub mod dst;
pub mod error;
pub mod eval;
pub mod flops;
pub mod importance;
pub mod net;
pub mod pipeline;

pub use error::{Error, Result};
