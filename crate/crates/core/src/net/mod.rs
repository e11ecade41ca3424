//! Sparse multilayer perceptron with hard sparsity in every weight matrix.

mod checkpoint;
mod layer;
mod network;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use layer::{active_count, Entry, SparseLayer};
pub use network::{
    cross_entropy, softmax, Activation, ForwardPass, Gradients, Network, DEFAULT_HIDDEN,
};
pub use optim::Adam;

pub(crate) use network::argmax as network_argmax;
