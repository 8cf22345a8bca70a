//! Mean-field inference on pairwise Markov random fields, a unified
//! message-passing GNN layer zoo, and a semi-supervised node-classification
//! trainer, all on a small reverse-mode autodiff substrate.

pub mod autodiff;
pub mod graph;
pub mod mrf;
pub mod optim;
pub mod rng;
pub mod sparse;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use autodiff::{Tape, Var};
pub use graph::{GraphDataset, NormalizedAdjacency};
pub use sparse::SparseMatrix;
pub use tensor::{Tensor, TensorError};
