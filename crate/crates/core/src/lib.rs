//! Sparse spatial-temporal graph convolutional networks for skeleton-based
//! action recognition.

pub mod ensemble;
pub mod error;
pub mod net;
pub mod optim;
pub mod rng;
pub mod skeleton;
pub mod sparsity;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use net::{Checkpoint, NetConfig, StgcnNetwork};
pub use sparsity::MaskSet;
pub use tensor::{Tape, Tensor, Var};
