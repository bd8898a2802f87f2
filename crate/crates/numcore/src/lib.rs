//! Float64 tensors, a reverse-mode autodiff tape, and AdamW.
//!
//! The kernel catalog is deliberately small: it is exactly what the HDyS
//! encoders, decoders and losses are built from. Every kernel has an
//! analytic vector-Jacobian product that [`gradcheck`] verifies against
//! central finite differences.

pub mod adamw;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod params;
pub mod tensor;

pub use adamw::{AdamWConfig, AdamWState};
pub use checkpoint::Checkpoint;
pub use error::{NumError, Result};
pub use gradcheck::{grad_check, grad_check_all, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use ops::{Kernel, OpKind, CATALOG};
pub use params::{accumulate_grads, clip_grad_norm, kaiming_uniform, Binder, Param, ParamId, ParamStore};
pub use tensor::Tensor;
