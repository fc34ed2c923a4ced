//! Complex- and real-valued neural building blocks for monaural speech
//! enhancement, with exact parameter/MAC accounting and a deterministic
//! desk-scale training harness.

pub mod complex;
pub mod accounting;
pub mod config;
pub mod conv;
pub mod dsp;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod params;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use complex::{ActivationKind, CNode, ComplexPair};
pub use error::{Error, Result};
pub use graph::{Gradients, Graph, NodeId};
pub use params::{ParamId, ParamStore};
pub use nn::{Act, Domain, Layer};
pub use tensor::Tensor;
