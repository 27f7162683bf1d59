//! Exact input derivatives through second-order jets and exact parameter
//! gradients through a reverse-mode tape over jet-valued primals.

pub mod jet;
pub mod tape;
pub mod tensor;

pub use jet::{jet_chain, jet_mul, jet_seed, Activation, Axis, Channel, Jet2};
pub use tape::{Coeff, NodeId, PlainFn, ResidualTerm, Tape, Value};
pub use tensor::{JetTensor, Matrix};
