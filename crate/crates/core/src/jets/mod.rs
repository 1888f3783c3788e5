//! Mixed-mode differentiation.
//!
//! [`Jet2`] carries values forward together with exact first and second
//! derivatives in the surface parameters. [`Tape`] accumulates gradients of
//! scalar losses backward with respect to registered leaves.

mod jet2;
mod tape;

pub use jet2::{sigmoid, softplus, softplus_sigmoid, Jet2};
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum JetError {
    #[error("division by a jet whose value is zero")]
    DivisionByZero,
    #[error("node does not belong to this tape")]
    ForeignNode,
}
