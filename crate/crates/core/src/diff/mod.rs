//! Reverse-mode differentiation, finite-difference certification and Adam.

mod adam;
mod objective;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, OptState};
pub use objective::{fd_check, fd_check_at, fd_check_significant, gradient, relative_error, tape_program, FdProbe, FdReport, Objective, SumObjective, TapeObjective};
pub use params::{Param, ParamId, ParamSet};
pub use tape::{Grads, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("unsupported primitive {0:?}")]
    UnsupportedPrimitive(String),
    #[error("primitive {op:?} called with {got} arguments")]
    Arity { op: String, got: usize },
    #[error("shape mismatch in {0}")]
    ShapeMismatch(String),
}
