//! Reverse-mode differentiation, named parameter blocks, and the Adam optimizer.

mod adam;
mod gradcheck;
mod params;
pub mod special;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, BlockCheck, GradCheckReport};
pub use params::{BlockId, Gradients, Init, OwnerTag, ParamBlock, ParamStore};
pub use tape::{Tape, Unary, Var};
