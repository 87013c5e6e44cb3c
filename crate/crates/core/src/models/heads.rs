//! Mark distribution head: `softmax(W2 relu(W1 [h ‖ log τ] + b1) + b2)`,
//! or the same network without the `log τ` input.

use rand::Rng;

use crate::diffgraph::{BlockId, Init, OwnerTag, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Gaps below this are clamped before taking the log.
pub const TAU_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkHead {
    pub(crate) w_1: BlockId,
    pub(crate) b_1: BlockId,
    pub(crate) w_2: BlockId,
    pub(crate) b_2: BlockId,
    pub time_dependent: bool,
}

impl MarkHead {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        owner: OwnerTag,
        hidden: usize,
        width: usize,
        num_marks: usize,
        time_dependent: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let input = hidden + usize::from(time_dependent);
        let mut add = |name: &str, rows, cols, init| {
            store.add_block(&format!("{prefix}.{name}"), rows, cols, owner, init, rng)
        };
        Ok(Self {
            w_1: add("W_1", width, input, Init::Glorot)?,
            b_1: add("b_1", width, 1, Init::Zeros)?,
            w_2: add("W_2", num_marks, width, Init::Glorot)?,
            b_2: add("b_2", num_marks, 1, Init::Zeros)?,
            time_dependent,
        })
    }

    /// Log-probabilities of every mark given history `h` and gap `tau`.
    pub(crate) fn log_probs(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        tau: f64,
    ) -> Result<Var> {
        let input = if self.time_dependent {
            if !(tau > 0.0) {
                return Err(Error::NonPositiveTau(tau));
            }
            let lt = tape.constant_scalar(tau.max(TAU_FLOOR).ln());
            tape.concat(&[h, lt])
        } else {
            h
        };
        let (w1, b1) = (tape.param(store, self.w_1), tape.param(store, self.b_1));
        let (w2, b2) = (tape.param(store, self.w_2), tape.param(store, self.b_2));
        let hidden = tape.affine(w1, input, b1)?;
        let hidden = tape.relu(hidden);
        let logits = tape.affine(w2, hidden, b2)?;
        Ok(tape.log_softmax(logits))
    }

    pub fn param_ids(&self) -> [BlockId; 4] {
        [self.w_1, self.b_1, self.w_2, self.b_2]
    }
}
