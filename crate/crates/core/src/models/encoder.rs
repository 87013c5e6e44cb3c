//! GRU history encoder. State `i` summarizes events `0..i`, so a sequence
//! of `n` events yields `n + 1` states starting from the zero vector.

use rand::Rng;

use super::embedding::embed_on_tape;
use crate::diffgraph::{BlockId, Init, OwnerTag, ParamStore, Tape, Var};
use crate::error::Result;
use crate::eventstore::EventSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub(crate) mark_table: BlockId,
    /// Input weights for the stacked reset, update and candidate gates.
    pub(crate) w_in: BlockId,
    pub(crate) w_hid: BlockId,
    pub(crate) b_in: BlockId,
    pub(crate) b_hid: BlockId,
    pub hidden: usize,
    pub time_width: usize,
}

impl Encoder {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        owner: OwnerTag,
        num_marks: usize,
        time_width: usize,
        mark_width: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let input = time_width + mark_width;
        let mut add = |name: &str, rows, cols, init| {
            store.add_block(&format!("{prefix}.{name}"), rows, cols, owner, init, rng)
        };
        Ok(Self {
            mark_table: add("E", num_marks, mark_width, Init::Glorot)?,
            w_in: add("W_i", 3 * hidden, input, Init::Glorot)?,
            w_hid: add("W_h", 3 * hidden, hidden, Init::Glorot)?,
            b_in: add("b_i", 3 * hidden, 1, Init::Zeros)?,
            b_hid: add("b_h", 3 * hidden, 1, Init::Zeros)?,
            hidden,
            time_width,
        })
    }

    /// One GRU update: `h' = n + z ⊙ (h - n)`.
    pub(crate) fn step(&self, tape: &mut Tape, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let d = self.hidden;
        let (wi, wh) = (tape.param(store, self.w_in), tape.param(store, self.w_hid));
        let (bi, bh) = (tape.param(store, self.b_in), tape.param(store, self.b_hid));
        let gi = tape.affine(wi, x, bi)?;
        let gh = tape.affine(wh, h, bh)?;
        let gate = |tape: &mut Tape, off: usize| -> Result<Var> {
            let a = tape.slice(gi, off, d)?;
            let b = tape.slice(gh, off, d)?;
            let s = tape.add(a, b)?;
            Ok(tape.sigmoid(s))
        };
        let r = gate(tape, 0)?;
        let z = gate(tape, d)?;
        let gi_n = tape.slice(gi, 2 * d, d)?;
        let gh_n = tape.slice(gh, 2 * d, d)?;
        let rg = tape.mul(r, gh_n)?;
        let pre = tape.add(gi_n, rg)?;
        let n = tape.tanh(pre);
        let diff = tape.sub(h, n)?;
        let zd = tape.mul(z, diff)?;
        tape.add(n, zd)
    }

    pub(crate) fn states(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        seq: &EventSequence,
    ) -> Result<Vec<Var>> {
        let mut h = tape.constant(vec![0.0; self.hidden]);
        let mut out = Vec::with_capacity(seq.len() + 1);
        out.push(h);
        for e in &seq.events {
            let x = embed_on_tape(tape, store, self.mark_table, e.t, e.k, self.time_width)?;
            h = self.step(tape, store, x, h)?;
            out.push(h);
        }
        Ok(out)
    }

    /// Final state after the whole prefix, as plain values.
    pub fn encode_history(&self, store: &ParamStore, seq: &EventSequence) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let states = self.states(&mut tape, store, seq)?;
        Ok(tape
            .value(*states.last().expect("at least the initial state"))
            .to_vec())
    }

    pub fn param_ids(&self) -> [BlockId; 5] {
        [
            self.mark_table,
            self.w_in,
            self.w_hid,
            self.b_in,
            self.b_hid,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventstore::Event;
    use crate::models::embedding::embed_event;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoder(store: &mut ParamStore) -> Encoder {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        Encoder::build(store, "enc", OwnerTag::Shared, 3, 4, 4, 5, &mut rng).unwrap()
    }

    fn seq(events: &[(f64, usize)]) -> EventSequence {
        EventSequence {
            seq_id: "s".into(),
            horizon: 10.0,
            events: events.iter().map(|&(t, k)| Event { t, k }).collect(),
        }
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Plain GRU cell used as an independent oracle.
    fn cell(store: &ParamStore, enc: &Encoder, x: &[f64], h: &[f64]) -> Vec<f64> {
        let d = enc.hidden;
        let mv = |id: BlockId, v: &[f64], b: BlockId| -> Vec<f64> {
            let blk = store.block(id);
            let bias = &store.block(b).values;
            (0..blk.rows)
                .map(|r| {
                    (0..blk.cols)
                        .map(|c| blk.values[r * blk.cols + c] * v[c])
                        .sum::<f64>()
                        + bias[r]
                })
                .collect()
        };
        let gi = mv(enc.w_in, x, enc.b_in);
        let gh = mv(enc.w_hid, h, enc.b_hid);
        (0..d)
            .map(|j| {
                let r = sigmoid(gi[j] + gh[j]);
                let z = sigmoid(gi[d + j] + gh[d + j]);
                let n = (gi[2 * d + j] + r * gh[2 * d + j]).tanh();
                (1.0 - z) * n + z * h[j]
            })
            .collect()
    }

    #[test]
    fn empty_prefix_is_zero() {
        let mut s = ParamStore::new();
        let enc = encoder(&mut s);
        assert_eq!(enc.encode_history(&s, &seq(&[])).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn zero_weights_keep_zero_state() {
        let mut s = ParamStore::new();
        let enc = encoder(&mut s);
        for id in enc.param_ids() {
            if id != enc.mark_table {
                s.block_mut(id).values.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let h = enc.encode_history(&s, &seq(&[(0.5, 1), (2.0, 2)])).unwrap();
        assert_eq!(h, vec![0.0; 5]);
    }

    #[test]
    fn unrolled_cell_matches() {
        let mut s = ParamStore::new();
        let enc = encoder(&mut s);
        for id in [enc.b_in, enc.b_hid] {
            s.block_mut(id)
                .values
                .iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v = 0.05 * i as f64 - 0.3);
        }
        let events = [(0.5, 1), (2.0, 2)];
        let ours = enc.encode_history(&s, &seq(&events)).unwrap();
        let table = &s.block(enc.mark_table).values;
        let mut h = vec![0.0; 5];
        for (t, k) in events {
            let x = embed_event(t, k, 4, table, 4);
            h = cell(&s, &enc, &x, &h);
        }
        for (a, b) in ours.iter().zip(&h) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
