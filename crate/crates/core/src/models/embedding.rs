use crate::diffgraph::{BlockId, ParamStore, Tape, Var};
use crate::error::Result;

/// Interleaved `[sin(α_j t), cos(α_j t)]` for `j < width / 2` with
/// `α_j = 1000^(-2j / width)`.
pub fn time_encoding(t: f64, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(width);
    for j in 0..width / 2 {
        let freq = 1000f64.powf(-2.0 * j as f64 / width as f64);
        out.push((freq * t).sin());
        out.push((freq * t).cos());
    }
    out
}

/// Event encoding `[time_encoding(t) ‖ E[k]]`, with the mark table stored
/// one row per mark.
pub fn embed_event(
    t: f64,
    k: usize,
    time_width: usize,
    table: &[f64],
    mark_width: usize,
) -> Vec<f64> {
    let mut e = time_encoding(t, time_width);
    e.extend_from_slice(&table[k * mark_width..(k + 1) * mark_width]);
    e
}

pub(crate) fn embed_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    table: BlockId,
    t: f64,
    k: usize,
    time_width: usize,
) -> Result<Var> {
    let mark_width = store.block(table).cols;
    let time = tape.constant(time_encoding(t, time_width));
    let e = tape.param(store, table);
    let row = tape.slice(e, k * mark_width, mark_width)?;
    Ok(tape.concat(&[time, row]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time_gives_unit_cosines() {
        assert_eq!(time_encoding(0.0, 6), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn first_frequency_is_one() {
        let e = time_encoding(std::f64::consts::FRAC_PI_2, 2);
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15);
    }

    #[test]
    fn frequencies_follow_geometric_schedule() {
        // width 4: α_1 = 1000^(-1/2)
        let t = 3.0;
        let e = time_encoding(t, 4);
        let a1 = 1000f64.powf(-0.5);
        assert!((e[2] - (a1 * t).sin()).abs() < 1e-15);
        assert!((e[3] - (a1 * t).cos()).abs() < 1e-15);
    }

    #[test]
    fn marks_only_change_the_mark_part() {
        let table = [0.1, 0.2, -0.3, 0.4];
        let a = embed_event(1.5, 0, 4, &table, 2);
        let b = embed_event(1.5, 1, 4, &table, 2);
        assert_eq!(a[..4], b[..4]);
        assert_eq!(a[4..], [0.1, 0.2]);
        assert_eq!(b[4..], [-0.3, 0.4]);
    }
}
