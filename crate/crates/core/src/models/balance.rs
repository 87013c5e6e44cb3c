//! Parameter-count bookkeeping across sharing settings.

use serde::Serialize;

use super::{Architecture, ModelSpec, Setting};
use crate::error::{Error, Result};

/// Deviation from the reference count above which a row is flagged.
pub const BALANCE_TOLERANCE: f64 = 0.10;

/// Encoder and decoder parameter counts of a spec.
pub fn param_budget(spec: &ModelSpec) -> Result<(usize, usize)> {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let (_, store) = Architecture::build(spec, &mut rng)?;
    let mut encoder = 0;
    let mut decoder = 0;
    for block in store.blocks() {
        if Architecture::block_group(&block.name) == "encoder" {
            encoder += block.len();
        } else {
            decoder += block.len();
        }
    }
    Ok((encoder, decoder))
}

/// Adjusts the GRU width of `spec` so its total parameter count is as close
/// as possible to `target`.
pub fn balanced_spec(spec: &ModelSpec, target: usize) -> Result<ModelSpec> {
    if target == 0 {
        return Err(Error::InvalidConfig(
            "target parameter count must be positive".into(),
        ));
    }
    let total = |hidden: usize| -> Result<usize> {
        let mut s = *spec;
        s.widths.hidden = hidden;
        let (e, d) = param_budget(&s)?;
        Ok(e + d)
    };
    // counts grow monotonically with the width: bracket then bisect
    let mut hi = spec.widths.hidden.max(1);
    while total(hi)? < target {
        hi *= 2;
    }
    let mut lo = 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if total(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let best = [lo, hi]
        .into_iter()
        .min_by_key(|h| total(*h).map(|t| t.abs_diff(target)).unwrap_or(usize::MAX))
        .unwrap_or(hi);
    let mut s = *spec;
    s.widths.hidden = best;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceRow {
    pub setting: Setting,
    pub total: usize,
    pub encoder: usize,
    pub decoder: usize,
    /// Relative deviation of `total` from the first spec's total.
    pub deviation: f64,
    pub flagged: bool,
}

/// Per-spec parameter counts relative to the first spec.
pub fn balance_report(specs: &[ModelSpec]) -> Result<Vec<BalanceRow>> {
    let Some(first) = specs.first() else {
        return Err(Error::EmptySeries);
    };
    let (e0, d0) = param_budget(first)?;
    let reference = (e0 + d0) as f64;
    specs
        .iter()
        .map(|spec| {
            let (encoder, decoder) = param_budget(spec)?;
            let total = encoder + decoder;
            let deviation = (total as f64 - reference) / reference;
            Ok(BalanceRow {
                setting: spec.setting,
                total,
                encoder,
                decoder,
                deviation,
                flagged: deviation.abs() > BALANCE_TOLERANCE,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DecoderFamily, Widths};

    fn spec(setting: Setting) -> ModelSpec {
        ModelSpec::new(DecoderFamily::Thp, setting, 3).with_widths(Widths {
            hidden: 8,
            mlp: 8,
            mixtures: 4,
            channels: 8,
            ..Widths::default()
        })
    }

    #[test]
    fn disjoint_settings_are_larger_than_base() {
        let rows = balance_report(&Setting::ALL.map(spec)).unwrap();
        assert_eq!(rows[0].deviation, 0.0);
        assert!(!rows[0].flagged);
        let pp = &rows[2];
        assert!(pp.encoder > rows[0].encoder);
        assert!(pp.flagged);
    }

    #[test]
    fn balancing_brings_plusplus_within_tolerance() {
        let (e, d) = param_budget(&spec(Setting::Base)).unwrap();
        let balanced = balanced_spec(&spec(Setting::PlusPlus), e + d).unwrap();
        assert!(balanced.widths.hidden < 8);
        let rows = balance_report(&[spec(Setting::Base), balanced]).unwrap();
        assert!(!rows[1].flagged, "{rows:?}");
    }
}
