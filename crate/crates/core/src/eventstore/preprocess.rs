use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Event, EventSequence};
use crate::error::{Error, Result};

/// Maps `[0, max horizon]` affinely onto `[lo, hi]`, anchored at 0.
pub fn rescale_times(ds: &Dataset, lo: f64, hi: f64) -> Result<Dataset> {
    if !(hi > lo && lo >= 0.0) {
        return Err(Error::InvalidConfig(format!("rescale target [{lo}, {hi}]")));
    }
    if ds.num_events() == 0 {
        return Err(Error::EmptyDataset);
    }
    let max_t = ds.sequences.iter().map(|s| s.horizon).fold(0.0, f64::max);
    let slope = (hi - lo) / max_t;
    let map = |t: f64| lo + slope * t;
    let sequences = ds
        .sequences
        .iter()
        .map(|s| EventSequence {
            seq_id: s.seq_id.clone(),
            horizon: map(s.horizon),
            events: s
                .events
                .iter()
                .map(|e| Event {
                    t: map(e.t),
                    k: e.k,
                })
                .collect(),
        })
        .collect();
    Ok(Dataset {
        name: ds.name.clone(),
        num_marks: ds.num_marks,
        sequences,
    })
}

/// Keeps the `k_max` most frequent marks (ties to the lower id) and
/// relabels them `0..K'` by descending frequency.
pub fn filter_top_k_marks(ds: &Dataset, k_max: usize) -> Result<Dataset> {
    if k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be at least 1".into()));
    }
    let mut counts = vec![0usize; ds.num_marks];
    for e in ds.sequences.iter().flat_map(|s| &s.events) {
        counts[e.k] += 1;
    }
    let mut order: Vec<usize> = (0..ds.num_marks).filter(|&k| counts[k] > 0).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.truncate(k_max);
    let mut relabel = vec![None; ds.num_marks];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = Some(new);
    }
    let sequences = ds
        .sequences
        .iter()
        .map(|s| EventSequence {
            seq_id: s.seq_id.clone(),
            horizon: s.horizon,
            events: s
                .events
                .iter()
                .filter_map(|e| relabel[e.k].map(|k| Event { t: e.t, k }))
                .collect(),
        })
        .collect();
    Ok(Dataset {
        name: ds.name.clone(),
        num_marks: order.len().max(1),
        sequences,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// Fold sizes: floor of each share, leftovers to the largest fractional
    /// parts (earlier folds win ties).
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|x| !(*x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("{:?}", f)));
        }
        let raw: Vec<f64> = f.iter().map(|x| x * n as f64).collect();
        // round away representation noise such as 0.6 * 5 = 3.0000000000000004
        let mut sizes: Vec<usize> = raw.iter().map(|r| (r + 1e-9).floor() as usize).collect();
        let mut left = n.saturating_sub(sizes.iter().sum());
        let mut by_frac: Vec<usize> = vec![0, 1, 2];
        by_frac.sort_by(|&a, &b| {
            let fa = raw[a] - raw[a].floor();
            let fb = raw[b] - raw[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for i in by_frac.into_iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        Ok([sizes[0], sizes[1], sizes[2]])
    }
}

/// Shuffles sequence indices with the split seed and cuts them into
/// train/validation/test folds.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let [a, b, _] = spec.sizes(ds.len())?;
    if a == 0 {
        return Err(Error::TooFewSequences {
            available: ds.len(),
        });
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    Ok((
        ds.subset(&idx[..a]),
        ds.subset(&idx[a..a + b]),
        ds.subset(&idx[a + b..]),
    ))
}
