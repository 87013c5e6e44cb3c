use super::params::{Gradients, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn worst(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// Below this magnitude, errors are measured in absolute terms.
const REL_FLOOR: f64 = 1e-5;

/// Compares analytic gradients from `f` against central differences with
/// step `h` for every trainable block.
///
/// The per-block error is `max |a - n| / max(max |a|, max |n|, 1e-5)`.
pub fn grad_check<F>(store: &ParamStore, f: F, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, Gradients)>,
{
    let (_, analytic) = f(store)?;
    let mut work = store.clone();
    let mut blocks = Vec::new();
    for id in store.ids() {
        let block = store.block(id);
        if !block.trainable {
            continue;
        }
        let mut max_diff = 0.0f64;
        let mut scale = REL_FLOOR;
        for i in 0..block.len() {
            let orig = block.values[i];
            work.block_mut(id).values[i] = orig + h;
            let (up, _) = f(&work)?;
            work.block_mut(id).values[i] = orig - h;
            let (down, _) = f(&work)?;
            work.block_mut(id).values[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.block(id)[i];
            max_diff = max_diff.max((a - numeric).abs());
            scale = scale.max(a.abs()).max(numeric.abs());
        }
        let err = max_diff / scale;
        blocks.push(BlockCheck {
            name: block.name.clone(),
            max_rel_error: err,
            passed: err <= tol,
        });
    }
    Ok(GradCheckReport { blocks, tol })
}
