//! One plain gradient step under a shared and a duplicated parametrization
//! from the same starting point. To first order in the step size the
//! duplicated total loss is lower by `2α g_T·g_M` over the duplicated
//! parameters, so it wins whenever the task gradients conflict.

use serde::Serialize;

use crate::diffgraph::{Gradients, OwnerTag, ParamStore};
use crate::error::{Error, Result};
use crate::eventstore::EventSequence;
use crate::models::{base_block_name, Model};
use crate::objectives::{GradMode, Objective};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryRow {
    pub lr: f64,
    pub shared_loss: f64,
    pub disjoint_loss: f64,
    /// `disjoint_loss - shared_loss`.
    pub delta: f64,
    /// `|delta / lr - limit| / |limit|`.
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryReport {
    pub initial_loss: f64,
    /// Angle between the task gradients over the duplicated parameters.
    pub cos: f64,
    pub norm_time: f64,
    pub norm_mark: f64,
    /// `2 ‖g_T‖ ‖g_M‖ cos`, the small-step limit of `delta / lr`.
    pub limit: f64,
    pub rows: Vec<CorollaryRow>,
}

/// `Δ` for two losses of one parameter vector after a plain step of size `lr`.
/// Each closure returns its loss and gradient.
pub fn one_step_delta<FT, FM>(theta: &[f64], time_loss: FT, mark_loss: FM, lr: f64) -> f64
where
    FT: Fn(&[f64]) -> (f64, Vec<f64>),
    FM: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, gt) = time_loss(theta);
    let (_, gm) = mark_loss(theta);
    let step = |g: &dyn Fn(usize) -> f64| -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, x)| x - lr * g(i))
            .collect()
    };
    let shared = step(&|i| gt[i] + gm[i]);
    let time_copy = step(&|i| gt[i]);
    let mark_copy = step(&|i| gm[i]);
    let shared_loss = time_loss(&shared).0 + mark_loss(&shared).0;
    let disjoint_loss = time_loss(&time_copy).0 + mark_loss(&mark_copy).0;
    disjoint_loss - shared_loss
}

fn sgd(store: &ParamStore, grad: &Gradients, lr: f64) -> ParamStore {
    let mut out = store.clone();
    for id in store.ids() {
        for (v, g) in out.block_mut(id).values.iter_mut().zip(grad.block(id)) {
            *v -= lr * g;
        }
    }
    out
}

/// Base-model block indices duplicated (made task-owned) in `duplicated`.
fn duplicated_blocks(shared: &Model, duplicated: &Model) -> Result<Vec<crate::diffgraph::BlockId>> {
    let mut ids = Vec::new();
    for id in duplicated.store.ids() {
        let block = duplicated.store.block(id);
        let base = shared
            .store
            .block(shared.store.id_of(&base_block_name(&block.name))?);
        if block.values != base.values {
            return Err(Error::InvalidConfig(format!(
                "{} does not start from {}",
                block.name, base.name
            )));
        }
        if block.owner != OwnerTag::Shared {
            let base_id = shared.store.id_of(&base.name)?;
            if !ids.contains(&base_id) {
                ids.push(base_id);
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Runs one step of each scheme for every step size, without requiring a
/// conflicting batch.
pub fn one_step_comparison(
    shared: &Model,
    duplicated: &Model,
    batch: &[&EventSequence],
    objective: &Objective,
    lrs: &[f64],
) -> Result<CorollaryReport> {
    let dup_ids = duplicated_blocks(shared, duplicated)?;
    let base = objective.evaluate_store(&shared.arch, &shared.store, batch, GradMode::Split)?;
    let (gt, gm) = (
        base.time_grad.expect("split"),
        base.mark_grad.expect("split"),
    );
    let (ft, fm) = (gt.flatten(&dup_ids), gm.flatten(&dup_ids));
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (norm_time, norm_mark) = (norm(&ft), norm(&fm));
    let dot: f64 = ft.iter().zip(&fm).map(|(a, b)| a * b).sum();
    let cos = if norm_time > 0.0 && norm_mark > 0.0 {
        dot / (norm_time * norm_mark)
    } else {
        0.0
    };
    let limit = 2.0 * dot;
    let shared_total = gt.sum(&gm);
    let dup = objective.evaluate_store(
        &duplicated.arch,
        &duplicated.store,
        batch,
        GradMode::Combined,
    )?;
    let dup_total = dup.total_grad.expect("combined");
    let rows = lrs
        .iter()
        .map(|&lr| {
            let s = sgd(&shared.store, &shared_total, lr);
            let d = sgd(&duplicated.store, &dup_total, lr);
            let shared_loss = objective
                .evaluate_store(&shared.arch, &s, batch, GradMode::None)?
                .breakdown
                .total;
            let disjoint_loss = objective
                .evaluate_store(&duplicated.arch, &d, batch, GradMode::None)?
                .breakdown
                .total;
            let delta = disjoint_loss - shared_loss;
            Ok(CorollaryRow {
                lr,
                shared_loss,
                disjoint_loss,
                delta,
                relative_error: ((delta / lr - limit) / limit).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorollaryReport {
        initial_loss: base.breakdown.total,
        cos,
        norm_time,
        norm_mark,
        limit,
        rows,
    })
}

/// [`one_step_comparison`] on a batch whose task gradients conflict.
pub fn corollary1_check(
    shared: &Model,
    duplicated: &Model,
    batch: &[&EventSequence],
    objective: &Objective,
    lrs: &[f64],
) -> Result<CorollaryReport> {
    let report = one_step_comparison(shared, duplicated, batch, objective, lrs)?;
    if !(report.cos < 0.0) {
        return Err(Error::NoConflictFound(report.cos));
    }
    Ok(report)
}
