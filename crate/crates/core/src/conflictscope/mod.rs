//! Gradient conflict measurement between the time and mark losses, its
//! aggregation over training, and the one-step comparison between shared
//! and duplicated parametrizations.

mod corollary;
mod metrics;
pub(crate) mod stats;

pub use corollary::{
    corollary1_check, one_step_comparison, one_step_delta, CorollaryReport, CorollaryRow,
};
pub use metrics::{cg_ratio, cos_angle, gms, tpi, NORM_FLOOR};
pub use stats::{
    export_histograms, histogram_bin, read_records, write_records, ConflictRecord, ConflictStats,
    GroupSummary, GLOBAL, HISTOGRAM_BINS, POOLED,
};

use crate::diffgraph::{Gradients, OwnerTag, ParamStore};
use crate::error::Result;
use crate::eventstore::EventSequence;
use crate::models::Model;
use crate::objectives::{Evaluation, GradMode, Objective};

/// Copies of the two task gradients of one block at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSnapshot {
    pub step: usize,
    pub block: String,
    pub time_grad: Vec<f64>,
    pub mark_grad: Vec<f64>,
}

/// Snapshots of every shared block; with `include_owned`, task-owned blocks
/// are added with a zero partner gradient.
pub fn capture(
    store: &ParamStore,
    step: usize,
    time_grad: &Gradients,
    mark_grad: &Gradients,
    include_owned: bool,
) -> Vec<GradSnapshot> {
    store
        .ids()
        .filter_map(|id| {
            let block = store.block(id);
            let (t, m) = (time_grad.block(id), mark_grad.block(id));
            let (t, m) = match block.owner {
                OwnerTag::Shared => (t.to_vec(), m.to_vec()),
                _ if !include_owned => return None,
                OwnerTag::Time => (t.to_vec(), vec![0.0; m.len()]),
                OwnerTag::Mark => (vec![0.0; t.len()], m.to_vec()),
            };
            Some(GradSnapshot {
                step,
                block: block.name.clone(),
                time_grad: t,
                mark_grad: m,
            })
        })
        .collect()
}

/// Evaluates `batch` with separate time and mark backward passes and
/// snapshots the shared blocks.
pub fn capture_two_losses(
    model: &Model,
    batch: &[&EventSequence],
    objective: &Objective,
    step: usize,
    include_owned: bool,
) -> Result<(Evaluation, Vec<GradSnapshot>)> {
    let eval = objective.evaluate_store(&model.arch, &model.store, batch, GradMode::Split)?;
    let snaps = capture(
        &model.store,
        step,
        eval.time_grad.as_ref().expect("split mode"),
        eval.mark_grad.as_ref().expect("split mode"),
        include_owned,
    );
    Ok((eval, snaps))
}
