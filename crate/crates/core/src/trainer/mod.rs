//! Mini-batch Adam training with per-task early stopping, parameter
//! freezing, best-state restoration and optional conflict capture.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conflictscope::{capture, ConflictStats};
use crate::diffgraph::{adam_step, AdamConfig, AdamState, OwnerTag, ParamStore};
use crate::error::{Error, Result};
use crate::eventstore::{Dataset, EventSequence};
use crate::models::Model;
use crate::objectives::{GradMode, NllForm, Objective, QuadratureConfig};

pub use crate::models::{balance_report, BalanceRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub form: NllForm,
    pub quadrature: QuadratureConfig,
    /// Record task-gradient conflicts on shared blocks.
    pub capture: bool,
    /// Capture every `capture_stride`-th step.
    pub capture_stride: usize,
    /// Also record task-owned blocks (with a zero partner gradient).
    pub capture_owned: bool,
    /// The optimizer follows `∇(L_T / s + L_M)`.
    pub loss_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            patience: 50,
            seed: 0,
            form: NllForm::Density,
            quadrature: QuadratureConfig::default(),
            capture: true,
            capture_stride: 1,
            capture_owned: false,
            loss_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience >= self.max_epochs {
            return bad("patience must be smaller than max_epochs");
        }
        if self.capture_stride == 0 {
            return bad("capture_stride must be at least 1");
        }
        if !(self.lr >= 0.0) || !(self.loss_scale > 0.0) {
            return bad("lr must be nonnegative and loss_scale positive");
        }
        Ok(())
    }
}

/// Early-stopping bookkeeping of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStop {
    pub best: f64,
    pub best_epoch: usize,
    pub stale: usize,
    pub frozen: bool,
    best_state: Option<ParamStore>,
}

impl TaskStop {
    fn new() -> Self {
        Self {
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
            frozen: false,
            best_state: None,
        }
    }

    /// Returns true when the criterion has just run out of patience.
    fn observe(&mut self, value: f64, epoch: usize, store: &ParamStore, patience: usize) -> bool {
        if self.frozen {
            return false;
        }
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.stale = 0;
            self.best_state = Some(store.clone());
        } else {
            self.stale += 1;
        }
        if self.stale >= patience {
            self.frozen = true;
        }
        self.frozen
    }
}

/// One criterion on the total loss, or one per task for the fully
/// disjoint settings.
#[derive(Debug, Clone, PartialEq)]
pub enum EarlyStopState {
    Joint(TaskStop),
    PerTask { time: TaskStop, mark: TaskStop },
}

impl EarlyStopState {
    pub fn for_model(model: &Model) -> Self {
        if model.spec().setting.fully_disjoint() {
            EarlyStopState::PerTask {
                time: TaskStop::new(),
                mark: TaskStop::new(),
            }
        } else {
            EarlyStopState::Joint(TaskStop::new())
        }
    }

    /// Updates the criteria after an epoch and freezes exhausted tasks.
    /// Returns true when training should stop.
    pub fn observe(
        &mut self,
        epoch: usize,
        val_time: f64,
        val_mark: f64,
        store: &mut ParamStore,
        patience: usize,
    ) -> bool {
        match self {
            EarlyStopState::Joint(stop) => {
                stop.observe(val_time + val_mark, epoch, store, patience)
            }
            EarlyStopState::PerTask { time, mark } => {
                if time.observe(val_time, epoch, store, patience) {
                    store.set_trainable_by_owner(OwnerTag::Time, false);
                }
                if mark.observe(val_mark, epoch, store, patience) {
                    store.set_trainable_by_owner(OwnerTag::Mark, false);
                }
                time.frozen && mark.frozen
            }
        }
    }

    pub fn frozen(&self) -> (bool, bool) {
        match self {
            EarlyStopState::Joint(s) => (s.frozen, s.frozen),
            EarlyStopState::PerTask { time, mark } => (time.frozen, mark.frozen),
        }
    }

    /// Puts every task's blocks back to their best-validation values and
    /// makes all blocks trainable again.
    pub fn restore(&self, store: &mut ParamStore) {
        match self {
            EarlyStopState::Joint(s) => {
                if let Some(best) = &s.best_state {
                    store.copy_values_from(
                        best,
                        &[OwnerTag::Time, OwnerTag::Mark, OwnerTag::Shared],
                    );
                }
            }
            EarlyStopState::PerTask { time, mark } => {
                if let Some(best) = &time.best_state {
                    store.copy_values_from(best, &[OwnerTag::Time, OwnerTag::Shared]);
                }
                if let Some(best) = &mark.best_state {
                    store.copy_values_from(best, &[OwnerTag::Mark]);
                }
            }
        }
        store.set_trainable_by_owner(OwnerTag::Time, true);
        store.set_trainable_by_owner(OwnerTag::Mark, true);
        store.set_trainable_by_owner(OwnerTag::Shared, true);
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_time: f64,
    pub train_mark: f64,
    pub val_time: f64,
    pub val_mark: f64,
    pub frozen_time: bool,
    pub frozen_mark: bool,
}

/// Mean training losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub train_time: f64,
    pub train_mark: f64,
    pub steps: usize,
}

/// Optimizer state carried across epochs.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub adam: AdamState,
    pub step: usize,
}

impl TrainerState {
    pub fn new() -> Self {
        Self {
            adam: AdamState::new(),
            step: 0,
        }
    }
}

impl Default for TrainerState {
    fn default() -> Self {
        Self::new()
    }
}

/// Shuffled batches of sequence indices for one epoch.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Runs the given batches once: split backward passes, optional conflict
/// capture, one Adam step per batch.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    model: &mut Model,
    train: &Dataset,
    batches: &[Vec<usize>],
    objective: &Objective,
    cfg: &TrainConfig,
    state: &mut TrainerState,
    stats: &mut ConflictStats,
    epoch: usize,
) -> Result<EpochSummary> {
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let (mut time_sum, mut mark_sum, mut count) = (0.0, 0.0, 0usize);
    for batch in batches {
        let step = state.step;
        let context = |e: Error| Error::Training {
            epoch,
            step,
            source: Box::new(e),
        };
        let seqs: Vec<&EventSequence> = batch.iter().map(|i| &train.sequences[*i]).collect();
        let eval = objective
            .evaluate_store(&model.arch, &model.store, &seqs, GradMode::Split)
            .map_err(context)?;
        let (gt, gm) = (
            eval.time_grad.expect("split"),
            eval.mark_grad.expect("split"),
        );
        if cfg.capture && step.is_multiple_of(cfg.capture_stride) {
            let snaps = capture(&model.store, step, &gt, &gm, cfg.capture_owned);
            stats.push(&snaps).map_err(context)?;
        }
        let mut grad = gm;
        grad.add_scaled(&gt, 1.0 / cfg.loss_scale);
        model.store.set_grads(&grad).map_err(context)?;
        adam_step(&mut model.store, &adam, &mut state.adam);
        let n = seqs.len();
        time_sum += eval.breakdown.time_loss * n as f64;
        mark_sum += eval.breakdown.mark_loss * n as f64;
        count += n;
        state.step += 1;
    }
    Ok(EpochSummary {
        train_time: time_sum / count.max(1) as f64,
        train_mark: mark_sum / count.max(1) as f64,
        steps: batches.len(),
    })
}

/// Outcome of [`fit`]; `model` holds the restored best state.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub conflicts: ConflictStats,
    pub early_stop: EarlyStopState,
}

/// Trains `model` on `train`, early-stopping on `val`.
pub fn fit(
    mut model: Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ds in [train, val] {
        if ds.num_marks > model.spec().num_marks {
            return Err(Error::InvalidConfig(format!(
                "dataset {} has {} marks, model has {}",
                ds.name,
                ds.num_marks,
                model.spec().num_marks
            )));
        }
    }
    let objective = Objective::new(cfg.form, cfg.quadrature)?;
    objective.check_supported(&model.arch)?;
    let val_seqs: Vec<&EventSequence> = val.sequences.iter().collect();
    let mut state = TrainerState::new();
    let mut stats = ConflictStats::new();
    let mut early_stop = EarlyStopState::for_model(&model);
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let batches = epoch_batches(train.len(), cfg.batch_size, cfg.seed, epoch);
        let summary = train_epoch(
            &mut model, train, &batches, &objective, cfg, &mut state, &mut stats, epoch,
        )?;
        let val_loss = objective
            .evaluate(&model, &val_seqs)
            .map_err(|e| Error::Training {
                epoch,
                step: state.step,
                source: Box::new(e),
            })?;
        let stop = early_stop.observe(
            epoch,
            val_loss.time_loss,
            val_loss.mark_loss,
            &mut model.store,
            cfg.patience,
        );
        let (frozen_time, frozen_mark) = early_stop.frozen();
        history.push(EpochRecord {
            epoch,
            train_time: summary.train_time,
            train_mark: summary.train_mark,
            val_time: val_loss.time_loss,
            val_mark: val_loss.mark_loss,
            frozen_time,
            frozen_mark,
        });
        if stop {
            break;
        }
    }
    early_stop.restore(&mut model.store);
    Ok(FitResult {
        model,
        history,
        conflicts: stats,
        early_stop,
    })
}

/// Writes the history as CSV with an optional leading `#` comment.
pub fn write_history(history: &[EpochRecord], path: &Path, comment: &str) -> Result<()> {
    let mut file = File::create(path)?;
    if !comment.is_empty() {
        writeln!(file, "# {comment}")?;
    }
    writeln!(
        file,
        "epoch,train_LT,train_LM,val_LT,val_LM,frozen_T,frozen_M"
    )?;
    for r in history {
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.train_time,
            r.train_mark,
            r.val_time,
            r.val_mark,
            r.frozen_time,
            r.frozen_mark
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
