//! Test-time metrics: NLL terms, probabilistic and mark calibration,
//! median-based time prediction and mark ranking.

mod metrics;
mod predictive;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conflictscope::stats::{create_with_comment, csv_err};
use crate::error::{Error, Result};
use crate::eventstore::{Dataset, EventSequence};
use crate::models::Model;
use crate::objectives::{NllForm, Objective, Quadrature, QuadratureConfig};

pub use metrics::{
    accuracy_at_n, ece, ks_uniform, mark_reliability, mean_absolute_error, mrr, pce, pit_levels,
    time_reliability, MarkPrediction, MarkReliability, TimeReliability, ECE_BINS,
};
pub use predictive::{
    median_tau, Conditional, HawkesConditional, HawkesTruth, NeuralConditional, NeuralPredictor,
    PredictiveModel, MEDIAN_START,
};

/// File names written by [`write_report`].
pub const METRICS_FILE: &str = "metrics.csv";
pub const MARK_RELIABILITY_FILE: &str = "reliability_marks.csv";
pub const TIME_RELIABILITY_FILE: &str = "reliability_time.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub form: NllForm,
    pub quadrature: QuadratureConfig,
    pub ece_bins: usize,
    pub median_tol: f64,
    /// Largest gap probed before the median search gives up.
    pub median_cap: f64,
    pub top_n: Vec<usize>,
    /// Add a randomized PIT value for each censored window tail.
    pub censored_tail: bool,
    /// Seed of the tail randomization; sequence `i` uses stream `i`.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            form: NllForm::Density,
            quadrature: QuadratureConfig::default(),
            ece_bins: ECE_BINS,
            median_tol: 1e-6,
            median_cap: 1e6,
            top_n: vec![1, 3, 5],
            censored_tail: true,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ece_bins == 0 {
            return Err(Error::InvalidConfig("ece_bins must be positive".into()));
        }
        if !(self.median_tol > 0.0 && self.median_tol < 0.5) {
            return Err(Error::InvalidConfig(
                "median_tol must lie in (0, 0.5)".into(),
            ));
        }
        if !(self.median_cap > MEDIAN_START) {
            return Err(Error::InvalidConfig(format!(
                "median_cap must exceed {MEDIAN_START}"
            )));
        }
        if self.top_n.contains(&0) {
            return Err(Error::InvalidConfig(
                "top_n entries must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-event quantities gathered under teacher forcing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    /// `F(tau_i)` at each observed gap, plus one draw from `U(F(c), 1)` per
    /// sequence for the censored gap `c = T - t_n` when enabled.
    pub pit: Vec<f64>,
    pub marks: Vec<MarkPrediction>,
    /// `(predicted median, observed gap)` for every event.
    pub gaps: Vec<(f64, f64)>,
}

fn checked_cdf(cond: &dyn Conditional, tau: f64, seq: &EventSequence) -> Result<f64> {
    let z = cond.cdf(tau)?;
    if !z.is_finite() {
        return Err(Error::NonFiniteValue(format!(
            "CDF at gap {tau} in {}",
            seq.seq_id
        )));
    }
    Ok(z.clamp(0.0, 1.0))
}

fn sequence_predictions<M: PredictiveModel + ?Sized>(
    model: &M,
    index: usize,
    seq: &EventSequence,
    cfg: &EvalConfig,
    with_median: bool,
) -> Result<Predictions> {
    let conds = model.conditionals(seq)?;
    if conds.len() != seq.len() + 1 {
        return Err(Error::LengthMismatch(conds.len(), seq.len() + 1));
    }
    let mut out = Predictions::default();
    for ((cond, tau), ev) in conds.iter().zip(seq.inter_arrivals()).zip(&seq.events) {
        out.pit.push(checked_cdf(cond.as_ref(), tau, seq)?);
        out.marks.push(MarkPrediction {
            probs: cond.mark_probs(tau)?,
            true_mark: ev.k,
        });
        if with_median {
            out.gaps.push((
                median_tau(cond.as_ref(), cfg.median_tol, cfg.median_cap)?,
                tau,
            ));
        }
    }
    if cfg.censored_tail {
        let tail = seq.tail_gap();
        let lo = if tail > 0.0 {
            checked_cdf(conds[seq.len()].as_ref(), tail, seq)?
        } else {
            0.0
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        out.pit.push(lo + rng.gen::<f64>() * (1.0 - lo));
    }
    Ok(out)
}

/// Collects predictions for every event of `test`, one sequence per task,
/// merged in sequence order.
pub fn collect_predictions<M: PredictiveModel + ?Sized>(
    model: &M,
    test: &Dataset,
    cfg: &EvalConfig,
    with_median: bool,
) -> Result<Predictions> {
    if test.num_marks != model.num_marks() {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} marks, model expects {}",
            test.num_marks,
            model.num_marks()
        )));
    }
    let parts: Vec<Predictions> = test
        .sequences
        .par_iter()
        .enumerate()
        .map(|(i, seq)| sequence_predictions(model, i, seq, cfg, with_median))
        .collect::<Result<_>>()?;
    let mut all = Predictions::default();
    for p in parts {
        all.pit.extend(p.pit);
        all.marks.extend(p.marks);
        all.gaps.extend(p.gaps);
    }
    Ok(all)
}

/// Metrics that only need the predictive distributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionMetrics {
    pub events: usize,
    pub pce: f64,
    pub ece: f64,
    pub mae: f64,
    /// `(n, accuracy@n)`.
    pub accuracy: Vec<(usize, f64)>,
    pub mrr: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub mark_reliability: Vec<MarkReliability>,
    pub time_reliability: Vec<TimeReliability>,
}

impl PredictionMetrics {
    pub fn from_predictions(p: &Predictions, cfg: &EvalConfig) -> Result<Self> {
        let levels = pit_levels();
        let (ks_statistic, ks_pvalue) = ks_uniform(&p.pit)?;
        Ok(Self {
            events: p.pit.len(),
            pce: pce(&p.pit, &levels)?,
            ece: ece(&p.marks, cfg.ece_bins)?,
            mae: mean_absolute_error(&p.gaps)?,
            accuracy: cfg
                .top_n
                .iter()
                .map(|n| Ok((*n, accuracy_at_n(&p.marks, *n)?)))
                .collect::<Result<_>>()?,
            mrr: mrr(&p.marks)?,
            ks_statistic,
            ks_pvalue,
            mark_reliability: mark_reliability(&p.marks, cfg.ece_bins)?,
            time_reliability: time_reliability(&p.pit, &levels)?,
        })
    }
}

/// Prediction metrics of any [`PredictiveModel`] on `test`.
pub fn prediction_metrics<M: PredictiveModel + ?Sized>(
    model: &M,
    test: &Dataset,
    cfg: &EvalConfig,
) -> Result<PredictionMetrics> {
    cfg.validate()?;
    PredictionMetrics::from_predictions(&collect_predictions(model, test, cfg, true)?, cfg)
}

/// Full test report of a trained network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub time_loss: f64,
    pub mark_loss: f64,
    pub total: f64,
    pub prediction: PredictionMetrics,
}

impl EvalReport {
    /// `(metric, value)` rows in a stable order.
    pub fn metric_rows(&self) -> Vec<(String, f64)> {
        let p = &self.prediction;
        let mut rows = vec![
            ("nll_time".to_string(), self.time_loss),
            ("nll_mark".to_string(), self.mark_loss),
            ("nll_total".to_string(), self.total),
            ("pce".to_string(), p.pce),
            ("ece".to_string(), p.ece),
            ("mae".to_string(), p.mae),
        ];
        rows.extend(p.accuracy.iter().map(|(n, a)| (format!("acc@{n}"), *a)));
        rows.extend([
            ("mrr".to_string(), p.mrr),
            ("ks_statistic".to_string(), p.ks_statistic),
            ("ks_pvalue".to_string(), p.ks_pvalue),
            ("events".to_string(), p.events as f64),
        ]);
        rows
    }
}

/// NLL terms plus prediction metrics of `model` on `test`.
pub fn evaluate(model: &Model, test: &Dataset, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let seqs: Vec<&EventSequence> = test.sequences.iter().collect();
    let nll = Objective::new(cfg.form, cfg.quadrature)?.evaluate(model, &seqs)?;
    let predictor = NeuralPredictor {
        model,
        quad: Quadrature::new(cfg.quadrature)?,
    };
    Ok(EvalReport {
        time_loss: nll.time_loss,
        mark_loss: nll.mark_loss,
        total: nll.total,
        prediction: prediction_metrics(&predictor, test, cfg)?,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes [`METRICS_FILE`], [`MARK_RELIABILITY_FILE`] and
/// [`TIME_RELIABILITY_FILE`] into `dir`, each after a `# comment` line.
pub fn write_report(report: &EvalReport, dir: &Path, comment: &str) -> Result<()> {
    let mut m = csv::Writer::from_writer(create_with_comment(&dir.join(METRICS_FILE), comment)?);
    m.write_record(["metric", "value"]).map_err(csv_err)?;
    for (name, value) in report.metric_rows() {
        m.write_record([name, value.to_string()]).map_err(csv_err)?;
    }
    m.flush()?;

    let mut k = csv::Writer::from_writer(create_with_comment(
        &dir.join(MARK_RELIABILITY_FILE),
        comment,
    )?);
    k.write_record([
        "bin_lo",
        "bin_hi",
        "center",
        "mean_confidence",
        "accuracy",
        "count",
    ])
    .map_err(csv_err)?;
    for r in &report.prediction.mark_reliability {
        k.write_record([
            r.bin_lo.to_string(),
            r.bin_hi.to_string(),
            (0.5 * (r.bin_lo + r.bin_hi)).to_string(),
            opt(r.mean_confidence),
            opt(r.accuracy),
            r.count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    k.flush()?;

    let mut t = csv::Writer::from_writer(create_with_comment(
        &dir.join(TIME_RELIABILITY_FILE),
        comment,
    )?);
    t.write_record(["level", "frequency", "count"])
        .map_err(csv_err)?;
    for r in &report.prediction.time_reliability {
        t.write_record([
            r.level.to_string(),
            r.frequency.to_string(),
            r.count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    t.flush()?;
    Ok(())
}
