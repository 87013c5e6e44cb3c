//! Negative log-likelihood in density, intensity and compensator form,
//! split into a time term and a mark term.
//!
//! Both terms are averaged over sequences, not events. The survival term of
//! the window tail belongs to the time term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Quadrature, QuadratureConfig};
use crate::diffgraph::{Gradients, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::eventstore::{Dataset, EventSequence};
use crate::models::{Architecture, Model, Prepared};

/// How the time term is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NllForm {
    /// `log f(τ_i)` per event plus `log(1 - F)` on the tail.
    #[default]
    Density,
    /// `log λ(τ_i)` per event minus the integrated intensity over every
    /// interval and the tail, always by quadrature.
    Intensity,
    /// `log Λ'(τ_i)` per event minus compensator increments, all in closed form.
    Compensator,
}

impl NllForm {
    pub fn as_str(self) -> &'static str {
        match self {
            NllForm::Density => "density",
            NllForm::Intensity => "intensity",
            NllForm::Compensator => "compensator",
        }
    }
}

/// Sequence-averaged time and mark losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NllBreakdown {
    pub time_loss: f64,
    pub mark_loss: f64,
    pub total: f64,
    /// Unaveraged `(time, mark)` loss of every sequence.
    pub per_sequence: Vec<(f64, f64)>,
    /// Monte Carlo standard error of `time_loss` (0 for deterministic rules).
    pub mc_stderr: f64,
}

impl NllBreakdown {
    fn from_parts(per_sequence: Vec<(f64, f64)>, variance: f64) -> Self {
        let n = per_sequence.len() as f64;
        let time_loss = per_sequence.iter().map(|p| p.0).sum::<f64>() / n;
        let mark_loss = per_sequence.iter().map(|p| p.1).sum::<f64>() / n;
        Self {
            time_loss,
            mark_loss,
            total: time_loss + mark_loss,
            per_sequence,
            mc_stderr: variance.sqrt() / n,
        }
    }
}

/// Which gradients to compute alongside the losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    None,
    /// One backward pass of `time_loss + mark_loss`.
    Combined,
    /// Separate backward passes of `time_loss` and `mark_loss`.
    Split,
}

/// Losses and, depending on [`GradMode`], their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub breakdown: NllBreakdown,
    /// Gradient of `time_loss` (split mode).
    pub time_grad: Option<Gradients>,
    /// Gradient of `mark_loss` (split mode).
    pub mark_grad: Option<Gradients>,
    /// Gradient of the total (combined mode).
    pub total_grad: Option<Gradients>,
}

struct SequenceOutput {
    time: f64,
    mark: f64,
    variance: f64,
    grads: Vec<Gradients>,
}

/// A likelihood form together with its quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub form: NllForm,
    pub quad: Quadrature,
}

/// Random stream for one interval of one sequence.
fn stream_id(sequence: usize, interval: usize) -> u64 {
    ((sequence as u64) << 32) | interval as u64
}

impl Objective {
    pub fn new(form: NllForm, quad: QuadratureConfig) -> Result<Self> {
        Ok(Self {
            form,
            quad: Quadrature::new(quad)?,
        })
    }

    /// Fails for forms the decoder cannot express.
    pub fn check_supported(&self, arch: &Architecture) -> Result<()> {
        if self.form == NllForm::Compensator && !arch.spec.family.has_closed_compensator() {
            return Err(Error::UnsupportedForm {
                form: self.form.as_str(),
                family: arch.spec.family.as_str(),
            });
        }
        Ok(())
    }

    /// Losses of `model` on `sequences`, without gradients.
    pub fn evaluate(&self, model: &Model, sequences: &[&EventSequence]) -> Result<NllBreakdown> {
        Ok(self
            .evaluate_store(&model.arch, &model.store, sequences, GradMode::None)?
            .breakdown)
    }

    /// Losses of the layout `arch` with parameter values `store`.
    pub fn evaluate_store(
        &self,
        arch: &Architecture,
        store: &ParamStore,
        sequences: &[&EventSequence],
        mode: GradMode,
    ) -> Result<Evaluation> {
        self.check_supported(arch)?;
        if sequences.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let outputs: Vec<Result<SequenceOutput>> = sequences
            .par_iter()
            .enumerate()
            .map(|(i, seq)| self.sequence(arch, store, seq, i, mode))
            .collect();
        // fixed-order reduction keeps results independent of scheduling
        let mut per_sequence = Vec::with_capacity(outputs.len());
        let mut variance = 0.0;
        let n_grads = match mode {
            GradMode::None => 0,
            GradMode::Combined => 1,
            GradMode::Split => 2,
        };
        let mut grads: Vec<Gradients> =
            (0..n_grads).map(|_| Gradients::zeros_like(store)).collect();
        let scale = 1.0 / sequences.len() as f64;
        for out in outputs {
            let out = out?;
            per_sequence.push((out.time, out.mark));
            variance += out.variance;
            for (acc, g) in grads.iter_mut().zip(&out.grads) {
                acc.add_scaled(g, scale);
            }
        }
        let breakdown = NllBreakdown::from_parts(per_sequence, variance);
        let mut grads = grads.into_iter();
        Ok(match mode {
            GradMode::None => Evaluation {
                breakdown,
                time_grad: None,
                mark_grad: None,
                total_grad: None,
            },
            GradMode::Combined => Evaluation {
                breakdown,
                time_grad: None,
                mark_grad: None,
                total_grad: grads.next(),
            },
            GradMode::Split => Evaluation {
                breakdown,
                time_grad: grads.next(),
                mark_grad: grads.next(),
                total_grad: None,
            },
        })
    }

    /// `-log` time density of one gap (`tail` adds only the survival part).
    fn time_term(
        &self,
        tape: &mut Tape,
        p: &Prepared,
        tau: f64,
        stream: u64,
        tail: bool,
        at: (usize, usize),
    ) -> Result<(Var, f64)> {
        let integral = |tape: &mut Tape| -> Result<(Var, f64)> {
            match self.form {
                NllForm::Intensity => p.integrated_intensity(tape, tau, &self.quad, stream),
                NllForm::Density => p.compensator_or_quadrature(tape, tau, &self.quad, stream),
                NllForm::Compensator => Ok((
                    p.compensator(tape, tau)?.expect("closed-form compensator"),
                    0.0,
                )),
            }
        };
        if tail {
            if self.form == NllForm::Density {
                if let Some(ls) = p.log_survival(tape, tau)? {
                    return Ok((tape.neg(ls), 0.0));
                }
            }
            return integral(tape);
        }
        match self.form {
            NllForm::Density => {
                if let Some(lf) = p.log_density(tape, tau)? {
                    return Ok((tape.neg(lf), 0.0));
                }
                let li = p.log_intensity(tape, tau)?;
                let (c, se) = integral(tape)?;
                Ok((tape.sub(c, li)?, se))
            }
            NllForm::Intensity => {
                let li = p.log_intensity(tape, tau)?;
                let (c, se) = integral(tape)?;
                Ok((tape.sub(c, li)?, se))
            }
            NllForm::Compensator => {
                let rate = p.intensity(tape, tau)?;
                if !(tape.scalar(rate) > 0.0) {
                    return Err(Error::NonMonotoneCompensator {
                        sequence: at.0,
                        event: at.1,
                    });
                }
                let li = tape.log(rate);
                let (c, _) = integral(tape)?;
                Ok((tape.sub(c, li)?, 0.0))
            }
        }
    }

    fn sequence(
        &self,
        arch: &Architecture,
        store: &ParamStore,
        seq: &EventSequence,
        index: usize,
        mode: GradMode,
    ) -> Result<SequenceOutput> {
        let mut tape = Tape::new();
        let (ht, hm) = arch.histories(&mut tape, store, seq)?;
        let mut time_terms = Vec::with_capacity(seq.len() + 1);
        let mut mark_terms = Vec::with_capacity(seq.len());
        let mut variance = 0.0;
        let mut t_prev = 0.0;
        for (i, ev) in seq.events.iter().enumerate() {
            let tau = ev.t - t_prev;
            let p = arch.prepare_time(&mut tape, store, ht[i], t_prev)?;
            let (nl, se) =
                self.time_term(&mut tape, &p, tau, stream_id(index, i), false, (index, i))?;
            let lp = arch.mark_log_probs(&mut tape, store, hm[i], t_prev, tau)?;
            let lp = tape.pick(lp, ev.k)?;
            if !tape.scalar(nl).is_finite() || !tape.scalar(lp).is_finite() {
                return Err(Error::NonFiniteLoss {
                    sequence: index,
                    event: Some(i),
                });
            }
            time_terms.push(nl);
            mark_terms.push(lp);
            variance += se * se;
            t_prev = ev.t;
        }
        let n = seq.len();
        let p = arch.prepare_time(&mut tape, store, ht[n], t_prev)?;
        let (tail, se) = self.time_term(
            &mut tape,
            &p,
            seq.tail_gap(),
            stream_id(index, n),
            true,
            (index, n),
        )?;
        if !tape.scalar(tail).is_finite() {
            return Err(Error::NonFiniteLoss {
                sequence: index,
                event: None,
            });
        }
        time_terms.push(tail);
        variance += se * se;

        let time_vec = tape.concat(&time_terms);
        let time_root = tape.sum(time_vec);
        let mark_root = if mark_terms.is_empty() {
            tape.constant_scalar(0.0)
        } else {
            let v = tape.concat(&mark_terms);
            let s = tape.sum(v);
            tape.neg(s)
        };
        let grads = match mode {
            GradMode::None => Vec::new(),
            GradMode::Combined => {
                let mut g = Gradients::zeros_like(store);
                tape.backward(&[(time_root, 1.0), (mark_root, 1.0)], &mut g)?;
                if let Some(id) = g.first_non_finite() {
                    return Err(Error::NonFiniteGradient(store.block(id).name.clone()));
                }
                vec![g]
            }
            GradMode::Split => vec![
                tape.gradients(time_root, store)?,
                tape.gradients(mark_root, store)?,
            ],
        };
        Ok(SequenceOutput {
            time: tape.scalar(time_root),
            mark: tape.scalar(mark_root),
            variance,
            grads,
        })
    }
}

fn all_sequences(dataset: &Dataset) -> Vec<&EventSequence> {
    dataset.sequences.iter().collect()
}

/// Density-form losses over a dataset.
pub fn nll_density(
    model: &Model,
    dataset: &Dataset,
    quad: QuadratureConfig,
) -> Result<NllBreakdown> {
    Objective::new(NllForm::Density, quad)?.evaluate(model, &all_sequences(dataset))
}

/// Intensity-form losses over a dataset.
pub fn nll_intensity(
    model: &Model,
    dataset: &Dataset,
    quad: QuadratureConfig,
) -> Result<NllBreakdown> {
    Objective::new(NllForm::Intensity, quad)?.evaluate(model, &all_sequences(dataset))
}

/// Compensator-form losses over a dataset (RMTPP, LNM and FNN decoders).
pub fn nll_compensator(
    model: &Model,
    dataset: &Dataset,
    quad: QuadratureConfig,
) -> Result<NllBreakdown> {
    Objective::new(NllForm::Compensator, quad)?.evaluate(model, &all_sequences(dataset))
}
