//! Predictive distributions of the next event given an observed history.

use crate::error::{Error, Result};
use crate::eventstore::{EventSequence, HawkesConfig, HawkesState};
use crate::models::{HistoryState, Model};
use crate::objectives::Quadrature;

/// Smallest gap probed when bracketing the median.
pub const MEDIAN_START: f64 = 1e-6;

/// Next-event distribution conditioned on one history.
pub trait Conditional {
    /// `F(tau)`: probability that the next event arrives within `tau`.
    fn cdf(&self, tau: f64) -> Result<f64>;
    /// Mark distribution given that the next event arrives at `tau`.
    fn mark_probs(&self, tau: f64) -> Result<Vec<f64>>;
}

/// Anything that yields teacher-forced conditionals for each event.
pub trait PredictiveModel: Sync {
    fn num_marks(&self) -> usize;
    /// One conditional per event of `seq`, each built from the true events
    /// strictly before it, followed by the conditional after the last event
    /// (`len + 1` in total).
    fn conditionals<'a>(&'a self, seq: &EventSequence) -> Result<Vec<Box<dyn Conditional + 'a>>>;
}

/// Median of the gap distribution: doubling from [`MEDIAN_START`] until the
/// CDF exceeds one half, then bisection until `|F - 0.5| < tol`.
pub fn median_tau(cond: &dyn Conditional, tol: f64, cap: f64) -> Result<f64> {
    if !(tol > 0.0) || !(cap > MEDIAN_START) {
        return Err(Error::InvalidConfig(format!(
            "median search needs tol > 0 and cap > {MEDIAN_START}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = MEDIAN_START;
    loop {
        let f = cond.cdf(hi)?;
        if (f - 0.5).abs() < tol {
            return Ok(hi);
        }
        if f > 0.5 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > cap {
            return Err(Error::BracketFailure(cap));
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let f = cond.cdf(mid)?;
        if (f - 0.5).abs() < tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if f > 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// A trained network seen through its history states.
pub struct NeuralConditional<'a> {
    model: &'a Model,
    state: HistoryState,
    quad: &'a Quadrature,
}

impl Conditional for NeuralConditional<'_> {
    fn cdf(&self, tau: f64) -> Result<f64> {
        Ok(-self
            .model
            .log_survival(&self.state, tau, self.quad)?
            .exp_m1())
    }

    fn mark_probs(&self, tau: f64) -> Result<Vec<f64>> {
        self.model.mark_probs(&self.state, tau)
    }
}

/// A [`Model`] paired with the quadrature rule used for non-closed compensators.
pub struct NeuralPredictor<'a> {
    pub model: &'a Model,
    pub quad: Quadrature,
}

impl PredictiveModel for NeuralPredictor<'_> {
    fn num_marks(&self) -> usize {
        self.model.spec().num_marks
    }

    fn conditionals<'a>(&'a self, seq: &EventSequence) -> Result<Vec<Box<dyn Conditional + 'a>>> {
        Ok(self
            .model
            .history_states(seq)?
            .into_iter()
            .map(|state| {
                Box::new(NeuralConditional {
                    model: self.model,
                    state,
                    quad: &self.quad,
                }) as Box<dyn Conditional>
            })
            .collect())
    }
}

/// The generating Hawkes process evaluated as a model.
pub struct HawkesConditional<'a> {
    state: HawkesState<'a>,
}

impl Conditional for HawkesConditional<'_> {
    fn cdf(&self, tau: f64) -> Result<f64> {
        Ok(-(-self.state.compensator_after(tau)).exp_m1())
    }

    fn mark_probs(&self, tau: f64) -> Result<Vec<f64>> {
        let lam = self.state.intensities_after(tau);
        let total: f64 = lam.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroTotalIntensity);
        }
        Ok(lam.into_iter().map(|l| l / total).collect())
    }
}

/// Exact conditionals of a known Hawkes process.
pub struct HawkesTruth<'a> {
    pub config: &'a HawkesConfig,
}

impl PredictiveModel for HawkesTruth<'_> {
    fn num_marks(&self) -> usize {
        self.config.num_marks()
    }

    fn conditionals<'a>(&'a self, seq: &EventSequence) -> Result<Vec<Box<dyn Conditional + 'a>>> {
        seq.validate(self.num_marks())?;
        let mut state = HawkesState::new(self.config);
        let mut out: Vec<Box<dyn Conditional + 'a>> = Vec::with_capacity(seq.len() + 1);
        for ev in &seq.events {
            out.push(Box::new(HawkesConditional {
                state: state.clone(),
            }));
            state.advance(ev.t - state.time());
            state.record(ev.k);
        }
        out.push(Box::new(HawkesConditional { state }));
        Ok(out)
    }
}
