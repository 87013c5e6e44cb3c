//! Marked event sequences: data model, JSONL ingestion, preprocessing,
//! splitting and synthetic Hawkes generation.

mod hawkes;
mod io;
mod preprocess;

pub use hawkes::{simulate_hawkes, HawkesConfig, HawkesState};
pub use io::{load_dataset, parse_dataset, write_dataset};
pub use preprocess::{filter_top_k_marks, rescale_times, split_dataset, SplitSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub k: usize,
}

/// Events observed on `[0, horizon]` with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    pub seq_id: String,
    pub horizon: f64,
    pub events: Vec<Event>,
}

impl EventSequence {
    /// Validates ordering, window membership and mark range.
    pub fn new(
        seq_id: impl Into<String>,
        horizon: f64,
        events: Vec<Event>,
        num_marks: usize,
    ) -> Result<Self> {
        let seq = Self {
            seq_id: seq_id.into(),
            horizon,
            events,
        };
        seq.validate(num_marks)?;
        Ok(seq)
    }

    pub fn validate(&self, num_marks: usize) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sequence {}: horizon must be positive, got {}",
                self.seq_id, self.horizon
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for (index, e) in self.events.iter().enumerate() {
            if !e.t.is_finite() || e.t < 0.0 || e.t > self.horizon {
                return Err(Error::OutsideWindow {
                    seq_id: self.seq_id.clone(),
                    index,
                });
            }
            if e.t <= prev {
                return Err(Error::NonIncreasingTimes {
                    seq_id: self.seq_id.clone(),
                    index,
                });
            }
            if e.k >= num_marks {
                return Err(Error::MarkOutOfRange {
                    seq_id: self.seq_id.clone(),
                    index,
                });
            }
            prev = e.t;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `τ_i = t_i - t_{i-1}` with `t_0 = 0`.
    pub fn inter_arrivals(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.events
            .iter()
            .map(|e| {
                let tau = e.t - prev;
                prev = e.t;
                tau
            })
            .collect()
    }

    /// Time of the last event, or 0 for an empty sequence.
    pub fn last_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.t)
    }

    /// Gap between the last event and the horizon.
    pub fn tail_gap(&self) -> f64 {
        self.horizon - self.last_time()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_marks: usize,
    pub sequences: Vec<EventSequence>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        num_marks: usize,
        sequences: Vec<EventSequence>,
    ) -> Result<Self> {
        for s in &sequences {
            s.validate(num_marks)?;
        }
        Ok(Self {
            name: name.into(),
            num_marks,
            sequences,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    /// Sub-dataset with the given sequence indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            num_marks: self.num_marks,
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: f64, k: usize) -> Event {
        Event { t, k }
    }

    #[test]
    fn inter_arrivals_start_at_zero() {
        let s = EventSequence::new("a", 10.0, vec![ev(1.0, 0), ev(2.5, 1)], 2).unwrap();
        assert_eq!(s.inter_arrivals(), vec![1.0, 1.5]);
        assert_eq!(s.tail_gap(), 7.5);
    }

    #[test]
    fn rejects_bad_sequences() {
        assert!(matches!(
            EventSequence::new("a", 10.0, vec![ev(2.0, 0), ev(2.0, 1)], 2),
            Err(Error::NonIncreasingTimes { index: 1, .. })
        ));
        assert!(matches!(
            EventSequence::new("a", 10.0, vec![ev(2.0, 3)], 2),
            Err(Error::MarkOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            EventSequence::new("a", 10.0, vec![ev(11.0, 0)], 2),
            Err(Error::OutsideWindow { index: 0, .. })
        ));
    }

    #[test]
    fn empty_sequence_is_valid() {
        let s = EventSequence::new("e", 10.0, vec![], 1).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.tail_gap(), 10.0);
    }
}
