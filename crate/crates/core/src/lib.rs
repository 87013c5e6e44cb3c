//! Neural marked temporal point processes with shared or disjoint time and
//! mark parametrizations, plus instrumentation for gradient conflicts
//! between the two likelihood terms.
//!
//! Modules, bottom-up: [`eventstore`] (sequences, Hawkes simulation,
//! preprocessing), [`diffgraph`] (reverse-mode tape, parameter store,
//! Adam), [`models`], [`objectives`], [`conflictscope`], [`trainer`] and
//! [`evalsuite`].

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conflictscope;
pub mod diffgraph;
pub mod error;
pub mod evalsuite;
pub mod eventstore;
pub mod models;
pub mod objectives;
pub mod trainer;

pub use error::{Error, Result};
pub use evalsuite::{evaluate, write_report, EvalConfig, EvalReport};
pub use eventstore::{
    load_dataset, simulate_hawkes, split_dataset, write_dataset, Dataset, Event, EventSequence,
    HawkesConfig, SplitSpec,
};
pub use models::{DecoderFamily, Model, ModelSpec, MonotoneActivation, Setting, Widths};
pub use objectives::{NllForm, Objective, QuadratureConfig, QuadratureMethod};
pub use trainer::{fit, write_history, FitResult, TrainConfig};
