//! Event embeddings, GRU history encoders, the mark head, the five time
//! decoder families, and their assembly under each sharing setting.
//!
//! Block names encode ownership: `enc.*` is a shared encoder, `enc_t.*` and
//! `enc_m.*` are the time and mark encoders of the disjoint settings,
//! `dec.*`/`mark.*` are shared decoder parts, and `dec_t.*`, `dec_m.*`,
//! `mark_m.*` are task-owned. Removing the `_t`/`_m` suffix of the first
//! component gives the corresponding block of the base model, which is how
//! duplicated models are initialized from a shared one.

mod balance;
mod decoders;
mod embedding;
mod encoder;
mod heads;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use balance::{balance_report, balanced_spec, param_budget, BalanceRow};
pub(crate) use decoders::Prepared;
pub use decoders::{MonotoneActivation, TimeHead, RMTPP_EXPONENT_CLAMP, THP_TIME_FLOOR};
pub use embedding::{embed_event, time_encoding};
pub use encoder::Encoder;
pub use heads::{MarkHead, TAU_FLOOR};

use crate::diffgraph::{BlockId, OwnerTag, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::eventstore::EventSequence;
use crate::objectives::Quadrature;
use decoders::HeadDims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderFamily {
    Rmtpp,
    Lnm,
    Fnn,
    Thp,
    Sahp,
}

impl DecoderFamily {
    pub const ALL: [DecoderFamily; 5] = [
        DecoderFamily::Rmtpp,
        DecoderFamily::Lnm,
        DecoderFamily::Fnn,
        DecoderFamily::Thp,
        DecoderFamily::Sahp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecoderFamily::Rmtpp => "rmtpp",
            DecoderFamily::Lnm => "lnm",
            DecoderFamily::Fnn => "fnn",
            DecoderFamily::Thp => "thp",
            DecoderFamily::Sahp => "sahp",
        }
    }

    /// Families whose base form defines marked intensities channel by channel.
    pub fn has_marked_channels(self) -> bool {
        matches!(
            self,
            DecoderFamily::Fnn | DecoderFamily::Thp | DecoderFamily::Sahp
        )
    }

    /// Families with a closed-form compensator.
    pub fn has_closed_compensator(self) -> bool {
        matches!(
            self,
            DecoderFamily::Rmtpp | DecoderFamily::Lnm | DecoderFamily::Fnn
        )
    }
}

impl fmt::Display for DecoderFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecoderFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown decoder family {s:?}")))
    }
}

/// Which parameters the time and mark tasks share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Original joint formulation; every block shared.
    Base,
    /// Shared encoder, disjoint decoders.
    Plus,
    /// Disjoint encoders and decoders.
    PlusPlus,
    /// Shared encoder, two copies of the full marked decoder.
    Dup,
    /// Disjoint encoders, two copies of the full marked decoder.
    DupDisjoint,
}

impl Setting {
    pub const ALL: [Setting; 5] = [
        Setting::Base,
        Setting::Plus,
        Setting::PlusPlus,
        Setting::Dup,
        Setting::DupDisjoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Base => "base",
            Setting::Plus => "plus",
            Setting::PlusPlus => "plusplus",
            Setting::Dup => "dup",
            Setting::DupDisjoint => "dupdisjoint",
        }
    }

    pub fn disjoint_encoders(self) -> bool {
        matches!(self, Setting::PlusPlus | Setting::DupDisjoint)
    }

    /// Settings trained with one early-stopping criterion per task.
    pub fn fully_disjoint(self) -> bool {
        self.disjoint_encoders()
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown setting {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Widths {
    /// Sinusoidal time-encoding width (even).
    pub time_encoding: usize,
    pub mark_embedding: usize,
    /// GRU state width.
    pub hidden: usize,
    /// Hidden width of the mark head and the FNN network.
    pub mlp: usize,
    /// Log-normal mixture components.
    pub mixtures: usize,
    /// Summed intensity channels of the THP, SAHP and FNN time heads.
    pub channels: usize,
}

impl Default for Widths {
    fn default() -> Self {
        Self {
            time_encoding: 4,
            mark_embedding: 4,
            hidden: 32,
            mlp: 32,
            mixtures: 32,
            channels: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: DecoderFamily,
    pub setting: Setting,
    pub num_marks: usize,
    pub widths: Widths,
    pub activation: MonotoneActivation,
}

impl ModelSpec {
    pub fn new(family: DecoderFamily, setting: Setting, num_marks: usize) -> Self {
        Self {
            family,
            setting,
            num_marks,
            widths: Widths::default(),
            activation: MonotoneActivation::default(),
        }
    }

    pub fn with_widths(mut self, widths: Widths) -> Self {
        self.widths = widths;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.widths;
        if self.num_marks == 0 {
            return Err(Error::InvalidConfig("num_marks must be positive".into()));
        }
        if !w.time_encoding.is_multiple_of(2) {
            return Err(Error::InvalidConfig(
                "time encoding width must be even".into(),
            ));
        }
        if w.time_encoding + w.mark_embedding == 0
            || w.hidden == 0
            || w.mlp == 0
            || w.mixtures == 0
            || w.channels == 0
        {
            return Err(Error::InvalidConfig(format!(
                "all widths must be positive: {w:?}"
            )));
        }
        Ok(())
    }
}

/// Where the conditional mark distribution comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkSource {
    Head(MarkHead),
    /// Normalized per-mark channels of a marked intensity head.
    Channels(TimeHead),
}

/// Parameter layout of a model; the values live in a separate [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub spec: ModelSpec,
    pub encoders: Vec<Encoder>,
    pub time_head: TimeHead,
    pub mark: MarkSource,
    time_encoder: usize,
    mark_encoder: usize,
}

/// History summary at one position of a sequence, as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState {
    pub time: Vec<f64>,
    pub mark: Vec<f64>,
    /// Time of the last event in the history (0 when empty).
    pub t_prev: f64,
}

/// Normalizes the mark copy of a duplicated decoder and sums its time copy:
/// returns the ground intensity and the conditional mark distribution.
pub fn duplicated_split(time_copy: &[f64], mark_copy: &[f64]) -> Result<(f64, Vec<f64>)> {
    if time_copy.len() != mark_copy.len() {
        return Err(Error::LengthMismatch(time_copy.len(), mark_copy.len()));
    }
    let total: f64 = mark_copy.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotalIntensity);
    }
    Ok((
        time_copy.iter().sum(),
        mark_copy.iter().map(|l| l / total).collect(),
    ))
}

fn build_head<R: Rng + ?Sized>(
    spec: &ModelSpec,
    store: &mut ParamStore,
    prefix: &str,
    owner: OwnerTag,
    dims: HeadDims,
    rng: &mut R,
) -> Result<TimeHead> {
    match spec.family {
        DecoderFamily::Rmtpp => TimeHead::build_rmtpp(store, prefix, owner, dims, rng),
        DecoderFamily::Lnm => TimeHead::build_lnm(store, prefix, owner, dims, rng),
        DecoderFamily::Thp => TimeHead::build_thp(store, prefix, owner, dims, rng),
        DecoderFamily::Sahp => TimeHead::build_sahp(store, prefix, owner, dims, rng),
        DecoderFamily::Fnn => TimeHead::build_fnn(store, prefix, owner, dims, spec.activation, rng),
    }
}

impl Architecture {
    /// Creates the layout and a freshly initialized store.
    pub fn build<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<(Self, ParamStore)> {
        spec.validate()?;
        let w = spec.widths;
        let k = spec.num_marks;
        let mut store = ParamStore::new();
        let enc = |store: &mut ParamStore, prefix: &str, owner, rng: &mut R| {
            Encoder::build(
                store,
                prefix,
                owner,
                k,
                w.time_encoding,
                w.mark_embedding,
                w.hidden,
                rng,
            )
        };
        let (encoders, time_encoder, mark_encoder) = if spec.setting.disjoint_encoders() {
            let t = enc(&mut store, "enc_t", OwnerTag::Time, rng)?;
            let m = enc(&mut store, "enc_m", OwnerTag::Mark, rng)?;
            (vec![t, m], 0, 1)
        } else {
            (vec![enc(&mut store, "enc", OwnerTag::Shared, rng)?], 0, 0)
        };
        let channels = match spec.setting {
            Setting::Plus | Setting::PlusPlus => w.channels,
            _ => k,
        };
        let dims = HeadDims {
            hidden: w.hidden,
            channels,
            mixtures: w.mixtures,
            width: w.mlp,
        };
        let (time_prefix, time_owner) = match spec.setting {
            Setting::Base => ("dec", OwnerTag::Shared),
            _ => ("dec_t", OwnerTag::Time),
        };
        let time_head = build_head(spec, &mut store, time_prefix, time_owner, dims, rng)?;
        let marked = spec.family.has_marked_channels();
        let mark = match spec.setting {
            Setting::Base if marked => MarkSource::Channels(time_head.clone()),
            Setting::Base => MarkSource::Head(MarkHead::build(
                &mut store,
                "mark",
                OwnerTag::Shared,
                w.hidden,
                w.mlp,
                k,
                false,
                rng,
            )?),
            Setting::Plus | Setting::PlusPlus => MarkSource::Head(MarkHead::build(
                &mut store,
                "mark_m",
                OwnerTag::Mark,
                w.hidden,
                w.mlp,
                k,
                true,
                rng,
            )?),
            Setting::Dup | Setting::DupDisjoint if marked => MarkSource::Channels(build_head(
                spec,
                &mut store,
                "dec_m",
                OwnerTag::Mark,
                dims,
                rng,
            )?),
            Setting::Dup | Setting::DupDisjoint => MarkSource::Head(MarkHead::build(
                &mut store,
                "mark_m",
                OwnerTag::Mark,
                w.hidden,
                w.mlp,
                k,
                false,
                rng,
            )?),
        };
        Ok((
            Self {
                spec: *spec,
                encoders,
                time_head,
                mark,
                time_encoder,
                mark_encoder,
            },
            store,
        ))
    }

    pub fn time_encoder(&self) -> &Encoder {
        &self.encoders[self.time_encoder]
    }

    pub fn mark_encoder(&self) -> &Encoder {
        &self.encoders[self.mark_encoder]
    }

    /// Encoder states for the time and mark tasks (`n + 1` each).
    pub(crate) fn histories(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        seq: &EventSequence,
    ) -> Result<(Vec<Var>, Vec<Var>)> {
        let time = self.encoders[self.time_encoder].states(tape, store, seq)?;
        if self.time_encoder == self.mark_encoder {
            let mark = time.clone();
            Ok((time, mark))
        } else {
            let mark = self.encoders[self.mark_encoder].states(tape, store, seq)?;
            Ok((time, mark))
        }
    }

    pub(crate) fn prepare_time(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        t_prev: f64,
    ) -> Result<Prepared> {
        self.time_head.prepare(tape, store, h, t_prev)
    }

    /// Log-probabilities of all marks at gap `tau` after an event at `t_prev`.
    pub(crate) fn mark_log_probs(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        t_prev: f64,
        tau: f64,
    ) -> Result<Var> {
        match &self.mark {
            MarkSource::Head(head) => head.log_probs(tape, store, h, tau),
            MarkSource::Channels(head) => {
                let prep = head.prepare(tape, store, h, t_prev)?;
                let ch = prep
                    .channel_intensities(tape, tau)?
                    .expect("marked channel head");
                if !(tape.value(ch).iter().sum::<f64>() > 0.0) {
                    return Err(Error::ZeroTotalIntensity);
                }
                let log_ch = tape.log(ch);
                Ok(tape.log_softmax(log_ch))
            }
        }
    }

    /// Every block id used by the layout, grouped as encoder or decoder.
    pub fn block_group(name: &str) -> &'static str {
        if name.starts_with("enc") {
            "encoder"
        } else {
            "decoder"
        }
    }
}

/// Name of the base-model block a duplicated or split block starts from.
pub fn base_block_name(name: &str) -> String {
    match name.split_once('.') {
        Some((head, rest)) => {
            let head = head
                .strip_suffix("_t")
                .or_else(|| head.strip_suffix("_m"))
                .unwrap_or(head);
            format!("{head}.{rest}")
        }
        None => name.to_string(),
    }
}

/// A layout together with its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub store: ParamStore,
}

impl Model {
    /// Initializes a model deterministically from `seed`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (arch, store) = Architecture::build(&spec, &mut rng)?;
        Ok(Self { arch, store })
    }

    /// Rebuilds a model around stored values (e.g. from a checkpoint).
    pub fn from_store(spec: ModelSpec, store: &ParamStore) -> Result<Self> {
        let mut model = Self::new(spec, 0)?;
        model.store.load_values(store)?;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.arch.spec
    }

    /// A duplicated-decoder model whose blocks start from the matching
    /// blocks of a base model, so both begin at the same point.
    pub fn duplicate_from(base: &Model, setting: Setting) -> Result<Self> {
        if base.spec().setting != Setting::Base
            || !matches!(setting, Setting::Dup | Setting::DupDisjoint)
        {
            return Err(Error::InvalidConfig(format!(
                "duplicate_from maps base to dup/dupdisjoint, got {} -> {}",
                base.spec().setting,
                setting
            )));
        }
        let spec = ModelSpec {
            setting,
            ..*base.spec()
        };
        let mut model = Self::new(spec, 0)?;
        model.copy_from_base(base)?;
        Ok(model)
    }

    /// Overwrites every block with the base-model block of the same root name.
    pub fn copy_from_base(&mut self, base: &Model) -> Result<()> {
        for id in self.store.ids().collect::<Vec<_>>() {
            let name = base_block_name(&self.store.block(id).name);
            let src = base.store.block(base.store.id_of(&name)?);
            let dst = self.store.block_mut(id);
            if src.values.len() != dst.values.len() {
                return Err(Error::ShapeMismatch {
                    op: "copy_from_base",
                    detail: format!(
                        "{} has {} values, {} has {}",
                        dst.name,
                        dst.values.len(),
                        name,
                        src.values.len()
                    ),
                });
            }
            dst.values.copy_from_slice(&src.values);
        }
        Ok(())
    }

    /// Block ids whose owner tag is `Shared`.
    pub fn shared_blocks(&self) -> Vec<BlockId> {
        self.store
            .ids()
            .filter(|id| self.store.block(*id).owner == OwnerTag::Shared)
            .collect()
    }

    /// Plain-valued history states for every position of `seq` (`n + 1`).
    pub fn history_states(&self, seq: &EventSequence) -> Result<Vec<HistoryState>> {
        let mut tape = Tape::new();
        let (time, mark) = self.arch.histories(&mut tape, &self.store, seq)?;
        Ok(time
            .iter()
            .zip(&mark)
            .enumerate()
            .map(|(i, (t, m))| HistoryState {
                time: tape.value(*t).to_vec(),
                mark: tape.value(*m).to_vec(),
                t_prev: if i == 0 { 0.0 } else { seq.events[i - 1].t },
            })
            .collect())
    }

    fn prepared(&self, tape: &mut Tape, state: &HistoryState) -> Result<Prepared> {
        let h = tape.constant(state.time.clone());
        self.arch.prepare_time(tape, &self.store, h, state.t_prev)
    }

    /// Ground intensity at gap `tau`.
    pub fn intensity(&self, state: &HistoryState, tau: f64) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.prepared(&mut tape, state)?;
        let v = p.intensity(&mut tape, tau)?;
        Ok(tape.scalar(v))
    }

    /// Ground compensator over `[0, tau]`, by quadrature when needed.
    pub fn compensator(&self, state: &HistoryState, tau: f64, quad: &Quadrature) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.prepared(&mut tape, state)?;
        let (v, _) = p.compensator_or_quadrature(&mut tape, tau, quad, 0)?;
        Ok(tape.scalar(v))
    }

    /// `log(1 - F(tau))`.
    pub fn log_survival(&self, state: &HistoryState, tau: f64, quad: &Quadrature) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.prepared(&mut tape, state)?;
        if let Some(v) = p.log_survival(&mut tape, tau)? {
            return Ok(tape.scalar(v));
        }
        let (v, _) = p.compensator_or_quadrature(&mut tape, tau, quad, 0)?;
        Ok(-tape.scalar(v))
    }

    /// `log f(tau)` for the inter-arrival density.
    pub fn log_density(&self, state: &HistoryState, tau: f64, quad: &Quadrature) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.prepared(&mut tape, state)?;
        if let Some(v) = p.log_density(&mut tape, tau)? {
            return Ok(tape.scalar(v));
        }
        let li = p.log_intensity(&mut tape, tau)?;
        let (c, _) = p.compensator_or_quadrature(&mut tape, tau, quad, 0)?;
        Ok(tape.scalar(li) - tape.scalar(c))
    }

    /// Conditional mark distribution at gap `tau`.
    pub fn mark_probs(&self, state: &HistoryState, tau: f64) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let h = tape.constant(state.mark.clone());
        let lp = self
            .arch
            .mark_log_probs(&mut tape, &self.store, h, state.t_prev, tau)?;
        Ok(tape.value(lp).iter().map(|v| v.exp()).collect())
    }
}
