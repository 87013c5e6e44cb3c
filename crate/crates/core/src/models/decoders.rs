//! Time decoders. Each head is first "prepared" for one history state (the
//! parts that do not depend on the gap), then queried at any gap `τ ≥ 0`.
//!
//! Channel heads (THP, SAHP, FNN) produce a vector of nonnegative
//! intensities whose sum is the ground intensity; with one channel per mark
//! the same vector defines the marked intensities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffgraph::{BlockId, Init, OwnerTag, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::objectives::Quadrature;

/// Upper bound for the history term of the RMTPP exponent.
pub const RMTPP_EXPONENT_CLAMP: f64 = 30.0;
/// Floor for the previous event time in the THP time term.
pub const THP_TIME_FLOOR: f64 = 1e-6;

/// Monotone activation used inside the FNN compensator network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MonotoneActivation {
    #[default]
    Softplus,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimeHead {
    Rmtpp {
        w_t: BlockId,
        w_h: BlockId,
        b: BlockId,
    },
    Lnm {
        w_mu: BlockId,
        b_mu: BlockId,
        w_sigma: BlockId,
        b_sigma: BlockId,
        w_p: BlockId,
        b_p: BlockId,
    },
    Thp {
        w_t: BlockId,
        w: BlockId,
        b: BlockId,
    },
    Sahp {
        w_mu: BlockId,
        w_eta: BlockId,
        w_gamma: BlockId,
    },
    Fnn {
        w: BlockId,
        w_h: BlockId,
        w_t: BlockId,
        b_1: BlockId,
        b_2: BlockId,
        activation: MonotoneActivation,
    },
}

/// Sizes a head needs at construction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HeadDims {
    pub hidden: usize,
    pub channels: usize,
    pub mixtures: usize,
    pub width: usize,
}

impl TimeHead {
    pub(crate) fn build_rmtpp<R: Rng + ?Sized>(
        store: &mut ParamStore,
        p: &str,
        owner: OwnerTag,
        d: HeadDims,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(TimeHead::Rmtpp {
            w_t: store.add_block(&format!("{p}.w_t"), 1, 1, owner, Init::Zeros, rng)?,
            w_h: store.add_block(&format!("{p}.w_h"), 1, d.hidden, owner, Init::Glorot, rng)?,
            b: store.add_block(&format!("{p}.b"), 1, 1, owner, Init::Zeros, rng)?,
        })
    }

    pub(crate) fn build_lnm<R: Rng + ?Sized>(
        store: &mut ParamStore,
        p: &str,
        owner: OwnerTag,
        d: HeadDims,
        rng: &mut R,
    ) -> Result<Self> {
        let m = d.mixtures;
        let mut add = |name: &str, rows, cols, init| {
            store.add_block(&format!("{p}.{name}"), rows, cols, owner, init, rng)
        };
        Ok(TimeHead::Lnm {
            w_mu: add("W_mu", m, d.hidden, Init::Glorot)?,
            b_mu: add("b_mu", m, 1, Init::Zeros)?,
            w_sigma: add("W_sigma", m, d.hidden, Init::Glorot)?,
            b_sigma: add("b_sigma", m, 1, Init::Zeros)?,
            w_p: add("W_p", m, d.hidden, Init::Glorot)?,
            b_p: add("b_p", m, 1, Init::Zeros)?,
        })
    }

    pub(crate) fn build_thp<R: Rng + ?Sized>(
        store: &mut ParamStore,
        p: &str,
        owner: OwnerTag,
        d: HeadDims,
        rng: &mut R,
    ) -> Result<Self> {
        let c = d.channels;
        Ok(TimeHead::Thp {
            // the first gap is divided by the time floor, so start with an
            // effective slope near softplus(-10) ≈ 4.5e-5
            w_t: store.add_block(&format!("{p}.w_t"), c, 1, owner, Init::Constant(-10.0), rng)?,
            w: store.add_block(&format!("{p}.W"), c, d.hidden, owner, Init::Glorot, rng)?,
            b: store.add_block(&format!("{p}.b"), c, 1, owner, Init::Zeros, rng)?,
        })
    }

    pub(crate) fn build_sahp<R: Rng + ?Sized>(
        store: &mut ParamStore,
        p: &str,
        owner: OwnerTag,
        d: HeadDims,
        rng: &mut R,
    ) -> Result<Self> {
        let c = d.channels;
        Ok(TimeHead::Sahp {
            w_mu: store.add_block(&format!("{p}.W_mu"), c, d.hidden, owner, Init::Glorot, rng)?,
            w_eta: store.add_block(&format!("{p}.W_eta"), c, d.hidden, owner, Init::Glorot, rng)?,
            w_gamma: store.add_block(
                &format!("{p}.W_gamma"),
                c,
                d.hidden,
                owner,
                Init::Glorot,
                rng,
            )?,
        })
    }

    pub(crate) fn build_fnn<R: Rng + ?Sized>(
        store: &mut ParamStore,
        p: &str,
        owner: OwnerTag,
        d: HeadDims,
        activation: MonotoneActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut add = |name: &str, rows, cols, init| {
            store.add_block(&format!("{p}.{name}"), rows, cols, owner, init, rng)
        };
        Ok(TimeHead::Fnn {
            // raw values pass through softplus; start small so the initial
            // compensator is not dominated by C * d_1 positive terms
            w: add("W", d.channels, d.width, Init::Uniform(-4.0, -2.0))?,
            w_h: add("W_h", d.width, d.hidden, Init::Glorot)?,
            w_t: add("w_t", d.width, 1, Init::Zeros)?,
            b_1: add("b_1", d.width, 1, Init::Zeros)?,
            b_2: add("b_2", d.channels, 1, Init::Zeros)?,
            activation,
        })
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            TimeHead::Rmtpp { .. } => "rmtpp",
            TimeHead::Lnm { .. } => "lnm",
            TimeHead::Thp { .. } => "thp",
            TimeHead::Sahp { .. } => "sahp",
            TimeHead::Fnn { .. } => "fnn",
        }
    }

    pub fn param_ids(&self) -> Vec<BlockId> {
        match *self {
            TimeHead::Rmtpp { w_t, w_h, b } => vec![w_t, w_h, b],
            TimeHead::Lnm {
                w_mu,
                b_mu,
                w_sigma,
                b_sigma,
                w_p,
                b_p,
            } => vec![w_mu, b_mu, w_sigma, b_sigma, w_p, b_p],
            TimeHead::Thp { w_t, w, b } => vec![w_t, w, b],
            TimeHead::Sahp {
                w_mu,
                w_eta,
                w_gamma,
            } => vec![w_mu, w_eta, w_gamma],
            TimeHead::Fnn {
                w,
                w_h,
                w_t,
                b_1,
                b_2,
                ..
            } => vec![w, w_h, w_t, b_1, b_2],
        }
    }

    /// Evaluates the gap-independent part for history `h` after an event at `t_prev`.
    pub(crate) fn prepare(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        t_prev: f64,
    ) -> Result<Prepared> {
        Ok(match *self {
            TimeHead::Rmtpp { w_t, w_h, b } => {
                let raw = tape.param(store, w_t);
                let w_t = tape.softplus(raw);
                let wh = tape.param(store, w_h);
                let dot = tape.dot(wh, h)?;
                let bias = tape.param(store, b);
                let c = tape.add(dot, bias)?;
                let c = tape.clamp(c, -RMTPP_EXPONENT_CLAMP, RMTPP_EXPONENT_CLAMP);
                Prepared::Rmtpp { w_t, c }
            }
            TimeHead::Lnm {
                w_mu,
                b_mu,
                w_sigma,
                b_sigma,
                w_p,
                b_p,
            } => {
                let aff = |tape: &mut Tape, w: BlockId, b: BlockId| -> Result<Var> {
                    let (w, b) = (tape.param(store, w), tape.param(store, b));
                    tape.affine(w, h, b)
                };
                let mu = aff(tape, w_mu, b_mu)?;
                let log_sigma = aff(tape, w_sigma, b_sigma)?;
                let sigma = tape.exp(log_sigma);
                let logits = aff(tape, w_p, b_p)?;
                let log_w = tape.log_softmax(logits);
                Prepared::Lnm {
                    log_w,
                    mu,
                    log_sigma,
                    sigma,
                }
            }
            TimeHead::Thp { w_t, w, b } => {
                let raw = tape.param(store, w_t);
                let w_t = tape.softplus(raw);
                let (w, b) = (tape.param(store, w), tape.param(store, b));
                let base = tape.affine(w, h, b)?;
                Prepared::Thp {
                    w_t,
                    base,
                    inv_prev: 1.0 / t_prev.max(THP_TIME_FLOOR),
                }
            }
            TimeHead::Sahp {
                w_mu,
                w_eta,
                w_gamma,
            } => {
                let proj = |tape: &mut Tape, w: BlockId| -> Result<Var> {
                    let w = tape.param(store, w);
                    tape.matvec(w, h)
                };
                let mu = proj(tape, w_mu)?;
                let mu = tape.gelu(mu);
                let eta = proj(tape, w_eta)?;
                let eta = tape.softplus(eta);
                let gamma = proj(tape, w_gamma)?;
                let gamma = tape.gelu(gamma);
                let eta_minus_mu = tape.sub(eta, mu)?;
                Prepared::Sahp {
                    mu,
                    eta_minus_mu,
                    gamma,
                }
            }
            TimeHead::Fnn {
                w,
                w_h,
                w_t,
                b_1,
                b_2,
                activation,
            } => {
                let raw_w = tape.param(store, w);
                let w = tape.softplus(raw_w);
                let raw_t = tape.param(store, w_t);
                let w_t = tape.softplus(raw_t);
                let (wh, b1) = (tape.param(store, w_h), tape.param(store, b_1));
                let base = tape.affine(wh, h, b1)?;
                let b_2 = tape.param(store, b_2);
                let mut p = Prepared::Fnn {
                    w_t,
                    w,
                    base,
                    b_2,
                    g0: base,
                    activation,
                };
                let g0 = p.fnn_g(tape, 0.0)?;
                if let Prepared::Fnn { g0: slot, .. } = &mut p {
                    *slot = g0;
                }
                p
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Prepared {
    Rmtpp {
        w_t: Var,
        c: Var,
    },
    Lnm {
        log_w: Var,
        mu: Var,
        log_sigma: Var,
        sigma: Var,
    },
    Thp {
        w_t: Var,
        base: Var,
        inv_prev: f64,
    },
    Sahp {
        mu: Var,
        eta_minus_mu: Var,
        gamma: Var,
    },
    Fnn {
        w_t: Var,
        w: Var,
        base: Var,
        b_2: Var,
        /// Channel values of `G` at zero gap.
        g0: Var,
        activation: MonotoneActivation,
    },
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

impl Prepared {
    fn fnn_parts(&self, tape: &mut Tape, tau: f64) -> Result<(Var, Var)> {
        let Prepared::Fnn {
            w_t,
            w,
            base,
            b_2,
            activation,
            ..
        } = *self
        else {
            unreachable!("fnn_parts on a non-FNN head")
        };
        let shift = tape.scale(w_t, tau);
        let z1 = tape.add(shift, base)?;
        let a = match activation {
            MonotoneActivation::Softplus => tape.softplus(z1),
            MonotoneActivation::Sigmoid => tape.sigmoid(z1),
        };
        let z2 = tape.affine(w, a, b_2)?;
        Ok((z1, z2))
    }

    /// Channel values of `G(τ) = softplus(W σ(w_t τ + W_h h + b_1) + b_2)`.
    fn fnn_g(&self, tape: &mut Tape, tau: f64) -> Result<Var> {
        let (_, z2) = self.fnn_parts(tape, tau)?;
        Ok(tape.softplus(z2))
    }

    /// Per-channel intensities (THP, SAHP, FNN); `None` for RMTPP and LNM.
    pub fn channel_intensities(&self, tape: &mut Tape, tau: f64) -> Result<Option<Var>> {
        Ok(Some(match *self {
            Prepared::Thp {
                w_t,
                base,
                inv_prev,
            } => {
                let shift = tape.scale(w_t, tau * inv_prev);
                let pre = tape.add(shift, base)?;
                tape.softplus(pre)
            }
            Prepared::Sahp {
                mu,
                eta_minus_mu,
                gamma,
            } => {
                let g = tape.scale(gamma, -tau);
                let decay = tape.exp(g);
                let excess = tape.mul(eta_minus_mu, decay)?;
                let pre = tape.sub(mu, excess)?;
                tape.softplus(pre)
            }
            Prepared::Fnn {
                w_t, w, activation, ..
            } => {
                // dΛ_c/dτ = sigmoid(z2_c) Σ_j W_cj σ'(z1_j) w_t,j
                let (z1, z2) = self.fnn_parts(tape, tau)?;
                let slope = match activation {
                    MonotoneActivation::Softplus => tape.sigmoid(z1),
                    MonotoneActivation::Sigmoid => {
                        let s = tape.sigmoid(z1);
                        let neg = tape.neg(s);
                        let one_minus = tape.offset(neg, 1.0);
                        tape.mul(s, one_minus)?
                    }
                };
                let inner = tape.mul(slope, w_t)?;
                let m = tape.matvec(w, inner)?;
                let outer = tape.sigmoid(z2);
                tape.mul(outer, m)?
            }
            Prepared::Rmtpp { .. } | Prepared::Lnm { .. } => return Ok(None),
        }))
    }

    fn lnm_parts(&self, tape: &mut Tape, tau: f64) -> Result<(Var, Var)> {
        let Prepared::Lnm {
            mu, sigma, log_w, ..
        } = *self
        else {
            unreachable!("lnm_parts on a non-LNM head")
        };
        if !(tau > 0.0) {
            return Err(Error::NonPositiveTau(tau));
        }
        let m = tape.len_of(mu);
        let lt = tape.constant(vec![tau.ln(); m]);
        let diff = tape.sub(lt, mu)?;
        let z = tape.div(diff, sigma)?;
        Ok((z, log_w))
    }

    /// `log f(τ)` where available in closed form.
    pub fn log_density(&self, tape: &mut Tape, tau: f64) -> Result<Option<Var>> {
        match *self {
            Prepared::Lnm { log_sigma, .. } => {
                let (z, log_w) = self.lnm_parts(tape, tau)?;
                let zz = tape.square(z);
                let half = tape.scale(zz, -0.5);
                let a = tape.sub(log_w, log_sigma)?;
                let b = tape.add(a, half)?;
                let terms = tape.offset(b, -tau.ln() - HALF_LN_2PI);
                Ok(Some(tape.logsumexp(terms)))
            }
            Prepared::Rmtpp { .. } | Prepared::Fnn { .. } => {
                let li = self.log_intensity(tape, tau)?;
                let comp = self
                    .compensator(tape, tau)?
                    .expect("closed-form compensator");
                Ok(Some(tape.sub(li, comp)?))
            }
            _ => Ok(None),
        }
    }

    /// `log S(τ) = log(1 - F(τ))` where available in closed form.
    pub fn log_survival(&self, tape: &mut Tape, tau: f64) -> Result<Option<Var>> {
        match *self {
            Prepared::Lnm { .. } => {
                if tau == 0.0 {
                    return Ok(Some(tape.constant_scalar(0.0)));
                }
                let (z, log_w) = self.lnm_parts(tape, tau)?;
                let zs = tape.scale(z, std::f64::consts::FRAC_1_SQRT_2);
                let le = tape.log_erfc(zs);
                let sum = tape.add(log_w, le)?;
                let terms = tape.offset(sum, -std::f64::consts::LN_2);
                Ok(Some(tape.logsumexp(terms)))
            }
            Prepared::Rmtpp { .. } | Prepared::Fnn { .. } => {
                let comp = self
                    .compensator(tape, tau)?
                    .expect("closed-form compensator");
                Ok(Some(tape.neg(comp)))
            }
            _ => Ok(None),
        }
    }

    /// Ground compensator `Λ(τ)` where available in closed form.
    pub fn compensator(&self, tape: &mut Tape, tau: f64) -> Result<Option<Var>> {
        match *self {
            Prepared::Rmtpp { w_t, c } => {
                let ec = tape.exp(c);
                let ratio = tape.expm1_ratio(w_t, tau)?;
                Ok(Some(tape.mul(ec, ratio)?))
            }
            Prepared::Lnm { .. } => {
                let ls = self.log_survival(tape, tau)?.expect("closed form");
                Ok(Some(tape.neg(ls)))
            }
            Prepared::Fnn { g0, .. } => {
                let g = self.fnn_g(tape, tau)?;
                let d = tape.sub(g, g0)?;
                Ok(Some(tape.sum(d)))
            }
            _ => Ok(None),
        }
    }

    /// Ground intensity `λ(τ)`.
    pub fn intensity(&self, tape: &mut Tape, tau: f64) -> Result<Var> {
        match *self {
            // the log-normal hazard vanishes at zero gap
            Prepared::Lnm { .. } if tau <= 0.0 => Ok(tape.constant_scalar(0.0)),
            Prepared::Rmtpp { .. } | Prepared::Lnm { .. } => {
                let li = self.log_intensity(tape, tau)?;
                Ok(tape.exp(li))
            }
            _ => {
                let ch = self.channel_intensities(tape, tau)?.expect("channel head");
                Ok(tape.sum(ch))
            }
        }
    }

    /// `log λ(τ)`.
    pub fn log_intensity(&self, tape: &mut Tape, tau: f64) -> Result<Var> {
        match *self {
            Prepared::Rmtpp { w_t, c } => {
                let wt = tape.scale(w_t, tau);
                tape.add(wt, c)
            }
            Prepared::Lnm { .. } => {
                let lf = self.log_density(tape, tau)?.expect("closed form");
                let ls = self.log_survival(tape, tau)?.expect("closed form");
                tape.sub(lf, ls)
            }
            _ => {
                let lam = self.intensity(tape, tau)?;
                Ok(tape.log(lam))
            }
        }
    }

    /// `Λ(τ)`, by quadrature of the intensity when no closed form exists.
    pub fn compensator_or_quadrature(
        &self,
        tape: &mut Tape,
        tau: f64,
        quad: &Quadrature,
        stream: u64,
    ) -> Result<(Var, f64)> {
        if let Some(c) = self.compensator(tape, tau)? {
            return Ok((c, 0.0));
        }
        self.integrated_intensity(tape, tau, quad, stream)
    }

    /// `∫_0^τ λ(s) ds` by the configured rule, regardless of closed forms.
    pub fn integrated_intensity(
        &self,
        tape: &mut Tape,
        tau: f64,
        quad: &Quadrature,
        stream: u64,
    ) -> Result<(Var, f64)> {
        quad.integrate_on_tape(tape, tau, stream, |tape, s| self.intensity(tape, s))
    }
}
