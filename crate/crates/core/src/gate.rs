//! Delight and gate arithmetic shared by every estimator.
//!
//! A sampled score term with advantage `U` and surprisal `l = -log pi(a)` has
//! delight `chi = U * l` and gate `w = sigmoid(chi / eta)`. The gated estimator
//! weights the score by the effective coefficient `w * U` where plain policy
//! gradient uses `U` alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};

/// Probabilities below this are floored before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// Default clip bound on continuous log-densities.
pub const DEFAULT_LOGDENSITY_CLIP: f64 = 10.0;

/// Default number of interior grid points used by [`verify_gate_optimality`].
pub const DEFAULT_OPTIMALITY_GRID: usize = 10_001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// Gate temperature; larger values flatten the gate toward 1/2.
    pub eta: f64,
    /// Symmetric clip bound applied to continuous surprisals.
    pub logdensity_clip: f64,
}

impl GateParams {
    pub fn new(eta: f64) -> Result<Self> {
        Self::with_clip(eta, DEFAULT_LOGDENSITY_CLIP)
    }

    pub fn with_clip(eta: f64, logdensity_clip: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid("eta", format!("must be positive and finite, got {eta}")));
        }
        if !(logdensity_clip > 0.0) {
            return Err(invalid(
                "logdensity_clip",
                format!("must be positive, got {logdensity_clip}"),
            ));
        }
        Ok(Self { eta, logdensity_clip })
    }

    pub fn validate(&self) -> Result<()> {
        Self::with_clip(self.eta, self.logdensity_clip).map(|_| ())
    }
}

impl Default for GateParams {
    fn default() -> Self {
        Self {
            eta: 1.0,
            logdensity_clip: DEFAULT_LOGDENSITY_CLIP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

/// One weighted score term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTerm {
    pub action: Option<Action>,
    pub advantage: f64,
    pub surprisal: f64,
    /// Gate input. For the plain delight estimator this is exactly
    /// `advantage * surprisal`; ablation variants store their own delight.
    pub delight: f64,
    pub gate: f64,
    pub effective_coeff: f64,
}

impl SampleTerm {
    pub fn with_action(mut self, action: Action) -> Self {
        self.action = Some(action);
        self
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Surprisal `-log p` of an action with probability `prob`.
pub fn surprisal(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob <= 1.0) {
        return Err(domain(format!("probability must lie in (0, 1], got {prob}")));
    }
    if prob == 1.0 {
        return Ok(0.0);
    }
    Ok(-prob.max(PROB_FLOOR).ln())
}

/// Surprisal for probabilities already known to be valid (internal hot paths).
pub(crate) fn surprisal_unchecked(prob: f64) -> f64 {
    if prob >= 1.0 {
        0.0
    } else {
        -prob.max(PROB_FLOOR).ln()
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite, got {v}")))
    }
}

fn make_term(advantage: f64, surprisal: f64, delight: f64, gate: f64) -> SampleTerm {
    SampleTerm {
        action: None,
        advantage,
        surprisal,
        delight,
        gate,
        effective_coeff: gate * advantage,
    }
}

/// Gates one discrete-action score term.
pub fn gate(advantage: f64, surprisal: f64, params: GateParams) -> Result<SampleTerm> {
    check_finite("advantage", advantage)?;
    check_finite("surprisal", surprisal)?;
    let delight = advantage * surprisal;
    Ok(make_term(advantage, surprisal, delight, sigmoid(delight / params.eta)))
}

/// Gates a continuous-action term whose surprisal is the clipped negative
/// log-density. Positive log-densities give negative surprisal.
pub fn gate_continuous(advantage: f64, log_density: f64, params: GateParams) -> Result<SampleTerm> {
    check_finite("advantage", advantage)?;
    check_finite("log_density", log_density)?;
    let c = params.logdensity_clip;
    gate(advantage, (-log_density).clamp(-c, c), params)
}

pub fn effective_coeff(term: &SampleTerm) -> f64 {
    term.gate * term.advantage
}

/// `eta * softplus(chi / eta)`: the optimal value of `chi * w + eta * H(w)`
/// over `w`. Its derivative in `chi` is the gate.
pub fn softplus_potential(delight: f64, eta: f64) -> f64 {
    eta * softplus(delight / eta)
}

fn binary_entropy(w: f64) -> f64 {
    let mut h = 0.0;
    if w > 0.0 {
        h -= w * w.ln();
    }
    if w < 1.0 {
        h -= (1.0 - w) * (1.0 - w).ln();
    }
    h
}

/// Maximizes `chi * w + eta * H(w)` on a uniform interior grid of `(0, 1)`,
/// then polishes the best bracket by golden-section search (the objective is
/// strictly concave). Returns `(argmax, max_value)`.
///
/// The polish matters near the boundary: at `chi / eta = -8` the optimum sits
/// at `w ~ 3e-4`, where grid spacing alone leaves a value error above `1e-6`.
pub fn verify_gate_optimality(delight: f64, eta: f64, grid_size: usize) -> (f64, f64) {
    let objective = |w: f64| delight * w + eta * binary_entropy(w);
    let n = grid_size.max(1);
    let step = 1.0 / (n as f64 + 1.0);
    let mut best_i = 1;
    let mut best_v = f64::NEG_INFINITY;
    for i in 1..=n {
        let v = objective(i as f64 * step);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut lo = (best_i - 1) as f64 * step;
    let mut hi = (best_i + 1) as f64 * step;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    for _ in 0..200 {
        if hi - lo < 1e-15 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        }
    }
    let w = 0.5 * (lo + hi);
    let v = objective(w);
    if v >= best_v {
        (w, v)
    } else {
        (best_i as f64 * step, best_v)
    }
}

/// How an estimator weights each sampled score term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// REINFORCE: coefficient `U`.
    Pg,
    /// Delight-gated: coefficient `sigmoid(U * l / eta) * U`.
    Dg,
    /// REINFORCE plus an `alpha`-weighted entropy gradient on the policy.
    EntropyPg { alpha: f64 },
    /// Gate input `(1 - alpha) U + alpha l`.
    UcbAdditive { alpha: f64 },
    /// Gate input `U * l^beta`.
    SurprisalExponent { beta: f64 },
}

impl EstimatorKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorKind::Pg | EstimatorKind::Dg => Ok(()),
            EstimatorKind::EntropyPg { alpha } if alpha >= 0.0 && alpha.is_finite() => Ok(()),
            EstimatorKind::EntropyPg { alpha } => Err(invalid(
                "alpha",
                format!("entropy coefficient must be >= 0, got {alpha}"),
            )),
            EstimatorKind::UcbAdditive { alpha } if (0.0..=1.25).contains(&alpha) => Ok(()),
            EstimatorKind::UcbAdditive { alpha } => Err(invalid(
                "alpha",
                format!("mixture weight must lie in [0, 1.25], got {alpha}"),
            )),
            EstimatorKind::SurprisalExponent { beta } if beta >= 0.0 && beta.is_finite() => Ok(()),
            EstimatorKind::SurprisalExponent { beta } => {
                Err(invalid("beta", format!("surprisal exponent must be >= 0, got {beta}")))
            }
        }
    }

    /// True for the variants that never gate (gate fixed at 1).
    pub fn is_ungated(&self) -> bool {
        matches!(self, EstimatorKind::Pg | EstimatorKind::EntropyPg { .. })
    }

    /// Entropy-bonus coefficient, zero for every variant except `EntropyPg`.
    pub fn entropy_coeff(&self) -> f64 {
        match *self {
            EstimatorKind::EntropyPg { alpha } => alpha,
            _ => 0.0,
        }
    }

    /// Weighted term for one sample. Ungated variants report the plain delight
    /// `U * l` and a gate of exactly 1.
    pub fn term(&self, advantage: f64, surprisal: f64, params: GateParams) -> Result<SampleTerm> {
        check_finite("advantage", advantage)?;
        check_finite("surprisal", surprisal)?;
        let chi = delight_variant(*self, advantage, surprisal)?;
        let g = if self.is_ungated() {
            1.0
        } else {
            sigmoid(chi / params.eta)
        };
        Ok(make_term(advantage, surprisal, chi, g))
    }

    /// Effective coefficient only, for hot loops where inputs are known finite
    /// and the variant is already validated.
    pub(crate) fn coeff(&self, advantage: f64, surprisal: f64, eta: f64) -> f64 {
        let chi = match *self {
            EstimatorKind::Pg | EstimatorKind::EntropyPg { .. } => return advantage,
            EstimatorKind::Dg => advantage * surprisal,
            EstimatorKind::UcbAdditive { alpha } => (1.0 - alpha) * advantage + alpha * surprisal,
            EstimatorKind::SurprisalExponent { beta } => advantage * surprisal.max(0.0).powf(beta),
        };
        sigmoid(chi / eta) * advantage
    }
}

/// Gate input for an estimator variant.
pub fn delight_variant(kind: EstimatorKind, advantage: f64, surprisal: f64) -> Result<f64> {
    Ok(match kind {
        EstimatorKind::Pg | EstimatorKind::Dg | EstimatorKind::EntropyPg { .. } => advantage * surprisal,
        EstimatorKind::UcbAdditive { alpha } => (1.0 - alpha) * advantage + alpha * surprisal,
        EstimatorKind::SurprisalExponent { beta } => {
            if surprisal < 0.0 && beta.fract() != 0.0 {
                return Err(domain(format!(
                    "negative surprisal {surprisal} with fractional exponent {beta}"
                )));
            }
            if beta == 1.0 {
                advantage * surprisal
            } else {
                advantage * surprisal.powf(beta)
            }
        }
    })
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Pg => write!(f, "pg"),
            EstimatorKind::Dg => write!(f, "dg"),
            EstimatorKind::EntropyPg { alpha } => write!(f, "entropy:{alpha}"),
            EstimatorKind::UcbAdditive { alpha } => write!(f, "ucb:{alpha}"),
            EstimatorKind::SurprisalExponent { beta } => write!(f, "beta:{beta}"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |field: &'static str| -> Result<f64> {
            let a = arg.ok_or_else(|| invalid(field, format!("`{name}` needs a `:{field}` value")))?;
            a.parse::<f64>().map_err(|e| invalid(field, format!("`{a}`: {e}")))
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "pg" => EstimatorKind::Pg,
            "dg" => EstimatorKind::Dg,
            "entropy" | "entropy-pg" => EstimatorKind::EntropyPg { alpha: num("alpha")? },
            "ucb" => EstimatorKind::UcbAdditive { alpha: num("alpha")? },
            "beta" | "exp" => EstimatorKind::SurprisalExponent { beta: num("beta")? },
            other => return Err(invalid("estimator", format!("unknown estimator `{other}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}
