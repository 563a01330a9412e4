//! Single-context K-armed bandit under logit parameterization.
//!
//! The score of action `a` is `e_a - pi`. Expectations here are computed by
//! enumerating all `K` actions, so identities can be checked to rounding
//! error; the Monte-Carlo side lives in [`sample_batch`] and
//! [`run_symmetric_bandit`].

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gate::{sigmoid, surprisal_unchecked, Action, EstimatorKind, GateParams, SampleTerm};
use crate::par::map_seeds;
use crate::rng::SeedStream;
use crate::vecops::{self, axpy, dot, norm, norm_sq};

/// Gradients with norm at or below this are treated as zero and skipped.
pub const ZERO_GRAD_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(invalid("logits", "need at least one action"));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("logits must be finite".into()));
        }
        let probs = vecops::softmax(&logits);
        Ok(Self { logits, probs })
    }

    pub fn uniform(num_actions: usize) -> Result<Self> {
        Self::from_logits(vec![0.0; num_actions])
    }

    /// Policy with `pi(correct) = 1 - error` and the remaining mass spread
    /// evenly over the other actions.
    pub fn symmetric(num_actions: usize, error: f64, correct: usize) -> Result<Self> {
        if num_actions < 2 {
            return Err(invalid("num_actions", "need at least two actions"));
        }
        if !(error > 0.0 && error < 1.0) {
            return Err(invalid("error", format!("must lie in (0, 1), got {error}")));
        }
        if correct >= num_actions {
            return Err(Error::IndexOutOfRange {
                index: correct,
                len: num_actions,
            });
        }
        let q = error / (num_actions - 1) as f64;
        let mut logits = vec![q.ln(); num_actions];
        logits[correct] = (1.0 - error).ln();
        Self::from_logits(logits)
    }

    pub fn num_actions(&self) -> usize {
        self.probs.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.probs[action]
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action < self.num_actions() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: action,
                len: self.num_actions(),
            })
        }
    }

    /// `1 - pi(correct)`, summed over the other actions so it stays accurate
    /// below machine epsilon.
    pub fn error(&self, correct: usize) -> f64 {
        complement(&self.probs, correct)
    }

    /// Entropy gradient with respect to the logits, `-pi * (log pi + H)`.
    pub fn entropy_grad(&self) -> Vec<f64> {
        let logp: Vec<f64> = self.probs.iter().map(|p| p.max(1e-300).ln()).collect();
        let h: f64 = -self.probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        self.probs.iter().zip(&logp).map(|(p, l)| -p * (l + h)).collect()
    }
}

/// Score `e_a - pi` of one action.
pub fn score(policy: &PolicyTable, action: usize) -> Result<Vec<f64>> {
    policy.check_action(action)?;
    let mut s: Vec<f64> = policy.probs.iter().map(|p| -p).collect();
    s[action] = complement(&policy.probs, action);
    Ok(s)
}

/// `1 - probs[i]` without cancellation when `probs[i]` is close to 1.
pub(crate) fn complement(probs: &[f64], i: usize) -> f64 {
    if probs[i] > 0.5 {
        probs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, p)| p).sum()
    } else {
        1.0 - probs[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetricBanditSpec {
    pub num_actions: usize,
    pub error: f64,
    pub baseline: f64,
    pub eta: f64,
    pub correct_action: usize,
}

impl SymmetricBanditSpec {
    pub fn new(num_actions: usize, error: f64, baseline: f64, eta: f64) -> Result<Self> {
        let spec = Self {
            num_actions,
            error,
            baseline,
            eta,
            correct_action: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_actions < 3 {
            return Err(invalid("num_actions", format!("need K >= 3, got {}", self.num_actions)));
        }
        if !(self.error > 0.0 && self.error < 1.0) {
            return Err(invalid("error", format!("must lie in (0, 1), got {}", self.error)));
        }
        if !(self.baseline > 0.0 && self.baseline < 1.0) {
            return Err(invalid(
                "baseline",
                format!("must lie in (0, 1), got {}", self.baseline),
            ));
        }
        if !(self.eta > 0.0) {
            return Err(invalid("eta", format!("must be positive, got {}", self.eta)));
        }
        if self.correct_action >= self.num_actions {
            return Err(Error::IndexOutOfRange {
                index: self.correct_action,
                len: self.num_actions,
            });
        }
        Ok(())
    }

    pub fn policy(&self) -> PolicyTable {
        PolicyTable::symmetric(self.num_actions, self.error, self.correct_action).expect("validated spec")
    }

    pub fn gate_params(&self) -> GateParams {
        GateParams {
            eta: self.eta,
            ..GateParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateValues {
    pub w_plus: f64,
    pub w_minus: f64,
    pub s: f64,
}

/// Closed-form gates on the correct and incorrect actions of a symmetric
/// bandit, and the resulting scale `s = (1 - b) w+ + b w-`.
pub fn gate_values(spec: &SymmetricBanditSpec) -> GateValues {
    let k = spec.num_actions as f64;
    let (e, b, eta) = (spec.error, spec.baseline, spec.eta);
    let w_plus = sigmoid((1.0 - b) * (1.0 / (1.0 - e)).ln() / eta);
    let w_minus = sigmoid(-b * ((k - 1.0) / e).ln() / eta);
    GateValues {
        w_plus,
        w_minus,
        s: (1.0 - b) * w_plus + b * w_minus,
    }
}

/// Effective coefficient for each action when `correct` pays 1 and everything
/// else pays 0.
fn action_coeffs(
    policy: &PolicyTable,
    correct: usize,
    baseline: f64,
    kind: EstimatorKind,
    params: GateParams,
) -> Vec<f64> {
    (0..policy.num_actions())
        .map(|a| {
            let reward = if a == correct { 1.0 } else { 0.0 };
            kind.coeff(reward - baseline, surprisal_unchecked(policy.probs[a]), params.eta)
        })
        .collect()
}

/// Exact expected estimator output for an arbitrary policy.
pub fn expected_gradient_for(
    policy: &PolicyTable,
    correct: usize,
    baseline: f64,
    kind: EstimatorKind,
    params: GateParams,
) -> Result<Vec<f64>> {
    policy.check_action(correct)?;
    kind.validate()?;
    let coeffs = action_coeffs(policy, correct, baseline, kind, params);
    let mut g = vec![0.0; policy.num_actions()];
    for (a, c) in coeffs.iter().enumerate() {
        axpy(policy.probs[a] * c, &score(policy, a)?, &mut g);
    }
    if kind.entropy_coeff() > 0.0 {
        axpy(kind.entropy_coeff(), &policy.entropy_grad(), &mut g);
    }
    Ok(g)
}

/// Exact expected gradient in the symmetric bandit.
pub fn expected_gradient(spec: &SymmetricBanditSpec, kind: EstimatorKind) -> Vec<f64> {
    expected_gradient_for(
        &spec.policy(),
        spec.correct_action,
        spec.baseline,
        kind,
        spec.gate_params(),
    )
    .expect("validated spec")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionDiag {
    /// `E || P_perp g ||^2` with `P_perp` projecting out the objective gradient.
    pub perp_variance: f64,
    pub mean_gradient: Vec<f64>,
    /// `1 - cos(E[g], grad J)`.
    pub cosine_gap: f64,
}

fn project_out(x: &[f64], u: &[f64], u_norm_sq: f64) -> Vec<f64> {
    let c = dot(x, u) / u_norm_sq;
    x.iter().zip(u).map(|(xi, ui)| xi - c * ui).collect()
}

/// Perpendicular second moment and mean direction, by enumeration.
pub fn perp_diagnostics(
    policy: &PolicyTable,
    correct: usize,
    baseline: f64,
    kind: EstimatorKind,
    params: GateParams,
) -> Result<DirectionDiag> {
    let reference = score(policy, correct)?;
    let ref_sq = norm_sq(&reference);
    let coeffs = action_coeffs(policy, correct, baseline, kind, params);
    let entropy = (kind.entropy_coeff() > 0.0).then(|| policy.entropy_grad());
    let mut perp = 0.0;
    for (a, c) in coeffs.iter().enumerate() {
        let mut g = score(policy, a)?;
        vecops::scale(*c, &mut g);
        if let Some(h) = &entropy {
            axpy(kind.entropy_coeff(), h, &mut g);
        }
        perp += policy.probs[a] * norm_sq(&project_out(&g, &reference, ref_sq));
    }
    let mean = expected_gradient_for(policy, correct, baseline, kind, params)?;
    let cosine_gap = 1.0 - vecops::cosine(&mean, &reference).unwrap_or(0.0);
    Ok(DirectionDiag {
        perp_variance: perp,
        mean_gradient: mean,
        cosine_gap,
    })
}

pub fn perp_variance(spec: &SymmetricBanditSpec, kind: EstimatorKind) -> DirectionDiag {
    perp_diagnostics(
        &spec.policy(),
        spec.correct_action,
        spec.baseline,
        kind,
        spec.gate_params(),
    )
    .expect("validated spec")
}

/// Fraction `w-^2 / s^2` of the plain estimator's alignment gap that the gated
/// one retains.
pub fn gap_ratio(spec: &SymmetricBanditSpec) -> f64 {
    let g = gate_values(spec);
    (g.w_minus / g.s).powi(2)
}

/// Largest absolute residual of `sum_{a != y} phi(a) = -((K-1)(1-e)/e) phi(y)`.
pub fn symmetry_lemma_residual(num_actions: usize, error: f64) -> Result<f64> {
    let policy = PolicyTable::symmetric(num_actions, error, 0)?;
    let k = num_actions as f64;
    let mut lhs = vec![0.0; num_actions];
    for a in 1..num_actions {
        axpy(1.0, &score(&policy, a)?, &mut lhs);
    }
    let rhs_scale = -(k - 1.0) * (1.0 - error) / error;
    let phi_y = score(&policy, 0)?;
    Ok(lhs
        .iter()
        .zip(&phi_y)
        .map(|(l, p)| (l - rhs_scale * p).abs())
        .fold(0.0, f64::max))
}

/// Cumulative distribution for inverse-CDF sampling.
pub(crate) fn cdf(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

pub(crate) fn draw<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

/// A sampled term together with its score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTerm {
    pub term: SampleTerm,
    pub score: Vec<f64>,
}

/// Draws `batch` i.i.d. actions. Reward is 1 on `correct` and 0 elsewhere.
pub fn sample_batch<R: Rng + ?Sized>(
    policy: &PolicyTable,
    correct: usize,
    baseline: f64,
    batch: usize,
    kind: EstimatorKind,
    params: GateParams,
    rng: &mut R,
) -> Result<Vec<ScoredTerm>> {
    policy.check_action(correct)?;
    if batch == 0 {
        return Err(invalid("batch", "must be at least 1"));
    }
    let c = cdf(&policy.probs);
    (0..batch)
        .map(|_| {
            let a = draw(&c, rng);
            let reward = if a == correct { 1.0 } else { 0.0 };
            let term = kind
                .term(reward - baseline, surprisal_unchecked(policy.probs[a]), params)?
                .with_action(Action::Discrete(a));
            Ok(ScoredTerm {
                term,
                score: score(policy, a)?,
            })
        })
        .collect()
}

/// Batch mean of `effective_coeff * score`.
pub fn batch_mean_gradient(terms: &[ScoredTerm]) -> Vec<f64> {
    let k = terms.first().map_or(0, |t| t.score.len());
    let mut g = vec![0.0; k];
    for t in terms {
        axpy(t.term.effective_coeff, &t.score, &mut g);
    }
    vecops::scale(1.0 / terms.len().max(1) as f64, &mut g);
    g
}

/// Batch-mean gradient from action counts; terms sharing an action share a
/// coefficient, so this costs `O(K)` after counting.
fn gradient_from_counts(policy: &PolicyTable, counts: &[u32], coeffs: &[f64], batch: usize) -> Vec<f64> {
    let inv = 1.0 / batch as f64;
    let mut weight_total = 0.0;
    let mut g: Vec<f64> = counts
        .iter()
        .zip(coeffs)
        .map(|(n, c)| {
            let w = *n as f64 * c * inv;
            weight_total += w;
            w
        })
        .collect();
    let w: Vec<f64> = g.clone();
    axpy(-weight_total, &policy.probs, &mut g);
    // g_i = w_i (1 - pi_i) - (W - w_i) pi_i, exact form for the dominant action
    let top = vecops::argmax(&policy.probs);
    g[top] = w[top] * complement(&policy.probs, top) - (weight_total - w[top]) * policy.probs[top];
    g
}

/// `z + alpha * g / |g|`, or `z` unchanged when `|g| <= 1e-12`.
pub fn normalized_step(logits: &[f64], gradient: &[f64], step_size: f64) -> Vec<f64> {
    let n = norm(gradient);
    let mut z = logits.to_vec();
    if n > ZERO_GRAD_NORM {
        axpy(step_size / n, gradient, &mut z);
    }
    z
}

/// Improvement of `J(z) = -z^2 / 2` under one normalized step, returned as
/// `(actual, lower_bound)` where the bound is `alpha |J'(z)| cos - (L/2) alpha^2`
/// with `L = 1` and `cos = 1`. They coincide on this objective.
pub fn quadratic_progress(z: f64, step_size: f64) -> (f64, f64) {
    let j = |x: f64| -0.5 * x * x;
    let grad = [-z];
    let next = normalized_step(&[z], &grad, step_size)[0];
    let actual = j(next) - j(z);
    let bound = step_size * z.abs() - 0.5 * step_size * step_size;
    (actual, bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BanditRunConfig {
    pub num_actions: usize,
    pub correct_action: usize,
    pub baseline: f64,
    pub gate: GateParams,
    pub batch: usize,
    pub step_size: f64,
    pub steps: usize,
    pub seeds: usize,
    pub base_seed: u64,
    /// Start from the symmetric policy with this error instead of uniform logits.
    pub init_error: Option<f64>,
}

impl Default for BanditRunConfig {
    fn default() -> Self {
        Self {
            num_actions: 100,
            correct_action: 0,
            baseline: 0.5,
            gate: GateParams::default(),
            batch: 100,
            step_size: 0.1,
            steps: 2000,
            seeds: 100,
            base_seed: 0,
            init_error: None,
        }
    }
}

impl BanditRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_actions < 2 {
            return Err(invalid("k", "need at least two actions"));
        }
        if self.correct_action >= self.num_actions {
            return Err(Error::IndexOutOfRange {
                index: self.correct_action,
                len: self.num_actions,
            });
        }
        for (field, v) in [("batch", self.batch), ("steps", self.steps), ("seeds", self.seeds)] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(invalid(
                "alpha",
                format!("step size must be >= 0, got {}", self.step_size),
            ));
        }
        if !self.baseline.is_finite() {
            return Err(invalid("bandit_baseline", "must be finite"));
        }
        Ok(())
    }

    fn initial_policy(&self) -> Result<PolicyTable> {
        match self.init_error {
            Some(e) => PolicyTable::symmetric(self.num_actions, e, self.correct_action),
            None => PolicyTable::uniform(self.num_actions),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BanditTracePoint {
    pub seed: u64,
    pub step: u64,
    /// `1 - pi(correct)` after the update.
    pub error: f64,
    /// `1 - cos(batch gradient, exact expected PG gradient)` for the gradient
    /// used in this update.
    pub misalignment: f64,
}

/// Trains one seed with normalized steps on batch-sampled gradients.
pub fn run_bandit_seed(cfg: &BanditRunConfig, kind: EstimatorKind, seed_index: usize) -> Result<Vec<BanditTracePoint>> {
    let stream = SeedStream::new(cfg.base_seed, seed_index as u64);
    let mut policy = cfg.initial_policy()?;
    let mut out = Vec::with_capacity(cfg.steps);
    let mut counts = vec![0u32; cfg.num_actions];
    for step in 0..cfg.steps {
        let mut rng = stream.step(step as u64);
        let c = cdf(policy.probs());
        counts.iter_mut().for_each(|n| *n = 0);
        for _ in 0..cfg.batch {
            counts[draw(&c, &mut rng)] += 1;
        }
        let coeffs = action_coeffs(&policy, cfg.correct_action, cfg.baseline, kind, cfg.gate);
        let mut g = gradient_from_counts(&policy, &counts, &coeffs, cfg.batch);
        if kind.entropy_coeff() > 0.0 {
            axpy(kind.entropy_coeff(), &policy.entropy_grad(), &mut g);
        }
        // E[g_PG] = pi(y) phi(y) by the score identity
        let mut oracle = score(&policy, cfg.correct_action)?;
        vecops::scale(policy.prob(cfg.correct_action), &mut oracle);
        let misalignment = vecops::misalignment(&g, &oracle);

        // skip threshold measured relative to the oracle scale, which shrinks
        // like the error itself
        let oracle_norm = vecops::norm(&oracle);
        if oracle_norm > 0.0 {
            vecops::scale(1.0 / oracle_norm, &mut g);
        }
        let z = normalized_step(policy.logits(), &g, cfg.step_size);
        policy = PolicyTable::from_logits(z)?;
        out.push(BanditTracePoint {
            seed: seed_index as u64,
            step: step as u64 + 1,
            error: policy.error(cfg.correct_action),
            misalignment,
        });
    }
    Ok(out)
}

/// Runs every seed (in parallel when enabled) and returns one trace per seed.
pub fn run_symmetric_bandit(cfg: &BanditRunConfig, kind: EstimatorKind) -> Result<Vec<Vec<BanditTracePoint>>> {
    cfg.validate()?;
    kind.validate()?;
    map_seeds(cfg.seeds, |s| run_bandit_seed(cfg, kind, s))
        .into_iter()
        .collect()
}

/// Monte-Carlo alignment gaps `1 - E[cos(batch mean, grad J)]` for the plain
/// and gated estimators on common samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalGap {
    pub batch: usize,
    pub pg_gap: f64,
    pub dg_gap: f64,
    pub ratio: f64,
}

pub fn empirical_gap_ratio(spec: &SymmetricBanditSpec, batch: usize, trials: usize, base_seed: u64) -> EmpiricalGap {
    let policy = spec.policy();
    let params = spec.gate_params();
    let reference = score(&policy, spec.correct_action).expect("validated spec");
    let pg = action_coeffs(&policy, spec.correct_action, spec.baseline, EstimatorKind::Pg, params);
    let dg = action_coeffs(&policy, spec.correct_action, spec.baseline, EstimatorKind::Dg, params);
    let c = cdf(policy.probs());
    let stream = SeedStream::new(base_seed, batch as u64);
    let cosines = map_seeds(trials, |t| {
        let mut rng = stream.step(t as u64);
        let mut counts = vec![0u32; spec.num_actions];
        for _ in 0..batch {
            counts[draw(&c, &mut rng)] += 1;
        }
        let gp = gradient_from_counts(&policy, &counts, &pg, batch);
        let gd = gradient_from_counts(&policy, &counts, &dg, batch);
        (
            vecops::cosine(&gp, &reference).unwrap_or(0.0),
            vecops::cosine(&gd, &reference).unwrap_or(0.0),
        )
    });
    let n = trials as f64;
    let pg_gap = 1.0 - cosines.iter().map(|c| c.0).sum::<f64>() / n;
    let dg_gap = 1.0 - cosines.iter().map(|c| c.1).sum::<f64>() / n;
    EmpiricalGap {
        batch,
        pg_gap,
        dg_gap,
        ratio: dg_gap / pg_gap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailBoundReport {
    /// `max_a (w(a) - pi(a)^{b/eta})` over incorrect actions; `<= 0` when the
    /// per-action bound holds.
    pub max_gate_excess: f64,
    pub var_perp_dg: f64,
    pub var_perp_bound: f64,
    pub holds: bool,
}

/// Checks the gate tail bound `w(a) <= pi(a)^{b/eta}` on every incorrect action
/// and the resulting perpendicular variance bound, for an arbitrary policy.
pub fn nonsymmetric_tail_bound_check(
    policy: &PolicyTable,
    correct: usize,
    baseline: f64,
    eta: f64,
) -> Result<TailBoundReport> {
    policy.check_action(correct)?;
    let params = GateParams::new(eta)?;
    let reference = score(policy, correct)?;
    let ref_sq = norm_sq(&reference);
    let exponent = baseline / eta;
    let mut max_excess = f64::NEG_INFINITY;
    let mut bound = 0.0;
    for a in (0..policy.num_actions()).filter(|a| *a != correct) {
        let p = policy.probs[a];
        let w = sigmoid(-baseline * surprisal_unchecked(p) / eta);
        max_excess = max_excess.max(w - p.powf(exponent));
        let perp_sq = norm_sq(&project_out(&score(policy, a)?, &reference, ref_sq));
        bound += p.powf(1.0 + 2.0 * exponent) * baseline * baseline * perp_sq;
    }
    let diag = perp_diagnostics(policy, correct, baseline, EstimatorKind::Dg, params)?;
    // relative slack for rounding when the bound is tight
    let holds = max_excess <= 1e-15 && diag.perp_variance <= bound * (1.0 + 1e-12) + 1e-300;
    Ok(TailBoundReport {
        max_gate_excess: max_excess,
        var_perp_dg: diag.perp_variance,
        var_perp_bound: bound,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec(k: usize, e: f64, b: f64, eta: f64) -> SymmetricBanditSpec {
        SymmetricBanditSpec::new(k, e, b, eta).unwrap()
    }

    #[test]
    fn score_examples() {
        let u = PolicyTable::uniform(2).unwrap();
        assert_eq!(score(&u, 0).unwrap(), vec![0.5, -0.5]);
        let p = PolicyTable::from_logits(vec![3f64.ln(), 0.0, 0.0]).unwrap();
        let s = score(&p, 0).unwrap();
        for (a, b) in s.iter().zip([0.4, -0.2, -0.2]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(score(&p, 3).is_err());
    }

    #[test]
    fn gate_values_examples() {
        let g = gate_values(&spec(100, 0.5, 0.5, 1.0));
        // frozen from direct evaluation of the closed forms
        assert_abs_diff_eq!(g.w_plus, 0.585_786_437_626_904_9, epsilon = 1e-12);
        assert_abs_diff_eq!(g.w_minus, 0.066_351_509_032_844_1, epsilon = 1e-12);
        assert_abs_diff_eq!(g.s, 0.326_068_973_329_874_56, epsilon = 1e-12);
        assert!(g.w_minus < 0.5 && 0.5 < g.w_plus);

        let g = gate_values(&spec(100, 0.1, 0.5, 1.0));
        assert_abs_diff_eq!(g.w_minus, 0.030_803_099_540_045_04, epsilon = 1e-12);

        let g = gate_values(&spec(100, 1e-9, 0.5, 1.0));
        assert!(g.w_plus > 0.5 && g.w_plus - 0.5 < 1e-9);
    }

    #[test]
    fn gate_values_agree_with_pointwise_gate() {
        let sp = spec(100, 0.5, 0.5, 1.0);
        let g = gate_values(&sp);
        let pol = sp.policy();
        let plus = crate::gate::gate(0.5, -pol.prob(0).ln(), sp.gate_params()).unwrap();
        let minus = crate::gate::gate(-0.5, -pol.prob(1).ln(), sp.gate_params()).unwrap();
        assert_abs_diff_eq!(plus.gate, g.w_plus, epsilon = 1e-14);
        assert_abs_diff_eq!(minus.gate, g.w_minus, epsilon = 1e-14);
    }

    #[test]
    fn pg_expected_gradient_is_baseline_free() {
        let reference = {
            let p = PolicyTable::symmetric(10, 0.3, 0).unwrap();
            let mut s = score(&p, 0).unwrap();
            vecops::scale(0.7, &mut s);
            s
        };
        for b in [0.1, 0.5, 0.9] {
            let g = expected_gradient(&spec(10, 0.3, b, 1.0), EstimatorKind::Pg);
            for (x, y) in g.iter().zip(&reference) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn dg_expected_gradient_is_scaled_pg() {
        let sp = spec(100, 0.5, 0.5, 1.0);
        let s = gate_values(&sp).s;
        let pg = expected_gradient(&sp, EstimatorKind::Pg);
        let dg = expected_gradient(&sp, EstimatorKind::Dg);
        for (d, p) in dg.iter().zip(&pg) {
            assert_abs_diff_eq!(*d, s * p, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_baseline_keeps_only_correct_arm() {
        let pol = PolicyTable::symmetric(10, 0.4, 0).unwrap();
        let params = GateParams::default();
        let g = expected_gradient_for(&pol, 0, 0.0, EstimatorKind::Dg, params).unwrap();
        let w_plus = sigmoid(-(0.6f64).ln());
        let phi = score(&pol, 0).unwrap();
        for (x, f) in g.iter().zip(&phi) {
            assert_abs_diff_eq!(*x, 0.6 * w_plus * f, epsilon = 1e-14);
        }
        let diag = perp_diagnostics(&pol, 0, 0.0, EstimatorKind::Pg, params).unwrap();
        assert_abs_diff_eq!(diag.perp_variance, 0.0, epsilon = 1e-30);
    }

    #[test]
    fn variance_ratio_is_w_minus_squared() {
        let sp = spec(3, 0.4, 0.5, 1.0);
        let pg = perp_variance(&sp, EstimatorKind::Pg);
        let dg = perp_variance(&sp, EstimatorKind::Dg);
        let w = gate_values(&sp).w_minus;
        assert!((dg.perp_variance / pg.perp_variance - w * w).abs() < 1e-10);
        assert!(pg.cosine_gap.abs() < 1e-12 && dg.cosine_gap.abs() < 1e-12);
    }

    #[test]
    fn quoted_gap_ratios() {
        let r = gap_ratio(&spec(100, 0.5, 0.5, 1.0));
        assert_abs_diff_eq!(r, 0.041_407_847_658_291_38, epsilon = 1e-12);
        assert!((r - 0.04).abs() < 0.005);
        let r1 = gap_ratio(&spec(100, 0.1, 0.5, 1.0));
        assert_abs_diff_eq!(r1, 0.012_826_221_684_403_376, epsilon = 1e-12);
        assert!((r1 - 0.01).abs() < 0.005);
        for e in [0.01, 0.1, 0.5, 0.9] {
            let sp = spec(100, e, 0.5, 1.0);
            assert!(gate_values(&sp).w_minus <= (e / 99.0).sqrt());
            assert!(gap_ratio(&sp) <= 16.0 * e / 99.0);
        }
    }

    #[test]
    fn degenerate_policy_samples() {
        let pol = PolicyTable::from_logits(vec![800.0, 0.0, 0.0]).unwrap();
        let mut rng = SeedStream::new(0, 0).step(0);
        let terms = sample_batch(&pol, 0, 0.25, 50, EstimatorKind::Pg, GateParams::default(), &mut rng).unwrap();
        assert!(terms
            .iter()
            .all(|t| t.term.advantage == 0.75 && t.term.surprisal == 0.0));
        assert!(sample_batch(&pol, 0, 0.25, 0, EstimatorKind::Pg, GateParams::default(), &mut rng).is_err());
    }

    #[test]
    fn normalized_step_examples() {
        let z = normalized_step(&[1.0, 2.0], &[3.0, 4.0], 0.1);
        assert_abs_diff_eq!(z[0], 1.06, epsilon = 1e-15);
        assert_abs_diff_eq!(z[1], 2.08, epsilon = 1e-15);
        assert_eq!(normalized_step(&[1.0, 2.0], &[0.0, 0.0], 0.1), vec![1.0, 2.0]);
        assert_eq!(normalized_step(&[1.0], &[1e-13], 0.1), vec![1.0]);
        for z0 in [-3.0, -0.5, 0.2, 4.0] {
            let (actual, bound) = quadratic_progress(z0, 0.1);
            assert_abs_diff_eq!(actual, bound, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_step_size_freezes_trace() {
        let cfg = BanditRunConfig {
            num_actions: 5,
            step_size: 0.0,
            steps: 20,
            seeds: 2,
            init_error: Some(0.99),
            ..Default::default()
        };
        for trace in run_symmetric_bandit(&cfg, EstimatorKind::Dg).unwrap() {
            for p in trace {
                assert_abs_diff_eq!(p.error, 0.99, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bandit_runs_are_reproducible() {
        let cfg = BanditRunConfig {
            num_actions: 10,
            steps: 30,
            seeds: 3,
            base_seed: 11,
            ..Default::default()
        };
        let a = run_symmetric_bandit(&cfg, EstimatorKind::Dg).unwrap();
        let b = run_symmetric_bandit(&cfg, EstimatorKind::Dg).unwrap();
        assert_eq!(a, b);
        let seq: Vec<_> = (0..3)
            .map(|s| run_bandit_seed(&cfg, EstimatorKind::Dg, s).unwrap())
            .collect();
        assert_eq!(a, seq);
    }

    #[test]
    fn count_gradient_matches_scored_terms() {
        let pol = PolicyTable::from_logits(vec![0.3, -1.0, 2.0, 0.0]).unwrap();
        let params = GateParams::default();
        let mut rng = SeedStream::new(5, 0).step(0);
        let terms = sample_batch(&pol, 2, 0.4, 64, EstimatorKind::Dg, params, &mut rng).unwrap();
        let mut counts = vec![0u32; 4];
        for t in &terms {
            if let Some(Action::Discrete(a)) = t.term.action {
                counts[a] += 1;
            }
        }
        let coeffs = action_coeffs(&pol, 2, 0.4, EstimatorKind::Dg, params);
        let fast = gradient_from_counts(&pol, &counts, &coeffs, 64);
        let slow = batch_mean_gradient(&terms);
        for (a, b) in fast.iter().zip(&slow) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    proptest! {
        #[test]
        fn score_identity(logits in proptest::collection::vec(-5.0f64..5.0, 2..12)) {
            let pol = PolicyTable::from_logits(logits).unwrap();
            let mut acc = vec![0.0; pol.num_actions()];
            for a in 0..pol.num_actions() {
                axpy(pol.prob(a), &score(&pol, a).unwrap(), &mut acc);
            }
            prop_assert!(acc.iter().all(|v| v.abs() < 1e-12));
            prop_assert!((pol.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn score_matches_finite_differences(logits in proptest::collection::vec(-3.0f64..3.0, 2..8), a in 0usize..8) {
            let pol = PolicyTable::from_logits(logits.clone()).unwrap();
            let a = a % pol.num_actions();
            let s = score(&pol, a).unwrap();
            let h = 1e-5;
            for j in 0..logits.len() {
                let mut up = logits.clone();
                let mut dn = logits.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (vecops::log_softmax(&up)[a] - vecops::log_softmax(&dn)[a]) / (2.0 * h);
                prop_assert!((fd - s[j]).abs() < 1e-5);
            }
        }

        #[test]
        fn normalized_step_has_norm_alpha(g in proptest::collection::vec(-10.0f64..10.0, 1..10), alpha in 1e-3f64..2.0) {
            prop_assume!(norm(&g) > 1e-6);
            let z = vec![0.5; g.len()];
            let next = normalized_step(&z, &g, alpha);
            let d: Vec<f64> = next.iter().zip(&z).map(|(a, b)| a - b).collect();
            prop_assert!((norm(&d) - alpha).abs() < 1e-12);
        }
    }
}
