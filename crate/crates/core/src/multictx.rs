//! Exact population directions for `N` parameter-disjoint contexts.
//!
//! Context `n` owns its own block of `K` logits, so its correct-action score
//! `v_n = e_{y_n} - pi_n` is orthogonal to every other context's. With a zero
//! baseline only correct actions contribute and the three directions differ
//! only in how they weight the blocks:
//!
//! | direction | weight on `v_n`               |
//! |-----------|-------------------------------|
//! | CE        | `1`                           |
//! | PG        | `p_n`                         |
//! | DG        | `h(p_n) = p_n sigmoid(-log p_n / eta)` |

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gate::{sigmoid, surprisal_unchecked};
use crate::par::map_seeds;
use crate::rng::{SeedStream, TAG_INIT};
use crate::tabular::normalized_step;
use crate::vecops::{self, cosine};

#[derive(Debug, Clone, PartialEq)]
pub struct ContextEnsemble {
    num_contexts: usize,
    num_actions: usize,
    /// Row-major `N x K`.
    logits: Vec<f64>,
    correct: Vec<usize>,
}

impl ContextEnsemble {
    pub fn new(num_actions: usize, logits: Vec<f64>, correct: Vec<usize>) -> Result<Self> {
        if num_actions < 2 {
            return Err(invalid("actions", "need at least two actions per context"));
        }
        if correct.is_empty() || logits.len() != correct.len() * num_actions {
            return Err(invalid(
                "logits",
                format!(
                    "expected {} x {num_actions} logits, got {}",
                    correct.len(),
                    logits.len()
                ),
            ));
        }
        if let Some(&y) = correct.iter().find(|y| **y >= num_actions) {
            return Err(Error::IndexOutOfRange {
                index: y,
                len: num_actions,
            });
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("logits must be finite".into()));
        }
        Ok(Self {
            num_contexts: correct.len(),
            num_actions,
            logits,
            correct,
        })
    }

    /// I.i.d. standard-normal logits; the correct action is 0 everywhere.
    pub fn random_normal<R: Rng + ?Sized>(num_contexts: usize, num_actions: usize, rng: &mut R) -> Result<Self> {
        let logits = (0..num_contexts * num_actions)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(num_actions, logits, vec![0; num_contexts])
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self, context: usize) -> Vec<f64> {
        let k = self.num_actions;
        vecops::softmax(&self.logits[context * k..(context + 1) * k])
    }

    /// Probability of the correct action in every context.
    pub fn correct_probs(&self) -> Vec<f64> {
        (0..self.num_contexts).map(|n| self.probs(n)[self.correct[n]]).collect()
    }

    /// `v_n` embedded in the full `N x K` parameter vector.
    pub fn context_direction(&self, context: usize) -> Vec<f64> {
        let k = self.num_actions;
        let mut v = vec![0.0; self.logits.len()];
        let block = &mut v[context * k..(context + 1) * k];
        for (b, p) in block.iter_mut().zip(self.probs(context)) {
            *b = -p;
        }
        block[self.correct[context]] += 1.0;
        v
    }

    /// `sum_n c_n v_n` for per-context weights `c`.
    pub fn weighted_direction(&self, weights: &[f64]) -> Vec<f64> {
        let k = self.num_actions;
        let mut g = vec![0.0; self.logits.len()];
        for n in 0..self.num_contexts {
            let probs = self.probs(n);
            let block = &mut g[n * k..(n + 1) * k];
            for (b, p) in block.iter_mut().zip(&probs) {
                *b = -weights[n] * p;
            }
            block[self.correct[n]] += weights[n];
        }
        g
    }

    fn set_logits(&mut self, logits: Vec<f64>) {
        debug_assert_eq!(logits.len(), self.logits.len());
        self.logits = logits;
    }
}

/// DG's per-context weight `p * sigmoid(-log p / eta)`, equal to
/// `p / (1 + p^{1/eta})`.
pub fn dg_weight(p: f64, eta: f64) -> f64 {
    p * sigmoid(surprisal_unchecked(p) / eta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub ce: Vec<f64>,
    pub pg: Vec<f64>,
    pub dg: Vec<f64>,
    /// `(1, p_n, h(p_n))` per context.
    pub weights: Vec<[f64; 3]>,
}

pub fn direction_set(ensemble: &ContextEnsemble, eta: f64) -> DirectionSet {
    let p = ensemble.correct_probs();
    let weights: Vec<[f64; 3]> = p.iter().map(|&pn| [1.0, pn, dg_weight(pn, eta)]).collect();
    let col = |i: usize| weights.iter().map(|w| w[i]).collect::<Vec<_>>();
    DirectionSet {
        ce: ensemble.weighted_direction(&col(0)),
        pg: ensemble.weighted_direction(&col(1)),
        dg: ensemble.weighted_direction(&col(2)),
        weights,
    }
}

/// Cosine between `sum c_n v_n` and `sum d_n v_n` for orthogonal `v_n` with
/// squared norms `a_n`.
pub fn orthogonal_cosine(c: &[f64], d: &[f64], norms_sq: &[f64]) -> f64 {
    let cd: f64 = c.iter().zip(d).zip(norms_sq).map(|((x, y), a)| x * y * a).sum();
    let cc: f64 = c.iter().zip(norms_sq).map(|(x, a)| x * x * a).sum();
    let dd: f64 = d.iter().zip(norms_sq).map(|(y, a)| y * y * a).sum();
    cd / (cc * dd).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GreedyObjective {
    /// First-order change of `sum p_n`.
    SumP,
    /// First-order change of `sum log p_n`.
    SumLogP,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyReport {
    /// Numerically found maximizer, unit norm.
    pub argmax: Vec<f64>,
    /// Predicted maximizer (`c ∝ p` or `c ∝ 1`), unit norm.
    pub predicted: Vec<f64>,
    /// Angle between the two, radians.
    pub angle: f64,
    pub best_improvement: f64,
    pub passed: bool,
}

/// First-order improvement `alpha * sum_n c_n t_n a_n / sqrt(sum_n c_n^2 a_n)`
/// of the chosen objective under a normalized step along `sum c_n v_n`.
pub fn greedy_improvement(c: &[f64], p: &[f64], norms_sq: &[f64], objective: GreedyObjective, step: f64) -> f64 {
    let num: f64 = c
        .iter()
        .zip(p)
        .zip(norms_sq)
        .map(|((ci, pi), ai)| match objective {
            GreedyObjective::SumP => ci * pi * ai,
            GreedyObjective::SumLogP => ci * ai,
        })
        .sum();
    let den: f64 = c.iter().zip(norms_sq).map(|(ci, ai)| ci * ci * ai).sum::<f64>().sqrt();
    step * num / den
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = vecops::norm(&v);
    vecops::scale(1.0 / n, &mut v);
    v
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    cosine(a, b).map_or(std::f64::consts::PI, |c| c.acos())
}

/// Maximizes the first-order improvement over weight vectors and compares the
/// maximizer against the greedy-optimal direction, within `1e-3` radians.
///
/// Two contexts are searched on a dense angular grid over the positive
/// quadrant; larger ensembles use projected gradient ascent on the unit sphere.
pub fn greedy_direction_check(
    p: &[f64],
    norms_sq: &[f64],
    objective: GreedyObjective,
    step: f64,
) -> Result<GreedyReport> {
    let n = p.len();
    if n < 2 || norms_sq.len() != n {
        return Err(invalid("p", "need N >= 2 probabilities with matching norms"));
    }
    if p.iter().any(|v| !(*v > 0.0 && *v < 1.0)) || norms_sq.iter().any(|a| !(*a > 0.0)) {
        return Err(invalid("p", "probabilities must lie in (0, 1) and norms be positive"));
    }
    let f = |c: &[f64]| greedy_improvement(c, p, norms_sq, objective, step);
    let argmax = if n == 2 {
        let grid = 400_000;
        let mut best = (f64::NEG_INFINITY, vec![1.0, 0.0]);
        for i in 0..=grid {
            let th = std::f64::consts::FRAC_PI_2 * i as f64 / grid as f64;
            let c = [th.cos(), th.sin()];
            let v = f(&c);
            if v > best.0 {
                best = (v, c.to_vec());
            }
        }
        best.1
    } else {
        let mut c = unit(
            vec![1.0; n]
                .iter()
                .enumerate()
                .map(|(i, v)| v + 0.1 * i as f64)
                .collect(),
        );
        let mut lr = 0.5;
        let mut cur = f(&c);
        for _ in 0..100_000 {
            // d/dc of (c.t) / sqrt(c^T A c)
            let t: Vec<f64> = p
                .iter()
                .zip(norms_sq)
                .map(|(pi, ai)| match objective {
                    GreedyObjective::SumP => pi * ai,
                    GreedyObjective::SumLogP => *ai,
                })
                .collect();
            let ct = vecops::dot(&c, &t);
            let q: f64 = c.iter().zip(norms_sq).map(|(ci, ai)| ci * ci * ai).sum();
            let grad: Vec<f64> = (0..n)
                .map(|i| t[i] / q.sqrt() - ct * norms_sq[i] * c[i] / q.powf(1.5))
                .collect();
            let mut next = c.clone();
            vecops::axpy(lr, &grad, &mut next);
            let next = unit(next);
            let val = f(&next);
            if val >= cur {
                c = next;
                cur = val;
            } else {
                lr *= 0.5;
                if lr < 1e-14 {
                    break;
                }
            }
        }
        c
    };
    let predicted = unit(match objective {
        GreedyObjective::SumP => p.to_vec(),
        GreedyObjective::SumLogP => vec![1.0; n],
    });
    let angle = angle_between(&argmax, &predicted);
    Ok(GreedyReport {
        best_improvement: f(&argmax),
        argmax: unit(argmax),
        predicted,
        angle,
        passed: angle < 1e-3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoContextReport {
    pub cos_dg: f64,
    pub cos_pg: f64,
    pub r_pg: f64,
    pub r_dg: f64,
    /// `cos_dg > cos_pg` and `1 < r_dg < r_pg` (ratios oriented so `r_pg > 1`).
    pub holds: bool,
}

/// Two-context comparison of DG's and PG's population directions against the
/// cross-entropy direction, for orthogonal contexts with squared norms `norms`.
pub fn two_context_check(p1: f64, p2: f64, eta: f64, norms: (f64, f64)) -> Result<TwoContextReport> {
    if !(eta > 0.5) {
        return Err(invalid(
            "eta",
            format!("the two-context result needs eta > 1/2, got {eta}"),
        ));
    }
    for (name, p) in [("p1", p1), ("p2", p2)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(
                if name == "p1" { "p1" } else { "p2" },
                format!("must lie in (0, 1), got {p}"),
            ));
        }
    }
    if p1 == p2 {
        return Err(invalid(
            "p2",
            "p1 and p2 must differ (equal weights give identical cosines of 1)",
        ));
    }
    if !(norms.0 > 0.0 && norms.1 > 0.0) {
        return Err(invalid("norms", "squared norms must be positive"));
    }
    let a = [norms.0, norms.1];
    let ce = [1.0, 1.0];
    let pg = [p1, p2];
    let dg = [dg_weight(p1, eta), dg_weight(p2, eta)];
    let cos_pg = orthogonal_cosine(&pg, &ce, &a);
    let cos_dg = orthogonal_cosine(&dg, &ce, &a);
    let (r_pg, r_dg) = if p1 > p2 {
        (p1 / p2, dg[0] / dg[1])
    } else {
        (p2 / p1, dg[1] / dg[0])
    };
    Ok(TwoContextReport {
        cos_dg,
        cos_pg,
        r_pg,
        r_dg,
        holds: cos_dg > cos_pg && 1.0 < r_dg && r_dg < r_pg,
    })
}

/// Two-vector cosine `C(r) = cos(r v1 + v2, v1 + v2)` in closed form.
pub fn two_vector_cosine(r: f64, a1: f64, a2: f64) -> f64 {
    (r * a1 + a2) / ((r * r * a1 + a2) * (a1 + a2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathReport {
    pub phi: Vec<f64>,
    /// Smallest `phi[i+1] - phi[i]` over the grid.
    pub min_increment: f64,
    pub monotone: bool,
    /// Antisymmetrized sum at `t = 0, 0.5, 1`.
    pub sign_sums: [f64; 3],
    /// Largest relative disagreement between the antisymmetrized sum, the full
    /// double sum and a finite-difference derivative of `phi`, over the three
    /// evaluation points.
    pub identity_error: f64,
}

struct PathTerms {
    c: Vec<f64>,
    lambda: Vec<f64>,
}

fn path_terms(p: &[f64], eta: f64, t: f64) -> PathTerms {
    let lambda: Vec<f64> = p
        .iter()
        .map(|pn| sigmoid(surprisal_unchecked(*pn) / eta).ln())
        .collect();
    let c = p.iter().zip(&lambda).map(|(pn, l)| pn * (t * l).exp()).collect();
    PathTerms { c, lambda }
}

/// `phi(t) = (sum c_n a_n)^2 / sum c_n^2 a_n` with `c_n(t) = p_n g_n^t` and
/// `g_n = sigmoid(-log p_n / eta)`; proportional to the squared cosine with
/// the CE direction along the PG (t=0) to DG (t=1) interpolation.
pub fn path_phi(p: &[f64], norms_sq: &[f64], eta: f64, t: f64) -> f64 {
    let PathTerms { c, .. } = path_terms(p, eta, t);
    let a: f64 = c.iter().zip(norms_sq).map(|(ci, ai)| ci * ai).sum();
    let b: f64 = c.iter().zip(norms_sq).map(|(ci, ai)| ci * ci * ai).sum();
    a * a / b
}

pub fn path_monotonicity_check(p: &[f64], norms_sq: &[f64], eta: f64, grid: usize) -> Result<PathReport> {
    if p.len() < 2 || norms_sq.len() != p.len() {
        return Err(invalid("p", "need N >= 2 probabilities with matching norms"));
    }
    let grid = grid.max(2);
    let phi: Vec<f64> = (0..=grid)
        .map(|i| path_phi(p, norms_sq, eta, i as f64 / grid as f64))
        .collect();
    let min_increment = phi.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);

    let mut sign_sums = [0.0; 3];
    let mut identity_error: f64 = 0.0;
    for (slot, t) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let PathTerms { c, lambda } = path_terms(p, eta, t);
        let a = norms_sq;
        let n = p.len();
        let mut full = 0.0;
        let mut anti = 0.0;
        for i in 0..n {
            for j in 0..n {
                full += c[i] * c[j] * c[j] * a[i] * a[j] * (lambda[i] - lambda[j]);
                if i < j {
                    anti += (lambda[i] - lambda[j]) * a[i] * a[j] * c[i] * c[j] * (c[j] - c[i]);
                }
            }
        }
        // phi' = 2 A S / B^2 where S is the double sum
        let big_a: f64 = c.iter().zip(a).map(|(ci, ai)| ci * ai).sum();
        let big_b: f64 = c.iter().zip(a).map(|(ci, ai)| ci * ci * ai).sum();
        let analytic = 2.0 * big_a * anti / (big_b * big_b);
        let h = 1e-5;
        let fd = (path_phi(p, a, eta, t + h) - path_phi(p, a, eta, t - h)) / (2.0 * h);
        let scale = anti.abs().max(1e-300);
        let dscale = analytic.abs().max(1e-300);
        identity_error = identity_error
            .max((full - anti).abs() / scale)
            .max((analytic - fd).abs() / dscale);
        sign_sums[slot] = anti;
    }
    Ok(PathReport {
        monotone: min_increment > 0.0,
        min_increment,
        phi,
        sign_sums,
        identity_error,
    })
}

/// Largest decrease of `h(p)` between consecutive points of a uniform interior
/// grid of `(0, 1)`; negative or zero means `h` is non-decreasing there.
/// Returns `(max_decrease, p_at_max_decrease)`.
pub fn dg_weight_max_decrease(eta: f64, grid: usize) -> (f64, f64) {
    let mut worst = (f64::NEG_INFINITY, 0.0);
    let mut prev = dg_weight(1.0 / (grid as f64 + 1.0), eta);
    for i in 2..=grid {
        let p = i as f64 / (grid as f64 + 1.0);
        let h = dg_weight(p, eta);
        let drop = prev - h;
        if drop > worst.0 {
            worst = (drop, p);
        }
        prev = h;
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DescentArm {
    Pg,
    Dg,
    Ce,
}

impl fmt::Display for DescentArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescentArm::Pg => "pg",
            DescentArm::Dg => "dg",
            DescentArm::Ce => "ce",
        })
    }
}

impl FromStr for DescentArm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pg" => Ok(DescentArm::Pg),
            "dg" => Ok(DescentArm::Dg),
            "ce" => Ok(DescentArm::Ce),
            other => Err(invalid(
                "estimators",
                format!("multictx supports pg, dg, ce; got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiCtxConfig {
    pub contexts: usize,
    pub actions: usize,
    pub eta: f64,
    pub step_size: f64,
    pub steps: usize,
    pub seeds: usize,
    pub base_seed: u64,
}

impl Default for MultiCtxConfig {
    fn default() -> Self {
        Self {
            contexts: 100,
            actions: 10,
            eta: 1.0,
            step_size: 0.1,
            steps: 1000,
            seeds: 100,
            base_seed: 0,
        }
    }
}

impl MultiCtxConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("contexts", self.contexts),
            ("steps", self.steps),
            ("seeds", self.seeds),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if self.actions < 2 {
            return Err(invalid("actions", "need at least two actions"));
        }
        if !(self.eta > 0.0) {
            return Err(invalid("eta", "must be positive"));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(invalid("alpha", "step size must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiCtxPoint {
    pub seed: u64,
    pub step: u64,
    /// `1 - mean_n p_n` after the update.
    pub mean_error: f64,
    /// `1 - cos(g, g*_CE)` for the direction used in this update.
    pub misalignment_ce: f64,
}

pub fn run_multictx_seed(cfg: &MultiCtxConfig, arm: DescentArm, seed_index: usize) -> Result<Vec<MultiCtxPoint>> {
    let stream = SeedStream::new(cfg.base_seed, seed_index as u64);
    let mut ens = ContextEnsemble::random_normal(cfg.contexts, cfg.actions, &mut stream.tagged(TAG_INIT))?;
    let mut out = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let p = ens.correct_probs();
        let weights: Vec<f64> = match arm {
            DescentArm::Ce => vec![1.0; p.len()],
            DescentArm::Pg => p.clone(),
            DescentArm::Dg => p.iter().map(|pn| dg_weight(*pn, cfg.eta)).collect(),
        };
        let g = ens.weighted_direction(&weights);
        let misalignment_ce = match arm {
            DescentArm::Ce => 0.0,
            _ => vecops::misalignment(&g, &ens.weighted_direction(&vec![1.0; p.len()])),
        };
        let z = normalized_step(ens.logits(), &g, cfg.step_size);
        ens.set_logits(z);
        let mean_p = ens.correct_probs().iter().sum::<f64>() / cfg.contexts as f64;
        out.push(MultiCtxPoint {
            seed: seed_index as u64,
            step: step as u64 + 1,
            mean_error: 1.0 - mean_p,
            misalignment_ce,
        });
    }
    Ok(out)
}

/// Exact-gradient normalized descent on a fresh N(0,1) ensemble per seed.
pub fn run_multictx_descent(cfg: &MultiCtxConfig, arm: DescentArm) -> Result<Vec<Vec<MultiCtxPoint>>> {
    cfg.validate()?;
    map_seeds(cfg.seeds, |s| run_multictx_seed(cfg, arm, s))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ensemble(p: &[f64], k: usize) -> ContextEnsemble {
        // correct action 0 with probability p, remainder uniform
        let mut logits = Vec::new();
        for &pn in p {
            let q = (1.0 - pn) / (k - 1) as f64;
            logits.push(pn.ln());
            logits.extend(std::iter::repeat_n(q.ln(), k - 1));
        }
        ContextEnsemble::new(k, logits, vec![0; p.len()]).unwrap()
    }

    #[test]
    fn single_context_directions_coincide() {
        let d = direction_set(&ensemble(&[0.3], 5), 1.0);
        assert_abs_diff_eq!(cosine(&d.ce, &d.pg).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cosine(&d.ce, &d.dg).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn equal_probabilities_make_pg_and_ce_collinear() {
        let d = direction_set(&ensemble(&[0.4, 0.4, 0.4], 4), 1.0);
        assert_abs_diff_eq!(cosine(&d.ce, &d.pg).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn weight_ratios_at_unit_temperature() {
        let d = direction_set(&ensemble(&[0.9, 0.1], 3), 1.0);
        assert_abs_diff_eq!(d.weights[0][1] / d.weights[1][1], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            d.weights[0][2] / d.weights[1][2],
            5.210_526_315_789_473_5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn blocks_are_orthogonal() {
        let mut rng = SeedStream::new(1, 0).step(0);
        let e = ContextEnsemble::random_normal(6, 4, &mut rng).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert_eq!(vecops::dot(&e.context_direction(i), &e.context_direction(j)), 0.0);
                }
            }
        }
    }

    #[test]
    fn ensemble_cosines_match_abstract_orthogonal_form() {
        let e = ensemble(&[0.8, 0.25, 0.55], 6);
        let d = direction_set(&e, 1.0);
        let a: Vec<f64> = (0..3).map(|n| vecops::norm_sq(&e.context_direction(n))).collect();
        let p = e.correct_probs();
        let h: Vec<f64> = p.iter().map(|pn| dg_weight(*pn, 1.0)).collect();
        assert_abs_diff_eq!(
            cosine(&d.pg, &d.ce).unwrap(),
            orthogonal_cosine(&p, &[1.0; 3], &a),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            cosine(&d.dg, &d.ce).unwrap(),
            orthogonal_cosine(&h, &[1.0; 3], &a),
            epsilon = 1e-14
        );
    }

    #[test]
    fn two_context_example_values() {
        let r = two_context_check(0.9, 0.1, 1.0, (1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(r.cos_pg, 0.780_868_809_443_030_4, epsilon = 1e-12);
        assert_abs_diff_eq!(r.cos_dg, 0.827_708_498_204_768_7, epsilon = 1e-12);
        assert!(r.holds);
        assert_abs_diff_eq!(r.cos_pg, two_vector_cosine(9.0, 1.0, 1.0), epsilon = 1e-14);
        assert!(two_context_check(0.5, 0.5, 1.0, (1.0, 1.0)).is_err());
        assert!(two_context_check(0.9, 0.1, 0.5, (1.0, 1.0)).is_err());
    }

    #[test]
    fn cosine_peaks_at_unit_ratio() {
        for (a1, a2) in [(1.0, 1.0), (0.3, 2.0), (5.0, 0.1)] {
            let c1 = two_vector_cosine(1.0, a1, a2);
            assert_abs_diff_eq!(c1, 1.0, epsilon = 1e-15);
            for r in [0.1, 0.5, 0.99, 1.01, 2.0, 10.0] {
                assert!(two_vector_cosine(r, a1, a2) < c1);
            }
        }
    }

    #[test]
    fn greedy_examples() {
        let r = greedy_direction_check(&[0.9, 0.5], &[1.0, 1.0], GreedyObjective::SumP, 0.1).unwrap();
        assert!(r.passed, "angle {}", r.angle);
        let r = greedy_direction_check(&[0.9, 0.2], &[0.5, 3.0], GreedyObjective::SumLogP, 0.1).unwrap();
        assert!(r.passed, "angle {}", r.angle);
        let p = [0.3, 0.3, 0.3, 0.3];
        let a = [1.0, 0.2, 2.0, 0.7];
        let x = greedy_direction_check(&p, &a, GreedyObjective::SumP, 1.0).unwrap();
        let y = greedy_direction_check(&p, &a, GreedyObjective::SumLogP, 1.0).unwrap();
        assert!(x.passed && y.passed);
        assert!(angle_between(&x.argmax, &y.argmax) < 2e-3);
        let r = greedy_direction_check(
            &[0.9, 0.2, 0.6, 0.05, 0.4],
            &[1.0, 0.5, 2.0, 0.3, 1.1],
            GreedyObjective::SumP,
            1.0,
        )
        .unwrap();
        assert!(r.passed, "angle {}", r.angle);
    }

    #[test]
    fn path_examples() {
        let rep = path_monotonicity_check(&[0.9, 0.1], &[1.0, 1.0], 1.0, 100).unwrap();
        assert!(rep.monotone);
        assert!(rep.sign_sums.iter().all(|s| *s > 0.0));
        assert!(rep.identity_error < 1e-6, "{}", rep.identity_error);
        // phi is proportional to the squared cosine: phi / (a1 + a2) = cos^2
        let pr = two_context_check(0.9, 0.1, 1.0, (1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(rep.phi[0] / 2.0, pr.cos_pg.powi(2), epsilon = 1e-12);
        assert_abs_diff_eq!(rep.phi[100] / 2.0, pr.cos_dg.powi(2), epsilon = 1e-12);

        let flat = path_monotonicity_check(&[0.4, 0.4, 0.4], &[1.0, 2.0, 3.0], 1.0, 100).unwrap();
        let first = flat.phi[0];
        assert!(flat.phi.iter().all(|v| (v - first).abs() < 1e-12));
        assert!(!flat.monotone);
    }

    #[test]
    fn h_closed_form_and_monotonicity() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert_abs_diff_eq!(dg_weight(p, 1.0) * (1.0 + p), p, epsilon = 1e-12);
        }
        for eta in [0.6, 1.0, 2.0, 5.0] {
            assert!(dg_weight_max_decrease(eta, 10_000).0 < 0.0);
        }
        let (drop, at) = dg_weight_max_decrease(0.4, 10_000);
        assert!(drop > 0.0 && at > 0.85);
    }

    #[test]
    fn descent_ce_arm_has_zero_misalignment_and_zero_step_is_constant() {
        let cfg = MultiCtxConfig {
            contexts: 5,
            actions: 4,
            steps: 10,
            seeds: 2,
            ..Default::default()
        };
        for t in run_multictx_descent(&cfg, DescentArm::Ce).unwrap() {
            assert!(t.iter().all(|p| p.misalignment_ce == 0.0));
        }
        let frozen = MultiCtxConfig { step_size: 0.0, ..cfg };
        for t in run_multictx_descent(&frozen, DescentArm::Dg).unwrap() {
            assert!(t.iter().all(|p| (p.mean_error - t[0].mean_error).abs() < 1e-15));
        }
        assert!("ppo".parse::<DescentArm>().is_err());
    }
}
