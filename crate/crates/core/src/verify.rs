//! Executable property suite.
//!
//! Each check evaluates one identity or inequality over a fixed, seeded set of
//! instances and reports the largest violation. The suite is deterministic.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::continuous::GaussianPolicy;
use crate::gate::{self, sigmoid, softplus_potential, verify_gate_optimality, EstimatorKind, GateParams};
use crate::multictx::{
    dg_weight, dg_weight_max_decrease, greedy_direction_check, path_monotonicity_check, two_context_check,
    GreedyObjective,
};
use crate::neural::{MlpDims, MlpPolicy};
use crate::rng::{SeedStream, StreamRng};
use crate::tabular::{
    empirical_gap_ratio, expected_gradient, expected_gradient_for, gap_ratio, nonsymmetric_tail_bound_check,
    perp_variance, quadratic_progress, score, symmetry_lemma_residual, PolicyTable, SymmetricBanditSpec,
};
use crate::vecops::{self, axpy};

/// Harness self-test switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Replace the reference gate `sigmoid(chi / eta)` by `sigmoid(-chi / eta)`
    /// in every check that consults it. Every such check must then fail.
    pub flip_gate_sign: bool,
}

impl VerifyOptions {
    fn gate(&self, chi: f64, eta: f64) -> f64 {
        if self.flip_gate_sign {
            sigmoid(-chi / eta)
        } else {
            sigmoid(chi / eta)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed violation of the checked relation (0 when exact).
    pub max_violation: f64,
    pub detail: Option<String>,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} max_violation={:.3e}", self.name, self.max_violation)?;
        if let Some(d) = &self.detail {
            write!(f, " # {d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Accumulates the worst violation against a tolerance.
struct Tally {
    name: &'static str,
    tol: f64,
    worst: f64,
    ok: bool,
}

impl Tally {
    fn new(name: &'static str, tol: f64) -> Self {
        Self {
            name,
            tol,
            worst: 0.0,
            ok: true,
        }
    }

    fn see(&mut self, violation: f64) {
        if violation.is_nan() {
            self.ok = false;
            self.worst = f64::NAN;
            return;
        }
        if violation > self.worst || self.worst.is_nan() {
            self.worst = self.worst.max(violation);
        }
        if violation > self.tol {
            self.ok = false;
        }
    }

    fn require(&mut self, cond: bool) {
        self.ok &= cond;
    }

    fn done(self, detail: Option<String>) -> CheckResult {
        CheckResult {
            name: self.name,
            passed: self.ok,
            max_violation: self.worst,
            detail,
        }
    }
}

pub const SUITE_SEED: u64 = 0x5EED;

fn rng(salt: u64) -> StreamRng {
    SeedStream::new(SUITE_SEED, salt).step(0)
}

pub const SYMMETRY_ACTIONS: [usize; 3] = [3, 10, 100];
pub const SYMMETRY_ERRORS: [f64; 4] = [0.01, 0.1, 0.5, 0.9];
const BASELINES: [f64; 3] = [0.1, 0.5, 0.9];
const ETAS: [f64; 3] = [0.5, 1.0, 2.0];

/// Frozen by direct evaluation of `w-^2 / s^2` at K=100, b=0.5, eta=1.
pub const GAP_RATIO_EPS_HALF: f64 = 0.041_407_847_658_291_38;
pub const GAP_RATIO_EPS_TENTH: f64 = 0.012_826_221_684_403_376;

fn sym_specs() -> impl Iterator<Item = SymmetricBanditSpec> {
    SYMMETRY_ACTIONS.into_iter().flat_map(|k| {
        SYMMETRY_ERRORS.into_iter().flat_map(move |e| {
            BASELINES.into_iter().flat_map(move |b| {
                ETAS.into_iter()
                    .map(move |eta| SymmetricBanditSpec::new(k, e, b, eta).expect("grid values are valid"))
            })
        })
    })
}

fn random_policy<R: Rng + ?Sized>(k: usize, temp: f64, rng: &mut R) -> PolicyTable {
    let z = (0..k).map(|_| temp * rng.sample::<f64, _>(StandardNormal)).collect();
    PolicyTable::from_logits(z).expect("finite logits")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gate_antisymmetry(o: &VerifyOptions) -> CheckResult {
    let mut t = Tally::new("gate.antisymmetry", 1e-12);
    for eta in [0.1, 1.0, 10.0] {
        for i in -500..=500 {
            let chi = i as f64 * 0.1;
            t.see((o.gate(chi, eta) + o.gate(-chi, eta) - 1.0).abs());
        }
    }
    t.done(None)
}

fn gate_limits(o: &VerifyOptions) -> [CheckResult; 2] {
    let mut hot = Tally::new("gate.hedonic_limit", 1e-6);
    for i in -50..=50 {
        let chi = i as f64 * 0.1;
        hot.see((o.gate(chi, 1e8) - 0.5).abs());
    }
    let mut cold = Tally::new("gate.enlightened_limit", 1e-6);
    for chi in [0.01, 0.1, 1.0, 5.0] {
        cold.see(1.0 - o.gate(chi, 1e-6));
        cold.see(o.gate(-chi, 1e-6));
    }
    [hot.done(None), cold.done(None)]
}

fn gate_potential(o: &VerifyOptions) -> CheckResult {
    let mut t = Tally::new("gate.potential_derivative", 1e-6);
    let h = 1e-5;
    for eta in [0.2, 1.0, 5.0] {
        for i in -50..=50 {
            let chi = i as f64 * 0.1;
            let fd = (softplus_potential(chi + h, eta) - softplus_potential(chi - h, eta)) / (2.0 * h);
            t.see((fd - o.gate(chi, eta)).abs());
        }
    }
    t.done(None)
}

fn gate_optimality(o: &VerifyOptions) -> CheckResult {
    let mut t = Tally::new("gate.optimality", 1e-6);
    for eta in [0.5, 1.0, 2.0] {
        for i in -16..=16 {
            let chi = i as f64 * 0.5 * eta;
            let (w, v) = verify_gate_optimality(chi, eta, gate::DEFAULT_OPTIMALITY_GRID);
            t.see((v - softplus_potential(chi, eta)).abs());
            // the argmax is determined less sharply than the value
            t.see((w - o.gate(chi, eta)).abs() * 1e-2);
        }
    }
    t.done(None)
}

fn score_identity() -> CheckResult {
    let mut t = Tally::new("tabular.score_identity", 1e-12);
    let mut r = rng(1);
    for k in [2, 3, 10, 100] {
        for temp in [0.1, 1.0, 5.0] {
            let p = random_policy(k, temp, &mut r);
            let mut acc = vec![0.0; k];
            for a in 0..k {
                axpy(p.prob(a), &score(&p, a).expect("in range"), &mut acc);
            }
            t.see(vecops::norm(&acc));
        }
    }
    t.done(None)
}

fn symmetry_lemma() -> CheckResult {
    let mut t = Tally::new("tabular.symmetry_lemma", 1e-10);
    for k in SYMMETRY_ACTIONS {
        for e in SYMMETRY_ERRORS {
            match symmetry_lemma_residual(k, e) {
                Ok(r) => t.see(r),
                Err(_) => t.require(false),
            }
        }
    }
    t.done(None)
}

fn symmetric_geometry(o: &VerifyOptions) -> [CheckResult; 4] {
    let mut col = Tally::new("tabular.collinearity", 1e-10);
    let mut scale = Tally::new("tabular.scale_s", 1e-10);
    let mut var = Tally::new("tabular.variance_ratio", 1e-10);
    let mut base = Tally::new("tabular.pg_baseline_independence", 1e-12);
    for spec in sym_specs() {
        let k = spec.num_actions as f64;
        let (e, b, eta) = (spec.error, spec.baseline, spec.eta);
        let w_plus = o.gate((1.0 - b) * (1.0 / (1.0 - e)).ln(), eta);
        let w_minus = o.gate(-b * ((k - 1.0) / e).ln(), eta);
        let s = (1.0 - b) * w_plus + b * w_minus;

        let pg = expected_gradient(&spec, EstimatorKind::Pg);
        let dg = expected_gradient(&spec, EstimatorKind::Dg);
        col.see(vecops::misalignment(&dg, &pg));
        let mut spg = pg.clone();
        vecops::scale(s, &mut spg);
        scale.see(max_abs_diff(&dg, &spg));

        let vp = perp_variance(&spec, EstimatorKind::Pg).perp_variance;
        let vd = perp_variance(&spec, EstimatorKind::Dg).perp_variance;
        var.see((vd / vp - w_minus * w_minus).abs());

        let other = SymmetricBanditSpec { baseline: 0.37, ..spec };
        base.see(max_abs_diff(&pg, &expected_gradient(&other, EstimatorKind::Pg)));
    }
    [col.done(None), scale.done(None), var.done(None), base.done(None)]
}

fn gap_ratios(o: &VerifyOptions) -> [CheckResult; 2] {
    let mut out = Vec::new();
    for (name, e, frozen, quoted_pct) in [
        ("tabular.gap_ratio_eps_0.5", 0.5, GAP_RATIO_EPS_HALF, 4.0),
        ("tabular.gap_ratio_eps_0.1", 0.1, GAP_RATIO_EPS_TENTH, 1.0),
    ] {
        let spec = SymmetricBanditSpec::new(100, e, 0.5, 1.0).expect("valid");
        let lib = gap_ratio(&spec);
        let w_plus = o.gate(0.5 * (1.0 / (1.0 - e)).ln(), 1.0);
        let w_minus = o.gate(-0.5 * (99.0 / e).ln(), 1.0);
        let s = 0.5 * (w_plus + w_minus);
        let reference = (w_minus / s).powi(2);
        let mut t = Tally::new(name, 1e-12);
        t.see((lib - reference).abs());
        t.see((lib - frozen).abs());
        // within half a percentage point of the quoted figure, and rounds to it
        t.require((100.0 * reference - quoted_pct).abs() <= 0.5 && (100.0 * reference).round() == quoted_pct);
        out.push(t.done(Some(format!("value={:.4}% quoted={quoted_pct}%", 100.0 * lib))));
    }
    out.try_into().expect("two entries")
}

fn tail_bounds() -> CheckResult {
    let mut t = Tally::new("tabular.tail_bound", 1e-15);
    let mut r = rng(2);
    for i in 0..200 {
        let k = [3, 10, 50][i % 3];
        let p = random_policy(k, [0.5, 1.5, 3.0][i % 3], &mut r);
        let correct = r.random_range(0..k);
        for b in [0.25, 0.5, 0.75] {
            for eta in ETAS {
                match nonsymmetric_tail_bound_check(&p, correct, b, eta) {
                    Ok(rep) => {
                        t.see(rep.max_gate_excess.max(0.0));
                        t.require(rep.holds);
                    }
                    Err(_) => t.require(false),
                }
            }
        }
    }
    t.done(None)
}

fn score_fd() -> CheckResult {
    let mut t = Tally::new("tabular.score_finite_difference", 1e-5);
    let mut r = rng(3);
    let h = 1e-5;
    for _ in 0..20 {
        let p = random_policy(7, 1.0, &mut r);
        let a = r.random_range(0..7);
        let s = score(&p, a).expect("in range");
        for j in 0..7 {
            let mut up = p.logits().to_vec();
            let mut dn = up.clone();
            up[j] += h;
            dn[j] -= h;
            let lp = |z: Vec<f64>| vecops::log_softmax(&z)[a];
            t.see(((lp(up) - lp(dn)) / (2.0 * h) - s[j]).abs());
        }
    }
    t.done(None)
}

/// Agreement is asserted at the largest batch only; smaller batches sit
/// outside the concentration regime the approximation needs.
pub const EMPIRICAL_GAP_REL_TOL: f64 = 0.05;

fn empirical_gap(o: &VerifyOptions) -> CheckResult {
    let spec = SymmetricBanditSpec::new(100, 0.5, 0.5, 1.0).expect("valid");
    let w_plus = o.gate(0.5 * 2f64.ln(), 1.0);
    let w_minus = o.gate(-0.5 * 198f64.ln(), 1.0);
    let predicted = (w_minus / (0.5 * (w_plus + w_minus))).powi(2);
    let mut t = Tally::new("tabular.empirical_gap_ratio", EMPIRICAL_GAP_REL_TOL);
    let mut parts = Vec::new();
    for batch in [10, 100, 1000] {
        let g = empirical_gap_ratio(&spec, batch, 2000, SUITE_SEED);
        parts.push(format!("B={batch}:{:.4}", g.ratio));
        t.require(g.dg_gap < g.pg_gap);
        if batch == 1000 {
            t.see((g.ratio - predicted).abs() / predicted);
        }
    }
    t.done(Some(format!("predicted={predicted:.4} {}", parts.join(" "))))
}

fn quadratic() -> CheckResult {
    let mut t = Tally::new("tabular.quadratic_progress", 1e-12);
    for z in [-5.0, -1.0, -0.3, 0.3, 1.0, 5.0] {
        for alpha in [0.01, 0.1, 0.2] {
            let (actual, bound) = quadratic_progress(z, alpha);
            t.see((bound - actual).max(0.0));
        }
    }
    t.done(None)
}

fn greedy() -> [CheckResult; 2] {
    let mut r = rng(4);
    let mut out = Vec::new();
    for (name, obj) in [
        ("multictx.greedy_sum_p", GreedyObjective::SumP),
        ("multictx.greedy_sum_log_p", GreedyObjective::SumLogP),
    ] {
        let mut t = Tally::new(name, 1e-3);
        for n in [2, 3, 5, 10] {
            let p: Vec<f64> = (0..n).map(|_| r.random_range(0.02..0.98)).collect();
            let a: Vec<f64> = (0..n).map(|_| r.random_range(0.1..2.0)).collect();
            match greedy_direction_check(&p, &a, obj, 0.1) {
                Ok(rep) => {
                    t.see(rep.angle);
                    t.require(rep.passed);
                }
                Err(_) => t.require(false),
            }
        }
        out.push(t.done(None));
    }
    out.try_into().expect("two entries")
}

pub const TWO_CONTEXT_ETAS: [f64; 3] = [0.6, 1.0, 2.0];
pub const TWO_CONTEXT_INSTANCES: usize = 1000;

fn two_context() -> CheckResult {
    let mut t = Tally::new("multictx.two_context_cosine", 0.0);
    let mut r = rng(5);
    let mut min_margin = f64::INFINITY;
    let mut worst_compression: f64 = 0.0;
    for eta in TWO_CONTEXT_ETAS {
        for _ in 0..TWO_CONTEXT_INSTANCES {
            let p1 = r.random_range(0.01..0.99);
            let mut p2 = r.random_range(0.01..0.99);
            if p2 == p1 {
                p2 = 0.5 * p1;
            }
            let norms = (r.random_range(0.05..5.0), r.random_range(0.05..5.0));
            match two_context_check(p1, p2, eta, norms) {
                Ok(rep) => {
                    min_margin = min_margin.min(rep.cos_dg - rep.cos_pg);
                    worst_compression = worst_compression.max(rep.r_dg / rep.r_pg);
                    t.see((rep.cos_pg - rep.cos_dg).max(0.0));
                    t.require(rep.holds);
                }
                Err(_) => t.require(false),
            }
        }
    }
    t.done(Some(format!(
        "min(cos_dg-cos_pg)={min_margin:.3e} max(r_dg/r_pg)={worst_compression:.4}"
    )))
}

pub const PATH_INSTANCES: usize = 100;

fn path() -> CheckResult {
    let mut t = Tally::new("multictx.path_monotone", 1e-6);
    let mut r = rng(6);
    let mut min_inc = f64::INFINITY;
    for _ in 0..PATH_INSTANCES {
        let p: Vec<f64> = (0..10).map(|_| r.random_range(0.01..0.99)).collect();
        let a: Vec<f64> = (0..10).map(|_| r.random_range(0.1..2.0)).collect();
        match path_monotonicity_check(&p, &a, 1.0, 200) {
            Ok(rep) => {
                min_inc = min_inc.min(rep.min_increment);
                t.see(rep.identity_error);
                t.require(rep.monotone && rep.sign_sums.iter().all(|s| *s > 0.0));
            }
            Err(_) => t.require(false),
        }
    }
    t.done(Some(format!("min_increment={min_inc:.3e}")))
}

fn h_monotone() -> [CheckResult; 2] {
    let mut t = Tally::new("multictx.h_monotone", 0.0);
    for eta in [0.5, 0.6, 1.0, 2.0, 5.0] {
        let (drop, _) = dg_weight_max_decrease(eta, 100_000);
        t.see(drop.max(0.0));
    }
    let mono = t.done(None);
    // below eta = 1/2 the weight turns down before p = 1
    let (drop, at) = dg_weight_max_decrease(0.4, 100_000);
    let fails = CheckResult {
        name: "multictx.h_fails_below_half",
        passed: drop > 0.0 && at > 0.5,
        max_violation: if drop > 0.0 { 0.0 } else { -drop },
        detail: Some(format!("eta=0.4 max_decrease={drop:.3e} at p={at:.4}")),
    };
    [mono, fails]
}

fn h_closed_form() -> CheckResult {
    let mut t = Tally::new("multictx.h_closed_form", 1e-15);
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        t.see((dg_weight(p, 1.0) - p / (1.0 + p)).abs());
    }
    t.done(None)
}

pub const MLP_FD_COORDS: usize = 100;

fn mlp_checks() -> [CheckResult; 2] {
    let dims = MlpDims {
        input: 6,
        hidden: 8,
        classes: 4,
    };
    let mut r = rng(7);
    let policy = MlpPolicy::init(dims, &mut r).expect("valid dims");
    let x: Vec<f64> = (0..6).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let a = 2;
    let g = policy.score_grad(&x, a).expect("valid");
    let mut fd = Tally::new("neural.score_finite_difference", 1e-4);
    let h = 1e-4;
    for _ in 0..MLP_FD_COORDS {
        let i = r.random_range(0..dims.num_params());
        let mut up = policy.clone();
        let mut dn = policy.clone();
        up.params_mut()[i] += h;
        dn.params_mut()[i] -= h;
        let d = (up.log_prob(&x, a) - dn.log_prob(&x, a)) / (2.0 * h);
        // relative error with an absolute floor for coordinates whose gradient is ~0
        fd.see((d - g[i]).abs() / g[i].abs().max(1e-3));
    }
    let probs = policy.forward(&x).expect("valid").probs;
    let mut acc = vec![0.0; dims.num_params()];
    for (b, p) in probs.iter().enumerate() {
        axpy(*p, &policy.score_grad(&x, b).expect("valid"), &mut acc);
    }
    let mut id = Tally::new("neural.score_identity", 1e-8);
    id.see(vecops::norm(&acc));
    [fd.done(None), id.done(None)]
}

fn continuous_clip(o: &VerifyOptions) -> CheckResult {
    let mut t = Tally::new("continuous.logdensity_clip", 1e-15);
    let params = GateParams::default();
    let c = params.logdensity_clip;
    for ld in [-1e6, -50.0, 50.0, 1e6] {
        let term = gate::gate_continuous(1.0, ld, params).expect("finite");
        let clipped = (-ld).clamp(-c, c);
        t.see((term.surprisal - clipped).abs());
        t.see((term.gate - o.gate(clipped, params.eta)).abs());
    }
    // a sharply peaked density closes the gate on a success
    let policy = GaussianPolicy::new(vec![0.0], vec![-20.0]).expect("valid");
    t.require(policy.log_density(&[0.0]) > c);
    t.done(None)
}

fn pg_mean_matches_oracle() -> CheckResult {
    let mut t = Tally::new("tabular.pg_mean_is_objective_gradient", 1e-12);
    let mut r = rng(8);
    for _ in 0..20 {
        let p = random_policy(8, 1.0, &mut r);
        let y = r.random_range(0..8);
        let g = expected_gradient_for(&p, y, 0.3, EstimatorKind::Pg, GateParams::default()).expect("valid");
        let mut want = score(&p, y).expect("valid");
        vecops::scale(p.prob(y), &mut want);
        t.see(max_abs_diff(&g, &want));
    }
    t.done(None)
}

/// Runs every check.
pub fn run_all(opts: &VerifyOptions) -> Report {
    let mut checks = vec![gate_antisymmetry(opts)];
    checks.extend(gate_limits(opts));
    checks.push(gate_potential(opts));
    checks.push(gate_optimality(opts));
    checks.push(score_identity());
    checks.push(symmetry_lemma());
    checks.extend(symmetric_geometry(opts));
    checks.push(pg_mean_matches_oracle());
    checks.extend(gap_ratios(opts));
    checks.push(tail_bounds());
    checks.push(score_fd());
    checks.push(empirical_gap(opts));
    checks.push(quadratic());
    checks.extend(greedy());
    checks.push(two_context());
    checks.push(path());
    checks.extend(h_monotone());
    checks.push(h_closed_form());
    checks.extend(mlp_checks());
    checks.push(continuous_clip(opts));
    Report { checks }
}
