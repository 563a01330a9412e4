use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AdamState, MlpDims, MlpPolicy};
use crate::data::{Dataset, Split};
use crate::error::{invalid, Error, Result};
use crate::gate::{surprisal_unchecked, EstimatorKind, GateParams};
use crate::par::map_seeds;
use crate::rng::{SeedStream, TAG_INIT};
use crate::tabular::{cdf, draw};
use crate::vecops;

/// Per-input reward baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    Zero,
    /// `0.5`.
    Constant,
    /// `sum_a pi(a|x)^2`, the policy's own estimate of its success rate.
    Expected,
    /// `max_a pi(a|x)`; alternate reading of the self-estimated baseline.
    ExpectedMax,
    /// `pi(y|x)` using the true label.
    Oracle,
}

impl BaselineKind {
    pub fn uses_label(&self) -> bool {
        matches!(self, BaselineKind::Oracle)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Zero => "zero",
            BaselineKind::Constant => "constant",
            BaselineKind::Expected => "expected",
            BaselineKind::ExpectedMax => "expected-max",
            BaselineKind::Oracle => "oracle",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "zero" => BaselineKind::Zero,
            "constant" => BaselineKind::Constant,
            "expected" => BaselineKind::Expected,
            "expected-max" => BaselineKind::ExpectedMax,
            "oracle" => BaselineKind::Oracle,
            other => return Err(invalid("baseline", format!("unknown baseline `{other}`"))),
        })
    }
}

pub fn compute_baseline(kind: BaselineKind, probs: &[f64], label: Option<usize>) -> Result<f64> {
    Ok(match kind {
        BaselineKind::Zero => 0.0,
        BaselineKind::Constant => 0.5,
        BaselineKind::Expected => vecops::norm_sq(probs),
        BaselineKind::ExpectedMax => probs.iter().copied().fold(0.0, f64::max),
        BaselineKind::Oracle => {
            let y = label.ok_or_else(|| invalid("baseline", "oracle baseline needs the label"))?;
            *probs.get(y).ok_or(Error::IndexOutOfRange {
                index: y,
                len: probs.len(),
            })?
        }
    })
}

/// What a training run follows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Arm {
    /// Sampled bandit feedback weighted by an estimator.
    Estimator(EstimatorKind),
    /// Supervised cross-entropy, i.e. `g_ce` on the batch.
    CrossEntropy,
    /// Exact expected policy gradient `g_pg` on the batch (no action sampling).
    PgOracle,
}

impl Arm {
    pub fn validate(&self) -> Result<()> {
        match self {
            Arm::Estimator(k) => k.validate(),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::Estimator(k) => k.fmt(f),
            Arm::CrossEntropy => f.write_str("ce"),
            Arm::PgOracle => f.write_str("pg-oracle"),
        }
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ce" => Ok(Arm::CrossEntropy),
            "pg-oracle" | "oracle" => Ok(Arm::PgOracle),
            _ => s.parse().map(Arm::Estimator),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub hidden: usize,
    pub batch: usize,
    pub samples_per_input: usize,
    pub lr: f64,
    pub steps: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub gate: GateParams,
    pub baseline: BaselineKind,
    /// Validation error is measured every this many steps and at the last step.
    pub eval_every: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            batch: 100,
            samples_per_input: 1,
            lr: 1e-3,
            steps: 2000,
            seeds: 10,
            base_seed: 0,
            gate: GateParams::default(),
            baseline: BaselineKind::Expected,
            eval_every: 100,
        }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("width", self.hidden),
            ("batch", self.batch),
            ("samples_per_input", self.samples_per_input),
            ("steps", self.steps),
            ("seeds", self.seeds),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr", format!("learning rate must be >= 0, got {}", self.lr)));
        }
        self.gate.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentRecord {
    pub step: u64,
    /// `1 - cos(update, g_pg)`.
    pub miss_pg_oracle: f64,
    /// `1 - cos(update, g_ce)`.
    pub miss_ce_oracle: f64,
    /// Argmax error on this step's batch, before the update.
    pub train_error: f64,
    /// Error on the validation split after the update, on evaluation steps only.
    pub val_error: Option<f64>,
}

struct BatchGradients {
    update: Vec<f64>,
    g_pg: Vec<f64>,
    g_ce: Vec<f64>,
    errors: usize,
}

fn accumulate<R: Rng + ?Sized>(
    policy: &MlpPolicy,
    batch: &[(&[f64], usize)],
    arm: Arm,
    baseline: BaselineKind,
    samples: usize,
    gate: GateParams,
    rng: &mut R,
) -> Result<BatchGradients> {
    let k = policy.dims().classes;
    let n = policy.dims().num_params();
    let mut out = BatchGradients {
        update: vec![0.0; n],
        g_pg: vec![0.0; n],
        g_ce: vec![0.0; n],
        errors: 0,
    };
    let mut counts = vec![0usize; k];
    let mut dl = vec![0.0; k];
    for &(x, y) in batch {
        if y >= k {
            return Err(Error::IndexOutOfRange { index: y, len: k });
        }
        let f = policy.forward(x)?;
        let pi = &f.probs;
        if vecops::argmax(pi) != y {
            out.errors += 1;
        }

        // g_ce term: e_y - pi; g_pg term: pi(y) (e_y - pi)
        dl.iter_mut().zip(pi).for_each(|(d, p)| *d = -p);
        dl[y] += 1.0;
        policy.backprop_into(x, &f, &dl, &mut out.g_ce);
        let py = pi[y];
        dl.iter_mut().for_each(|d| *d *= py);
        policy.backprop_into(x, &f, &dl, &mut out.g_pg);

        match arm {
            Arm::CrossEntropy | Arm::PgOracle => continue,
            Arm::Estimator(kind) => {
                let b = compute_baseline(baseline, pi, Some(y))?;
                let c = cdf(pi);
                counts.iter_mut().for_each(|m| *m = 0);
                for _ in 0..samples {
                    counts[draw(&c, rng)] += 1;
                }
                // sum_a counts[a] * omega(a) * (e_a - pi) / S
                let mut total = 0.0;
                dl.iter_mut().for_each(|d| *d = 0.0);
                for a in 0..k {
                    if counts[a] == 0 {
                        continue;
                    }
                    let u = if a == y { 1.0 } else { 0.0 } - b;
                    let w = counts[a] as f64 * kind.coeff(u, surprisal_unchecked(pi[a]), gate.eta);
                    dl[a] += w;
                    total += w;
                }
                let inv_s = 1.0 / samples as f64;
                for a in 0..k {
                    dl[a] = (dl[a] - total * pi[a]) * inv_s;
                }
                let alpha = kind.entropy_coeff();
                if alpha > 0.0 {
                    let logp: Vec<f64> = pi.iter().map(|p| p.max(1e-300).ln()).collect();
                    let h = -vecops::dot(pi, &logp);
                    for a in 0..k {
                        dl[a] -= alpha * pi[a] * (logp[a] + h);
                    }
                }
                if dl.iter().any(|d| *d != 0.0) {
                    policy.backprop_into(x, &f, &dl, &mut out.update);
                }
            }
        }
    }
    let inv_b = 1.0 / batch.len() as f64;
    vecops::scale(inv_b, &mut out.g_pg);
    vecops::scale(inv_b, &mut out.g_ce);
    match arm {
        Arm::CrossEntropy => out.update.clone_from(&out.g_ce),
        Arm::PgOracle => out.update.clone_from(&out.g_pg),
        Arm::Estimator(_) => vecops::scale(inv_b, &mut out.update),
    }
    Ok(out)
}

/// One training step on `batch`. Misalignments are measured on the raw
/// gradient, before the Adam transform.
#[allow(clippy::too_many_arguments)]
pub fn batch_update<R: Rng + ?Sized>(
    policy: &mut MlpPolicy,
    batch: &[(&[f64], usize)],
    arm: Arm,
    baseline: BaselineKind,
    samples_per_input: usize,
    gate: GateParams,
    adam: &mut AdamState,
    rng: &mut R,
) -> Result<MisalignmentRecord> {
    if batch.is_empty() {
        return Err(invalid("batch", "must be nonempty"));
    }
    if samples_per_input == 0 {
        return Err(invalid("samples_per_input", "must be at least 1"));
    }
    arm.validate()?;
    let g = accumulate(policy, batch, arm, baseline, samples_per_input, gate, rng)?;
    let rec = MisalignmentRecord {
        step: adam.step + 1,
        miss_pg_oracle: vecops::misalignment(&g.update, &g.g_pg),
        miss_ce_oracle: vecops::misalignment(&g.update, &g.g_ce),
        train_error: g.errors as f64 / batch.len() as f64,
        val_error: None,
    };
    adam.ascend(policy.params_mut(), &g.update);
    Ok(rec)
}

/// Argmax error over a whole split.
pub fn split_error(policy: &MlpPolicy, split: Split<'_>) -> f64 {
    if split.is_empty() {
        return 0.0;
    }
    let wrong = (0..split.len())
        .filter(|&i| vecops::argmax(&policy.forward_unchecked(split.input(i)).logits) != split.labels[i])
        .count();
    wrong as f64 / split.len() as f64
}

/// One seed's classification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyTrace {
    pub seed: u64,
    pub records: Vec<MisalignmentRecord>,
    /// Argmax error over the full training split after the last step.
    pub final_train_error: f64,
    pub final_val_error: f64,
}

pub fn run_classification_seed(
    cfg: &ClassifyConfig,
    arm: Arm,
    dataset: &Dataset,
    seed_index: usize,
) -> Result<ClassifyTrace> {
    let dims = MlpDims {
        input: dataset.dim(),
        hidden: cfg.hidden,
        classes: dataset.num_classes(),
    };
    let stream = SeedStream::new(cfg.base_seed, seed_index as u64);
    let mut policy = MlpPolicy::init(dims, &mut stream.tagged(TAG_INIT))?;
    let mut adam = AdamState::new(dims.num_params(), cfg.lr)?;
    let train = dataset.train();
    let val = dataset.validation();
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rng = stream.step(step as u64);
        let idx = train.sample_indices(cfg.batch, &mut rng);
        let batch: Vec<(&[f64], usize)> = idx.iter().map(|&i| (train.input(i), train.labels[i])).collect();
        let mut rec = batch_update(
            &mut policy,
            &batch,
            arm,
            cfg.baseline,
            cfg.samples_per_input,
            cfg.gate,
            &mut adam,
            &mut rng,
        )?;
        let t = step + 1;
        if t % cfg.eval_every == 0 || t == cfg.steps {
            rec.val_error = Some(split_error(&policy, val));
        }
        records.push(rec);
    }
    let final_val_error = records.last().and_then(|r| r.val_error).unwrap_or(f64::NAN);
    Ok(ClassifyTrace {
        seed: seed_index as u64,
        records,
        final_train_error: split_error(&policy, train),
        final_val_error,
    })
}

/// Trains every seed of `arm` on `dataset`. All arms share the initial network
/// and batch indices for a given seed.
pub fn run_classification_experiment(cfg: &ClassifyConfig, arm: Arm, dataset: &Dataset) -> Result<Vec<ClassifyTrace>> {
    cfg.validate()?;
    arm.validate()?;
    if dataset.num_classes() < 2 {
        return Err(Error::Consistency("dataset needs at least two classes".into()));
    }
    map_seeds(cfg.seeds, |s| run_classification_seed(cfg, arm, dataset, s))
        .into_iter()
        .collect()
}

/// Follows the exact expected policy gradient on each batch; the error floor
/// that sampled PG approaches as `S` grows.
pub fn oracle_floor_arm(cfg: &ClassifyConfig, dataset: &Dataset) -> Result<Vec<ClassifyTrace>> {
    run_classification_experiment(cfg, Arm::PgOracle, dataset)
}
