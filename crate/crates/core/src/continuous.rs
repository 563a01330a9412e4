//! Diagonal Gaussian policy unit for the continuous-action gate.
//!
//! Surprisal is the negative log-density clipped to `[-C, C]`, so sharply
//! peaked densities can produce negative surprisal and close the gate on
//! positive-advantage samples.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::gate::{Action, EstimatorKind, GateParams, SampleTerm};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

/// Gradient with respect to `(mean, log_std)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrad {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() || mean.is_empty() {
            return Err(invalid(
                "log_std",
                "mean and log_std must be non-empty and equally long",
            ));
        }
        Ok(Self { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, action: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(action)
            .map(|((m, ls), a)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - LN_SQRT_2PI
            })
            .sum()
    }

    /// Gradient of the log-density of `action`. Panics on a dimension mismatch.
    pub fn score(&self, action: &[f64]) -> GaussianGrad {
        assert_eq!(action.len(), self.dim(), "action dimension");
        let (mean, log_std) = action
            .iter()
            .zip(&self.mean)
            .zip(&self.log_std)
            .map(|((a, m), ls)| {
                let sd = ls.exp();
                let z = (a - m) / sd;
                (z / sd, z * z - 1.0)
            })
            .unzip();
        GaussianGrad { mean, log_std }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Sum of gated score terms over a batch of `(action, advantage)` pairs. Every
/// estimator sees the clipped surprisal; ungated estimators ignore it.
pub fn gated_gradient(
    policy: &GaussianPolicy,
    batch: &[(Vec<f64>, f64)],
    estimator: EstimatorKind,
    params: GateParams,
) -> Result<(GaussianGrad, Vec<SampleTerm>)> {
    estimator.validate()?;
    let d = policy.dim();
    let mut total = GaussianGrad {
        mean: vec![0.0; d],
        log_std: vec![0.0; d],
    };
    let mut terms = Vec::with_capacity(batch.len());
    let c = params.logdensity_clip;
    for (action, advantage) in batch {
        if action.len() != d {
            return Err(invalid(
                "action",
                format!("expected dimension {d}, got {}", action.len()),
            ));
        }
        let log_density = policy.log_density(action);
        let surprisal = (-log_density).clamp(-c, c);
        let first = action[0];
        let term = estimator
            .term(*advantage, surprisal, params)?
            .with_action(Action::Continuous(first));
        let s = policy.score(action);
        for i in 0..d {
            total.mean[i] += term.effective_coeff * s.mean[i];
            total.log_std[i] += term.effective_coeff * s.log_std[i];
        }
        terms.push(term);
    }
    Ok((total, terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::sigmoid;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn score_matches_finite_differences() {
        let pol = GaussianPolicy::new(vec![0.3, -1.0], vec![-0.2, 0.4]).unwrap();
        let a = [0.9, -2.2];
        let s = pol.score(&a);
        let h = 1e-6;
        for i in 0..2 {
            let mut up = pol.clone();
            let mut dn = pol.clone();
            up.mean[i] += h;
            dn.mean[i] -= h;
            let fd = (up.log_density(&a) - dn.log_density(&a)) / (2.0 * h);
            assert_abs_diff_eq!(fd, s.mean[i], epsilon = 1e-7);
            let mut up = pol.clone();
            let mut dn = pol.clone();
            up.log_std[i] += h;
            dn.log_std[i] -= h;
            let fd = (up.log_density(&a) - dn.log_density(&a)) / (2.0 * h);
            assert_abs_diff_eq!(fd, s.log_std[i], epsilon = 1e-7);
        }
    }

    #[test]
    fn peaked_density_closes_gate_on_success() {
        // log_std = -8 gives log-density ~ 7.08 at the mean, so surprisal is negative.
        let pol = GaussianPolicy::new(vec![0.0], vec![-8.0]).unwrap();
        let (_, terms) = gated_gradient(&pol, &[(vec![0.0], 1.0)], EstimatorKind::Dg, GateParams::default()).unwrap();
        let t = terms[0];
        assert!(t.surprisal < 0.0);
        assert!(t.gate < 0.5);
        assert_abs_diff_eq!(t.gate, sigmoid(t.surprisal), epsilon = 1e-15);

        // a far-tail sample hits the clip
        let pol = GaussianPolicy::new(vec![0.0], vec![0.0]).unwrap();
        let (_, terms) = gated_gradient(&pol, &[(vec![8.0], 1.0)], EstimatorKind::Dg, GateParams::default()).unwrap();
        assert_eq!(terms[0].surprisal, 10.0);
    }

    #[test]
    fn gated_mean_update_moves_toward_rewarded_actions() {
        let pol = GaussianPolicy::new(vec![0.0], vec![0.0]).unwrap();
        let target = 1.5;
        let mut rng = SeedStream::new(3, 0).step(0);
        let batch: Vec<(Vec<f64>, f64)> = (0..2000)
            .map(|_| {
                let a = pol.sample(&mut rng);
                let r = -(a[0] - target).powi(2);
                (a, r)
            })
            .collect();
        let mean_r = batch.iter().map(|b| b.1).sum::<f64>() / batch.len() as f64;
        let centred: Vec<_> = batch.into_iter().map(|(a, r)| (a, r - mean_r)).collect();
        for est in [EstimatorKind::Pg, EstimatorKind::Dg] {
            let (g, _) = gated_gradient(&pol, &centred, est, GateParams::default()).unwrap();
            assert!(g.mean[0] > 0.0, "{est}: {:?}", g.mean);
        }
        let (_, terms) = gated_gradient(&pol, &centred, EstimatorKind::Pg, GateParams::default()).unwrap();
        assert!(terms.iter().all(|t| t.gate == 1.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let pol = GaussianPolicy::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(gated_gradient(&pol, &[(vec![1.0], 1.0)], EstimatorKind::Dg, GateParams::default()).is_err());
        assert!(GaussianPolicy::new(vec![0.0], vec![]).is_err());
    }
}
