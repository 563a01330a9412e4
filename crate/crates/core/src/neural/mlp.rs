use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpDims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl MlpDims {
    pub fn num_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.classes * self.hidden + self.classes
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        [w1, b1, w2, b2]
    }
}

/// Two-layer ReLU network with a softmax head.
///
/// Parameters live in one flat vector laid out as `w1 (H x D)`, `b1 (H)`,
/// `w2 (K x H)`, `b2 (K)`, all row-major. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    dims: MlpDims,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl MlpPolicy {
    pub fn zeros(dims: MlpDims) -> Result<Self> {
        if dims.input == 0 || dims.hidden == 0 || dims.classes < 2 {
            return Err(invalid("width", "need D >= 1, H >= 1 and K >= 2"));
        }
        Ok(Self {
            dims,
            params: vec![0.0; dims.num_params()],
        })
    }

    /// He-scaled hidden layer (variance `2/D`), output layer variance `1/H`,
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(dims: MlpDims, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        let [w1, b1, w2, b2] = dims.offsets();
        let s1 = (2.0 / dims.input as f64).sqrt();
        let s2 = (1.0 / dims.hidden as f64).sqrt();
        for v in &mut p.params[w1..b1] {
            *v = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        for v in &mut p.params[w2..b2] {
            *v = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(p)
    }

    pub fn from_params(dims: MlpDims, params: Vec<f64>) -> Result<Self> {
        if params.len() != dims.num_params() {
            return Err(Error::Consistency(format!(
                "expected {} parameters, got {}",
                dims.num_params(),
                params.len()
            )));
        }
        let mut p = Self::zeros(dims)?;
        p.params = params;
        Ok(p)
    }

    pub fn dims(&self) -> MlpDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w1(&self) -> &[f64] {
        let [w1, b1, _, _] = self.dims.offsets();
        &self.params[w1..b1]
    }

    pub fn b1(&self) -> &[f64] {
        let [_, b1, w2, _] = self.dims.offsets();
        &self.params[b1..w2]
    }

    pub fn w2(&self) -> &[f64] {
        let [_, _, w2, b2] = self.dims.offsets();
        &self.params[w2..b2]
    }

    pub fn b2(&self) -> &[f64] {
        let [_, _, _, b2] = self.dims.offsets();
        &self.params[b2..]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        let [_, _, _, b2] = self.dims.offsets();
        &mut self.params[b2..]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Forward> {
        if input.len() != self.dims.input {
            return Err(Error::Consistency(format!(
                "input has dimension {}, network expects {}",
                input.len(),
                self.dims.input
            )));
        }
        let out = self.forward_unchecked(input);
        if out.logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("non-finite logits".into()));
        }
        Ok(out)
    }

    pub(crate) fn forward_unchecked(&self, input: &[f64]) -> Forward {
        let MlpDims {
            input: d,
            hidden: h,
            classes: k,
        } = self.dims;
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        let hidden: Vec<f64> = (0..h)
            .map(|j| (b1[j] + vecops::dot(&w1[j * d..(j + 1) * d], input)).max(0.0))
            .collect();
        let logits: Vec<f64> = (0..k)
            .map(|c| b2[c] + vecops::dot(&w2[c * h..(c + 1) * h], &hidden))
            .collect();
        let probs = vecops::softmax(&logits);
        Forward { hidden, logits, probs }
    }

    /// Accumulates `J^T dlogits` into `grad`, where `J` is the Jacobian of the
    /// logits with respect to the parameters at `input`.
    pub fn backprop_into(&self, input: &[f64], fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let MlpDims {
            input: d,
            hidden: h,
            classes: k,
        } = self.dims;
        let [w1o, b1o, w2o, b2o] = self.dims.offsets();
        let w2 = self.w2();
        let mut dh = vec![0.0; h];
        for c in 0..k {
            let g = dlogits[c];
            if g == 0.0 {
                continue;
            }
            grad[b2o + c] += g;
            let row = &mut grad[w2o + c * h..w2o + (c + 1) * h];
            vecops::axpy(g, &fwd.hidden, row);
            vecops::axpy(g, &w2[c * h..(c + 1) * h], &mut dh);
        }
        for j in 0..h {
            if fwd.hidden[j] <= 0.0 || dh[j] == 0.0 {
                continue;
            }
            grad[b1o + j] += dh[j];
            vecops::axpy(dh[j], input, &mut grad[w1o + j * d..w1o + (j + 1) * d]);
        }
    }

    /// Gradient of `log pi(action | input)` with respect to every parameter.
    pub fn score_grad(&self, input: &[f64], action: usize) -> Result<Vec<f64>> {
        if action >= self.dims.classes {
            return Err(Error::IndexOutOfRange {
                index: action,
                len: self.dims.classes,
            });
        }
        let fwd = self.forward(input)?;
        let mut dl: Vec<f64> = fwd.probs.iter().map(|p| -p).collect();
        dl[action] += 1.0;
        let mut g = vec![0.0; self.dims.num_params()];
        self.backprop_into(input, &fwd, &dl, &mut g);
        Ok(g)
    }

    pub fn log_prob(&self, input: &[f64], action: usize) -> f64 {
        vecops::log_softmax(&self.forward_unchecked(input).logits)[action]
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn small() -> (MlpPolicy, Vec<f64>) {
        let dims = MlpDims {
            input: 5,
            hidden: 4,
            classes: 3,
        };
        let mut rng = SeedStream::new(42, 0).step(0);
        let mut p = MlpPolicy::init(dims, &mut rng).unwrap();
        // non-zero biases so every code path is exercised
        for v in p.params_mut().iter_mut() {
            *v += 0.1 * rng.random::<f64>();
        }
        let x = (0..5).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
        (p, x)
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = MlpPolicy::zeros(MlpDims {
            input: 3,
            hidden: 2,
            classes: 4,
        })
        .unwrap();
        let f = p.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert!(f.probs.iter().all(|q| (q - 0.25).abs() < 1e-15));
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn output_shift_leaves_probs_unchanged() {
        let (mut p, x) = small();
        let before = p.forward(&x).unwrap().probs;
        p.b2_mut().iter_mut().for_each(|b| *b += 7.5);
        let after = p.forward(&x).unwrap().probs;
        for (a, b) in before.iter().zip(&after) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(after.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn output_bias_gradient_is_logit_score() {
        let (p, x) = small();
        let f = p.forward(&x).unwrap();
        let g = p.score_grad(&x, 1).unwrap();
        let b2 = &g[g.len() - 3..];
        for c in 0..3 {
            let want = if c == 1 { 1.0 } else { 0.0 } - f.probs[c];
            assert_abs_diff_eq!(b2[c], want, epsilon = 1e-15);
        }
        assert!(p.score_grad(&x, 3).is_err());
    }

    #[test]
    fn score_identity() {
        let (p, x) = small();
        let f = p.forward(&x).unwrap();
        let mut acc = vec![0.0; p.dims().num_params()];
        for a in 0..3 {
            vecops::axpy(f.probs[a], &p.score_grad(&x, a).unwrap(), &mut acc);
        }
        assert!(acc.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn score_grad_matches_central_differences() {
        let (p, x) = small();
        let a = 2;
        let g = p.score_grad(&x, a).unwrap();
        let h = 1e-4;
        for i in 0..p.dims().num_params() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up.params_mut()[i] += h;
            dn.params_mut()[i] -= h;
            let fd = (up.log_prob(&x, a) - dn.log_prob(&x, a)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-6 + 1e-4 * g[i].abs(),
                "param {i}: fd {fd} vs {}",
                g[i]
            );
        }
    }
}
