use crate::error::{invalid, Result};

/// Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(invalid("lr", format!("learning rate must be >= 0, got {lr}")));
        }
        Ok(Self {
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        })
    }

    /// One bias-corrected step that *increases* the objective whose gradient
    /// is `grad`.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
            let m = self.first[i] / c1;
            let v = self.second[i] / c2;
            params[i] += self.lr * m / (v.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new(2, 0.01).unwrap();
        let mut p = vec![0.0, 0.0];
        s.ascend(&mut p, &[3.0, -0.5]);
        // bias correction makes the first step lr * sign(g)
        assert_abs_diff_eq!(p[0], 0.01, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], -0.01, epsilon = 1e-9);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn climbs_a_concave_quadratic() {
        let mut s = AdamState::new(1, 0.05).unwrap();
        let mut p = vec![3.0];
        for _ in 0..2000 {
            let g = [-(p[0] - 1.0)];
            s.ascend(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
        assert!(AdamState::new(1, -1.0).is_err());
    }
}
