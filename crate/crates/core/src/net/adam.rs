use crate::error::{check_dim, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_dim(self.m.len(), params.len(), "adam parameters")?;
        check_dim(self.m.len(), grads.len(), "adam gradients")?;
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(3, 1e-3);
        let mut p = vec![0.0, 1.0, -1.0];
        adam.update(&mut p, &[2.0, -0.5, 1e-2]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1.0 - 1e-3).abs() < 1e-9);
        assert!((p[2] + 1.0 + 1e-3).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut adam = AdamState::new(2, 0.1);
        let mut p = vec![0.3, -0.7];
        for _ in 0..5 {
            adam.update(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, vec![0.3, -0.7]);
    }

    #[test]
    fn quadratic_decreases_monotonically() {
        let mut adam = AdamState::new(2, 1e-3);
        let mut p = vec![1.0, 1.0];
        let f = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>();
        let mut values = vec![f(&p)];
        for _ in 0..200 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            adam.update(&mut p, &g).unwrap();
            values.push(f(&p));
        }
        for w in values[5..].windows(2) {
            assert!(w[1] < w[0]);
        }
    }
}
