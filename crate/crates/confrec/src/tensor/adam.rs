//! Adam optimizer state for a single parameter tensor.

use super::Tensor;

/// First/second moment estimates with bias correction. One instance per
/// parameter tensor; the step count is tracked per tensor so sparse updates
/// stay well-scaled.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(numel: usize) -> Self {
        AdamState {
            m: vec![0.0; numel],
            v: vec![0.0; numel],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Apply one update in place: `param -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, param: &mut Tensor, grad: &[f64], lr: f32) {
        assert_eq!(
            param.numel(),
            grad.len(),
            "adam: param has {} elements, grad {}",
            param.numel(),
            grad.len()
        );
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let data = param.data_mut();
        for j in 0..grad.len() {
            let g = grad[j];
            self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * g;
            self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[j] / bc1;
            let v_hat = self.v[j] / bc2;
            data[j] -= (lr as f64 * m_hat / (v_hat.sqrt() + self.eps)) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut p = Tensor::from_vec(vec![0.3, -0.7]);
        let mut st = AdamState::new(2);
        st.step(&mut p, &[0.0, 0.0], 0.1);
        assert_eq!(p.data(), &[0.3, -0.7]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction, m_hat = g and v_hat = g^2 on step one, so the
        // update is lr * g / (|g| + eps) = lr * sign(g).
        let mut p = Tensor::from_vec(vec![1.0]);
        let mut st = AdamState::new(1);
        st.step(&mut p, &[1.0], 0.1);
        assert!((p.data()[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut p = Tensor::from_vec(vec![2.0]);
        let mut st = AdamState::new(1);
        let mut last = f32::INFINITY;
        for _ in 0..200 {
            let x = p.data()[0];
            let loss = x * x;
            assert!(loss <= last + 1e-3);
            last = loss;
            st.step(&mut p, &[2.0 * x as f64], 0.05);
        }
        assert!(p.data()[0].abs() < 0.1);
    }
}
