//! Adam over flat parameter slices, shared by every trained model here.

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8) with L2 weight decay
/// folded into the gradient. Moment buffers are keyed by tensor position, so
/// callers must pass tensors in the same order every step.
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(tensor_sizes: &[usize], lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            weight_decay,
            t: 0,
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(
            params.len(),
            self.m.len(),
            "tensor count changed between steps"
        );
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        for (ti, p) in params.iter_mut().enumerate() {
            let g = grads[ti];
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            for i in 0..p.len() {
                let gi = g[i] + self.weight_decay * p[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}
