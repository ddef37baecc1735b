use alloc::vec;
use alloc::vec::Vec;

/// Adaptive-moment optimizer. Sparse updates keep a per-parameter step count
/// so that parameters untouched by a step do not see their moments decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: Vec<u32>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    fn update(&mut self, x: &mut f64, i: usize, g: f64) {
        self.steps[i] += 1;
        let t = self.steps[i] as i32;
        self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
        self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
        let mh = self.m[i] / (1.0 - libm::pow(self.beta1, t as f64));
        let vh = self.v[i] / (1.0 - libm::pow(self.beta2, t as f64));
        *x -= self.lr * mh / (libm::sqrt(vh) + self.eps);
    }

    pub fn step_dense(&mut self, x: &mut [f64], grad: &[f64]) {
        assert_eq!(x.len(), self.len());
        assert_eq!(grad.len(), self.len());
        for (i, g) in grad.iter().enumerate() {
            self.update(&mut x[i], i, *g);
        }
    }

    /// Update only the listed parameters.
    pub fn step_sparse(&mut self, x: &mut [f64], indices: &[usize], grad: &[f64]) {
        assert_eq!(indices.len(), grad.len());
        for (&i, g) in indices.iter().zip(grad) {
            self.update(&mut x[i], i, *g);
        }
    }
}
