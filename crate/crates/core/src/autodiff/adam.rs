//! Adam with bias correction.

use super::params::ParamStore;
use super::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = |p: &super::params::Param| Tensor::zeros(p.value.rows(), p.value.cols());
        AdamState {
            m: store.iter().map(zeros).collect(),
            v: store.iter().map(zeros).collect(),
            t: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.v[i]
    }

    /// One update from the gradients currently held in `store`, which are
    /// zeroed afterwards.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        assert_eq!(store.len(), self.m.len(), "optimizer/parameter mismatch");
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let w = p.value.data_mut();
            for (((w, &g), m), v) in w
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.grad.fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_leaves_params() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(&[1.0, -2.0]));
        let mut adam = AdamState::new(&store);
        for _ in 0..5 {
            adam.step(&mut store, 0.1);
        }
        assert_eq!(store.value(store.id("w").unwrap()).data(), &[1.0, -2.0]);
        assert_eq!(adam.first_moment(0).data(), &[0.0, 0.0]);
        assert_eq!(adam.second_moment(0).data(), &[0.0, 0.0]);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn first_step_hand_evaluated() {
        // t=1: m_hat = g, v_hat = g^2 -> w = -lr * g / (|g| + eps)
        let mut store = ParamStore::new();
        let id = store.insert("w", Tensor::scalar(0.0));
        store.get_mut(id).grad = Tensor::scalar(1.0);
        let mut adam = AdamState::new(&store);
        adam.step(&mut store, 0.1);
        let w = store.value(id).item();
        assert!((w - (-0.1 / (1.0 + 1e-8))).abs() < 1e-16);
        assert_eq!(store.grad(id).item(), 0.0);
    }

    #[test]
    fn twins_stay_identical() {
        let mut store = ParamStore::new();
        let a = store.insert("a", Tensor::scalar(0.3));
        let b = store.insert("b", Tensor::scalar(0.3));
        let mut adam = AdamState::new(&store);
        for k in 0..50 {
            let g = ((k * 7 % 13) as f64 - 6.0) * 0.1;
            store.get_mut(a).grad = Tensor::scalar(g);
            store.get_mut(b).grad = Tensor::scalar(g);
            adam.step(&mut store, 0.01);
        }
        assert_eq!(store.value(a), store.value(b));
    }
}
