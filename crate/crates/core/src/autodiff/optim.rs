use crate::autodiff::ParamStore;
use crate::error::{Error, Result};

/// Adam optimizer state: one first/second-moment slot per parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Apply one update using the gradients stored on each parameter. A
    /// parameter without a gradient is treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        let tensors = params.tensors_mut();
        if self.m.is_empty() {
            self.m = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != tensors.len() {
            return Err(Error::ShapeMismatch {
                op: "adam",
                lhs: vec![self.m.len()],
                rhs: vec![tensors.len()],
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((t, m), v) in tensors.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.len() != t.len() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: vec![m.len()],
                    rhs: t.shape().to_vec(),
                });
            }
            let grad = t.grad().map(<[f64]>::to_vec);
            let data = t.data_mut();
            for j in 0..data.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[j]);
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                data[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, Tensor};

    fn single(w: f64) -> (ParamStore, crate::autodiff::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::vector(vec![w]));
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let (mut s, id) = single(1.5);
        s.get_mut(id).accumulate_grad(&[0.0]).unwrap();
        let mut opt = Adam::new(0.1);
        opt.step(&mut s).unwrap();
        assert_eq!(s.get(id).data(), &[1.5]);
    }

    #[test]
    fn constant_gradient_descends() {
        let (mut s, id) = single(0.0);
        let mut opt = Adam::new(0.01);
        for _ in 0..50 {
            s.zero_grads();
            s.get_mut(id).accumulate_grad(&[2.0]).unwrap();
            opt.step(&mut s).unwrap();
        }
        assert!(s.get(id).data()[0] < 0.0);
    }

    #[test]
    fn one_step_on_square_shrinks() {
        // f(w) = w², w = 1: g = 2, m̂ = 2, v̂ = 4, step = lr·2/(2+ε) ≈ 0.1
        let (mut s, id) = single(1.0);
        let g = Graph::new();
        let w = s.bind(&g, id);
        let loss = g.sum(g.mul(w, w).unwrap());
        g.backward(loss).unwrap();
        s.absorb(&g).unwrap();
        let mut opt = Adam::new(0.1);
        opt.step(&mut s).unwrap();
        let w1 = s.get(id).data()[0];
        let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((w1 - expected).abs() < 1e-12);
        assert!(w1.abs() < 1.0);
    }
}
