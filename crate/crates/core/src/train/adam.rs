use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First/second moment buffers, one per parameter tensor, and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &[&Tensor<T>]) -> Self {
        let zeros = |p: &&Tensor<T>| vec![T::zero(); p.len()];
        Self {
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            t: 0,
        }
    }
}

impl Adam {
    /// One bias-corrected update: `θ ← θ − lr·m̂/(√v̂ + eps)`.
    pub fn step<T: Scalar>(
        &self,
        params: &mut [&mut Tensor<T>],
        grads: &[Vec<T>],
        state: &mut OptimizerState<T>,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != state.m.len() {
            return Err(Error::Contract(format!(
                "adam: {} parameters, {} gradients, {} moment buffers",
                params.len(),
                grads.len(),
                state.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || state.m[i].len() != g.len() {
                return Err(Error::Contract(format!(
                    "adam: parameter {i} has {} values but gradient has {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        state.t += 1;
        let t = state.t as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        let one = T::one();
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut state.m[i], &mut state.v[i]);
            for (k, theta) in p.data_mut().iter_mut().enumerate() {
                m[k] = b1 * m[k] + (one - b1) * g[k];
                v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADAM: Adam = Adam {
        lr: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Tensor::<f64>::from_f64(vec![3], &[1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut state = OptimizerState::new(&[&p]);
        ADAM.step(&mut [&mut p], &[vec![0.0; 3]], &mut state).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        // after one step m̂ = g and v̂ = g², so Δθ = −lr·g/(|g| + eps)
        let g = [0.5, -3.0, 1e-4];
        let mut p = Tensor::<f64>::zeros(vec![3]);
        let mut state = OptimizerState::new(&[&p]);
        ADAM.step(&mut [&mut p], &[g.to_vec()], &mut state).unwrap();
        for (theta, gk) in p.data().iter().zip(g) {
            let expect = -1e-3 * gk / (gk.abs() + 1e-8);
            assert!((theta - expect).abs() < 1e-15, "{theta} vs {expect}");
        }
        assert!((p.data()[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn descends_a_quadratic() {
        // f(θ) = (θ − 3)², simulated alongside in plain scalars
        let mut p = Tensor::<f64>::from_f64(vec![1], &[0.0]).unwrap();
        let mut state = OptimizerState::new(&[&p]);
        let f = |x: f64| (x - 3.0) * (x - 3.0);
        let mut last = f(0.0);
        for _ in 0..2 {
            let x = p.data()[0];
            ADAM.step(&mut [&mut p], &[vec![2.0 * (x - 3.0)]], &mut state).unwrap();
            let now = f(p.data()[0]);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut p = Tensor::<f32>::zeros(vec![2]);
        let mut state = OptimizerState::new(&[&p]);
        assert!(ADAM.step(&mut [&mut p], &[vec![0.0; 3]], &mut state).is_err());
    }
}
