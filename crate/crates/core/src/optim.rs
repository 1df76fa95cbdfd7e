//! Adam moment estimation and global-norm gradient clipping.

use iarn_tensor::{Array, Real};

use crate::backbone::Param;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    step: u64,
    m: Vec<Array<T>>,
    v: Vec<Array<T>>,
}

impl<T: Real> Adam<T> {
    /// Zeroed moment buffers shaped like `params`.
    pub fn new(params: &[Param<T>]) -> Self {
        let zeros = || params.iter().map(|p| Array::zeros(p.value.shape().to_vec())).collect();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Array<T>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if g.shape() != p.value.shape() {
                return Err(Error::Shape(format!(
                    "gradient for {} has shape {:?}, expected {:?}",
                    p.name,
                    g.shape(),
                    p.value.shape()
                )));
            }
            let pd = p.value.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i].as_f64();
                let mi = BETA1 * md[i].as_f64() + (1.0 - BETA1) * gi;
                let vi = BETA2 * vd[i].as_f64() + (1.0 - BETA2) * gi * gi;
                md[i] = T::of(mi);
                vd[i] = T::of(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + EPSILON);
                pd[i] = T::of(pd[i].as_f64() - update);
            }
        }
        Ok(())
    }
}

/// L2 norm over every gradient element.
pub fn global_norm<T: Real>(grads: &[Array<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| {
            let x = v.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the norm before clipping.
/// A `max_norm` of zero disables clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Array<T>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let factor = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v = T::of(v.as_f64() * factor);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: &[f64]) -> Param<f64> {
        Param {
            name: "w".into(),
            value: Array::new([v.len()], v.to_vec()).unwrap(),
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = vec![param(&[1.0, -2.0])];
        let mut opt = Adam::new(&params);
        let g = vec![Array::new([2], vec![0.5, -3.0]).unwrap()];
        opt.step(&mut params, &g, 0.1).unwrap();
        let d = params[0].value.data();
        assert!((d[0] - 0.9).abs() < 1e-6, "{}", d[0]);
        assert!((d[1] + 1.9).abs() < 1e-6, "{}", d[1]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut params = vec![param(&[3.0])];
        let mut opt = Adam::new(&params);
        for _ in 0..2000 {
            let x = params[0].value.data()[0];
            opt.step(&mut params, &[Array::new([1], vec![2.0 * (x - 1.0)]).unwrap()], 0.01)
                .unwrap();
        }
        assert!((params[0].value.data()[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![Array::new([2], vec![3.0f64, 4.0]).unwrap()];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
        let mut small = vec![Array::new([1], vec![0.5f64]).unwrap()];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.5]);
    }

    #[test]
    fn mismatched_gradients_are_rejected() {
        let mut params = vec![param(&[1.0])];
        let mut opt = Adam::new(&params);
        assert!(opt.step(&mut params, &[], 0.1).is_err());
    }
}
