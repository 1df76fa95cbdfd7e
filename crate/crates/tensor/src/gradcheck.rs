//! Central finite differences against the reverse sweep.

use std::sync::Arc;

use crate::conv::{conv2d, conv2d_multi, ConvSpec};
use crate::ops::concat_channels;
use crate::separable::{resample, AxisMap};
use crate::{Array, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    /// Largest relative error over all checked coordinates.
    pub worst: f64,
    pub within: usize,
    pub total: usize,
}

impl GradReport {
    pub fn fraction_within(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.within as f64 / self.total as f64
        }
    }

    pub fn merge(self, other: GradReport) -> GradReport {
        GradReport {
            worst: self.worst.max(other.worst),
            within: self.within + other.within,
            total: self.total + other.total,
        }
    }
}

/// `|a - n| / max(|a|, |n|, 1e-2)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

/// Deterministic stream of values in `+-[0.1, 1)`, clear of the kinks of
/// `abs` and leaky ReLU.
#[derive(Debug, Clone)]
pub struct Probe(u64);

impl Probe {
    pub fn new(seed: u64) -> Self {
        Probe(seed)
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_value(&mut self) -> f64 {
        let bits = self.next_u64();
        let mag = 0.1 + 0.9 * ((bits >> 11) as f64 / (1u64 << 53) as f64);
        if bits & 1 == 0 {
            mag
        } else {
            -mag
        }
    }

    pub fn array<T: Real>(&mut self, shape: &[usize]) -> Array<T> {
        Array::from_fn(shape.to_vec(), |_| T::of(self.next_value()))
    }
}

/// Compares the gradient of `sum(probe * f(inputs))` with respect to every
/// input coordinate against a central difference with step `eps`.
pub fn check<T: Real>(
    inputs: &[Array<T>],
    eps: f64,
    tol: f64,
    seed: u64,
    f: impl Fn(&[Tensor<T>]) -> crate::Result<Tensor<T>>,
) -> crate::Result<GradReport> {
    check_against(inputs, eps, tol, seed, &f, &f)
}

/// Like [`check`], but the central differences evaluate `reference` on
/// inputs cast to `U` while the reverse sweep runs `f` in `T`.
pub fn check_against<T: Real, U: Real>(
    inputs: &[Array<T>],
    eps: f64,
    tol: f64,
    seed: u64,
    f: impl Fn(&[Tensor<T>]) -> crate::Result<Tensor<T>>,
    reference: impl Fn(&[Tensor<U>]) -> crate::Result<Tensor<U>>,
) -> crate::Result<GradReport> {
    let wide: Vec<Array<U>> = inputs.iter().map(Array::cast).collect();
    let consts: Vec<Tensor<U>> = wide.iter().cloned().map(Tensor::constant).collect();
    let probe = Probe::new(seed).array::<U>(reference(&consts)?.shape());
    let objective = |vals: &[Array<U>]| -> crate::Result<f64> {
        let consts: Vec<Tensor<U>> = vals.iter().cloned().map(Tensor::constant).collect();
        let out = reference(&consts)?;
        Ok(out.data().iter().zip(probe.data()).map(|(a, b)| a.as_f64() * b.as_f64()).sum())
    };

    let params: Vec<Tensor<T>> = inputs.iter().cloned().map(Tensor::parameter).collect();
    f(&params)?.mul(&Tensor::constant(probe.cast::<T>()))?.sum().backward()?;

    let mut report = GradReport {
        worst: 0.0,
        within: 0,
        total: 0,
    };
    let mut shifted = wide.clone();
    for (k, p) in params.iter().enumerate() {
        let analytic = p.take_grad().unwrap_or_else(|| Array::zeros(p.shape().to_vec()));
        for i in 0..wide[k].numel() {
            let orig = wide[k].data()[i];
            shifted[k].data_mut()[i] = orig + U::of(eps);
            let plus = objective(&shifted)?;
            shifted[k].data_mut()[i] = orig - U::of(eps);
            let minus = objective(&shifted)?;
            shifted[k].data_mut()[i] = orig;
            let e = relative_error(analytic.data()[i].as_f64(), (plus - minus) / (2.0 * eps));
            report.worst = report.worst.max(e);
            report.total += 1;
            if e <= tol {
                report.within += 1;
            }
        }
    }
    Ok(report)
}

type UnaryFn<T> = fn(&Tensor<T>) -> Tensor<T>;
type BinaryFn<T> = fn(&Tensor<T>, &Tensor<T>) -> crate::Result<Tensor<T>>;

/// Checks every differentiable operation on small fixed-seed inputs.
pub fn op_suite<T: Real>(eps: f64, tol: f64) -> crate::Result<Vec<(String, GradReport)>> {
    let mut gen = Probe::new(11);
    let mut out = Vec::new();
    let shape = [2, 3, 4];
    let unary: [(&str, UnaryFn<T>); 10] = [
        ("neg", |x| x.neg()),
        ("exp", |x| x.exp()),
        ("sigmoid", |x| x.sigmoid()),
        ("leaky_relu", |x| x.leaky_relu(0.2)),
        ("abs", |x| x.abs()),
        ("square", |x| x.square()),
        ("scale", |x| x.scale(-1.7)),
        ("offset", |x| x.offset(0.3)),
        ("sum", |x| x.sum()),
        ("mean", |x| x.mean()),
    ];
    for (i, (name, op)) in unary.into_iter().enumerate() {
        let x = gen.array::<T>(&shape);
        out.push((name.to_string(), check(&[x], eps, tol, i as u64, |v| Ok(op(&v[0])))?));
    }

    let binary: [(&str, BinaryFn<T>); 3] = [
        ("add", |a, b| a.add(b)),
        ("sub", |a, b| a.sub(b)),
        ("mul", |a, b| a.mul(b)),
    ];
    for (name, op) in binary {
        let a = gen.array::<T>(&shape);
        let b = gen.array::<T>(&shape);
        out.push((name.to_string(), check(&[a, b], eps, tol, 3, |v| op(&v[0], &v[1]))?));
        let a = gen.array::<T>(&shape);
        let s = gen.array::<T>(&[]);
        out.push((format!("{name} (scalar)"), check(&[a, s], eps, tol, 4, |v| op(&v[0], &v[1]))?));
    }

    for dilation in 1..=3 {
        let spec = ConvSpec::new(2, 3, dilation)?;
        let x = gen.array::<T>(&[2, 2, 7, 6]);
        let w = gen.array::<T>(&spec.weight_shape());
        let b = gen.array::<T>(&[3]);
        out.push((
            format!("conv2d (dilation {dilation})"),
            check(&[x, w, b], eps, tol, 5, |v| conv2d(&v[0], &spec, &v[1], &v[2]))?,
        ));
    }

    let spec = ConvSpec::new(3, 2, 2)?;
    let inputs = [
        gen.array::<T>(&[1, 1, 5, 5]),
        gen.array::<T>(&[1, 2, 5, 5]),
        gen.array::<T>(&spec.weight_shape()),
        gen.array::<T>(&[2]),
    ];
    out.push((
        "conv2d_multi".into(),
        check(&inputs, eps, tol, 6, |v| conv2d_multi(&[&v[0], &v[1]], &spec, &v[2], &v[3]))?,
    ));

    let inputs = [gen.array::<T>(&[2, 1, 3, 3]), gen.array::<T>(&[2, 2, 3, 3])];
    out.push((
        "concat_channels".into(),
        check(&inputs, eps, tol, 7, |v| concat_channels(&[&v[0], &v[1]]))?,
    ));

    let p = gen.array::<T>(&[1, 2, 3, 3]);
    out.push(("expand_batch".into(), check(&[p], eps, tol, 8, |v| v[0].expand_batch(3))?));

    let rows = Arc::new(AxisMap::new(5, 3, 2, vec![0, 1, 1, 2, 3, 4], vec![0.3, 0.7, 0.5, 0.5, 0.9, 0.1])?);
    let cols = Arc::new(AxisMap::new(4, 6, 1, vec![0, 0, 1, 2, 3, 3], vec![1.0; 6])?);
    let x = gen.array::<T>(&[2, 1, 5, 4]);
    out.push((
        "resample".into(),
        check(&[x], eps, tol, 9, |v| resample(&v[0], rows.clone(), cols.clone()))?,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_values_avoid_zero() {
        let mut p = Probe::new(0);
        let vals: Vec<f64> = (0..1000).map(|_| p.next_value()).collect();
        assert!(vals.iter().all(|v| (0.1..1.0).contains(&v.abs())));
        assert!(vals.iter().any(|v| *v < 0.0) && vals.iter().any(|v| *v > 0.0));
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let x = Array::new([3], vec![0.5f64, -0.7, 0.9]).unwrap();
        let ok = check(&[x.clone()], 1e-6, 1e-6, 1, |v| Ok(v[0].square())).unwrap();
        assert_eq!(ok.within, 3);
        let bad = check(&[x], 1e-6, 1e-6, 1, |v| Ok(v[0].detach().square().add(&v[0])?)).unwrap();
        assert!(bad.worst > 0.1);
    }
}
