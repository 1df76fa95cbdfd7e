//! Four-term rescaling objective.

use iarn_tensor::{Real, Tensor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Reconstruction (L1 on the restored HR image).
    pub reconstruction: f64,
    /// Guidance (L2 against the bicubic LR reference).
    pub guidance: f64,
    /// Latent regulation (L2 of z against zero).
    pub distribution: f64,
    /// Rescaling invertibility (L2 between u(d(y_H)) and y_H).
    pub invertibility: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            reconstruction: 1.0,
            guidance: 16.0,
            distribution: 0.0,
            invertibility: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub l_r: f64,
    pub l_g: f64,
    pub l_d: f64,
    pub l_i: f64,
}

impl LossReport {
    pub fn terms(&self) -> [f64; 4] {
        [self.l_r, self.l_g, self.l_d, self.l_i]
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.terms().iter().all(|t| t.is_finite())
    }
}

fn same_shape<T: Real>(what: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn loss_r<T: Real>(x_hat: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("reconstruction loss", x_hat, x)?;
    Ok(x_hat.sub(x)?.abs().mean())
}

/// Mean squared difference to the LR reference.
pub fn loss_g<T: Real>(y_l: &Tensor<T>, y_ref: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("guidance loss", y_l, y_ref)?;
    Ok(y_l.sub(y_ref)?.square().mean())
}

/// Mean squared magnitude of the latent (distance to the zero reference).
pub fn loss_d<T: Real>(z: &Tensor<T>) -> Tensor<T> {
    z.square().mean()
}

/// Mean squared difference between the rescaled and the original HR output.
pub fn loss_i<T: Real>(y_hat_h: &Tensor<T>, y_h: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("invertibility loss", y_hat_h, y_h)?;
    Ok(y_hat_h.sub(y_h)?.square().mean())
}

/// Weighted sum for backpropagation plus the per-term report.
///
/// Terms with zero weight are reported but kept out of the graph.
pub fn combine<T: Real>(weights: &LossWeights, terms: [&Tensor<T>; 4]) -> Result<(Tensor<T>, LossReport)> {
    let lambdas = [
        weights.reconstruction,
        weights.guidance,
        weights.distribution,
        weights.invertibility,
    ];
    let values: Vec<f64> = terms
        .iter()
        .map(|t| t.item().map(Real::as_f64).ok_or_else(|| Error::Shape("loss terms must be scalars".into())))
        .collect::<Result<_>>()?;
    let mut total: Option<Tensor<T>> = None;
    for (term, &lambda) in terms.iter().zip(&lambdas) {
        if lambda == 0.0 {
            continue;
        }
        let weighted = term.scale(lambda);
        total = Some(match total {
            Some(acc) => acc.add(&weighted)?,
            None => weighted,
        });
    }
    let total = total.unwrap_or_else(|| terms[0].scale(0.0));
    let report = LossReport {
        total: values.iter().zip(&lambdas).map(|(v, l)| v * l).sum(),
        l_r: values[0],
        l_g: values[1],
        l_d: values[2],
        l_i: values[3],
    };
    Ok((total, report))
}
