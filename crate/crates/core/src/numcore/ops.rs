use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Saved forward state for [`affine_relu_backward`].
#[derive(Debug, Clone)]
pub struct AffineReluCache<'w> {
    weights: &'w DenseMatrix,
    input: Vec<f64>,
    pre_activation: Vec<f64>,
}

impl AffineReluCache<'_> {
    pub fn pre_activation(&self) -> &[f64] {
        &self.pre_activation
    }
}

/// `y = max(0, W·x)`.
pub fn affine_relu_forward<'w>(weights: &'w DenseMatrix, x: &[f64]) -> Result<(Vec<f64>, AffineReluCache<'w>)> {
    let pre = weights.matvec(x)?;
    let y = pre.iter().map(|&p| relu(p)).collect();
    Ok((
        y,
        AffineReluCache {
            weights,
            input: x.to_vec(),
            pre_activation: pre,
        },
    ))
}

/// Gradients of `y = max(0, W·x)` with respect to `W` and `x`, given `dL/dy`.
///
/// The ReLU gate passes gradient only where the pre-activation is strictly
/// positive.
pub fn affine_relu_backward(cache: &AffineReluCache<'_>, dy: &[f64]) -> Result<(DenseMatrix, Vec<f64>)> {
    let w = cache.weights;
    if dy.len() != w.rows() {
        return Err(Error::shape("affine_relu_backward", w.rows(), dy.len()));
    }
    let gated: Vec<f64> = dy
        .iter()
        .zip(&cache.pre_activation)
        .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
        .collect();
    let mut dw = DenseMatrix::zeros(w.rows(), w.cols());
    dw.add_outer(1.0, &gated, &cache.input)?;
    let dx = w.matvec_t(&gated)?;
    Ok((dw, dx))
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Logistic function, evaluated on the branch that never overflows `exp`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without forming `sigmoid(x)` first.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Binary cross-entropy of a logit against a target in `[0, 1]`, and its
/// derivative with respect to the logit.
#[inline]
pub fn bce_with_logit(logit: f64, target: f64) -> (f64, f64) {
    let loss = -(target * log_sigmoid(logit) + (1.0 - target) * log_sigmoid(-logit));
    (loss, sigmoid(logit) - target)
}
