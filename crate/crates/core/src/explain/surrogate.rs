//! Logistic head distilled from the classifier's probabilities, so that mask
//! gradients have something differentiable to flow through.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{bce_with_logit, dot, sigmoid, AdamConfig, AdamState, DenseMatrix};

pub const GATE_LIMIT: f64 = 0.1;
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Ridge penalty on the standardised weights.
    pub l2: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            l2: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateHead {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Mean |surrogate − classifier| on the fitting set.
    pub mean_abs_dev: f64,
}

impl SurrogateHead {
    pub fn logit(&self, z: &[f64]) -> f64 {
        dot(&self.weights, z) + self.bias
    }

    pub fn prob(&self, z: &[f64]) -> f64 {
        sigmoid(self.logit(z))
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Mean cross-entropy against soft targets, with gradient on
    /// `[weights..., bias]`.
    pub fn loss_and_grad(&self, x: &DenseMatrix, targets: &[f64]) -> (f64, Vec<f64>) {
        let n = x.rows() as f64;
        let mut grad = vec![0.0; self.dim() + 1];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let (l, g) = bce_with_logit(self.logit(x.row(r)), t);
            loss += l / n;
            grad[..self.dim()].iter_mut().zip(x.row(r)).for_each(|(gw, &xi)| *gw += g * xi / n);
            grad[self.dim()] += g / n;
        }
        (loss, grad)
    }
}

/// Full-batch Adam on standardised columns; standardisation is folded back
/// into the returned weights. Fails the quality gate loudly.
pub fn fit_surrogate(x: &DenseMatrix, probs: &[f64], config: &SurrogateConfig) -> Result<SurrogateHead> {
    let head = fit_surrogate_ungated(x, probs, config)?;
    if head.mean_abs_dev > GATE_LIMIT {
        return Err(Error::SurrogateGate {
            mean_abs_dev: head.mean_abs_dev,
            limit: GATE_LIMIT,
        });
    }
    Ok(head)
}

pub fn fit_surrogate_ungated(x: &DenseMatrix, probs: &[f64], config: &SurrogateConfig) -> Result<SurrogateHead> {
    let (n, d) = x.shape();
    if probs.len() != n {
        return Err(Error::shape("fit_surrogate targets", n, probs.len()));
    }
    if n < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!("surrogate needs at least {MIN_SAMPLES} samples, got {n}")));
    }
    if probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidInput("surrogate targets must lie strictly inside (0, 1)".into()));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        mean.iter_mut().zip(x.row(r)).for_each(|(m, &v)| *m += v / n as f64);
    }
    let mut sd = vec![0.0; d];
    for r in 0..n {
        sd.iter_mut().zip(x.row(r)).zip(&mean).for_each(|((s, &v), &m)| *s += (v - m).powi(2) / n as f64);
    }
    let inv: Vec<f64> = sd.iter().map(|&v| if v > 1e-16 { 1.0 / v.sqrt() } else { 0.0 }).collect();
    let mut z = DenseMatrix::zeros(n, d);
    for r in 0..n {
        let row = z.row_mut(r);
        for j in 0..d {
            row[j] = (x.get(r, j) - mean[j]) * inv[j];
        }
    }

    let mut head = SurrogateHead {
        weights: vec![0.0; d],
        bias: 0.0,
        mean_abs_dev: f64::NAN,
    };
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate), &[("surrogate", d + 1)]);
    for epoch in 0..config.epochs {
        let (loss, mut grad) = head.loss_and_grad(&z, probs);
        grad.iter_mut().zip(&head.weights).for_each(|(g, &w)| *g += config.l2 * w);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("surrogate loss is not finite at epoch {epoch}")));
        }
        let mut flat = head.weights.clone();
        flat.push(head.bias);
        adam.step(&mut [flat.as_mut_slice()], &[grad.as_slice()])?;
        head.bias = flat.pop().expect("bias slot");
        head.weights = flat;
    }

    let weights: Vec<f64> = head.weights.iter().zip(&inv).map(|(&w, &s)| w * s).collect();
    let bias = head.bias - weights.iter().zip(&mean).map(|(&w, &m)| w * m).sum::<f64>();
    let mut out = SurrogateHead {
        weights,
        bias,
        mean_abs_dev: 0.0,
    };
    out.mean_abs_dev = (0..n).map(|r| (out.prob(x.row(r)) - probs[r]).abs()).sum::<f64>() / n as f64;
    log::info!("surrogate fitted: mean |delta| = {:.4}", out.mean_abs_dev);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(seed: u64, n: usize, d: usize) -> (DenseMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let p = (0..n).map(|r| sigmoid(dot(&w, x.row(r)) + 0.3)).collect();
        (x, p)
    }

    #[test]
    fn constant_half_targets_give_a_flat_head() {
        let (x, _) = data(1, 100, 4);
        let h = fit_surrogate(&x, &[0.5; 100], &SurrogateConfig::default()).unwrap();
        assert!(h.weights.iter().all(|w| w.abs() < 1e-3), "{:?}", h.weights);
        assert!(h.bias.abs() < 1e-3);
    }

    #[test]
    fn logistic_targets_are_recovered() {
        let (x, p) = data(2, 400, 5);
        let h = fit_surrogate(&x, &p, &SurrogateConfig { l2: 0.0, ..Default::default() }).unwrap();
        assert!(h.mean_abs_dev < 0.02, "dev {}", h.mean_abs_dev);
        let ridge = fit_surrogate(&x, &p, &SurrogateConfig::default()).unwrap();
        let norm = |h: &SurrogateHead| h.weights.iter().map(|w| w * w).sum::<f64>();
        assert!(norm(&ridge) < norm(&h));
    }

    #[test]
    fn gate_and_input_errors() {
        let (x, _) = data(3, 40, 2);
        // alternating targets cannot be matched by any linear head
        let p: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 0.99 } else { 0.01 }).collect();
        assert!(matches!(fit_surrogate(&x, &p, &SurrogateConfig::default()), Err(Error::SurrogateGate { .. })));
        assert!(fit_surrogate(&x, &[1.0; 40], &SurrogateConfig::default()).is_err());
        let (small, q) = data(3, 5, 2);
        assert!(fit_surrogate(&small, &q, &SurrogateConfig::default()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (x, p) = data(seed, 15, 6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let point: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = grad_check(
                |v| {
                    let h = SurrogateHead { weights: v[..6].to_vec(), bias: v[6], mean_abs_dev: 0.0 };
                    h.loss_and_grad(&x, &p)
                },
                &point,
            );
            assert!(err < 1e-3, "seed {seed}: {err}");
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = SurrogateHead {
            weights: (0..200).map(|_| rng.random_range(-3.0..3.0) * 1e-3f64.powi(rng.random_range(0..4))).collect(),
            bias: 0.1 + 0.2,
            mean_abs_dev: 1.0 / 3.0,
        };
        let back: SurrogateHead = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
    }
}
