//! Central finite-difference gradient verification.

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Relative error `|a - n| / max(1, |a|, |n|)`.
#[inline]
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Central-difference gradient of `f` at `point`.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(point: &[f64], mut f: F) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let plus = f(&x);
            x[i] = orig - FD_STEP;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest relative error between `analytic` and the numeric gradient of `f`.
pub fn max_relative_error<F: FnMut(&[f64]) -> f64>(point: &[f64], analytic: &[f64], f: F) -> f64 {
    assert_eq!(point.len(), analytic.len(), "analytic gradient length");
    numeric_gradient(point, f)
        .iter()
        .zip(analytic)
        .map(|(&n, &a)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Checks a function that returns its own value and analytic gradient.
pub fn grad_check<F: Fn(&[f64]) -> (f64, Vec<f64>)>(f: F, point: &[f64]) -> f64 {
    let (_, analytic) = f(point);
    max_relative_error(point, &analytic, |x| f(x).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_is_exact() {
        let g = numeric_gradient(&[3.0], |x| x[0] * x[0]);
        assert!((g[0] - 6.0).abs() < 1e-8);
        assert!(grad_check(|x| (x[0] * x[0], vec![2.0 * x[0]]), &[3.0]) < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = numeric_gradient(&[1.0, -4.0], |_| 7.0);
        assert_eq!(g, vec![0.0, 0.0]);
        assert_eq!(grad_check(|_| (7.0, vec![0.0, 0.0]), &[1.0, -4.0]), 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        assert!(grad_check(|x| (x[0].sin(), vec![x[0].sin()]), &[0.7]) > 0.1);
    }
}
