use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Chebyshev series `Σ c_j T_j(s/a)` on `[−a, a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevSeries {
    pub half_width: f64,
    pub coeffs: Vec<f64>,
}

/// First-kind Chebyshev nodes `a·cos(π(k + ½)/n)`, in decreasing order.
pub fn nodes(half_width: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| half_width * (PI * (k as f64 + 0.5) / n as f64).cos())
        .collect()
}

impl ChebyshevSeries {
    /// Degree `n − 1` interpolant of values taken at [`nodes`]`(half_width, n)`.
    pub fn interpolate(half_width: f64, values: &[f64]) -> ChebyshevSeries {
        let n = values.len();
        let coeffs = (0..n)
            .map(|j| {
                let sum: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                if j == 0 {
                    sum / n as f64
                } else {
                    2.0 * sum / n as f64
                }
            })
            .collect();
        ChebyshevSeries { half_width, coeffs }
    }

    /// Clenshaw evaluation at `s`.
    pub fn eval(&self, s: f64) -> f64 {
        let x = s / self.half_width;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs.first().copied().unwrap_or(0.0)
    }

    /// Analytic continuation to complex `z`.
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let x = z / self.half_width;
        let (mut b1, mut b2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs.first().copied().unwrap_or(0.0)
    }

    /// Series of the derivative with respect to `s`.
    pub fn derivative(&self) -> ChebyshevSeries {
        let n = self.coeffs.len();
        if n <= 1 {
            return ChebyshevSeries {
                half_width: self.half_width,
                coeffs: vec![0.0],
            };
        }
        let top = n - 1;
        let mut d = vec![0.0; n + 1];
        for j in (0..top).rev() {
            d[j] = d[j + 2] + 2.0 * (j + 1) as f64 * self.coeffs[j + 1];
        }
        d[0] *= 0.5;
        d.truncate(top.max(1));
        for c in d.iter_mut() {
            *c /= self.half_width;
        }
        ChebyshevSeries {
            half_width: self.half_width,
            coeffs: d,
        }
    }

    pub fn nth_derivative(&self, k: usize) -> ChebyshevSeries {
        (0..k).fold(self.clone(), |acc, _| acc.derivative())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reproduces_polynomials_and_derivatives() {
        let a = 0.7;
        let f = |s: f64| 1.0 - 2.0 * s + 0.5 * s.powi(3) + 0.1 * s.powi(5);
        let values: Vec<f64> = nodes(a, 9).into_iter().map(f).collect();
        let c = ChebyshevSeries::interpolate(a, &values);
        assert_relative_eq!(c.eval(0.3), f(0.3), epsilon = 1e-14);
        let d1 = c.derivative();
        assert_relative_eq!(
            d1.eval(0.2),
            -2.0 + 1.5 * 0.04 + 0.5 * 0.2f64.powi(4),
            epsilon = 1e-13
        );
        let d5 = c.nth_derivative(5);
        assert_relative_eq!(d5.eval(0.0), 12.0, epsilon = 1e-9);
        let d3 = c.nth_derivative(3);
        assert_relative_eq!(d3.eval(0.0), 3.0, epsilon = 1e-11);
    }

    #[test]
    fn complex_evaluation_continues_analytically() {
        let a = 1.0;
        let values: Vec<f64> = nodes(a, 30).into_iter().map(f64::exp).collect();
        let c = ChebyshevSeries::interpolate(a, &values);
        let z = Complex64::new(0.2, 0.3);
        let err = (c.eval_complex(z) - z.exp()).norm();
        assert!(err < 1e-11, "{err}");
    }
}
