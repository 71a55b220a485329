//! L1-penalized least squares by cyclic coordinate descent.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    /// Penalty on standardized coefficients.
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Stop once no coefficient moves by more than `tol` times the target's
    /// standard deviation in one sweep.
    pub tol: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            max_sweeps: 100_000,
            tol: 1e-10,
        }
    }
}

/// `y = intercept + sum_j coef[j] * (x[j] - mean[j]) / scale[j]`. Constant
/// columns carry a zero coefficient and unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lasso<F> {
    pub intercept: F,
    pub mean: Vec<F>,
    pub scale: Vec<F>,
    pub coef: Vec<F>,
}

fn soft_threshold<F: Scalar>(z: F, g: F) -> F {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        F::zero()
    }
}

impl<F: Scalar> Lasso<F> {
    /// Minimizes `(1 / 2n) * |y - X b|^2 + lambda * |b|_1` over standardized X.
    pub fn fit(x: &[Vec<F>], y: &[F], params: &LassoParams) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(!y.is_empty(), "cannot fit on zero rows");
        let n = y.len();
        let p = x[0].len();
        let nf = F::lit(n as f64);
        let mut mean = vec![F::zero(); p];
        let mut scale = vec![F::one(); p];
        let mut z: Vec<Vec<F>> = vec![vec![F::zero(); n]; p];
        let mut active = vec![false; p];
        for j in 0..p {
            let m = x.iter().map(|r| r[j]).sum::<F>() / nf;
            let var = x.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<F>() / nf;
            mean[j] = m;
            if var > F::zero() && x.iter().any(|r| r[j] != x[0][j]) {
                active[j] = true;
                scale[j] = var.sqrt();
                for (i, r) in x.iter().enumerate() {
                    z[j][i] = (r[j] - m) / scale[j];
                }
            }
        }
        let y_mean = y.iter().copied().sum::<F>() / nf;
        let mut resid: Vec<F> = y.iter().map(|&v| v - y_mean).collect();
        let y_sd = (resid.iter().map(|&r| r * r).sum::<F>() / nf).sqrt();
        let lambda = F::lit(params.lambda);
        let tol = F::lit(params.tol).max(F::epsilon()) * y_sd.max(F::one());
        let mut coef = vec![F::zero(); p];
        // column norms are n after standardization, up to rounding
        let norm: Vec<F> = z.iter().map(|c| c.iter().map(|&v| v * v).sum::<F>() / nf).collect();

        for _ in 0..params.max_sweeps {
            let mut max_step = F::zero();
            for j in (0..p).filter(|&j| active[j]) {
                let old = coef[j];
                let rho = z[j].iter().zip(&resid).map(|(&zi, &ri)| zi * ri).sum::<F>() / nf
                    + norm[j] * old;
                let new = soft_threshold(rho, lambda) / norm[j];
                if new != old {
                    let d = new - old;
                    for (ri, &zi) in resid.iter_mut().zip(&z[j]) {
                        *ri = *ri - d * zi;
                    }
                    coef[j] = new;
                    max_step = max_step.max(d.abs());
                }
            }
            if max_step <= tol {
                break;
            }
        }
        Self {
            intercept: y_mean,
            mean,
            scale,
            coef,
        }
    }

    pub fn predict(&self, x: &[F]) -> F {
        self.coef
            .iter()
            .zip(x.iter().zip(self.mean.iter().zip(&self.scale)))
            .fold(self.intercept, |acc, (&b, (&v, (&m, &s)))| {
                if b == F::zero() {
                    acc
                } else {
                    acc + b * (v - m) / s
                }
            })
    }

    /// Coefficients on the original feature scale.
    pub fn raw_coefficients(&self) -> Vec<F> {
        self.coef.iter().zip(&self.scale).map(|(&b, &s)| b / s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_relation() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![10.0 + i as f64, ((i * 7) % 11) as f64])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - 2.0 * r[1] + 50.0).collect();
        let m = Lasso::fit(&x, &y, &LassoParams::default());
        let b = m.raw_coefficients();
        // lambda shrinks each standardized coefficient by exactly 0.01
        assert!((b[0] - 3.0).abs() < 1e-3, "{b:?}");
        assert!((b[1] + 2.0).abs() < 1e-2, "{b:?}");
        for (r, &t) in x.iter().zip(&y) {
            assert!((m.predict(r) - t).abs() < 0.05);
        }
    }

    #[test]
    fn large_penalty_zeroes_coefficients() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = Lasso::fit(
            &x,
            &y,
            &LassoParams {
                lambda: 100.0,
                ..Default::default()
            },
        );
        assert_eq!(m.coef, vec![0.0]);
        assert_eq!(m.predict(&[100.0]), 4.5);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn constant_column_is_ignored() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 7.0]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let m = Lasso::fit(&x, &y, &LassoParams::default());
        assert_eq!(m.coef[1], 0.0);
        assert_eq!(m.predict(&[3.0, 7.0]), m.predict(&[3.0, -1e6]));
    }
}
