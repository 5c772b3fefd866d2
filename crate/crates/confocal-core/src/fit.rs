//! Least-squares machinery shared by the peak fitter and the vibration
//! analysis: damped Gauss-Newton for nonlinear models, SVD-based linear
//! regression, both with parameter covariance.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Inverse, Solve, SVD};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const DAMPING_START: f64 = 1e-3;
const DAMPING_CEILING: f64 = 1e12;

/// Result of a nonlinear curve fit.
#[derive(Debug, Clone)]
pub struct CurveFit {
    pub params: Vec<f64>,
    /// Parameter covariance, scaled by the residual variance.
    pub covariance: Array2<f64>,
    /// Root-mean-square residual over the fitted points.
    pub residual_rms: f64,
    pub iterations: usize,
}

impl CurveFit {
    /// One-sigma uncertainty of parameter `j`.
    pub fn sigma(&self, j: usize) -> f64 {
        self.covariance[(j, j)].max(0.0).sqrt()
    }
}

/// Fit `model(x, params)` to (x, y) by Levenberg-Marquardt with a numeric
/// Jacobian. `scales[j]` sets the differencing step and must reflect the
/// magnitude over which parameter `j` meaningfully varies.
pub fn fit_curve<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    initial: &[f64],
    scales: &[f64],
) -> Result<CurveFit>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = x.len();
    let p = initial.len();
    if n != y.len() {
        return Err(Error::Input(format!(
            "x and y lengths differ: {n} vs {}",
            y.len()
        )));
    }
    if scales.len() != p {
        return Err(Error::Input(format!(
            "got {} scales for {p} parameters",
            scales.len()
        )));
    }
    if n <= p {
        return Err(Error::Input(format!(
            "{n} points cannot constrain {p} parameters"
        )));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::Input("non-finite sample in fit data".into()));
    }
    if !initial.iter().all(|v| v.is_finite()) || !scales.iter().all(|s| s.is_finite() && *s > 0.0)
    {
        return Err(Error::Input(
            "initial guess and scales must be finite, scales positive".into(),
        ));
    }

    let sse = |params: &[f64]| -> f64 {
        x.iter()
            .zip(y.iter())
            .map(|(&xi, &yi)| {
                let r = yi - model(xi, params);
                r * r
            })
            .sum()
    };

    let mut params = initial.to_vec();
    let mut current_sse = sse(&params);
    let mut damping = DAMPING_START;
    let mut iterations = 0;

    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        // numeric Jacobian by central differences
        let mut jac = Array2::<f64>::zeros((n, p));
        for j in 0..p {
            let h = 1e-6 * (params[j].abs() + scales[j]);
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[j] += h;
            minus[j] -= h;
            for i in 0..n {
                jac[(i, j)] = (model(x[i], &plus) - model(x[i], &minus)) / (2.0 * h);
            }
        }
        let mut gradient = Array1::<f64>::zeros(p);
        let mut normal = Array2::<f64>::zeros((p, p));
        for i in 0..n {
            let r = y[i] - model(x[i], &params);
            for j in 0..p {
                gradient[j] += jac[(i, j)] * r;
                for k in j..p {
                    normal[(j, k)] += jac[(i, j)] * jac[(i, k)];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                normal[(j, k)] = normal[(k, j)];
            }
        }

        let mut accepted = false;
        while damping <= DAMPING_CEILING {
            let mut damped = normal.clone();
            for j in 0..p {
                // Marquardt scaling keeps the step sane across units
                damped[(j, j)] += damping * normal[(j, j)].max(1e-300);
            }
            let step = match damped.solve(&gradient) {
                Ok(s) => s,
                Err(_) => {
                    damping *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            let trial_sse = sse(&trial);
            if trial_sse.is_finite() && trial_sse <= current_sse {
                let improvement = current_sse - trial_sse;
                let step_small = step
                    .iter()
                    .zip(scales.iter())
                    .all(|(s, sc)| s.abs() <= 1e-10 * sc);
                params = trial;
                current_sse = trial_sse;
                damping = (damping / 10.0).max(1e-12);
                accepted = true;
                if improvement <= 1e-12 * current_sse.max(1e-300) || step_small {
                    return finalize(&model, x, params, scales, current_sse, iterations);
                }
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            // no downhill direction left; report the best point found
            return finalize(&model, x, params, scales, current_sse, iterations);
        }
    }
    Err(Error::Convergence(format!(
        "curve fit did not converge in {MAX_ITERATIONS} iterations (sse {current_sse:.3e})"
    )))
}

fn finalize<F>(
    model: &F,
    x: &[f64],
    params: Vec<f64>,
    scales: &[f64],
    current_sse: f64,
    iterations: usize,
) -> Result<CurveFit>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = x.len();
    let p = params.len();
    // recompute the normal matrix at the solution for the covariance
    let mut jac = Array2::<f64>::zeros((n, p));
    for j in 0..p {
        let h = 1e-6 * (params[j].abs() + scales[j]);
        let mut plus = params.clone();
        let mut minus = params.clone();
        plus[j] += h;
        minus[j] -= h;
        for i in 0..n {
            jac[(i, j)] = (model(x[i], &plus) - model(x[i], &minus)) / (2.0 * h);
        }
    }
    let mut normal = Array2::<f64>::zeros((p, p));
    for i in 0..n {
        for j in 0..p {
            for k in 0..p {
                normal[(j, k)] += jac[(i, j)] * jac[(i, k)];
            }
        }
    }
    let sigma2 = current_sse / (n - p) as f64;
    let covariance = normal
        .inv()
        .map(|inv| inv * sigma2)
        .map_err(|_| Error::RankDeficient("singular normal matrix at the fit optimum".into()))?;
    Ok(CurveFit {
        params,
        covariance,
        residual_rms: (current_sse / n as f64).sqrt(),
        iterations,
    })
}

/// Result of a linear regression y = X beta.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub covariance: Array2<f64>,
    pub residual_rms: f64,
    /// Ratio of the largest to smallest singular value of the design.
    pub condition_number: f64,
}

/// Ordinary least squares through the SVD of the design matrix, with the
/// covariance of the coefficients and the design's condition number.
pub fn linear_least_squares(design: &Array2<f64>, y: &[f64]) -> Result<LinearFit> {
    let (n, p) = design.dim();
    if n != y.len() {
        return Err(Error::Input(format!(
            "design has {n} rows but y has {} samples",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::Input(format!(
            "{n} samples cannot constrain {p} coefficients"
        )));
    }
    let (u, s, vt) = design
        .svd(true, true)
        .map_err(|e| Error::RankDeficient(format!("SVD of the design failed: {e}")))?;
    let u = u.expect("requested U");
    let vt = vt.expect("requested Vt");
    let smax = s.iter().cloned().fold(0.0f64, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if !smax.is_finite() || smin <= 1e-12 * smax {
        return Err(Error::RankDeficient(format!(
            "design matrix is rank deficient (singular values {smin:.3e} .. {smax:.3e})"
        )));
    }
    // beta = V S^-1 U^T y
    let mut uty = vec![0.0f64; p];
    for j in 0..p {
        let mut acc = 0.0;
        for i in 0..n {
            acc += u[(i, j)] * y[i];
        }
        uty[j] = acc / s[j];
    }
    let mut coefficients = vec![0.0f64; p];
    for k in 0..p {
        let mut acc = 0.0;
        for j in 0..p {
            acc += vt[(j, k)] * uty[j];
        }
        coefficients[k] = acc;
    }
    let mut sse = 0.0;
    for i in 0..n {
        let mut fit = 0.0;
        for k in 0..p {
            fit += design[(i, k)] * coefficients[k];
        }
        sse += (y[i] - fit) * (y[i] - fit);
    }
    let sigma2 = sse / (n - p) as f64;
    // cov = sigma^2 V S^-2 V^T
    let mut covariance = Array2::<f64>::zeros((p, p));
    for a in 0..p {
        for b in 0..p {
            let mut acc = 0.0;
            for j in 0..p {
                acc += vt[(j, a)] * vt[(j, b)] / (s[j] * s[j]);
            }
            covariance[(a, b)] = acc * sigma2;
        }
    }
    Ok(LinearFit {
        coefficients,
        covariance,
        residual_rms: (sse / n as f64).sqrt(),
        condition_number: smax / smin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_recovers_parameters() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 * 0.05).collect();
        let truth = [2.5f64, 0.8];
        let y: Vec<f64> = x.iter().map(|&t| truth[0] * (-truth[1] * t).exp()).collect();
        let fit = fit_curve(
            |t, p| p[0] * (-p[1] * t).exp(),
            &x,
            &y,
            &[1.0, 0.3],
            &[1.0, 0.5],
        )
        .unwrap();
        assert!((fit.params[0] - truth[0]).abs() < 1e-8);
        assert!((fit.params[1] - truth[1]).abs() < 1e-8);
        assert!(fit.residual_rms < 1e-10);
    }

    #[test]
    fn noisy_line_covariance_brackets_truth() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&t| 1.5 * t - 0.4 + 0.05 * (rng.gen::<f64>() - 0.5))
            .collect();
        let fit = fit_curve(|t, p| p[0] * t + p[1], &x, &y, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((fit.params[0] - 1.5).abs() < 5.0 * fit.sigma(0).max(1e-4));
        assert!((fit.params[1] + 0.4).abs() < 5.0 * fit.sigma(1).max(1e-4));
    }

    #[test]
    fn underdetermined_fit_is_rejected() {
        let x = [0.0, 1.0];
        let y = [1.0, 2.0];
        let r = fit_curve(|t, p| p[0] + p[1] * t + p[2] * t * t, &x, &y, &[0.0; 3], &[1.0; 3]);
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn linear_regression_matches_hand_solution() {
        // y = 3 x1 - 2 x2 + 1 sampled exactly
        let n = 30;
        let mut design = Array2::<f64>::zeros((n, 3));
        let mut y = vec![0.0; n];
        for i in 0..n {
            let x1 = (i as f64) * 0.2;
            let x2 = ((i * i) % 7) as f64 * 0.3;
            design[(i, 0)] = x1;
            design[(i, 1)] = x2;
            design[(i, 2)] = 1.0;
            y[i] = 3.0 * x1 - 2.0 * x2 + 1.0;
        }
        let fit = linear_least_squares(&design, &y).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-10);
        assert!((fit.coefficients[1] + 2.0).abs() < 1e-10);
        assert!((fit.coefficients[2] - 1.0).abs() < 1e-10);
        assert!(fit.condition_number < 1e3);
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let n = 10;
        let mut design = Array2::<f64>::zeros((n, 2));
        let mut y = vec![0.0; n];
        for i in 0..n {
            design[(i, 0)] = i as f64;
            design[(i, 1)] = 2.0 * i as f64;
            y[i] = i as f64;
        }
        let r = linear_least_squares(&design, &y);
        assert!(matches!(r, Err(Error::RankDeficient(_))), "{r:?}");
    }
}
