//! Unregularized logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("no observations")]
    Empty,
    #[error("design matrix rows have inconsistent width")]
    Ragged,
    #[error("outcome has a single class")]
    SingleClass,
    #[error("information matrix is singular")]
    Singular,
    #[error("(quasi-)complete separation: coefficients diverge")]
    Separation,
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    /// Wald standard errors from the inverse information at the solution.
    pub std_errors: Vec<f64>,
    pub iterations: usize,
    pub deviance: f64,
}

/// Linear predictor magnitude beyond which fitted probabilities are
/// numerically 0 or 1; reaching it while failing to converge means the
/// likelihood has no finite maximizer.
const SEPARATION_ETA: f64 = 15.0;

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Fits `P(y) = sigmoid(x · beta)`; `x` rows should include an intercept
/// column if one is wanted.
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], opts: &LogisticOptions) -> Result<LogisticFit, FitError> {
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(FitError::Empty);
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(FitError::Ragged);
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == n {
        return Err(FitError::SingleClass);
    }

    let mut beta = DVector::<f64>::zeros(p);
    let mut max_eta = 0.0f64;
    for iteration in 1..=opts.max_iter {
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut score = DVector::<f64>::zeros(p);
        max_eta = 0.0;
        for (row, &yi) in x.iter().zip(y) {
            let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            max_eta = max_eta.max(eta.abs());
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            let r = if yi { 1.0 } else { 0.0 } - mu;
            for j in 0..p {
                score[j] += row[j] * r;
                for k in 0..=j {
                    info[(j, k)] += w * row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                info[(k, j)] = info[(j, k)];
            }
        }
        let Some(chol) = info.clone().cholesky() else {
            return Err(if max_eta > SEPARATION_ETA { FitError::Separation } else { FitError::Singular });
        };
        let step = chol.solve(&score);
        beta += &step;
        let scale = 1.0 + beta.amax();
        if step.amax() < opts.tol * scale {
            return finish(x, y, beta, iteration);
        }
    }
    if max_eta > SEPARATION_ETA {
        Err(FitError::Separation)
    } else {
        Err(FitError::NonConvergence { iterations: opts.max_iter })
    }
}

fn finish(x: &[Vec<f64>], y: &[bool], beta: DVector<f64>, iterations: usize) -> Result<LogisticFit, FitError> {
    let p = beta.len();
    let mut info = DMatrix::<f64>::zeros(p, p);
    let mut deviance = 0.0;
    let mut max_eta = 0.0f64;
    for (row, &yi) in x.iter().zip(y) {
        let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        max_eta = max_eta.max(eta.abs());
        let mu = sigmoid(eta);
        let w = mu * (1.0 - mu);
        for j in 0..p {
            for k in 0..p {
                info[(j, k)] += w * row[j] * row[k];
            }
        }
        // -2 log-likelihood, written to stay finite for saturated fits.
        let ll = if yi { -(1.0 + (-eta).exp()).ln() } else { -(1.0 + eta.exp()).ln() };
        deviance -= 2.0 * ll;
    }
    // Converged steps can still sit on a separating ray when the fitted
    // probabilities have saturated.
    if max_eta > 2.0 * SEPARATION_ETA {
        return Err(FitError::Separation);
    }
    let inv = info.try_inverse().ok_or(FitError::Singular)?;
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        std_errors: (0..p).map(|j| inv[(j, j)].max(0.0).sqrt()).collect(),
        iterations,
        deviance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_known_coefficients() {
        // Deterministic design where expected counts follow the model exactly:
        // at each x, the fraction of positives equals sigmoid(-0.5 + 1.2 x)
        // to within 1/1000 rounding.
        let (b0, b1) = (-0.5, 1.2);
        let mut x = vec![];
        let mut y = vec![];
        for i in 0..21 {
            let xi = -2.0 + 0.2 * i as f64;
            let k = (1000.0 * sigmoid(b0 + b1 * xi)).round() as usize;
            for j in 0..1000 {
                x.push(vec![1.0, xi]);
                y.push(j < k);
            }
        }
        let fit = fit_logistic(&x, &y, &LogisticOptions::default()).unwrap();
        assert!((fit.coefficients[0] - b0).abs() < 5e-3, "{:?}", fit.coefficients);
        assert!((fit.coefficients[1] - b1).abs() < 5e-3, "{:?}", fit.coefficients);
        assert!(fit.std_errors.iter().all(|s| *s > 0.0 && s.is_finite()));
    }

    #[test]
    fn perfect_separation_is_reported() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        assert_eq!(fit_logistic(&x, &y, &LogisticOptions::default()), Err(FitError::Separation));
    }

    #[test]
    fn degenerate_inputs() {
        let x = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(fit_logistic(&x, &[true, true], &LogisticOptions::default()), Err(FitError::SingleClass));
        assert_eq!(fit_logistic(&[], &[], &LogisticOptions::default()), Err(FitError::Empty));
        // Collinear columns.
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let y: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
        assert_eq!(fit_logistic(&x, &y, &LogisticOptions::default()), Err(FitError::Singular));
    }
}
