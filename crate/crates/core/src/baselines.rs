//! Lasso, ridge and elastic-net logistic regression by proximal gradient.

use crate::error::{Error, Result};
use crate::logistic::{gradient_with, objective_with, ActiveSet, Labels, Model, SolverStatus};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PenaltyConfig {
    pub lambda_l1: f64,
    pub lambda_l2: f64,
}

impl PenaltyConfig {
    pub fn lasso(lambda: f64) -> Self {
        PenaltyConfig { lambda_l1: lambda, lambda_l2: 0.0 }
    }

    pub fn ridge(lambda: f64) -> Self {
        PenaltyConfig { lambda_l1: 0.0, lambda_l2: lambda }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_l1", self.lambda_l1), ("lambda_l2", self.lambda_l2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProxOptions {
    /// Stop when the optimality residual (infinity norm of the minimal-norm
    /// subgradient) is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Whether the ℓ₂ term covers the bias. The bias never takes ℓ₁ shrinkage.
    pub penalize_bias: bool,
}

impl Default for ProxOptions {
    fn default() -> Self {
        ProxOptions {
            tol: 1e-6,
            max_iter: 10_000,
            penalize_bias: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PenalizedFit {
    pub model: Model,
    pub status: SolverStatus,
    /// Full objective after each accepted step, starting with the initial point.
    pub objectives: Vec<f64>,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn l1_norm(theta: &[f64], bias: Option<usize>) -> f64 {
    theta
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != bias)
        .map(|(_, t)| t.abs())
        .sum()
}

/// Infinity norm of the minimal-norm element of the subdifferential.
pub fn kkt_residual(grad: &[f64], theta: &[f64], lambda_l1: f64, bias: Option<usize>) -> f64 {
    grad.iter()
        .zip(theta)
        .enumerate()
        .map(|(j, (&g, &t))| {
            if Some(j) == bias {
                g.abs()
            } else if t != 0.0 {
                (g + lambda_l1 * t.signum()).abs()
            } else {
                (g.abs() - lambda_l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes `Σ loss + λ₁‖θ‖₁ + λ₂‖θ‖²` with ISTA and backtracking. Every
/// accepted step satisfies the sufficient-decrease bound, so the objective is
/// non-increasing. Hitting `max_iter` returns the last iterate with
/// `converged = false`.
pub fn fit_penalized(
    x: &SparseMatrix,
    y: &Labels,
    cfg: &PenaltyConfig,
    opts: &ProxOptions,
    warm: Option<&[f64]>,
) -> Result<PenalizedFit> {
    cfg.validate()?;
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    let d = x.n_cols();
    let bias = x.bias();
    let mut theta = match warm {
        Some(w) if w.len() != d => {
            return Err(Error::DimensionMismatch { what: "warm start", expected: d, got: w.len() })
        }
        Some(w) => w.to_vec(),
        None => vec![0.0; d],
    };
    let (l1, l2, pb) = (cfg.lambda_l1, cfg.lambda_l2, opts.penalize_bias);
    let smooth = |t: &[f64]| objective_with(x, y, t, l2, pb);

    let mut f = smooth(&theta)?;
    let mut grad = gradient_with(x, y, &theta, l2, pb)?;
    let mut objectives = vec![f + l1 * l1_norm(&theta, bias)];
    let mut kkt = kkt_residual(&grad, &theta, l1, bias);
    let mut step = 1.0;
    let mut iterations = 0;
    while kkt > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        step *= 2.0;
        let (z, fz) = loop {
            let z: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .enumerate()
                .map(|(j, (&t, &g))| {
                    let v = t - step * g;
                    if Some(j) == bias { v } else { soft_threshold(v, step * l1) }
                })
                .collect();
            let fz = smooth(&z)?;
            let (mut lin, mut quad) = (0.0, 0.0);
            for j in 0..d {
                let dz = z[j] - theta[j];
                lin += grad[j] * dz;
                quad += dz * dz;
            }
            if fz <= f + lin + quad / (2.0 * step) || quad == 0.0 {
                break (z, fz);
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::InvalidInput("proximal step underflowed".into()));
            }
        };
        let stalled = z == theta;
        theta = z;
        f = fz;
        grad = gradient_with(x, y, &theta, l2, pb)?;
        objectives.push(f + l1 * l1_norm(&theta, bias));
        kkt = kkt_residual(&grad, &theta, l1, bias);
        if stalled {
            break;
        }
    }

    let active: ActiveSet = (0..d)
        .filter(|&j| theta[j] != 0.0 || Some(j) == bias)
        .collect();
    let objective = *objectives.last().expect("initial objective recorded");
    Ok(PenalizedFit {
        model: Model { theta, active, lambda: l2, bias },
        status: SolverStatus {
            converged: kkt <= opts.tol,
            iterations,
            grad_inf_norm: kkt,
            objective,
        },
        objectives,
    })
}

/// Percentage of non-bias weights that are nonzero.
pub fn sparsity(model: &Model) -> f64 {
    let denom = model.dim() - usize::from(model.bias.is_some());
    if denom == 0 {
        return 0.0;
    }
    100.0 * model.nonzeros() as f64 / denom as f64
}
