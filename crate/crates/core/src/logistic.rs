//! L2-penalized logistic regression restricted to an active feature set.
//!
//! The objective is `Σ_i log(1 + exp(−y_i θᵀx_i)) + λ‖θ‖₂²`. By default the
//! penalty covers every coordinate including the bias; [`FitOptions::penalize_bias`]
//! exempts it.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::{SparseMatrix, SparseRow};

/// Binary class labels, each exactly `-1` or `+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels(Vec<i8>);

impl Labels {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v != 1 && v != -1) {
            return Err(Error::InvalidInput(format!(
                "label {v} at position {i} is not -1 or +1"
            )));
        }
        Ok(Labels(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        f64::from(self.0[i])
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    /// The `1{y_i = +1}` indicator vector.
    pub fn indicator(&self) -> Vec<f64> {
        self.0.iter().map(|&v| if v == 1 { 1.0 } else { 0.0 }).collect()
    }
}

/// Ordered, duplicate-free set of selected feature indices. Iteration follows
/// insertion order; [`ActiveSet::sorted`] gives the ascending view. Equality is
/// set equality.
#[derive(Debug, Clone, Default)]
pub struct ActiveSet {
    order: Vec<usize>,
    members: BTreeSet<usize>,
}

impl ActiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when `j` was already present.
    pub fn insert(&mut self, j: usize) -> bool {
        if self.members.insert(j) {
            self.order.push(j);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.contains(&j)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Indices in insertion order.
    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn sorted(&self) -> Vec<usize> {
        self.members.iter().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied()
    }
}

impl PartialEq for ActiveSet {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members
    }
}

impl FromIterator<usize> for ActiveSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut s = ActiveSet::new();
        for j in iter {
            s.insert(j);
        }
        s
    }
}

/// Dense weight vector with its active-set bookkeeping. Weights outside the
/// active set are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub theta: Vec<f64>,
    pub active: ActiveSet,
    pub lambda: f64,
    pub bias: Option<usize>,
}

impl Model {
    pub fn zeros(d: usize, bias: Option<usize>, lambda: f64) -> Self {
        Model {
            theta: vec![0.0; d],
            active: ActiveSet::new(),
            lambda,
            bias,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Number of nonzero weights, not counting the bias.
    pub fn nonzeros(&self) -> usize {
        self.theta
            .iter()
            .enumerate()
            .filter(|&(j, &t)| t != 0.0 && Some(j) != self.bias)
            .count()
    }

    pub fn margins(&self, x: &SparseMatrix) -> Result<Vec<f64>> {
        x.mat_vec(&self.theta)
    }
}

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 35.0 {
        z
    } else if z < -35.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic loss of one document: `log(1 + exp(−y θᵀx))`.
pub fn loss(theta: &[f64], x: SparseRow<'_>, y: f64) -> f64 {
    softplus(-y * x.dot(theta))
}

fn check_dims(x: &SparseMatrix, y: &Labels, theta: &[f64]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if theta.len() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            what: "theta length",
            expected: x.n_cols(),
            got: theta.len(),
        });
    }
    Ok(())
}

fn penalty(theta: &[f64], lambda: f64, exempt: Option<usize>) -> f64 {
    let sq: f64 = theta
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != exempt)
        .map(|(_, t)| t * t)
        .sum();
    lambda * sq
}

fn nll_from_margins(margins: &[f64], y: &Labels) -> f64 {
    margins
        .iter()
        .enumerate()
        .map(|(i, &m)| softplus(-y.get(i) * m))
        .sum()
}

fn residual_from_margins(margins: &[f64], y: &Labels) -> Vec<f64> {
    margins
        .iter()
        .zip(y.as_slice())
        .map(|(&m, &yi)| sigmoid(m) - if yi == 1 { 1.0 } else { 0.0 })
        .collect()
}

/// Penalized objective with the penalty over all coordinates.
pub fn objective(x: &SparseMatrix, y: &Labels, theta: &[f64], lambda: f64) -> Result<f64> {
    objective_with(x, y, theta, lambda, true)
}

pub fn objective_with(
    x: &SparseMatrix,
    y: &Labels,
    theta: &[f64],
    lambda: f64,
    penalize_bias: bool,
) -> Result<f64> {
    check_dims(x, y, theta)?;
    let margins = x.mat_vec(theta)?;
    let exempt = if penalize_bias { None } else { x.bias() };
    Ok(nll_from_margins(&margins, y) + penalty(theta, lambda, exempt))
}

/// Analytic gradient of [`objective`].
pub fn gradient(x: &SparseMatrix, y: &Labels, theta: &[f64], lambda: f64) -> Result<Vec<f64>> {
    gradient_with(x, y, theta, lambda, true)
}

pub fn gradient_with(
    x: &SparseMatrix,
    y: &Labels,
    theta: &[f64],
    lambda: f64,
    penalize_bias: bool,
) -> Result<Vec<f64>> {
    check_dims(x, y, theta)?;
    // d/dm softplus(−y m) = −y σ(−y m) = σ(m) − 1{y=+1}, i.e. the residual
    let r = residual_from_margins(&x.mat_vec(theta)?, y);
    let mut g = x.col_dots(&r)?;
    for (j, gj) in g.iter_mut().enumerate() {
        if penalize_bias || Some(j) != x.bias() {
            *gj += 2.0 * lambda * theta[j];
        }
    }
    Ok(g)
}

/// `σ(Xθ) − 1{y = +1}`; every component lies in (−1, 1).
pub fn residual(x: &SparseMatrix, theta: &[f64], y: &Labels) -> Result<Vec<f64>> {
    check_dims(x, y, theta)?;
    Ok(residual_from_margins(&x.mat_vec(theta)?, y))
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub lambda: f64,
    /// Stop when the restricted gradient's infinity norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    pub penalize_bias: bool,
    /// Active sets up to this size use a dense Cholesky Newton step; larger
    /// ones use matrix-free conjugate gradients for the Newton system.
    pub dense_limit: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lambda: 1.0,
            tol: 1e-8,
            max_iter: 100,
            penalize_bias: true,
            dense_limit: 500,
        }
    }
}

impl FitOptions {
    pub fn with_lambda(lambda: f64) -> Self {
        FitOptions {
            lambda,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverStatus {
    pub converged: bool,
    pub iterations: usize,
    pub grad_inf_norm: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct RestrictedFit {
    pub model: Model,
    pub status: SolverStatus,
}

/// Columns of the active set with a row-major index for Hessian assembly.
struct Restricted<'a> {
    x: &'a SparseMatrix,
    coords: Vec<usize>,
    /// Per row: (local coordinate, value).
    rows: Vec<Vec<(usize, f64)>>,
    penalized: Vec<bool>,
}

impl<'a> Restricted<'a> {
    fn new(x: &'a SparseMatrix, coords: Vec<usize>, penalize_bias: bool) -> Self {
        let mut rows = vec![Vec::new(); x.n_rows()];
        for (a, &j) in coords.iter().enumerate() {
            let col = x.column_unchecked(j);
            for (&i, &v) in col.rows.iter().zip(col.values) {
                rows[i].push((a, v));
            }
        }
        let penalized = coords
            .iter()
            .map(|&j| penalize_bias || Some(j) != x.bias())
            .collect();
        Restricted {
            x,
            coords,
            rows,
            penalized,
        }
    }

    fn margins(&self, theta_s: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(a, v)| v * theta_s[a]).sum())
            .collect()
    }

    fn objective(&self, margins: &[f64], theta_s: &[f64], y: &Labels, lambda: f64) -> f64 {
        let pen: f64 = theta_s
            .iter()
            .zip(&self.penalized)
            .filter(|(_, &p)| p)
            .map(|(t, _)| t * t)
            .sum();
        nll_from_margins(margins, y) + lambda * pen
    }

    fn gradient(&self, residual: &[f64], theta_s: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let mut g = self.x.col_dots_at(&self.coords, residual)?;
        for (a, ga) in g.iter_mut().enumerate() {
            if self.penalized[a] {
                *ga += 2.0 * lambda * theta_s[a];
            }
        }
        Ok(g)
    }

    fn hessian(&self, weights: &[f64], lambda: f64) -> DMatrix<f64> {
        let k = self.coords.len();
        let mut h = DMatrix::<f64>::zeros(k, k);
        for (row, &w) in self.rows.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            for (p, &(a, va)) in row.iter().enumerate() {
                let wa = w * va;
                for &(b, vb) in &row[..=p] {
                    h[(a.max(b), a.min(b))] += wa * vb;
                }
            }
        }
        for a in 0..k {
            if self.penalized[a] {
                h[(a, a)] += 2.0 * lambda;
            }
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        h
    }

    fn hessian_vec(&self, weights: &[f64], lambda: f64, p: &[f64]) -> Vec<f64> {
        let xp = self.margins(p);
        let dxp: Vec<f64> = xp.iter().zip(weights).map(|(a, w)| a * w).collect();
        let mut out: Vec<f64> = self
            .coords
            .iter()
            .map(|&j| self.x.column_unchecked(j).dot(&dxp))
            .collect();
        for (a, o) in out.iter_mut().enumerate() {
            if self.penalized[a] {
                *o += 2.0 * lambda * p[a];
            }
        }
        out
    }

    /// Conjugate gradients on `H p = −g` with an inexact-Newton forcing term.
    fn newton_cg(&self, weights: &[f64], lambda: f64, g: &[f64]) -> Vec<f64> {
        let k = g.len();
        let g_norm = norm2(g);
        let target = (g_norm.sqrt().min(0.5)) * g_norm;
        let mut p = vec![0.0; k];
        let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut dir = r.clone();
        let mut rr = dot(&r, &r);
        for _ in 0..k.clamp(10, 250) {
            if rr.sqrt() <= target {
                break;
            }
            let hd = self.hessian_vec(weights, lambda, &dir);
            let curv = dot(&dir, &hd);
            if curv <= 0.0 {
                break;
            }
            let alpha = rr / curv;
            for a in 0..k {
                p[a] += alpha * dir[a];
                r[a] -= alpha * hd[a];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for a in 0..k {
                dir[a] = r[a] + beta * dir[a];
            }
        }
        if p.iter().all(|&v| v == 0.0) {
            r = g.iter().map(|v| -v).collect();
            return r;
        }
        p
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes the penalized logistic objective subject to `supp(θ) ⊆ active`
/// with a damped Newton method. `warm` (full length) seeds the active
/// coordinates; everything else starts at zero. Running out of iterations is
/// reported through [`SolverStatus::converged`], not as an error.
pub fn fit_restricted(
    x: &SparseMatrix,
    y: &Labels,
    active: &ActiveSet,
    opts: &FitOptions,
    warm: Option<&[f64]>,
) -> Result<RestrictedFit> {
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if !(opts.lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {}",
            opts.lambda
        )));
    }
    if let Some(&j) = active.as_slice().iter().find(|&&j| j >= x.n_cols()) {
        return Err(Error::IndexOutOfRange {
            what: "active index",
            index: j,
            bound: x.n_cols(),
        });
    }
    if let Some(w) = warm {
        if w.len() != x.n_cols() {
            return Err(Error::DimensionMismatch {
                what: "warm start length",
                expected: x.n_cols(),
                got: w.len(),
            });
        }
    }

    let coords = active.sorted();
    let restricted = Restricted::new(x, coords, opts.penalize_bias);
    let lambda = opts.lambda;
    let mut theta_s: Vec<f64> = restricted
        .coords
        .iter()
        .map(|&j| warm.map_or(0.0, |w| w[j]))
        .collect();

    let mut margins = restricted.margins(&theta_s);
    let mut obj = restricted.objective(&margins, &theta_s, y, lambda);
    let mut status = SolverStatus {
        converged: false,
        iterations: 0,
        grad_inf_norm: f64::INFINITY,
        objective: obj,
    };

    for iter in 0..=opts.max_iter {
        let r = residual_from_margins(&margins, y);
        let g = restricted.gradient(&r, &theta_s, lambda)?;
        status.grad_inf_norm = inf_norm(&g);
        status.iterations = iter;
        status.objective = obj;
        if status.grad_inf_norm <= opts.tol {
            status.converged = true;
            break;
        }
        if iter == opts.max_iter {
            break;
        }

        let weights: Vec<f64> = margins
            .iter()
            .map(|&m| {
                let s = sigmoid(m);
                s * (1.0 - s)
            })
            .collect();
        let mut dir = if restricted.coords.len() <= opts.dense_limit {
            let h = restricted.hessian(&weights, lambda);
            match h.cholesky() {
                Some(chol) => {
                    let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
                    chol.solve(&rhs).iter().copied().collect()
                }
                None => g.iter().map(|v| -v).collect(),
            }
        } else {
            restricted.newton_cg(&weights, lambda, &g)
        };
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) || dir.iter().any(|v| !v.is_finite()) {
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        // Below this predicted decrease the objective cannot resolve the
        // Armijo test, so the unit step is taken on trust.
        let noise_floor = 1e-13 * (1.0 + obj.abs());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta_s
                .iter()
                .zip(&dir)
                .map(|(t, d)| t + step * d)
                .collect();
            let trial_margins = restricted.margins(&trial);
            let trial_obj = restricted.objective(&trial_margins, &trial, y, lambda);
            let armijo = trial_obj <= obj + 1e-4 * step * slope;
            if armijo || (step == 1.0 && -slope <= noise_floor && trial_obj <= obj + noise_floor) {
                accepted = Some((trial, trial_margins, trial_obj));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((t, m, o)) => {
                theta_s = t;
                margins = m;
                obj = o;
            }
            None => {
                status.iterations = iter + 1;
                break;
            }
        }
    }

    let mut theta = vec![0.0; x.n_cols()];
    for (&j, &t) in restricted.coords.iter().zip(&theta_s) {
        theta[j] = t;
    }
    Ok(RestrictedFit {
        model: Model {
            theta,
            active: active.clone(),
            lambda,
            bias: x.bias(),
        },
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (SparseMatrix, Labels) {
        let dense: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        if rng.random_bool(0.6) {
                            rng.random_range(-2.0..2.0)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let y = (0..n)
            .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
            .collect();
        (
            SparseMatrix::from_dense(&dense).unwrap(),
            Labels::new(y).unwrap(),
        )
    }

    /// Objective recomputed one scalar at a time from the dense matrix.
    fn scalar_objective(dense: &[Vec<f64>], y: &[i8], theta: &[f64], lambda: f64) -> f64 {
        let mut total = 0.0;
        for (row, &yi) in dense.iter().zip(y) {
            let mut m = 0.0;
            for (x, t) in row.iter().zip(theta) {
                m += x * t;
            }
            total += (1.0 + (-(yi as f64) * m).exp()).ln();
        }
        total + lambda * theta.iter().map(|t| t * t).sum::<f64>()
    }

    #[test]
    fn labels_validated() {
        assert!(Labels::new(vec![1, -1, 1]).is_ok());
        assert!(Labels::new(vec![1, 0]).is_err());
        assert_eq!(Labels::new(vec![1, -1]).unwrap().indicator(), vec![1.0, 0.0]);
    }

    #[test]
    fn active_set_semantics() {
        let mut s = ActiveSet::new();
        assert!(s.insert(5));
        assert!(s.insert(2));
        assert!(!s.insert(5));
        assert_eq!(s.as_slice(), &[5, 2]);
        assert_eq!(s.sorted(), vec![2, 5]);
        assert_eq!(s, [2, 5].into_iter().collect());
    }

    #[test]
    fn loss_values() {
        let cols = [0usize];
        let one = [1.0];
        let row = SparseRow {
            cols: &cols,
            values: &one,
        };
        assert!((loss(&[0.0], row, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        // high-precision reference for log(1 + e^-1)
        assert!((loss(&[1.0], row, 1.0) - 0.313_261_687_518_222_83).abs() < 1e-15);
        assert!(loss(&[1e6], row, 1.0) < 1e-300);
        assert_eq!(loss(&[1e6], row, -1.0), 1e6);
        assert!(loss(&[-800.0], row, -1.0).is_finite());
    }

    #[test]
    fn sigmoid_and_softplus_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(softplus(100.0), 100.0);
        assert!((softplus(-40.0) - (-40.0f64).exp()).abs() < 1e-30);
    }

    #[test]
    fn objective_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y) = random_instance(&mut rng, 4, 3);
        let zero = vec![0.0; 3];
        assert!((objective(&x, &y, &zero, 5.0).unwrap() - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);

        let theta = vec![0.3, -1.2, 0.7];
        let nll = objective(&x, &y, &theta, 0.0).unwrap();
        let scalar = scalar_objective(&x.to_dense(), y.as_slice(), &theta, 0.0);
        assert!((nll - scalar).abs() < 1e-12);
        let pen = objective(&x, &y, &theta, 0.25).unwrap();
        let scalar = scalar_objective(&x.to_dense(), y.as_slice(), &theta, 0.25);
        assert!((pen - scalar).abs() < 1e-12);

        assert!(objective(&x, &y, &[0.0; 2], 1.0).is_err());
        let short = Labels::new(vec![1]).unwrap();
        assert!(objective(&x, &short, &zero, 1.0).is_err());
    }

    #[test]
    fn bias_exempt_objective() {
        let x = SparseMatrix::from_dense(&[vec![1.0], vec![0.0]])
            .unwrap()
            .with_bias_column();
        let y = Labels::new(vec![1, -1]).unwrap();
        let theta = [0.5, 2.0];
        let full = objective_with(&x, &y, &theta, 1.0, true).unwrap();
        let exempt = objective_with(&x, &y, &theta, 1.0, false).unwrap();
        assert!((full - exempt - 4.0).abs() < 1e-12);
        let g_full = gradient_with(&x, &y, &theta, 1.0, true).unwrap();
        let g_ex = gradient_with(&x, &y, &theta, 1.0, false).unwrap();
        assert!((g_full[1] - g_ex[1] - 4.0).abs() < 1e-12);
        assert_eq!(g_full[0], g_ex[0]);
    }

    #[test]
    fn gradient_at_zero_is_half_xty() {
        // symmetric design with balanced labels
        let x = SparseMatrix::from_dense(&[
            vec![1.0, 2.0],
            vec![-1.0, -2.0],
            vec![3.0, 0.5],
            vec![-3.0, -0.5],
        ])
        .unwrap();
        let y = Labels::new(vec![1, -1, 1, -1]).unwrap();
        let g = gradient(&x, &y, &[0.0, 0.0], 3.0).unwrap();
        let xty = x.col_dots(&y.to_f64()).unwrap();
        for (gj, v) in g.iter().zip(xty) {
            assert!((gj + 0.5 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y) = random_instance(&mut rng, 5, 4);
        let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let lambda = 0.7;
        let g = gradient(&x, &y, &theta, lambda).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fd = (objective(&x, &y, &tp, lambda).unwrap() - objective(&x, &y, &tm, lambda).unwrap())
                / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-5, "coord {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn gradient_dominated_by_penalty_for_large_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = random_instance(&mut rng, 6, 3);
        let theta = vec![0.5, -0.25, 1.0];
        let lambda = 1e6;
        let g = gradient(&x, &y, &theta, lambda).unwrap();
        for (gj, t) in g.iter().zip(&theta) {
            assert!((gj / (2.0 * lambda * t) - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn residual_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, y) = random_instance(&mut rng, 7, 3);
        let r = residual(&x, &[0.0; 3], &y).unwrap();
        for (ri, &yi) in r.iter().zip(y.as_slice()) {
            assert_eq!(*ri, if yi == 1 { -0.5 } else { 0.5 });
        }

        let theta = vec![0.4, -0.9, 1.3];
        let r = residual(&x, &theta, &y).unwrap();
        let dense = x.to_dense();
        for i in 0..7 {
            let m: f64 = (0..3).map(|j| dense[i][j] * theta[j]).sum();
            let expected = 1.0 / (1.0 + (-m).exp()) - if y.as_slice()[i] == 1 { 1.0 } else { 0.0 };
            assert!((r[i] - expected).abs() < 1e-12);
            assert!(r[i] > -1.0 && r[i] < 1.0);
        }

        let sep = SparseMatrix::from_dense(&[vec![1.0], vec![-1.0]]).unwrap();
        let yy = Labels::new(vec![1, -1]).unwrap();
        let r = residual(&sep, &[50.0], &yy).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn fit_single_column_matching_labels() {
        let x = SparseMatrix::from_dense(&[vec![1.0], vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]])
            .unwrap();
        let y = Labels::new(vec![1, -1, 1, -1, 1]).unwrap();
        let active: ActiveSet = [0].into_iter().collect();
        let fit = fit_restricted(&x, &y, &active, &FitOptions::with_lambda(1.0), None).unwrap();
        assert!(fit.status.converged);
        let g = gradient(&x, &y, &fit.model.theta, 1.0).unwrap();
        assert!(g[0].abs() <= 1e-8);
        assert!(fit.model.theta[0] > 0.0);
    }

    /// Plain fixed-step gradient descent run far past convergence.
    fn gradient_descent_oracle(x: &SparseMatrix, y: &Labels, lambda: f64) -> Vec<f64> {
        let dense = x.to_dense();
        let d = x.n_cols();
        let lipschitz = 0.25 * dense.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
            + 2.0 * lambda;
        let step = 1.0 / lipschitz;
        let mut theta = vec![0.0; d];
        for _ in 0..200_000 {
            let mut g = vec![0.0; d];
            for (row, &yi) in dense.iter().zip(y.as_slice()) {
                let m: f64 = row.iter().zip(&theta).map(|(a, b)| a * b).sum();
                let yi = yi as f64;
                let w = -yi / (1.0 + (yi * m).exp());
                for j in 0..d {
                    g[j] += w * row[j];
                }
            }
            for j in 0..d {
                theta[j] -= step * (g[j] + 2.0 * lambda * theta[j]);
            }
        }
        theta
    }

    #[test]
    fn fit_full_support_matches_descent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = random_instance(&mut rng, 6, 3);
        let active: ActiveSet = (0..3).collect();
        let fit = fit_restricted(&x, &y, &active, &FitOptions::with_lambda(10.0), None).unwrap();
        assert!(fit.status.converged);
        let oracle = gradient_descent_oracle(&x, &y, 10.0);
        for (a, b) in fit.model.theta.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn fit_huge_lambda_shrinks_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (x, y) = random_instance(&mut rng, 8, 4);
        let active: ActiveSet = (0..4).collect();
        let lambda = 1e6;
        let fit = fit_restricted(&x, &y, &active, &FitOptions::with_lambda(lambda), None).unwrap();
        let max_abs = x.to_dense().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = 8.0 * max_abs / (2.0 * lambda);
        let norm = fit.model.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        assert!(norm <= bound, "{norm} > {bound}");
    }

    #[test]
    fn fit_keeps_off_support_zero_and_uses_warm_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, y) = random_instance(&mut rng, 12, 5);
        let active: ActiveSet = [3, 1].into_iter().collect();
        let opts = FitOptions::with_lambda(0.5);
        let cold = fit_restricted(&x, &y, &active, &opts, None).unwrap();
        for j in [0, 2, 4] {
            assert_eq!(cold.model.theta[j], 0.0);
        }
        let warm = fit_restricted(&x, &y, &active, &opts, Some(&cold.model.theta)).unwrap();
        assert!(warm.status.iterations <= 1);
        for (a, b) in warm.model.theta.iter().zip(&cold.model.theta) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_path_agrees_with_dense_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (x, y) = random_instance(&mut rng, 30, 12);
        let x = x.with_bias_column();
        let active: ActiveSet = (0..13).collect();
        let dense = fit_restricted(&x, &y, &active, &FitOptions::with_lambda(0.3), None).unwrap();
        let cg_opts = FitOptions {
            dense_limit: 0,
            ..FitOptions::with_lambda(0.3)
        };
        let cg = fit_restricted(&x, &y, &active, &cg_opts, None).unwrap();
        assert!(dense.status.converged && cg.status.converged);
        for (a, b) in dense.model.theta.iter().zip(&cg.model.theta) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        // separable data with no penalty has no finite minimizer
        let x = SparseMatrix::from_dense(&[vec![1.0], vec![-1.0]]).unwrap();
        let y = Labels::new(vec![1, -1]).unwrap();
        let active: ActiveSet = [0].into_iter().collect();
        let opts = FitOptions {
            max_iter: 3,
            ..FitOptions::with_lambda(0.0)
        };
        let fit = fit_restricted(&x, &y, &active, &opts, None).unwrap();
        assert!(!fit.status.converged);
        assert!(fit.model.theta[0] > 0.0);
    }

    #[test]
    fn empty_active_set_gives_zero_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (x, y) = random_instance(&mut rng, 4, 2);
        let fit = fit_restricted(&x, &y, &ActiveSet::new(), &FitOptions::default(), None).unwrap();
        assert!(fit.status.converged);
        assert_eq!(fit.model.theta, vec![0.0, 0.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn objective_is_convex(seed in 0u64..10_000, t in 0.01f64..0.99) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (x, y) = random_instance(&mut rng, 8, 4);
                let a: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
                let b: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
                let mix: Vec<f64> = a.iter().zip(&b).map(|(p, q)| t * p + (1.0 - t) * q).collect();
                let lhs = objective(&x, &y, &mix, 0.3).unwrap();
                let rhs = t * objective(&x, &y, &a, 0.3).unwrap() + (1.0 - t) * objective(&x, &y, &b, 0.3).unwrap();
                prop_assert!(lhs <= rhs + 1e-10);
            }

            #[test]
            fn residual_strictly_inside_unit_interval(seed in 0u64..10_000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (x, y) = random_instance(&mut rng, 10, 5);
                let theta: Vec<f64> = (0..5).map(|_| rng.random_range(-4.0..4.0)).collect();
                let r = residual(&x, &theta, &y).unwrap();
                let p: Vec<f64> = x.mat_vec(&theta).unwrap().into_iter().map(sigmoid).collect();
                for i in 0..r.len() {
                    prop_assert!(r[i] > -1.0 && r[i] < 1.0);
                    // negative exactly when the predicted probability of +1 is below the indicator
                    let ind = if y.as_slice()[i] == 1 { 1.0 } else { 0.0 };
                    prop_assert_eq!(r[i] < 0.0, p[i] < ind);
                }
            }

            #[test]
            fn restricted_fit_is_stationary(seed in 0u64..10_000, lambda in 0.01f64..10.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (x, y) = random_instance(&mut rng, 10, 6);
                let active: ActiveSet = (0..6).filter(|_| rng.random_bool(0.5)).collect();
                let fit = fit_restricted(&x, &y, &active, &FitOptions::with_lambda(lambda), None).unwrap();
                prop_assert!(fit.status.converged);
                let g = gradient(&x, &y, &fit.model.theta, lambda).unwrap();
                for j in 0..6 {
                    if active.contains(j) {
                        prop_assert!(g[j].abs() <= 1e-8);
                    } else {
                        prop_assert_eq!(fit.model.theta[j], 0.0);
                    }
                }
            }
        }
    }
}
