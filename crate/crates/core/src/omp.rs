//! Logistic Orthogonal Matching Pursuit.
//!
//! Each iteration activates the inactive feature whose column is most
//! correlated with the current residual, refits the L2-penalized logistic
//! model on the active support and recomputes the residual
//! `σ(Xθ) − 1{y = +1}`. The bias column is active from the start and never
//! counts against the budget.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::logistic::{fit_restricted, residual, ActiveSet, FitOptions, Labels, Model};
use crate::sparse::SparseMatrix;
use crate::trajectory::{Checkpointer, Step, StopReason, Trajectory};

#[derive(Debug, Clone)]
pub struct OmpConfig {
    /// Maximum number of non-bias features to activate.
    pub budget: usize,
    /// Stop once the best absolute correlation is at most this.
    pub epsilon: f64,
    /// Refit settings; `refit.lambda` is the L2 strength.
    pub refit: FitOptions,
    /// Keep weight snapshots every `checkpoint_every` atoms.
    pub record_trajectory: bool,
    pub checkpoint_every: usize,
    /// Score columns by correlation divided by their L2 norm.
    pub normalize_columns: bool,
}

impl Default for OmpConfig {
    fn default() -> Self {
        OmpConfig {
            budget: 2000,
            epsilon: 0.0,
            refit: FitOptions::default(),
            record_trajectory: true,
            checkpoint_every: 100,
            normalize_columns: false,
        }
    }
}

impl OmpConfig {
    pub fn new(budget: usize, lambda: f64) -> Self {
        OmpConfig {
            budget,
            refit: FitOptions::with_lambda(lambda),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidInput("budget must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if !(self.refit.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be non-negative, got {}",
                self.refit.lambda
            )));
        }
        Ok(())
    }
}

/// Picks `argmax_{j ∉ active, j ≠ bias} |X_jᵀ r|`, lowest index on ties, and
/// returns it with its signed correlation. With `scale`, correlations are
/// divided by the given column norms (zero-norm columns score zero).
pub fn select_feature(
    x: &SparseMatrix,
    r: &[f64],
    active: &ActiveSet,
    scale: Option<&[f64]>,
) -> Result<(usize, f64)> {
    if r.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "residual length",
            expected: x.n_rows(),
            got: r.len(),
        });
    }
    let candidates: Vec<usize> = (0..x.n_cols())
        .filter(|&j| !active.contains(j) && Some(j) != x.bias())
        .collect();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|&j| {
            let c = x.column_unchecked(j).dot(r);
            match scale {
                Some(norms) if norms[j] > 0.0 => c / norms[j],
                Some(_) => 0.0,
                None => c,
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (&j, &c) in candidates.iter().zip(&scores) {
        if best.is_none_or(|(_, b)| c.abs() > b.abs()) {
            best = Some((j, c));
        }
    }
    best.ok_or(Error::Exhausted)
}

/// Step-wise driver for [`run_omp`], exposing the state between iterations.
pub struct OmpRun<'a> {
    x: &'a SparseMatrix,
    y: &'a Labels,
    cfg: OmpConfig,
    scale: Option<Vec<f64>>,
    active: ActiveSet,
    theta: Vec<f64>,
    residual: Vec<f64>,
    fitted: bool,
    trajectory: Trajectory,
    checkpointer: Checkpointer,
}

impl<'a> OmpRun<'a> {
    pub fn new(x: &'a SparseMatrix, y: &'a Labels, cfg: OmpConfig) -> Result<Self> {
        cfg.validate()?;
        if y.len() != x.n_rows() {
            return Err(Error::DimensionMismatch {
                what: "label count",
                expected: x.n_rows(),
                got: y.len(),
            });
        }
        let non_bias = x.n_cols() - usize::from(x.bias().is_some());
        if non_bias == 0 {
            return Err(Error::InvalidInput(
                "design matrix has no non-bias columns".into(),
            ));
        }
        let mut active = ActiveSet::new();
        if let Some(b) = x.bias() {
            active.insert(b);
        }
        let scale = cfg.normalize_columns.then(|| x.column_norms());
        let every = if cfg.record_trajectory {
            cfg.checkpoint_every
        } else {
            0
        };
        Ok(OmpRun {
            x,
            y,
            scale,
            active,
            theta: vec![0.0; x.n_cols()],
            // r⁰ = y, the labels themselves
            residual: y.to_f64(),
            fitted: false,
            trajectory: Trajectory::new(),
            checkpointer: Checkpointer::new(every),
            cfg,
        })
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn active(&self) -> &ActiveSet {
        &self.active
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    /// Non-bias features currently active.
    pub fn atoms(&self) -> usize {
        self.active.len() - usize::from(self.x.bias().is_some())
    }

    pub fn is_done(&self) -> bool {
        self.trajectory.stop.is_some()
    }

    /// Runs one select/activate/refit/residual iteration. Returns `None` once
    /// the loop has terminated.
    pub fn step(&mut self) -> Result<Option<&Step>> {
        if self.is_done() {
            return Ok(None);
        }
        if self.atoms() >= self.cfg.budget {
            self.trajectory.stop = Some(StopReason::Budget);
            return Ok(None);
        }
        let (j, corr) = match select_feature(
            self.x,
            &self.residual,
            &self.active,
            self.scale.as_deref(),
        ) {
            Ok(pick) => pick,
            Err(Error::Exhausted) => {
                self.trajectory.stop = Some(StopReason::Exhausted);
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        if corr.abs() <= self.cfg.epsilon {
            self.trajectory.stop = Some(StopReason::Precision);
            return Ok(None);
        }
        self.active.insert(j);
        let fit = fit_restricted(
            self.x,
            self.y,
            &self.active,
            &self.cfg.refit,
            Some(&self.theta),
        )?;
        self.theta = fit.model.theta.clone();
        self.residual = residual(self.x, &self.theta, self.y)?;
        self.fitted = true;
        let atoms = self.atoms();
        self.checkpointer
            .observe(atoms, &fit.model, &mut self.trajectory.checkpoints);
        self.trajectory.steps.push(Step {
            features: vec![j],
            group: None,
            score: corr,
            objective: fit.status.objective,
            solver: fit.status,
        });
        Ok(self.trajectory.steps.last())
    }

    /// Runs to termination and returns the final model and trajectory.
    pub fn finish(mut self) -> Result<(Model, Trajectory)> {
        while self.step()?.is_some() {}
        if !self.fitted {
            // the loop stopped before any refit; fit the bias-only support
            let fit = fit_restricted(self.x, self.y, &self.active, &self.cfg.refit, None)?;
            self.theta = fit.model.theta;
        }
        let model = Model {
            theta: self.theta,
            active: self.active,
            lambda: self.cfg.refit.lambda,
            bias: self.x.bias(),
        };
        if self.cfg.record_trajectory {
            let atoms = model.active.len() - usize::from(model.bias.is_some());
            self.checkpointer
                .finish(atoms, &model, &mut self.trajectory.checkpoints);
        }
        Ok((model, self.trajectory))
    }
}

/// Logistic-OMP: greedy selection until the budget is reached, the best
/// correlation drops to `epsilon`, or no candidate feature remains.
pub fn run_omp(x: &SparseMatrix, y: &Labels, cfg: &OmpConfig) -> Result<(Model, Trajectory)> {
    OmpRun::new(x, y, cfg.clone())?.finish()
}
