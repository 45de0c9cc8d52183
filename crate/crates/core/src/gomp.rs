//! Logistic overlapping Group OMP.
//!
//! Groups of features are activated whole. After each activation the chosen
//! indices are removed from every other group, so candidate groups stay
//! disjoint from the active set even when the input structure overlaps.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grouping::augment_singletons;
use crate::logistic::{fit_restricted, residual, ActiveSet, FitOptions, Labels, Model};
use crate::sparse::SparseMatrix;
use crate::trajectory::{Checkpointer, GroupPick, Step, StopReason, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    /// Ascending, duplicate-free feature indices.
    pub indices: Vec<usize>,
}

impl Group {
    pub fn new(name: impl Into<String>, indices: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        Group {
            name: name.into(),
            indices: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Named, possibly overlapping feature groups.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupStructure {
    pub groups: Vec<Group>,
}

impl GroupStructure {
    pub fn new(groups: Vec<Group>) -> Self {
        GroupStructure { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Group> {
        self.groups.iter()
    }

    /// Checks indices against `d`, that no group holds the bias and that names
    /// are unique.
    pub fn validate(&self, d: usize, bias: Option<usize>) -> Result<()> {
        let mut names = HashSet::new();
        for g in &self.groups {
            if !names.insert(g.name.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate group name {:?}",
                    g.name
                )));
            }
            for &j in &g.indices {
                if j >= d {
                    return Err(Error::InvalidInput(format!(
                        "group {:?} has index {j} outside 0..{d}",
                        g.name
                    )));
                }
                if Some(j) == bias {
                    return Err(Error::InvalidInput(format!(
                        "group {:?} contains the bias column {j}",
                        g.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Removes `selected` from every group in place; returns the positions of
    /// groups that changed.
    pub fn remove_indices(&mut self, selected: &[usize]) -> Vec<usize> {
        let drop: HashSet<usize> = selected.iter().copied().collect();
        let mut changed = Vec::new();
        for (pos, g) in self.groups.iter_mut().enumerate() {
            let before = g.indices.len();
            g.indices.retain(|j| !drop.contains(j));
            if g.indices.len() != before {
                changed.push(pos);
            }
        }
        changed
    }
}

/// `G_i ← G_i \ selected` for every group; emptied groups are kept and can no
/// longer be selected.
pub fn remove_overlap(groups: &GroupStructure, selected: &[usize]) -> GroupStructure {
    let mut out = groups.clone();
    out.remove_indices(selected);
    out
}

/// Group scoring rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Criterion {
    /// `‖X_Gᵀ r‖²`, appropriate when group columns are orthonormal.
    Orthonormal,
    /// `|rᵀ X_G (X_Gᵀ X_G)⁻¹ X_Gᵀ r|`, the squared projection of `r` onto the
    /// group's span.
    GramCorrected,
    /// `‖X_Gᵀ r‖² / |G|`, which stops large noisy groups from dominating.
    #[default]
    Averaged,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Orthonormal => "orthonormal",
            Criterion::GramCorrected => "gram_corrected",
            Criterion::Averaged => "averaged",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthonormal" => Ok(Criterion::Orthonormal),
            "gram_corrected" | "gram" => Ok(Criterion::GramCorrected),
            "averaged" => Ok(Criterion::Averaged),
            other => Err(Error::InvalidInput(format!(
                "unknown criterion {other:?} (expected orthonormal, gram_corrected or averaged)"
            ))),
        }
    }
}

const GRAM_JITTER: f64 = 1e-10;

fn check_group(x: &SparseMatrix, group: &[usize], r: &[f64]) -> Result<()> {
    if r.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "residual length",
            expected: x.n_rows(),
            got: r.len(),
        });
    }
    if let Some(&j) = group.iter().find(|&&j| j >= x.n_cols()) {
        return Err(Error::IndexOutOfRange {
            what: "group index",
            index: j,
            bound: x.n_cols(),
        });
    }
    Ok(())
}

fn sum_sq(corr: &[f64], group: &[usize]) -> f64 {
    group.iter().map(|&j| corr[j] * corr[j]).sum()
}

pub fn score_group_orthonormal(x: &SparseMatrix, group: &[usize], r: &[f64]) -> Result<f64> {
    check_group(x, group, r)?;
    if group.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(group
        .iter()
        .map(|&j| x.column_unchecked(j).dot(r).powi(2))
        .sum())
}

pub fn score_group_averaged(x: &SparseMatrix, group: &[usize], r: &[f64]) -> Result<f64> {
    let s = score_group_orthonormal(x, group, r)?;
    Ok(if group.is_empty() {
        s
    } else {
        s / group.len() as f64
    })
}

pub fn score_group_gram(x: &SparseMatrix, group: &[usize], r: &[f64]) -> Result<f64> {
    check_group(x, group, r)?;
    if group.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let corr: Vec<f64> = group.iter().map(|&j| x.column_unchecked(j).dot(r)).collect();
    Ok(gram_quadratic_form(x, group, &corr))
}

fn gram_matrix(x: &SparseMatrix, group: &[usize]) -> DMatrix<f64> {
    let k = group.len();
    let mut g = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        let ca = x.column_unchecked(group[a]);
        for b in 0..=a {
            let v = ca.dot_column(&x.column_unchecked(group[b]));
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// `|bᵀ (X_Gᵀ X_G)⁻¹ b|` for `b = X_Gᵀ r`. A Gram matrix whose Cholesky pivots
/// collapse (relative to its diagonal) is treated as singular and solved with
/// `1e-10·I` added, escalating if that still fails.
fn gram_quadratic_form(x: &SparseMatrix, group: &[usize], corr: &[f64]) -> f64 {
    let gram = gram_matrix(x, group);
    let b = DVector::from_column_slice(corr);
    let well_posed = gram.clone().cholesky().filter(|chol| {
        let l = chol.l_dirty();
        (0..gram.nrows()).all(|k| l[(k, k)] * l[(k, k)] > 1e-12 * gram[(k, k)].max(f64::MIN_POSITIVE))
    });
    if let Some(chol) = well_posed {
        return b.dot(&chol.solve(&b)).abs();
    }
    let mut jitter = GRAM_JITTER;
    loop {
        let mut shifted = gram.clone();
        for k in 0..shifted.nrows() {
            shifted[(k, k)] += jitter;
        }
        if let Some(chol) = shifted.cholesky() {
            return b.dot(&chol.solve(&b)).abs();
        }
        jitter *= 100.0;
    }
}

/// Scores every group under `criterion` from precomputed correlations
/// `corr = Xᵀr`. Empty groups score `−∞`.
fn score_all(
    x: &SparseMatrix,
    groups: &GroupStructure,
    corr: &[f64],
    criterion: Criterion,
) -> Vec<f64> {
    groups
        .groups
        .par_iter()
        .map(|g| {
            if g.is_empty() {
                return f64::NEG_INFINITY;
            }
            match criterion {
                Criterion::Orthonormal => sum_sq(corr, &g.indices),
                Criterion::Averaged => sum_sq(corr, &g.indices) / g.len() as f64,
                Criterion::GramCorrected => {
                    let c: Vec<f64> = g.indices.iter().map(|&j| corr[j]).collect();
                    gram_quadratic_form(x, &g.indices, &c)
                }
            }
        })
        .collect()
}

fn argmax_first(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (pos, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((pos, s));
        }
    }
    best
}

/// Highest-scoring non-empty group (lowest position on ties).
pub fn select_group(
    x: &SparseMatrix,
    groups: &GroupStructure,
    r: &[f64],
    criterion: Criterion,
) -> Result<(usize, f64)> {
    if r.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "residual length",
            expected: x.n_rows(),
            got: r.len(),
        });
    }
    groups.validate(x.n_cols(), None)?;
    let corr = x.col_dots(r)?;
    argmax_first(&score_all(x, groups, &corr, criterion)).ok_or(Error::Exhausted)
}

#[derive(Debug, Clone)]
pub struct GompConfig {
    /// Stop once this many non-bias features are active; one group may
    /// overshoot it.
    pub budget: usize,
    /// Stop once the chosen group's `‖X_Gᵀ r‖²` is at most this.
    pub epsilon: f64,
    pub refit: FitOptions,
    pub criterion: Criterion,
    /// Append every non-bias feature as its own group before running.
    pub augment_singletons: bool,
    pub record_trajectory: bool,
    pub checkpoint_every: usize,
}

impl Default for GompConfig {
    fn default() -> Self {
        GompConfig {
            budget: 2000,
            epsilon: 0.0,
            refit: FitOptions::default(),
            criterion: Criterion::Averaged,
            augment_singletons: true,
            record_trajectory: true,
            checkpoint_every: 100,
        }
    }
}

impl GompConfig {
    pub fn new(budget: usize, lambda: f64) -> Self {
        GompConfig {
            budget,
            refit: FitOptions::with_lambda(lambda),
            ..Self::default()
        }
    }
}

/// Step-wise driver for [`run_gomp`].
pub struct GompRun<'a> {
    x: &'a SparseMatrix,
    y: &'a Labels,
    cfg: GompConfig,
    original: GroupStructure,
    groups: GroupStructure,
    active: ActiveSet,
    theta: Vec<f64>,
    residual: Vec<f64>,
    fitted: bool,
    trajectory: Trajectory,
    checkpointer: Checkpointer,
}

impl<'a> GompRun<'a> {
    pub fn new(
        x: &'a SparseMatrix,
        y: &'a Labels,
        groups: &GroupStructure,
        cfg: GompConfig,
    ) -> Result<Self> {
        if cfg.budget == 0 {
            return Err(Error::InvalidInput("budget must be at least 1".into()));
        }
        if !(cfg.epsilon >= 0.0) || !(cfg.refit.lambda >= 0.0) {
            return Err(Error::InvalidInput(
                "epsilon and lambda must be non-negative".into(),
            ));
        }
        if y.len() != x.n_rows() {
            return Err(Error::DimensionMismatch {
                what: "label count",
                expected: x.n_rows(),
                got: y.len(),
            });
        }
        let structure = if cfg.augment_singletons {
            augment_singletons(groups, x.n_cols(), x.bias())
        } else {
            groups.clone()
        };
        structure.validate(x.n_cols(), x.bias())?;
        if structure.iter().all(Group::is_empty) {
            return Err(Error::InvalidInput("group structure has no features".into()));
        }
        let mut active = ActiveSet::new();
        if let Some(b) = x.bias() {
            active.insert(b);
        }
        let every = if cfg.record_trajectory {
            cfg.checkpoint_every
        } else {
            0
        };
        Ok(GompRun {
            x,
            y,
            original: structure.clone(),
            groups: structure,
            active,
            theta: vec![0.0; x.n_cols()],
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

    /// The working group structure after overlap removal so far.
    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn atoms(&self) -> usize {
        self.active.len() - usize::from(self.x.bias().is_some())
    }

    pub fn is_done(&self) -> bool {
        self.trajectory.stop.is_some()
    }

    pub fn step(&mut self) -> Result<Option<&Step>> {
        if self.is_done() {
            return Ok(None);
        }
        if self.atoms() >= self.cfg.budget {
            self.trajectory.stop = Some(StopReason::Budget);
            return Ok(None);
        }
        let corr = self.x.col_dots(&self.residual)?;
        let scores = score_all(self.x, &self.groups, &corr, self.cfg.criterion);
        let Some((pos, score)) = argmax_first(&scores) else {
            self.trajectory.stop = Some(StopReason::Exhausted);
            return Ok(None);
        };
        let chosen = self.groups.groups[pos].indices.clone();
        if sum_sq(&corr, &chosen) <= self.cfg.epsilon {
            self.trajectory.stop = Some(StopReason::Precision);
            return Ok(None);
        }
        for &j in &chosen {
            self.active.insert(j);
        }
        self.groups.remove_indices(&chosen);
        debug_assert!(self
            .groups
            .iter()
            .all(|g| g.indices.iter().all(|&j| !self.active.contains(j))));

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
        let original = &self.original.groups[pos];
        self.trajectory.steps.push(Step {
            features: chosen,
            group: Some(GroupPick {
                position: pos,
                name: original.name.clone(),
                original: original.indices.clone(),
            }),
            score,
            objective: fit.status.objective,
            solver: fit.status,
        });
        Ok(self.trajectory.steps.last())
    }

    pub fn finish(mut self) -> Result<(Model, Trajectory)> {
        while self.step()?.is_some() {}
        if !self.fitted {
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

/// Overlapping Group OMP until the feature budget is reached, the chosen
/// group's correlation drops to `epsilon`, or every group is exhausted.
pub fn run_gomp(
    x: &SparseMatrix,
    y: &Labels,
    groups: &GroupStructure,
    cfg: &GompConfig,
) -> Result<(Model, Trajectory)> {
    GompRun::new(x, y, groups, cfg.clone())?.finish()
}
