//! Per-iteration records of a greedy selection run.

use crate::logistic::{Model, SolverStatus};

/// Why a greedy loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    Precision,
    Exhausted,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Budget => "budget",
            StopReason::Precision => "precision",
            StopReason::Exhausted => "exhausted",
        }
    }
}

/// The group chosen in a GOMP iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPick {
    pub position: usize,
    pub name: String,
    /// Index set as loaded, before any overlap removal.
    pub original: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Step {
    /// Features activated in this iteration, ascending.
    pub features: Vec<usize>,
    pub group: Option<GroupPick>,
    /// Selection score (signed correlation for OMP, criterion value for GOMP).
    pub score: f64,
    pub objective: f64,
    pub solver: SolverStatus,
}

/// Sparse snapshot of the weights once `atoms` non-bias features were active.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub atoms: usize,
    pub weights: Vec<(usize, f64)>,
}

impl Checkpoint {
    pub fn from_model(atoms: usize, model: &Model) -> Self {
        Checkpoint {
            atoms,
            weights: model
                .theta
                .iter()
                .enumerate()
                .filter(|(_, &t)| t != 0.0)
                .map(|(j, &t)| (j, t))
                .collect(),
        }
    }

    /// Rebuilds a dense model of dimension `d`.
    pub fn to_model(&self, d: usize, bias: Option<usize>, lambda: f64) -> Model {
        let mut model = Model::zeros(d, bias, lambda);
        for &(j, w) in &self.weights {
            model.theta[j] = w;
            model.active.insert(j);
        }
        model
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub checkpoints: Vec<Checkpoint>,
    pub stop: Option<StopReason>,
}

impl Trajectory {
    pub(crate) fn new() -> Self {
        Trajectory {
            steps: Vec::new(),
            checkpoints: Vec::new(),
            stop: None,
        }
    }

    /// Every activated feature, in activation order.
    pub fn selected_features(&self) -> Vec<usize> {
        self.steps
            .iter()
            .flat_map(|s| s.features.iter().copied())
            .collect()
    }

    /// Number of refits whose solver hit its iteration cap.
    pub fn unconverged_fits(&self) -> usize {
        self.steps.iter().filter(|s| !s.solver.converged).count()
    }
}

/// Emits a checkpoint each time the atom count crosses a multiple of `every`.
pub(crate) struct Checkpointer {
    every: usize,
    next: usize,
    last_atoms: Option<usize>,
}

impl Checkpointer {
    pub(crate) fn new(every: usize) -> Self {
        Checkpointer {
            every,
            next: every,
            last_atoms: None,
        }
    }

    pub(crate) fn observe(&mut self, atoms: usize, model: &Model, out: &mut Vec<Checkpoint>) {
        if self.every == 0 || atoms < self.next {
            return;
        }
        out.push(Checkpoint::from_model(atoms, model));
        self.last_atoms = Some(atoms);
        while self.next <= atoms {
            self.next += self.every;
        }
    }

    pub(crate) fn finish(&mut self, atoms: usize, model: &Model, out: &mut Vec<Checkpoint>) {
        if self.last_atoms != Some(atoms) {
            out.push(Checkpoint::from_model(atoms, model));
            self.last_atoms = Some(atoms);
        }
    }
}
