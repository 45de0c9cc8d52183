//! Accuracy, dev-set grid search and report serialization.

use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{fit_penalized, sparsity, PenaltyConfig, ProxOptions};
use crate::error::{Error, Result};
use crate::gomp::{run_gomp, Criterion, GompConfig, GroupStructure};
use crate::logistic::{FitOptions, Labels, Model};
use crate::omp::{run_omp, OmpConfig};
use crate::sparse::SparseMatrix;
use crate::trajectory::Trajectory;

/// Fraction of rows whose margin sign matches the label; a zero margin
/// predicts +1.
pub fn accuracy(model: &Model, x: &SparseMatrix, y: &Labels) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty evaluation set".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if model.dim() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            what: "model dimension",
            expected: x.n_cols(),
            got: model.dim(),
        });
    }
    let margins = model.margins(x)?;
    let correct = margins
        .iter()
        .zip(y.as_slice())
        .filter(|(&m, &yi)| (if m >= 0.0 { 1 } else { -1 }) == yi)
        .count();
    Ok(correct as f64 / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Omp,
    Gomp,
    Lasso,
    Ridge,
    Elastic,
    None,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Omp => "omp",
            Method::Gomp => "gomp",
            Method::Lasso => "lasso",
            Method::Ridge => "ridge",
            Method::Elastic => "elastic",
            Method::None => "none",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "omp" => Method::Omp,
            "gomp" => Method::Gomp,
            "lasso" => Method::Lasso,
            "ridge" => Method::Ridge,
            "elastic" => Method::Elastic,
            "none" => Method::None,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown method {other:?} (expected omp, gomp, lasso, ridge, elastic or none)"
                )))
            }
        })
    }
}

/// One grid point. OMP, GOMP and ridge use `lambda_l2` only, lasso uses
/// `lambda_l1` only, elastic net uses both.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hyper {
    pub lambda_l1: f64,
    pub lambda_l2: f64,
}

impl Hyper {
    pub fn for_method(method: Method, lambda: f64) -> Self {
        match method {
            Method::Lasso => Hyper { lambda_l1: lambda, lambda_l2: 0.0 },
            Method::None => Hyper::default(),
            _ => Hyper { lambda_l1: 0.0, lambda_l2: lambda },
        }
    }

    /// The strength used for the first tie-break: λ₁ for lasso, λ₂ otherwise.
    fn main(&self, method: Method) -> f64 {
        if method == Method::Lasso {
            self.lambda_l1
        } else {
            self.lambda_l2
        }
    }
}

pub const DEFAULT_LAMBDAS: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub method: Method,
    pub lambdas: Vec<f64>,
    /// ℓ₁ values for the elastic-net cross product; `lambdas` supplies ℓ₂.
    pub l1_lambdas: Vec<f64>,
}

impl GridSpec {
    pub fn new(method: Method) -> Self {
        GridSpec {
            method,
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            l1_lambdas: DEFAULT_LAMBDAS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lists: &[&Vec<f64>] = if self.method == Method::Elastic {
            &[&self.lambdas, &self.l1_lambdas]
        } else {
            &[&self.lambdas]
        };
        for list in lists {
            if list.is_empty() && self.method != Method::None {
                return Err(Error::InvalidInput("λ grid is empty".into()));
            }
            if let Some(v) = list.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidInput(format!("grid values must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Grid points in search order; the unregularized method has one point.
    pub fn points(&self) -> Vec<Hyper> {
        match self.method {
            Method::None => vec![Hyper::default()],
            Method::Elastic => self
                .l1_lambdas
                .iter()
                .flat_map(|&l1| {
                    self.lambdas
                        .iter()
                        .map(move |&l2| Hyper { lambda_l1: l1, lambda_l2: l2 })
                })
                .collect(),
            m => self.lambdas.iter().map(|&l| Hyper::for_method(m, l)).collect(),
        }
    }
}

/// Everything besides the regularization strengths needed to train a model.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub method: Method,
    pub budget: usize,
    pub epsilon: f64,
    pub criterion: Criterion,
    pub augment_singletons: bool,
    pub normalize_columns: bool,
    pub checkpoint_every: usize,
    pub refit: FitOptions,
    pub prox: ProxOptions,
}

impl TrainConfig {
    pub fn new(method: Method) -> Self {
        TrainConfig {
            method,
            budget: 2000,
            epsilon: 0.0,
            criterion: Criterion::Averaged,
            augment_singletons: true,
            normalize_columns: false,
            checkpoint_every: 100,
            refit: FitOptions::default(),
            prox: ProxOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    /// Present for the greedy methods.
    pub trajectory: Option<Trajectory>,
    pub converged: bool,
    pub seconds: f64,
}

pub fn train_one(
    x: &SparseMatrix,
    y: &Labels,
    groups: Option<&GroupStructure>,
    cfg: &TrainConfig,
    hyper: Hyper,
) -> Result<Trained> {
    let start = Instant::now();
    let refit = FitOptions {
        lambda: hyper.lambda_l2,
        ..cfg.refit.clone()
    };
    let (model, trajectory, converged) = match cfg.method {
        Method::Omp => {
            let omp = OmpConfig {
                budget: cfg.budget,
                epsilon: cfg.epsilon,
                refit,
                record_trajectory: true,
                checkpoint_every: cfg.checkpoint_every,
                normalize_columns: cfg.normalize_columns,
            };
            let (model, traj) = run_omp(x, y, &omp)?;
            let ok = traj.unconverged_fits() == 0;
            (model, Some(traj), ok)
        }
        Method::Gomp => {
            let empty = GroupStructure::default();
            let groups = match groups {
                Some(g) => g,
                None if cfg.augment_singletons => &empty,
                None => {
                    return Err(Error::InvalidInput(
                        "gomp needs a group structure or singleton augmentation".into(),
                    ))
                }
            };
            let gomp = GompConfig {
                budget: cfg.budget,
                epsilon: cfg.epsilon,
                refit,
                criterion: cfg.criterion,
                augment_singletons: cfg.augment_singletons,
                record_trajectory: true,
                checkpoint_every: cfg.checkpoint_every,
            };
            let (model, traj) = run_gomp(x, y, groups, &gomp)?;
            let ok = traj.unconverged_fits() == 0;
            (model, Some(traj), ok)
        }
        Method::Lasso | Method::Ridge | Method::Elastic | Method::None => {
            let prox = ProxOptions {
                penalize_bias: cfg.refit.penalize_bias,
                ..cfg.prox.clone()
            };
            let penalty = PenaltyConfig {
                lambda_l1: hyper.lambda_l1,
                lambda_l2: hyper.lambda_l2,
            };
            let fit = fit_penalized(x, y, &penalty, &prox, None)?;
            (fit.model, None, fit.status.converged)
        }
    };
    Ok(Trained {
        model,
        trajectory,
        converged,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// One fit's outcome. Serialized as a single line of space-separated
/// `key=value` fields; see [`FitReport::to_record`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub method: Method,
    pub hyper: Hyper,
    pub dev_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub sparsity: f64,
    pub nonzeros: usize,
    pub converged: bool,
    pub seconds: f64,
    /// Cumulative non-bias atom count after each greedy step.
    pub atoms: Vec<usize>,
    pub error: Option<String>,
}

impl FitReport {
    pub fn failed(method: Method, hyper: Hyper, err: &Error) -> Self {
        FitReport {
            method,
            hyper,
            dev_accuracy: None,
            test_accuracy: None,
            sparsity: 0.0,
            nonzeros: 0,
            converged: false,
            seconds: 0.0,
            atoms: Vec::new(),
            error: Some(err.to_string()),
        }
    }

    pub fn from_trained(
        method: Method,
        hyper: Hyper,
        trained: &Trained,
        dev: Option<(&SparseMatrix, &Labels)>,
        test: Option<(&SparseMatrix, &Labels)>,
    ) -> Result<Self> {
        let score = |set: Option<(&SparseMatrix, &Labels)>| {
            set.map(|(x, y)| accuracy(&trained.model, x, y)).transpose()
        };
        let atoms = trained
            .trajectory
            .as_ref()
            .map(|t| {
                t.steps
                    .iter()
                    .scan(0, |n, s| {
                        *n += s.features.len();
                        Some(*n)
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(FitReport {
            method,
            hyper,
            dev_accuracy: score(dev)?,
            test_accuracy: score(test)?,
            sparsity: sparsity(&trained.model),
            nonzeros: trained.model.nonzeros(),
            converged: trained.converged,
            seconds: trained.seconds,
            atoms,
            error: None,
        })
    }

    /// `method=… lambda_l1=… lambda_l2=… dev_accuracy=… test_accuracy=…
    /// sparsity=… nonzeros=… converged=… seconds=… atoms=… error=…`.
    /// Absent values are written as `na`; the atom list is comma-separated;
    /// the error text is percent-escaped. Floats use the shortest form that
    /// parses back to the same value.
    pub fn to_record(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("na".to_owned(), |v| format!("{v:?}"));
        let atoms = if self.atoms.is_empty() {
            "na".to_owned()
        } else {
            self.atoms.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        format!(
            "method={} lambda_l1={:?} lambda_l2={:?} dev_accuracy={} test_accuracy={} sparsity={:?} nonzeros={} converged={} seconds={:?} atoms={} error={}",
            self.method,
            self.hyper.lambda_l1,
            self.hyper.lambda_l2,
            opt(self.dev_accuracy),
            opt(self.test_accuracy),
            self.sparsity,
            self.nonzeros,
            self.converged,
            self.seconds,
            atoms,
            self.error.as_deref().map_or("na".to_owned(), escape),
        )
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidInput(format!("report record: {msg}"));
        let mut fields = std::collections::HashMap::new();
        for part in line.split_whitespace() {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("field {part:?} lacks '='")))?;
            if fields.insert(k, v).is_some() {
                return Err(bad(format!("duplicate key {k}")));
            }
        }
        let mut take = |k: &str| fields.remove(k).ok_or_else(|| bad(format!("missing key {k}")));
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidInput(format!("report record: bad {k} value {v:?}")))
        }
        let opt = |k: &str, v: &str| -> Result<Option<f64>> {
            if v == "na" { Ok(None) } else { num(k, v).map(Some) }
        };
        let report = FitReport {
            method: take("method")?.parse()?,
            hyper: Hyper {
                lambda_l1: num("lambda_l1", take("lambda_l1")?)?,
                lambda_l2: num("lambda_l2", take("lambda_l2")?)?,
            },
            dev_accuracy: opt("dev_accuracy", take("dev_accuracy")?)?,
            test_accuracy: opt("test_accuracy", take("test_accuracy")?)?,
            sparsity: num("sparsity", take("sparsity")?)?,
            nonzeros: num("nonzeros", take("nonzeros")?)?,
            converged: num("converged", take("converged")?)?,
            seconds: num("seconds", take("seconds")?)?,
            atoms: match take("atoms")? {
                "na" => Vec::new(),
                list => list
                    .split(',')
                    .map(|a| num("atoms", a))
                    .collect::<Result<_>>()?,
            },
            error: match take("error")? {
                "na" => None,
                e => Some(unescape(e).ok_or_else(|| bad(format!("bad escape in {e:?}")))?),
            },
        };
        if let Some(k) = fields.keys().next() {
            return Err(bad(format!("unknown key {k}")));
        }
        Ok(report)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '%' || c == '=' || c.is_whitespace() || c.is_control() {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                let _ = write!(out, "%{b:02X}");
            }
        } else {
            out.push(c);
        }
    }
    if out.is_empty() || out == "na" {
        // keep "na" reserved for absence
        out = out.bytes().map(|b| format!("%{b:02X}")).collect();
        if out.is_empty() {
            out.push('%');
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    if s == "%" {
        return Some(String::new());
    }
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Index into `reports` of the selected fit.
    pub best: usize,
    pub model: Model,
    pub trajectory: Option<Trajectory>,
    /// One report per grid point, in grid order.
    pub reports: Vec<FitReport>,
}

/// Index of the winning report: highest dev accuracy, then fewest nonzeros,
/// then smallest main λ, then smallest λ₁. Failed fits never win.
pub fn select_best(reports: &[FitReport]) -> Option<usize> {
    let key = |r: &FitReport| (r.dev_accuracy.unwrap_or(f64::NEG_INFINITY), r.nonzeros, r.hyper.main(r.method), r.hyper.lambda_l1);
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        if r.error.is_some() {
            continue;
        }
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let (acc, nz, main, l1) = key(r);
        let (bacc, bnz, bmain, bl1) = key(&reports[b]);
        let better = acc
            .total_cmp(&bacc)
            .reverse()
            .then(nz.cmp(&bnz))
            .then(main.total_cmp(&bmain))
            .then(l1.total_cmp(&bl1))
            .is_lt();
        if better {
            best = Some(i);
        }
    }
    best
}

/// Trains every grid point on `train`, scores each on `dev` (and `test` when
/// given) and keeps the winner under [`select_best`]. Points run in parallel;
/// reports come back in grid order. A failing point is recorded and skipped.
pub fn grid_search(
    train: (&SparseMatrix, &Labels),
    dev: (&SparseMatrix, &Labels),
    test: Option<(&SparseMatrix, &Labels)>,
    groups: Option<&GroupStructure>,
    spec: &GridSpec,
    cfg: &TrainConfig,
) -> Result<GridOutcome> {
    spec.validate()?;
    if spec.method != cfg.method {
        return Err(Error::InvalidInput(format!(
            "grid method {} differs from training method {}",
            spec.method, cfg.method
        )));
    }
    let points = spec.points();
    let results: Vec<(FitReport, Option<Trained>)> = points
        .par_iter()
        .map(|&hyper| {
            let outcome = train_one(train.0, train.1, groups, cfg, hyper).and_then(|t| {
                let report = FitReport::from_trained(cfg.method, hyper, &t, Some(dev), test)?;
                Ok((report, t))
            });
            match outcome {
                Ok((report, t)) => (report, Some(t)),
                Err(e) => (FitReport::failed(cfg.method, hyper, &e), None),
            }
        })
        .collect();
    let (reports, mut trained): (Vec<FitReport>, Vec<Option<Trained>>) = results.into_iter().unzip();
    let best = select_best(&reports).ok_or(Error::AllFitsFailed(reports.len()))?;
    let winner = trained[best].take().expect("successful report has a model");
    Ok(GridOutcome {
        best,
        model: winner.model,
        trajectory: winner.trajectory,
        reports,
    })
}

/// Accuracy of each checkpoint's snapshot on `(x, y)`.
pub fn atoms_curve(
    trajectory: &Trajectory,
    model: &Model,
    x: &SparseMatrix,
    y: &Labels,
) -> Result<Vec<(usize, f64)>> {
    trajectory
        .checkpoints
        .iter()
        .map(|c| {
            let snapshot = c.to_model(model.dim(), model.bias, model.lambda);
            Ok((c.atoms, accuracy(&snapshot, x, y)?))
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(curve: &[(usize, f64)], mut w: W) -> Result<()> {
    writeln!(w, "atoms,accuracy")?;
    for (atoms, acc) in curve {
        writeln!(w, "{atoms},{acc}")?;
    }
    Ok(())
}

/// Accuracy-vs-sparsity scatter, one row per successful report.
pub fn write_scatter_csv<W: Write>(reports: &[FitReport], mut w: W) -> Result<()> {
    writeln!(w, "method,lambda_l1,lambda_l2,sparsity,nonzeros,dev_accuracy,test_accuracy")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in reports.iter().filter(|r| r.error.is_none()) {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.method,
            r.hyper.lambda_l1,
            r.hyper.lambda_l2,
            r.sparsity,
            r.nonzeros,
            opt(r.dev_accuracy),
            opt(r.test_accuracy)
        )?;
    }
    Ok(())
}

/// Fixed-width table for terminals; `best` marks the selected row.
pub fn format_table(reports: &[FitReport], best: Option<usize>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "  {:<8} {:>10} {:>10} {:>8} {:>8} {:>9} {:>8} {:>9}",
        "method", "lambda_l1", "lambda_l2", "dev", "test", "nonzero%", "atoms", "seconds"
    );
    let pct = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.4}"));
    for (i, r) in reports.iter().enumerate() {
        let mark = if Some(i) == best { '*' } else { ' ' };
        if let Some(e) = &r.error {
            let _ = writeln!(
                out,
                "{mark} {:<8} {:>10} {:>10} failed: {e}",
                r.method, r.hyper.lambda_l1, r.hyper.lambda_l2
            );
            continue;
        }
        let _ = writeln!(
            out,
            "{mark} {:<8} {:>10} {:>10} {:>8} {:>8} {:>9.3} {:>8} {:>9.3}",
            r.method,
            r.hyper.lambda_l1,
            r.hyper.lambda_l2,
            pct(r.dev_accuracy),
            pct(r.test_accuracy),
            r.sparsity,
            r.atoms.last().map_or("-".to_owned(), usize::to_string),
            r.seconds
        );
    }
    out
}
