use std::collections::HashSet;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use lomp::eval::{
    accuracy, atoms_curve, format_table, grid_search, train_one, write_scatter_csv, FitReport,
    GridSpec, Hyper, Method, TrainConfig, DEFAULT_LAMBDAS,
};
use lomp::gomp::{Criterion, GroupStructure};
use lomp::grouping::{
    expand_overlap, kmeans_cluster, read_groups, write_groups, EmbeddingTable, KMeansConfig,
    Metric,
};
use lomp::textpipe::{
    build_matrix, parse_label_mapping, read_corpus, read_labels, stratified_split, write_labels,
    Document, SplitSpec, Vocabulary,
};
use lomp::{Labels, SparseMatrix};

use crate::model_file::{read_model, top_weights, write_model};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "lomp", version, about = "Greedy sparse feature selection for logistic text classifiers")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a labeled corpus into train/dev/test matrices, labels and a vocabulary.
    Vectorize(VectorizeArgs),
    /// Cluster word embeddings into overlapping groups over the vocabulary.
    Group(GroupArgs),
    /// Train one model and write it with its report.
    Train(TrainArgs),
    /// Grid-search λ on the dev split and keep the best model.
    Grid(GridArgs),
    /// Accuracy and sparsity of a saved model on a matrix.
    Evaluate(EvaluateArgs),
    /// Accuracy against the number of selected atoms for a greedy method.
    Curves(CurvesArgs),
    /// Largest positive and negative weights with their terms.
    TopWeights(TopWeightsArgs),
}

#[derive(Debug, Args)]
struct VectorizeArgs {
    /// Training corpus, one `label<TAB>text` document per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Separate dev corpus; without it the training corpus is split.
    #[arg(long)]
    dev_corpus: Option<PathBuf>,
    #[arg(long)]
    test_corpus: Option<PathBuf>,
    /// Category to label mapping, e.g. `med=-1,space=+1`.
    #[arg(long)]
    labels: String,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep tokens found in at least this many training documents.
    #[arg(long, default_value_t = 1)]
    min_df: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GroupArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Text embeddings, one `token v1 … vE` line per word.
    #[arg(long)]
    embeddings: PathBuf,
    /// Number of clusters, capped at the number of embedded vocabulary words.
    #[arg(long, default_value_t = 2000)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nearest words added to a cluster per member.
    #[arg(long, default_value_t = 5)]
    neighbors: usize,
    #[arg(long, default_value = "euclidean", value_parser = parse_metric)]
    metric: Metric,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Directory holding train/dev/test `.mtx` and `.labels` files.
    #[arg(long)]
    data: PathBuf,
    /// omp, gomp, lasso, ridge, elastic or none.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Maximum number of selected features for omp and gomp.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Group file for gomp.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// averaged, orthonormal or gram-corrected.
    #[arg(long, default_value = "averaged", value_parser = parse_criterion)]
    criterion: Criterion,
    /// Add every feature as its own group (gomp).
    #[arg(long, conflicts_with = "no_augment_singletons")]
    augment_singletons: bool,
    #[arg(long)]
    no_augment_singletons: bool,
    /// Score omp candidates by correlation over column norm.
    #[arg(long)]
    normalize_columns: bool,
    /// Recorded in the manifest; every algorithm here is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    checkpoint_every: usize,
    /// Solver tolerance (Newton gradient norm or proximal optimality residual).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Leave the bias out of the ℓ₂ penalty.
    #[arg(long)]
    no_penalize_bias: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Regularization strength: ℓ₁ for lasso, ℓ₂ otherwise.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// ℓ₁ strength for elastic net.
    #[arg(long, default_value_t = 1.0)]
    lambda_l1: f64,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDAS)]
    lambdas: Vec<f64>,
    /// ℓ₁ values crossed with `--lambdas` for elastic net.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDAS)]
    l1_lambdas: Vec<f64>,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Debug, Args)]
struct TopWeightsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = 10)]
    n: usize,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: lomp::Error| e.to_string())
}

fn parse_criterion(s: &str) -> std::result::Result<Criterion, String> {
    s.parse().map_err(|e: lomp::Error| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: lomp::Error| e.to_string())
}

/// Resolved settings of one run, written as `key=value` lines.
struct Manifest(Vec<(String, String)>);

impl Manifest {
    fn new(subcommand: &str) -> Self {
        let mut m = Manifest(Vec::new());
        m.set("subcommand", subcommand);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("threads", rayon::current_num_threads());
        m
    }

    fn set(&mut self, key: &str, value: impl Display) {
        self.0.push((key.to_owned(), value.to_string()));
    }

    fn set_path(&mut self, key: &str, path: Option<&Path>) {
        self.set(key, path.map_or("none".to_owned(), |p| p.display().to_string()));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("manifest.txt"), |w| {
            for (k, v) in &self.0 {
                writeln!(w, "{k}={v}")?;
            }
            Ok(())
        })
    }
}

fn with_path(path: &Path, e: io::Error) -> CliError {
    CliError::Data(io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| with_path(path, e))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> lomp::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| with_path(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| with_path(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| with_path(dir, e))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub(crate) fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::Vectorize(a) => vectorize(a),
        Command::Group(a) => group(a),
        Command::Train(a) => train(a),
        Command::Grid(a) => grid(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Curves(a) => curves(a),
        Command::TopWeights(a) => show_top_weights(a),
    }
}

fn vectorize(a: VectorizeArgs) -> Result<()> {
    let mapping = parse_label_mapping(&a.labels).map_err(|e| CliError::Usage(e.to_string()))?;
    let read = |p: &Path| -> Result<Vec<Document>> { Ok(read_corpus(open(p)?, &path_str(p), &mapping)?) };
    let corpus = read(&a.corpus)?;
    let (train, dev) = match &a.dev_corpus {
        Some(p) => (corpus, read(p)?),
        None => {
            let spec = SplitSpec { train_fraction: a.train_fraction, seed: a.seed };
            stratified_split(&corpus, &spec).map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    let test = a.test_corpus.as_deref().map(read).transpose()?;
    let vocab = Vocabulary::build(&train, a.min_df);

    create_dir(&a.out)?;
    write_file(&a.out.join("vocab.txt"), |w| vocab.write_to(w))?;
    let mut splits = vec![("train", &train), ("dev", &dev)];
    if let Some(t) = &test {
        splits.push(("test", t));
    }
    for (name, docs) in splits {
        let (x, y) = build_matrix(&vocab, docs)?;
        write_file(&a.out.join(format!("{name}.mtx")), |w| x.write_to(w))?;
        write_file(&a.out.join(format!("{name}.labels")), |w| write_labels(&y, w))?;
        println!("{name}: {} documents", docs.len());
    }
    println!("vocabulary: {} tokens (+ bias)", vocab.len());

    let mut m = Manifest::new("vectorize");
    m.set_path("corpus", Some(&a.corpus));
    m.set_path("dev_corpus", a.dev_corpus.as_deref());
    m.set_path("test_corpus", a.test_corpus.as_deref());
    m.set("labels", &a.labels);
    m.set("train_fraction", a.train_fraction);
    m.set("seed", a.seed);
    m.set("min_df", a.min_df);
    m.set_path("out", Some(&a.out));
    m.write(&a.out)
}

fn group(a: GroupArgs) -> Result<()> {
    let vocab = Vocabulary::read_from(open(&a.vocab)?, &path_str(&a.vocab))?;
    let keep: HashSet<&str> = vocab.tokens().iter().map(String::as_str).collect();
    let emb = EmbeddingTable::read_from(open(&a.embeddings)?, &path_str(&a.embeddings), Some(&keep))?;
    let embedded = vocab.tokens().iter().filter(|t| emb.get(t).is_some()).count();
    let k = a.k.min(embedded);
    if k == 0 {
        return Err(CliError::Data(lomp::Error::InvalidInput(
            "no vocabulary word has an embedding".into(),
        )));
    }
    let cfg = KMeansConfig { k, max_iter: a.max_iter, seed: a.seed, neighbors: a.neighbors };
    let clusters = kmeans_cluster(&emb, &vocab, &cfg)?;
    let groups = expand_overlap(&clusters.groups, &emb, &vocab, a.neighbors, a.metric);

    create_dir(&a.out)?;
    write_file(&a.out.join("groups.txt"), |w| write_groups(&groups, w))?;
    println!(
        "{} groups over {embedded} embedded words ({} of {} vocabulary words lack embeddings); {} Lloyd iterations, final WCSS {}",
        groups.len(),
        vocab.len() - embedded,
        vocab.len(),
        clusters.iterations,
        clusters.inertia.last().copied().unwrap_or(0.0)
    );

    let mut m = Manifest::new("group");
    m.set_path("vocab", Some(&a.vocab));
    m.set_path("embeddings", Some(&a.embeddings));
    m.set("k", k);
    m.set("max_iter", a.max_iter);
    m.set("seed", a.seed);
    m.set("neighbors", a.neighbors);
    m.set("metric", a.metric.as_str());
    m.set_path("out", Some(&a.out));
    m.write(&a.out)
}

struct Split {
    x: SparseMatrix,
    y: Labels,
}

struct Data {
    train: Split,
    dev: Option<Split>,
    test: Option<Split>,
}

impl Data {
    fn dev(&self) -> Option<(&SparseMatrix, &Labels)> {
        self.dev.as_ref().map(|s| (&s.x, &s.y))
    }

    fn test(&self) -> Option<(&SparseMatrix, &Labels)> {
        self.test.as_ref().map(|s| (&s.x, &s.y))
    }
}

fn load_split(dir: &Path, name: &str, bias_present: Option<bool>) -> Result<Option<(Split, bool)>> {
    let mtx = dir.join(format!("{name}.mtx"));
    let lab = dir.join(format!("{name}.labels"));
    if !mtx.exists() {
        return Ok(None);
    }
    let x = SparseMatrix::read_from(open(&mtx)?, &path_str(&mtx))?;
    let y = read_labels(open(&lab)?, &path_str(&lab))?;
    if y.len() != x.n_rows() {
        return Err(CliError::Data(lomp::Error::DimensionMismatch {
            what: "labels for matrix rows",
            expected: x.n_rows(),
            got: y.len(),
        }));
    }
    // The training matrix decides whether its last column is the bias; the
    // other splits follow it.
    let (x, present) = match bias_present {
        None => {
            let before = x.n_cols();
            let x = x.ensure_bias_last();
            let present = x.n_cols() == before;
            (x, present)
        }
        Some(true) => {
            let mut x = x;
            let last = x.n_cols().checked_sub(1).ok_or_else(|| {
                CliError::Data(lomp::Error::InvalidInput(format!("{} has no columns", mtx.display())))
            })?;
            x.set_bias_column(last)?;
            (x, true)
        }
        Some(false) => (x.with_bias_column(), false),
    };
    Ok(Some((Split { x, y }, present)))
}

fn load_data(dir: &Path) -> Result<Data> {
    let (train, present) = load_split(dir, "train", None)?.ok_or_else(|| {
        CliError::Data(lomp::Error::InvalidInput(format!(
            "{} has no train.mtx",
            dir.display()
        )))
    })?;
    let d = train.x.n_cols();
    let other = |name: &str| -> Result<Option<Split>> {
        let split = load_split(dir, name, Some(present))?.map(|(s, _)| s);
        if let Some(s) = &split {
            if s.x.n_cols() != d {
                return Err(CliError::Data(lomp::Error::DimensionMismatch {
                    what: "columns of a dev/test matrix",
                    expected: d,
                    got: s.x.n_cols(),
                }));
            }
        }
        Ok(split)
    };
    let dev = other("dev")?;
    let test = other("test")?;
    Ok(Data { train, dev, test })
}

/// Training configuration plus the group structure, with the singleton
/// augmentation rule applied.
fn resolve(a: &ModelArgs, x: &SparseMatrix) -> Result<(TrainConfig, Option<GroupStructure>)> {
    if a.method == Method::Gomp && a.groups.is_none() && !a.augment_singletons {
        return Err(CliError::Usage(
            "gomp needs --groups or an explicit --augment-singletons".into(),
        ));
    }
    if a.groups.is_some() && a.method != Method::Gomp {
        return Err(CliError::Usage(format!("--groups applies to gomp, not {}", a.method)));
    }
    let mut cfg = TrainConfig::new(a.method);
    cfg.budget = a.budget;
    cfg.epsilon = a.epsilon;
    cfg.criterion = a.criterion;
    cfg.augment_singletons = !a.no_augment_singletons;
    cfg.normalize_columns = a.normalize_columns;
    cfg.checkpoint_every = a.checkpoint_every;
    cfg.refit.penalize_bias = !a.no_penalize_bias;
    cfg.prox.penalize_bias = !a.no_penalize_bias;
    if let Some(tol) = a.tol {
        cfg.refit.tol = tol;
        cfg.prox.tol = tol;
    }
    if let Some(it) = a.max_iter {
        cfg.refit.max_iter = it;
        cfg.prox.max_iter = it;
    }
    let groups = match &a.groups {
        Some(p) => Some(read_groups(open(p)?, &path_str(p), x.n_cols(), x.bias())?),
        None => None,
    };
    Ok((cfg, groups))
}

fn model_manifest(m: &mut Manifest, a: &ModelArgs, cfg: &TrainConfig) {
    m.set_path("data", Some(&a.data));
    m.set("method", a.method);
    m.set("budget", cfg.budget);
    m.set("epsilon", cfg.epsilon);
    m.set_path("groups", a.groups.as_deref());
    m.set("criterion", cfg.criterion);
    m.set("augment_singletons", cfg.augment_singletons);
    m.set("normalize_columns", cfg.normalize_columns);
    m.set("seed", a.seed);
    m.set("checkpoint_every", cfg.checkpoint_every);
    m.set("refit_tol", cfg.refit.tol);
    m.set("refit_max_iter", cfg.refit.max_iter);
    m.set("dense_limit", cfg.refit.dense_limit);
    m.set("prox_tol", cfg.prox.tol);
    m.set("prox_max_iter", cfg.prox.max_iter);
    m.set("penalize_bias", cfg.refit.penalize_bias);
    m.set_path("out", Some(&a.out));
}

fn train_hyper(method: Method, lambda: f64, lambda_l1: f64) -> Hyper {
    match method {
        Method::Elastic => Hyper { lambda_l1, lambda_l2: lambda },
        m => Hyper::for_method(m, lambda),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let data = load_data(&a.model.data)?;
    let (cfg, groups) = resolve(&a.model, &data.train.x)?;
    for (name, v) in [("--lambda", a.lambda), ("--lambda-l1", a.lambda_l1)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(CliError::Usage(format!("{name} must be finite and ≥ 0")));
        }
    }
    let hyper = train_hyper(a.model.method, a.lambda, a.lambda_l1);
    let trained = train_one(&data.train.x, &data.train.y, groups.as_ref(), &cfg, hyper)?;
    let report = FitReport::from_trained(a.model.method, hyper, &trained, data.dev(), data.test())?;

    create_dir(&a.model.out)?;
    write_file(&a.model.out.join("model.txt"), |w| write_model(&trained.model, w))?;
    write_file(&a.model.out.join("report.txt"), |w| Ok(writeln!(w, "{}", report.to_record())?))?;
    print!("{}", format_table(std::slice::from_ref(&report), Some(0)));
    if !trained.converged {
        eprintln!("lomp: warning: a solver stopped at its iteration limit");
    }

    let mut m = Manifest::new("train");
    model_manifest(&mut m, &a.model, &cfg);
    m.set("lambda", a.lambda);
    m.set("lambda_l1", a.lambda_l1);
    m.write(&a.model.out)
}

fn grid(a: GridArgs) -> Result<()> {
    let data = load_data(&a.model.data)?;
    let dev = data.dev().ok_or_else(|| {
        CliError::Data(lomp::Error::InvalidInput(format!(
            "{} has no dev split for grid search",
            a.model.data.display()
        )))
    })?;
    let (cfg, groups) = resolve(&a.model, &data.train.x)?;
    let spec = GridSpec {
        method: a.model.method,
        lambdas: a.lambdas.clone(),
        l1_lambdas: a.l1_lambdas.clone(),
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out = grid_search(
        (&data.train.x, &data.train.y),
        dev,
        data.test(),
        groups.as_ref(),
        &spec,
        &cfg,
    )?;
    create_dir(&a.model.out)?;
    write_file(&a.model.out.join("model.txt"), |w| write_model(&out.model, w))?;
    write_file(&a.model.out.join("reports.txt"), |w| {
        for r in &out.reports {
            writeln!(w, "{}", r.to_record())?;
        }
        Ok(())
    })?;
    write_file(&a.model.out.join("scatter.csv"), |w| write_scatter_csv(&out.reports, w))?;
    print!("{}", format_table(&out.reports, Some(out.best)));

    let mut m = Manifest::new("grid");
    model_manifest(&mut m, &a.model, &cfg);
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    m.set("lambdas", join(&a.lambdas));
    m.set("l1_lambdas", join(&a.l1_lambdas));
    m.write(&a.model.out)
}

fn curves(a: CurvesArgs) -> Result<()> {
    if !matches!(a.model.method, Method::Omp | Method::Gomp) {
        return Err(CliError::Usage("curves needs a greedy method (omp or gomp)".into()));
    }
    let data = load_data(&a.model.data)?;
    let dev = data.dev().ok_or_else(|| {
        CliError::Data(lomp::Error::InvalidInput("curves needs a dev split".into()))
    })?;
    let (cfg, groups) = resolve(&a.model, &data.train.x)?;
    let hyper = Hyper::for_method(a.model.method, a.lambda);
    let trained = train_one(&data.train.x, &data.train.y, groups.as_ref(), &cfg, hyper)?;
    let traj = trained.trajectory.as_ref().expect("greedy methods record a trajectory");
    let dev_curve = atoms_curve(traj, &trained.model, dev.0, dev.1)?;
    let test_curve = data
        .test()
        .map(|(x, y)| atoms_curve(traj, &trained.model, x, y))
        .transpose()?;

    create_dir(&a.model.out)?;
    write_file(&a.model.out.join("curve.csv"), |w| {
        writeln!(w, "atoms,dev_accuracy,test_accuracy")?;
        for (i, (atoms, acc)) in dev_curve.iter().enumerate() {
            let test = test_curve.as_ref().map_or(String::new(), |t| t[i].1.to_string());
            writeln!(w, "{atoms},{acc},{test}")?;
        }
        Ok(())
    })?;
    for (atoms, acc) in &dev_curve {
        println!("{atoms:>6} atoms  dev accuracy {acc:.4}");
    }

    let mut m = Manifest::new("curves");
    model_manifest(&mut m, &a.model, &cfg);
    m.set("lambda", a.lambda);
    m.write(&a.model.out)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let model = read_model(open(&a.model)?, &path_str(&a.model))?;
    let mut x = SparseMatrix::read_from(open(&a.matrix)?, &path_str(&a.matrix))?;
    if let Some(b) = model.bias {
        if b < x.n_cols() {
            x.set_bias_column(b)?;
        }
    }
    let y = read_labels(open(&a.labels)?, &path_str(&a.labels))?;
    let acc = accuracy(&model, &x, &y)?;
    println!("accuracy {acc}");
    println!("nonzeros {}", model.nonzeros());
    println!("sparsity {}", lomp::baselines::sparsity(&model));
    Ok(())
}

fn show_top_weights(a: TopWeightsArgs) -> Result<()> {
    let model = read_model(open(&a.model)?, &path_str(&a.model))?;
    let vocab = Vocabulary::read_from(open(&a.vocab)?, &path_str(&a.vocab))?;
    let (pos, neg) = top_weights(&model, &vocab, a.n)?;
    println!("positive");
    for (t, w) in pos {
        println!("  {t}\t{w}");
    }
    println!("negative");
    for (t, w) in neg {
        println!("  {t}\t{w}");
    }
    Ok(())
}
