//! Group structures: the group file format, k-means clusters of word
//! embeddings with nearest-neighbour overlap, and singleton augmentation.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gomp::{Group, GroupStructure};
use crate::textpipe::Vocabulary;

/// Reads `name<TAB>index index …` lines. Every index must be below `d` and
/// differ from `bias`; names must be unique and groups non-empty.
pub fn read_groups<R: BufRead>(
    r: R,
    path: &str,
    d: usize,
    bias: Option<usize>,
) -> Result<GroupStructure> {
    let mut groups = Vec::new();
    let mut names = HashSet::new();
    for (no, line) in r.lines().enumerate() {
        let lineno = no + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (name, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected `name<TAB>indices`"))?;
        if name.is_empty() {
            return Err(Error::parse(path, lineno, "empty group name"));
        }
        if !names.insert(name.to_owned()) {
            return Err(Error::parse(path, lineno, format!("duplicate group name {name:?}")));
        }
        let mut indices = Vec::new();
        for field in rest.split_whitespace() {
            let j: usize = field
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad index {field:?}")))?;
            if j >= d {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("index {j} out of range for {d} features"),
                ));
            }
            if Some(j) == bias {
                return Err(Error::parse(path, lineno, format!("index {j} is the bias column")));
            }
            indices.push(j);
        }
        if indices.is_empty() {
            return Err(Error::parse(path, lineno, format!("group {name:?} is empty")));
        }
        groups.push(Group::new(name, indices));
    }
    Ok(GroupStructure::new(groups))
}

pub fn write_groups<W: Write>(groups: &GroupStructure, mut w: W) -> Result<()> {
    for g in groups.iter() {
        if g.name.is_empty() || g.name.contains(['\t', '\n']) {
            return Err(Error::InvalidInput(format!(
                "group name {:?} cannot be written",
                g.name
            )));
        }
        let idx: Vec<String> = g.indices.iter().map(usize::to_string).collect();
        writeln!(w, "{}\t{}", g.name, idx.join(" "))?;
    }
    Ok(())
}

/// Word vectors of a fixed dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            ..Self::default()
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "embedding dimension",
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite embedding for {token:?}")));
        }
        match self.index.get(&token) {
            Some(&k) => self.vectors[k] = vector,
            None => {
                self.index.insert(token, self.vectors.len());
                self.vectors.push(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&k| self.vectors[k].as_slice())
    }

    /// Reads `token v1 … vE` lines. A leading `count dim` header line is
    /// skipped. With `keep`, tokens outside it are ignored while reading.
    pub fn read_from<R: BufRead>(
        r: R,
        path: &str,
        keep: Option<&HashSet<&str>>,
    ) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (no, line) in r.lines().enumerate() {
            let lineno = no + 1;
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let rest: Vec<&str> = fields.collect();
            if lineno == 1 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
                continue;
            }
            if rest.is_empty() {
                return Err(Error::parse(path, lineno, "token without a vector"));
            }
            let dim = table.as_ref().map_or(rest.len(), |t| t.dim);
            if rest.len() != dim {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {dim} components, found {}", rest.len()),
                ));
            }
            let table = table.get_or_insert_with(|| EmbeddingTable::new(dim));
            if keep.is_some_and(|k| !k.contains(token)) {
                continue;
            }
            let vector = rest
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(path, lineno, format!("bad component: {e}")))?;
            table
                .insert(token, vector)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        }
        Ok(table.unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::InvalidInput(format!(
                "unknown metric {other:?} (expected euclidean or cosine)"
            ))),
        }
    }
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Nearest words added per member by [`expand_overlap`].
    pub neighbors: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 2000,
            max_iter: 100,
            seed: 0,
            neighbors: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    /// `k` disjoint clusters of vocabulary indices, named `cluster_<c>`.
    pub groups: GroupStructure,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_center(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm over the embedded vocabulary tokens. Initial centers are
/// sampled without replacement under `cfg.seed`; a cluster that empties is
/// re-seeded with the point farthest from its center.
pub fn kmeans_cluster(
    emb: &EmbeddingTable,
    vocab: &Vocabulary,
    cfg: &KMeansConfig,
) -> Result<KMeansOutcome> {
    if cfg.k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let points: Vec<(usize, &[f64])> = vocab
        .tokens()
        .iter()
        .enumerate()
        .filter_map(|(j, t)| emb.get(t).map(|v| (j, v)))
        .collect();
    if points.len() < cfg.k {
        return Err(Error::InvalidInput(format!(
            "only {} vocabulary tokens have embeddings, fewer than k = {}",
            points.len(),
            cfg.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centers: Vec<Vec<f64>> = rand::seq::index::sample(&mut rng, points.len(), cfg.k)
        .into_iter()
        .map(|p| points[p].1.to_vec())
        .collect();

    let mut assignment: Vec<usize> = vec![usize::MAX; points.len()];
    let mut inertia = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iter.max(1) {
        iterations += 1;
        let nearest: Vec<(usize, f64)> = points
            .par_iter()
            .map(|(_, p)| nearest_center(p, &centers))
            .collect();
        let mut next: Vec<usize> = nearest.iter().map(|&(c, _)| c).collect();
        let mut dist: Vec<f64> = nearest.iter().map(|&(_, d)| d).collect();

        let mut sizes = vec![0usize; cfg.k];
        for &c in &next {
            sizes[c] += 1;
        }
        for c in 0..cfg.k {
            if sizes[c] > 0 {
                continue;
            }
            let donor = (0..points.len())
                .filter(|&p| sizes[next[p]] > 1)
                .fold(None::<usize>, |best, p| match best {
                    Some(b) if dist[b] >= dist[p] => Some(b),
                    _ => Some(p),
                })
                .expect("k ≤ number of points leaves a donor");
            sizes[next[donor]] -= 1;
            sizes[c] = 1;
            next[donor] = c;
            dist[donor] = 0.0;
            centers[c] = points[donor].1.to_vec();
        }
        inertia.push(dist.iter().sum());

        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; emb.dim()]; cfg.k];
        for (p, &c) in assignment.iter().enumerate() {
            for (s, v) in sums[c].iter_mut().zip(points[p].1) {
                *s += v;
            }
        }
        for (c, sum) in sums.into_iter().enumerate() {
            let n = sizes[c] as f64;
            centers[c] = sum.into_iter().map(|s| s / n).collect();
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cfg.k];
    for (p, &c) in assignment.iter().enumerate() {
        members[c].push(points[p].0);
    }
    let groups = members
        .into_iter()
        .enumerate()
        .map(|(c, idx)| Group::new(format!("cluster_{c}"), idx))
        .collect();
    Ok(KMeansOutcome {
        groups: GroupStructure::new(groups),
        inertia,
        iterations,
    })
}

/// The `n` embedded vocabulary words closest to word `j` (excluding itself),
/// nearest first, ties by lower index.
fn nearest_words(
    j: usize,
    n: usize,
    embedded: &[(usize, &[f64], f64)],
    query: &[f64],
    query_norm: f64,
    metric: Metric,
) -> Vec<usize> {
    let mut cands: Vec<(f64, usize)> = embedded
        .iter()
        .filter(|(i, _, _)| *i != j)
        .map(|&(i, v, norm)| {
            let d = match metric {
                Metric::Euclidean => sq_dist(query, v),
                Metric::Cosine => {
                    let denom = norm * query_norm;
                    let dot: f64 = query.iter().zip(v).map(|(a, b)| a * b).sum();
                    if denom > 0.0 {
                        1.0 - dot / denom
                    } else {
                        1.0
                    }
                }
            };
            (d, i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if cands.len() > n {
        cands.select_nth_unstable_by(n, cmp);
        cands.truncate(n);
    }
    cands.sort_by(cmp);
    cands.into_iter().map(|(_, i)| i).collect()
}

/// Adds to every group the `neighbors` nearest embedded vocabulary words of
/// each member. Members without an embedding contribute nothing.
pub fn expand_overlap(
    groups: &GroupStructure,
    emb: &EmbeddingTable,
    vocab: &Vocabulary,
    neighbors: usize,
    metric: Metric,
) -> GroupStructure {
    if neighbors == 0 {
        return groups.clone();
    }
    let embedded: Vec<(usize, &[f64], f64)> = vocab
        .tokens()
        .iter()
        .enumerate()
        .filter_map(|(j, t)| {
            emb.get(t)
                .map(|v| (j, v, v.iter().map(|x| x * x).sum::<f64>().sqrt()))
        })
        .collect();
    let by_index: HashMap<usize, (&[f64], f64)> =
        embedded.iter().map(|&(j, v, n)| (j, (v, n))).collect();
    let members: BTreeSet<usize> = groups
        .iter()
        .flat_map(|g| g.indices.iter().copied())
        .filter(|j| by_index.contains_key(j))
        .collect();
    let members: Vec<usize> = members.into_iter().collect();
    let table: HashMap<usize, Vec<usize>> = members
        .par_iter()
        .map(|&j| {
            let (q, qn) = by_index[&j];
            (j, nearest_words(j, neighbors, &embedded, q, qn, metric))
        })
        .collect();
    GroupStructure::new(
        groups
            .iter()
            .map(|g| {
                let extra = g
                    .indices
                    .iter()
                    .filter_map(|j| table.get(j))
                    .flatten()
                    .copied();
                Group::new(g.name.clone(), g.indices.iter().copied().chain(extra))
            })
            .collect(),
    )
}

/// Appends `{j}` (named `singleton_<j>`) for every non-bias feature after the
/// existing groups. Calling it twice duplicates the singletons, whose names
/// then collide and fail validation.
pub fn augment_singletons(groups: &GroupStructure, d: usize, bias: Option<usize>) -> GroupStructure {
    let mut out = groups.clone();
    out.groups.extend(
        (0..d)
            .filter(|&j| Some(j) != bias)
            .map(|j| Group::new(format!("singleton_{j}"), [j])),
    );
    out
}
