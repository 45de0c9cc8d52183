//! Raw labeled text to a unigram-frequency design matrix with a bias column.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::logistic::Labels;
use crate::sparse::SparseMatrix;

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub label: i8,
    pub tokens: Vec<String>,
}

/// Token to column index map; indices are dense in `0..len()` and the bias
/// column sits at `len()`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds the vocabulary from training documents in first-occurrence
    /// order, keeping tokens that appear in at least `min_df` documents.
    pub fn build(train: &[Document], min_df: usize) -> Self {
        let mut first_seen: Vec<&str> = Vec::new();
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in train {
            let mut seen = HashSet::new();
            for t in &doc.tokens {
                if !seen.insert(t.as_str()) {
                    continue;
                }
                let count = df.entry(t.as_str()).or_insert(0);
                if *count == 0 {
                    first_seen.push(t.as_str());
                }
                *count += 1;
            }
        }
        let tokens = first_seen
            .into_iter()
            .filter(|t| df[t] >= min_df.max(1))
            .map(str::to_owned);
        Self::from_tokens(tokens).expect("first-occurrence tokens are unique")
    }

    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut vocab = Vocabulary::default();
        for t in tokens {
            if vocab.index.contains_key(&t) {
                return Err(Error::InvalidInput(format!("duplicate vocabulary token {t:?}")));
            }
            vocab.index.insert(t.clone(), vocab.tokens.len());
            vocab.tokens.push(t);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, j: usize) -> Option<&str> {
        self.tokens.get(j).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn bias_index(&self) -> usize {
        self.tokens.len()
    }

    /// One token per line; the line number is the column index.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (no, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(Error::parse(path, no + 1, "expected a single token per line"));
            }
            tokens.push(line);
        }
        Self::from_tokens(tokens).map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

/// Counts in-vocabulary tokens per document. Out-of-vocabulary tokens are
/// dropped and the bias column (index `vocab.len()`) is all ones.
pub fn build_matrix(vocab: &Vocabulary, docs: &[Document]) -> Result<(SparseMatrix, Labels)> {
    if vocab.is_empty() {
        return Err(Error::InvalidInput("vocabulary is empty".into()));
    }
    let rows: Vec<BTreeMap<usize, f64>> = docs
        .par_iter()
        .map(|doc| {
            let mut counts = BTreeMap::new();
            for t in &doc.tokens {
                if let Some(j) = vocab.get(t) {
                    *counts.entry(j).or_insert(0.0) += 1.0;
                }
            }
            counts
        })
        .collect();
    let triplets = rows
        .iter()
        .enumerate()
        .flat_map(|(i, counts)| counts.iter().map(move |(&j, &c)| (i, j, c)));
    let x = SparseMatrix::from_triplets(docs.len(), vocab.len(), triplets)?.with_bias_column();
    let y = Labels::new(docs.iter().map(|d| d.label).collect())?;
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Per-class shuffled split into (train, dev). Each class contributes
/// `round(n_class · train_fraction)` training documents; both outputs keep the
/// input order.
pub fn stratified_split(
    docs: &[Document],
    spec: &SplitSpec,
) -> Result<(Vec<Document>, Vec<Document>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut in_train = vec![false; docs.len()];
    for label in [-1i8, 1] {
        let mut members: Vec<usize> = (0..docs.len()).filter(|&i| docs[i].label == label).collect();
        if members.is_empty() {
            return Err(Error::InvalidInput(format!(
                "stratified split needs both classes; no documents labeled {label:+}"
            )));
        }
        members.shuffle(&mut rng);
        let n_train = (members.len() as f64 * spec.train_fraction).round() as usize;
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, dev): (Vec<_>, Vec<_>) = docs
        .iter()
        .zip(&in_train)
        .partition(|(_, &t)| t);
    Ok((
        train.into_iter().map(|(d, _)| d.clone()).collect(),
        dev.into_iter().map(|(d, _)| d.clone()).collect(),
    ))
}

/// Parses a `category=±1` list such as `med=-1,space=+1`.
pub fn parse_label_mapping(spec: &str) -> Result<HashMap<String, i8>> {
    let mut map = HashMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("label mapping entry {part:?} lacks '='")))?;
        let value = match value.trim() {
            "+1" | "1" => 1,
            "-1" => -1,
            other => {
                return Err(Error::InvalidInput(format!(
                    "label {name:?} must map to -1 or +1, got {other:?}"
                )))
            }
        };
        if map.insert(name.trim().to_owned(), value).is_some() {
            return Err(Error::InvalidInput(format!("label {name:?} mapped twice")));
        }
    }
    if !map.values().any(|&v| v == 1) || !map.values().any(|&v| v == -1) {
        return Err(Error::InvalidInput(
            "label mapping must assign both -1 and +1".into(),
        ));
    }
    Ok(map)
}

/// Reads `label<TAB>text` lines, mapping each category through `mapping`.
/// Blank lines are skipped.
pub fn read_corpus<R: BufRead>(
    r: R,
    path: &str,
    mapping: &HashMap<String, i8>,
) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, no + 1, "expected `label<TAB>text`"))?;
        let &value = mapping
            .get(label)
            .ok_or_else(|| Error::parse(path, no + 1, format!("unmapped label {label:?}")))?;
        docs.push(Document {
            label: value,
            tokens: tokenize(text),
        });
    }
    Ok(docs)
}

/// One `-1` or `+1` per line.
pub fn write_labels<W: Write>(labels: &Labels, mut w: W) -> Result<()> {
    for &v in labels.as_slice() {
        writeln!(w, "{}", if v == 1 { "+1" } else { "-1" })?;
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(r: R, path: &str) -> Result<Labels> {
    let mut values = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(match t {
            "+1" | "1" => 1,
            "-1" => -1,
            other => {
                return Err(Error::parse(
                    path,
                    no + 1,
                    format!("label must be -1 or +1, got {other:?}"),
                ))
            }
        });
    }
    Labels::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(label: i8, text: &str) -> Document {
        Document {
            label,
            tokens: tokenize(text),
        }
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("The space-ship LANDED."), vec!["the", "space", "ship", "landed"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a1 b2 a1"), vec!["a1", "b2", "a1"]);
        assert_eq!(tokenize("  --Über!! café  "), vec!["über", "café"]);
    }

    #[test]
    fn vocabulary_first_occurrence_and_min_df() {
        let docs = vec![doc(1, "b a b"), doc(-1, "c a"), doc(1, "a d")];
        let v = Vocabulary::build(&docs, 1);
        assert_eq!(v.tokens(), &["b", "a", "c", "d"]);
        let v2 = Vocabulary::build(&docs, 2);
        assert_eq!(v2.tokens(), &["a"]);
        assert_eq!(v.bias_index(), 4);
    }

    #[test]
    fn matrix_from_counts() {
        let vocab = Vocabulary::from_tokens(["a".to_owned(), "b".to_owned()]).unwrap();
        let docs = vec![
            Document { label: 1, tokens: vec!["a".into(), "b".into(), "a".into()] },
            Document { label: -1, tokens: vec!["zzz".into(), "qq".into()] },
        ];
        let (x, y) = build_matrix(&vocab, &docs).unwrap();
        assert_eq!(x.to_dense(), vec![vec![2.0, 1.0, 1.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(x.bias(), Some(2));
        assert_eq!(y.as_slice(), &[1, -1]);
        assert!(build_matrix(&Vocabulary::default(), &docs).is_err());
    }

    #[test]
    fn toy_corpus_matches_hand_count() {
        let train = vec![
            doc(1, "rocket orbit rocket"),
            doc(-1, "doctor patient orbit"),
            doc(1, "Orbit, orbit; moon!"),
        ];
        let vocab = Vocabulary::build(&train, 1);
        // rocket orbit doctor patient moon | bias
        let (x, _) = build_matrix(&vocab, &train).unwrap();
        let expected = vec![
            vec![2.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0],
            vec![0.0, 2.0, 0.0, 0.0, 1.0, 1.0],
        ];
        assert_eq!(x.to_dense(), expected);
    }

    #[test]
    fn dev_tokens_never_extend_vocabulary() {
        let train = vec![doc(1, "alpha beta"), doc(-1, "gamma")];
        let vocab = Vocabulary::build(&train, 1);
        let before = vocab.len();
        let dev = vec![doc(1, "alpha delta epsilon"), doc(-1, "zeta")];
        let (x, _) = build_matrix(&vocab, &dev).unwrap();
        assert_eq!(vocab.len(), before);
        assert_eq!(x.n_cols(), before + 1);
        // row sums (without bias) equal in-vocabulary token counts
        let dense = x.to_dense();
        assert_eq!(dense[0][..before].iter().sum::<f64>(), 1.0);
        assert_eq!(dense[1][..before].iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn stratified_split_counts_and_determinism() {
        let docs: Vec<Document> = (0..10)
            .map(|i| doc(if i < 5 { 1 } else { -1 }, &format!("w{i}")))
            .collect();
        let spec = SplitSpec { train_fraction: 0.8, seed: 42 };
        let (train, dev) = stratified_split(&docs, &spec).unwrap();
        assert_eq!(train.iter().filter(|d| d.label == 1).count(), 4);
        assert_eq!(train.iter().filter(|d| d.label == -1).count(), 4);
        assert_eq!(dev.len(), 2);
        assert_eq!(dev.iter().filter(|d| d.label == 1).count(), 1);
        let again = stratified_split(&docs, &spec).unwrap();
        assert_eq!((train, dev), again);
    }

    #[test]
    fn stratified_split_vote_sizes() {
        // 1175 training documents, class balance arbitrary
        let docs: Vec<Document> = (0..1175)
            .map(|i| doc(if i % 7 < 3 { 1 } else { -1 }, "x"))
            .collect();
        let (train, dev) = stratified_split(&docs, &SplitSpec::default()).unwrap();
        assert!((train.len() as i64 - 940).abs() <= 1, "{}", train.len());
        assert_eq!(train.len() + dev.len(), 1175);
        for label in [1, -1] {
            let n = docs.iter().filter(|d| d.label == label).count() as f64;
            let t = train.iter().filter(|d| d.label == label).count() as f64;
            assert!((t - 0.8 * n).abs() <= 1.0);
        }
    }

    #[test]
    fn stratified_split_errors() {
        let docs = vec![doc(1, "a"), doc(1, "b")];
        assert!(stratified_split(&docs, &SplitSpec::default()).is_err());
        let both = vec![doc(1, "a"), doc(-1, "b")];
        assert!(stratified_split(&both, &SplitSpec { train_fraction: 1.0, seed: 0 }).is_err());
    }

    #[test]
    fn corpus_and_mapping() {
        let map = parse_label_mapping("med=-1,space=+1").unwrap();
        assert_eq!(map["med"], -1);
        assert_eq!(map["space"], 1);
        assert!(parse_label_mapping("med=-1").is_err());
        assert!(parse_label_mapping("med=0,space=1").is_err());

        let text = "space\tThe rocket launched\n\nmed\tA doctor\n";
        let docs = read_corpus(text.as_bytes(), "c.tsv", &map).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1], doc(-1, "a doctor"));

        let err = read_corpus("sports\tgoal\n".as_bytes(), "c.tsv", &map).unwrap_err();
        assert!(err.to_string().contains("sports"), "{err}");
        assert!(read_corpus("no tab here\n".as_bytes(), "c.tsv", &map).is_err());
    }

    #[test]
    fn labels_and_vocab_files() {
        let labels = Labels::new(vec![1, -1, 1]).unwrap();
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert_eq!(buf, b"+1\n-1\n+1\n");
        assert_eq!(read_labels(&buf[..], "l").unwrap(), labels);
        assert!(read_labels(&b"0\n"[..], "l").is_err());

        let vocab = Vocabulary::from_tokens(["x".to_owned(), "y".to_owned()]).unwrap();
        let mut buf = Vec::new();
        vocab.write_to(&mut buf).unwrap();
        assert_eq!(Vocabulary::read_from(&buf[..], "v").unwrap(), vocab);
        assert!(Vocabulary::read_from(&b"a\na\n"[..], "v").is_err());
    }
}
