//! Model files: a `d bias lambda` header (bias may be `none`), then one
//! `index weight` line per active coordinate in ascending index order.
//! Weights are written in the shortest form that parses back exactly.

use std::io::{BufRead, Write};

use lomp::{ActiveSet, Error, Model, Result};

pub fn write_model<W: Write>(model: &Model, mut w: W) -> Result<()> {
    let bias = model.bias.map_or("none".to_owned(), |b| b.to_string());
    writeln!(w, "{} {} {:?}", model.dim(), bias, model.lambda)?;
    for j in model.active.sorted() {
        writeln!(w, "{} {:?}", j, model.theta[j])?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(r: R, path: &str) -> Result<Model> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { path: path.into(), line: 1, msg: "empty model file".into() })?;
    let header = header?;
    let bad = |line: usize, msg: String| Error::Parse { path: path.into(), line, msg };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [d, bias, lambda] = fields[..] else {
        return Err(bad(1, "header must be `d bias lambda`".into()));
    };
    let d: usize = d.parse().map_err(|_| bad(1, format!("bad dimension {d:?}")))?;
    let bias = match bias {
        "none" => None,
        b => Some(b.parse::<usize>().map_err(|_| bad(1, format!("bad bias index {b:?}")))?),
    };
    if bias.is_some_and(|b| b >= d) {
        return Err(bad(1, "bias index out of range".into()));
    }
    let lambda: f64 = lambda.parse().map_err(|_| bad(1, format!("bad lambda {lambda:?}")))?;

    let mut theta = vec![0.0; d];
    let mut active = ActiveSet::new();
    for (no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(j), Some(w), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(no + 1, "expected `index weight`".into()));
        };
        let j: usize = j.parse().map_err(|_| bad(no + 1, format!("bad index {j:?}")))?;
        let w: f64 = w.parse().map_err(|_| bad(no + 1, format!("bad weight {w:?}")))?;
        if j >= d {
            return Err(bad(no + 1, format!("index {j} out of range for dimension {d}")));
        }
        if !active.insert(j) {
            return Err(bad(no + 1, format!("index {j} listed twice")));
        }
        theta[j] = w;
    }
    Ok(Model { theta, active, lambda, bias })
}

/// Terms with their weights, strongest first.
pub type Ranked<'v> = Vec<(&'v str, f64)>;

/// Top `n` vocabulary terms by signed weight: (most positive, most negative).
/// Zero weights and the bias are never listed.
pub fn top_weights<'v>(
    model: &Model,
    vocab: &'v lomp::textpipe::Vocabulary,
    n: usize,
) -> Result<(Ranked<'v>, Ranked<'v>)> {
    let expected = vocab.len() + usize::from(model.bias.is_some());
    if model.dim() != expected {
        return Err(Error::DimensionMismatch {
            what: "model dimension for this vocabulary",
            expected,
            got: model.dim(),
        });
    }
    let mut weights: Vec<(usize, f64)> = (0..vocab.len())
        .filter(|&j| Some(j) != model.bias && model.theta[j] != 0.0)
        .map(|j| (j, model.theta[j]))
        .collect();
    let name = |(j, w): (usize, f64)| (vocab.token(j).expect("index below vocabulary size"), w);
    weights.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let positive = weights.iter().copied().filter(|w| w.1 > 0.0).take(n).map(name).collect();
    weights.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let negative = weights.iter().copied().filter(|w| w.1 < 0.0).take(n).map(name).collect();
    Ok((positive, negative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lomp::textpipe::Vocabulary;

    #[test]
    fn round_trip_is_exact() {
        let model = Model {
            theta: vec![0.1 + 0.2, 0.0, -1e-300, 0.0, 7.0],
            active: [4, 0, 2, 3].into_iter().collect(),
            lambda: 0.01,
            bias: Some(4),
        };
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "5 4 0.01\n0 0.30000000000000004\n2 -1e-300\n3 0.0\n4 7.0\n"
        );
        assert_eq!(read_model(&buf[..], "m").unwrap(), model);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(read_model(&b""[..], "m").is_err());
        assert!(read_model(&b"3 none\n"[..], "m").is_err());
        assert!(read_model(&b"3 none 1\n5 1.0\n"[..], "m").is_err());
        assert!(read_model(&b"3 none 1\n1 1.0\n1 2.0\n"[..], "m").is_err());
        let err = read_model(&b"3 2 1\n0 x\n"[..], "m.txt").unwrap_err();
        assert!(err.to_string().starts_with("m.txt:2:"), "{err}");
    }

    #[test]
    fn top_weight_cases() {
        let vocab = Vocabulary::from_tokens(["med", "space", "orbit"].map(String::from)).unwrap();
        let mut m = Model::zeros(4, Some(3), 1.0);
        m.theta[1] = 2.0;
        m.theta[3] = 5.0;
        let (pos, neg) = top_weights(&m, &vocab, 1).unwrap();
        assert_eq!(pos, vec![("space", 2.0)]);
        assert!(neg.is_empty());

        let zero = Model::zeros(4, Some(3), 1.0);
        let (pos, neg) = top_weights(&zero, &vocab, 5).unwrap();
        assert!(pos.is_empty() && neg.is_empty());

        assert!(top_weights(&Model::zeros(9, Some(8), 1.0), &vocab, 1).is_err());
    }
}
