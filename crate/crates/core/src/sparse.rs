//! Column-compressed sparse design matrices and the inner-product kernels the
//! solvers run on.
//!
//! Every solver's hot loop correlates columns against a dense vector, so the
//! matrix is stored column-major and immutable once built. The bias feature is
//! an explicit all-ones column; by convention it is the last one.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    bias: Option<usize>,
}

/// Borrowed view of one stored column; rows are strictly ascending.
#[derive(Debug, Clone, Copy)]
pub struct Column<'a> {
    pub rows: &'a [usize],
    pub values: &'a [f64],
}

impl Column<'_> {
    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(self.values)
            .map(|(&i, &x)| x * v[i])
            .sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }

    /// Inner product of two sparse columns by merging their row lists.
    pub fn dot_column(&self, other: &Column<'_>) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.rows.len() && b < other.rows.len() {
            match self.rows[a].cmp(&other.rows[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }
}

/// Borrowed view of one row (a document): ascending column indices.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub cols: &'a [usize],
    pub values: &'a [f64],
}

impl SparseRow<'_> {
    pub fn dot(&self, theta: &[f64]) -> f64 {
        self.cols
            .iter()
            .zip(self.values)
            .map(|(&j, &x)| x * theta[j])
            .sum()
    }
}

/// Row-major copy of a matrix, used where per-document access is needed
/// (Hessian assembly, single-document loss).
#[derive(Debug, Clone)]
pub struct RowMajor {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl RowMajor {
    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        SparseRow {
            cols: &self.col_idx[span.clone()],
            values: &self.values[span],
        }
    }
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Explicit zeros are
    /// dropped; duplicates, non-finite values and out-of-range indices are
    /// rejected.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_cols];
        for (i, j, v) in triplets {
            if i >= n_rows {
                return Err(Error::IndexOutOfRange {
                    what: "row",
                    index: i,
                    bound: n_rows,
                });
            }
            if j >= n_cols {
                return Err(Error::IndexOutOfRange {
                    what: "column",
                    index: j,
                    bound: n_cols,
                });
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite value {v} at ({i}, {j})"
                )));
            }
            if v != 0.0 {
                columns[j].push((i, v));
            }
        }
        Self::from_columns(n_rows, columns)
    }

    /// Builds a matrix from per-column `(row, value)` lists in any order.
    pub fn from_columns(n_rows: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n_cols = columns.len();
        let nnz = columns.iter().map(Vec::len).sum();
        let mut col_ptr = Vec::with_capacity(n_cols + 1);
        let mut row_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        col_ptr.push(0);
        for (j, mut col) in columns.into_iter().enumerate() {
            col.sort_by_key(|&(i, _)| i);
            for w in col.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidInput(format!(
                        "duplicate entry at ({}, {j})",
                        w[0].0
                    )));
                }
            }
            for (i, v) in col {
                if i >= n_rows {
                    return Err(Error::IndexOutOfRange {
                        what: "row",
                        index: i,
                        bound: n_rows,
                    });
                }
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "non-finite value {v} at ({i}, {j})"
                    )));
                }
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
            bias: None,
        })
    }

    /// Dense row-major input, mostly for tests and small examples.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    what: "dense row length",
                    expected: n_cols,
                    got: row.len(),
                });
            }
            triplets.extend(row.iter().enumerate().map(|(j, &v)| (i, j, v)));
        }
        Self::from_triplets(n_rows, n_cols, triplets)
    }

    /// Appends an all-ones column and designates it as the bias.
    pub fn with_bias_column(mut self) -> Self {
        self.row_idx.extend(0..self.n_rows);
        self.values.extend(std::iter::repeat_n(1.0, self.n_rows));
        self.col_ptr.push(self.row_idx.len());
        self.n_cols += 1;
        self.bias = Some(self.n_cols - 1);
        self
    }

    /// Designates an existing column as the bias; it must be 1.0 in every row.
    pub fn set_bias_column(&mut self, j: usize) -> Result<()> {
        if !self.is_ones_column(j)? {
            return Err(Error::InvalidInput(format!(
                "column {j} is not an all-ones bias column"
            )));
        }
        self.bias = Some(j);
        Ok(())
    }

    /// Uses the last column as bias when it is all ones, otherwise appends one.
    pub fn ensure_bias_last(mut self) -> Self {
        match self.n_cols.checked_sub(1) {
            Some(last) if self.is_ones_column(last).unwrap_or(false) => {
                self.bias = Some(last);
                self
            }
            _ => self.with_bias_column(),
        }
    }

    fn is_ones_column(&self, j: usize) -> Result<bool> {
        let col = self.column(j)?;
        Ok(self.n_rows > 0 && col.nnz() == self.n_rows && col.values.iter().all(|&v| v == 1.0))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn bias(&self) -> Option<usize> {
        self.bias
    }

    pub fn column(&self, j: usize) -> Result<Column<'_>> {
        if j >= self.n_cols {
            return Err(Error::IndexOutOfRange {
                what: "column",
                index: j,
                bound: self.n_cols,
            });
        }
        Ok(self.column_unchecked(j))
    }

    pub(crate) fn column_unchecked(&self, j: usize) -> Column<'_> {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        Column {
            rows: &self.row_idx[span.clone()],
            values: &self.values[span],
        }
    }

    /// `Σ_i X[i,j]·v[i]` over the stored nonzeros of column `j`, summed in
    /// ascending row order.
    pub fn col_dot(&self, j: usize, v: &[f64]) -> Result<f64> {
        self.check_rows_len(v.len())?;
        Ok(self.column(j)?.dot(v))
    }

    /// Correlations of every column with `v` (i.e. `Xᵀv`). Columns are
    /// processed in parallel but each sum is sequential, so the result does not
    /// depend on the thread count.
    pub fn col_dots(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_rows_len(v.len())?;
        Ok((0..self.n_cols)
            .into_par_iter()
            .map(|j| self.column_unchecked(j).dot(v))
            .collect())
    }

    /// Correlations of the listed columns with `v`.
    pub fn col_dots_at(&self, cols: &[usize], v: &[f64]) -> Result<Vec<f64>> {
        self.check_rows_len(v.len())?;
        self.check_cols(cols)?;
        Ok(cols
            .par_iter()
            .map(|&j| self.column_unchecked(j).dot(v))
            .collect())
    }

    pub fn mat_vec(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                what: "theta length",
                expected: self.n_cols,
                got: theta.len(),
            });
        }
        let mut out = vec![0.0; self.n_rows];
        for (j, &t) in theta.iter().enumerate() {
            if t != 0.0 {
                self.axpy_column(j, t, &mut out);
            }
        }
        Ok(out)
    }

    /// `Xθ` using only the columns in `support`; coordinates of `theta`
    /// outside it are ignored.
    pub fn mat_vec_support(&self, theta: &[f64], support: &[usize]) -> Result<Vec<f64>> {
        if theta.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                what: "theta length",
                expected: self.n_cols,
                got: theta.len(),
            });
        }
        self.check_cols(support)?;
        let mut sorted = support.to_vec();
        sorted.sort_unstable();
        let mut out = vec![0.0; self.n_rows];
        for j in sorted {
            if theta[j] != 0.0 {
                self.axpy_column(j, theta[j], &mut out);
            }
        }
        Ok(out)
    }

    fn axpy_column(&self, j: usize, alpha: f64, out: &mut [f64]) {
        let col = self.column_unchecked(j);
        for (&i, &x) in col.rows.iter().zip(col.values) {
            out[i] += alpha * x;
        }
    }

    /// Columns at `cols`, arranged in ascending order of original index. The
    /// bias designation carries over when the bias column is kept.
    pub fn submatrix(&self, cols: &[usize]) -> Result<SparseMatrix> {
        self.check_cols(cols)?;
        let mut sorted = cols.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut bias = None;
        for (new_j, &j) in sorted.iter().enumerate() {
            let col = self.column_unchecked(j);
            row_idx.extend_from_slice(col.rows);
            values.extend_from_slice(col.values);
            col_ptr.push(row_idx.len());
            if self.bias == Some(j) {
                bias = Some(new_j);
            }
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: sorted.len(),
            col_ptr,
            row_idx,
            values,
            bias,
        })
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.n_cols)
            .map(|j| self.column_unchecked(j).sq_norm().sqrt())
            .collect()
    }

    pub fn to_row_major(&self) -> RowMajor {
        let mut counts = vec![0usize; self.n_rows + 1];
        for &i in &self.row_idx {
            counts[i + 1] += 1;
        }
        for i in 0..self.n_rows {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for j in 0..self.n_cols {
            let col = self.column_unchecked(j);
            for (&i, &x) in col.rows.iter().zip(col.values) {
                col_idx[next[i]] = j;
                values[next[i]] = x;
                next[i] += 1;
            }
        }
        RowMajor {
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for j in 0..self.n_cols {
            let col = self.column_unchecked(j);
            for (&i, &x) in col.rows.iter().zip(col.values) {
                dense[i][j] = x;
            }
        }
        dense
    }

    fn check_rows_len(&self, len: usize) -> Result<()> {
        if len != self.n_rows {
            return Err(Error::DimensionMismatch {
                what: "vector length",
                expected: self.n_rows,
                got: len,
            });
        }
        Ok(())
    }

    fn check_cols(&self, cols: &[usize]) -> Result<()> {
        match cols.iter().find(|&&j| j >= self.n_cols) {
            Some(&j) => Err(Error::IndexOutOfRange {
                what: "column",
                index: j,
                bound: self.n_cols,
            }),
            None => Ok(()),
        }
    }

    /// Writes the text format: a `n_rows n_cols` header, then one
    /// `row col value` line per nonzero in column-major order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.n_rows, self.n_cols)?;
        for j in 0..self.n_cols {
            let col = self.column_unchecked(j);
            for (&i, &x) in col.rows.iter().zip(col.values) {
                writeln!(w, "{i} {j} {x:?}")?;
            }
        }
        Ok(())
    }

    /// Reads the text format written by [`SparseMatrix::write_to`]. Blank
    /// lines are skipped. No bias column is designated.
    pub fn read_from<R: BufRead>(r: R, path: &str) -> Result<SparseMatrix> {
        let mut lines = r.lines().enumerate();
        let (n_rows, n_cols) = loop {
            let Some((no, line)) = lines.next() else {
                return Err(Error::parse(path, 1, "missing `n_rows n_cols` header"));
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::parse(path, no + 1, "header must be `n_rows n_cols`"));
            }
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::parse(path, no + 1, format!("bad dimension {s:?}: {e}")))
            };
            break (parse(fields[0])?, parse(fields[1])?);
        };
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_cols];
        for (no, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = no + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::parse(path, lineno, "expected `row col value`"));
            }
            let i: usize = fields[0]
                .parse()
                .map_err(|e| Error::parse(path, lineno, format!("bad row index: {e}")))?;
            let j: usize = fields[1]
                .parse()
                .map_err(|e| Error::parse(path, lineno, format!("bad column index: {e}")))?;
            let v: f64 = fields[2]
                .parse()
                .map_err(|e| Error::parse(path, lineno, format!("bad value: {e}")))?;
            if i >= n_rows || j >= n_cols {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("entry ({i}, {j}) outside {n_rows}x{n_cols}"),
                ));
            }
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, "non-finite value"));
            }
            columns[j].push((i, v));
        }
        Self::from_columns(n_rows, columns).map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        if rng.random_bool(0.5) {
                            rng.random_range(-3.0..3.0)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn col_dot_hand_sum() {
        let m = SparseMatrix::from_columns(3, vec![vec![(0, 1.0), (2, 2.0)], vec![]]).unwrap();
        assert_eq!(m.col_dot(0, &[1.0, 5.0, 1.0]).unwrap(), 3.0);
        assert_eq!(m.col_dot(1, &[1.0, 5.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn col_dot_errors() {
        let m = SparseMatrix::from_columns(3, vec![vec![(0, 1.0)]]).unwrap();
        assert!(matches!(
            m.col_dot(1, &[0.0; 3]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            m.col_dot(0, &[0.0; 2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn col_dot_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dense = random_dense(&mut rng, 6, 4);
        let m = SparseMatrix::from_dense(&dense).unwrap();
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        for j in 0..4 {
            let oracle: f64 = (0..6).map(|i| dense[i][j] * v[i]).sum();
            assert!((m.col_dot(j, &v).unwrap() - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn mat_vec_cases() {
        let eye = SparseMatrix::from_dense(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(eye.mat_vec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(eye.mat_vec(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(eye.mat_vec(&[0.0; 2]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dense = random_dense(&mut rng, 5, 7);
        let m = SparseMatrix::from_dense(&dense).unwrap();
        let theta: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = m.mat_vec(&theta).unwrap();
        for i in 0..5 {
            let oracle: f64 = (0..7).map(|j| dense[i][j] * theta[j]).sum();
            assert!((got[i] - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn submatrix_cases() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 0.0, 7.0, 8.0]])
            .unwrap();
        assert_eq!(m.submatrix(&[0, 1, 2, 3]).unwrap(), m);
        let empty = m.submatrix(&[]).unwrap();
        assert_eq!((empty.n_rows(), empty.n_cols()), (2, 0));
        let sub = m.submatrix(&[3, 1]).unwrap();
        assert_eq!(sub.to_dense(), vec![vec![2.0, 4.0], vec![0.0, 8.0]]);
        assert!(m.submatrix(&[4]).is_err());
    }

    #[test]
    fn bias_column_handling() {
        let m = SparseMatrix::from_dense(&[vec![2.0], vec![0.0]]).unwrap();
        let b = m.clone().with_bias_column();
        assert_eq!(b.bias(), Some(1));
        assert_eq!(b.to_dense(), vec![vec![2.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(b.clone().ensure_bias_last(), b);
        let mut stripped = b.clone();
        stripped.bias = None;
        assert_eq!(stripped.ensure_bias_last().bias(), Some(1));
        assert_eq!(m.clone().ensure_bias_last().n_cols(), 2);
        let mut m2 = m;
        assert!(m2.set_bias_column(0).is_err());
    }

    #[test]
    fn rejects_bad_triplets() {
        assert!(SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, [(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, [(0, 0, f64::NAN)]).is_err());
        let m = SparseMatrix::from_triplets(2, 2, [(0, 0, 0.0)]).unwrap();
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    fn file_round_trip_and_errors() {
        let m = SparseMatrix::from_dense(&[vec![1.5, 0.0], vec![0.0, -2.25]]).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "2 2\n0 0 1.5\n1 1 -2.25\n");
        assert_eq!(SparseMatrix::read_from(&buf[..], "m").unwrap(), m);

        let err = SparseMatrix::read_from(&b"2 2\n0 5 1\n"[..], "m.txt").unwrap_err();
        assert!(err.to_string().starts_with("m.txt:2:"), "{err}");
        assert!(SparseMatrix::read_from(&b"2 2\n0 x 1\n"[..], "m").is_err());
        assert!(SparseMatrix::read_from(&b""[..], "m").is_err());
    }

    #[test]
    fn row_major_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = random_dense(&mut rng, 5, 6);
        let m = SparseMatrix::from_dense(&dense).unwrap();
        let rows = m.to_row_major();
        let theta: Vec<f64> = (0..6).map(|j| j as f64 - 2.5).collect();
        let mv = m.mat_vec(&theta).unwrap();
        for (i, expected) in mv.iter().enumerate() {
            assert!((rows.row(i).dot(&theta) - expected).abs() < 1e-12);
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn matrix_and_vectors() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<bool>)> {
            (1usize..8, 1usize..8).prop_flat_map(|(n, d)| {
                (
                    proptest::collection::vec(
                        proptest::collection::vec(
                            prop_oneof![Just(0.0), -5.0..5.0f64],
                            d,
                        ),
                        n,
                    ),
                    proptest::collection::vec(-5.0..5.0f64, d),
                    proptest::collection::vec(-5.0..5.0f64, d),
                    proptest::collection::vec(any::<bool>(), d),
                )
            })
        }

        proptest! {
            #[test]
            fn col_dot_equals_dense((dense, _a, _b, _m) in matrix_and_vectors(), seed in 0u64..1000) {
                let m = SparseMatrix::from_dense(&dense).unwrap();
                let n = dense.len();
                let v: Vec<f64> = (0..n).map(|i| ((i as u64 * 31 + seed) % 17) as f64 - 8.0).collect();
                for j in 0..m.n_cols() {
                    let oracle: f64 = (0..n).map(|i| dense[i][j] * v[i]).sum();
                    let got = m.col_dot(j, &v).unwrap();
                    prop_assert!((got - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));
                }
            }

            #[test]
            fn mat_vec_is_additive((dense, a, b, _m) in matrix_and_vectors()) {
                let m = SparseMatrix::from_dense(&dense).unwrap();
                let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                let lhs = m.mat_vec(&sum).unwrap();
                let ra = m.mat_vec(&a).unwrap();
                let rb = m.mat_vec(&b).unwrap();
                for i in 0..lhs.len() {
                    prop_assert!((lhs[i] - (ra[i] + rb[i])).abs() <= 1e-12 * (1.0 + lhs[i].abs()));
                }
            }

            #[test]
            fn submatrix_matches_masked_mat_vec((dense, a, _b, mask) in matrix_and_vectors()) {
                let m = SparseMatrix::from_dense(&dense).unwrap();
                let support: Vec<usize> = (0..m.n_cols()).filter(|&j| mask[j]).collect();
                let sub = m.submatrix(&support).unwrap();
                let sub_theta: Vec<f64> = support.iter().map(|&j| a[j]).collect();
                let masked: Vec<f64> = (0..m.n_cols()).map(|j| if mask[j] { a[j] } else { 0.0 }).collect();
                let lhs = sub.mat_vec(&sub_theta).unwrap();
                let rhs = m.mat_vec(&masked).unwrap();
                for i in 0..lhs.len() {
                    prop_assert!((lhs[i] - rhs[i]).abs() <= 1e-12 * (1.0 + rhs[i].abs()));
                }
            }
        }
    }
}
