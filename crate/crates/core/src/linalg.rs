//! Dense LU for cell-local blocks and a compressed-row sparse matrix with a
//! direct solver for the global facet system.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::Mat;

use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMatrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Copy of the block `rows × cols` given by index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> DenseMatrix {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Fails when a pivot falls below `1e-14 · max|A|`.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        assert_eq!(a.rows, a.cols, "LU of a non-square matrix");
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let tol = 1e-14 * a.max_abs();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tol) {
                return Err(Error::Singular { pivot: Some(k) });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(DenseLu { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solves for every column of `b` at once.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(b.rows, self.n);
        let n = self.n;
        let m = b.cols;
        let mut x = DenseMatrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[i * n + j];
                if l != 0.0 {
                    let (head, tail) = x.data.split_at_mut(i * m);
                    let src = &head[j * m..(j + 1) * m];
                    for (t, s) in tail[..m].iter_mut().zip(src) {
                        *t -= l * s;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[i * n + j];
                if u != 0.0 {
                    let (head, tail) = x.data.split_at_mut(j * m);
                    let dst = &mut head[i * m..(i + 1) * m];
                    for (d, s) in dst.iter_mut().zip(&tail[..m]) {
                        *d -= u * s;
                    }
                }
            }
            let d = self.lu[i * n + i];
            for v in x.row_mut(i) {
                *v /= d;
            }
        }
        x
    }
}

pub fn dense_lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(DenseLu::factor(a)?.solve(b))
}

/// Compressed-row sparse matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed. Explicit zeros are kept so that the
    /// pattern only depends on the triplet positions.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; rows + 1];
        for &(i, j, _) in triplets {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cj = vec![0usize; triplets.len()];
        let mut cv = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cj[fill[i]] = j;
            cv[fill[i]] = v;
            fill[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..rows {
            let (s, e) = (counts[i], counts[i + 1]);
            order.clear();
            order.extend(s..e);
            order.sort_unstable_by_key(|&k| cj[k]);
            let mut last = usize::MAX;
            for &k in &order {
                if cj[k] == last {
                    *values.last_mut().unwrap() += cv[k];
                } else {
                    col_idx.push(cj[k]);
                    values.push(cv[k]);
                    last = cj[k];
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix { rows, cols, row_ptr, col_idx, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map_or(0.0, |k| v[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                d[(i, j)] = a;
            }
        }
        d
    }

    fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.rows == other.rows && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }
}

/// Sparse LU of a square [`SparseMatrix`].
///
/// The row-compressed arrays are handed to the factorization as the column
/// compressed storage of `Aᵀ`; solves use the transposed factors.
pub struct SparseLu {
    pattern: SparseMatrix,
    symbolic: SymbolicLu<usize>,
    numeric: Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        assert_eq!(a.rows, a.cols, "LU of a non-square matrix");
        let t = transpose_view(a);
        let symbolic = SymbolicLu::try_new(t.symbolic()).map_err(|_| Error::Singular { pivot: None })?;
        let numeric = Lu::try_new_with_symbolic(symbolic.clone(), t.as_ref()).map_err(lu_error)?;
        Ok(SparseLu { pattern: a.clone(), symbolic, numeric })
    }

    /// Numeric refactorization; reuses the fill-reducing ordering when `a` has
    /// the same pattern as the previously factored matrix.
    pub fn refactor(&mut self, a: &SparseMatrix) -> Result<()> {
        if !self.pattern.same_pattern(a) {
            *self = Self::factor(a)?;
            return Ok(());
        }
        let t = transpose_view(a);
        self.numeric = Lu::try_new_with_symbolic(self.symbolic.clone(), t.as_ref()).map_err(lu_error)?;
        self.pattern.values.copy_from_slice(&a.values);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.pattern.rows
    }

    /// Solves with one step of iterative refinement; non-finite results are
    /// reported as a singular matrix.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = self.raw_solve(b);
        let ax = self.pattern.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = self.raw_solve(&r);
        for (x, d) in x.iter_mut().zip(&dx) {
            *x += d;
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular { pivot: Some(i) });
        }
        Ok(x)
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.numeric.solve_transpose(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }
}

fn transpose_view(a: &SparseMatrix) -> SparseColMat<usize, f64> {
    let sym = SymbolicSparseColMat::new_checked(a.cols, a.rows, a.row_ptr.clone(), None, a.col_idx.clone());
    SparseColMat::new(sym, a.values.clone())
}

fn lu_error(e: LuError) -> Error {
    match e {
        LuError::SymbolicSingular { index } => Error::Singular { pivot: Some(index) },
        LuError::Generic(e) => Error::Factorization(format!("{e:?}")),
    }
}

pub fn sparse_lu_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    SparseLu::factor(a)?.solve(b)
}
