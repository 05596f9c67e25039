//! Sparse assembly (triplets to CSR) and direct solves.
//!
//! Factorization is delegated to faer's supernodal sparse LU with partial
//! pivoting. A [`LinearSolver`] keeps the symbolic analysis of the last
//! sparsity pattern it saw, so repeated solves on a fixed pattern only pay
//! for the numeric factorization.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Par};

use crate::error::{Error, Result};

/// Relative residual every solve must reach.
pub const SOLVE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder { nrows, ncols, ..Default::default() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    /// Appends the entries of another builder of the same shape.
    pub fn merge(&mut self, other: TripletBuilder) -> Result<()> {
        if other.dims() != self.dims() {
            return Err(Error::Dimension(format!("cannot merge {:?} into {:?}", other.dims(), self.dims())));
        }
        self.rows.extend(other.rows);
        self.cols.extend(other.cols);
        self.vals.extend(other.vals);
        Ok(())
    }

    /// Sums duplicates and produces sorted compressed rows. Entries are kept
    /// even when they sum to zero so the pattern only depends on the indices.
    pub fn compress(&self) -> Result<CsrMatrix> {
        for (&r, &c) in self.rows.iter().zip(&self.cols) {
            if r >= self.nrows || c >= self.ncols {
                return Err(Error::IndexOutOfRange { row: r, col: c, nrows: self.nrows, ncols: self.ncols });
            }
        }
        let mut counts = vec![0usize; self.nrows + 1];
        for &r in &self.rows {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.vals.len()];
        let mut vals = vec![0.0; self.vals.len()];
        for k in 0..self.vals.len() {
            let r = self.rows[k];
            cols[next[r]] = self.cols[k];
            vals[next[r]] = self.vals[k];
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.vals.len());
        let mut values = Vec::with_capacity(self.vals.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..self.nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            // Stable sort keeps the summation order of duplicates deterministic.
            scratch.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < scratch.len() {
                let c = scratch[i].0;
                let mut v = 0.0;
                while i < scratch.len() && scratch[i].0 == c {
                    v += scratch[i].1;
                    i += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let s = self.row_ptr[r];
        let e = self.row_ptr[r + 1];
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] += v;
            }
        }
        d
    }

    /// Column-compressed arrays `(col_ptr, row_idx, values)` of the same matrix.
    pub fn to_csc(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut col_ptr = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            col_ptr[c + 1] += 1;
        }
        for c in 0..self.ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row_idx[next[c]] = r;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        (col_ptr, row_idx, values)
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm2(b);
    let rel = if nb > 0.0 { norm2(&r) / nb } else { norm2(&r) };
    (r, rel)
}

/// Direct solver that reuses the symbolic factorization across calls with
/// an identical sparsity pattern. Built with [`LinearSolver::keeping_factors`]
/// it also keeps the numeric factors while the matrix stays unchanged.
#[derive(Default)]
pub struct LinearSolver {
    cached: Option<(Vec<usize>, Vec<usize>, Arc<SymbolicLu<usize>>)>,
    keep_factors: bool,
    kept: Option<(CsrMatrix, Factorization)>,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSolver").field("cached", &self.cached.is_some()).finish()
    }
}

/// Numeric LU factors of one matrix.
pub struct Factorization {
    symbolic: Arc<SymbolicLu<usize>>,
    numeric: NumericLu<usize, f64>,
    n: usize,
}

fn lu_failed<E>(_: E) -> Error {
    Error::SolveFailed { residual: f64::INFINITY }
}

impl LinearSolver {
    pub fn new() -> Self {
        LinearSolver::default()
    }

    pub fn keeping_factors() -> Self {
        LinearSolver { keep_factors: true, ..Default::default() }
    }

    pub fn factorize(&mut self, a: &CsrMatrix) -> Result<Factorization> {
        if a.nrows != a.ncols {
            return Err(Error::Dimension(format!("matrix is {}x{}, expected square", a.nrows, a.ncols)));
        }
        let n = a.nrows;
        let (col_ptr, row_idx, values) = a.to_csc();
        let reuse = matches!(&self.cached, Some((cp, ri, _)) if *cp == col_ptr && *ri == row_idx);
        if !reuse {
            let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
            let params = LuSymbolicParams {
                supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
                ..Default::default()
            };
            let symbolic = factorize_symbolic_lu(sym, params).map_err(lu_failed)?;
            self.cached = Some((col_ptr, row_idx, Arc::new(symbolic)));
        }
        let (cp, ri, symbolic) = self.cached.as_ref().expect("symbolic factorization cached");
        let sym = SymbolicSparseColMatRef::new_checked(n, n, cp, None, ri);
        let mat = SparseColMatRef::new(sym, &values);
        let mut numeric = NumericLu::new();
        let mut buf = MemBuffer::try_new(symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default()))
            .map_err(lu_failed)?;
        symbolic
            .factorize_numeric_lu(&mut numeric, mat, Par::Seq, MemStack::new(&mut buf), Default::default())
            .map_err(lu_failed)?;
        Ok(Factorization { symbolic: Arc::clone(symbolic), numeric, n })
    }

    /// Factorizes and solves `a x = b`, with up to two steps of iterative
    /// refinement, and checks the relative residual against [`SOLVE_TOL`].
    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != a.nrows {
            return Err(Error::Dimension(format!("rhs has length {}, matrix has {} rows", b.len(), a.nrows)));
        }
        if b.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; b.len()]);
        }
        if !self.keep_factors {
            return self.factorize(a)?.solve_checked(a, b);
        }
        if !matches!(&self.kept, Some((m, _)) if m == a) {
            let f = self.factorize(a)?;
            self.kept = Some((a.clone(), f));
        }
        self.kept.as_ref().expect("factors kept").1.solve_checked(a, b)
    }
}

impl Factorization {
    pub fn solve_raw(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let lu = LuRef::new_unchecked(&self.symbolic, &self.numeric);
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        lu.solve_in_place_with_conj(Conj::No, rhs.as_mut(), Par::Seq, MemStack::new(&mut buf));
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn solve_checked(&self, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve_raw(b);
        let (mut r, mut rel) = relative_residual(a, &x, b);
        for _ in 0..2 {
            if rel <= SOLVE_TOL || !rel.is_finite() {
                break;
            }
            let dx = self.solve_raw(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            (r, rel) = relative_residual(a, &x, b);
        }
        if rel <= SOLVE_TOL {
            Ok(x)
        } else {
            Err(Error::SolveFailed { residual: rel })
        }
    }
}

/// One-shot direct solve.
pub fn solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    LinearSolver::new().solve(a, b)
}
