//! Sparse-matrix plumbing shared by the tableau, power-flow, and OPF solvers.
//!
//! Assembly happens in triplet (coordinate) form; factorization converts to
//! compressed sparse column and runs an LU with partial pivoting (backed by
//! `faer`). The backend reports *structural* singularity when building the
//! factorization, but a numerically singular matrix silently produces
//! non-finite solutions, so every solve is post-checked here.

use std::io::{self, Write};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;

/// Coordinate-form entry of a complex sparse matrix.
pub type CTriplet = Triplet<usize, usize, Complex64>;
/// Coordinate-form entry of a real sparse matrix.
pub type RTriplet = Triplet<usize, usize, f64>;

/// Builds a complex triplet. Duplicate (row, col) pairs are summed on
/// conversion to CSC.
pub fn ct(row: usize, col: usize, val: Complex64) -> CTriplet {
    Triplet::new(row, col, val)
}

/// Builds a real triplet.
pub fn rt(row: usize, col: usize, val: f64) -> RTriplet {
    Triplet::new(row, col, val)
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("matrix is singular (diagnostic index {index})")]
    Singular { index: usize },
    #[error("triplet outside matrix dimensions")]
    Shape,
}

/// Expands one complex linear equation entry into the four real entries of the
/// split-block realification
/// `[[Re M, -Im M], [Im M, Re M]] [Re x; Im x] = [Re b; Im b]`,
/// where the complex system has `rows` equations and `cols` unknowns.
pub fn realify_entry(
    out: &mut Vec<RTriplet>,
    rows: usize,
    cols: usize,
    row: usize,
    col: usize,
    val: Complex64,
) {
    if val.re != 0.0 {
        out.push(rt(row, col, val.re));
        out.push(rt(rows + row, cols + col, val.re));
    }
    if val.im != 0.0 {
        out.push(rt(row, cols + col, -val.im));
        out.push(rt(rows + row, col, val.im));
    }
}

fn build_complex(
    nrows: usize,
    ncols: usize,
    triplets: &[CTriplet],
) -> Result<SparseColMat<usize, Complex64>, SolveError> {
    SparseColMat::try_new_from_triplets(nrows, ncols, triplets).map_err(|_| SolveError::Shape)
}

fn build_real(
    nrows: usize,
    ncols: usize,
    triplets: &[RTriplet],
) -> Result<SparseColMat<usize, f64>, SolveError> {
    SparseColMat::try_new_from_triplets(nrows, ncols, triplets).map_err(|_| SolveError::Shape)
}

/// Sparse mat-vec `A * x` for a complex matrix given in triplet form.
pub fn matvec_complex(
    nrows: usize,
    triplets: &[CTriplet],
    x: &[Complex64],
) -> Vec<Complex64> {
    let mut y = vec![Complex64::ZERO; nrows];
    for t in triplets {
        y[t.row] += t.val * x[t.col];
    }
    y
}

/// One-shot sparse LU factorization of a square complex system.
pub struct ComplexLu {
    n: usize,
    mat: SparseColMat<usize, Complex64>,
    lu: Lu<usize, Complex64>,
}

impl ComplexLu {
    pub fn factor(n: usize, triplets: &[CTriplet]) -> Result<Self, SolveError> {
        let mat = build_complex(n, n, triplets)?;
        let symbolic = SymbolicLu::try_new(mat.symbolic())
            .map_err(|_| SolveError::Singular { index: n })?;
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|e| SolveError::Singular { index: singular_index(&e, n) })?;
        Ok(Self { n, mat, lu })
    }

    /// Solves `A x = b`, rejecting non-finite results (numerically singular
    /// factorizations slip through `faer` and surface as NaN/Inf here).
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>, SolveError> {
        assert_eq!(b.len(), self.n, "right-hand side length mismatch");
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let sol = self.lu.solve(&rhs);
        let x: Vec<Complex64> = (0..self.n).map(|i| sol[(i, 0)]).collect();
        if let Some(index) = x.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SolveError::Singular { index });
        }
        Ok(x)
    }

    /// Max-norm of `A x - b`.
    pub fn residual_inf(&self, x: &[Complex64], b: &[Complex64]) -> f64 {
        let xm = Mat::from_fn(self.n, 1, |i, _| x[i]);
        let ax = &self.mat * &xm;
        (0..self.n)
            .map(|i| (ax[(i, 0)] - b[i]).norm())
            .fold(0.0, f64::max)
    }
}

/// One-shot sparse LU factorization of a square real system.
pub struct RealLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl RealLu {
    pub fn factor(n: usize, triplets: &[RTriplet]) -> Result<Self, SolveError> {
        let mat = build_real(n, n, triplets)?;
        let symbolic = SymbolicLu::try_new(mat.symbolic())
            .map_err(|_| SolveError::Singular { index: n })?;
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|e| SolveError::Singular { index: singular_index(&e, n) })?;
        Ok(Self { n, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        assert_eq!(b.len(), self.n, "right-hand side length mismatch");
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let sol = self.lu.solve(&rhs);
        let x: Vec<f64> = (0..self.n).map(|i| sol[(i, 0)]).collect();
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(SolveError::Singular { index });
        }
        Ok(x)
    }
}

fn singular_index(err: &LuError, n: usize) -> usize {
    match err {
        LuError::SymbolicSingular { index } => *index,
        LuError::Generic(_) => n,
    }
}

/// Writes a complex sparse matrix in MatrixMarket coordinate format.
/// Duplicates must already be combined; indices are emitted 1-based.
pub fn write_matrix_market_complex(
    w: &mut impl Write,
    nrows: usize,
    ncols: usize,
    entries: &[(usize, usize, Complex64)],
) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
    writeln!(w, "{} {} {}", nrows, ncols, entries.len())?;
    for (r, c, z) in entries {
        writeln!(w, "{} {} {:.17e} {:.17e}", r + 1, c + 1, z.re, z.im)?;
    }
    Ok(())
}

/// Combines triplets into a sorted, duplicate-summed entry list (row-major),
/// dropping exact zeros. Used for MatrixMarket dumps and dense conversions.
pub fn combined_entries(triplets: &[CTriplet]) -> Vec<(usize, usize, Complex64)> {
    let mut entries: Vec<(usize, usize, Complex64)> =
        triplets.iter().map(|t| (t.row, t.col, t.val)).collect();
    entries.sort_by_key(|&(r, c, _)| (r, c));
    let mut out: Vec<(usize, usize, Complex64)> = Vec::with_capacity(entries.len());
    for (r, c, z) in entries {
        match out.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += z,
            _ => out.push((r, c, z)),
        }
    }
    out.retain(|&(_, _, z)| z != Complex64::ZERO);
    out
}
