//! Sparse SPD linear algebra: direct Cholesky with a preconditioned
//! conjugate-gradient fallback.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Assembled symmetric positive definite matrix in CSC form.
///
/// Duplicate triplet entries are summed. The raw triplets are kept for the
/// iterative fallback path.
pub struct SpdMatrix {
    n: usize,
    mat: SparseColMat<usize, f64>,
    triplets: Vec<Triplet<usize, usize, f64>>,
}

impl SpdMatrix {
    pub fn from_triplets(n: usize, triplets: Vec<Triplet<usize, usize, f64>>) -> Result<Self> {
        let mat = SparseColMat::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Solver(format!("matrix creation: {e:?}")))?;
        Ok(Self { n, mat, triplets })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for t in &self.triplets {
            out[t.row] += t.val * x[t.col];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for t in &self.triplets {
            if t.row == t.col {
                d[t.row] += t.val;
            }
        }
        d
    }
}

/// Reusable sparsity pattern (symbolic factorization).
pub struct SpdPattern {
    symbolic: faer::sparse::linalg::solvers::SymbolicLlt<usize>,
}

impl SpdPattern {
    pub fn new(mat: &SpdMatrix) -> Result<Self> {
        let symbolic = faer::sparse::linalg::solvers::SymbolicLlt::try_new(
            mat.mat.symbolic(),
            Side::Lower,
        )
        .map_err(|e| Error::Solver(format!("symbolic factorization: {e:?}")))?;
        Ok(Self { symbolic })
    }
}

/// Factorized SPD system ready to solve against many right-hand sides.
pub enum SpdFactor {
    Direct(faer::sparse::linalg::solvers::Llt<usize, f64>),
    /// Fallback when the numeric factorization fails.
    Iterative {
        mat: SpdMatrix,
        precond: Vec<f64>,
    },
}

impl SpdFactor {
    pub fn new(mat: SpdMatrix, pattern: &SpdPattern) -> Result<Self> {
        match faer::sparse::linalg::solvers::Llt::try_new_with_symbolic(
            pattern.symbolic.clone(),
            mat.mat.as_ref(),
            Side::Lower,
        ) {
            Ok(llt) => Ok(Self::Direct(llt)),
            Err(_) => {
                let precond = mat.diagonal().iter().map(|&d| 1.0 / d.max(1e-300)).collect();
                Ok(Self::Iterative { mat, precond })
            }
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Direct(llt) => {
                let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
                let x = llt.solve(&b);
                Ok((0..rhs.len()).map(|i| x[(i, 0)]).collect())
            }
            Self::Iterative { mat, precond } => pcg(mat, precond, rhs, 1e-10, 20 * mat.n() + 200),
        }
    }
}

/// Jacobi-preconditioned conjugate gradients to a relative residual.
fn pcg(
    mat: &SpdMatrix,
    precond: &[f64],
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = mat.n();
    let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(precond).map(|(ri, m)| ri * m).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        mat.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Solver("matrix not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_r <= rel_tol * norm_b {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * precond[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::Solver(format!(
        "cg did not converge: relative residual {:.3e}",
        norm_r / norm_b
    )))
}

/// One-shot factorize-and-solve.
pub fn solve_spd(mat: SpdMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let pattern = SpdPattern::new(&mat)?;
    SpdFactor::new(mat, &pattern)?.solve(rhs)
}
