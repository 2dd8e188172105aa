//! Linear solve backend: sparse Cholesky for systems up to
//! [`DIRECT_LIMIT`](super::DIRECT_LIMIT) unknowns, Jacobi-preconditioned
//! conjugate gradients beyond that. Both expect a symmetric positive
//! definite matrix, which assembly plus Dirichlet elimination guarantees.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::csc::CscMatrix;
use nalgebra_sparse::factorization::CscCholesky;

use super::{csc_matvec, DIRECT_LIMIT};
use crate::error::{Error, Result};

const CG_TOL: f64 = 1e-12;

pub enum LinearSolver {
    Direct(CscCholesky<f64>),
    Jacobi {
        a: CscMatrix<f64>,
        inv_diag: DVector<f64>,
    },
}

impl LinearSolver {
    pub fn new(a: CscMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n <= DIRECT_LIMIT {
            let chol = CscCholesky::factor(&a).map_err(|e| Error::Singular {
                detail: format!("sparse Cholesky failed: {e}"),
            })?;
            Ok(LinearSolver::Direct(chol))
        } else {
            let mut diag = DVector::<f64>::zeros(n);
            for (r, c, v) in a.triplet_iter() {
                if r == c {
                    diag[r] += v;
                }
            }
            let mut inv_diag = DVector::<f64>::zeros(n);
            for i in 0..n {
                if diag[i] <= 0.0 {
                    return Err(Error::Singular {
                        detail: format!("non-positive diagonal at row {i}: {}", diag[i]),
                    });
                }
                inv_diag[i] = 1.0 / diag[i];
            }
            Ok(LinearSolver::Jacobi { a, inv_diag })
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            LinearSolver::Direct(chol) => {
                let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
                let x = chol.solve(&rhs);
                Ok(DVector::from_column_slice(x.column(0).as_slice()))
            }
            LinearSolver::Jacobi { a, inv_diag } => pcg(a, inv_diag, b),
        }
    }
}

fn pcg(a: &CscMatrix<f64>, inv_diag: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = r.component_mul(inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let max_iter = (10 * n).max(20_000);
    for _ in 0..max_iter {
        if r.norm() <= CG_TOL * b_norm {
            return Ok(x);
        }
        let ap = csc_matvec(a, &p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(Error::Singular {
                detail: format!("CG found non-positive curvature {pap:.3e}"),
            });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        z = r.component_mul(inv_diag);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(Error::SolveFailure {
        step: "conjugate gradient".into(),
        residual: r.norm() / b_norm,
    })
}
