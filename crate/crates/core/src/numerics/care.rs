//! Continuous algebraic Riccati and Lyapunov equations.

use nalgebra::DMatrix;

use super::{eigenvalues, symmetrize};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// Frobenius norm of `AᵀP + PA − PBR⁻¹BᵀP + Q`.
    pub residual: f64,
}

/// Solves `AᵀX + XA + C = 0` through the Kronecker form (meant for n ≲ 30).
pub fn lyap_solve(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || c.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, found: c.nrows() });
    }
    let nn = n * n;
    let mut big = DMatrix::<f64>::zeros(nn, nn);
    // column-major vec: vec(AᵀX) = (I ⊗ Aᵀ) vec X, vec(XA) = (Aᵀ ⊗ I) vec X
    for j in 0..n {
        for i in 0..n {
            let row = j * n + i;
            for k in 0..n {
                big[(row, j * n + k)] += a[(k, i)];
                big[(row, k * n + i)] += a[(k, j)];
            }
        }
    }
    let rhs = -DMatrix::from_column_slice(nn, 1, c.as_slice());
    let sol = big.lu().solve(&rhs).ok_or_else(|| Error::Numerical("Lyapunov operator is singular".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

fn riccati_residual(a: &DMatrix<f64>, g: &DMatrix<f64>, q: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    (a.transpose() * p + p * a - p * g * p + q).norm()
}

/// Matrix sign function by scaled Newton iteration.
fn sign_function(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    for _ in 0..100 {
        let det = z.clone().lu().determinant().abs();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NotStabilizable("Hamiltonian has eigenvalues on the imaginary axis".into()));
        }
        let c = det.powf(-1.0 / dim);
        let c = if c.is_finite() && c > 0.0 { c } else { 1.0 };
        let zc = &z * c;
        let inv = zc
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NotStabilizable("singular iterate in sign iteration".into()))?;
        let next = (zc + inv) * 0.5;
        let change = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if change <= 1e-13 * scale {
            return Ok(z);
        }
    }
    Err(Error::NotStabilizable("sign iteration did not converge".into()))
}

/// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` and `K = R⁻¹BᵀP`.
///
/// The stable invariant subspace of the Hamiltonian is taken from its matrix
/// sign function, then polished with Newton–Kleinman steps.
pub fn care_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<CareSolution> {
    let n = a.nrows();
    let mcols = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (mcols, mcols) {
        return Err(Error::DimensionMismatch { expected: n, found: b.nrows() });
    }
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter { name: "R", reason: "must be positive definite".into() })?
        .inverse();
    let g = b * &r_inv * b.transpose();

    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let s = sign_function(&h)?;

    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&s.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(s.view((n, n), (n, n)) + DMatrix::identity(n, n)));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(s.view((0, 0), (n, n)) + DMatrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-s.view((n, 0), (n, n))));
    let mut p = symmetrize(&super::robust_svd(&lhs)?.solve(&rhs, 1e-14).map_err(|e| Error::Numerical(e.to_string()))?);

    let mut res = riccati_residual(a, &g, q, &p);
    for _ in 0..8 {
        if res < 1e-13 * (1.0 + p.norm()) {
            break;
        }
        let k = &r_inv * b.transpose() * &p;
        let acl = a - b * &k;
        let rhs = q + k.transpose() * r * &k;
        let Ok(next) = lyap_solve(&acl, &rhs) else { break };
        let next_res = riccati_residual(a, &g, q, &next);
        if !(next_res < res) {
            break;
        }
        p = next;
        res = next_res;
    }

    let k = &r_inv * b.transpose() * &p;
    let acl = a - b * &k;
    if eigenvalues(&acl)?.iter().any(|l| l.re >= 0.0) {
        return Err(Error::NotStabilizable("closed loop is not Hurwitz".into()));
    }
    Ok(CareSolution { p, k, residual: res })
}
