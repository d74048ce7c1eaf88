//! Dense linear algebra and small optimization kernels.
//!
//! Factorizations come from nalgebra; the LP, SDP and Riccati solvers are
//! written here because the problems are tiny and every result is re-checked
//! by residuals or eigenvalue margins.

mod care;
mod lp;
mod sdp;

pub use care::{care_solve, lyap_solve, CareSolution};
pub use lp::{lp_solve, LpOutcome, LpProblem, LpSolution};
pub use sdp::{sdp_solve, LmiBlock, SdpOptions, SdpOutcome, SdpProblem, SdpSolution};

use nalgebra::{Complex, DMatrix, DVector, Dyn, Schur, SVD};

use crate::error::{Error, Result};

/// Largest absolute entry of `M - Mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    let asym = asymmetry(m);
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(Error::Asymmetric(asym));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eig_extremes(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    let (vals, _) = sym_eig(m)?;
    if vals.is_empty() {
        return Ok((0.0, 0.0));
    }
    Ok((vals[0], vals[vals.len() - 1]))
}

/// Eigenvalues of a general square matrix, sorted by real part.
///
/// The unshifted-restart QR iteration can stall on matrices with many exact
/// zeros or tight clusters, so a stalled run is retried on an orthogonally
/// similar matrix and with a looser deflation tolerance.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    let budget = 200 * n.max(1);
    let mut v = None;
    'outer: for scale in [1.0, 4.0, 16.0, 64.0] {
        for attempt in 0..3usize {
            let trial = if attempt == 0 {
                m.clone()
            } else {
                let u = DVector::from_fn(n, |i, _| ((i + 1) as f64 * (attempt as f64 + 0.37)).sin());
                let u = &u / u.norm();
                let h = DMatrix::<f64>::identity(n, n) - &u * u.transpose() * 2.0;
                &h * m * &h
            };
            if let Some(schur) = Schur::try_new(trial, scale * f64::EPSILON, budget) {
                v = Some(schur.complex_eigenvalues().iter().copied().collect::<Vec<_>>());
                break 'outer;
            }
        }
    }
    let mut v = v.ok_or_else(|| Error::Numerical("eigenvalue iteration did not converge".into()))?;
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(v)
}

/// Solve `A x = b` by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.len() });
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::Numerical("singular linear system".into()))
}

/// Compact SVD `M = U diag(σ) Yᵀ` with numerically zero singular values dropped.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub y: DMatrix<f64>,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `Y diag(σ)`, the factor used to push ellipsoids through the encoder.
    pub fn l_factor(&self) -> DMatrix<f64> {
        let mut l = self.y.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            l.column_mut(j).scale_mut(*s);
        }
        l
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.y.transpose()
    }
}

/// Full SVD. nalgebra's bidiagonal QR is tried first; when it stalls or its
/// factors do not reproduce `M` to a relative `1e-12` (it can split
/// rank-deficient input wrongly), one-sided Jacobi is used instead.
pub(crate) fn robust_svd(m: &DMatrix<f64>) -> Result<SVD<f64, Dyn, Dyn>> {
    let budget = 200 * m.nrows().max(m.ncols()).max(1);
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let accurate = |svd: &SVD<f64, Dyn, Dyn>| -> bool {
        match (&svd.u, &svd.v_t) {
            (Some(u), Some(vt)) => {
                let mut us = u.clone();
                for (j, s) in svd.singular_values.iter().enumerate() {
                    us.column_mut(j).scale_mut(*s);
                }
                (us * vt - m).amax() <= 1e-12 * scale
            }
            _ => false,
        }
    };
    if let Some(svd) = SVD::try_new(m.clone(), true, true, 5.0 * f64::EPSILON, budget) {
        if accurate(&svd) {
            return Ok(svd);
        }
    }
    let svd = jacobi_svd(m)?;
    if accurate(&svd) {
        Ok(svd)
    } else {
        Err(Error::Numerical("singular value decomposition lost accuracy".into()))
    }
}

/// One-sided (Hestenes) Jacobi SVD with thin factors.
fn jacobi_svd(m: &DMatrix<f64>) -> Result<SVD<f64, Dyn, Dyn>> {
    if m.nrows() < m.ncols() {
        let t = jacobi_svd(&m.transpose())?;
        return Ok(SVD {
            u: t.v_t.map(|vt| vt.transpose()),
            v_t: t.u.map(|u| u.transpose()),
            singular_values: t.singular_values,
        });
    }
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let mut converged = false;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let (x, y) = (mat[(r, p)], mat[(r, q)]);
                        mat[(r, p)] = c * x - s * y;
                        mat[(r, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi SVD did not converge".into()));
    }
    let sigma = DVector::from_fn(cols, |j, _| a.column(j).norm());
    let smax = sigma.max();
    let mut u = DMatrix::<f64>::zeros(rows, cols);
    let mut filled = Vec::new();
    for j in 0..cols {
        if sigma[j] > smax * f64::EPSILON * rows as f64 && sigma[j] > 0.0 {
            u.set_column(j, &(a.column(j) / sigma[j]));
            filled.push(j);
        }
    }
    // complete U with an orthonormal basis for the null directions
    let mut e = 0;
    for j in 0..cols {
        if filled.contains(&j) {
            continue;
        }
        while e < rows {
            let mut cand = DVector::<f64>::zeros(rows);
            cand[e] = 1.0;
            e += 1;
            for &k in &filled {
                let proj = u.column(k).dot(&cand);
                cand -= u.column(k) * proj;
            }
            let nrm = cand.norm();
            if nrm > 1e-8 {
                u.set_column(j, &(cand / nrm));
                filled.push(j);
                break;
            }
        }
    }
    Ok(SVD { u: Some(u), v_t: Some(v.transpose()), singular_values: sigma })
}

pub fn compact_svd(m: &DMatrix<f64>) -> Result<CompactSvd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(CompactSvd { u: DMatrix::zeros(rows, 0), sigma: DVector::zeros(0), y: DMatrix::zeros(cols, 0) });
    }
    let svd = robust_svd(m)?;
    let u_full = svd.u.expect("requested U");
    let vt_full = svd.v_t.expect("requested Vᵀ");
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * rows.max(cols) as f64;
    let mut keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > tol && svd.singular_values[k] > 0.0)
        .collect();
    keep.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let k = keep.len();
    let mut u = DMatrix::zeros(rows, k);
    let mut y = DMatrix::zeros(cols, k);
    let mut sigma = DVector::zeros(k);
    for (dst, &src) in keep.iter().enumerate() {
        u.set_column(dst, &u_full.column(src));
        y.set_column(dst, &vt_full.row(src).transpose());
        sigma[dst] = svd.singular_values[src];
    }
    Ok(CompactSvd { u, sigma, y })
}

/// Logarithmically spaced grid of `count` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
        }
    }
}
