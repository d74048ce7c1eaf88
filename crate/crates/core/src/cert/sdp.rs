//! Ellipsoidal region-of-attraction certificates from local sector bounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::Network;
use crate::numerics::{compact_svd, log_grid, sdp_solve, sym_eig, LmiBlock, SdpOptions, SdpOutcome, SdpProblem};

/// Dynamics about an attractor: `ż = −z + φ(z)`, `φ(z) = [Wz + y*]₊ − [y*]₊`.
#[derive(Debug, Clone)]
pub struct ShiftedSystem {
    pub w: DMatrix<f64>,
    pub x_star: DVector<f64>,
    pub y_star: DVector<f64>,
}

impl ShiftedSystem {
    /// Fails unless `x_star` is an equilibrium to within `1e-9` in the ∞-norm.
    pub fn shift_about(net: &Network, x_star: &DVector<f64>) -> Result<Self> {
        let residual = net.field(x_star)?.amax();
        if residual > 1e-9 * (1.0 + x_star.amax()) {
            return Err(invalid("x_star", format!("not an equilibrium (field norm {residual:e})")));
        }
        Ok(ShiftedSystem { w: net.w().clone(), x_star: x_star.clone(), y_star: net.drive(x_star)? })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn phi(&self, z: &DVector<f64>) -> DVector<f64> {
        let v = &self.w * z + &self.y_star;
        DVector::from_fn(self.n(), |i, _| v[i].max(0.0) - self.y_star[i].max(0.0))
    }

    pub fn field(&self, z: &DVector<f64>) -> DVector<f64> {
        self.phi(z) - z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorBounds {
    pub v_lo: DVector<f64>,
    pub v_hi: DVector<f64>,
    pub s_alpha: DVector<f64>,
    pub s_beta: DVector<f64>,
}

/// Range of each preactivation `v_i = w_iᵀz + y*_i` over `zᵀEz ≤ α²`.
pub fn preactivation_interval(
    sys: &ShiftedSystem,
    e: &DMatrix<f64>,
    alpha: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = sys.n();
    if e.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, found: e.nrows() });
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha", "must be positive"));
    }
    let chol = e.clone().cholesky().ok_or_else(|| invalid("E", "must be positive definite"))?;
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        let wi = sys.w.row(i).transpose();
        let half = alpha * wi.dot(&chol.solve(&wi)).max(0.0).sqrt();
        lo[i] = sys.y_star[i] - half;
        hi[i] = sys.y_star[i] + half;
    }
    Ok((lo, hi))
}

/// Chord-slope bounds of `[v]₊ − [y*]₊` through `(y*, 0)` over `[v_lo, v_hi]`.
pub fn local_slopes(y_star: &DVector<f64>, v_lo: &DVector<f64>, v_hi: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = y_star.len();
    let mut sa = DVector::zeros(n);
    let mut sb = DVector::zeros(n);
    for i in 0..n {
        let y = y_star[i];
        if y > 0.0 {
            sb[i] = 1.0;
            sa[i] = if v_lo[i] >= 0.0 { 1.0 } else { y / (y - v_lo[i]) };
        } else {
            sa[i] = 0.0;
            sb[i] = if v_hi[i] <= 0.0 { 0.0 } else { v_hi[i] / (v_hi[i] - y) };
        }
    }
    (sa, sb)
}

pub fn sector_bounds(sys: &ShiftedSystem, e: &DMatrix<f64>, alpha: f64) -> Result<SectorBounds> {
    let (v_lo, v_hi) = preactivation_interval(sys, e, alpha)?;
    let (s_alpha, s_beta) = local_slopes(&sys.y_star, &v_lo, &v_hi);
    Ok(SectorBounds { v_lo, v_hi, s_alpha, s_beta })
}

/// Quadratic-constraint matrix `M_κ` on `[z; φ(z)]`.
pub fn build_qc(
    s_alpha: &DVector<f64>,
    s_beta: &DVector<f64>,
    lambda: &DVector<f64>,
    w: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = w.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let d11 = DVector::from_fn(n, |i, _| -2.0 * s_alpha[i] * s_beta[i] * lambda[i]);
    let d12 = DVector::from_fn(n, |i, _| (s_alpha[i] + s_beta[i]) * lambda[i]);
    let wt = w.transpose();
    let m11 = &wt * DMatrix::from_diagonal(&d11) * w;
    let m12 = &wt * DMatrix::from_diagonal(&d12);
    m.view_mut((0, 0), (n, n)).copy_from(&m11);
    m.view_mut((0, n), (n, n)).copy_from(&m12);
    m.view_mut((n, 0), (n, n)).copy_from(&m12.transpose());
    for i in 0..n {
        m[(n + i, n + i)] = -2.0 * lambda[i];
    }
    m
}

/// Coordinates whose sector has positive width, and the map `T` with
/// `[z; φ] = T [z; φ_free]`. On the other coordinates `φ_i = s_i w_iᵀz`
/// exactly, so the quadratic constraint there is an equality and is
/// substituted instead of relaxed.
pub fn sector_reduction(sector: &SectorBounds, w: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let n = w.nrows();
    let free: Vec<usize> = (0..n).filter(|&i| sector.s_beta[i] - sector.s_alpha[i] > 1e-12).collect();
    let mut t = DMatrix::zeros(2 * n, n + free.len());
    t.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut col = n;
    for i in 0..n {
        if free.contains(&i) {
            t[(n + i, col)] = 1.0;
            col += 1;
        } else {
            let s = sector.s_alpha[i];
            for j in 0..n {
                t[(n + i, j)] = s * w[(i, j)];
            }
        }
    }
    (t, free)
}

/// `[z; φ]ᵀ M [z; φ]`.
pub fn qc_value(m_kappa: &DMatrix<f64>, z: &DVector<f64>, phi: &DVector<f64>) -> f64 {
    let zz = DVector::from_iterator(z.len() + phi.len(), z.iter().chain(phi.iter()).copied());
    zz.dot(&(m_kappa * &zz))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpSearch {
    pub alpha_lo: f64,
    /// Defaults to `2c` when absent.
    pub alpha_hi: Option<f64>,
    pub alpha_count: usize,
    /// Strictness margin on the decrease condition.
    pub eps_lmi: f64,
    /// Every LMI must hold with largest eigenvalue at most `−margin_tol`.
    pub margin_tol: f64,
    /// Upper bound on each scaled multiplier and on `tr P̃ / n`. Without it the
    /// barrier is unbounded below along the multipliers.
    pub var_cap: f64,
    pub solver: SdpOptions,
}

impl Default for SdpSearch {
    fn default() -> Self {
        SdpSearch {
            alpha_lo: 1e-3,
            alpha_hi: None,
            alpha_count: 24,
            eps_lmi: 1e-6,
            margin_tol: 1e-9,
            var_cap: 1e6,
            solver: SdpOptions::default(),
        }
    }
}

impl SdpSearch {
    pub fn grid(&self, c: f64) -> Result<Vec<f64>> {
        let hi = self.alpha_hi.unwrap_or(2.0 * c);
        if !(self.alpha_lo > 0.0 && hi >= self.alpha_lo && self.alpha_count >= 1) {
            return Err(invalid("alpha grid", format!("need 0 < lo <= hi, got [{}, {hi}]", self.alpha_lo)));
        }
        Ok(log_grid(self.alpha_lo, hi, self.alpha_count))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpCertificate {
    pub p_lyap: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub e: DMatrix<f64>,
    pub alpha: f64,
    /// `LᵀPL ⪯ tI`.
    pub t: f64,
    pub r: f64,
    /// Largest eigenvalue of each LMI written as `G ⪯ 0`.
    pub margins: [f64; 3],
    pub sector: SectorBounds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpReport {
    pub best: SdpCertificate,
    /// Radius at every grid point (`None` where no certificate was found).
    pub sweep: Vec<(f64, Option<f64>)>,
}

/// Index of `P_ab` (a ≤ b) in the upper-triangle packing.
fn sym_index(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * n - a * (a + 1) / 2 + b
}

fn sym_basis(n: usize, a: usize, b: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, n);
    e[(a, b)] = 1.0;
    e[(b, a)] = 1.0;
    e
}

fn unpack_sym(n: usize, y: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |a, b| y[sym_index(n, a, b)])
}

/// Largest eigenvalues of the three certificate LMIs, each written as `G ⪯ 0`.
#[allow(clippy::too_many_arguments)]
pub fn lmi_margins(
    sys: &ShiftedSystem,
    sector: &SectorBounds,
    l: &DMatrix<f64>,
    e: &DMatrix<f64>,
    alpha: f64,
    p: &DMatrix<f64>,
    lambda: &DVector<f64>,
    t: f64,
    eps_lmi: f64,
) -> Result<[f64; 3]> {
    let n = sys.n();
    let mk = build_qc(&sector.s_alpha, &sector.s_beta, lambda, &sys.w);
    let mut g1 = mk;
    for a in 0..n {
        for b in 0..n {
            g1[(a, b)] -= 2.0 * p[(a, b)];
            g1[(a, n + b)] += p[(a, b)];
            g1[(n + a, b)] += p[(a, b)];
        }
        g1[(a, a)] += eps_lmi;
    }
    let (tmap, _) = sector_reduction(sector, &sys.w);
    let g1 = tmap.transpose() * g1 * &tmap;
    let g2 = e / (alpha * alpha) - p;
    let k = l.ncols();
    let g3 = l.transpose() * p * l - DMatrix::<f64>::identity(k, k) * t;
    let top = |g: &DMatrix<f64>| -> Result<f64> {
        if g.nrows() == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        let (v, _) = sym_eig(&crate::numerics::symmetrize(g))?;
        Ok(v[v.len() - 1])
    };
    Ok([top(&g1)?, top(&g2)?, top(&g3)?])
}

/// Solve the certificate SDP at one domain size `α` with `E = I`.
///
/// Variables are scaled by `α²` (`P = P̃/α²`, `λ = λ̃/α²`) so that the
/// containment constraint reads `P̃ ⪰ I` at every grid point.
pub fn certify_sdp_at(
    sys: &ShiftedSystem,
    l: &DMatrix<f64>,
    alpha: f64,
    cfg: &SdpSearch,
) -> Result<Option<SdpCertificate>> {
    let n = sys.n();
    let k = l.ncols();
    if l.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: l.nrows() });
    }
    let e = DMatrix::<f64>::identity(n, n);
    let sector = sector_bounds(sys, &e, alpha)?;
    let (tmap, free) = sector_reduction(&sector, &sys.w);
    let nf = free.len();
    let reduce = |m: &DMatrix<f64>| tmap.transpose() * m * &tmap;
    let np = n * (n + 1) / 2;
    let (lam0, t_idx) = (np, np + nf);
    let nv = np + nf + 1;
    let mut prob = SdpProblem::new(nv);
    prob.objective[t_idx] = 1.0;

    // −α²·(decrease LMI) ⪰ 0 on [z; φ_free]
    let mut f0 = DMatrix::zeros(n + nf, n + nf);
    for a in 0..n {
        f0[(a, a)] = -cfg.eps_lmi * alpha * alpha;
    }
    let mut b1 = LmiBlock::new(f0);
    let mut b2 = LmiBlock::new(-DMatrix::<f64>::identity(n, n));
    let mut b3 = LmiBlock::new(DMatrix::zeros(k, k));
    for a in 0..n {
        for b in a..n {
            let eb = sym_basis(n, a, b);
            let mut c1 = DMatrix::zeros(2 * n, 2 * n);
            c1.view_mut((0, 0), (n, n)).copy_from(&(&eb * 2.0));
            c1.view_mut((0, n), (n, n)).copy_from(&(-&eb));
            c1.view_mut((n, 0), (n, n)).copy_from(&(-&eb));
            let idx = sym_index(n, a, b);
            b1.add(idx, reduce(&c1));
            b2.add(idx, eb.clone());
            if k > 0 {
                b3.add(idx, -(l.transpose() * &eb * l));
            }
        }
    }
    for (j, &i) in free.iter().enumerate() {
        let mut unit = DVector::zeros(n);
        unit[i] = 1.0;
        b1.add(lam0 + j, -reduce(&build_qc(&sector.s_alpha, &sector.s_beta, &unit, &sys.w)));
        let mut h = DVector::zeros(nv);
        h[lam0 + j] = 1.0;
        prob.linear.push((0.0, h.clone()));
        prob.linear.push((cfg.var_cap, -h));
    }
    let mut tr = DVector::zeros(nv);
    for a in 0..n {
        tr[sym_index(n, a, a)] = -1.0;
    }
    prob.linear.push((cfg.var_cap * n as f64, tr));
    prob.blocks.push(b1);
    prob.blocks.push(b2);
    if k > 0 {
        b3.add(t_idx, DMatrix::identity(k, k));
        prob.blocks.push(b3);
    } else {
        let mut h = DVector::zeros(nv);
        h[t_idx] = 1.0;
        prob.linear.push((0.0, h));
    }

    let sol = match sdp_solve(&prob, &cfg.solver)? {
        SdpOutcome::Solved(s) => s,
        SdpOutcome::Infeasible { .. } => return Ok(None),
    };
    let a2 = alpha * alpha;
    let mut p = unpack_sym(n, &sol.y) / a2;
    let mut lambda = DVector::zeros(n);
    for (j, &i) in free.iter().enumerate() {
        lambda[i] = sol.y[lam0 + j].max(0.0) / a2;
    }

    // Re-verify from scratch. A slight uniform scaling of (P, λ) strengthens
    // the first two LMIs when the solver stopped on their boundary.
    for _ in 0..4 {
        let t = t_for(l, &p)?;
        let margins = lmi_margins(sys, &sector, l, &e, alpha, &p, &lambda, t, cfg.eps_lmi)?;
        if margins.iter().all(|m| *m <= -cfg.margin_tol) {
            return Ok(Some(SdpCertificate {
                p_lyap: p,
                lambda,
                e,
                alpha,
                t,
                r: if t > 0.0 { 1.0 / t.sqrt() } else { f64::INFINITY },
                margins,
                sector,
            }));
        }
        p *= 1.0 + 1e-6;
        lambda *= 1.0 + 1e-6;
    }
    Ok(None)
}

/// Smallest `t` that leaves a strict margin on `LᵀPL ⪯ tI`.
fn t_for(l: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    if l.ncols() == 0 {
        return Ok(0.0);
    }
    let m = l.transpose() * p * l;
    let (v, _) = sym_eig(&crate::numerics::symmetrize(&m))?;
    let top = v[v.len() - 1].max(0.0);
    Ok(top * (1.0 + 1e-8) + 1e-8)
}

/// Best certificate over the `α` grid for the attractor `x_star` and encoder `w_e` (d×n).
pub fn certify_sdp(net: &Network, x_star: &DVector<f64>, w_e: &DMatrix<f64>, cfg: &SdpSearch) -> Result<SdpReport> {
    let sys = ShiftedSystem::shift_about(net, x_star)?;
    if w_e.ncols() != net.n() {
        return Err(Error::DimensionMismatch { expected: net.n(), found: w_e.ncols() });
    }
    let l = compact_svd(w_e)?.l_factor();
    let mut best: Option<SdpCertificate> = None;
    let mut sweep = Vec::new();
    for alpha in cfg.grid(net.params().c)? {
        let cert = certify_sdp_at(&sys, &l, alpha, cfg)?;
        sweep.push((alpha, cert.as_ref().map(|c| c.r)));
        if let Some(c) = cert {
            if best.as_ref().is_none_or(|b| c.r > b.r) {
                best = Some(c);
            }
        }
    }
    match best {
        Some(best) => Ok(SdpReport { best, sweep }),
        None => Err(Error::NoCertificate("SDP infeasible at every grid point".into())),
    }
}
