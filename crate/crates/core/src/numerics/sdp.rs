//! Log-det barrier method for small dense SDPs in inequality form.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::eig_extremes;
use crate::error::{Error, Result};

/// `F(y) = F0 + Σ_k y_k F_k ⪰ 0`, stored with only the nonzero coefficient matrices.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub f0: DMatrix<f64>,
    pub coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl LmiBlock {
    pub fn new(f0: DMatrix<f64>) -> Self {
        LmiBlock { f0, coeffs: Vec::new() }
    }

    pub fn add(&mut self, var: usize, f: DMatrix<f64>) {
        self.coeffs.push((var, f));
    }

    pub fn size(&self) -> usize {
        self.f0.nrows()
    }

    pub fn eval(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.f0.clone();
        for (k, fk) in &self.coeffs {
            if y[*k] != 0.0 {
                f += fk * y[*k];
            }
        }
        f
    }
}

/// `minimize cᵀy` subject to LMI blocks `F_j(y) ⪰ 0` and scalar rows `g_i + h_iᵀy ≥ 0`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
    pub linear: Vec<(f64, DVector<f64>)>,
}

impl SdpProblem {
    pub fn new(num_vars: usize) -> Self {
        SdpProblem { num_vars, objective: DVector::zeros(num_vars), blocks: Vec::new(), linear: Vec::new() }
    }

    /// Barrier parameter ν (sum of block sizes plus scalar rows).
    pub fn nu(&self) -> f64 {
        (self.blocks.iter().map(LmiBlock::size).sum::<usize>() + self.linear.len()) as f64
    }

    /// Minimum eigenvalue of each LMI block followed by each scalar row value.
    pub fn margins(&self, y: &DVector<f64>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.blocks.len() + self.linear.len());
        for b in &self.blocks {
            out.push(eig_extremes(&super::symmetrize(&b.eval(y)))?.0);
        }
        for (g, h) in &self.linear {
            out.push(g + h.dot(y));
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(Error::DimensionMismatch { expected: self.num_vars, found: self.objective.len() });
        }
        for b in &self.blocks {
            let s = b.size();
            if !b.f0.is_square() {
                return Err(Error::DimensionMismatch { expected: s, found: b.f0.ncols() });
            }
            for (k, f) in &b.coeffs {
                if *k >= self.num_vars {
                    return Err(Error::IndexOutOfRange { index: *k, valid: format!("0..{}", self.num_vars) });
                }
                if f.shape() != (s, s) {
                    return Err(Error::DimensionMismatch { expected: s, found: f.nrows() });
                }
            }
        }
        for (_, h) in &self.linear {
            if h.len() != self.num_vars {
                return Err(Error::DimensionMismatch { expected: self.num_vars, found: h.len() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpOptions {
    /// Stop once ν/t falls below this absolute duality-gap bound.
    pub gap_tol: f64,
    pub mu: f64,
    pub max_newton: usize,
    /// Box `|y_k| ≤ box_bound` used only while searching for a strictly feasible point.
    pub box_bound: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { gap_tol: 1e-9, mu: 12.0, max_newton: 4000, box_bound: 1e6 }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: DVector<f64>,
    pub objective: f64,
    /// Upper bound on `objective − optimum` from the central-path dual.
    pub gap: f64,
    pub margins: Vec<f64>,
    pub newton_steps: usize,
}

#[derive(Debug, Clone)]
pub enum SdpOutcome {
    Solved(SdpSolution),
    /// `bound > 0` is a lower bound on the smallest uniform shift `s` making
    /// `F_j(y) + sI ⪰ 0` feasible inside the search box.
    Infeasible {
        bound: f64,
    },
}

struct Barrier<'a> {
    p: &'a SdpProblem,
}

impl Barrier<'_> {
    /// Barrier value, or `None` outside the interior.
    fn value(&self, y: &DVector<f64>, t: f64) -> Option<f64> {
        let mut v = t * self.p.objective.dot(y);
        for b in &self.p.blocks {
            let ch = Cholesky::new(b.eval(y))?;
            let logdet: f64 = ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            v -= logdet;
        }
        for (g, h) in &self.p.linear {
            let s = g + h.dot(y);
            if s <= 0.0 {
                return None;
            }
            v -= s.ln();
        }
        Some(v)
    }

    fn grad_hess(&self, y: &DVector<f64>, t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let m = self.p.num_vars;
        let mut g = &self.p.objective * t;
        let mut h = DMatrix::<f64>::zeros(m, m);
        for b in &self.p.blocks {
            let ch: Cholesky<f64, Dyn> = Cholesky::new(b.eval(y))?;
            let finv = ch.inverse();
            let gs: Vec<(usize, DMatrix<f64>)> = b.coeffs.iter().map(|(k, fk)| (*k, &finv * fk)).collect();
            for (a, (ka, ga)) in gs.iter().enumerate() {
                g[*ka] -= ga.trace();
                for (kb, gb) in gs.iter().skip(a) {
                    // tr(Ga Gb) without forming the product
                    let mut tr = 0.0;
                    let s = ga.nrows();
                    for i in 0..s {
                        for j in 0..s {
                            tr += ga[(i, j)] * gb[(j, i)];
                        }
                    }
                    h[(*ka, *kb)] += tr;
                    if ka != kb {
                        h[(*kb, *ka)] += tr;
                    }
                }
            }
        }
        for (g0, hv) in &self.p.linear {
            let s = g0 + hv.dot(y);
            if s <= 0.0 {
                return None;
            }
            g.axpy(-1.0 / s, hv, 1.0);
            h.ger(1.0 / (s * s), hv, hv, 1.0);
        }
        Some((g, h))
    }

    /// Newton centering at fixed `t`. Returns the number of steps used.
    fn center(
        &self,
        y: &mut DVector<f64>,
        t: f64,
        budget: usize,
        early: Option<(usize, f64)>,
    ) -> Result<(usize, bool)> {
        let mut steps = 0;
        loop {
            if let Some((k, thr)) = early {
                if y[k] < thr {
                    return Ok((steps, true));
                }
            }
            let (g, h) =
                self.grad_hess(y, t).ok_or_else(|| Error::Numerical("left the interior during centering".into()))?;
            let dir = newton_direction(&h, &g)?;
            let decrement = -g.dot(&dir);
            if decrement / 2.0 < 1e-11 {
                return Ok((steps, false));
            }
            let f0 = self.value(y, t).ok_or_else(|| Error::Numerical("barrier undefined".into()))?;
            let mut step = 1.0;
            let mut gain = None;
            for _ in 0..60 {
                let cand = &*y + &dir * step;
                if let Some(f1) = self.value(&cand, t) {
                    if f1 <= f0 - 0.25 * step * decrement {
                        *y = cand;
                        gain = Some(f0 - f1);
                        break;
                    }
                }
                step *= 0.5;
            }
            steps += 1;
            // A failed line search or a decrease lost in the round-off of the
            // barrier value: the point is centered as well as it can be.
            match gain {
                Some(g) if g > 1e-13 * (1.0 + f0.abs()) => {}
                _ => return Ok((steps, false)),
            }
            if steps >= budget {
                return Err(Error::MaxIterations(steps));
            }
        }
    }
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = Cholesky::new(h.clone()) {
        return Ok(-ch.solve(g));
    }
    let reg = 1e-12 * h.diagonal().amax().max(1e-300);
    let mut hr = h.clone();
    for i in 0..hr.nrows() {
        hr[(i, i)] += reg;
    }
    hr.lu().solve(&(-g)).ok_or_else(|| Error::Numerical("singular Newton system".into()))
}

/// Run the barrier path from a strictly feasible `y`.
fn path_follow(
    p: &SdpProblem,
    mut y: DVector<f64>,
    opts: &SdpOptions,
    early: Option<(usize, f64)>,
) -> Result<(DVector<f64>, f64, usize, bool)> {
    let bar = Barrier { p };
    let nu = p.nu();
    let mut t = 1.0;
    let mut total = 0usize;
    loop {
        let (used, stopped) = bar.center(&mut y, t, opts.max_newton.saturating_sub(total).max(1), early)?;
        total += used;
        if stopped {
            return Ok((y, nu / t, total, true));
        }
        if nu / t < opts.gap_tol {
            return Ok((y, nu / t, total, false));
        }
        if total >= opts.max_newton {
            return Err(Error::MaxIterations(total));
        }
        t *= opts.mu;
    }
}

/// Find a strictly feasible point, then minimize the objective along the central path.
pub fn sdp_solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpOutcome> {
    p.validate()?;
    let m = p.num_vars;
    let y0 = DVector::<f64>::zeros(m);

    let strictly_feasible = |y: &DVector<f64>| -> bool {
        p.blocks.iter().all(|b| Cholesky::new(b.eval(y)).is_some()) && p.linear.iter().all(|(g, h)| g + h.dot(y) > 0.0)
    };

    let start = if strictly_feasible(&y0) {
        y0
    } else {
        // Phase I: minimize s with F_j(y) + sI ⪰ 0, rows + s ≥ 0, inside a box.
        let s_idx = m;
        let mut aux = SdpProblem::new(m + 1);
        aux.objective[s_idx] = 1.0;
        let mut worst = 0.0f64;
        for b in &p.blocks {
            let mut nb = LmiBlock { f0: b.f0.clone(), coeffs: b.coeffs.clone() };
            nb.add(s_idx, DMatrix::identity(b.size(), b.size()));
            worst = worst.max(-eig_extremes(&super::symmetrize(&b.f0))?.0);
            aux.blocks.push(nb);
        }
        for (g, h) in &p.linear {
            let mut hh = h.clone().insert_row(m, 0.0);
            hh[s_idx] = 1.0;
            aux.linear.push((*g, hh));
            worst = worst.max(-g);
        }
        for k in 0..m {
            let mut up = DVector::zeros(m + 1);
            up[k] = -1.0;
            aux.linear.push((opts.box_bound, up.clone()));
            up[k] = 1.0;
            aux.linear.push((opts.box_bound, up));
        }
        // keeps the phase I objective bounded below
        let mut floor = DVector::zeros(m + 1);
        floor[s_idx] = 1.0;
        aux.linear.push((1.0, floor));
        let mut ya = DVector::zeros(m + 1);
        ya[s_idx] = worst + 1.0;
        let phase1 = SdpOptions { gap_tol: 1e-10, ..opts.clone() };
        let (yf, gap, _, stopped) = path_follow(&aux, ya, &phase1, Some((s_idx, -1e-7)))?;
        let s = yf[s_idx];
        if !stopped && s - gap > 0.0 || !stopped && s >= 0.0 {
            return Ok(SdpOutcome::Infeasible { bound: (s - gap).max(0.0) });
        }
        let y = yf.rows(0, m).into_owned();
        if !strictly_feasible(&y) {
            return Ok(SdpOutcome::Infeasible { bound: 0.0 });
        }
        y
    };

    let (y, gap, steps, _) = path_follow(p, start, opts, None)?;
    let margins = p.margins(&y)?;
    Ok(SdpOutcome::Solved(SdpSolution { objective: p.objective.dot(&y), y, gap, margins, newton_steps: steps }))
}
