//! Two-phase dense tableau simplex with Bland's rule.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

/// `minimize cᵀx  subject to  A x ≤ b,  lower ≤ x ≤ upper`.
///
/// Bounds may be infinite. [`LpProblem::new`] starts with `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn new(objective: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let n = objective.len();
        LpProblem { objective, a, b, lower: vec![0.0; n], upper: vec![f64::INFINITY; n] }
    }

    /// Same as [`LpProblem::new`] but every variable is free.
    pub fn free(objective: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let n = objective.len();
        LpProblem { objective, a, b, lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn with_bounds(mut self, j: usize, lower: f64, upper: f64) -> Self {
        self.lower[j] = lower;
        self.upper[j] = upper;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.a.ncols() != n && self.a.nrows() > 0 {
            return Err(Error::DimensionMismatch { expected: n, found: self.a.ncols() });
        }
        if self.a.nrows() != self.b.len() {
            return Err(Error::DimensionMismatch { expected: self.a.nrows(), found: self.b.len() });
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.lower.len().min(self.upper.len()) });
        }
        let finite = self.objective.iter().chain(self.a.iter()).chain(self.b.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numerical("non-finite LP data".into()));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(Error::InvalidParameter {
                    name: "bounds",
                    reason: format!("variable {j}: [{}, {}]", self.lower[j], self.upper[j]),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers `y ≥ 0` of the rows of `A` (so `c + Aᵀy` is dual feasible up to bounds).
    pub duals: DVector<f64>,
    /// |primal − dual| objective in the internal standard form.
    pub duality_gap: f64,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// `farkas` holds `y ≥ 0` over the rows of `A` followed by one row per
    /// finite bound pair, with `yᵀA' ≥ 0` and `yᵀb' < 0` in shifted coordinates.
    Infeasible {
        farkas: DVector<f64>,
    },
    /// A feasible point and a direction along which the objective decreases without bound.
    Unbounded {
        point: DVector<f64>,
        ray: DVector<f64>,
    },
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, LpOutcome::Infeasible { .. })
    }
}

/// How an original variable is expressed in nonnegative columns.
#[derive(Clone, Copy)]
enum VarMap {
    Shift { col: usize, offset: f64 },
    Flip { col: usize, offset: f64 },
    Split { pos: usize, neg: usize },
}

struct Tableau {
    t: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    d: Vec<f64>,
    obj: f64,
    barred: Vec<bool>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, e: usize) {
        let ncols = self.d.len();
        let p = self.t[r][e];
        for j in 0..ncols {
            self.t[r][j] /= p;
        }
        self.rhs[r] /= p;
        self.t[r][e] = 1.0;
        let prow = self.t[r].clone();
        let prhs = self.rhs[r];
        for i in 0..self.t.len() {
            if i == r {
                continue;
            }
            let f = self.t[i][e];
            if f != 0.0 {
                for j in 0..ncols {
                    self.t[i][j] -= f * prow[j];
                }
                self.rhs[i] -= f * prhs;
                self.t[i][e] = 0.0;
            }
        }
        let f = self.d[e];
        if f != 0.0 {
            for j in 0..ncols {
                self.d[j] -= f * prow[j];
            }
            self.obj += f * prhs;
            self.d[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn reset_costs(&mut self, cost: Vec<f64>) {
        let ncols = self.d.len();
        self.d = cost.clone();
        self.obj = 0.0;
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                for j in 0..ncols {
                    self.d[j] -= cb * self.t[i][j];
                }
                self.obj += cb * self.rhs[i];
            }
        }
        self.cost = cost;
    }

    /// Runs Bland pivots until optimal. Returns the unbounded entering column, if any.
    fn run(&mut self, pivots: &mut usize) -> Result<Option<usize>> {
        loop {
            let entering = (0..self.d.len()).find(|&j| !self.barred[j] && self.d[j] < -COST_TOL);
            let Some(e) = entering else { return Ok(None) };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][e];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i].max(0.0) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else { return Ok(Some(e)) };
            self.pivot(r, e);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::MaxIterations(MAX_PIVOTS));
            }
        }
    }
}

/// Solves `p` exactly up to floating point; breakdown is an `Err`, infeasibility is an outcome.
pub fn lp_solve(p: &LpProblem) -> Result<LpOutcome> {
    p.validate()?;
    let n = p.num_vars();
    let m0 = p.a.nrows();

    // Map every variable to nonnegative columns.
    let mut maps = Vec::with_capacity(n);
    let mut ncol = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        if lo.is_finite() {
            maps.push(VarMap::Shift { col: ncol, offset: lo });
            if hi.is_finite() {
                bound_rows.push((ncol, hi - lo));
            }
            ncol += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Flip { col: ncol, offset: hi });
            ncol += 1;
        } else {
            maps.push(VarMap::Split { pos: ncol, neg: ncol + 1 });
            ncol += 2;
        }
    }
    let m = m0 + bound_rows.len();

    // Rows A' x' ≤ b' and cost c'.
    let mut arows = vec![vec![0.0; ncol]; m];
    let mut bvec = vec![0.0; m];
    let mut cvec = vec![0.0; ncol];
    for j in 0..n {
        let cj = p.objective[j];
        match maps[j] {
            VarMap::Shift { col, .. } => cvec[col] += cj,
            VarMap::Flip { col, .. } => cvec[col] -= cj,
            VarMap::Split { pos, neg } => {
                cvec[pos] += cj;
                cvec[neg] -= cj;
            }
        }
    }
    for i in 0..m0 {
        bvec[i] = p.b[i];
        for j in 0..n {
            let a = p.a[(i, j)];
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, offset } => {
                    arows[i][col] += a;
                    bvec[i] -= a * offset;
                }
                VarMap::Flip { col, offset } => {
                    arows[i][col] -= a;
                    bvec[i] -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    arows[i][pos] += a;
                    arows[i][neg] -= a;
                }
            }
        }
    }
    for (k, &(col, width)) in bound_rows.iter().enumerate() {
        arows[m0 + k][col] = 1.0;
        bvec[m0 + k] = width;
    }

    // Columns: structural | slacks | artificials.
    let sign: Vec<f64> = bvec.iter().map(|&b| if b >= 0.0 { 1.0 } else { -1.0 }).collect();
    let art_rows: Vec<usize> = (0..m).filter(|&i| sign[i] < 0.0).collect();
    let nart = art_rows.len();
    let total = ncol + m + nart;
    let mut t = vec![vec![0.0; total]; m];
    let mut rhs = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut init_col = vec![0; m];
    for i in 0..m {
        for j in 0..ncol {
            t[i][j] = sign[i] * arows[i][j];
        }
        t[i][ncol + i] = sign[i];
        rhs[i] = sign[i] * bvec[i];
    }
    for (k, &i) in art_rows.iter().enumerate() {
        t[i][ncol + m + k] = 1.0;
        basis[i] = ncol + m + k;
        init_col[i] = ncol + m + k;
    }
    for i in 0..m {
        if sign[i] > 0.0 {
            basis[i] = ncol + i;
            init_col[i] = ncol + i;
        }
    }
    let mut tab =
        Tableau { t, rhs, basis, cost: vec![0.0; total], d: vec![0.0; total], obj: 0.0, barred: vec![false; total] };
    let mut pivots = 0usize;
    let scale = 1.0 + bvec.iter().fold(0.0f64, |a, b| a.max(b.abs()));

    if nart > 0 {
        let mut c1 = vec![0.0; total];
        for k in 0..nart {
            c1[ncol + m + k] = 1.0;
        }
        tab.reset_costs(c1);
        tab.run(&mut pivots)?;
        if tab.obj > 1e-9 * scale {
            // π_i = c_init − d_init; y_i = −π_i σ_i
            let farkas = DVector::from_iterator(
                m,
                (0..m).map(|i| {
                    let c = tab.cost[init_col[i]];
                    let pi = c - tab.d[init_col[i]];
                    (-pi * sign[i]).max(0.0)
                }),
            );
            return Ok(LpOutcome::Infeasible { farkas });
        }
        // Drive zero-level artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] >= ncol + m {
                if let Some(j) = (0..ncol + m).find(|&j| tab.t[i][j].abs() > 1e-9) {
                    tab.pivot(i, j);
                }
            }
        }
        for k in 0..nart {
            tab.barred[ncol + m + k] = true;
        }
    }

    let mut c2 = vec![0.0; total];
    c2[..ncol].copy_from_slice(&cvec);
    tab.reset_costs(c2);
    let unbounded = tab.run(&mut pivots)?;

    let mut xs = vec![0.0; total];
    for (i, &bv) in tab.basis.iter().enumerate() {
        xs[bv] = tab.rhs[i];
    }
    let to_original = |xs: &[f64], with_offset: bool| -> DVector<f64> {
        DVector::from_iterator(
            n,
            maps.iter().map(|mp| match *mp {
                VarMap::Shift { col, offset } => xs[col] + if with_offset { offset } else { 0.0 },
                VarMap::Flip { col, offset } => (if with_offset { offset } else { 0.0 }) - xs[col],
                VarMap::Split { pos, neg } => xs[pos] - xs[neg],
            }),
        )
    };
    let x = to_original(&xs, true);

    if let Some(e) = unbounded {
        let mut dir = vec![0.0; total];
        dir[e] = 1.0;
        for (i, &bv) in tab.basis.iter().enumerate() {
            dir[bv] = -tab.t[i][e];
        }
        let ray = to_original(&dir, false);
        return Ok(LpOutcome::Unbounded { point: x, ray });
    }

    let y_all: Vec<f64> = (0..m)
        .map(|i| {
            let pi = tab.cost[init_col[i]] - tab.d[init_col[i]];
            -pi * sign[i]
        })
        .collect();
    let primal: f64 = cvec.iter().zip(&xs[..ncol]).map(|(c, x)| c * x).sum();
    let dual: f64 = -y_all.iter().zip(&bvec).map(|(y, b)| y * b).sum::<f64>();
    let objective = p.objective.dot(&x);
    Ok(LpOutcome::Optimal(LpSolution {
        x,
        objective,
        duals: DVector::from_iterator(m0, y_all[..m0].iter().map(|v| v.max(0.0))),
        duality_gap: (primal - dual).abs(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn max_r_two_caps() {
        // maximize r s.t. r ≤ 2, r ≤ 3
        let p =
            LpProblem::free(DVector::from_vec(vec![-1.0]), dm(2, 1, &[1.0, 1.0]), DVector::from_vec(vec![2.0, 3.0]));
        let s = lp_solve(&p).unwrap().optimal().unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!(s.duality_gap < 1e-9);
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let p = LpProblem::new(
            DVector::from_vec(vec![-3.0, -5.0]),
            dm(3, 2, &[1.0, 0.0, 0.0, 2.0, 3.0, 2.0]),
            DVector::from_vec(vec![4.0, 12.0, 18.0]),
        );
        let s = lp_solve(&p).unwrap().optimal().unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-10 && (s.x[1] - 6.0).abs() < 1e-10);
        assert!((s.objective + 36.0).abs() < 1e-10);
        // dual feasibility: c + Aᵀy ≥ 0, complementary slackness
        let red = &p.objective + p.a.transpose() * &s.duals;
        assert!(red.iter().all(|v| *v > -1e-10));
        assert!(s.duality_gap < 1e-9);
    }

    #[test]
    fn infeasible_with_certificate() {
        // x ≥ 1 (as −x ≤ −1) and x ≤ 0.5
        let p =
            LpProblem::new(DVector::from_vec(vec![1.0]), dm(2, 1, &[-1.0, 1.0]), DVector::from_vec(vec![-1.0, 0.5]));
        match lp_solve(&p).unwrap() {
            LpOutcome::Infeasible { farkas } => {
                let ya = (p.a.transpose() * &farkas)[0];
                let yb = farkas.dot(&p.b);
                assert!(farkas.iter().all(|v| *v >= 0.0));
                assert!(ya >= -1e-12 && yb < 0.0);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        let p = LpProblem::new(DVector::from_vec(vec![-1.0, 0.0]), dm(1, 2, &[0.0, 1.0]), DVector::from_vec(vec![1.0]));
        match lp_solve(&p).unwrap() {
            LpOutcome::Unbounded { ray, .. } => assert!(p.objective.dot(&ray) < 0.0),
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn bounded_variables() {
        // minimize x − y with −2 ≤ x ≤ 1, y ≤ 3, y free below, x + y ≤ 2
        let p =
            LpProblem::free(DVector::from_vec(vec![1.0, -1.0]), dm(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![2.0]))
                .with_bounds(0, -2.0, 1.0)
                .with_bounds(1, f64::NEG_INFINITY, 3.0);
        let s = lp_solve(&p).unwrap().optimal().unwrap();
        assert!((s.x[0] + 2.0).abs() < 1e-10 && (s.x[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's cycling instance; Bland's rule must terminate.
        let p = LpProblem::new(
            DVector::from_vec(vec![-0.75, 150.0, -0.02, 6.0]),
            dm(3, 4, &[0.25, -60.0, -0.04, 9.0, 0.5, -90.0, -0.02, 3.0, 0.0, 0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        );
        let s = lp_solve(&p).unwrap().optimal().unwrap();
        assert!((s.objective + 0.05).abs() < 1e-10);
    }
}
