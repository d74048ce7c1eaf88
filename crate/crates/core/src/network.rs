//! Chain-structured threshold-linear networks and their equilibria.
//!
//! Indices are 0-based throughout the library. Text output (CLI, JSON
//! reports, `Display`) uses 1-based indices.

use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{eigenvalues, sym_eig};

/// An eigenvalue whose real part is within this band counts as zero.
pub const ZERO_EIG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CstlnParams {
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
}

impl Default for CstlnParams {
    /// Seven units with ε = 0.9, δ = 2, c = 1.
    fn default() -> Self {
        CstlnParams { n: 7, epsilon: 0.9, delta: 2.0, c: 1.0 }
    }
}

impl CstlnParams {
    pub fn new(n: usize, epsilon: f64, delta: f64, c: f64) -> Result<Self> {
        let p = CstlnParams { n, epsilon, delta, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", format!("need n >= 2, got {}", self.n)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid("epsilon", format!("need 0 < epsilon < 1, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", format!("need delta > 0, got {}", self.delta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", format!("need c > 0, got {}", self.c)));
        }
        Ok(())
    }

    /// Coordinate value of every double-support attractor, `c/(2−ε)`.
    pub fn attractor_level(&self) -> f64 {
        self.c / (2.0 - self.epsilon)
    }
}

/// Ordered set of active coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SupportSet(Vec<usize>);

impl SupportSet {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, valid: format!("0..{n}") });
        }
        Ok(SupportSet(indices))
    }

    /// `{i, i+1}`.
    pub fn pair(i: usize) -> Self {
        SupportSet(vec![i, i + 1])
    }

    /// `{i−1, i, i+1}`; `i ≥ 1`.
    pub fn triple(i: usize) -> Self {
        SupportSet(vec![i - 1, i, i + 1])
    }

    /// Coordinates strictly above `threshold`.
    pub fn of_state(x: &DVector<f64>, threshold: f64) -> Self {
        SupportSet(x.iter().enumerate().filter(|(_, v)| **v > threshold).map(|(i, _)| i).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn complement(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|i| !self.contains(*i)).collect()
    }

    /// Lowest index when this is a consecutive pair `{i, i+1}`.
    pub fn pair_start(&self) -> Option<usize> {
        match self.0.as_slice() {
            [a, b] if *b == a + 1 => Some(*a),
            _ => None,
        }
    }

    /// Indices shifted to 1-based numbering.
    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }
}

impl fmt::Display for SupportSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Attractor,
    Saddle,
    Other,
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub x: DVector<f64>,
    pub support: SupportSet,
    pub kind: EquilibriumKind,
    /// Spectrum of the in-cell Jacobian, sorted by real part.
    pub eigenvalues: Vec<Complex<f64>>,
    /// `min(min_{σ} y, −max_{σ̄} y)`; positive iff the cell conditions hold strictly.
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct CellJacobian {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub kind: EquilibriumKind,
}

/// Classify a spectrum: all real parts negative, or exactly one positive and none near zero.
pub fn classify(eigs: &[Complex<f64>]) -> EquilibriumKind {
    let near_zero = eigs.iter().any(|l| l.re.abs() < ZERO_EIG_TOL);
    let positive = eigs.iter().filter(|l| l.re >= ZERO_EIG_TOL).count();
    if near_zero {
        EquilibriumKind::Other
    } else if positive == 0 {
        EquilibriumKind::Attractor
    } else if positive == 1 {
        EquilibriumKind::Saddle
    } else {
        EquilibriumKind::Other
    }
}

/// A CSTLN: `ẋ = −x + [Wx + θ]₊`.
#[derive(Debug, Clone)]
pub struct Network {
    params: CstlnParams,
    w: DMatrix<f64>,
    theta: DVector<f64>,
}

pub fn build_network(params: CstlnParams) -> Result<Network> {
    Network::new(params)
}

impl Network {
    pub fn new(params: CstlnParams) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        let near = -1.0 + params.epsilon;
        let far = -1.0 - params.delta;
        let w = DMatrix::from_fn(n, n, |k, l| match k.abs_diff(l) {
            0 => 0.0,
            1 => near,
            _ => far,
        });
        Ok(Network { params, w, theta: DVector::from_element(n, params.c) })
    }

    pub fn params(&self) -> &CstlnParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x.len() });
        }
        Ok(())
    }

    /// Preactivation `y = Wx + θ`.
    pub fn drive(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(&self.w * x + &self.theta)
    }

    /// Autonomous vector field `−x + [Wx + θ]₊`.
    pub fn field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let y = self.drive(x)?;
        Ok(y.map(|v| v.max(0.0)) - x)
    }

    /// Closed-form attractor on `{i, i+1}`.
    pub fn attractor_closed_form(&self, i: usize) -> Result<Equilibrium> {
        let n = self.n();
        if i + 1 >= n {
            return Err(Error::IndexOutOfRange { index: i, valid: format!("0..{}", n - 1) });
        }
        let level = self.params.attractor_level();
        let mut x = DVector::zeros(n);
        x[i] = level;
        x[i + 1] = level;
        self.finish(x, SupportSet::pair(i))
    }

    /// Closed-form saddle on `{i−1, i, i+1}`.
    pub fn saddle_closed_form(&self, i: usize) -> Result<Equilibrium> {
        let n = self.n();
        if n < 3 {
            return Err(invalid("n", "saddles need n >= 3"));
        }
        if i == 0 || i + 1 >= n {
            return Err(Error::IndexOutOfRange { index: i, valid: format!("1..{}", n - 1) });
        }
        let CstlnParams { epsilon: e, delta: d, c, .. } = self.params;
        let big = d + 4.0 * e - 2.0 * e * e;
        let mut x = DVector::zeros(n);
        x[i - 1] = c * e / big;
        x[i] = c * (d + 2.0 * e) / big;
        x[i + 1] = c * e / big;
        self.finish(x, SupportSet::triple(i))
    }

    fn finish(&self, x: DVector<f64>, support: SupportSet) -> Result<Equilibrium> {
        let jac = self.cell_jacobian(&support)?;
        let margin = self.cell_margin(&x, &support)?;
        Ok(Equilibrium { x, support, kind: jac.kind, eigenvalues: jac.eigenvalues, margin })
    }

    /// `min(min_{i∈σ} y_i, −max_{k∉σ} y_k)` at `x`.
    pub fn cell_margin(&self, x: &DVector<f64>, support: &SupportSet) -> Result<f64> {
        let y = self.drive(x)?;
        let mut margin = f64::INFINITY;
        for (i, v) in y.iter().enumerate() {
            let m = if support.contains(i) { *v } else { -*v };
            margin = margin.min(m);
        }
        Ok(margin)
    }

    /// Solve `(I − W_σσ) x_σ = θ_σ`; `None` unless the strict cell conditions hold.
    pub fn equilibrium_in_cell(&self, support: &SupportSet) -> Result<Option<Equilibrium>> {
        if support.is_empty() {
            return Err(invalid("support", "must be nonempty"));
        }
        let n = self.n();
        let idx = support.indices();
        if idx.iter().any(|&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: *idx.last().unwrap(), valid: format!("0..{n}") });
        }
        let k = idx.len();
        let sys = DMatrix::from_fn(k, k, |a, b| {
            let id = if a == b { 1.0 } else { 0.0 };
            id - self.w[(idx[a], idx[b])]
        });
        let rhs = DVector::from_fn(k, |a, _| self.theta[idx[a]]);
        let xs =
            sys.lu().solve(&rhs).ok_or_else(|| Error::DegenerateNetwork(format!("I - W is singular on {support}")))?;
        let mut x = DVector::zeros(n);
        for (a, &i) in idx.iter().enumerate() {
            x[i] = xs[a];
        }
        let eq = self.finish(x, support.clone())?;
        Ok((eq.margin > 0.0).then_some(eq))
    }

    /// `−I + D_σ W` with `D_σ` the indicator of the support.
    pub fn cell_jacobian(&self, support: &SupportSet) -> Result<CellJacobian> {
        if support.is_empty() {
            return Err(invalid("support", "must be nonempty"));
        }
        let n = self.n();
        let mut j = -DMatrix::<f64>::identity(n, n);
        for &i in support.indices() {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, valid: format!("0..{n}") });
            }
            for l in 0..n {
                j[(i, l)] += self.w[(i, l)];
            }
        }
        let eigs = eigenvalues(&j)?;
        Ok(CellJacobian { kind: classify(&eigs), eigenvalues: eigs, matrix: j })
    }

    /// Spectrum of the symmetric on-support block `−I + W_σσ`, ascending.
    pub fn on_support_spectrum(&self, support: &SupportSet) -> Result<Vec<f64>> {
        let idx = support.indices();
        let k = idx.len();
        let block = DMatrix::from_fn(k, k, |a, b| {
            let id = if a == b { 1.0 } else { 0.0 };
            self.w[(idx[a], idx[b])] - id
        });
        Ok(sym_eig(&block)?.0.iter().copied().collect())
    }

    /// Every double-support attractor, in chain order.
    pub fn attractors(&self) -> Vec<Equilibrium> {
        (0..self.n() - 1).filter_map(|i| self.attractor_closed_form(i).ok()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(n: usize, e: f64, d: f64, c: f64) -> Network {
        Network::new(CstlnParams::new(n, e, d, c).unwrap()).unwrap()
    }

    #[test]
    fn build_small_example() {
        let nw = net(4, 0.7, 2.5, 1.0);
        assert!((nw.w()[(0, 1)] + 0.3).abs() < 1e-15);
        assert!((nw.w()[(0, 2)] + 3.5).abs() < 1e-15);
        assert_eq!(nw.w()[(0, 0)], 0.0);
        assert!(nw.theta().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn build_two_unit_chain() {
        let nw = net(2, 0.5, 1.0, 1.0);
        assert_eq!(nw.w().as_slice(), &[0.0, -0.5, -0.5, 0.0]);
    }

    #[test]
    fn build_reference_network() {
        let nw = Network::new(CstlnParams::default()).unwrap();
        assert!((nw.w()[(0, 6)] + 3.0).abs() < 1e-15);
        assert!((nw.w()[(2, 3)] + 0.1).abs() < 1e-15);
        assert_eq!(nw.w(), &nw.w().transpose());
    }

    #[test]
    fn invalid_params_name_the_bound() {
        for (p, name) in [
            (CstlnParams { n: 7, epsilon: 1.0, delta: 2.0, c: 1.0 }, "epsilon"),
            (CstlnParams { n: 7, epsilon: 0.5, delta: 0.0, c: 1.0 }, "delta"),
            (CstlnParams { n: 7, epsilon: 0.5, delta: 1.0, c: -1.0 }, "c"),
            (CstlnParams { n: 1, epsilon: 0.5, delta: 1.0, c: 1.0 }, "n"),
        ] {
            match Network::new(p) {
                Err(Error::InvalidParameter { name: got, .. }) => assert_eq!(got, name),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn drive_examples() {
        let nw = Network::new(CstlnParams::default()).unwrap();
        assert_eq!(nw.drive(&DVector::zeros(7)).unwrap(), *nw.theta());
        let x = nw.attractor_closed_form(1).unwrap().x;
        let y = nw.drive(&x).unwrap();
        assert!((y[1] - 1.0 / 1.1).abs() < 1e-12 && (y[2] - 1.0 / 1.1).abs() < 1e-12);
        // y_1 = c − (1−ε)x − (1+δ)x... evaluated directly
        let want = 1.0 + (-0.1) * (1.0 / 1.1) + (-3.0) * (1.0 / 1.1);
        assert!((y[0] - want).abs() < 1e-12);

        let small = net(4, 0.7, 2.5, 1.0);
        let y = small.drive(&DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        for (a, b) in y.iter().zip([1.0, 0.7, -2.5, -2.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(small.drive(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn attractor_values_and_spectrum() {
        let nw = Network::new(CstlnParams::default()).unwrap();
        let eq = nw.attractor_closed_form(1).unwrap();
        assert!((eq.x[1] - 0.909_090_909_090_909).abs() < 1e-12);
        assert_eq!(eq.kind, EquilibriumKind::Attractor);
        let spectrum = nw.on_support_spectrum(&eq.support).unwrap();
        assert!((spectrum[0] + 1.1).abs() < 1e-12 && (spectrum[1] + 0.9).abs() < 1e-12);
        let small = net(4, 0.7, 2.5, 1.0);
        assert!((small.attractor_closed_form(0).unwrap().x[0] - 1.0 / 1.3).abs() < 1e-12);
        assert!(nw.attractor_closed_form(6).is_err());
    }

    #[test]
    fn saddle_values() {
        let nw = Network::new(CstlnParams::default()).unwrap();
        let eq = nw.saddle_closed_form(3).unwrap();
        assert!((eq.x[2] - 0.226_130_653).abs() < 1e-8);
        assert!((eq.x[3] - 0.954_773_869).abs() < 1e-8);
        assert_eq!(eq.x[2], eq.x[4]);
        assert_eq!(eq.kind, EquilibriumKind::Saddle);
        assert!(nw.field(&eq.x).unwrap().amax() < 1e-12);
        assert!(nw.saddle_closed_form(0).is_err() && nw.saddle_closed_form(6).is_err());
    }

    #[test]
    fn cell_solve_matches_closed_forms() {
        let nw = Network::new(CstlnParams::default()).unwrap();
        for i in 0..6 {
            let a = nw.attractor_closed_form(i).unwrap();
            let b = nw.equilibrium_in_cell(&SupportSet::pair(i)).unwrap().unwrap();
            assert!((a.x - b.x).amax() < 1e-14);
            assert!(b.margin > 1e-9);
        }
        for i in 1..6 {
            let a = nw.saddle_closed_form(i).unwrap();
            let b = nw.equilibrium_in_cell(&SupportSet::triple(i)).unwrap().unwrap();
            assert!((a.x - b.x).amax() < 1e-14);
        }
    }

    #[test]
    fn nonadjacent_pair_has_no_equilibrium() {
        let nw = net(4, 0.7, 2.5, 1.0);
        let s = SupportSet::new(vec![0, 2], 4).unwrap();
        assert!(nw.equilibrium_in_cell(&s).unwrap().is_none());
    }

    #[test]
    fn full_support_jacobian() {
        let nw = net(4, 0.7, 2.5, 1.0);
        let s = SupportSet::new((0..4).collect(), 4).unwrap();
        let j = nw.cell_jacobian(&s).unwrap();
        assert_eq!(j.matrix, nw.w() - DMatrix::identity(4, 4));
    }

    #[test]
    fn off_support_eigenvalues_are_minus_one() {
        let nw = Network::new(CstlnParams::default()).unwrap();
        let j = nw.cell_jacobian(&SupportSet::pair(2)).unwrap();
        let minus_one = j.eigenvalues.iter().filter(|l| (l.re + 1.0).abs() < 1e-9).count();
        assert_eq!(minus_one, 5);
    }

    #[test]
    fn display_is_one_based() {
        assert_eq!(SupportSet::pair(0).to_string(), "{1,2}");
    }
}
