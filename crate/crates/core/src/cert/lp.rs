//! Polyhedral region-of-attraction certificates for chain networks.
//!
//! A forward-invariant polytope around each interior unit contains two
//! neighbouring attractors and the saddle between them; the saddle's unstable
//! left eigenvector splits it into one piece per attractor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::memory::MemoryModel;
use crate::network::{CstlnParams, Network};
use crate::numerics::{lp_solve, LpOutcome, LpProblem};

/// Admissible `(α, β)` levels for the forward-invariant polytopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiRegion {
    pub feasible: bool,
    /// `c/(1+δ)`.
    pub alpha_floor: f64,
    /// Range of feasible `α` from the LP, when feasible.
    pub alpha_range: Option<(f64, f64)>,
    /// `c(1−2ε)/(1+2ε²−4ε)`, when that denominator is negative.
    pub alpha_max_closed: Option<f64>,
    /// A feasible `(α, β)`, when one exists.
    pub witness: Option<(f64, f64)>,
}

/// Rows `G [α, β]ᵀ ≤ h` of the level constraints.
fn level_rows(p: &CstlnParams) -> (DMatrix<f64>, DVector<f64>) {
    let a1 = -1.0 + p.epsilon;
    let g = DMatrix::from_row_slice(3, 2, &[1.0, -2.0 * a1, a1, -1.0, -1.0, 0.0]);
    let h = DVector::from_vec(vec![p.c, -p.c, -p.c / (1.0 + p.delta)]);
    (g, h)
}

/// Check whether some `α, β ≥ 0` satisfy the three level constraints.
pub fn fi_parameters(params: &CstlnParams) -> Result<FiRegion> {
    params.validate()?;
    let (g, h) = level_rows(params);
    let extreme = |sign: f64| -> Result<Option<(f64, f64)>> {
        let prob = LpProblem::new(DVector::from_vec(vec![sign, 0.0]), g.clone(), h.clone());
        Ok(match lp_solve(&prob)? {
            LpOutcome::Optimal(s) => Some((s.x[0], s.x[1])),
            _ => None,
        })
    };
    let lo = extreme(1.0)?;
    let hi = extreme(-1.0)?;
    let e = params.epsilon;
    let den = 1.0 + 2.0 * e * e - 4.0 * e;
    Ok(FiRegion {
        feasible: lo.is_some(),
        alpha_floor: params.c / (1.0 + params.delta),
        alpha_range: lo.zip(hi).map(|(l, h)| (l.0, h.0)),
        alpha_max_closed: (den < 0.0).then(|| params.c * (1.0 - 2.0 * e) / den),
        witness: lo,
    })
}

/// Forward-invariant polytope `Ax ≤ b` centred on unit `i` (0-based, `1 ≤ i ≤ n−2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiSet {
    pub i: usize,
    pub alpha: f64,
    pub beta: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

fn check_center(n: usize, i: usize) -> Result<()> {
    if n < 3 {
        return Err(invalid("n", "forward-invariant sets need n >= 3"));
    }
    if i == 0 || i + 1 >= n {
        return Err(Error::IndexOutOfRange { index: i, valid: format!("1..{}", n - 1) });
    }
    Ok(())
}

/// Affine pieces `b = b0 + bα·α + bβ·β` of the polytope rows, in unit order.
fn fi_rows(net: &Network, i: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = net.n();
    let c = net.params().c;
    let w = net.w();
    let mut a = DMatrix::zeros(n, n);
    let mut b0 = DVector::zeros(n);
    let mut ba = DVector::zeros(n);
    let mut bb = DVector::zeros(n);
    for k in 0..n {
        if k == i {
            // y_i ≥ α
            a.set_row(k, &(-w.row(k)));
            b0[k] = c;
            ba[k] = -1.0;
        } else if k + 1 == i || k == i + 1 {
            // y_k ≤ β
            a.set_row(k, &w.row(k));
            b0[k] = -c;
            bb[k] = 1.0;
        } else {
            // y_k ≤ 0
            a.set_row(k, &w.row(k));
            b0[k] = -c;
        }
    }
    (a, b0, ba, bb)
}

pub fn fi_set(net: &Network, i: usize, alpha: f64, beta: f64) -> Result<FiSet> {
    check_center(net.n(), i)?;
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(invalid("alpha/beta", "levels must be nonnegative"));
    }
    let (g, h) = level_rows(net.params());
    let viol = (g * DVector::from_vec(vec![alpha, beta]) - h).max();
    if viol > 1e-12 {
        return Err(invalid("alpha/beta", format!("levels violate the invariance conditions by {viol:e}")));
    }
    let (a, b0, ba, bb) = fi_rows(net, i);
    Ok(FiSet { i, alpha, beta, a, b: b0 + ba * alpha + bb * beta })
}

/// Unstable left eigenvector of the triple cell around `i`, scaled so that
/// the entry on `i−1` is `+1`.
pub fn separating_normal(net: &Network, i: usize) -> Result<DVector<f64>> {
    let n = net.n();
    check_center(n, i)?;
    let p = net.params();
    let k = (p.epsilon + p.delta) / (1.0 + p.delta);
    let mut w = DVector::zeros(n);
    w[i - 1] = 1.0;
    w[i + 1] = -1.0;
    if i >= 2 {
        w[i - 2] = k;
    }
    if i + 2 < n {
        w[i + 2] = -k;
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// From the polytope centred on the attractor's lower unit; `φ ≤ 0`.
    L,
    /// From the polytope centred on the attractor's upper unit; `φ ≥ 0`.
    R,
}

/// One attractor's piece of a forward-invariant polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaPolyhedron {
    /// Attractor on `{attractor, attractor+1}`.
    pub attractor: usize,
    pub side: Side,
    pub w: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl RoaPolyhedron {
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (&self.a * x - &self.b).iter().all(|v| *v <= tol)
    }
}

fn with_halfspace(a: &DMatrix<f64>, b: &DVector<f64>, row: DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let m = a.nrows();
    let mut a2 = a.clone().insert_row(m, 0.0);
    a2.set_row(m, &row.transpose());
    (a2, b.clone().insert_row(m, 0.0))
}

/// Split `fi` into the piece for the attractor on `{i−1, i}` (`φ ≥ 0`) and
/// the piece for the attractor on `{i, i+1}` (`φ ≤ 0`).
pub fn roa_polyhedra(net: &Network, fi: &FiSet) -> Result<(RoaPolyhedron, RoaPolyhedron)> {
    let w = separating_normal(net, fi.i)?;
    let (al, bl) = with_halfspace(&fi.a, &fi.b, -&w);
    let (ar, br) = with_halfspace(&fi.a, &fi.b, w.clone());
    Ok((
        RoaPolyhedron { attractor: fi.i - 1, side: Side::R, w: w.clone(), a: al, b: bl },
        RoaPolyhedron { attractor: fi.i, side: Side::L, w, a: ar, b: br },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LpOptions {
    /// Optimize `(α, β)` together with the radius.
    pub joint: bool,
    /// Levels used when `joint` is off; defaults to the midpoint of the feasible `α` range.
    pub levels: Option<(f64, f64)>,
    pub combine: Combine,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { joint: true, levels: None, combine: Combine::Min }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSide {
    pub side: Side,
    /// Centre unit of the polytope used.
    pub center: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Radius after clamping at zero.
    pub r: f64,
    /// Radius before clamping; negative when the clean target is outside.
    pub raw_r: f64,
    pub target_inside: bool,
    /// Row that limits the radius.
    pub binding_row: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpCertificate {
    pub pattern_id: usize,
    pub attractor: usize,
    pub sides: Vec<LpSide>,
    pub r: f64,
    pub combine: Combine,
    /// Boundary attractors have one polytope piece only.
    pub single_sided: bool,
}

/// Per-row radii `(b_ℓ − a_ℓᵀx_tar)/‖W_E a_ℓ‖` for a fixed polyhedron.
pub fn row_ratios(a: &DMatrix<f64>, b: &DVector<f64>, w_e: &DMatrix<f64>, x_tar: &DVector<f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|l| {
            let row = a.row(l).transpose();
            let slack = b[l] - row.dot(x_tar);
            let nrm = (w_e * &row).norm();
            if nrm > 0.0 {
                slack / nrm
            } else if slack >= 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// `A` and the constant, `α` and `β` parts of the right-hand side.
type LevelRows = (DMatrix<f64>, DVector<f64>, DVector<f64>, DVector<f64>);

fn polyhedron_rows(net: &Network, center: usize, side: Side) -> Result<LevelRows> {
    let (a, b0, ba, bb) = fi_rows(net, center);
    let w = separating_normal(net, center)?;
    let row = match side {
        Side::L => w,
        Side::R => -w,
    };
    let m = a.nrows();
    let mut a2 = a.insert_row(m, 0.0);
    a2.set_row(m, &row.transpose());
    Ok((a2, b0.insert_row(m, 0.0), ba.insert_row(m, 0.0), bb.insert_row(m, 0.0)))
}

fn argmin(v: &[f64]) -> Option<usize> {
    v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i)
}

fn fixed_side(
    net: &Network,
    center: usize,
    side: Side,
    levels: (f64, f64),
    w_e: &DMatrix<f64>,
    x_tar: &DVector<f64>,
) -> Result<LpSide> {
    let fi = fi_set(net, center, levels.0, levels.1)?;
    let (a, b0, ba, bb) = polyhedron_rows(net, center, side)?;
    let b = b0 + ba * fi.alpha + bb * fi.beta;
    let ratios = row_ratios(&a, &b, w_e, x_tar);
    let raw = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LpSide {
        side,
        center,
        alpha: fi.alpha,
        beta: fi.beta,
        r: raw.max(0.0),
        raw_r: raw,
        target_inside: raw >= 0.0,
        binding_row: argmin(&ratios),
    })
}

/// Maximize `r` over `(α, β, r)` subject to the level constraints and
/// `r‖W_E a_ℓ‖ + a_ℓᵀx_tar ≤ b_ℓ(α, β)` for every row.
fn joint_side(
    net: &Network,
    center: usize,
    side: Side,
    w_e: &DMatrix<f64>,
    x_tar: &DVector<f64>,
) -> Result<Option<LpSide>> {
    let (a, b0, ba, bb) = polyhedron_rows(net, center, side)?;
    let m = a.nrows();
    let (g, h) = level_rows(net.params());
    let mut rows = DMatrix::zeros(m + 3, 3);
    let mut rhs = DVector::zeros(m + 3);
    for l in 0..m {
        let row = a.row(l).transpose();
        rows[(l, 0)] = -ba[l];
        rows[(l, 1)] = -bb[l];
        rows[(l, 2)] = (w_e * &row).norm();
        rhs[l] = b0[l] - row.dot(x_tar);
    }
    for k in 0..3 {
        rows[(m + k, 0)] = g[(k, 0)];
        rows[(m + k, 1)] = g[(k, 1)];
        rhs[m + k] = h[k];
    }
    let prob = LpProblem::new(DVector::from_vec(vec![0.0, 0.0, -1.0]), rows, rhs).with_bounds(
        2,
        f64::NEG_INFINITY,
        f64::INFINITY,
    );
    match lp_solve(&prob)? {
        LpOutcome::Optimal(s) => {
            let (alpha, beta, raw) = (s.x[0], s.x[1], s.x[2]);
            let b = &b0 + &ba * alpha + &bb * beta;
            let ratios = row_ratios(&a, &b, w_e, x_tar);
            Ok(Some(LpSide {
                side,
                center,
                alpha,
                beta,
                r: raw.max(0.0),
                raw_r: raw,
                target_inside: raw >= 0.0,
                binding_row: argmin(&ratios),
            }))
        }
        LpOutcome::Infeasible { .. } => Ok(None),
        LpOutcome::Unbounded { .. } => Err(Error::Numerical("radius LP is unbounded".into())),
    }
}

/// Noise radius guaranteeing that the encoded target of a corrupted copy of
/// the pattern stays in its attractor's polyhedral ROA estimate.
pub fn certify_lp(net: &Network, model: &MemoryModel, pattern_id: usize, opts: &LpOptions) -> Result<LpCertificate> {
    let entry = model.entry(pattern_id)?;
    let n = net.n();
    if model.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: model.n() });
    }
    let att =
        entry.support.pair_start().ok_or_else(|| invalid("support", format!("{} is not a pair", entry.support)))?;
    let region = fi_parameters(net.params())?;
    if !region.feasible {
        return Err(Error::NoCertificate(format!(
            "no forward-invariant levels exist for epsilon = {}",
            net.params().epsilon
        )));
    }
    let x_tar = model.encode(&entry.pattern)?;
    let w_e = &model.w_e;

    // (centre, side) pieces available for the attractor on {att, att+1}
    let mut pieces = Vec::new();
    if att >= 1 {
        pieces.push((att, Side::L));
    }
    if att + 2 < n {
        pieces.push((att + 1, Side::R));
    }
    if pieces.is_empty() {
        return Err(Error::NoCertificate("chain too short for polyhedral pieces".into()));
    }
    let any_response = pieces.iter().any(|&(center, side)| {
        polyhedron_rows(net, center, side)
            .map(|(a, ..)| (0..a.nrows()).any(|l| (w_e * a.row(l).transpose()).norm() > 0.0))
            .unwrap_or(false)
    });
    if !any_response {
        return Err(Error::DegenerateEncoder(pattern_id));
    }

    let mut sides = Vec::new();
    for (center, side) in pieces {
        let s = if opts.joint {
            joint_side(net, center, side, w_e, &x_tar)?
        } else {
            let levels = match opts.levels {
                Some(l) => l,
                None => {
                    let (lo, hi) = region.alpha_range.expect("feasible region has a range");
                    let alpha = 0.5 * (lo + hi);
                    let p = net.params();
                    (alpha, ((-1.0 + p.epsilon) * alpha + p.c).max(0.0))
                }
            };
            Some(fixed_side(net, center, side, levels, w_e, &x_tar)?)
        };
        sides.push(s.unwrap_or(LpSide {
            side,
            center,
            alpha: f64::NAN,
            beta: f64::NAN,
            r: 0.0,
            raw_r: f64::NEG_INFINITY,
            target_inside: false,
            binding_row: None,
        }));
    }
    let radii = sides.iter().map(|s| s.r);
    let r = match opts.combine {
        Combine::Min => radii.fold(f64::INFINITY, f64::min),
        Combine::Max => radii.fold(0.0, f64::max),
    };
    Ok(LpCertificate { pattern_id, attractor: att, single_sided: sides.len() == 1, sides, r, combine: opts.combine })
}
