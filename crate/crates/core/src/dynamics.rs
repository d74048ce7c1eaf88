//! Fixed-step integration of the controlled network, settling, energy and
//! polytope-invariance diagnostics.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{Network, SupportSet};
use crate::numerics::{lp_solve, LpProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    pub settle_tol: f64,
    pub settle_window: usize,
    pub rng_seed: u64,
    /// Keep every k-th step in recorded trajectories.
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { dt: 1e-3, t_max: 200.0, settle_tol: 1e-8, settle_window: 100, rng_seed: 0, record_every: 1 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.t_max > 0.0) {
            return Err(invalid("t_max", "must be positive"));
        }
        if !(self.settle_tol > 0.0) {
            return Err(invalid("settle_tol", "must be positive"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).ceil() as usize
    }
}

/// Controller and trigger signals at one recorded step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AuxRecord {
    pub gamma: f64,
    pub q: f64,
    pub timer: f64,
    pub w_gate: f64,
    pub g: f64,
    /// Euclidean norm of the injected input (inside plus outside the rectifier).
    pub u_norm: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub aux: Vec<AuxRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<DVector<f64>> {
        self.states.last().map(|s| DVector::from_column_slice(s))
    }

    fn push(&mut self, t: f64, x: &[f64], aux: AuxRecord) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.aux.push(aux);
    }

    /// Append another trajectory, shifting its clock to start where this one ends.
    pub fn extend_shifted(&mut self, other: &Trajectory) {
        let t0 = self.times.last().copied().unwrap_or(0.0);
        let skip = usize::from(!self.is_empty());
        for k in skip..other.len() {
            self.times.push(t0 + other.times[k] - other.times[0]);
            self.states.push(other.states[k].clone());
            self.aux.push(other.aux[k]);
        }
    }

    /// CSV with header `t,x1..xn,G,gamma,q,T,w`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",G,gamma,q,T,w\n");
        for k in 0..self.len() {
            let _ = write!(out, "{}", self.times[k]);
            for v in &self.states[k] {
                let _ = write!(out, ",{v}");
            }
            let a = &self.aux[k];
            let _ = writeln!(out, ",{},{},{},{},{}", a.g, a.gamma, a.q, a.timer, a.w_gate);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Additive inputs for `ẋ = −x + [Wx + θ + u_in]₊ + u_out`.
///
/// `eval` is called at every Runge–Kutta stage and must not mutate state;
/// `advance` moves controller state forward once per accepted step.
pub trait InputSource {
    fn eval(&self, t: f64, x: &[f64], u_in: &mut [f64], u_out: &mut [f64]);

    fn advance(&mut self, _t: f64, _x: &[f64], _dt: f64, _rng: &mut ChaCha8Rng) -> Result<()> {
        Ok(())
    }

    fn record(&self) -> AuxRecord {
        AuxRecord::default()
    }

    /// `false` lets the stepper skip input evaluation entirely.
    fn active(&self) -> bool {
        true
    }
}

/// No input.
pub struct Autonomous;

impl InputSource for Autonomous {
    fn eval(&self, _t: f64, _x: &[f64], u_in: &mut [f64], u_out: &mut [f64]) {
        u_in.fill(0.0);
        u_out.fill(0.0);
    }

    fn active(&self) -> bool {
        false
    }
}

/// Stateless input from a closure `(t, x, u_in, u_out)`.
pub struct FnInput<F>(pub F);

impl<F: Fn(f64, &[f64], &mut [f64], &mut [f64])> InputSource for FnInput<F> {
    fn eval(&self, t: f64, x: &[f64], u_in: &mut [f64], u_out: &mut [f64]) {
        (self.0)(t, x, u_in, u_out)
    }
}

/// RK4 stepper with preallocated scratch space.
pub struct Stepper {
    n: usize,
    w: Vec<f64>,
    theta: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    u_in: Vec<f64>,
    u_out: Vec<f64>,
}

impl Stepper {
    pub fn new(net: &Network) -> Self {
        let n = net.n();
        let w = net.w();
        let mut wr = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                wr.push(w[(i, j)]);
            }
        }
        Stepper {
            n,
            w: wr,
            theta: net.theta().iter().copied().collect(),
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
            u_in: vec![0.0; n],
            u_out: vec![0.0; n],
        }
    }

    fn field_into(&mut self, t: f64, x: &[f64], src: &dyn InputSource, out: usize) {
        let n = self.n;
        let active = src.active();
        if active {
            src.eval(t, x, &mut self.u_in, &mut self.u_out);
        }
        for i in 0..n {
            let row = &self.w[i * n..(i + 1) * n];
            let mut y = self.theta[i];
            for j in 0..n {
                y += row[j] * x[j];
            }
            let mut f = -x[i];
            if active {
                f += (y + self.u_in[i]).max(0.0) + self.u_out[i];
            } else {
                f += y.max(0.0);
            }
            self.k[out][i] = f;
        }
    }

    /// Autonomous field at `x` (∞-norm returned).
    pub fn field_norm(&mut self, x: &[f64]) -> f64 {
        self.field_into(0.0, x, &Autonomous, 0);
        self.k[0].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// One RK4 step in place; returns the ∞-norm of the field at the start point.
    pub fn step(&mut self, t: f64, x: &mut [f64], dt: f64, src: &dyn InputSource) -> f64 {
        let n = self.n;
        self.field_into(t, x, src, 0);
        let start_norm = self.k[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let stages = [(0usize, 0.5), (1, 0.5), (2, 1.0)];
        for (s, &(prev, c)) in stages.iter().enumerate() {
            let mut tmp = std::mem::take(&mut self.tmp);
            for i in 0..n {
                tmp[i] = x[i] + c * dt * self.k[prev][i];
            }
            self.field_into(t + c * dt, &tmp, src, s + 1);
            self.tmp = tmp;
        }
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        start_norm
    }

    /// Norm of the last evaluated input pair at the start of a step.
    pub fn input_norm(&self) -> f64 {
        self.u_in.iter().chain(&self.u_out).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Integrate for `cfg.t_max` and record the path.
pub fn integrate(
    net: &Network,
    x0: &DVector<f64>,
    src: &mut dyn InputSource,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.len() != net.n() {
        return Err(Error::DimensionMismatch { expected: net.n(), found: x0.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut stepper = Stepper::new(net);
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut traj = Trajectory::default();
    traj.push(0.0, &x, src.record());
    let steps = cfg.steps();
    let mut t = 0.0;
    for step in 1..=steps {
        stepper.step(t, &mut x, cfg.dt, src);
        src.advance(t, &x, cfg.dt, &mut rng)?;
        t = step as f64 * cfg.dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t, step });
        }
        if step % cfg.record_every == 0 || step == steps {
            let mut rec = src.record();
            rec.u_norm = stepper.input_norm();
            traj.push(t, &x, rec);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SettleResult {
    pub final_state: DVector<f64>,
    pub support: SupportSet,
    pub converged: bool,
    pub elapsed: f64,
}

/// Integrate the autonomous network until the field stays below `settle_tol`
/// for `settle_window` consecutive steps, or `t_max` runs out.
pub fn settle(net: &Network, x0: &DVector<f64>, cfg: &IntegratorConfig) -> Result<SettleResult> {
    cfg.validate()?;
    if x0.len() != net.n() {
        return Err(Error::DimensionMismatch { expected: net.n(), found: x0.len() });
    }
    let mut stepper = Stepper::new(net);
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let steps = cfg.steps();
    let mut quiet = 0usize;
    let mut t = 0.0;
    let mut converged = false;
    for step in 0..steps {
        let norm = stepper.field_norm(&x);
        if norm < cfg.settle_tol {
            quiet += 1;
            if quiet >= cfg.settle_window {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
        stepper.step(t, &mut x, cfg.dt, &Autonomous);
        t = (step + 1) as f64 * cfg.dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t, step });
        }
    }
    let final_state = DVector::from_vec(x);
    Ok(SettleResult {
        support: SupportSet::of_state(&final_state, 10.0 * cfg.settle_tol),
        final_state,
        converged,
        elapsed: t,
    })
}

/// `V(x) = ½ xᵀ(I − W)x − θᵀx`.
pub fn energy(net: &Network, x: &DVector<f64>) -> f64 {
    let wx = net.w() * x;
    0.5 * (x.dot(x) - x.dot(&wx)) - net.theta().dot(x)
}

/// `{x : A x ≤ b}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polytope {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.len() });
        }
        Ok(Polytope { a, b })
    }

    /// Rows scaled to unit Euclidean norm (zero rows kept as-is).
    pub fn normalized(&self) -> Polytope {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for i in 0..a.nrows() {
            let nrm = a.row(i).norm();
            if nrm > 0.0 {
                a.row_mut(i).unscale_mut(nrm);
                b[i] /= nrm;
            }
        }
        Polytope { a, b }
    }

    /// Largest `a_iᵀx − b_i`; nonpositive inside.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).max()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// `true` when no point satisfies all rows.
    pub fn is_empty(&self) -> Result<bool> {
        let n = self.a.ncols();
        let p = LpProblem::free(DVector::zeros(n), self.a.clone(), self.b.clone());
        Ok(lp_solve(&p)?.is_infeasible())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub empty_region: bool,
    pub entered: bool,
    pub first_entry: Option<usize>,
    /// Largest row violation after first entry (0 when never entered).
    pub max_violation: f64,
}

pub fn check_polytope_invariance(poly: &Polytope, traj: &Trajectory) -> Result<InvarianceReport> {
    let poly = poly.normalized();
    if poly.is_empty()? {
        return Ok(InvarianceReport { empty_region: true, entered: false, first_entry: None, max_violation: 0.0 });
    }
    let mut first = None;
    let mut worst = f64::NEG_INFINITY;
    for (k, s) in traj.states.iter().enumerate() {
        let v = poly.violation(&DVector::from_column_slice(s));
        if first.is_none() && v <= 0.0 {
            first = Some(k);
        }
        if first.is_some() {
            worst = worst.max(v);
        }
    }
    Ok(InvarianceReport {
        empty_region: false,
        entered: first.is_some(),
        first_entry: first,
        max_violation: if first.is_some() { worst.max(0.0) } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::CstlnParams;

    fn reference() -> Network {
        Network::new(CstlnParams::default()).unwrap()
    }

    #[test]
    fn fixed_point_stays_put() {
        let net = reference();
        let x0 = net.attractor_closed_form(2).unwrap().x;
        let cfg = IntegratorConfig { t_max: 5.0, ..Default::default() };
        let tr = integrate(&net, &x0, &mut Autonomous, &cfg).unwrap();
        for s in &tr.states {
            assert!((DVector::from_column_slice(s) - &x0).amax() < 1e-8);
        }
    }

    #[test]
    fn negative_start_respects_decay_bound() {
        let net = reference();
        let x0 = DVector::from_vec(vec![-0.5, 0.2, -1.0, 0.0, 0.3, -0.1, 0.0]);
        let cfg = IntegratorConfig { t_max: 3.0, dt: 1e-3, ..Default::default() };
        let tr = integrate(&net, &x0, &mut Autonomous, &cfg).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            for i in 0..7 {
                assert!(s[i] >= x0[i] * (-t).exp() - 1e-9);
            }
        }
    }

    #[test]
    fn converges_to_pair_attractor() {
        let net = reference();
        let mut x0 = DVector::zeros(7);
        x0[1] = 0.6;
        x0[2] = 0.4;
        let cfg = IntegratorConfig { t_max: 60.0, settle_tol: 1e-11, ..Default::default() };
        let res = settle(&net, &x0, &cfg).unwrap();
        assert!(res.converged && res.elapsed < 40.0);
        let want = net.attractor_closed_form(1).unwrap().x;
        assert!((res.final_state - want).amax() < 1e-9);
        assert_eq!(res.support, SupportSet::pair(1));
    }

    #[test]
    fn saddle_is_an_equilibrium_for_a_while() {
        let net = reference();
        let s = net.saddle_closed_form(3).unwrap().x;
        let cfg = IntegratorConfig { t_max: 10.0, ..Default::default() };
        let tr = integrate(&net, &s, &mut Autonomous, &cfg).unwrap();
        let last = tr.last_state().unwrap();
        assert!((last - &s).amax() < 1e-6);
        let res = settle(&net, &s, &IntegratorConfig { t_max: 2.0, ..Default::default() }).unwrap();
        assert!(res.converged);
        assert_eq!(res.support.len(), 3);
    }

    #[test]
    fn energy_values() {
        let net = reference();
        assert_eq!(energy(&net, &DVector::zeros(7)), 0.0);
        let x = net.attractor_closed_form(3).unwrap().x;
        assert!((energy(&net, &x) + 1.0 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        struct Noisy(f64);
        impl InputSource for Noisy {
            fn eval(&self, _t: f64, _x: &[f64], u_in: &mut [f64], u_out: &mut [f64]) {
                u_in.fill(self.0);
                u_out.fill(0.0);
            }
            fn advance(&mut self, _t: f64, _x: &[f64], dt: f64, rng: &mut ChaCha8Rng) -> Result<()> {
                use rand_distr::{Distribution, StandardNormal};
                let z: f64 = StandardNormal.sample(rng);
                self.0 += dt.sqrt() * z;
                Ok(())
            }
        }
        let net = reference();
        let cfg = IntegratorConfig { t_max: 2.0, rng_seed: 9, ..Default::default() };
        let x0 = DVector::from_element(7, 0.1);
        let a = integrate(&net, &x0, &mut Noisy(0.0), &cfg).unwrap();
        let b = integrate(&net, &x0, &mut Noisy(0.0), &cfg).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn csv_header() {
        let net = reference();
        let cfg = IntegratorConfig { t_max: 0.01, dt: 0.005, ..Default::default() };
        let tr = integrate(&net, &DVector::zeros(7), &mut Autonomous, &cfg).unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,x1,x2,x3,x4,x5,x6,x7,G,gamma,q,T,w\n"));
        assert_eq!(csv.lines().count(), 1 + tr.len());
    }

    #[test]
    fn invariance_reports() {
        let net = reference();
        let cfg = IntegratorConfig { t_max: 5.0, ..Default::default() };
        let tr = integrate(&net, &DVector::from_element(7, 5.0), &mut Autonomous, &cfg).unwrap();
        let far = Polytope::new(
            DMatrix::from_row_slice(1, 7, &[1.0, 0., 0., 0., 0., 0., 0.]),
            DVector::from_vec(vec![-10.0]),
        )
        .unwrap();
        let r = check_polytope_invariance(&far, &tr).unwrap();
        assert!(!r.entered && !r.empty_region);
        let mut a = DMatrix::zeros(2, 7);
        a[(0, 0)] = 1.0;
        a[(1, 0)] = -1.0;
        let empty = Polytope::new(a, DVector::from_vec(vec![-1.0, -1.0])).unwrap();
        assert!(check_polytope_invariance(&empty, &tr).unwrap().empty_region);
    }
}
