//! Mismatch trigger, learning controller and LQR inference controller.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{Network, SupportSet};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerConfig {
    pub m_gain: f64,
    pub s_th: f64,
    pub tau_q: f64,
    pub tau_r: f64,
    pub tau_d: f64,
    pub beta_gate: f64,
    pub h: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig { m_gain: 400.0, s_th: 0.9, tau_q: 2.0, tau_r: 0.5, tau_d: 5.0, beta_gate: 50.0, h: 15.0 }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m_gain", self.m_gain),
            ("tau_q", self.tau_q),
            ("tau_r", self.tau_r),
            ("tau_d", self.tau_d),
            ("beta_gate", self.beta_gate),
            ("h", self.h),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerState {
    pub gamma: f64,
    pub q: f64,
    pub timer: f64,
    pub w_gate: f64,
    pub g: f64,
}

/// One explicit Euler step of the trigger, latch, timer, gate and pulse.
pub fn trigger_step(state: TriggerState, s: f64, cfg: &TriggerConfig, dt: f64) -> TriggerState {
    let gamma = sigmoid(cfg.m_gain * (cfg.s_th - s));
    let w_gate = sigmoid(cfg.beta_gate * (state.timer - cfg.h));
    let TriggerState { q, timer, g, .. } = state;
    let dq = gamma * (1.0 - q) / cfg.tau_q;
    let dg = (1.0 - g) * gamma * (1.0 - q) / cfg.tau_r - g * w_gate / cfg.tau_d;
    TriggerState {
        gamma,
        q: (q + dt * dq).clamp(0.0, 1.0),
        timer: timer + dt * q,
        w_gate,
        g: (g + dt * dg).clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnControlConfig {
    pub c_inh: f64,
    pub r_gain: f64,
    pub kappa: f64,
    pub tau_ou: f64,
    pub kernel_decay: f64,
}

impl Default for LearnControlConfig {
    fn default() -> Self {
        LearnControlConfig { c_inh: 0.85, r_gain: 1.0, kappa: 0.88, tau_ou: 0.5, kernel_decay: 1.0 }
    }
}

impl LearnControlConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_inh", self.c_inh),
            ("r_gain", self.r_gain),
            ("kappa", self.kappa),
            ("tau_ou", self.tau_ou),
            ("kernel_decay", self.kernel_decay),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Zero except `−c_inh` on the off-diagonal of the current pair.
pub fn build_inhibition(n: usize, support: &SupportSet, c_inh: f64) -> Result<DMatrix<f64>> {
    let [a, b] = support.indices() else {
        return Err(invalid("support", format!("inhibition needs a pair, got {support}")));
    };
    if *b >= n {
        return Err(Error::IndexOutOfRange { index: *b, valid: format!("0..{n}") });
    }
    let mut w = DMatrix::zeros(n, n);
    w[(*a, *b)] = -c_inh;
    w[(*b, *a)] = -c_inh;
    Ok(w)
}

/// Spatial profile of the learning noise: zero on and below the current
/// support, `exp(−decay·(j − max σ − 1))` above it.
pub fn noise_kernel(n: usize, support: &SupportSet, decay: f64) -> DVector<f64> {
    let top = support.indices().last().copied().unwrap_or(0);
    DVector::from_fn(n, |j, _| if j > top { (-decay * (j - top - 1) as f64).exp() } else { 0.0 })
}

/// Euler–Maruyama step of `ȧ = −a/τ + √(2/τ) ζ`.
pub fn noise_step<R: Rng + ?Sized>(a: f64, tau: f64, dt: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    a - a / tau * dt + (2.0 / tau).sqrt() * dt.sqrt() * z
}

/// `W_inh x + κ tanh(a) k`, before the `r G` gate.
pub fn learning_input(
    x: &DVector<f64>,
    w_inh: &DMatrix<f64>,
    a: f64,
    kernel: &DVector<f64>,
    kappa: f64,
) -> DVector<f64> {
    w_inh * x + kernel * (kappa * a.tanh())
}

#[derive(Debug, Clone)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    /// Diagonal of `D`.
    pub d: DVector<f64>,
}

/// `D_ii = 1` iff `(W x_tar + θ)_i > 0`; `A = −I + D W`.
pub fn linearize(net: &Network, x_tar: &DVector<f64>) -> Result<Linearization> {
    let h = net.drive(x_tar)?;
    let d = h.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let n = net.n();
    let mut a = -DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        if d[i] > 0.0 {
            for j in 0..n {
                a[(i, j)] += net.w()[(i, j)];
            }
        }
    }
    Ok(Linearization { a, d })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LqrAuxConfig {
    pub h_on: f64,
    pub alpha_d: f64,
    pub beta_d: f64,
    pub tau_d: f64,
    pub tau_a: f64,
    pub tau_p: f64,
    pub tau_k: f64,
    /// `Q = q_weight·I`.
    pub q_weight: f64,
    /// `R = r_weight·I`.
    pub r_weight: f64,
}

impl Default for LqrAuxConfig {
    fn default() -> Self {
        LqrAuxConfig {
            h_on: 0.05,
            alpha_d: 50.0,
            beta_d: 50.0,
            tau_d: 0.01,
            tau_a: 0.01,
            tau_p: 0.01,
            tau_k: 0.05,
            q_weight: 1.0,
            r_weight: 1.0,
        }
    }
}

impl LqrAuxConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_d", self.alpha_d),
            ("beta_d", self.beta_d),
            ("tau_d", self.tau_d),
            ("tau_a", self.tau_a),
            ("tau_p", self.tau_p),
            ("tau_k", self.tau_k),
            ("q_weight", self.q_weight),
            ("r_weight", self.r_weight),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.h_on < 0.0 {
            return Err(invalid("h_on", "must be nonnegative"));
        }
        Ok(())
    }
}

/// State of the auxiliary flows that compute the LQR gain online.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrAuxState {
    pub d: DVector<f64>,
    pub a: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl LqrAuxState {
    /// `D = 0`, `A = −I`, `P = 0`, `K = 0`.
    pub fn new(n: usize) -> Self {
        LqrAuxState {
            d: DVector::zeros(n),
            a: -DMatrix::identity(n, n),
            p: DMatrix::zeros(n, n),
            k: DMatrix::zeros(n, n),
        }
    }

    /// Largest Euler step that keeps every flow well inside its stability limit.
    pub fn stable_dt(&self, g: f64, r_gain: f64, cfg: &LqrAuxConfig) -> f64 {
        let acl = &self.a - &self.k * (r_gain * g);
        let rates = [1.0 / cfg.tau_a, 2.0 * acl.norm() / cfg.tau_p, cfg.r_weight / cfg.tau_k];
        let fastest = rates.iter().fold(1e-12f64, |m, v| m.max(*v));
        0.5 / fastest
    }
}

/// One step of the D, A, P and K flows with `B = r G I`: exact for D,
/// explicit Euler for the rest.
pub fn lqr_aux_step(
    state: &LqrAuxState,
    net: &Network,
    x_tar: &DVector<f64>,
    g: f64,
    r_gain: f64,
    dt: f64,
    cfg: &LqrAuxConfig,
) -> Result<LqrAuxState> {
    let h = net.drive(x_tar)?;
    aux_step_with_drive(state, net.w(), &h, g, r_gain, dt, cfg)
}

pub(crate) fn aux_step_with_drive(
    state: &LqrAuxState,
    w: &DMatrix<f64>,
    h: &DVector<f64>,
    g: f64,
    r_gain: f64,
    dt: f64,
    cfg: &LqrAuxConfig,
) -> Result<LqrAuxState> {
    let n = w.nrows();
    let b = r_gain * g;
    let (qw, rw) = (cfg.q_weight, cfg.r_weight);

    // D is linear in itself for a fixed drive, so it is advanced exactly.
    let mut d = state.d.clone();
    for i in 0..n {
        let on = cfg.alpha_d * (h[i] - cfg.h_on).max(0.0);
        let off = cfg.beta_d * (-h[i]).max(0.0);
        let k = on + off;
        if k > 0.0 {
            let d_inf = on / k;
            d[i] = d_inf + (state.d[i] - d_inf) * (-k * dt / cfg.tau_d).exp();
        }
    }

    let mut dw = w.clone();
    for i in 0..n {
        dw.row_mut(i).scale_mut(state.d[i]);
    }
    let a = &state.a + (dw - DMatrix::identity(n, n) - &state.a) * (dt / cfg.tau_a);

    let acl = &state.a - &state.k * b;
    let mut pdot = acl.transpose() * &state.p + &state.p * &acl + state.k.transpose() * &state.k * rw;
    for i in 0..n {
        pdot[(i, i)] += qw;
    }
    let p = &state.p + pdot * (dt / cfg.tau_p);
    let p = (&p + p.transpose()) * 0.5;

    let k = &state.k - (&state.k * rw - &state.p * b) * (dt / cfg.tau_k);

    if p.iter().chain(k.iter()).chain(a.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "LQR auxiliary flow diverged; reduce dt or lengthen the aux time constants".into(),
        ));
    }
    Ok(LqrAuxState { d, a, p, k })
}

/// `−K (x − x_tar)`, before the `r G` gate.
pub fn feedback_input(x: &DVector<f64>, x_tar: &DVector<f64>, k: &DMatrix<f64>) -> DVector<f64> {
    -(k * (x - x_tar))
}
