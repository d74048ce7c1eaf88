//! Online encoder/decoder learning and the learn/infer sessions that drive
//! the latent network with the trigger-gated controllers.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{
    aux_step_with_drive, build_inhibition, noise_kernel, noise_step, trigger_step, LearnControlConfig, LqrAuxConfig,
    LqrAuxState, TriggerConfig, TriggerState,
};
use crate::dynamics::{settle, AuxRecord, InputSource, IntegratorConfig, Stepper, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::network::{Network, SupportSet};
use crate::numerics::care_solve;

/// `pᵀq / (‖p‖‖q‖)`.
pub fn cosine_similarity(p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: q.len() });
    }
    let (np, nq) = (p.norm(), q.norm());
    if np == 0.0 || nq == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((p.dot(q) / (np * nq)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub pattern_id: usize,
    pub support: SupportSet,
    pub x_star: DVector<f64>,
    /// The clean pattern as bound.
    pub pattern: DVector<f64>,
}

/// Encoder `W_E` (d×n), decoder `W_D` (n×d) and the pattern registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub w_e: DMatrix<f64>,
    pub w_d: DMatrix<f64>,
    /// Latent indices bound so far, ascending.
    pub frozen: Vec<usize>,
    pub registry: Vec<RegistryEntry>,
}

impl MemoryModel {
    pub fn new(d: usize, n: usize) -> Self {
        MemoryModel { w_e: DMatrix::zeros(d, n), w_d: DMatrix::zeros(n, d), frozen: Vec::new(), registry: Vec::new() }
    }

    pub fn d(&self) -> usize {
        self.w_e.nrows()
    }

    pub fn n(&self) -> usize {
        self.w_e.ncols()
    }

    /// `x_tar = W_Eᵀ P`.
    pub fn encode(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        if p.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), found: p.len() });
        }
        Ok(self.w_e.tr_mul(p))
    }

    /// `P̂ = W_Dᵀ x`.
    pub fn decode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x.len() });
        }
        Ok(self.w_d.tr_mul(x))
    }

    fn free_rows(&self, support: &SupportSet) -> Result<Vec<usize>> {
        let u: Vec<usize> = support.indices().iter().copied().filter(|i| !self.frozen.contains(i)).collect();
        if u.is_empty() {
            return Err(Error::Collision(support.indices().to_vec()));
        }
        Ok(u)
    }

    fn check_binding(&self, p: &DVector<f64>, x_star: &DVector<f64>, support: &SupportSet) -> Result<()> {
        if p.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), found: p.len() });
        }
        if x_star.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x_star.len() });
        }
        if support.indices().iter().any(|&i| i >= self.n()) {
            return Err(Error::IndexOutOfRange {
                index: *support.indices().last().unwrap(),
                valid: format!("0..{}", self.n()),
            });
        }
        if p.norm() == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(())
    }

    /// Component of `p` orthogonal to every registered pattern.
    fn innovation(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(self.registry.len());
        for e in &self.registry {
            let mut v = e.pattern.clone();
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&v);
                    v.axpy(-c, b, 1.0);
                }
            }
            let nrm = v.norm();
            if nrm > 1e-12 * e.pattern.norm() {
                basis.push(v / nrm);
            }
        }
        let mut q = p.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&q);
                q.axpy(-c, b, 1.0);
            }
        }
        q
    }

    /// Minimum-norm encoder update so that `W_Eᵀ P = x*` while every
    /// registered pattern keeps its target.
    pub fn update_encoder(&mut self, p: &DVector<f64>, x_star: &DVector<f64>, support: &SupportSet) -> Result<()> {
        self.check_binding(p, x_star, support)?;
        self.free_rows(support)?;
        let q = self.innovation(p);
        let qp = q.dot(p);
        if q.norm() <= 1e-10 * p.norm() || qp <= 0.0 {
            return Err(invalid("pattern", "linearly dependent on the stored patterns"));
        }
        let resid = x_star - self.w_e.tr_mul(p);
        self.w_e.ger(1.0 / qp, &q, &resid, 1.0);
        Ok(())
    }

    /// Writes the free decoder rows `U = σ \ F` so that `W_Dᵀ x* = P`.
    pub fn update_decoder(&mut self, p: &DVector<f64>, x_star: &DVector<f64>, support: &SupportSet) -> Result<()> {
        self.check_binding(p, x_star, support)?;
        let u = self.free_rows(support)?;
        let mut rhs = p.clone();
        for &j in support.indices() {
            if self.frozen.contains(&j) {
                rhs.axpy(-x_star[j], &self.w_d.row(j).transpose(), 1.0);
            }
        }
        let xu2: f64 = u.iter().map(|&j| x_star[j] * x_star[j]).sum();
        if xu2 == 0.0 {
            return Err(Error::ZeroNorm);
        }
        for &j in &u {
            let row = rhs.transpose() * (x_star[j] / xu2);
            self.w_d.set_row(j, &row);
        }
        Ok(())
    }

    /// Bind `pattern` to the attractor `x_star` on `support` and register it.
    pub fn bind(
        &mut self,
        pattern_id: usize,
        p: &DVector<f64>,
        x_star: &DVector<f64>,
        support: &SupportSet,
    ) -> Result<()> {
        let mut next = self.clone();
        next.update_encoder(p, x_star, support)?;
        next.update_decoder(p, x_star, support)?;
        for &j in support.indices() {
            if !next.frozen.contains(&j) {
                next.frozen.push(j);
            }
        }
        next.frozen.sort_unstable();
        next.registry.push(RegistryEntry {
            pattern_id,
            support: support.clone(),
            x_star: x_star.clone(),
            pattern: p.clone(),
        });
        *self = next;
        Ok(())
    }

    /// Largest violation of `W_Eᵀ P = x*` and `W_Dᵀ x* = P` over the registry.
    pub fn identity_residual(&self) -> f64 {
        self.registry
            .iter()
            .map(|e| {
                let enc = (self.w_e.tr_mul(&e.pattern) - &e.x_star).amax();
                let dec = (self.w_d.tr_mul(&e.x_star) - &e.pattern).amax();
                enc.max(dec)
            })
            .fold(0.0, f64::max)
    }

    pub fn entry_for_support(&self, support: &SupportSet) -> Option<&RegistryEntry> {
        self.registry.iter().find(|e| &e.support == support)
    }

    pub fn entry(&self, pattern_id: usize) -> Result<&RegistryEntry> {
        self.registry.iter().find(|e| e.pattern_id == pattern_id).ok_or(Error::UnknownPattern(pattern_id))
    }
}

/// How the inference controller obtains its gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainMode {
    /// Co-simulate the auxiliary D/A/P/K flows.
    Dynamic,
    /// Solve the Riccati equation once at the start.
    Algebraic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub trigger: TriggerConfig,
    pub learn: LearnControlConfig,
    pub lqr: LqrAuxConfig,
    pub infer_r_gain: f64,
    pub gain_mode: GainMode,
    pub integrator: IntegratorConfig,
    pub retry_max: usize,
    /// The controlled phase ends once the pulse is below this level.
    pub gate_off: f64,
    pub max_control_time: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            trigger: TriggerConfig::default(),
            learn: LearnControlConfig::default(),
            lqr: LqrAuxConfig::default(),
            infer_r_gain: 10.0,
            gain_mode: GainMode::Dynamic,
            integrator: IntegratorConfig::default(),
            retry_max: 5,
            gate_off: 1e-3,
            max_control_time: 200.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.trigger.validate()?;
        self.learn.validate()?;
        self.lqr.validate()?;
        self.integrator.validate()?;
        if !(self.infer_r_gain > 0.0) {
            return Err(invalid("infer_r_gain", "must be positive"));
        }
        if !(self.gate_off > 0.0 && self.gate_off < 1.0) {
            return Err(invalid("gate_off", "must lie in (0, 1)"));
        }
        if !(self.max_control_time > 0.0) {
            return Err(invalid("max_control_time", "must be positive"));
        }
        Ok(())
    }
}

/// Cosine between a fixed pattern and `W_Dᵀ x`, from precomputed `W_D P` and `W_D W_Dᵀ`.
struct SimilarityProbe {
    wp: Vec<f64>,
    gram: Vec<f64>,
    p_norm: f64,
}

impl SimilarityProbe {
    fn new(model: &MemoryModel, p: &DVector<f64>) -> Self {
        let wp = &model.w_d * p;
        let gram = &model.w_d * model.w_d.transpose();
        let n = model.n();
        SimilarityProbe {
            wp: wp.iter().copied().collect(),
            gram: (0..n * n).map(|k| gram[(k / n, k % n)]).collect(),
            p_norm: p.norm(),
        }
    }

    /// A zero decoded output counts as similarity 0.
    fn eval(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let num: f64 = self.wp.iter().zip(x).map(|(a, b)| a * b).sum();
        let mut quad = 0.0;
        for i in 0..n {
            let row = &self.gram[i * n..(i + 1) * n];
            quad += x[i] * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        let den = self.p_norm * quad.max(0.0).sqrt();
        if den <= 1e-300 {
            0.0
        } else {
            (num / den).clamp(-1.0, 1.0)
        }
    }
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    (0..r * c).map(|k| m[(k / c, k % c)]).collect()
}

struct LearningDriver {
    n: usize,
    w_inh: Vec<f64>,
    kernel: Vec<f64>,
    kappa: f64,
    r_gain: f64,
    tau_ou: f64,
    a: f64,
    trig: TriggerState,
    trig_cfg: TriggerConfig,
    probe: SimilarityProbe,
}

impl InputSource for LearningDriver {
    fn eval(&self, _t: f64, x: &[f64], u_in: &mut [f64], u_out: &mut [f64]) {
        let gain = self.r_gain * self.trig.g;
        let noise = self.kappa * self.a.tanh();
        for i in 0..self.n {
            let row = &self.w_inh[i * self.n..(i + 1) * self.n];
            let inh: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            u_in[i] = gain * (inh + noise * self.kernel[i]);
        }
        u_out.fill(0.0);
    }

    fn advance(&mut self, _t: f64, x: &[f64], dt: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        let s = self.probe.eval(x);
        self.trig = trigger_step(self.trig, s, &self.trig_cfg, dt);
        self.a = noise_step(self.a, self.tau_ou, dt, rng);
        Ok(())
    }

    fn record(&self) -> AuxRecord {
        trig_record(&self.trig)
    }

    fn active(&self) -> bool {
        self.trig.g > 0.0
    }
}

fn trig_record(t: &TriggerState) -> AuxRecord {
    AuxRecord { gamma: t.gamma, q: t.q, timer: t.timer, w_gate: t.w_gate, g: t.g, u_norm: 0.0 }
}

struct InferenceDriver {
    n: usize,
    x_tar: Vec<f64>,
    k: Vec<f64>,
    r_gain: f64,
    trig: TriggerState,
    trig_cfg: TriggerConfig,
    probe: SimilarityProbe,
    aux: Option<AuxFlow>,
}

/// Auxiliary gain flow, frozen once it stops moving.
struct AuxFlow {
    state: LqrAuxState,
    w: DMatrix<f64>,
    h: DVector<f64>,
    cfg: LqrAuxConfig,
    r_gain: f64,
    converged: bool,
}

impl AuxFlow {
    fn advance(&mut self, dt: f64) -> Result<()> {
        if self.converged {
            return Ok(());
        }
        let before = self.state.k.clone();
        let mut left = dt;
        while left > 0.0 {
            let h = self.state.stable_dt(1.0, self.r_gain, &self.cfg).min(left);
            self.state = aux_step_with_drive(&self.state, &self.w, &self.h, 1.0, self.r_gain, h, &self.cfg)?;
            left -= h;
        }
        let moved = (&self.state.k - before).norm();
        if moved <= 1e-9 * dt * (1.0 + self.state.k.norm()) {
            self.converged = true;
        }
        Ok(())
    }
}

impl InputSource for InferenceDriver {
    fn eval(&self, _t: f64, x: &[f64], u_in: &mut [f64], u_out: &mut [f64]) {
        u_in.fill(0.0);
        let gain = self.r_gain * self.trig.g;
        for i in 0..self.n {
            let row = &self.k[i * self.n..(i + 1) * self.n];
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += row[j] * (x[j] - self.x_tar[j]);
            }
            u_out[i] = -gain * acc;
        }
    }

    fn advance(&mut self, _t: f64, x: &[f64], dt: f64, _rng: &mut ChaCha8Rng) -> Result<()> {
        let s = self.probe.eval(x);
        self.trig = trigger_step(self.trig, s, &self.trig_cfg, dt);
        if let Some(aux) = self.aux.as_mut() {
            aux.advance(dt)?;
            self.k = flat(&aux.state.k);
        }
        Ok(())
    }

    fn record(&self) -> AuxRecord {
        trig_record(&self.trig)
    }

    fn active(&self) -> bool {
        self.trig.g > 0.0
    }
}

trait Gated: InputSource {
    fn trigger(&self) -> &TriggerState;
}

impl Gated for LearningDriver {
    fn trigger(&self) -> &TriggerState {
        &self.trig
    }
}

impl Gated for InferenceDriver {
    fn trigger(&self) -> &TriggerState {
        &self.trig
    }
}

struct ControlRun {
    state: DVector<f64>,
    peak_g: f64,
    /// A trigger event happened iff this reached one half.
    peak_gamma: f64,
    elapsed: f64,
    trajectory: Option<Trajectory>,
}

/// Integrate under a gated controller until its pulse has come and gone.
fn run_gated<D: Gated>(
    net: &Network,
    x0: &DVector<f64>,
    driver: &mut D,
    cfg: &SessionConfig,
    seed: u64,
    record: bool,
) -> Result<ControlRun> {
    let ic = &cfg.integrator;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stepper = Stepper::new(net);
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut traj = record.then(Trajectory::default);
    if let Some(tr) = traj.as_mut() {
        tr.times.push(0.0);
        tr.states.push(x.clone());
        tr.aux.push(driver.record());
    }
    let quiet_after = 3.0 * cfg.trigger.tau_r.max(1.0);
    let max_steps = (cfg.max_control_time / ic.dt).ceil() as usize;
    let mut peak_g = 0.0f64;
    let mut peak_gamma = 0.0f64;
    let mut quiet = 0usize;
    let mut t = 0.0;
    for step in 1..=max_steps {
        let moving = stepper.step(t, &mut x, ic.dt, &*driver);
        driver.advance(t, &x, ic.dt, &mut rng)?;
        t = step as f64 * ic.dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t, step });
        }
        let trig = *driver.trigger();
        peak_g = peak_g.max(trig.g);
        peak_gamma = peak_gamma.max(trig.gamma);
        if let Some(tr) = traj.as_mut() {
            if step % ic.record_every == 0 {
                let mut rec = driver.record();
                rec.u_norm = stepper.input_norm();
                tr.times.push(t);
                tr.states.push(x.clone());
                tr.aux.push(rec);
            }
        }
        let pulse_over = trig.g < cfg.gate_off && (trig.timer > cfg.trigger.h || trig.q < 0.01);
        if t >= quiet_after && pulse_over {
            break;
        }
        // A stalled pulse with the controlled state at rest changes nothing further.
        if trig.gamma < 1e-6 && moving < ic.settle_tol {
            quiet += 1;
            if quiet >= ic.settle_window {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    Ok(ControlRun { state: DVector::from_vec(x), peak_g, peak_gamma, elapsed: t, trajectory: traj })
}

fn settle_recorded(
    net: &Network,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
    traj: Option<&mut Trajectory>,
) -> Result<crate::dynamics::SettleResult> {
    let res = settle(net, x0, cfg)?;
    if let Some(tr) = traj {
        let t0 = tr.times.last().copied().unwrap_or(0.0);
        tr.times.push(t0 + res.elapsed);
        tr.states.push(res.final_state.iter().copied().collect());
        tr.aux.push(AuxRecord::default());
    }
    Ok(res)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnOutcome {
    pub pattern_id: usize,
    /// `None` when the pattern matched the current attractor and nothing was bound.
    pub support: Option<SupportSet>,
    pub attempts: usize,
    pub triggered: bool,
    pub similarity_before: f64,
    pub failed_supports: Vec<SupportSet>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceResult {
    pub reconstructed: DVector<f64>,
    pub matched_support: SupportSet,
    pub similarity: f64,
    pub target_in_certified_region: Option<bool>,
    pub pattern_id: Option<usize>,
    pub converged: bool,
    pub triggered: bool,
    /// Largest value the control pulse reached.
    pub peak_pulse: f64,
    /// Time under control before release.
    pub control_time: f64,
    pub x_tar: DVector<f64>,
    pub final_state: DVector<f64>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Present `p` to the memory. The first pattern binds to the current
/// attractor; later ones trigger a transition to the next pair and bind there.
#[allow(clippy::too_many_arguments)]
pub fn learn_pattern(
    model: &mut MemoryModel,
    net: &Network,
    state: &mut DVector<f64>,
    pattern_id: usize,
    p: &DVector<f64>,
    cfg: &SessionConfig,
    seed: u64,
    record: bool,
) -> Result<LearnOutcome> {
    cfg.validate()?;
    let n = net.n();
    if p.len() != model.d() {
        return Err(Error::DimensionMismatch { expected: model.d(), found: p.len() });
    }
    if p.norm() == 0.0 {
        return Err(Error::ZeroNorm);
    }
    if model.registry.len() >= n - 1 {
        return Err(Error::Capacity { stored: model.registry.len(), n });
    }
    let probe = SimilarityProbe::new(model, p);
    let s0 = probe.eval(state.as_slice());

    if model.registry.is_empty() {
        let x_star = net.attractor_closed_form(0)?.x;
        model.bind(pattern_id, p, &x_star, &SupportSet::pair(0))?;
        *state = x_star;
        return Ok(LearnOutcome {
            pattern_id,
            support: Some(SupportSet::pair(0)),
            attempts: 0,
            triggered: false,
            similarity_before: s0,
            failed_supports: vec![],
            trajectory: None,
        });
    }

    let current = model.registry.last().unwrap().support.clone();
    let i = current.pair_start().ok_or_else(|| invalid("registry", "last support is not a pair"))?;
    let target = SupportSet::pair(i + 1);
    let start = model.registry.last().unwrap().x_star.clone();
    let w_inh = build_inhibition(n, &current, cfg.learn.c_inh)?;
    let kernel = noise_kernel(n, &current, cfg.learn.kernel_decay);

    let mut failed = Vec::new();
    for attempt in 0..=cfg.retry_max {
        let mut driver = LearningDriver {
            n,
            w_inh: flat(&w_inh),
            kernel: kernel.iter().copied().collect(),
            kappa: cfg.learn.kappa,
            r_gain: cfg.learn.r_gain,
            tau_ou: cfg.learn.tau_ou,
            a: 0.0,
            trig: TriggerState::default(),
            trig_cfg: cfg.trigger.clone(),
            probe: SimilarityProbe::new(model, p),
        };
        let mut run = run_gated(net, &start, &mut driver, cfg, attempt_seed(seed, attempt), record)?;
        if run.peak_gamma < 0.5 {
            *state = run.state;
            return Ok(LearnOutcome {
                pattern_id,
                support: None,
                attempts: attempt + 1,
                triggered: false,
                similarity_before: s0,
                failed_supports: failed,
                trajectory: run.trajectory,
            });
        }
        let res = settle_recorded(net, &run.state, &cfg.integrator, run.trajectory.as_mut())?;
        if res.converged && res.support == target {
            let x_star = net
                .equilibrium_in_cell(&target)?
                .ok_or_else(|| Error::DegenerateNetwork(format!("no attractor on {target}")))?
                .x;
            model.bind(pattern_id, p, &x_star, &target)?;
            *state = x_star;
            return Ok(LearnOutcome {
                pattern_id,
                support: Some(target),
                attempts: attempt + 1,
                triggered: true,
                similarity_before: s0,
                failed_supports: failed,
                trajectory: run.trajectory,
            });
        }
        failed.push(res.support);
    }
    *state = start;
    Err(Error::TransitionFailed {
        attempts: cfg.retry_max + 1,
        last: failed.last().map(|s| s.indices().to_vec()).unwrap_or_default(),
    })
}

/// Drive the latent state toward `W_Eᵀ P_noisy` with the gated LQR
/// controller, release it, let it settle, and decode.
pub fn infer_pattern(
    model: &MemoryModel,
    net: &Network,
    p_noisy: &DVector<f64>,
    x0: &DVector<f64>,
    cfg: &SessionConfig,
    record: bool,
) -> Result<InferenceResult> {
    cfg.validate()?;
    if model.registry.is_empty() {
        return Err(invalid("model", "no patterns stored"));
    }
    if x0.len() != net.n() {
        return Err(Error::DimensionMismatch { expected: net.n(), found: x0.len() });
    }
    let n = net.n();
    let x_tar = model.encode(p_noisy)?;
    let (k, aux) = match cfg.gain_mode {
        GainMode::Algebraic => {
            let lin = crate::controller::linearize(net, &x_tar)?;
            let eye = DMatrix::<f64>::identity(n, n);
            let sol =
                care_solve(&lin.a, &(&eye * cfg.infer_r_gain), &(&eye * cfg.lqr.q_weight), &(&eye * cfg.lqr.r_weight))?;
            (flat(&sol.k), None)
        }
        GainMode::Dynamic => (
            vec![0.0; n * n],
            Some(AuxFlow {
                state: LqrAuxState::new(n),
                w: net.w().clone(),
                h: net.drive(&x_tar)?,
                cfg: cfg.lqr.clone(),
                r_gain: cfg.infer_r_gain,
                converged: false,
            }),
        ),
    };
    let mut driver = InferenceDriver {
        n,
        x_tar: x_tar.iter().copied().collect(),
        k,
        r_gain: cfg.infer_r_gain,
        trig: TriggerState::default(),
        trig_cfg: cfg.trigger.clone(),
        probe: SimilarityProbe::new(model, p_noisy),
        aux,
    };
    let mut run = run_gated(net, x0, &mut driver, cfg, cfg.integrator.rng_seed, record)?;
    let res = settle_recorded(net, &run.state, &cfg.integrator, run.trajectory.as_mut())?;
    let reconstructed = model.decode(&res.final_state)?;
    let similarity = cosine_similarity(p_noisy, &reconstructed).unwrap_or(0.0);
    let pattern_id = model.entry_for_support(&res.support).map(|e| e.pattern_id);
    Ok(InferenceResult {
        reconstructed,
        matched_support: res.support,
        similarity,
        target_in_certified_region: None,
        pattern_id,
        converged: res.converged,
        triggered: run.peak_gamma >= 0.5,
        peak_pulse: run.peak_g,
        control_time: run.elapsed,
        x_tar,
        final_state: res.final_state,
        trajectory: run.trajectory,
    })
}

/// A network, a model and the current latent state.
#[derive(Debug, Clone)]
pub struct Session {
    pub net: Network,
    pub model: MemoryModel,
    pub state: DVector<f64>,
    pub cfg: SessionConfig,
}

impl Session {
    /// Latent state starts on the first attractor of the chain.
    pub fn new(net: Network, d: usize, cfg: SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let state = net.attractor_closed_form(0)?.x;
        let model = MemoryModel::new(d, net.n());
        Ok(Session { net, model, state, cfg })
    }

    pub fn learn(&mut self, pattern_id: usize, p: &DVector<f64>, seed: u64, record: bool) -> Result<LearnOutcome> {
        learn_pattern(&mut self.model, &self.net, &mut self.state, pattern_id, p, &self.cfg, seed, record)
    }

    /// Inference from the current state; the state is carried over afterwards.
    pub fn infer(&mut self, p_noisy: &DVector<f64>, record: bool) -> Result<InferenceResult> {
        let res = infer_pattern(&self.model, &self.net, p_noisy, &self.state, &self.cfg, record)?;
        self.state = res.final_state.clone();
        Ok(res)
    }
}
