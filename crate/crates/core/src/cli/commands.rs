use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::RunConfig;
use super::{read_csv, svg, write_csv, write_json, RESULTS_SCHEMA};
use crate::cert::validate::NoiseSampler;
use crate::cert::{
    certify_lp, certify_sdp, onset_sweep, rho_grid, validate_certificate, LpCertificate, SdpReport, ValidationConfig,
};
use crate::data::{self, load_model, save_model, PatternSource};
use crate::dynamics::{settle, IntegratorConfig, Trajectory};
use crate::error::{Error, Result};
use crate::memory::{infer_pattern, LearnOutcome, MemoryModel, Session};
use crate::network::Network;
use crate::numerics::sym_eig;

/// A selected pattern sequence.
pub(crate) struct Selection {
    pub patterns: Vec<DVector<f64>>,
    /// Source image index per pattern, for IDX data.
    pub indices: Vec<Option<usize>>,
    pub labels: Vec<Option<u8>>,
    pub d: usize,
}

/// `count` patterns: synthetic, fixed IDX indices, or IDX images drawn without replacement.
pub(crate) fn select_patterns(cfg: &RunConfig, seed: u64) -> Result<Selection> {
    let count = cfg.data.count;
    match cfg.data.source {
        PatternSource::Synthetic => {
            let d = cfg.data.dim;
            let patterns = if count == 0 { Vec::new() } else { data::synthetic_patterns(count, d, seed)?.patterns };
            Ok(Selection { indices: vec![None; patterns.len()], labels: vec![None; patterns.len()], patterns, d })
        }
        PatternSource::Idx => {
            let images = cfg.data.images.as_ref().ok_or_else(|| Error::Config("data.images is not set".into()))?;
            let set = if cfg.data.raw {
                let img = data::parse_idx_images(&std::fs::read(images)?)?;
                let labels = match &cfg.data.labels {
                    Some(p) => Some(data::parse_idx_labels(&std::fs::read(p)?)?),
                    None => None,
                };
                data::PatternSet { patterns: data::images_to_patterns(&img, true)?, labels, source: PatternSource::Idx }
            } else {
                data::load_idx(images, cfg.data.labels.as_deref())?
            };
            let d = set.dim().unwrap_or(0);
            let picks: Vec<usize> = match &cfg.data.indices {
                Some(ix) => {
                    if let Some(&bad) = ix.iter().find(|&&i| i >= set.len()) {
                        return Err(Error::IndexOutOfRange { index: bad, valid: format!("0..{}", set.len()) });
                    }
                    ix.clone()
                }
                None => {
                    if count > set.len() {
                        return Err(Error::Config(format!("asked for {count} images, file has {}", set.len())));
                    }
                    let mut all: Vec<usize> = (0..set.len()).collect();
                    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                    all.truncate(count);
                    all
                }
            };
            Ok(Selection {
                patterns: picks.iter().map(|&i| set.patterns[i].clone()).collect(),
                labels: picks.iter().map(|&i| set.labels.as_ref().map(|l| l[i])).collect(),
                indices: picks.into_iter().map(Some).collect(),
                d,
            })
        }
    }
}

fn pattern_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Learn the sequence in order; stops at the first failure and returns it
/// together with what was learned up to that point.
pub(crate) fn learn_sequence(
    cfg: &RunConfig,
    sel: &Selection,
    seed: u64,
    record: bool,
) -> Result<(Session, Vec<LearnOutcome>, Option<Error>)> {
    let net = Network::new(cfg.network)?;
    let mut session = Session::new(net, sel.d, cfg.session.clone())?;
    let mut outcomes = Vec::new();
    for (k, p) in sel.patterns.iter().enumerate() {
        match session.learn(k, p, pattern_seed(seed, k), record) {
            Ok(o) => outcomes.push(o),
            Err(e) => return Ok((session, outcomes, Some(e))),
        }
    }
    Ok((session, outcomes, None))
}

const TRAJ_HEADER_TAIL: [&str; 3] = ["gamma", "g", "u_norm"];

fn trajectory_rows(segment: usize, tr: &Trajectory, rows: &mut Vec<Vec<String>>) {
    for (k, t) in tr.times.iter().enumerate() {
        let mut row = vec![segment.to_string(), format!("{t:.6}")];
        row.extend(tr.states[k].iter().map(|v| format!("{v:.9e}")));
        let a = tr.aux.get(k).cloned().unwrap_or_default();
        row.extend([a.gamma, a.g, a.u_norm].iter().map(|v| format!("{v:.6e}")));
        rows.push(row);
    }
}

fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["segment".to_string(), "t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend(TRAJ_HEADER_TAIL.iter().map(|s| s.to_string()));
    h
}

fn error_json(e: &Error) -> Value {
    json!({ "message": e.to_string(), "exit_code": e.exit_code() })
}

fn model_path(cfg: &RunConfig) -> PathBuf {
    cfg.infer.model.clone().unwrap_or_else(|| cfg.out.join("model.tlnm"))
}

pub fn learn(cfg: &RunConfig) -> Result<()> {
    let sel = select_patterns(cfg, cfg.seed)?;
    let (session, outcomes, err) = learn_sequence(cfg, &sel, cfg.seed, true)?;
    save_model(&cfg.out.join("model.tlnm"), &session.model, &cfg.network)?;

    let n = cfg.network.n;
    let mut rows = Vec::new();
    for o in &outcomes {
        if let Some(tr) = &o.trajectory {
            trajectory_rows(o.pattern_id, tr, &mut rows);
        }
    }
    let header = trajectory_header(n);
    write_csv(&cfg.out.join("learn_trajectory.csv"), &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;

    let patterns: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "pattern_id": o.pattern_id,
                "image_index": sel.indices[o.pattern_id],
                "label": sel.labels[o.pattern_id],
                "support": o.support.as_ref().map(|s| s.one_based()),
                "attempts": o.attempts,
                "retries": o.attempts.saturating_sub(1),
                "triggered": o.triggered,
                "similarity_before": o.similarity_before,
                "failed_supports": o.failed_supports.iter().map(|s| s.one_based()).collect::<Vec<_>>(),
            })
        })
        .collect();
    write_json(
        &cfg.out.join("results.json"),
        &json!({
            "schema": RESULTS_SCHEMA,
            "command": "learn",
            "network": cfg.network,
            "d": sel.d,
            "requested": sel.patterns.len(),
            "stored": session.model.registry.len(),
            "identity_residual": session.model.identity_residual(),
            "patterns": patterns,
            "error": err.as_ref().map(error_json),
        }),
    )?;
    err.map_or(Ok(()), Err)
}

fn load_net(cfg: &RunConfig) -> Result<(MemoryModel, Network)> {
    let path = model_path(cfg);
    let (model, params) = load_model(&path)?;
    Ok((model, Network::new(params)?))
}

fn mix(seed: u64, a: usize, b: usize, c: usize) -> u64 {
    let mut h = seed ^ 0x51_7CC1_B727_220A;
    for v in [a, b, c] {
        h = (h ^ v as u64).wrapping_mul(0x1000_0000_01B3).rotate_left(29);
    }
    h
}

pub fn infer(cfg: &RunConfig) -> Result<()> {
    let (model, net) = load_net(cfg)?;
    let inputs: Vec<(DVector<f64>, Option<usize>)> = match &cfg.infer.inputs {
        Some(p) => data::load_idx(p, None)?.patterns.into_iter().map(|v| (v, None)).collect(),
        None => model.registry.iter().map(|e| (e.pattern.clone(), Some(e.pattern_id))).collect(),
    };
    let sampler = NoiseSampler::new(&model, cfg.infer.noise)?;
    let n = net.n();
    let mut state = net.attractor_closed_form(0)?.x;
    let mut rows = Vec::new();
    let mut per_radius: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut traj_rows = Vec::new();
    let mut first_err: Option<Error> = None;
    let mut failures = 0usize;
    let mut total = 0usize;
    for (i, (p, expected)) in inputs.iter().enumerate() {
        for (ri, &radius) in cfg.infer.radii.iter().enumerate() {
            for trial in 0..cfg.infer.trials {
                total += 1;
                let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, i, ri, trial));
                let base = vec![
                    i.to_string(),
                    expected.map(|e| e.to_string()).unwrap_or_default(),
                    format!("{radius}"),
                    trial.to_string(),
                ];
                if p.len() != model.d() {
                    let e = Error::DimensionMismatch { expected: model.d(), found: p.len() };
                    let mut row = base;
                    row.extend(std::iter::repeat_n(String::new(), 8));
                    row.push(e.to_string());
                    rows.push(row);
                    failures += 1;
                    first_err.get_or_insert(e);
                    continue;
                }
                let noisy = p + sampler.sample(radius, &mut rng);
                let x0 = if cfg.infer.cold_start { DVector::zeros(n) } else { state.clone() };
                let record = traj_rows.is_empty();
                match infer_pattern(&model, &net, &noisy, &x0, &cfg.session, record) {
                    Ok(res) => {
                        if !cfg.infer.cold_start {
                            state = res.final_state.clone();
                        }
                        if let Some(tr) = &res.trajectory {
                            trajectory_rows(i, tr, &mut traj_rows);
                        }
                        let correct = expected.map(|e| res.pattern_id == Some(e));
                        if let Some(c) = correct {
                            let slot = per_radius.entry(ri).or_insert((0, 0));
                            slot.0 += 1;
                            slot.1 += c as usize;
                        }
                        let clean = crate::memory::cosine_similarity(p, &res.reconstructed).unwrap_or(0.0);
                        let support: Vec<String> =
                            res.matched_support.one_based().iter().map(|v| v.to_string()).collect();
                        let mut row = base;
                        row.extend([
                            support.join(" "),
                            res.pattern_id.map(|v| v.to_string()).unwrap_or_default(),
                            correct.map(|c| c.to_string()).unwrap_or_default(),
                            format!("{:.9}", res.similarity),
                            format!("{clean:.9}"),
                            res.converged.to_string(),
                            res.triggered.to_string(),
                            format!("{:.4}", res.control_time),
                            String::new(),
                        ]);
                        rows.push(row);
                    }
                    Err(e) => {
                        let mut row = base;
                        row.extend(std::iter::repeat_n(String::new(), 8));
                        row.push(e.to_string());
                        rows.push(row);
                        failures += 1;
                        first_err.get_or_insert(e);
                    }
                }
            }
        }
    }
    write_csv(
        &cfg.out.join("infer.csv"),
        &[
            "input",
            "expected_pattern",
            "radius",
            "trial",
            "matched_support",
            "pattern_id",
            "correct",
            "similarity",
            "clean_similarity",
            "converged",
            "triggered",
            "control_time",
            "error",
        ],
        &rows,
    )?;
    let acc_rows: Vec<Vec<String>> = per_radius
        .iter()
        .map(|(&ri, &(t, c))| {
            vec![
                format!("{}", cfg.infer.radii[ri]),
                t.to_string(),
                c.to_string(),
                format!("{:.6}", c as f64 / t as f64),
            ]
        })
        .collect();
    write_csv(&cfg.out.join("accuracy_vs_radius.csv"), &["radius", "trials", "correct", "accuracy"], &acc_rows)?;
    let header = trajectory_header(n);
    write_csv(
        &cfg.out.join("infer_trajectory.csv"),
        &header.iter().map(String::as_str).collect::<Vec<_>>(),
        &traj_rows,
    )?;
    write_json(
        &cfg.out.join("results.json"),
        &json!({
            "schema": RESULTS_SCHEMA,
            "command": "infer",
            "model": model_path(cfg),
            "network": net.params(),
            "inputs": inputs.len(),
            "runs": total,
            "failed_runs": failures,
            "accuracy_vs_radius": per_radius.iter().map(|(&ri, &(t, c))| json!({"radius": cfg.infer.radii[ri], "trials": t, "correct": c})).collect::<Vec<_>>(),
        }),
    )?;
    match first_err {
        Some(e) if failures == total => Err(e),
        _ => Ok(()),
    }
}

/// Row-major matrix with explicit dimensions.
fn matrix_json(m: &DMatrix<f64>) -> Value {
    let data: Vec<f64> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<_>>())
}

pub(crate) struct PatternCert {
    pub pattern_id: usize,
    pub lp: Option<std::result::Result<LpCertificate, Error>>,
    pub sdp: Option<std::result::Result<SdpReport, Error>>,
}

impl PatternCert {
    pub fn lp_r(&self) -> f64 {
        match &self.lp {
            Some(Ok(c)) => c.r,
            _ => 0.0,
        }
    }

    pub fn sdp_r(&self) -> f64 {
        match &self.sdp {
            Some(Ok(c)) => c.best.r,
            _ => 0.0,
        }
    }
}

/// Numerical failures abort; domain failures become `r = 0` with a reason.
fn keep_domain<T>(r: Result<T>) -> Result<std::result::Result<T, Error>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e) if e.exit_code() == 3 => Err(e),
        Err(e) => Ok(Err(e)),
    }
}

pub(crate) fn certify_model(cfg: &RunConfig, net: &Network, model: &MemoryModel) -> Result<Vec<PatternCert>> {
    let method = cfg.certify.method;
    let mut out = Vec::new();
    for e in &model.registry {
        let lp =
            if method.lp() { Some(keep_domain(certify_lp(net, model, e.pattern_id, &cfg.certify.lp))?) } else { None };
        let sdp = if method.sdp() {
            Some(keep_domain(certify_sdp(net, &e.x_star, &model.w_e, &cfg.certify.sdp))?)
        } else {
            None
        };
        out.push(PatternCert { pattern_id: e.pattern_id, lp, sdp });
    }
    Ok(out)
}

fn lp_json(c: &std::result::Result<LpCertificate, Error>) -> Value {
    match c {
        Ok(c) => json!({
            "r": c.r,
            "combine": c.combine,
            "single_sided": c.single_sided,
            "attractor_support": [c.attractor + 1, c.attractor + 2],
            "sides": c.sides.iter().map(|s| json!({
                "side": s.side, "center": s.center + 1, "alpha": s.alpha, "beta": s.beta,
                "r": s.r, "raw_r": s.raw_r, "target_inside": s.target_inside,
            })).collect::<Vec<_>>(),
            "reason": Value::Null,
        }),
        Err(e) => json!({ "r": 0.0, "reason": e.to_string() }),
    }
}

fn sdp_json(c: &std::result::Result<SdpReport, Error>, tol: f64) -> Value {
    match c {
        Ok(rep) => {
            let b = &rep.best;
            json!({
                "r": b.r,
                "alpha": b.alpha,
                "t": b.t,
                "margins": b.margins,
                "verified": b.margins.iter().all(|m| *m <= -tol),
                "p_lyap": matrix_json(&b.p_lyap),
                "lambda": vec_json(&b.lambda),
                "e": matrix_json(&b.e),
                "sector": { "v_lo": vec_json(&b.sector.v_lo), "v_hi": vec_json(&b.sector.v_hi),
                            "s_alpha": vec_json(&b.sector.s_alpha), "s_beta": vec_json(&b.sector.s_beta) },
                "sweep": rep.sweep.iter().map(|(a, r)| json!({"alpha": a, "r": r})).collect::<Vec<_>>(),
                "reason": Value::Null,
            })
        }
        Err(e) => json!({ "r": 0.0, "reason": e.to_string() }),
    }
}

fn reason<T>(c: &Option<std::result::Result<T, Error>>) -> String {
    match c {
        Some(Err(e)) => e.to_string(),
        _ => String::new(),
    }
}

pub fn certify(cfg: &RunConfig) -> Result<()> {
    let (model, net) = load_net(cfg)?;
    let certs = certify_model(cfg, &net, &model)?;
    let vcfg = ValidationConfig { trials: cfg.certify.validate_trials, seed: cfg.seed, ..ValidationConfig::default() };
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for c in &certs {
        let support = model.entry(c.pattern_id)?.support.one_based();
        let mut validation = serde_json::Map::new();
        if cfg.certify.validate_trials > 0 {
            for (name, r, present) in [("lp", c.lp_r(), c.lp.is_some()), ("sdp", c.sdp_r(), c.sdp.is_some())] {
                if present && r > 0.0 {
                    let rep =
                        validate_certificate(&net, &model, c.pattern_id, r, cfg.certify.rho, &cfg.session, &vcfg)?;
                    validation.insert(name.into(), serde_json::to_value(&rep)?);
                }
            }
        }
        rows.push(vec![
            c.pattern_id.to_string(),
            support.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            c.lp.as_ref().map(|_| format!("{:.9e}", c.lp_r())).unwrap_or_default(),
            match &c.lp {
                Some(Ok(l)) => l.single_sided.to_string(),
                _ => String::new(),
            },
            reason(&c.lp),
            c.sdp.as_ref().map(|_| format!("{:.9e}", c.sdp_r())).unwrap_or_default(),
            match &c.sdp {
                Some(Ok(s)) => format!("{:.6e}", s.best.alpha),
                _ => String::new(),
            },
            reason(&c.sdp),
        ]);
        entries.push(json!({
            "pattern_id": c.pattern_id,
            "support": support,
            "lp": c.lp.as_ref().map(lp_json),
            "sdp": c.sdp.as_ref().map(|s| sdp_json(s, cfg.certify.sdp.margin_tol)),
            "validation": validation,
        }));
    }
    write_csv(
        &cfg.out.join("certificates.csv"),
        &["pattern_id", "support", "lp_r", "lp_single_sided", "lp_reason", "sdp_r", "sdp_alpha", "sdp_reason"],
        &rows,
    )?;
    let med = |v: Vec<f64>| median(&v);
    let lp_med = cfg.certify.method.lp().then(|| med(certs.iter().map(PatternCert::lp_r).collect()));
    let sdp_med = cfg.certify.method.sdp().then(|| med(certs.iter().map(PatternCert::sdp_r).collect()));
    write_json(
        &cfg.out.join("certificates.json"),
        &json!({
            "schema": RESULTS_SCHEMA,
            "command": "certify",
            "network": net.params(),
            "method": cfg.certify.method,
            "fi_region": crate::cert::fi_parameters(net.params())?,
            "patterns": entries,
            "median_lp_r": lp_med.flatten(),
            "median_sdp_r": sdp_med.flatten(),
        }),
    )?;
    Ok(())
}

pub(crate) fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) })
}

/// One row per stored pattern of one sequence.
#[derive(Debug, Clone)]
pub(crate) struct BenchRow {
    pub sequence: usize,
    pub pattern_id: usize,
    pub image_index: Option<usize>,
    pub lp_r: f64,
    pub sdp_r: f64,
    pub onset_rho: Option<f64>,
    pub error: String,
}

pub(crate) fn benchmark_sequence(cfg: &RunConfig, s: usize) -> Result<Vec<BenchRow>> {
    let seed = cfg.seed.wrapping_add(s as u64);
    let sel = select_patterns(cfg, seed)?;
    let (session, _, err) = learn_sequence(cfg, &sel, seed, false)?;
    if let Some(e) = err {
        if e.exit_code() == 3 {
            return Err(e);
        }
        return Ok(vec![BenchRow {
            sequence: s,
            pattern_id: session.model.registry.len(),
            image_index: None,
            lp_r: 0.0,
            sdp_r: 0.0,
            onset_rho: None,
            error: e.to_string(),
        }]);
    }
    let certs = certify_model(cfg, &session.net, &session.model)?;
    let b = &cfg.benchmark;
    let grid = rho_grid(b.rho_lo, b.rho_hi, b.rho_step);
    let vcfg = ValidationConfig { trials: b.onset_trials, seed, ..ValidationConfig::default() };
    let mut rows = Vec::new();
    for c in certs {
        let onset_rho = if b.onset && c.lp_r() > 0.0 {
            onset_sweep(&session.net, &session.model, c.pattern_id, c.lp_r(), &grid, &cfg.session, &vcfg)?.onset_rho
        } else {
            None
        };
        rows.push(BenchRow {
            sequence: s,
            pattern_id: c.pattern_id,
            image_index: sel.indices[c.pattern_id],
            lp_r: c.lp_r(),
            sdp_r: c.sdp_r(),
            onset_rho,
            error: [reason(&c.lp), reason(&c.sdp)].into_iter().filter(|r| !r.is_empty()).collect::<Vec<_>>().join("; "),
        });
    }
    Ok(rows)
}

pub fn benchmark(cfg: &RunConfig) -> Result<()> {
    let b = &cfg.benchmark;
    let workers =
        if b.workers == 0 { std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1) } else { b.workers }
            .clamp(1, b.sequences.max(1));
    let results: Vec<Result<Vec<BenchRow>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..b.sequences).step_by(workers).map(|s| benchmark_sequence(cfg, s)).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("benchmark worker panicked")).collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| (r.sequence, r.pattern_id));
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.sequence.to_string(),
                r.pattern_id.to_string(),
                r.image_index.map(|v| v.to_string()).unwrap_or_default(),
                format!("{:.9e}", r.lp_r),
                format!("{:.9e}", r.sdp_r),
                r.onset_rho.map(|v| format!("{v:.4}")).unwrap_or_default(),
                r.error.clone(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out.join("benchmark.csv"),
        &["sequence", "pattern_id", "image_index", "lp_r", "sdp_r", "onset_ratio", "error"],
        &csv_rows,
    )?;
    let ok: Vec<&BenchRow> = rows.iter().filter(|r| r.error.is_empty()).collect();
    let lp_med = median(&ok.iter().map(|r| r.lp_r).collect::<Vec<_>>());
    let sdp_med = median(&ok.iter().map(|r| r.sdp_r).collect::<Vec<_>>());
    let ratios: Vec<f64> = ok.iter().filter_map(|r| r.onset_rho).collect();
    write_json(
        &cfg.out.join("results.json"),
        &json!({
            "schema": RESULTS_SCHEMA,
            "command": "benchmark",
            "network": cfg.network,
            "sequences": b.sequences,
            "patterns": ok.len(),
            "failed_rows": rows.len() - ok.len(),
            "median_lp_r": lp_med,
            "median_sdp_r": sdp_med,
            "lp_exceeds_sdp": lp_med.zip(sdp_med).map(|(l, s)| l > s),
            "onset_ratio_median": median(&ratios),
            "onset_ratio_min": ratios.iter().copied().reduce(f64::min),
            "onset_ratio_max": ratios.iter().copied().reduce(f64::max),
            "patterns_without_onset": if b.onset { ok.len() - ratios.len() } else { 0 },
        }),
    )?;
    Ok(())
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

fn column(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

/// Top two principal directions of the attractor set, each signed so that
/// it leans toward the end of the chain.
fn attractor_plane(net: &Network) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let atts: Vec<DVector<f64>> = net.attractors().into_iter().map(|e| e.x).collect();
    let n = net.n();
    let mean = atts.iter().fold(DVector::zeros(n), |acc, x| acc + x) / atts.len() as f64;
    let mut cov = DMatrix::zeros(n, n);
    for x in &atts {
        let c = x - &mean;
        cov += &c * c.transpose();
    }
    let (_, vecs) = sym_eig(&crate::numerics::symmetrize(&cov))?;
    // chain-position weights break the sign tie of mirror-symmetric vectors
    let ramp = DVector::from_fn(n, |i, _| (i + 1) as f64);
    let fix = |v: DVector<f64>| {
        let key = v.dot(&ramp);
        let key = if key.abs() > 1e-9 { key } else { v.iter().copied().find(|x| x.abs() > 1e-9).unwrap_or(1.0) };
        if key < 0.0 {
            -v
        } else {
            v
        }
    };
    Ok((mean, fix(vecs.column(n - 1).into_owned()), fix(vecs.column(n - 2).into_owned())))
}

pub fn plot(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.plot.results.clone().unwrap_or_else(|| cfg.out.clone());
    let mut written = Vec::new();
    let mut missing = Vec::new();
    let mut meta = serde_json::Map::new();

    let traj_path = ["infer_trajectory.csv", "learn_trajectory.csv"]
        .iter()
        .map(|f| dir.join(f))
        .find(|p| read_csv(p).map(|(_, rows)| !rows.is_empty()).unwrap_or(false));
    match &traj_path {
        Some(p) => {
            let (header, rows) = read_csv(p)?;
            let n = header.iter().filter(|h| h.starts_with('x')).count();
            let t_col = column(&header, "t").ok_or_else(|| Error::Config("trajectory has no t column".into()))?;
            let seg_col = column(&header, "segment").unwrap_or(0);
            // times restart in each segment, so plot against a running clock
            let mut clock = Vec::with_capacity(rows.len());
            let mut offset = 0.0;
            let mut last: Option<(String, f64)> = None;
            for r in &rows {
                let t = parse_f64(&r[t_col]).unwrap_or(0.0);
                if let Some((seg, lt)) = &last {
                    if *seg != r[seg_col] || t < *lt {
                        offset = clock.last().copied().unwrap_or(0.0);
                    }
                }
                clock.push(offset + t);
                last = Some((r[seg_col].clone(), t));
            }
            let series: Vec<(String, Vec<(f64, f64)>)> = (0..n)
                .map(|i| {
                    let c = column(&header, &format!("x{}", i + 1)).expect("state column");
                    (
                        format!("x{}", i + 1),
                        rows.iter().zip(&clock).map(|(r, t)| (*t, parse_f64(&r[c]).unwrap_or(f64::NAN))).collect(),
                    )
                })
                .collect();
            std::fs::write(cfg.out.join("trajectory.svg"), svg::line_chart("Firing rates", "t", "x", &series))?;
            written.push("trajectory.svg");

            match load_model(&dir.join("model.tlnm")).or_else(|_| load_model(&model_path(cfg))) {
                Ok((_, params)) => {
                    let net = Network::new(params)?;
                    let (mean, e1, e2) = attractor_plane(&net)?;
                    let proj = |x: &DVector<f64>| {
                        let c = x - &mean;
                        (c.dot(&e1), c.dot(&e2))
                    };
                    let states: Vec<DVector<f64>> = rows
                        .iter()
                        .map(|r| {
                            DVector::from_iterator(
                                n,
                                (0..n).map(|i| {
                                    parse_f64(&r[column(&header, &format!("x{}", i + 1)).expect("state column")])
                                        .unwrap_or(0.0)
                                }),
                            )
                        })
                        .collect();
                    let traj: Vec<(f64, f64)> = states.iter().map(proj).collect();
                    let atts: Vec<(f64, f64)> = net.attractors().iter().map(|e| proj(&e.x)).collect();
                    let pts = traj.iter().chain(&atts);
                    let (mut x0, mut x1, mut y0, mut y1) =
                        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
                    for (a, b) in pts {
                        x0 = x0.min(*a);
                        x1 = x1.max(*a);
                        y0 = y0.min(*b);
                        y1 = y1.max(*b);
                    }
                    let (px, py) = (0.15 * (x1 - x0).max(1e-3), 0.15 * (y1 - y0).max(1e-3));
                    let extent = (x0 - px, x1 + px, y0 - py, y1 + py);
                    let basins = basin_grid(&net, &mean, &e1, &e2, extent, cfg.plot.grid, cfg.plot.grid_dt)?;
                    std::fs::write(
                        cfg.out.join("projection.svg"),
                        svg::projection_plot("Trajectory over attractor basins", extent, &basins, &traj, &atts),
                    )?;
                    written.push("projection.svg");
                    meta.insert(
                        "projection".into(),
                        json!({
                            "origin": vec_json(&mean), "pc1": vec_json(&e1), "pc2": vec_json(&e2),
                            "extent": [extent.0, extent.1, extent.2, extent.3], "grid": cfg.plot.grid,
                            "basis": "top two principal directions of the attractor set",
                        }),
                    );
                }
                Err(_) => missing.push("model.tlnm".to_string()),
            }
        }
        None => missing.push("infer_trajectory.csv or learn_trajectory.csv".to_string()),
    }

    match read_csv(&dir.join("accuracy_vs_radius.csv")) {
        Ok((header, rows)) if !rows.is_empty() => {
            let (rc, ac) = (column(&header, "radius").unwrap_or(0), column(&header, "accuracy").unwrap_or(3));
            let pts: Vec<(f64, f64)> =
                rows.iter().filter_map(|r| Some((parse_f64(&r[rc])?, parse_f64(&r[ac])?))).collect();
            std::fs::write(
                cfg.out.join("accuracy.svg"),
                svg::line_chart("Retrieval accuracy", "noise radius", "accuracy", &[("accuracy".into(), pts)]),
            )?;
            written.push("accuracy.svg");
        }
        _ => missing.push("accuracy_vs_radius.csv".to_string()),
    }

    let radii = ["benchmark.csv", "certificates.csv"].iter().find_map(|f| {
        let (header, rows) = read_csv(&dir.join(f)).ok()?;
        let (lc, sc) = (column(&header, "lp_r")?, column(&header, "sdp_r")?);
        let lp: Vec<f64> = rows.iter().filter_map(|r| parse_f64(&r[lc])).collect();
        let sdp: Vec<f64> = rows.iter().filter_map(|r| parse_f64(&r[sc])).collect();
        (!lp.is_empty() || !sdp.is_empty()).then_some((lp, sdp))
    });
    match radii {
        Some((lp, sdp)) => {
            std::fs::write(
                cfg.out.join("radii.svg"),
                svg::box_plot("Certified noise radius", "radius", &[("LP".into(), lp), ("SDP".into(), sdp)]),
            )?;
            written.push("radii.svg");
        }
        None => missing.push("benchmark.csv or certificates.csv".to_string()),
    }

    meta.insert("written".into(), json!(written));
    meta.insert("missing".into(), json!(missing));
    write_json(&cfg.out.join("plot.json"), &Value::Object(meta))?;
    if written.is_empty() {
        return Err(Error::Config(format!("nothing to plot in {}; missing: {}", dir.display(), missing.join(", "))));
    }
    Ok(())
}

/// Attractor index reached from each point of a `res × res` grid in the plane.
fn basin_grid(
    net: &Network,
    mean: &DVector<f64>,
    e1: &DVector<f64>,
    e2: &DVector<f64>,
    extent: (f64, f64, f64, f64),
    res: usize,
    dt: f64,
) -> Result<Vec<Vec<Option<usize>>>> {
    let icfg = IntegratorConfig { dt, t_max: 400.0, ..IntegratorConfig::default() };
    let (x0, x1, y0, y1) = extent;
    let mut out = Vec::with_capacity(res);
    for i in 0..res {
        let b = y0 + (y1 - y0) * (i as f64 + 0.5) / res as f64;
        let mut row = Vec::with_capacity(res);
        for j in 0..res {
            let a = x0 + (x1 - x0) * (j as f64 + 0.5) / res as f64;
            let x = mean + e1 * a + e2 * b;
            let s = settle(net, &x, &icfg)?;
            row.push(if s.converged { s.support.pair_start() } else { None });
        }
        out.push(row);
    }
    Ok(out)
}
