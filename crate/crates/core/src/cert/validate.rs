//! Empirical checks of certified radii by noisy retrieval.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sphere_sample, subspace_sphere_sample};
use crate::error::{invalid, Result};
use crate::memory::{infer_pattern, MemoryModel, SessionConfig};
use crate::network::Network;
use crate::numerics::compact_svd;

/// Where the noise lives. Components orthogonal to the encoder range do not
/// move the target, so `EncoderRange` is the harder test at a given norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpace {
    Ambient,
    EncoderRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub trials: usize,
    pub noise: NoiseSpace,
    /// Inference starts from the zero state instead of the pattern's attractor.
    pub cold_start: bool,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { trials: 1000, noise: NoiseSpace::EncoderRange, cold_start: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pattern_id: usize,
    pub radius: f64,
    pub trials: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub min_similarity: f64,
    /// Supports reached by the failed trials, 1-based.
    pub failures: Vec<Vec<usize>>,
}

/// Noise sampler fixed for one model.
pub struct NoiseSampler {
    d: usize,
    basis: Option<DMatrix<f64>>,
}

impl NoiseSampler {
    pub fn new(model: &MemoryModel, space: NoiseSpace) -> Result<Self> {
        let basis = match space {
            NoiseSpace::Ambient => None,
            NoiseSpace::EncoderRange => Some(compact_svd(&model.w_e)?.u),
        };
        Ok(NoiseSampler { d: model.d(), basis })
    }

    pub fn sample(&self, radius: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
        match &self.basis {
            Some(b) => subspace_sphere_sample(b, radius, rng),
            None => sphere_sample(self.d, radius, rng),
        }
    }
}

/// Retrieve `trials` corrupted copies of a stored pattern at noise norm `radius`.
/// A trial counts as correct when the settled support is the pattern's own.
pub fn validate_radius(
    net: &Network,
    model: &MemoryModel,
    pattern_id: usize,
    radius: f64,
    session: &SessionConfig,
    cfg: &ValidationConfig,
) -> Result<ValidationReport> {
    if !(radius >= 0.0) {
        return Err(invalid("radius", "must be nonnegative"));
    }
    let entry = model.entry(pattern_id)?;
    let sampler = NoiseSampler::new(model, cfg.noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (pattern_id as u64).rotate_left(32));
    let x0 = if cfg.cold_start { DVector::zeros(net.n()) } else { entry.x_star.clone() };
    let mut correct = 0;
    let mut min_similarity = f64::INFINITY;
    let mut failures = Vec::new();
    for _ in 0..cfg.trials {
        let noisy = &entry.pattern + sampler.sample(radius, &mut rng);
        let res = infer_pattern(model, net, &noisy, &x0, session, false)?;
        min_similarity = min_similarity.min(res.similarity);
        if res.matched_support == entry.support {
            correct += 1;
        } else {
            failures.push(res.matched_support.one_based());
        }
    }
    Ok(ValidationReport {
        pattern_id,
        radius,
        trials: cfg.trials,
        correct,
        accuracy: if cfg.trials == 0 { 1.0 } else { correct as f64 / cfg.trials as f64 },
        min_similarity,
        failures,
    })
}

/// Soundness check of a certified radius at `rho · r`.
pub fn validate_certificate(
    net: &Network,
    model: &MemoryModel,
    pattern_id: usize,
    r: f64,
    rho: f64,
    session: &SessionConfig,
    cfg: &ValidationConfig,
) -> Result<ValidationReport> {
    if !(rho >= 0.0) {
        return Err(invalid("rho", "must be nonnegative"));
    }
    validate_radius(net, model, pattern_id, rho * r, session, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetSweep {
    pub pattern_id: usize,
    pub r: f64,
    /// `(ρ, accuracy)` up to and including the first failure.
    pub curve: Vec<(f64, f64)>,
    /// First `ρ` with a wrong retrieval, if any.
    pub onset_rho: Option<f64>,
}

impl OnsetSweep {
    pub fn onset_radius(&self) -> Option<f64> {
        self.onset_rho.map(|rho| rho * self.r)
    }
}

/// Step `ρ` over `rhos` until a trial fails.
pub fn onset_sweep(
    net: &Network,
    model: &MemoryModel,
    pattern_id: usize,
    r: f64,
    rhos: &[f64],
    session: &SessionConfig,
    cfg: &ValidationConfig,
) -> Result<OnsetSweep> {
    let mut curve = Vec::new();
    let mut onset_rho = None;
    for &rho in rhos {
        let rep = validate_certificate(net, model, pattern_id, r, rho, session, cfg)?;
        curve.push((rho, rep.accuracy));
        if rep.correct < rep.trials {
            onset_rho = Some(rho);
            break;
        }
    }
    Ok(OnsetSweep { pattern_id, r, curve, onset_rho })
}

/// `1.0, 1.0+step, …, hi`.
pub fn rho_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let k = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=k).map(|j| lo + j as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{GainMode, Session};
    use crate::network::{CstlnParams, Network};

    fn trained() -> Session {
        let net = Network::new(CstlnParams::default()).unwrap();
        let cfg = SessionConfig { gain_mode: GainMode::Algebraic, ..SessionConfig::default() };
        let mut s = Session::new(net, 12, cfg).unwrap();
        let pats = crate::data::synthetic_patterns(3, 12, 5).unwrap();
        for (k, p) in pats.patterns.iter().enumerate() {
            s.learn(k, p, 11 + k as u64, false).unwrap();
        }
        s
    }

    #[test]
    fn zero_radius_is_perfect() {
        let s = trained();
        let cfg = ValidationConfig { trials: 3, ..ValidationConfig::default() };
        for id in 0..3 {
            let rep = validate_certificate(&s.net, &s.model, id, 0.4, 0.0, &s.cfg, &cfg).unwrap();
            assert_eq!(rep.accuracy, 1.0);
        }
    }

    #[test]
    fn range_noise_stays_in_range() {
        let s = trained();
        let sampler = NoiseSampler::new(&s.model, NoiseSpace::EncoderRange).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = compact_svd(&s.model.w_e).unwrap().u;
        for _ in 0..10 {
            let eta = sampler.sample(0.7, &mut rng);
            assert!((eta.norm() - 0.7).abs() < 1e-12);
            assert!((&u * u.tr_mul(&eta) - &eta).norm() < 1e-12);
        }
    }

    #[test]
    fn grid_is_inclusive() {
        let g = rho_grid(1.0, 4.0, 0.25);
        assert_eq!(g.len(), 13);
        assert!((g[12] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn huge_noise_fails_somewhere() {
        let s = trained();
        let cfg = ValidationConfig { trials: 5, ..ValidationConfig::default() };
        let sweep = onset_sweep(&s.net, &s.model, 1, 1.0, &[0.0, 50.0], &s.cfg, &cfg).unwrap();
        assert_eq!(sweep.onset_rho, Some(50.0));
        assert_eq!(sweep.curve[0].1, 1.0);
    }
}
