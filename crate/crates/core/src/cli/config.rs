use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cert::{LpOptions, NoiseSpace, SdpSearch};
use crate::data::PatternSource;
use crate::error::{Error, Result};
use crate::memory::SessionConfig;
use crate::network::CstlnParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lp,
    Sdp,
    Both,
}

impl Method {
    pub fn lp(self) -> bool {
        matches!(self, Method::Lp | Method::Both)
    }

    pub fn sdp(self) -> bool {
        matches!(self, Method::Sdp | Method::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: PatternSource,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Patterns per sequence.
    pub count: usize,
    /// Pattern dimension for synthetic data.
    pub dim: usize,
    /// Fixed image indices; otherwise drawn without replacement from the seed.
    pub indices: Option<Vec<usize>>,
    /// Skip unit normalization of images.
    pub raw: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: PatternSource::Synthetic,
            images: None,
            labels: None,
            count: 6,
            dim: 784,
            indices: None,
            raw: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferConfig {
    /// Defaults to `<out>/model.tlnm`.
    pub model: Option<PathBuf>,
    /// IDX images to present; the stored patterns when absent.
    pub inputs: Option<PathBuf>,
    pub radii: Vec<f64>,
    pub trials: usize,
    pub noise: NoiseSpace,
    pub cold_start: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            model: None,
            inputs: None,
            radii: vec![0.0],
            trials: 1,
            noise: NoiseSpace::EncoderRange,
            cold_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyConfig {
    pub method: Method,
    pub lp: LpOptions,
    pub sdp: SdpSearch,
    /// Noisy retrievals per pattern at `rho` times each certified radius; 0 skips.
    pub validate_trials: usize,
    pub rho: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            method: Method::Both,
            lp: LpOptions::default(),
            sdp: SdpSearch::default(),
            validate_trials: 0,
            rho: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub sequences: usize,
    /// Also sweep the noise level upward from the LP radius until a retrieval fails.
    pub onset: bool,
    pub onset_trials: usize,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub rho_step: f64,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            sequences: 20,
            onset: false,
            onset_trials: 20,
            rho_lo: 1.0,
            rho_hi: 4.0,
            rho_step: 0.1,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotConfig {
    /// Directory holding the results to plot; defaults to `out`.
    pub results: Option<PathBuf>,
    /// Side length of the basin grid behind the projected trajectory.
    pub grid: usize,
    /// Step used to settle the basin grid.
    pub grid_dt: f64,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig { results: None, grid: 200, grid_dt: 0.05 }
    }
}

/// Everything a run depends on besides the data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub network: CstlnParams,
    pub session: SessionConfig,
    pub data: DataConfig,
    pub infer: InferConfig,
    pub certify: CertifyConfig,
    pub benchmark: BenchmarkConfig,
    pub plot: PlotConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("run"),
            network: CstlnParams::default(),
            session: SessionConfig::default(),
            data: DataConfig::default(),
            infer: InferConfig::default(),
            certify: CertifyConfig::default(),
            benchmark: BenchmarkConfig::default(),
            plot: PlotConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.session.validate()?;
        if self.infer.radii.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::Config("infer.radii must be nonnegative".into()));
        }
        if !(self.certify.rho >= 0.0) {
            return Err(Error::Config("certify.rho must be nonnegative".into()));
        }
        let b = &self.benchmark;
        if !(b.rho_step > 0.0 && b.rho_hi >= b.rho_lo) {
            return Err(Error::Config("benchmark rho grid is empty".into()));
        }
        if self.data.source == PatternSource::Idx && self.data.images.is_none() {
            return Err(Error::Config("data.source = \"idx\" needs data.images".into()));
        }
        Ok(())
    }
}
