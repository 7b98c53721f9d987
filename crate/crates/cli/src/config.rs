//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use fuzzstoch::microdata::{PhaseModuli, RADIUS_MAX, RADIUS_MIN};
use fuzzstoch::solver::ProblemSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub microstructure: MicroConfig,
    pub moduli: PhaseModuli,
    pub extract: ExtractConfig,
    pub bootstrap: BootstrapConfig,
    pub stats: StatsConfig,
    pub fuzzify: FuzzifyConfig,
    pub field: FieldConfig,
    pub rve: RveConfig,
    pub problem: ProblemSpec,
    pub validation: ValidationConfig,
    pub global_local: GlobalLocalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MicroConfig {
    pub width_um: f64,
    pub height_um: f64,
    pub volume_fraction: f64,
    pub radius_min_um: f64,
    pub radius_max_um: f64,
    pub pixel_um: f64,
}

impl Default for MicroConfig {
    fn default() -> Self {
        Self { width_um: 1700.0, height_um: 500.0, volume_fraction: 0.63, radius_min_um: RADIUS_MIN, radius_max_um: RADIUS_MAX, pixel_um: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    pub strip_um: f64,
    pub element_um: f64,
    /// Binary map to read instead of the synthetic one.
    pub image: Option<PathBuf>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { strip_um: 10.0, element_um: 10.0, image: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub samples: usize,
    pub length_um: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { samples: 100, length_um: 1e4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub max_lag_um: f64,
    pub homogenization_windows_um: Vec<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { max_lag_um: 200.0, homogenization_windows_um: vec![100.0, 500.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuzzifyConfig {
    pub n_bins: usize,
    pub table_alphas: Vec<f64>,
}

impl Default for FuzzifyConfig {
    fn default() -> Self {
        Self { n_bins: 10, table_alphas: (0..=10).map(|k| k as f64 / 10.0).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub ell_um: f64,
    pub ell_sweep_um: Vec<f64>,
    pub preserved_std_fraction: f64,
    pub project_infeasible: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            ell_um: 100.0,
            ell_sweep_um: vec![25.0, 50.0, 100.0, 200.0, 400.0],
            preserved_std_fraction: 0.85,
            project_infeasible: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RveConfig {
    pub lengths_um: Vec<f64>,
    pub tol: f64,
    pub sample_length_um: f64,
}

impl Default for RveConfig {
    fn default() -> Self {
        Self { lengths_um: vec![100.0, 1000.0, 5000.0, 1e4, 2e4, 5e4], tol: 0.05, sample_length_um: 1e5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub m_s: usize,
    pub m_f: usize,
    pub n_b: usize,
    pub m_tilde: usize,
    pub alphas: Vec<f64>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { m_s: 10_000, m_f: 100, n_b: 20, m_tilde: 50, alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalLocalConfig {
    /// Global correlation length over the RVE length.
    pub ell_factor: f64,
    pub truth_samples: usize,
    /// Local correlation length; the local validation's choice when unset.
    pub local_ell_um: Option<f64>,
}

impl Default for GlobalLocalConfig {
    fn default() -> Self {
        Self { ell_factor: 5.0, truth_samples: 100, local_ell_um: None }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            microstructure: MicroConfig::default(),
            moduli: PhaseModuli::default(),
            extract: ExtractConfig::default(),
            bootstrap: BootstrapConfig::default(),
            stats: StatsConfig::default(),
            fuzzify: FuzzifyConfig::default(),
            field: FieldConfig::default(),
            rve: RveConfig::default(),
            problem: ProblemSpec::default(),
            validation: ValidationConfig::default(),
            global_local: GlobalLocalConfig::default(),
        }
    }
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(what()))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn alphas_ok(a: &[f64]) -> bool {
    !a.is_empty() && a.iter().all(|v| (0.0..=1.0).contains(v))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.microstructure;
        check(positive(m.width_um) && positive(m.height_um), || "microstructure dimensions must be positive".into())?;
        check(m.volume_fraction > 0.0 && m.volume_fraction < 0.8, || format!("volume fraction {}", m.volume_fraction))?;
        check(positive(m.radius_min_um) && m.radius_min_um <= m.radius_max_um, || "radius range".into())?;
        check(positive(m.pixel_um), || "pixel size must be positive".into())?;
        check(self.moduli.a_fiber > self.moduli.a_matrix && self.moduli.a_matrix > 0.0, || "moduli".into())?;
        check(positive(self.extract.strip_um) && positive(self.extract.element_um), || "extract sizes".into())?;
        check(self.bootstrap.samples >= 2 && positive(self.bootstrap.length_um), || "bootstrap needs M >= 2 and L > 0".into())?;
        check(positive(self.stats.max_lag_um), || "max lag".into())?;
        check(self.stats.homogenization_windows_um.iter().all(|&w| positive(w)), || "homogenization windows".into())?;
        check(self.fuzzify.n_bins >= 3, || "at least 3 histogram bins".into())?;
        check(alphas_ok(&self.fuzzify.table_alphas), || "table alphas must lie in [0, 1]".into())?;
        let f = &self.field;
        check(positive(f.ell_um) && f.ell_sweep_um.iter().all(|&l| positive(l)), || "correlation lengths".into())?;
        check(f.preserved_std_fraction > 0.0 && f.preserved_std_fraction <= 1.0, || "preserved fraction".into())?;
        let r = &self.rve;
        check(!r.lengths_um.is_empty() && r.lengths_um.windows(2).all(|w| w[0] < w[1]), || "RVE lengths must ascend".into())?;
        check(positive(r.tol) && positive(r.sample_length_um), || "RVE tolerance and sample length".into())?;
        self.problem.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let v = &self.validation;
        check(v.m_s >= 1 && v.m_f >= 1 && v.n_b >= 1 && v.m_tilde >= 1, || "validation sizes must be >= 1".into())?;
        check(alphas_ok(&v.alphas), || "validation alphas must lie in [0, 1]".into())?;
        check(v.m_tilde < self.bootstrap.samples, || "M~ must be below the bootstrap M".into())?;
        let g = &self.global_local;
        check(positive(g.ell_factor) && g.truth_samples > v.m_tilde, || "global-local settings".into())?;
        check(g.local_ell_um.is_none_or(positive), || "local correlation length".into())?;
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
