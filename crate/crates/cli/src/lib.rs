//! Pipeline stages behind the `fuzzstoch` command line.

pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fuzzstoch::fuzzy::{FuzzyError, FuzzyVector};
use fuzzstoch::homog::{homogenize_set, rve_length, HomogError, RveReport};
use fuzzstoch::microdata::{
    bootstrap, extract_1d_samples, generate_microstructure, parse_binary_map, rasterize, write_binary_map,
    FiberMapSpec, MicroError, Provenance, SampleSet,
};
use fuzzstoch::randfield::{kl_decompose, FieldError, FuzzyStochasticField};
use fuzzstoch::solver::{GlobalOptions, SolverError};
use fuzzstoch::stats::{correlation_function, pointwise_moments, CorrelationCurve, StatsError};
use fuzzstoch::validate::{
    validate_global_local, validate_local, ContainmentReport, GlobalLocalSettings, TruthPBox, ValidateError,
    ValidationSettings,
};
use serde::Serialize;
use thiserror::Error;

pub use config::RunConfig;
pub use manifest::Manifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact {0}; run the upstream stage first")]
    MissingArtifact(PathBuf),
    #[error("malformed artifact {path}: {message}")]
    BadArtifact { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Micro(#[from] MicroError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Homog(#[from] HomogError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::MissingArtifact(_) => "MissingArtifact",
            CliError::BadArtifact { .. } => "BadArtifact",
            CliError::Io { .. } => "IoError",
            CliError::Micro(_) => "MicrodataError",
            CliError::Stats(_) => "StatsError",
            CliError::Fuzzy(_) => "FuzzyError",
            CliError::Field(_) => "FieldError",
            CliError::Homog(_) => "HomogError",
            CliError::Solver(_) => "SolverError",
            CliError::Validate(_) => "ValidateError",
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact(_) => 3,
            _ => 1,
        }
    }
}

pub const STAGES: [&str; 9] =
    ["synth", "extract", "bootstrap", "stats", "fuzzify", "fit-field", "validate-local", "rve", "global-local"];

pub mod files {
    pub const FIBERS: &str = "fibers.json";
    pub const BINARY_MAP: &str = "binary_map.fsm";
    pub const SYNTH: &str = "synth.json";
    pub const EXTRACTED: &str = "samples_extracted.csv";
    pub const BOOTSTRAP: &str = "samples_bootstrap.csv";
    pub const MOMENTS: &str = "moments.csv";
    pub const CORRELATION_RAW: &str = "correlation_raw.csv";
    pub const STATS: &str = "stats.json";
    pub const FUZZY_MOMENTS: &str = "fuzzy_moments.json";
    pub const ALPHA_CUTS: &str = "alpha_cuts.csv";
    pub const KL_EIGENVALUES: &str = "kl_eigenvalues.csv";
    pub const KL_MODES: &str = "kl_modes.bin";
    pub const FIELD: &str = "field.json";
    pub const BAND_LOCAL: &str = "band_local.csv";
    pub const QOI_LOCAL: &str = "qoi_local.csv";
    pub const TRUTH_LOCAL: &str = "truth_local.csv";
    pub const CONTAINMENT_LOCAL: &str = "containment_local.json";
    pub const RVE_CSV: &str = "rve.csv";
    pub const RVE_JSON: &str = "rve.json";
    pub const BAND_GLOBAL_LOCAL: &str = "band_global_local.csv";
    pub const QOI_GLOBAL_LOCAL: &str = "qoi_global_local.csv";
    pub const TRUTH_GLOBAL_LOCAL: &str = "truth_global_local.csv";
    pub const CONTAINMENT_GLOBAL_LOCAL: &str = "containment_global_local.json";
    pub const MANIFEST: &str = "manifest.json";
}

/// Derived seeds for the independent bootstrap draws of one run.
mod seeds {
    pub fn local(seed: u64) -> u64 {
        seed
    }
    pub fn rve(seed: u64) -> u64 {
        seed.wrapping_add(1)
    }
    pub fn truth(seed: u64) -> u64 {
        seed.wrapping_add(2)
    }
}

/// Stage runner bound to one output directory and configuration.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub out: PathBuf,
    manifest: Manifest,
}

struct StageRecord {
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl StageRecord {
    fn new() -> Self {
        Self { inputs: Vec::new(), outputs: Vec::new() }
    }
}

impl Pipeline {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>) -> Result<Self, CliError> {
        cfg.validate()?;
        let out = out.into();
        fs::create_dir_all(&out).map_err(|e| CliError::Io { path: out.clone(), source: e })?;
        let manifest = Manifest::open(&out.join(files::MANIFEST), &cfg)?;
        Ok(Self { cfg, out, manifest })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn read(&self, name: &str, rec: &mut StageRecord) -> Result<Vec<u8>, CliError> {
        let path = self.path(name);
        if !path.exists() {
            return Err(CliError::MissingArtifact(path));
        }
        rec.inputs.push(name.to_string());
        fs::read(&path).map_err(|e| CliError::Io { path, source: e })
    }

    fn read_text(&self, name: &str, rec: &mut StageRecord) -> Result<String, CliError> {
        let bytes = self.read(name, rec)?;
        String::from_utf8(bytes).map_err(|e| CliError::BadArtifact { path: self.path(name), message: e.to_string() })
    }

    fn read_samples(&self, name: &str, provenance: Provenance, rec: &mut StageRecord) -> Result<SampleSet, CliError> {
        let text = self.read_text(name, rec)?;
        Ok(SampleSet::from_csv(&text, provenance)?)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str, rec: &mut StageRecord) -> Result<T, CliError> {
        let text = self.read_text(name, rec)?;
        serde_json::from_str(&text).map_err(|e| CliError::BadArtifact { path: self.path(name), message: e.to_string() })
    }

    fn write(&self, name: &str, bytes: &[u8], rec: &mut StageRecord) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io { path, source: e })?;
        rec.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T, rec: &mut StageRecord) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
        self.write(name, text.as_bytes(), rec)
    }

    /// Runs one named stage and records it in the manifest.
    pub fn run_stage(&mut self, stage: &str) -> Result<(), CliError> {
        let start = Instant::now();
        let mut rec = StageRecord::new();
        match stage {
            "synth" => self.synth(&mut rec)?,
            "extract" => self.extract(&mut rec)?,
            "bootstrap" => self.bootstrap(&mut rec)?,
            "stats" => self.stats(&mut rec)?,
            "fuzzify" => self.fuzzify(&mut rec)?,
            "fit-field" => self.fit_field(&mut rec)?,
            "validate-local" => self.validate_local(&mut rec)?,
            "rve" => self.rve(&mut rec)?,
            "global-local" => self.global_local(&mut rec)?,
            other => return Err(CliError::Config(format!("unknown stage {other}"))),
        }
        let seconds = start.elapsed().as_secs_f64();
        self.manifest.record(&self.out, stage, &rec.inputs, &rec.outputs, seconds)?;
        self.manifest.save(&self.path(files::MANIFEST))
    }

    pub fn run_all(&mut self) -> Result<(), CliError> {
        for stage in STAGES {
            if stage == "synth" && self.cfg.extract.image.is_some() {
                continue;
            }
            self.run_stage(stage)?;
        }
        Ok(())
    }

    fn synth(&self, rec: &mut StageRecord) -> Result<(), CliError> {
        let m = &self.cfg.microstructure;
        let mut spec = FiberMapSpec::new(m.width_um, m.height_um, m.volume_fraction, self.cfg.seed);
        spec.radius_range = (m.radius_min_um, m.radius_max_um);
        let map = generate_microstructure(&spec)?;
        let bm = rasterize(&map, m.pixel_um)?;
        let mut bytes = Vec::new();
        write_binary_map(&bm, &mut bytes)?;
        self.write_json(files::FIBERS, &map, rec)?;
        self.write(files::BINARY_MAP, &bytes, rec)?;
        let summary = serde_json::json!({
            "disks": map.disks.len(),
            "area_fraction": map.area_fraction(),
            "raster_fraction": bm.fiber_fraction(),
            "max_overlap_um": map.max_overlap(),
        });
        self.write_json(files::SYNTH, &summary, rec)
    }

    fn extract(&self, rec: &mut StageRecord) -> Result<(), CliError> {
        let bytes = match &self.cfg.extract.image {
            Some(path) => {
                if !path.exists() {
                    return Err(CliError::MissingArtifact(path.clone()));
                }
                rec.inputs.push(path.display().to_string());
                fs::read(path).map_err(|e| CliError::Io { path: path.clone(), source: e })?
            }
            None => self.read(files::BINARY_MAP, rec)?,
        };
        let bm = parse_binary_map(&bytes)?;
        let s = extract_1d_samples(&bm, &self.cfg.moduli, self.cfg.extract.strip_um, self.cfg.extract.element_um)?;
        self.write(files::EXTRACTED, s.to_csv().as_bytes(), rec)
    }

    fn extracted(&self, rec: &mut StageRecord) -> Result<SampleSet, CliError> {
        self.read_samples(files::EXTRACTED, Provenance::Extracted, rec)
    }

    fn bootstrap_set(&self, rec: &mut StageRecord) -> Result<SampleSet, CliError> {
        self.read_samples(files::BOOTSTRAP, Provenance::Bootstrap, rec)
    }

    fn bootstrap(&self, rec: &mut StageRecord) -> Result<(), CliError> {
        let ex = self.extracted(rec)?;
        let b = &self.cfg.bootstrap;
        let s = bootstrap(&ex, b.samples, b.length_um, seeds::local(self.cfg.seed))?;
        self.write(files::BOOTSTRAP, s.to_csv().as_bytes(), rec)
    }

    fn stats(&self, rec: &mut StageRecord) -> Result<(), CliError> {
        let ex = self.extracted(rec)?;
        let bs = self.bootstrap_set(rec)?;
        let curves = pointwise_moments(&bs)?;
        self.write(files::MOMENTS, curves.to_csv().as_bytes(), rec)?;
        let lag = |s: &SampleSet| (self.cfg.stats.max_lag_um / s.h).round().max(1.0) as usize;
        let raw = mean_correlation(&ex, lag(&ex))?;
        self.write(files::CORRELATION_RAW, raw.to_csv().as_bytes(), rec)?;
        let mut homogenized = BTreeMap::new();
        for &w in &self.cfg.stats.homogenization_windows_um {
            let eff = homogenize_set(&bs, w)?;
            let max_lag = ((2.0 * w / bs.h).round() as usize).max(lag(&bs));
            let c = mean_correlation(&eff, max_lag)?;
            let name = format!("correlation_H{w}.csv");
            self.write(&name, c.to_csv().as_bytes(), rec)?;
            homogenized.insert(format!("{w}"), c);
        }
        let [mu, _, g1, _] = curves.finite_columns();
        let skew_nonzero = g1.iter().filter(|g| g.abs() > 1e-3).count() as f64 / curves.x.len() as f64;
        let summary = serde_json::json!({
            "mean_mu": mu.iter().sum::<f64>() / mu.len().max(1) as f64,
            "skew_nonzero_fraction": skew_nonzero,
            "degenerate_points": curves.degenerate.len(),
            "raw_correlation": raw.c,
            "homogenized_correlation": homogenized.iter().map(|(k, c)| (k.clone(), c.c.clone())).collect::<BTreeMap<_, _>>(),
        });
        self.write_json(files::STATS, &summary, rec)
    }

    fn fuzzify(&self, rec: &mut StageRecord) -> Result<(), CliError> {
        let bs = self.bootstrap_set(rec)?;
        let v = fuzzstoch::randfield::fuzzy_moments(&bs, self.cfg.fuzzify.n_bins)?;
        self.write_json(files::FUZZY_MOMENTS, &v, rec)?;
        let mut csv = String::from("alpha,component,lo,hi\n");
        for &a in &self.cfg.fuzzify.table_alphas {
            for (name, cut) in ["mu", "sigma", "gamma1", "gamma2"].iter().zip(v.cuts(a)) {
                csv.push_str(&format!("{a},{name},{},{}\n", cut.lo, cut.hi));
            }
        }
        self.write(files::ALPHA_CUTS, csv.as_bytes(), rec)
    }

    fn fit_field(&self, rec: &mut StageRecord) -> Result<(), CliError> {
        let bs = self.bootstrap_set(rec)?;
        let moments: FuzzyVector = self.read_json(files::FUZZY_MOMENTS, rec)?;
        let f = &self.cfg.field;
        let kl = kl_decompose(bs.length(), bs.h, f.ell_um, f.preserved_std_fraction)?;
        let field = FuzzyStochasticField::new(kl, moments, f.project_infeasible)?;
        let mut modes = Vec::new();
        field.kl.write_modes(&mut modes)?;
        self.write(files::KL_EIGENVALUES, field.kl.eigenvalues_csv().as_bytes(), rec)?;
        self.write(files::KL_MODES, &modes, rec)?;
        let mut levels = Vec::new();
        for &a in &self.cfg.validation.alphas {
            let betas = field.segment_betas(a, 2)?;
            levels.push(serde_json::json!({ "alpha": a, "left": betas[0], "right": betas[1] }));
        }
        let summary = serde_json::json!({
            "ell_um": f.ell_um,
            "n_terms": field.n_terms(),
            "preserved_fraction": field.kl.preserved_fraction,
            "eigenvalue_sum": field.kl.eigenvalues.iter().sum::<f64>(),
            "length_um": field.kl.length(),
            "orthonormality_residual": field.kl.orthonormality_residual(),
            "segment_betas": levels,
        });
        self.write_json(files::FIELD, &summary, rec)
    }

    fn settings(&self) -> ValidationSettings {
        let v = &self.cfg.validation;
        ValidationSettings {
            alphas: v.alphas.clone(),
            m_s: v.m_s,
            m_f: v.m_f,
            n_b: v.n_b,
            m_tilde: v.m_tilde,
            seed: self.cfg.seed,
            preserved_std_fraction: self.cfg.field.preserved_std_fraction,
            n_bins: self.cfg.fuzzify.n_bins,
            project_infeasible: self.cfg.field.project_infeasible,
        }
    }

    fn validate_local(&self, rec: &mut StageRecord) -> Result<(), CliError> {
        let bs = self.bootstrap_set(rec)?;
        let ells = if self.cfg.field.ell_sweep_um.is_empty() { vec![self.cfg.field.ell_um] } else { self.cfg.field.ell_sweep_um.clone() };
        let v = validate_local(&bs, &ells, &self.settings())?;
        self.write(files::BAND_LOCAL, v.band.to_csv().as_bytes(), rec)?;
        self.write(files::QOI_LOCAL, v.band.samples_csv().as_bytes(), rec)?;
        self.write(files::TRUTH_LOCAL, truth_csv(&v.truth).as_bytes(), rec)?;
        self.write(files::CONTAINMENT_LOCAL, (v.report.to_json() + "\n").as_bytes(), rec)
    }

    fn rve(&self, rec: &mut StageRecord) -> Result<(), CliError> {
        let ex = self.extracted(rec)?;
        let r = &self.cfg.rve;
        let set = bootstrap(&ex, self.cfg.bootstrap.samples, r.sample_length_um, seeds::rve(self.cfg.seed))?;
        let report = match rve_length(&set, &r.lengths_um, r.tol) {
            Ok(report) => report,
            Err(HomogError::NoRve(report)) => {
                self.write(files::RVE_CSV, report.to_csv().as_bytes(), rec)?;
                self.write(files::RVE_JSON, (report.to_json() + "\n").as_bytes(), rec)?;
                return Err(HomogError::NoRve(report).into());
            }
            Err(e) => return Err(e.into()),
        };
        self.write(files::RVE_CSV, report.to_csv().as_bytes(), rec)?;
        self.write(files::RVE_JSON, (report.to_json() + "\n").as_bytes(), rec)
    }

    fn global_local(&self, rec: &mut StageRecord) -> Result<(), CliError> {
        let ex = self.extracted(rec)?;
        let bs = self.bootstrap_set(rec)?;
        let report: RveReport = self.read_json(files::RVE_JSON, rec)?;
        let l_rve = report
            .l_rve
            .ok_or_else(|| CliError::BadArtifact { path: self.path(files::RVE_JSON), message: "no RVE length".into() })?;
        let local_ell = match self.cfg.global_local.local_ell_um {
            Some(ell) => ell,
            None => {
                let local: ContainmentReport = self.read_json(files::CONTAINMENT_LOCAL, rec)?;
                local.selected_ell
            }
        };
        let g = &self.cfg.global_local;
        let truth = bootstrap(&ex, g.truth_samples, self.cfg.problem.length_um, seeds::truth(self.cfg.seed))?;
        let gl = GlobalLocalSettings {
            l_rve,
            local_ell,
            global: GlobalOptions {
                ell_factor: g.ell_factor,
                preserved_std_fraction: self.cfg.field.preserved_std_fraction,
                project_infeasible: self.cfg.field.project_infeasible,
            },
            problem: self.cfg.problem.clone(),
        };
        let v = validate_global_local(&bs, &truth, &gl, &self.settings())?;
        self.write(files::BAND_GLOBAL_LOCAL, v.band.to_csv().as_bytes(), rec)?;
        self.write(files::QOI_GLOBAL_LOCAL, v.band.samples_csv().as_bytes(), rec)?;
        self.write(files::TRUTH_GLOBAL_LOCAL, truth_csv(&v.truth).as_bytes(), rec)?;
        let mut json = serde_json::to_value(&v.report).expect("report serializes");
        json["l_rve_um"] = l_rve.into();
        json["local_ell_um"] = local_ell.into();
        json["n_global_terms"] = v.n_global_terms.into();
        json["n_local_terms"] = v.n_local_terms.into();
        self.write_json(files::CONTAINMENT_GLOBAL_LOCAL, &json, rec)
    }
}

fn mean_correlation(s: &SampleSet, max_lag: usize) -> Result<CorrelationCurve, CliError> {
    let curves = s.samples().map(|row| correlation_function(row, s.h, max_lag)).collect::<Result<Vec<_>, _>>()?;
    Ok(CorrelationCurve::mean(&curves))
}

/// CSV `member,value,prob` with the ECDF steps of each p-box member.
fn truth_csv(t: &TruthPBox) -> String {
    let mut out = String::from("member,value,prob\n");
    for (b, m) in t.pbox.members.iter().enumerate() {
        for (v, p) in m.steps() {
            out.push_str(&format!("{b},{v},{p}\n"));
        }
    }
    out
}

/// Installs the worker pool size: the flag, then `FUZZSTOCH_THREADS`, then
/// rayon's default.
pub fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let env = std::env::var("FUZZSTOCH_THREADS").ok();
    let n = match (flag, env) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => Some(v.trim().parse().map_err(|_| CliError::Config(format!("FUZZSTOCH_THREADS = {v:?}")))?),
        (None, None) => None,
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        // A pool installed earlier in this process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}
