//! Experiment configuration: one TOML file drives every subcommand.
//!
//! All fields have explicit defaults; the resolved configuration (defaults
//! filled in) is what gets hashed and echoed into the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{builtin, EnsembleFile, MatrixEnsemble};
use crate::error::{Error, Result};
use crate::lab::{Psi, RegularityExpectation, Windows};
use crate::linalg::{DualPoint, ProjectivePoint};
use crate::spectral::{FitOptions, GridFunction, ProjectiveGrid};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Builtin ensemble name. Ignored when `ensemble_file` or `ensemble_spec` is set.
    pub ensemble: String,
    pub ensemble_file: Option<PathBuf>,
    pub ensemble_spec: Option<EnsembleFile>,
    /// Starting vector `v` (any nonzero scaling).
    pub x0: Vec<f64>,
    /// Functional `f` of the coefficient `⟨f, G_n v⟩`.
    pub f: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Not part of the config hash.
    pub threads: usize,
    /// Output directory. Not part of the config hash.
    pub out: PathBuf,
    /// Spectral model file; defaults to `<out>/model.json`.
    pub model: Option<PathBuf>,
    pub spectrum: SpectrumConfig,
    pub simulate: SimulateConfig,
    pub windows: Windows,
    pub be: BerryEsseenConfig,
    pub edgeworth: EdgeworthConfig,
    pub mdp: MdpConfig,
    pub mdp_principle: MdpPrincipleConfig,
    pub llt: LltConfig,
    pub regularity: RegularityConfig,
    pub rates: RatesConfig,
    pub partition: PartitionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            ensemble: "oracleA".into(),
            ensemble_file: None,
            ensemble_spec: None,
            x0: vec![1.0, 1.0],
            f: vec![1.0, 1.0],
            n_grid: vec![100, 400, 1600],
            m: 100_000,
            seed: 1,
            threads: 0,
            out: PathBuf::from("out"),
            model: None,
            spectrum: SpectrumConfig::default(),
            simulate: SimulateConfig::default(),
            windows: Windows::default(),
            be: BerryEsseenConfig::default(),
            edgeworth: EdgeworthConfig::default(),
            mdp: MdpConfig::default(),
            mdp_principle: MdpPrincipleConfig::default(),
            llt: LltConfig::default(),
            regularity: RegularityConfig::default(),
            rates: RatesConfig::default(),
            partition: PartitionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Half-width of the fitted s-range; absent means `0.3 / E[log N(g)]`.
    pub s_max: Option<f64>,
    pub n_s: usize,
    /// Grid size `M` of the projective line.
    pub grid_size: usize,
    pub zeta_radius: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        let d = FitOptions::default();
        SpectrumConfig {
            s_max: d.s_max,
            n_s: d.n_s,
            grid_size: d.grid_size,
            zeta_radius: d.zeta_radius,
        }
    }
}

impl SpectrumConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            s_max: self.s_max,
            n_s: self.n_s,
            grid_size: self.grid_size,
            zeta_radius: self.zeta_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    /// Trajectories; absent uses the top-level `m`.
    pub m: Option<usize>,
    /// Tilt parameter of `Q_s`; 0 runs the plain walk.
    pub tilt_s: f64,
    /// Also record `log‖∧²G_n‖`.
    pub ext2: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: 400,
            m: None,
            tilt_s: 0.0,
            ext2: false,
        }
    }
}

/// A test function on `P(V)`, parametrized by the angle `θ ∈ [0, π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhiSpec {
    Constant {
        value: f64,
    },
    /// `a0 + a·cos 2θ + b·sin 2θ`.
    Trig {
        a0: f64,
        a: f64,
        b: f64,
    },
    /// Node values on a uniform grid of the same length, interpolated linearly.
    Values {
        values: Vec<f64>,
    },
}

impl PhiSpec {
    pub fn to_grid(&self, grid: ProjectiveGrid) -> Result<GridFunction> {
        match self {
            PhiSpec::Constant { value } => Ok(GridFunction::constant(grid, *value)),
            PhiSpec::Trig { a0, a, b } => Ok(GridFunction::from_fn(grid, |t| {
                a0 + a * (2.0 * t).cos() + b * (2.0 * t).sin()
            })),
            PhiSpec::Values { values } => {
                if values.len() < 2 {
                    return Err(Error::Config("phi values need at least two nodes".into()));
                }
                let source = GridFunction {
                    values: values.clone(),
                };
                Ok(GridFunction::from_fn(grid, |t| source.eval_angle(t)))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerryEsseenConfig {
    pub phi: Option<PhiSpec>,
    /// Fit the `log^β n/√n` envelope (heavy-tailed ensembles).
    pub envelope: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeworthConfig {
    pub phi: Option<PhiSpec>,
    /// n at which the improvement fraction is judged; absent uses the middle of `n_grid`.
    pub improvement_n: Option<usize>,
    /// Horizons of the `b_φ` estimate.
    pub b_horizons: Vec<usize>,
    pub b_m: usize,
}

impl Default for EdgeworthConfig {
    fn default() -> Self {
        EdgeworthConfig {
            phi: None,
            improvement_n: None,
            b_horizons: vec![25, 50, 100, 200],
            b_m: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdpConfig {
    pub n: usize,
    /// Absent uses `{0, 0.5, 1, 2, n^{1/4}, n^{0.3}}`.
    pub t_grid: Option<Vec<f64>>,
    pub m: Option<usize>,
    pub lower_tail: bool,
    pub phi: Option<PhiSpec>,
}

impl Default for MdpConfig {
    fn default() -> Self {
        MdpConfig {
            n: 1024,
            t_grid: None,
            m: None,
            lower_tail: true,
            phi: None,
        }
    }
}

impl MdpConfig {
    pub fn resolved_t_grid(&self) -> Vec<f64> {
        self.t_grid
            .clone()
            .unwrap_or_else(|| default_mdp_t_grid(self.n))
    }
}

/// `{0, 0.5, 1, 2, n^{1/4}, n^{0.3}}`.
pub fn default_mdp_t_grid(n: usize) -> Vec<f64> {
    let n = n as f64;
    vec![0.0, 0.5, 1.0, 2.0, n.powf(0.25), n.powf(0.3)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdpPrincipleConfig {
    pub n_grid: Vec<usize>,
    /// Deviation in units of `b_n`; absent uses `σ`.
    pub t: Option<f64>,
    /// `b_n = n^b_exponent`, with the exponent in `(1/2, 1)`.
    pub b_exponent: f64,
    pub m: Option<usize>,
}

impl Default for MdpPrincipleConfig {
    fn default() -> Self {
        MdpPrincipleConfig {
            n_grid: vec![256, 1024, 4096],
            t: None,
            b_exponent: 0.65,
            m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LltConfig {
    pub n: usize,
    pub t_grid: Vec<f64>,
    pub a1: f64,
    pub a2: f64,
    /// Piecewise-linear `ψ` knots; when set they replace the indicator of `[a1, a2]`.
    pub psi_knots: Option<Vec<(f64, f64)>>,
    pub phi: Option<PhiSpec>,
    pub m: Option<usize>,
    /// Rows with `|t|` above this use the tilted sampler.
    pub tilt_threshold: f64,
}

impl Default for LltConfig {
    fn default() -> Self {
        LltConfig {
            n: 1024,
            t_grid: vec![0.0, 2.0],
            a1: -0.25,
            a2: 0.25,
            psi_knots: None,
            phi: None,
            m: None,
            tilt_threshold: 1.0,
        }
    }
}

impl LltConfig {
    pub fn psi(&self) -> Psi {
        match &self.psi_knots {
            Some(knots) => Psi::PiecewiseLinear {
                knots: knots.clone(),
            },
            None => Psi::Indicator {
                a1: self.a1,
                a2: self.a2,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularityConfig {
    /// Absent uses the walk engine's default burn-in.
    pub n_burn: Option<usize>,
    pub n_keep: usize,
    pub m: usize,
    pub k_grid: Vec<f64>,
    pub alpha: f64,
    pub eta: Vec<f64>,
    pub p: Vec<f64>,
    /// Hyperplane functional; absent uses `f`.
    pub y: Option<Vec<f64>>,
    /// Alternative to `y`: the angle of the functional.
    pub y_angle: Option<f64>,
    pub expect: RegularityExpectation,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        RegularityConfig {
            n_burn: None,
            n_keep: 50,
            m: 4000,
            k_grid: (1..=10).map(f64::from).collect(),
            alpha: 0.5,
            eta: vec![0.25, 0.5],
            p: vec![1.0, 2.0],
            y: None,
            y_angle: None,
            expect: RegularityExpectation::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub epsilon: Option<f64>,
    pub lyapunov_n: usize,
    pub lyapunov_m: usize,
    pub y: Option<Vec<f64>>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        RatesConfig {
            n_grid: vec![5, 10, 20, 40],
            m: 20_000,
            epsilon: None,
            lyapunov_n: 500,
            lyapunov_m: 200,
            y: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub n: usize,
    pub big_a: f64,
    pub gamma: f64,
    pub points: usize,
    pub pairs: usize,
    pub y: Option<Vec<f64>>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            n: 400,
            big_a: 4.0,
            gamma: 0.5,
            points: 10_000,
            pairs: 4000,
            y: None,
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            what: "experiment config".into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` table of a run manifest (`.json`).
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|x| x == "json") {
            let manifest: crate::manifest::RunManifest =
                serde_json::from_str(&text).map_err(|e| Error::Parse {
                    what: format!("manifest {}", path.display()),
                    message: e.to_string(),
                })?;
            return Ok(manifest.config);
        }
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn ensemble(&self) -> Result<MatrixEnsemble> {
        if let Some(spec) = &self.ensemble_spec {
            return spec.clone().into_ensemble();
        }
        if let Some(path) = &self.ensemble_file {
            return MatrixEnsemble::from_file(path);
        }
        builtin(&self.ensemble)
    }

    pub fn model_path(&self) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.out.join("model.json"))
    }

    pub fn start(&self) -> Result<ProjectivePoint> {
        ProjectivePoint::new(&self.x0).map_err(|e| config_error(format!("x0: {e}")))
    }

    pub fn functional(&self) -> Result<DualPoint> {
        DualPoint::new(&self.f).map_err(|e| config_error(format!("f: {e}")))
    }

    fn dual_or_f(&self, y: &Option<Vec<f64>>, what: &str) -> Result<DualPoint> {
        match y {
            Some(v) => DualPoint::new(v).map_err(|e| config_error(format!("{what}: {e}"))),
            None => self.functional(),
        }
    }

    pub fn regularity_y(&self) -> Result<DualPoint> {
        match self.regularity.y_angle {
            Some(theta) => Ok(DualPoint::from_angle(theta)),
            None => self.dual_or_f(&self.regularity.y, "regularity.y"),
        }
    }

    pub fn rates_y(&self) -> Result<DualPoint> {
        self.dual_or_f(&self.rates.y, "rates.y")
    }

    pub fn partition_y(&self) -> Result<DualPoint> {
        self.dual_or_f(&self.partition.y, "partition.y")
    }

    /// Rejects inconsistent fields; returns the ensemble it resolved.
    pub fn validate(&self) -> Result<MatrixEnsemble> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(config_error(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.ensemble_file.is_some() && self.ensemble_spec.is_some() {
            return Err(config_error(
                "set at most one of ensemble_file and ensemble_spec",
            ));
        }
        let e = self.ensemble()?;
        let d = e.dim();
        for (name, v) in [("x0", &self.x0), ("f", &self.f)] {
            if v.len() != d {
                return Err(config_error(format!(
                    "{name} has length {} but ensemble `{}` has dimension {d}",
                    v.len(),
                    e.label()
                )));
            }
        }
        self.start()?;
        self.functional()?;
        for (name, y) in [
            ("regularity.y", &self.regularity.y),
            ("rates.y", &self.rates.y),
            ("partition.y", &self.partition.y),
        ] {
            if let Some(y) = y {
                if y.len() != d {
                    return Err(config_error(format!(
                        "{name} has length {} but d = {d}",
                        y.len()
                    )));
                }
                DualPoint::new(y).map_err(|e| config_error(format!("{name}: {e}")))?;
            }
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(config_error(
                "n_grid must be a non-empty list of positive integers",
            ));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_error("n_grid must be strictly increasing"));
        }
        if self.m < 2 {
            return Err(config_error("m must be at least 2"));
        }
        if self.spectrum.n_s < 9 || self.spectrum.grid_size < 8 {
            return Err(config_error("spectrum needs n_s ≥ 9 and grid_size ≥ 8"));
        }
        if let Some(s) = self.spectrum.s_max {
            if !(s > 0.0 && s.is_finite()) {
                return Err(config_error("spectrum.s_max must be positive"));
            }
        }
        let w = &self.windows;
        for (name, (lo, hi)) in [
            ("clt_decay_ratio", w.clt_decay_ratio),
            ("mdp_ratio", w.mdp_ratio),
            ("llt_bulk_ratio", w.llt_bulk_ratio),
            ("llt_tilted_ratio", w.llt_tilted_ratio),
            ("envelope_alpha", w.envelope_alpha),
        ] {
            if !(lo < hi) {
                return Err(config_error(format!("windows.{name} must satisfy lo < hi")));
            }
        }
        if !(self.mdp_principle.b_exponent > 0.5 && self.mdp_principle.b_exponent < 1.0) {
            return Err(config_error(
                "mdp_principle.b_exponent must lie in (1/2, 1)",
            ));
        }
        if self.llt.psi_knots.is_none() && !(self.llt.a1 < self.llt.a2) {
            return Err(config_error("llt needs a1 < a2"));
        }
        self.llt
            .psi()
            .validate()
            .map_err(|e| config_error(format!("llt: {e}")))?;
        if self.partition.n < 18 {
            return Err(config_error("partition.n must be at least 18"));
        }
        if let Some(n) = self.edgeworth.improvement_n {
            if !self.n_grid.contains(&n) {
                return Err(config_error(format!(
                    "edgeworth.improvement_n = {n} is not in n_grid"
                )));
            }
        }
        Ok(e)
    }

    /// SHA-256 of the resolved config with the runtime-only fields
    /// (`threads`, `out`, `model`) blanked.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.threads = 0;
        c.out = PathBuf::new();
        c.model = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
