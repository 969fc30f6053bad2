//! Statistical checks of the limit theorems for coefficients `log|⟨f, G_n v⟩|`.
//!
//! Every check returns an [`ExpansionReport`]: one row per `t`, `k` or `n`
//! with an estimate, its standard error, the theoretical comparand and a
//! derived statistic, plus pass/fail verdicts computed only from the
//! configured [`Windows`].

mod clt;
mod deviation;
mod partition;
mod regularity;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use self::clt::{
    berry_esseen_check, clt_check, edgeworth_check, edgeworth_comparand, envelope_fit,
    EdgeworthTerms, EnvelopeFit, Normalization, SampleSet,
};
pub use self::deviation::{
    lattice_diagnostic, llt_check, mdp_expansion_check, mdp_principle_check, tail_estimate,
    LltOptions, MdpOptions, Psi, TailEstimate,
};
pub use self::partition::{
    holder_bound_check, partition_check, HolderCheck, HolderRow, PartitionOfUnity, HOLDER_CONSTANT,
};
pub use self::regularity::{
    adversarial_dual, rates_check, regularity_check, MomentFunctional, RatesOptions,
    RegularityExpectation, RegularityOptions, RegularityReport,
};

use crate::error::{Error, Result};
use crate::spectral::{GridFunction, SpectralModel};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Sorted sample with optional importance weights, normalized to total mass 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    /// Cumulative normalized weights; `None` for equal weights.
    cumulative: Option<Vec<f64>>,
    effective_size: f64,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<EmpiricalDistribution> {
        if values.is_empty() {
            return Err(Error::input("empty sample"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::input("sample contains NaN"));
        }
        values.sort_by(f64::total_cmp);
        let effective_size = values.len() as f64;
        Ok(EmpiricalDistribution {
            values,
            cumulative: None,
            effective_size,
        })
    }

    /// Self-normalized weights `exp(log_weights)`.
    pub fn weighted(values: Vec<f64>, log_weights: &[f64]) -> Result<EmpiricalDistribution> {
        if values.is_empty() || values.len() != log_weights.len() {
            return Err(Error::input(
                "values and weights must be non-empty and of equal length",
            ));
        }
        if values.iter().chain(log_weights).any(|v| v.is_nan()) {
            return Err(Error::input("sample contains NaN"));
        }
        let top = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::input("all importance weights vanish"));
        }
        let mut pairs: Vec<(f64, f64)> = values
            .into_iter()
            .zip(log_weights.iter().map(|lw| (lw - top).exp()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
        let mut acc = crate::stats::CompensatedSum::default();
        let mut cumulative = Vec::with_capacity(pairs.len());
        for p in &pairs {
            acc.add(p.1);
            cumulative.push(acc.value() / total);
        }
        Ok(EmpiricalDistribution {
            values: pairs.into_iter().map(|p| p.0).collect(),
            cumulative: Some(cumulative),
            effective_size: total * total / sq,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Kish effective sample size.
    pub fn effective_size(&self) -> f64 {
        self.effective_size
    }

    /// Mass of the first `count` sorted values.
    fn mass_below(&self, count: usize) -> f64 {
        if count == 0 {
            return 0.0;
        }
        match &self.cumulative {
            None => count as f64 / self.values.len() as f64,
            Some(c) => c[count - 1],
        }
    }

    /// `F̂(t) = P̂(X ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.mass_below(self.values.partition_point(|v| *v <= t))
    }

    /// `sup_t |F̂(t) − F(t)|` and the location of the supremum.
    pub fn kolmogorov_distance(&self, reference: impl Fn(f64) -> f64) -> (f64, f64) {
        let mut best = (0.0, self.values[0]);
        let mut i = 0;
        while i < self.values.len() {
            let v = self.values[i];
            let mut j = i + 1;
            while j < self.values.len() && self.values[j] == v {
                j += 1;
            }
            let f = reference(v);
            let d = (self.mass_below(i) - f)
                .abs()
                .max((self.mass_below(j) - f).abs());
            if d > best.0 {
                best = (d, v);
            }
            i = j;
        }
        best
    }
}

/// One row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub n: usize,
    /// The row coordinate: `t`, `k` or `n` depending on the check.
    pub x: f64,
    pub empirical: f64,
    pub se: f64,
    pub theoretical: f64,
    /// Ratio or scaled residual, see the report's `statistic` field.
    pub statistic: f64,
    pub statistic_se: f64,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub window: String,
    pub value: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn within(criterion: impl Into<String>, value: f64, lo: f64, hi: f64) -> Verdict {
        Verdict {
            criterion: criterion.into(),
            window: format!("[{lo}, {hi}]"),
            value,
            pass: value >= lo && value <= hi,
        }
    }

    pub fn at_most(criterion: impl Into<String>, value: f64, hi: f64) -> Verdict {
        Verdict {
            criterion: criterion.into(),
            window: format!("≤ {hi}"),
            value,
            pass: value <= hi,
        }
    }

    pub fn at_least(criterion: impl Into<String>, value: f64, lo: f64) -> Verdict {
        Verdict {
            criterion: criterion.into(),
            window: format!("≥ {lo}"),
            value,
            pass: value >= lo,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub ensemble_hash: Option<String>,
    pub model_hash: Option<String>,
}

impl Provenance {
    pub fn new(seed: u64) -> Provenance {
        Provenance {
            seed,
            ..Provenance::default()
        }
    }

    pub fn with_model(mut self, model: &SpectralModel) -> Provenance {
        self.ensemble_hash = Some(model.ensemble_hash.clone());
        self.model_hash = Some(model.content_hash());
        self
    }

    pub fn with_ensemble(mut self, hash: String) -> Provenance {
        self.ensemble_hash = Some(hash);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub schema_version: u32,
    pub check: String,
    /// Meaning of `x` in the rows.
    pub axis: String,
    /// Meaning of `statistic` in the rows.
    pub statistic: String,
    pub n_values: Vec<usize>,
    pub m: usize,
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<Verdict>,
    /// Scalar results (fitted constants, slopes, AICs, …).
    pub summary: BTreeMap<String, f64>,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

/// JSON summary written next to the CSV rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub schema_version: u32,
    pub check: String,
    pub pass: bool,
    pub n_values: Vec<usize>,
    pub m: usize,
    pub verdicts: Vec<Verdict>,
    pub summary: BTreeMap<String, f64>,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

pub const CSV_HEADER: &str = "label,n,x,empirical,se,theoretical,statistic,statistic_se,flag";

impl ExpansionReport {
    pub fn new(
        check: &str,
        axis: &str,
        statistic: &str,
        m: usize,
        provenance: Provenance,
    ) -> ExpansionReport {
        ExpansionReport {
            schema_version: REPORT_SCHEMA_VERSION,
            check: check.into(),
            axis: axis.into(),
            statistic: statistic.into(),
            n_values: Vec::new(),
            m,
            rows: Vec::new(),
            verdicts: Vec::new(),
            summary: BTreeMap::new(),
            provenance,
            warnings: Vec::new(),
        }
    }

    /// All verdicts pass (vacuously true without verdicts).
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn summary_record(&self) -> ReportSummary {
        ReportSummary {
            schema_version: self.schema_version,
            check: self.check.clone(),
            pass: self.passed(),
            n_values: self.n_values.clone(),
            m: self.m,
            verdicts: self.verdicts.clone(),
            summary: self.summary.clone(),
            provenance: self.provenance.clone(),
            warnings: self.warnings.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            let flag = r.flag.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.label,
                r.n,
                r.x,
                r.empirical,
                r.se,
                r.theoretical,
                r.statistic,
                r.statistic_se,
                flag
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary_record()).expect("summary serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .map_err(|e| Error::io(&csv_path, e))?;
        std::fs::write(&csv_path, buf).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(&json_path, self.summary_json()).map_err(|e| Error::io(&json_path, e))?;
        Ok(vec![csv_path, json_path])
    }
}

/// Acceptance windows; the o(1) terms of the limit theorems carry no explicit
/// rates, so every window is a tunable quantity reported with the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Windows {
    /// Range of `D_{4n}/D_n` between consecutive n-grid points four apart.
    pub clt_decay_ratio: (f64, f64),
    /// Allowed upward drift of `√n·D_n` in standard errors.
    pub trend_se: f64,
    /// Fraction of `|t| ≤ edgeworth_t_max` where the expansion must beat plain Φ.
    pub edgeworth_fraction: f64,
    pub edgeworth_t_max: f64,
    pub mdp_ratio: (f64, f64),
    pub mdp_max_rel_se: f64,
    /// `t = 0` rows: ratio within this many se of 1.
    pub median_se: f64,
    pub llt_bulk_ratio: (f64, f64),
    pub llt_tilted_ratio: (f64, f64),
    /// `α̂ = 1/β` from the Berry–Esseen envelope `log^β n/√n`.
    pub envelope_alpha: (f64, f64),
    pub regularity_r_squared: f64,
    pub regularity_slope_tolerance: f64,
    pub min_tail_hits: usize,
    pub unity_tolerance: f64,
}

impl Default for Windows {
    fn default() -> Self {
        Windows {
            clt_decay_ratio: (0.3, 0.85),
            trend_se: 2.0,
            edgeworth_fraction: 0.8,
            edgeworth_t_max: 3.0,
            mdp_ratio: (0.8, 1.25),
            mdp_max_rel_se: 0.05,
            median_se: 3.0,
            llt_bulk_ratio: (0.9, 1.1),
            llt_tilted_ratio: (0.8, 1.25),
            envelope_alpha: (0.3, 0.7),
            regularity_r_squared: 0.95,
            regularity_slope_tolerance: 0.1,
            min_tail_hits: 20,
            unity_tolerance: 1e-12,
        }
    }
}

/// `points` equally spaced values on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// The 512-point sup-distance grid on `[−4, 4]`.
pub fn sup_t_grid() -> Vec<f64> {
    uniform_grid(-4.0, 4.0, 512)
}

/// `ν(φ)` for a grid function on any grid, via linear interpolation onto the model grid.
pub fn nu_of(model: &SpectralModel, phi: &GridFunction) -> f64 {
    let grid = model.grid();
    let values: Vec<f64> = grid.nodes().map(|theta| phi.eval_angle(theta)).collect();
    model.nu_integral(&values)
}

/// `later ≤ earlier + k·se` for each consecutive pair.
pub(crate) fn non_increasing(values: &[(f64, f64)], k: f64) -> (bool, f64) {
    let mut worst = f64::NEG_INFINITY;
    for w in values.windows(2) {
        let excess = (w[1].0 - w[0].0) / crate::stats::combined_se(w[0].1, w[1].1).max(1e-300);
        worst = worst.max(excess);
    }
    (worst <= k, if worst.is_finite() { worst } else { 0.0 })
}
