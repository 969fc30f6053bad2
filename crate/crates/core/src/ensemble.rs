//! Matrix laws μ: finite-support tables and parametric generators, with
//! sampling, builtin presets, a TOML definition format, and heuristic probes
//! for the moment and proximality conditions.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal, Weibull};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, StreamRng};
use crate::stats::{LinearFit, Summary};

/// Current version of the ensemble file schema.
pub const ENSEMBLE_SCHEMA_VERSION: u32 = 1;

/// `|det g| ≥ INVERTIBILITY_THRESHOLD · max|g_ij|^d` for accepted draws.
pub const INVERTIBILITY_THRESHOLD: f64 = 1e-10;

/// Consecutive rejections tolerated by a generator before giving up.
pub const MAX_REJECTIONS: usize = 1000;

const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Names accepted by [`builtin`].
pub const BUILTINS: &[&str] = &[
    "oracleA",
    "scalar-rotation",
    "rotation",
    "diag31",
    "scalar3",
    "heavy-alpha",
    "exp-tail",
    "ginibre2",
    "ginibre3",
    "positive-perturbed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub matrix: Matrix,
    pub probability: f64,
}

/// Parametric matrix families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generator {
    /// I.i.d. standard Gaussian entries.
    Ginibre {},
    /// `I + J + noise·Z` with `J` the all-ones matrix and `Z` Gaussian.
    PositivePerturbed { noise: f64 },
    /// `diag(e^W, 1)·R(θ)` with `θ ~ U[0, π)` and `W ~ Weibull(shape alpha, scale)`,
    /// so that `log N(g) = W` exactly. Planar only.
    TailRotation { alpha: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Finite(Vec<Atom>),
    Generator(Generator),
}

/// A probability law on invertible `d × d` matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixEnsemble {
    label: String,
    dim: usize,
    kind: EnsembleKind,
    #[serde(skip)]
    thresholds: Vec<u64>,
}

impl PartialEq for MatrixEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.dim == other.dim && self.kind == other.kind
    }
}

impl MatrixEnsemble {
    pub fn finite(label: impl Into<String>, atoms: Vec<(Matrix, f64)>) -> Result<MatrixEnsemble> {
        let label = label.into();
        let Some(first) = atoms.first() else {
            return Err(Error::input("finite ensemble needs at least one atom"));
        };
        let dim = first.0.dim();
        let mut total = 0.0;
        for (i, (g, p)) in atoms.iter().enumerate() {
            if g.dim() != dim {
                return Err(Error::input(format!(
                    "atom {i} has dimension {} ≠ {dim}",
                    g.dim()
                )));
            }
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::input(format!(
                    "atom {i} has non-positive probability {p}"
                )));
            }
            g.check_invertible(INVERTIBILITY_THRESHOLD)
                .map_err(|e| Error::input(format!("atom {i}: {e}")))?;
            total += p;
        }
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::input(format!(
                "probabilities sum to {total}, expected 1 within {PROBABILITY_TOLERANCE:e}"
            )));
        }
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(matrix, probability)| Atom {
                matrix,
                probability,
            })
            .collect();
        let thresholds = cumulative_thresholds(&atoms);
        Ok(MatrixEnsemble {
            label,
            dim,
            kind: EnsembleKind::Finite(atoms),
            thresholds,
        })
    }

    /// Uniform law on the given matrices.
    pub fn uniform(label: impl Into<String>, matrices: Vec<Matrix>) -> Result<MatrixEnsemble> {
        let p = 1.0 / matrices.len().max(1) as f64;
        MatrixEnsemble::finite(label, matrices.into_iter().map(|g| (g, p)).collect())
    }

    pub fn generator(
        label: impl Into<String>,
        dim: usize,
        generator: Generator,
    ) -> Result<MatrixEnsemble> {
        if dim < 2 {
            return Err(Error::input("dimension must be ≥ 2"));
        }
        match generator {
            Generator::Ginibre {} => {}
            Generator::PositivePerturbed { noise } => {
                if !(noise.is_finite() && noise >= 0.0) {
                    return Err(Error::input("noise must be a non-negative number"));
                }
            }
            Generator::TailRotation { alpha, scale } => {
                if dim != 2 {
                    return Err(Error::input("tail-rotation is planar (dim = 2)"));
                }
                if !(alpha > 0.0 && alpha.is_finite() && scale > 0.0 && scale.is_finite()) {
                    return Err(Error::input("tail-rotation needs alpha > 0 and scale > 0"));
                }
            }
        }
        Ok(MatrixEnsemble {
            label: label.into(),
            dim,
            kind: EnsembleKind::Generator(generator),
            thresholds: Vec::new(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &EnsembleKind {
        &self.kind
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.kind {
            EnsembleKind::Finite(atoms) => Some(atoms),
            EnsembleKind::Generator(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.kind, EnsembleKind::Finite(_))
    }

    /// Index of the atom selected by 64 uniform bits.
    #[inline]
    pub fn pick_atom(&self, bits: u64) -> usize {
        pick(&self.thresholds, bits)
    }

    /// One draw from μ.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<Matrix> {
        match &self.kind {
            EnsembleKind::Finite(atoms) => Ok(atoms[self.pick_atom(rng.next_u64())].matrix.clone()),
            EnsembleKind::Generator(generator) => {
                for _ in 0..MAX_REJECTIONS {
                    let g = draw_generator(generator, self.dim, rng);
                    if let Some(g) = g {
                        // Tail rotations have |det| = e^W > 0 by construction; a
                        // scale-relative threshold there would truncate the tail.
                        let exempt = matches!(generator, Generator::TailRotation { .. });
                        if exempt || g.check_invertible(INVERTIBILITY_THRESHOLD).is_ok() {
                            return Ok(g);
                        }
                    }
                }
                Err(Error::RejectionLimit {
                    label: self.label.clone(),
                    retries: MAX_REJECTIONS,
                })
            }
        }
    }

    /// Empirical `k`-atom uniform discretization of a generator (identity for
    /// finite ensembles). Used where exact finite support is required.
    pub fn discretize(&self, atoms: usize, seed: u64) -> Result<MatrixEnsemble> {
        if self.is_finite() {
            return Ok(self.clone());
        }
        let mut rng = rng::stream_from_seed(rng::derive_seed(seed, &[0xD15C]));
        let draws = (0..atoms.max(1))
            .map(|_| self.sample(&mut rng))
            .collect::<Result<Vec<_>>>()?;
        MatrixEnsemble::uniform(format!("{}~{}", self.label, atoms), draws)
    }

    /// Stable SHA-256 of the ensemble definition.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("ensemble serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn from_toml_str(text: &str) -> Result<MatrixEnsemble> {
        let file: EnsembleFile = toml::from_str(text).map_err(|e| Error::Parse {
            what: "ensemble definition".into(),
            message: e.to_string(),
        })?;
        file.into_ensemble()
    }

    pub fn from_file(path: &Path) -> Result<MatrixEnsemble> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MatrixEnsemble::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let file = EnsembleFile::from_ensemble(self);
        toml::to_string(&file).expect("ensemble file serializes")
    }

    /// Rebuilds sampling tables after deserialization.
    pub fn rehydrate(mut self) -> Result<MatrixEnsemble> {
        match self.kind {
            EnsembleKind::Finite(atoms) => MatrixEnsemble::finite(
                self.label,
                atoms
                    .into_iter()
                    .map(|a| (a.matrix, a.probability))
                    .collect(),
            ),
            EnsembleKind::Generator(_) => {
                self.thresholds.clear();
                Ok(self)
            }
        }
    }
}

fn cumulative_thresholds(atoms: &[Atom]) -> Vec<u64> {
    let total: f64 = atoms.iter().map(|a| a.probability).sum();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(atoms.len());
    for (i, a) in atoms.iter().enumerate() {
        acc += a.probability / total;
        if i + 1 == atoms.len() {
            out.push(u64::MAX);
        } else {
            // 2^64 · acc, saturating
            out.push((acc * 18_446_744_073_709_551_616.0).min(u64::MAX as f64) as u64);
        }
    }
    out
}

#[inline]
fn pick(thresholds: &[u64], bits: u64) -> usize {
    match thresholds.len() {
        1 => 0,
        2 => (bits >= thresholds[0]) as usize,
        _ => thresholds
            .partition_point(|&t| t <= bits)
            .min(thresholds.len() - 1),
    }
}

fn draw_generator<R: RngCore + ?Sized>(
    generator: &Generator,
    dim: usize,
    rng: &mut R,
) -> Option<Matrix> {
    match *generator {
        Generator::Ginibre {} => {
            let data = (0..dim * dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            Matrix::new(dim, data).ok()
        }
        Generator::PositivePerturbed { noise } => {
            let data = (0..dim * dim)
                .map(|k| {
                    let base = if k % (dim + 1) == 0 { 2.0 } else { 1.0 };
                    base + noise * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            Matrix::new(dim, data).ok()
        }
        Generator::TailRotation { alpha, scale } => {
            let w: f64 = Weibull::new(scale, alpha).ok()?.sample(rng);
            let theta = rng.random::<f64>() * PI;
            let g = Matrix::diag(&[w.exp(), 1.0]).mul(&Matrix::rotation(theta));
            g.as_slice().iter().all(|x| x.is_finite()).then_some(g)
        }
    }
}

/// Builtin preset ensembles; see [`BUILTINS`].
pub fn builtin(name: &str) -> Result<MatrixEnsemble> {
    let m = |rows: &[&[f64]]| Matrix::from_rows(rows).expect("valid preset");
    match name {
        "oracleA" => MatrixEnsemble::uniform(
            name,
            vec![
                m(&[&[2.0, 1.0], &[1.0, 1.0]]),
                m(&[&[1.0, 1.0], &[1.0, 2.0]]),
            ],
        ),
        "scalar-rotation" => {
            let mut atoms = Vec::new();
            for c in [2.0, 0.5] {
                for theta in rotation_angles() {
                    atoms.push(Matrix::rotation(theta).scaled(c));
                }
            }
            MatrixEnsemble::uniform(name, atoms)
        }
        "rotation" => {
            MatrixEnsemble::uniform(name, rotation_angles().map(Matrix::rotation).collect())
        }
        "diag31" => MatrixEnsemble::uniform(name, vec![Matrix::diag(&[3.0, 1.0])]),
        "scalar3" => MatrixEnsemble::uniform(name, vec![Matrix::identity(2).scaled(3.0)]),
        "heavy-alpha" => MatrixEnsemble::generator(
            name,
            2,
            Generator::TailRotation {
                alpha: 0.5,
                scale: 1.0,
            },
        ),
        "exp-tail" => MatrixEnsemble::generator(
            name,
            2,
            Generator::TailRotation {
                alpha: 1.0,
                scale: 1.0,
            },
        ),
        "ginibre2" => MatrixEnsemble::generator(name, 2, Generator::Ginibre {}),
        "ginibre3" => MatrixEnsemble::generator(name, 3, Generator::Ginibre {}),
        "positive-perturbed" => {
            MatrixEnsemble::generator(name, 2, Generator::PositivePerturbed { noise: 0.3 })
        }
        _ => Err(Error::UnknownEnsemble {
            name: name.to_string(),
            available: BUILTINS.join(", "),
        }),
    }
}

/// `π·frac(√p)` for `p = 2, 3, 5, 7`. Multiples of a single irrational would
/// resonate together at its continued-fraction denominators and mix slowly.
fn rotation_angles() -> impl Iterator<Item = f64> {
    [2.0f64, 3.0, 5.0, 7.0]
        .into_iter()
        .map(|p| PI * p.sqrt().fract())
}

/// On-disk ensemble definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub schema_version: u32,
    #[serde(default)]
    pub label: Option<String>,
    pub dim: usize,
    /// `"finite"` or `"generator"`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub probability: f64,
    /// Rows of the matrix.
    pub matrix: Vec<Vec<f64>>,
}

impl EnsembleFile {
    pub fn into_ensemble(self) -> Result<MatrixEnsemble> {
        let parse_err = |message: String| Error::Parse {
            what: "ensemble definition".into(),
            message,
        };
        if self.schema_version != ENSEMBLE_SCHEMA_VERSION {
            return Err(parse_err(format!(
                "unsupported schema_version {} (expected {ENSEMBLE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let label = self.label.unwrap_or_else(|| "custom".into());
        match self.kind.as_str() {
            "finite" => {
                let specs = self
                    .atoms
                    .ok_or_else(|| parse_err("finite ensemble needs [[atoms]]".into()))?;
                let mut atoms = Vec::with_capacity(specs.len());
                for (i, a) in specs.into_iter().enumerate() {
                    if a.matrix.len() != self.dim || a.matrix.iter().any(|r| r.len() != self.dim) {
                        return Err(parse_err(format!("atom {i} is not {0}×{0}", self.dim)));
                    }
                    let g = Matrix::new(self.dim, a.matrix.concat())
                        .map_err(|e| parse_err(e.to_string()))?;
                    atoms.push((g, a.probability));
                }
                MatrixEnsemble::finite(label, atoms).map_err(|e| parse_err(e.to_string()))
            }
            "generator" => {
                let g = self.generator.ok_or_else(|| {
                    parse_err("generator ensemble needs a [generator] table".into())
                })?;
                MatrixEnsemble::generator(label, self.dim, g).map_err(|e| parse_err(e.to_string()))
            }
            other => Err(parse_err(format!(
                "unknown kind `{other}` (expected finite or generator)"
            ))),
        }
    }

    pub fn from_ensemble(e: &MatrixEnsemble) -> EnsembleFile {
        let (kind, atoms, generator) = match &e.kind {
            EnsembleKind::Finite(atoms) => (
                "finite",
                Some(
                    atoms
                        .iter()
                        .map(|a| AtomSpec {
                            probability: a.probability,
                            matrix: a
                                .matrix
                                .as_slice()
                                .chunks(e.dim)
                                .map(|r| r.to_vec())
                                .collect(),
                        })
                        .collect(),
                ),
                None,
            ),
            EnsembleKind::Generator(g) => ("generator", None, Some(g.clone())),
        };
        EnsembleFile {
            schema_version: ENSEMBLE_SCHEMA_VERSION,
            label: Some(e.label.clone()),
            dim: e.dim,
            kind: kind.into(),
            atoms,
            generator,
        }
    }
}

/// Tail regime of `log N(g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum TailVerdict {
    Exponential,
    Subexponential { alpha: f64 },
    Polynomial { p: f64 },
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDiagnostic {
    pub epsilon: f64,
    /// Estimate of `E[N(g)^ε]` (exact for finite support).
    pub empirical_mean: f64,
    pub std_error: f64,
    /// Rate for exponential tails, `α` for subexponential, `p` for polynomial; NaN otherwise.
    pub tail_exponent_fit: f64,
    /// Coefficient of determination of the selected tail model.
    pub tail_fit_r_squared: f64,
    pub sample_size: usize,
    pub verdict: TailVerdict,
    pub heuristic: bool,
}

/// Minimum sample count before a tail verdict is attempted.
pub const MIN_TAIL_SAMPLES: usize = 1000;

/// Estimates `E[N(g)^ε]` and classifies the tail of `log N(g)`.
pub fn moment_check(
    e: &MatrixEnsemble,
    epsilon: f64,
    m: usize,
    seed: u64,
) -> Result<MomentDiagnostic> {
    if !(epsilon > 0.0) {
        return Err(Error::input("epsilon must be positive"));
    }
    if m < 100 {
        return Err(Error::input("moment_check needs m ≥ 100"));
    }
    if let Some(atoms) = e.atoms() {
        let mut mean = 0.0;
        for a in atoms {
            mean += a.probability * linalg::size_n(&a.matrix)?.powf(epsilon);
        }
        return Ok(MomentDiagnostic {
            epsilon,
            empirical_mean: mean,
            std_error: 0.0,
            tail_exponent_fit: f64::NAN,
            tail_fit_r_squared: f64::NAN,
            sample_size: atoms.len(),
            verdict: TailVerdict::Exponential,
            heuristic: false,
        });
    }
    let mut rng = rng::stream_from_seed(rng::derive_seed(seed, &[0x4D4F]));
    let mut logs = Vec::with_capacity(m);
    for _ in 0..m {
        logs.push(linalg::size_n(&e.sample(&mut rng)?)?.ln());
    }
    let powers: Vec<f64> = logs.iter().map(|l| (epsilon * l).exp()).collect();
    let summary = Summary::of(&powers);
    let (verdict, exponent, r2) = classify_tail(&mut logs);
    Ok(MomentDiagnostic {
        epsilon,
        empirical_mean: summary.mean,
        std_error: summary.std_error(),
        tail_exponent_fit: exponent,
        tail_fit_r_squared: r2,
        sample_size: m,
        verdict,
        heuristic: true,
    })
}

/// Fits `log S(u)` on the top decile against `u^α` (α on a grid) and against
/// `log u`, choosing by residual sum of squares.
fn classify_tail(values: &mut [f64]) -> (TailVerdict, f64, f64) {
    let m = values.len();
    if m < MIN_TAIL_SAMPLES {
        return (TailVerdict::Unknown, f64::NAN, f64::NAN);
    }
    values.sort_by(|a, b| b.total_cmp(a));
    let top = m / 10;
    let mut us = Vec::with_capacity(top);
    let mut log_s = Vec::with_capacity(top);
    for (i, &u) in values.iter().take(top).enumerate() {
        if u > 0.0 {
            us.push(u);
            log_s.push(((i as f64 + 0.5) / m as f64).ln());
        }
    }
    if us.len() < 20 {
        return (TailVerdict::Unknown, f64::NAN, f64::NAN);
    }
    let mut best: Option<(f64, LinearFit)> = None;
    for step in 0..=190 {
        let alpha = 0.1 + 0.01 * step as f64;
        let xs: Vec<f64> = us.iter().map(|u| u.powf(alpha)).collect();
        if let Some(fit) = LinearFit::fit(&xs, &log_s) {
            if best.as_ref().is_none_or(|(_, b)| fit.rss < b.rss) {
                best = Some((alpha, fit));
            }
        }
    }
    let log_us: Vec<f64> = us.iter().map(|u| u.ln()).collect();
    let poly = LinearFit::fit(&log_us, &log_s);
    let Some((alpha, fit)) = best else {
        return (TailVerdict::Unknown, f64::NAN, f64::NAN);
    };
    if let Some(p) = poly {
        if p.rss < fit.rss && p.slope < 0.0 && p.r_squared > 0.9 {
            return (
                TailVerdict::Polynomial { p: -p.slope },
                -p.slope,
                p.r_squared,
            );
        }
    }
    if fit.r_squared < 0.9 || fit.slope >= 0.0 {
        return (TailVerdict::Unknown, f64::NAN, fit.r_squared);
    }
    if alpha >= 0.8 {
        // Rate of the pure exponential model on the same points.
        let lin = LinearFit::fit(&us, &log_s).expect("non-degenerate");
        (TailVerdict::Exponential, -lin.slope, lin.r_squared)
    } else {
        (TailVerdict::Subexponential { alpha }, alpha, fit.r_squared)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximalityReport {
    pub n: usize,
    pub m: usize,
    /// Median of `log(s₂/s₁)` at horizon `n/2` and `n`.
    pub median_log_gap_half: f64,
    pub median_log_gap: f64,
    /// Quartiles of `s₂/s₁` at horizon `n`.
    pub gap_quartiles: [f64; 3],
    /// Median projective diameter of a test cloud after `n` steps.
    pub median_cloud_diameter: f64,
    /// True when the gap stays near 1 from `n/2` to `n`: likely violation.
    pub stagnating: bool,
    pub heuristic: bool,
}

/// Heuristic probe for proximality: tracks the singular gap and the contraction
/// of a point cloud along sampled products.
pub fn proximality_probe(
    e: &MatrixEnsemble,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<ProximalityReport> {
    if n == 0 || m == 0 {
        return Err(Error::input("n and m must be ≥ 1"));
    }
    let d = e.dim();
    let half = (n / 2).max(1);
    let cloud: Vec<Vec<f64>> = (0..8)
        .map(|k| {
            let mut v = vec![0.0; d];
            for (i, x) in v.iter_mut().enumerate() {
                *x = ((k * d + i) as f64 * 1.7 + 0.3).sin();
            }
            v
        })
        .collect();
    let mut gaps_half = Vec::with_capacity(m);
    let mut gaps = Vec::with_capacity(m);
    let mut diameters = Vec::with_capacity(m);
    for t in 0..m {
        let mut rng: StreamRng = rng::trajectory_stream(rng::derive_seed(seed, &[0x9A7]), t as u64);
        let mut prod = Matrix::identity(d);
        let mut log_scale = 0.0;
        let mut log_det = 0.0;
        for step in 1..=n {
            let g = e.sample(&mut rng)?;
            log_det += g.determinant().abs().ln();
            prod = g.mul(&prod);
            let s = prod.max_abs();
            prod = prod.scaled(1.0 / s);
            log_scale += s.ln();
            if step == half || step == n {
                let lg = log_gap(&prod, log_scale, log_det);
                if step == half {
                    gaps_half.push(lg);
                }
                if step == n {
                    gaps.push(lg);
                }
            }
        }
        let images: Vec<linalg::ProjectivePoint> = cloud
            .iter()
            .map(|v| linalg::ProjectivePoint::new(&prod.apply(v)).expect("invertible"))
            .collect();
        let mut diam: f64 = 0.0;
        for i in 0..images.len() {
            for j in (i + 1)..images.len() {
                diam = diam.max(linalg::angular_distance(&images[i], &images[j]));
            }
        }
        diameters.push(diam);
    }
    let median_half = median(&mut gaps_half);
    let median_full = median(&mut gaps);
    let mut ratios: Vec<f64> = gaps.iter().map(|l| l.exp()).collect();
    ratios.sort_by(f64::total_cmp);
    let q = |p: f64| ratios[((ratios.len() - 1) as f64 * p).round() as usize];
    Ok(ProximalityReport {
        n,
        m,
        median_log_gap_half: median_half,
        median_log_gap: median_full,
        gap_quartiles: [q(0.25), q(0.5), q(0.75)],
        median_cloud_diameter: median(&mut diameters),
        stagnating: median_full > -0.1 && median_full >= median_half - 0.05,
        heuristic: true,
    })
}

/// `log(s₂/s₁)` of `e^{log_scale}·prod`; exact via the determinant for `d = 2`.
fn log_gap(prod: &Matrix, log_scale: f64, log_det: f64) -> f64 {
    if prod.dim() == 2 {
        let (s1, _) = linalg::singular_values_2x2(prod.as_slice());
        (log_det - 2.0 * (s1.ln() + log_scale)).min(0.0)
    } else {
        let sv = prod.svd().singular_values;
        (sv[1] / sv[0]).max(f64::MIN_POSITIVE).ln()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn deterministic_atom_always_sampled() {
        let e = builtin("diag31").unwrap();
        let mut rng = rng::stream_from_seed(1);
        for _ in 0..20 {
            assert_eq!(e.sample(&mut rng).unwrap(), Matrix::diag(&[3.0, 1.0]));
        }
    }

    #[test]
    fn sampling_replays_from_seed() {
        let e = builtin("oracleA").unwrap();
        let draw = |seed| {
            let mut rng = rng::stream_from_seed(seed);
            (0..64)
                .map(|_| e.sample(&mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn atom_frequencies_match_probabilities() {
        let e = MatrixEnsemble::finite(
            "skew",
            vec![
                (Matrix::identity(2), 0.25),
                (Matrix::diag(&[2.0, 1.0]), 0.75),
            ],
        )
        .unwrap();
        let mut rng = rng::stream_from_seed(3);
        let hits = (0..100_000)
            .filter(|_| e.pick_atom(rng.next_u64()) == 1)
            .count();
        assert!((hits as f64 / 1e5 - 0.75).abs() < 0.005);
        let three = MatrixEnsemble::uniform("three", vec![Matrix::identity(2); 3]).unwrap();
        assert_eq!(three.pick_atom(0), 0);
        assert_eq!(three.pick_atom(u64::MAX), 2);
        assert_eq!(three.pick_atom(u64::MAX / 2), 1);
    }

    #[test]
    fn generators_produce_invertible_matrices() {
        let e = builtin("positive-perturbed").unwrap();
        let mut rng = rng::stream_from_seed(5);
        for _ in 0..10_000 {
            let g = e.sample(&mut rng).unwrap();
            assert!(g.check_invertible(INVERTIBILITY_THRESHOLD).is_ok());
        }
    }

    #[test]
    fn builtins_resolve() {
        for name in BUILTINS {
            let e = builtin(name).unwrap();
            assert_eq!(e.label(), *name);
        }
        let a = builtin("oracleA").unwrap();
        assert_eq!(a.atoms().unwrap().len(), 2);
        assert!(a.atoms().unwrap().iter().all(|x| x.probability == 0.5));
        let sr = builtin("scalar-rotation").unwrap();
        let mean_log_c: f64 = sr
            .atoms()
            .unwrap()
            .iter()
            .map(|a| a.probability * a.matrix.determinant().abs().sqrt().ln())
            .sum();
        assert!(mean_log_c.abs() < 1e-15);
        match builtin("nope") {
            Err(Error::UnknownEnsemble { available, .. }) => assert!(available.contains("oracleA")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let e = builtin("oracleA").unwrap();
        let text = e.to_toml_string();
        let back = MatrixEnsemble::from_toml_str(&text).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.content_hash(), e.content_hash());

        let bad = r#"
schema_version = 1
dim = 2
kind = "finite"
[[atoms]]
probability = 0.5
matrix = [[1.0, 0.0], [0.0, 1.0]]
[[atoms]]
probability = 0.4
matrix = [[2.0, 0.0], [0.0, 1.0]]
"#;
        assert!(matches!(
            MatrixEnsemble::from_toml_str(bad),
            Err(Error::Parse { .. })
        ));

        let generator = r#"
schema_version = 1
dim = 2
kind = "generator"
[generator]
name = "tail-rotation"
alpha = 0.5
scale = 1.0
"#;
        let g = MatrixEnsemble::from_toml_str(generator).unwrap();
        assert!(!g.is_finite());
    }

    #[test]
    fn finite_moment_check_is_exact() {
        let e = builtin("oracleA").unwrap();
        let d = moment_check(&e, 0.5, 100, 0).unwrap();
        // N = golden ratio squared for both atoms.
        let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(d.empirical_mean, phi2.sqrt(), epsilon = 1e-12);
        assert_eq!(d.verdict, TailVerdict::Exponential);
    }

    #[test]
    fn exponential_and_weibull_tails_are_classified() {
        let e = builtin("exp-tail").unwrap();
        let d = moment_check(&e, 0.1, 100_000, 1).unwrap();
        assert_eq!(d.verdict, TailVerdict::Exponential);
        assert!((d.tail_exponent_fit - 1.0).abs() < 0.1, "{d:?}");
        let e = builtin("heavy-alpha").unwrap();
        let d = moment_check(&e, 0.1, 100_000, 1).unwrap();
        match d.verdict {
            TailVerdict::Subexponential { alpha } => assert!((alpha - 0.5).abs() < 0.1, "{d:?}"),
            other => panic!("expected subexponential, got {other:?} {d:?}"),
        }
    }

    #[test]
    fn proximality_probe_examples() {
        let r = proximality_probe(&builtin("rotation").unwrap(), 50, 20, 0).unwrap();
        assert!(r.stagnating);
        for q in r.gap_quartiles {
            assert!((q - 1.0).abs() < 1e-12);
        }
        let r = proximality_probe(&builtin("diag31").unwrap(), 40, 3, 0).unwrap();
        assert_relative_eq!(r.median_log_gap, -40.0 * 3f64.ln(), epsilon = 1e-9);
        let r = proximality_probe(&builtin("oracleA").unwrap(), 40, 50, 0).unwrap();
        assert!(!r.stagnating);
        assert!(r.median_log_gap < 2.0 * r.median_log_gap_half * 0.9);
    }
}
