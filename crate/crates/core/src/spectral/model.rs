use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chebyshev::{self, ChebyshevSeries};
use super::grid::ProjectiveGrid;
use super::operator::{build_ps, dominant_eig, EigenData};
use crate::ensemble::MatrixEnsemble;
use crate::error::{Error, Result};
use crate::linalg;
use crate::walk::TiltedKernel;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Gap ratio above which an s-node counts as having lost its spectral gap.
pub const GAP_LIMIT: f64 = 0.95;
/// Gap ratio at `s = 0` treated as a non-simple dominant eigenvalue.
pub const SIMPLE_LIMIT: f64 = 1.0 - 1e-9;
/// `γ₂` at or below this is a degenerate (non-Gaussian) model.
pub const GAMMA2_TOL: f64 = 1e-10;
/// Default validity radius of the truncated Cramér series.
pub const DEFAULT_ZETA_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Half-width of the s-range; `None` uses `0.3 / E[log N(g)]`.
    pub s_max: Option<f64>,
    /// Number of Chebyshev nodes (≥ 9).
    pub n_s: usize,
    pub grid_size: usize,
    pub zeta_radius: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            s_max: None,
            n_s: 13,
            grid_size: 1024,
            zeta_radius: DEFAULT_ZETA_RADIUS,
        }
    }
}

/// Fitted spectral data of `P_s` on a planar grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    pub schema_version: u32,
    pub ensemble_label: String,
    pub ensemble_hash: String,
    pub grid_size: usize,
    pub s_max: f64,
    /// Chebyshev nodes, decreasing.
    pub s_grid: Vec<f64>,
    pub kappa: Vec<f64>,
    pub lambda: Vec<f64>,
    pub spectral_gap: Vec<f64>,
    pub eigen_residual: Vec<f64>,
    /// Chebyshev coefficients of `Λ` on `[−s_max, s_max]`.
    pub lambda_series: ChebyshevSeries,
    /// `γ₁ … γ₅ = Λ^{(k)}(0)`.
    pub gammas: [f64; 5],
    pub sigma: f64,
    /// Coefficients of `ζ(τ) = c₀ + c₁τ + c₂τ²`.
    pub cramer: [f64; 3],
    pub zeta_radius: f64,
    /// Stationary measure ν at `s = 0` as grid masses.
    pub nu: Vec<f64>,
    /// `max_j |r₀(θ_j) − 1|`.
    pub r0_deviation: f64,
    pub convex_on_range: bool,
    pub warnings: Vec<String>,
    /// Per-node eigen-triples (not serialized).
    #[serde(skip)]
    pub eigen: Vec<EigenData>,
}

/// Which tail a saddle point serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Upper,
    Lower,
}

impl Tail {
    pub fn sign(self) -> f64 {
        match self {
            Tail::Upper => 1.0,
            Tail::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub t: f64,
    pub n: usize,
    pub tail: Tail,
    pub s_star: f64,
    pub residual: f64,
    pub series_value: f64,
    pub iterations: usize,
}

/// `E[log N(g)]` for a finite ensemble.
pub fn mean_log_size(e: &MatrixEnsemble) -> Result<f64> {
    let atoms = e
        .atoms()
        .ok_or_else(|| Error::Unsupported("spectral fits need a finite-support ensemble".into()))?;
    let mut acc = 0.0;
    for a in atoms {
        acc += a.probability * linalg::size_n(&a.matrix)?.ln();
    }
    Ok(acc)
}

/// Dominant eigen-triple of `P_s`, with `r_s` normalized against `reference`.
pub fn eigendata(
    e: &MatrixEnsemble,
    s: f64,
    grid: ProjectiveGrid,
    reference: Option<&[f64]>,
) -> Result<EigenData> {
    dominant_eig(&build_ps(e, s, grid)?, reference)
}

/// Tilted kernel of `Q_s` built from a fresh eigen-solve at `s`.
pub fn tilted_kernel(
    e: &MatrixEnsemble,
    s: f64,
    grid: ProjectiveGrid,
) -> Result<(TiltedKernel, EigenData)> {
    let eig = eigendata(e, s, grid, None)?;
    let kernel = TiltedKernel::new(e, s, eig.kappa, eig.r.clone())?;
    Ok((kernel, eig))
}

/// Cramér coefficients from `γ₂ … γ₅`.
pub fn cramer_coefficients(g: &[f64; 5]) -> [f64; 3] {
    let (g2, g3, g4, g5) = (g[1], g[2], g[3], g[4]);
    [
        g3 / (6.0 * g2.powf(1.5)),
        (g4 * g2 - 3.0 * g3 * g3) / (24.0 * g2.powi(3)),
        (g5 * g2 * g2 - 10.0 * g4 * g3 * g2 + 15.0 * g3.powi(3)) / (120.0 * g2.powf(4.5)),
    ]
}

/// Fits `Λ = log κ` on a Chebyshev s-grid and derives `γ₁…γ₅`, `σ`, `ζ`.
pub fn fit_lambda(e: &MatrixEnsemble, options: &FitOptions) -> Result<SpectralModel> {
    if options.n_s < 9 {
        return Err(Error::input("n_s must be ≥ 9"));
    }
    let grid = ProjectiveGrid::new(options.grid_size)?;
    let mut warnings = Vec::new();
    let base = eigendata(e, 0.0, grid, None)?;
    let nu = base.nu_s.clone();
    let r0_deviation = base.r.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);

    let mut s_max = match options.s_max {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::input(format!("s_max must be positive, got {s}"))),
        None => {
            let m = mean_log_size(e)?;
            if m > 0.0 {
                0.3 / m
            } else {
                1.0
            }
        }
    };
    let gap_at_zero_high = base.gap_ratio > GAP_LIMIT;
    if gap_at_zero_high && base.gap_ratio < SIMPLE_LIMIT {
        warnings.push(format!(
            "gap ratio {:.4} at s = 0 exceeds {GAP_LIMIT}; convergence of the power iteration is slow",
            base.gap_ratio
        ));
    }

    let mut shrinks = 0;
    let (s_grid, eigen) = loop {
        let s_grid = chebyshev::nodes(s_max, options.n_s);
        let eigen = s_grid
            .par_iter()
            .map(|&s| eigendata(e, s, grid, Some(&nu)))
            .collect::<Result<Vec<_>>>()?;
        let worst = eigen.iter().map(|d| d.gap_ratio).fold(0.0, f64::max);
        if worst > GAP_LIMIT && !gap_at_zero_high && shrinks < 20 {
            warnings.push(format!(
                "gap ratio {worst:.4} > {GAP_LIMIT} on [−{s_max:.4}, {s_max:.4}]; shrinking s_max by 0.7"
            ));
            s_max *= 0.7;
            shrinks += 1;
            continue;
        }
        break (s_grid, eigen);
    };

    let kappa: Vec<f64> = eigen.iter().map(|d| d.kappa).collect();
    let lambda: Vec<f64> = kappa.iter().map(|k| k.ln()).collect();
    let series = ChebyshevSeries::interpolate(s_max, &lambda);
    let mut gammas = [0.0; 5];
    let mut d = series.clone();
    for g in gammas.iter_mut() {
        d = d.derivative();
        *g = d.eval(0.0);
    }
    if !(gammas[1] > GAMMA2_TOL) {
        return Err(Error::Degenerate(format!(
            "γ₂ = Λ''(0) = {:.3e} ≤ {GAMMA2_TOL:e}: the cocycle has no Gaussian fluctuations",
            gammas[1]
        )));
    }
    if base.gap_ratio >= SIMPLE_LIMIT {
        return Err(Error::Degenerate(format!(
            "dominant eigenvalue of P_0 is not simple (gap ratio {:.9}); γ₂ is not identifiable",
            base.gap_ratio
        )));
    }
    let second = series.nth_derivative(2);
    let convex_on_range = (0..=200).all(|k| second.eval(s_max * (k as f64 / 100.0 - 1.0)) > 0.0);
    if !convex_on_range {
        warnings.push("fitted Λ'' is not positive on the whole s-range".into());
    }
    Ok(SpectralModel {
        schema_version: MODEL_SCHEMA_VERSION,
        ensemble_label: e.label().to_string(),
        ensemble_hash: e.content_hash(),
        grid_size: options.grid_size,
        s_max,
        spectral_gap: eigen.iter().map(|d| d.gap_ratio).collect(),
        eigen_residual: eigen.iter().map(|d| d.residual).collect(),
        s_grid,
        kappa,
        lambda,
        lambda_series: series,
        sigma: gammas[1].sqrt(),
        cramer: cramer_coefficients(&gammas),
        gammas,
        zeta_radius: options.zeta_radius,
        nu,
        r0_deviation,
        convex_on_range,
        warnings,
        eigen,
    })
}

impl SpectralModel {
    pub fn grid(&self) -> ProjectiveGrid {
        ProjectiveGrid::new(self.grid_size).expect("validated at fit time")
    }

    pub fn lambda1(&self) -> f64 {
        self.gammas[0]
    }

    fn check_range(&self, s: f64) -> Result<()> {
        if s.abs() > self.s_max * (1.0 + 1e-12) {
            return Err(Error::OutOfRange {
                what: "s outside the fitted range".into(),
                value: s,
                lo: -self.s_max,
                hi: self.s_max,
            });
        }
        Ok(())
    }

    /// `Λ(s)` from the fit.
    pub fn lambda_at(&self, s: f64) -> Result<f64> {
        self.check_range(s)?;
        Ok(self.lambda_series.eval(s))
    }

    /// `Λ^{(k)}(s)` from the fit.
    pub fn lambda_derivative(&self, s: f64, k: usize) -> Result<f64> {
        self.check_range(s)?;
        Ok(self.lambda_series.nth_derivative(k).eval(s))
    }

    /// Analytic continuation `Λ(z)`.
    pub fn lambda_complex(&self, z: Complex64) -> Complex64 {
        self.lambda_series.eval_complex(z)
    }

    /// Three-term Cramér series `ζ(τ)`.
    pub fn cramer_zeta(&self, tau: f64) -> Result<f64> {
        if tau.abs() > self.zeta_radius {
            return Err(Error::OutOfRange {
                what: "Cramér series argument t/√n beyond the validity radius".into(),
                value: tau,
                lo: -self.zeta_radius,
                hi: self.zeta_radius,
            });
        }
        let [c0, c1, c2] = self.cramer;
        Ok(c0 + c1 * tau + c2 * tau * tau)
    }

    /// Three-term root series of the saddle equation.
    pub fn saddle_series(&self, tau: f64) -> f64 {
        let [_, g2, g3, g4, _] = self.gammas;
        tau / g2.sqrt()
            - g3 / (2.0 * g2 * g2) * tau * tau
            - (g4 * g2 - 3.0 * g3 * g3) / (6.0 * g2.powf(3.5)) * tau.powi(3)
    }

    /// Solves `Λ'(s) − Λ'(0) = ±σt/√n` by Newton's method.
    pub fn solve_saddle(&self, t: f64, n: usize, tail: Tail) -> Result<SaddleSolution> {
        if n == 0 || !t.is_finite() {
            return Err(Error::input("solve_saddle needs n ≥ 1 and finite t"));
        }
        let tau = tail.sign() * t / (n as f64).sqrt();
        let target = self.sigma * tau;
        let d1 = self.lambda_series.derivative();
        let d2 = d1.derivative();
        let base = d1.eval(0.0);
        let reach_hi = d1.eval(self.s_max) - base;
        let reach_lo = d1.eval(-self.s_max) - base;
        if target > reach_hi || target < reach_lo {
            let max_t = match tail {
                Tail::Upper => reach_hi,
                Tail::Lower => -reach_lo,
            } * (n as f64).sqrt()
                / self.sigma;
            return Err(Error::OutOfRange {
                what: format!("saddle target beyond the fitted s-range; max attainable t is {max_t:.4} at n = {n}"),
                value: t,
                lo: 0.0,
                hi: max_t,
            });
        }
        let series_value = self.saddle_series(tau);
        let mut s = (tau / self.sigma).clamp(-self.s_max, self.s_max);
        let mut residual = d1.eval(s) - base - target;
        let mut iterations = 0;
        while residual.abs() > 1e-13 && iterations < 100 {
            let slope = d2.eval(s);
            if !(slope > 0.0) {
                return Err(Error::Degenerate(format!("Λ'' = {slope:e} ≤ 0 at s = {s}")));
            }
            s = (s - residual / slope).clamp(-self.s_max, self.s_max);
            residual = d1.eval(s) - base - target;
            iterations += 1;
        }
        if residual.abs() > 1e-10 {
            return Err(Error::NoConvergence {
                iterations,
                residual: residual.abs(),
                gap_ratio: f64::NAN,
            });
        }
        Ok(SaddleSolution {
            t,
            n,
            tail,
            s_star: s,
            residual: residual.abs(),
            series_value,
            iterations,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<SpectralModel> {
        let model: SpectralModel = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "spectral model".into(),
            message: e.to_string(),
        })?;
        if model.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Parse {
                what: "spectral model".into(),
                message: format!("unsupported schema_version {}", model.schema_version),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SpectralModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SpectralModel::from_json(&text)
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// `ν(φ)` for a grid function.
    pub fn nu_integral(&self, phi: &[f64]) -> f64 {
        self.nu.iter().zip(phi).map(|(a, b)| a * b).sum()
    }
}
