//! Planar transfer-operator machinery: grid discretization of `P_s` and
//! `R_{s,iu}`, dominant eigen-triples, the fitted log-eigenvalue `Λ`, the
//! Cramér series, the saddle-point solver, and the drift functionals
//! `b_φ`, `d_φ`.

pub mod chebyshev;
pub mod grid;
pub mod model;
pub mod operator;

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use self::grid::{GridFunction, ProjectiveGrid};
pub use self::model::{
    cramer_coefficients, eigendata, fit_lambda, mean_log_size, tilted_kernel, FitOptions,
    SaddleSolution, SpectralModel, Tail,
};
pub use self::operator::{
    build_ps, build_pz, dominant_eig, dominant_eig_complex, DiscretizedOperator, EigenData,
};

use crate::ensemble::MatrixEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{DualPoint, ProjectivePoint};
use crate::rng;
use crate::stats::{combined_se, Summary};
use crate::walk::Driver;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedEigReport {
    pub s: f64,
    pub u: f64,
    pub grid_size: usize,
    /// Dominant eigenvalue of the discretized `R_{s,iu}`.
    pub grid_re: f64,
    pub grid_im: f64,
    /// `exp(Λ(s+iu) − Λ(s) − iuΛ'(s))` from the fitted `Λ`.
    pub fit_re: f64,
    pub fit_im: f64,
    pub grid_modulus: f64,
    pub grid_phase: f64,
    pub fit_modulus: f64,
    pub fit_phase: f64,
    pub discrepancy: f64,
    /// `max_j |Σ_k R_{s,0}(j,k) − 1|`.
    pub markov_defect: f64,
    pub iterations: usize,
}

/// Compares the dominant eigenvalue of the grid `R_{s,iu}` with the closed form
/// through the analytic continuation of the fitted `Λ`.
pub fn perturbed_eig_check(
    e: &MatrixEnsemble,
    model: &SpectralModel,
    s: f64,
    u: f64,
    grid: ProjectiveGrid,
) -> Result<PerturbedEigReport> {
    let lambda_prime = model.lambda_derivative(s, 1)?;
    let eig = eigendata(e, s, grid, None)?;
    if eig.gap_ratio >= model::SIMPLE_LIMIT {
        return Err(Error::NoConvergence {
            iterations: eig.iterations,
            residual: eig.residual,
            gap_ratio: eig.gap_ratio,
        });
    }
    let ps = build_ps(e, s, grid)?;
    let class = ps
        .recurrent_class()
        .unwrap_or_else(|| vec![true; grid.size()]);
    let markov = ps.conjugated(&eig.r, 1.0 / eig.kappa);
    let markov_defect = markov
        .row_sums()
        .iter()
        .zip(&class)
        .filter(|(_, &k)| k)
        .map(|(x, _)| (x - 1.0).abs())
        .fold(0.0, f64::max);

    let scale = Complex64::new(0.0, -u * lambda_prime).exp() / eig.kappa;
    let r_op = build_pz(e, s, u, grid)?.conjugated(&eig.r, scale);
    let (grid_value, iterations) = dominant_eig_complex(&r_op, 1e-13)?;
    let z = Complex64::new(s, u);
    let fit_value =
        (model.lambda_complex(z) - model.lambda_at(s)? - Complex64::new(0.0, u * lambda_prime))
            .exp();
    Ok(PerturbedEigReport {
        s,
        u,
        grid_size: grid.size(),
        grid_re: grid_value.re,
        grid_im: grid_value.im,
        fit_re: fit_value.re,
        fit_im: fit_value.im,
        grid_modulus: grid_value.norm(),
        grid_phase: grid_value.arg(),
        fit_modulus: fit_value.norm(),
        fit_phase: fit_value.arg(),
        discrepancy: (grid_value - fit_value).norm(),
        markov_defect,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPhi {
    pub value: f64,
    /// π_s-mass of the grid cell containing the zero of `δ(y, ·)`.
    pub singular_cell_mass: f64,
    pub warning: Option<String>,
}

/// Mass of the singular cell above which the grid is too coarse for `log δ`.
pub const SINGULAR_MASS_LIMIT: f64 = 1e-3;

/// `∫ φ(x) log δ(y, x) π(dx)` for a grid measure `pi` (cell masses).
///
/// Each node carries its mass uniformly over its cell, and `log δ` is averaged
/// over the cell exactly in its logarithmic part, so the integrable singularity
/// at `δ = 0` needs no clamping.
pub fn d_phi(pi: &[f64], phi: &GridFunction, y: &DualPoint) -> Result<DPhi> {
    if y.dim() != 2 {
        return Err(Error::Unsupported("d_phi is planar".into()));
    }
    if pi.len() != phi.values.len() {
        return Err(Error::input("π and φ live on different grids"));
    }
    let grid = ProjectiveGrid::new(pi.len())?;
    let h = grid.spacing();
    let f = y.functional();
    let zero = (f[1].atan2(f[0]) + FRAC_PI_2).rem_euclid(PI);
    let (singular_cell, _) = grid.locate((zero + 0.5 * h).rem_euclid(PI));
    let mut value = 0.0;
    for (j, (&mass, &p)) in pi.iter().zip(&phi.values).enumerate() {
        if mass == 0.0 || p == 0.0 {
            continue;
        }
        value += mass * p * cell_mean_log_sin(grid.node(j) - 0.5 * h - zero, h);
    }
    let singular_cell_mass = pi[singular_cell];
    let warning = (singular_cell_mass > SINGULAR_MASS_LIMIT).then(|| {
        format!("π-mass {singular_cell_mass:.2e} next to δ = 0 exceeds {SINGULAR_MASS_LIMIT:e}; refine the grid")
    });
    Ok(DPhi {
        value,
        singular_cell_mass,
        warning,
    })
}

/// `(1/h)∫_{a}^{a+h} log|sin w| dw`.
fn cell_mean_log_sin(a: f64, h: f64) -> f64 {
    // Shift into (−π/2, π/2] and split at the wrap point.
    let a = (a + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    let b = a + h;
    let integral = if b > FRAC_PI_2 {
        integral_log_sin(a, FRAC_PI_2) + integral_log_sin(-FRAC_PI_2, b - PI)
    } else {
        integral_log_sin(a, b)
    };
    integral / h
}

/// `∫_a^b log|sin w| dw` for `−π/2 ≤ a < b ≤ π/2`.
fn integral_log_sin(a: f64, b: f64) -> f64 {
    let antiderivative = |w: f64| if w == 0.0 { 0.0 } else { w * w.abs().ln() - w };
    let singular = antiderivative(b) - antiderivative(a);
    // Smooth remainder log(sin w / w) by 4-point Gauss–Legendre.
    const NODES: [f64; 4] = [
        -0.861_136_311_594_052_6,
        -0.339_981_043_584_856_3,
        0.339_981_043_584_856_3,
        0.861_136_311_594_052_6,
    ];
    const WEIGHTS: [f64; 4] = [
        0.347_854_845_137_453_9,
        0.652_145_154_862_546_1,
        0.652_145_154_862_546_1,
        0.347_854_845_137_453_9,
    ];
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let smooth: f64 = NODES
        .iter()
        .zip(WEIGHTS)
        .map(|(x, w)| {
            let t = mid + half * x;
            let sinc = if t.abs() < 1e-8 {
                1.0 - t * t / 6.0
            } else {
                t.sin() / t
            };
            w * sinc.ln()
        })
        .sum::<f64>()
        * half;
    singular + smooth
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BPhiTrace {
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BPhi {
    pub value: f64,
    pub se: f64,
    pub trace: Vec<BPhiTrace>,
    pub warning: Option<String>,
}

/// Monte Carlo estimate of `b_φ(x) = lim E[(σ(G_n,x) − nΛ'(s))φ(G_n·x)]` under
/// the driver's law (μ, or `Q_s` for a tilted kernel). The value is the mean
/// over the last half of the horizons.
pub fn b_phi(
    driver: Driver<'_>,
    model: &SpectralModel,
    phi: &GridFunction,
    x: &ProjectivePoint,
    horizons: &[usize],
    m: usize,
    seed: u64,
) -> Result<BPhi> {
    if horizons.is_empty() {
        return Err(Error::input("b_phi needs at least one horizon"));
    }
    let s = match driver {
        Driver::Plain(_) => 0.0,
        Driver::Tilted(k) => k.s,
    };
    let lambda_prime = model.lambda_derivative(s, 1)?;
    let f = DualPoint::basis(2, 0);
    let mut trace = Vec::with_capacity(horizons.len());
    for &n in horizons {
        let samples = driver.run(x, &f, n, m, rng::derive_seed(seed, &[n as u64]))?;
        let values: Vec<f64> = samples
            .iter()
            .map(|w| {
                let p = phi.eval(&w.terminal_direction);
                if p == 0.0 {
                    0.0
                } else {
                    (w.sigma_n - n as f64 * lambda_prime) * p
                }
            })
            .collect();
        let summary = Summary::of(&values);
        trace.push(BPhiTrace {
            n,
            estimate: summary.mean,
            se: summary.std_error(),
        });
    }
    let tail = &trace[trace.len() / 2..];
    let value = tail.iter().map(|t| t.estimate).sum::<f64>() / tail.len() as f64;
    let se = tail.iter().fold(0.0, |acc, t| combined_se(acc, t.se)) / tail.len() as f64;
    let drift = (tail[tail.len() - 1].estimate - tail[0].estimate).abs();
    let warning = (drift > 0.1 * value.abs() && drift > 0.0).then(|| {
        format!("no plateau: estimates drift by {drift:.3e} over the last half of the horizons")
    });
    Ok(BPhi {
        value,
        se,
        trace,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::builtin;
    use approx::assert_relative_eq;

    #[test]
    fn cell_average_of_log_sin_integrates_to_minus_log2() {
        for m in [64usize, 1000] {
            let h = PI / m as f64;
            let offset = 0.123;
            let total: f64 = (0..m)
                .map(|j| cell_mean_log_sin(offset + j as f64 * h, h))
                .sum::<f64>()
                / m as f64;
            assert_relative_eq!(total, -(2f64.ln()), epsilon = 1e-12);
        }
    }

    #[test]
    fn d_phi_is_rotation_invariant_for_uniform_measure() {
        let grid = ProjectiveGrid::new(512).unwrap();
        let pi = vec![1.0 / 512.0; 512];
        let one = GridFunction::constant(grid, 1.0);
        let a = d_phi(&pi, &one, &DualPoint::from_angle(0.1)).unwrap().value;
        let b = d_phi(&pi, &one, &DualPoint::from_angle(2.3)).unwrap().value;
        let c = d_phi(&pi, &one, &DualPoint::basis(2, 0)).unwrap().value;
        assert!((a - b).abs() < 1e-8 && (a - c).abs() < 1e-8);
        let zero = GridFunction::constant(grid, 0.0);
        assert_eq!(
            d_phi(&pi, &zero, &DualPoint::basis(2, 0)).unwrap().value,
            0.0
        );
    }

    #[test]
    fn perturbed_check_at_zero_frequency() {
        let e = builtin("oracleA").unwrap();
        let model = fit_lambda(
            &e,
            &FitOptions {
                s_max: Some(0.3),
                n_s: 13,
                grid_size: 256,
                ..FitOptions::default()
            },
        )
        .unwrap();
        let rep = perturbed_eig_check(&e, &model, 0.05, 0.0, model.grid()).unwrap();
        assert!((rep.grid_re - 1.0).abs() < 1e-8 && rep.grid_im.abs() < 1e-8);
        assert!(rep.markov_defect < 1e-10);
    }

    #[test]
    fn perturbed_check_on_scalar_rotation() {
        let e = builtin("scalar-rotation").unwrap();
        let model = fit_lambda(
            &e,
            &FitOptions {
                s_max: Some(1.0),
                n_s: 21,
                grid_size: 256,
                ..FitOptions::default()
            },
        )
        .unwrap();
        let u = 0.2;
        let rep = perturbed_eig_check(&e, &model, 0.0, u, model.grid()).unwrap();
        let exact = Complex64::new((u * 2f64.ln()).cos(), 0.0);
        assert!((Complex64::new(rep.grid_re, rep.grid_im) - exact).norm() < 1e-6);
        assert!(rep.discrepancy < 1e-6);
    }

    #[test]
    fn b_phi_of_zero_is_zero() {
        let e = builtin("oracleA").unwrap();
        let model = fit_lambda(
            &e,
            &FitOptions {
                s_max: Some(0.3),
                n_s: 11,
                grid_size: 128,
                ..FitOptions::default()
            },
        )
        .unwrap();
        let zero = GridFunction::constant(model.grid(), 0.0);
        let b = b_phi(
            Driver::Plain(&e),
            &model,
            &zero,
            &ProjectivePoint::basis(2, 0),
            &[4, 8],
            100,
            0,
        )
        .unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.warning.is_none());
    }
}
