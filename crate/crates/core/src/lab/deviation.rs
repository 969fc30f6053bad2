use serde::{Deserialize, Serialize};

use super::{non_increasing, nu_of, ExpansionReport, Provenance, ReportRow, Verdict, Windows};
use crate::ensemble::MatrixEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{DualPoint, ProjectivePoint};
use crate::rng;
use crate::spectral::{tilted_kernel, GridFunction, SpectralModel, Tail};
use crate::stats::{normal_cdf, normal_sf, Summary};
use crate::walk::{run_walks, tilted_run_walks, WalkSample};

/// Importance-sampling estimate of `E[h]` from (possibly tilted) walks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub value: f64,
    pub se: f64,
    pub rel_se: f64,
    /// Samples with `h ≠ 0`.
    pub hits: usize,
}

/// `(1/m) Σ exp(log w_i)·h(sample_i)`. For untilted samples the weights are 1
/// and this is the plain Monte Carlo mean.
pub fn tail_estimate(samples: &[WalkSample], h: impl Fn(&WalkSample) -> f64) -> TailEstimate {
    let mut hits = 0;
    let values: Vec<f64> = samples
        .iter()
        .map(|w| {
            let v = h(w);
            if v == 0.0 {
                0.0
            } else {
                hits += 1;
                v * w.importance_log_weight.exp()
            }
        })
        .collect();
    let s = Summary::of(&values);
    let se = s.std_error();
    TailEstimate {
        value: s.mean,
        se,
        rel_se: if s.mean != 0.0 {
            se / s.mean.abs()
        } else {
            f64::INFINITY
        },
        hits,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpOptions {
    pub n: usize,
    pub t_grid: Vec<f64>,
    pub m: usize,
    pub seed: u64,
    /// Also run the lower tail for every `t > 0`.
    pub lower_tail: bool,
    pub phi: Option<GridFunction>,
}

/// Walks of length `n` under μ (`s = 0`) or under the tilted law `Q_s`.
fn walks_at(
    e: &MatrixEnsemble,
    model: &SpectralModel,
    s: f64,
    x0: &ProjectivePoint,
    f: &DualPoint,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<WalkSample>> {
    if s == 0.0 {
        return run_walks(e, x0, f, n, m, seed);
    }
    let (kernel, _) = tilted_kernel(e, s, model.grid())?;
    tilted_run_walks(&kernel, x0, f, n, m, seed)
}

fn phi_value(phi: Option<&GridFunction>, w: &WalkSample) -> f64 {
    phi.map_or(1.0, |p| p.eval(&w.terminal_direction))
}

fn failed_row(report: &mut ExpansionReport, label: &str, n: usize, x: f64, err: &Error) {
    report.rows.push(ReportRow {
        label: label.into(),
        n,
        x,
        empirical: f64::NAN,
        se: f64::NAN,
        theoretical: f64::NAN,
        statistic: f64::NAN,
        statistic_se: f64::NAN,
        flag: Some(format!("error: {err}")),
    });
    report.verdicts.push(Verdict {
        criterion: format!("{label} row at x = {x} computed"),
        window: "no error".into(),
        value: f64::NAN,
        pass: false,
    });
}

/// Cramér-type moderate deviation ratios
/// `P(coeff − nλ₁ ≥ √nσt) / ((1−Φ(t))·e^{t³ζ(t/√n)/√n})` (and the lower tail),
/// with the probabilities importance-sampled at the saddle point `s*(t)`.
pub fn mdp_expansion_check(
    e: &MatrixEnsemble,
    model: &SpectralModel,
    x0: &ProjectivePoint,
    f: &DualPoint,
    opts: &MdpOptions,
    windows: &Windows,
    provenance: Provenance,
) -> Result<ExpansionReport> {
    let n = opts.n;
    if n == 0 || opts.m < 2 {
        return Err(Error::input("mdp_expansion_check needs n ≥ 1 and m ≥ 2"));
    }
    let phi = opts.phi.as_ref();
    let nu_phi = phi.map_or(1.0, |p| nu_of(model, p));
    let rn = (n as f64).sqrt();
    let (lambda1, sigma) = (model.lambda1(), model.sigma);
    let mut report = ExpansionReport::new("mdp", "t", "ratio", opts.m, provenance);
    report.n_values.push(n);
    report.summary.insert("nu_phi".into(), nu_phi);
    let mut jobs = Vec::new();
    for &t in &opts.t_grid {
        if t < 0.0 {
            return Err(Error::input(
                "t-grid for mdp_expansion_check must be non-negative",
            ));
        }
        jobs.push((t, Tail::Upper));
        if opts.lower_tail && t > 0.0 {
            jobs.push((t, Tail::Lower));
        }
    }
    for (row, (t, tail)) in jobs.into_iter().enumerate() {
        let label = match tail {
            Tail::Upper => "upper",
            Tail::Lower => "lower",
        };
        let seed = rng::derive_seed(opts.seed, &[row as u64]);
        let s_star = if t == 0.0 {
            Ok(0.0)
        } else {
            model.solve_saddle(t, n, tail).map(|sol| sol.s_star)
        };
        let theory = if t == 0.0 {
            Ok(0.5)
        } else {
            let tau = tail.sign() * t / rn;
            model.cramer_zeta(tau).map(|z| match tail {
                Tail::Upper => normal_sf(t) * (t.powi(3) / rn * z).exp(),
                Tail::Lower => normal_cdf(-t) * (-t.powi(3) / rn * z).exp(),
            })
        };
        let outcome = s_star.and_then(|s| {
            let theory = theory?;
            let samples = walks_at(e, model, s, x0, f, n, opts.m, seed)?;
            let threshold = rn * sigma * t;
            let est = tail_estimate(&samples, |w| {
                let dev = w.coeff_log_n - n as f64 * lambda1;
                let inside = match tail {
                    Tail::Upper => dev >= threshold,
                    Tail::Lower => dev <= -threshold,
                };
                if inside {
                    phi_value(phi, w)
                } else {
                    0.0
                }
            });
            Ok((s, theory * nu_phi, est))
        });
        match outcome {
            Ok((s, theory, est)) => {
                let ratio = est.value / theory;
                let ratio_se = est.se / theory;
                report.rows.push(ReportRow {
                    label: label.into(),
                    n,
                    x: t,
                    empirical: est.value,
                    se: est.se,
                    theoretical: theory,
                    statistic: ratio,
                    statistic_se: ratio_se,
                    flag: Some(format!("s*={s:.6} hits={}", est.hits)),
                });
                if t == 0.0 {
                    let z = (ratio - 1.0).abs() / ratio_se.max(1e-300);
                    report.verdicts.push(Verdict::at_most(
                        format!("{label} t=0 |ratio-1|/se"),
                        z,
                        windows.median_se,
                    ));
                } else {
                    let (lo, hi) = windows.mdp_ratio;
                    report.verdicts.push(Verdict::within(
                        format!("{label} ratio at t={t:.4}"),
                        ratio,
                        lo,
                        hi,
                    ));
                    report.verdicts.push(Verdict::at_most(
                        format!("{label} relative se at t={t:.4}"),
                        est.rel_se,
                        windows.mdp_max_rel_se,
                    ));
                }
            }
            Err(err) => {
                report
                    .warnings
                    .push(format!("{label} tail at t = {t}: {err}"));
                failed_row(&mut report, label, n, t, &err);
            }
        }
    }
    Ok(report)
}

/// Moderate deviation principle: `(n/b_n²) log P(coeff − nλ₁ ≥ t·b_n)` against
/// `−t²/(2σ²)` along `b_n = n^{b_exponent}`.
#[allow(clippy::too_many_arguments)]
pub fn mdp_principle_check(
    e: &MatrixEnsemble,
    model: &SpectralModel,
    x0: &ProjectivePoint,
    f: &DualPoint,
    n_grid: &[usize],
    t: f64,
    b_exponent: f64,
    m: usize,
    seed: u64,
    windows: &Windows,
    provenance: Provenance,
) -> Result<ExpansionReport> {
    if !(b_exponent > 0.5 && b_exponent < 1.0) {
        return Err(Error::input(format!(
            "b_n = n^{b_exponent} needs 1/2 < exponent < 1 (b_n/√n → ∞, b_n/n → 0)"
        )));
    }
    if t < 0.0 {
        return Err(Error::input("mdp_principle_check uses t ≥ 0 (upper tail)"));
    }
    let (lambda1, sigma) = (model.lambda1(), model.sigma);
    let target = -t * t / (2.0 * sigma * sigma);
    let mut report = ExpansionReport::new(
        "mdp-principle",
        "n",
        "(n/b_n^2) log P / (-t^2/(2 sigma^2))",
        m,
        provenance,
    );
    report.summary.insert("rate_limit".into(), target);
    report.summary.insert("b_exponent".into(), b_exponent);
    report.summary.insert("t".into(), t);
    let mut gaps = Vec::new();
    for &n in n_grid {
        let nf = n as f64;
        let b = nf.powf(b_exponent);
        let threshold = t * b;
        let t_normal = threshold / (sigma * nf.sqrt());
        let result = (|| {
            let s = if t == 0.0 {
                0.0
            } else {
                model.solve_saddle(t_normal, n, Tail::Upper)?.s_star
            };
            let samples = walks_at(
                e,
                model,
                s,
                x0,
                f,
                n,
                m,
                rng::derive_seed(seed, &[n as u64]),
            )?;
            let est = tail_estimate(&samples, |w| {
                if w.coeff_log_n - nf * lambda1 >= threshold {
                    1.0
                } else {
                    0.0
                }
            });
            Ok::<_, Error>((s, est))
        })();
        report.n_values.push(n);
        match result {
            Ok((s, est)) if est.value > 0.0 => {
                let scale = nf / (b * b);
                let lhs = scale * est.value.ln();
                let lhs_se = scale * est.rel_se;
                let statistic = if target != 0.0 { lhs / target } else { lhs };
                report.rows.push(ReportRow {
                    label: "rate".into(),
                    n,
                    x: nf,
                    empirical: lhs,
                    se: lhs_se,
                    theoretical: target,
                    statistic,
                    statistic_se: if target != 0.0 {
                        lhs_se / target.abs()
                    } else {
                        lhs_se
                    },
                    flag: Some(format!("s*={s:.6} P={:.6e}", est.value)),
                });
                gaps.push(((lhs - target).abs(), lhs_se));
            }
            Ok(_) => {
                let err = Error::Degenerate("no tail hits; increase m".into());
                report.warnings.push(format!("n = {n}: {err}"));
                failed_row(&mut report, "rate", n, nf, &err);
            }
            Err(err) => {
                report.warnings.push(format!("n = {n}: {err}"));
                failed_row(&mut report, "rate", n, nf, &err);
            }
        }
    }
    if gaps.len() > 1 {
        let (ok, worst) = non_increasing(&gaps, windows.trend_se);
        report.verdicts.push(Verdict {
            criterion: "|lhs - rhs| approaches 0 monotonically".into(),
            window: format!("increase ≤ {} se", windows.trend_se),
            value: worst,
            pass: ok,
        });
    }
    Ok(report)
}

/// Test function `ψ` on ℝ with compact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Psi {
    Indicator {
        a1: f64,
        a2: f64,
    },
    /// Linear interpolation between knots `(u, ψ(u))`, zero outside; repeated
    /// abscissae encode jumps.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
}

impl Psi {
    pub fn validate(&self) -> Result<()> {
        match self {
            Psi::Indicator { a1, a2 } => {
                if !(a1 < a2) {
                    return Err(Error::input(format!(
                        "interval needs a1 < a2, got [{a1}, {a2}]"
                    )));
                }
            }
            Psi::PiecewiseLinear { knots } => {
                if knots.len() < 2 || knots.windows(2).any(|w| w[1].0 < w[0].0) {
                    return Err(Error::input(
                        "ψ knots must be at least two, sorted by abscissa",
                    ));
                }
                if knots.iter().any(|k| !k.0.is_finite() || !k.1.is_finite()) {
                    return Err(Error::input("ψ knots must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Psi::Indicator { a1, a2 } => {
                if u >= *a1 && u <= *a2 {
                    1.0
                } else {
                    0.0
                }
            }
            Psi::PiecewiseLinear { knots } => {
                let (first, last) = (knots[0].0, knots[knots.len() - 1].0);
                if u < first || u > last {
                    return 0.0;
                }
                let j = knots.partition_point(|k| k.0 <= u);
                if j == 0 {
                    return knots[0].1;
                }
                if j == knots.len() {
                    return knots[j - 1].1;
                }
                let (a, b) = (knots[j - 1], knots[j]);
                a.1 + (u - a.0) / (b.0 - a.0) * (b.1 - a.1)
            }
        }
    }

    pub fn integral(&self) -> f64 {
        match self {
            Psi::Indicator { a1, a2 } => a2 - a1,
            Psi::PiecewiseLinear { knots } => knots
                .windows(2)
                .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
                .sum(),
        }
    }

    pub fn support_width(&self) -> f64 {
        match self {
            Psi::Indicator { a1, a2 } => a2 - a1,
            Psi::PiecewiseLinear { knots } => knots[knots.len() - 1].0 - knots[0].0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LltOptions {
    pub n: usize,
    pub t_grid: Vec<f64>,
    pub psi: Psi,
    pub phi: Option<GridFunction>,
    pub m: usize,
    pub seed: u64,
    /// Rows with `|t|` at or above this use the tilted sampler.
    pub tilt_threshold: f64,
}

/// Warns when all atoms act conformally with commensurable log-scales, in
/// which case the cocycle increments live on a lattice.
pub fn lattice_diagnostic(e: &MatrixEnsemble) -> Option<String> {
    let atoms = e.atoms()?;
    let mut logs = Vec::with_capacity(atoms.len());
    for a in atoms {
        let sv = a.matrix.svd().singular_values;
        let (top, bottom) = (sv[0], sv[sv.len() - 1]);
        if (top - bottom).abs() > 1e-9 * top {
            return None;
        }
        logs.push(top.ln());
    }
    let diffs: Vec<f64> = logs
        .iter()
        .map(|l| l - logs[0])
        .filter(|d| d.abs() > 1e-12)
        .collect();
    if diffs.is_empty() {
        return Some(
            "every atom is a multiple of the same scale: the cocycle increments are constant"
                .into(),
        );
    }
    let base = diffs.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
    let commensurable = diffs.iter().all(|d| {
        let r = d / base;
        (1..=12).any(|q| {
            let p = (r * q as f64).round();
            (r * q as f64 - p).abs() < 1e-9 * q as f64
        })
    });
    commensurable.then(|| {
        format!(
            "atoms are conformal with commensurable log-scales (span ≈ {base:.6}); the increments are arithmetic and the local limit theorem does not apply"
        )
    })
}

/// Local limit theorem with moderate deviations:
/// `E[φ(X_n) ψ(coeff − nλ₁ − √nσt)]` against
/// `e^{−t²/2 + t³ζ(t/√n)/√n}/(σ√(2πn)) · ν(φ)∫ψ`.
pub fn llt_check(
    e: &MatrixEnsemble,
    model: &SpectralModel,
    x0: &ProjectivePoint,
    f: &DualPoint,
    opts: &LltOptions,
    windows: &Windows,
    provenance: Provenance,
) -> Result<ExpansionReport> {
    opts.psi.validate()?;
    let n = opts.n;
    if n == 0 || opts.m < 2 {
        return Err(Error::input("llt_check needs n ≥ 1 and m ≥ 2"));
    }
    let nf = n as f64;
    let rn = nf.sqrt();
    let (lambda1, sigma) = (model.lambda1(), model.sigma);
    let phi = opts.phi.as_ref();
    let nu_phi = phi.map_or(1.0, |p| nu_of(model, p));
    let mass = nu_phi * opts.psi.integral();
    let mut report = ExpansionReport::new("llt", "t", "ratio", opts.m, provenance);
    report.n_values.push(n);
    report.summary.insert("nu_phi".into(), nu_phi);
    report
        .summary
        .insert("psi_integral".into(), opts.psi.integral());
    if let Some(w) = lattice_diagnostic(e) {
        report.warnings.push(w);
    }
    let resolution = sigma * (2.0 * std::f64::consts::PI * nf).sqrt() / opts.m as f64;
    if opts.psi.support_width() < 4.0 * resolution {
        report.warnings.push(format!(
            "ψ support width {:.3e} is below 4× the sample resolution {resolution:.3e}: bin too thin for m = {}",
            opts.psi.support_width(),
            opts.m
        ));
    }
    for (row, &t) in opts.t_grid.iter().enumerate() {
        let tilted = t.abs() >= opts.tilt_threshold && t != 0.0;
        let seed = rng::derive_seed(opts.seed, &[row as u64]);
        let outcome = (|| {
            let s = if tilted {
                let tail = if t > 0.0 { Tail::Upper } else { Tail::Lower };
                model.solve_saddle(t.abs(), n, tail)?.s_star
            } else {
                0.0
            };
            let zeta = model.cramer_zeta(t / rn)?;
            let normalizer = (-t * t / 2.0 + t.powi(3) / rn * zeta).exp()
                / (sigma * (2.0 * std::f64::consts::PI * nf).sqrt());
            let samples = walks_at(e, model, s, x0, f, n, opts.m, seed)?;
            let shift = nf * lambda1 + rn * sigma * t;
            let est = tail_estimate(&samples, |w| {
                let psi = opts.psi.eval(w.coeff_log_n - shift);
                if psi == 0.0 {
                    0.0
                } else {
                    psi * phi_value(phi, w)
                }
            });
            Ok::<_, Error>((s, normalizer * mass, est))
        })();
        match outcome {
            Ok((s, theory, est)) => {
                let ratio = est.value / theory;
                report.rows.push(ReportRow {
                    label: if tilted { "tilted" } else { "plain" }.into(),
                    n,
                    x: t,
                    empirical: est.value,
                    se: est.se,
                    theoretical: theory,
                    statistic: ratio,
                    statistic_se: est.se / theory,
                    flag: Some(format!("s*={s:.6} hits={}", est.hits)),
                });
                let (lo, hi) = if tilted {
                    windows.llt_tilted_ratio
                } else {
                    windows.llt_bulk_ratio
                };
                report
                    .verdicts
                    .push(Verdict::within(format!("ratio at t={t:.4}"), ratio, lo, hi));
            }
            Err(err) => {
                report.warnings.push(format!("t = {t}: {err}"));
                failed_row(&mut report, "llt", n, t, &err);
            }
        }
    }
    Ok(report)
}
