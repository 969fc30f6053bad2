use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{non_increasing, ExpansionReport, Provenance, ReportRow, Verdict, Windows};
use crate::ensemble::MatrixEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{self, projective_angle, DualPoint, Matrix, ProjectivePoint};
use crate::rng;
use crate::stats::{combined_se, LinearFit, Summary};
use crate::walk::{estimate_lyapunov, occupation_sample, replay_matrices, Driver};

/// Smallest `e^{−k}` treated as a meaningful `δ` level.
const DELTA_RESOLUTION: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityOptions {
    pub n_burn: usize,
    /// Directions kept per trajectory after burn-in.
    pub n_keep: usize,
    /// Number of trajectories (≥ 2; standard errors come from their spread).
    pub m: usize,
    pub k_grid: Vec<f64>,
    /// Exponent of the subexponential coordinate `k^α`.
    pub alpha: f64,
    /// Exponents `η` of `∫ δ^{−η} dν̂`.
    pub eta: Vec<f64>,
    /// Exponents `p` of `∫ |log δ|^{p−1} dν̂`.
    pub p: Vec<f64>,
}

/// What the log-survival curve is expected to show.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegularityExpectation {
    /// Linear fit with this slope (± the window tolerance).
    Slope { target: f64 },
    /// Negative slope and `R²` above the window.
    Linear,
    /// The `k^α` model wins by AIC.
    Subexponential,
    /// Report only.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentFunctional {
    /// `"delta^-eta"` or `"|log delta|^(p-1)"`.
    pub kind: String,
    pub parameter: f64,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub report: ExpansionReport,
    pub linear: Option<LinearFit>,
    pub subexponential: Option<LinearFit>,
    pub aic_linear: f64,
    pub aic_subexponential: f64,
    pub moments: Vec<MomentFunctional>,
}

/// Log-survival `log P̂(δ(y, X) ≤ e^{−k})` of the occupation measure of the
/// driver's walk (ν for μ, π_s for a tilted kernel).
#[allow(clippy::too_many_arguments)]
pub fn regularity_check(
    driver: Driver<'_>,
    x0: &ProjectivePoint,
    y: &DualPoint,
    opts: &RegularityOptions,
    expect: RegularityExpectation,
    reference: Option<&dyn Fn(f64) -> f64>,
    seed: u64,
    windows: &Windows,
    provenance: Provenance,
) -> Result<RegularityReport> {
    if opts.m < 2 || opts.n_keep == 0 {
        return Err(Error::input(
            "regularity_check needs m ≥ 2 trajectories and n_keep ≥ 1",
        ));
    }
    if y.dim() != driver.dim() {
        return Err(Error::input("y dimension does not match the walk"));
    }
    if let Some(k) = opts
        .k_grid
        .iter()
        .find(|k| !(k.is_finite() && (-**k).exp() >= DELTA_RESOLUTION))
    {
        return Err(Error::OutOfRange {
            what: "k beyond the resolvable δ range".into(),
            value: *k,
            lo: 0.0,
            hi: -DELTA_RESOLUTION.ln(),
        });
    }
    let points = occupation_sample(driver, x0, opts.n_burn, opts.n_keep, opts.m, seed)?;
    let log_delta: Vec<f64> = points.iter().map(|x| linalg::delta(x, y).ln()).collect();
    let total = log_delta.len() as f64;

    let mut report = ExpansionReport::new(
        "regularity",
        "k",
        "log P(delta <= e^-k)",
        opts.m,
        provenance,
    );
    report.n_values.push(opts.n_burn);
    let (mut fit_k, mut fit_y) = (Vec::new(), Vec::new());
    for &k in &opts.k_grid {
        let fractions: Vec<f64> = log_delta
            .chunks(opts.n_keep)
            .map(|c| c.iter().filter(|ld| **ld <= -k).count() as f64 / c.len() as f64)
            .collect();
        let hits = log_delta.iter().filter(|ld| **ld <= -k).count();
        let s = Summary::of(&fractions);
        let p = hits as f64 / total;
        let reliable = hits >= windows.min_tail_hits;
        if reliable {
            fit_k.push(k);
            fit_y.push(p.ln());
        }
        report.rows.push(ReportRow {
            label: "survival".into(),
            n: opts.n_burn,
            x: k,
            empirical: p,
            se: s.std_error(),
            theoretical: reference.map_or(f64::NAN, |r| r(k)),
            statistic: p.ln(),
            statistic_se: if p > 0.0 {
                s.std_error() / p
            } else {
                f64::INFINITY
            },
            flag: Some(if reliable {
                format!("hits={hits}")
            } else {
                format!("hits={hits} unreliable (< {})", windows.min_tail_hits)
            }),
        });
    }
    let linear = LinearFit::fit(&fit_k, &fit_y);
    let powered: Vec<f64> = fit_k.iter().map(|k| k.powf(opts.alpha)).collect();
    let subexponential = LinearFit::fit(&powered, &fit_y);
    let aic_linear = linear.map_or(f64::NAN, |f| LinearFit::aic(f.rss, f.points, 2));
    let aic_subexponential =
        subexponential.map_or(f64::NAN, |f| LinearFit::aic(f.rss, f.points, 2));
    if let Some(f) = linear {
        report.summary.insert("linear_slope".into(), f.slope);
        report.summary.insert("linear_slope_se".into(), f.slope_se);
        report
            .summary
            .insert("linear_r_squared".into(), f.r_squared);
        report.summary.insert("aic_linear".into(), aic_linear);
    }
    if let Some(f) = subexponential {
        report.summary.insert("subexp_alpha".into(), opts.alpha);
        report.summary.insert("subexp_slope".into(), f.slope);
        report
            .summary
            .insert("subexp_r_squared".into(), f.r_squared);
        report
            .summary
            .insert("aic_subexp".into(), aic_subexponential);
    }
    report.summary.insert("fit_rows".into(), fit_k.len() as f64);

    if fit_k.len() < 3 && expect != RegularityExpectation::None {
        report.verdicts.push(Verdict::at_least(
            "reliable k rows for the fit",
            fit_k.len() as f64,
            3.0,
        ));
    } else {
        match (expect, linear) {
            (RegularityExpectation::Slope { target }, Some(f)) => {
                let tol = windows.regularity_slope_tolerance;
                report.verdicts.push(Verdict::within(
                    "log-survival slope",
                    f.slope,
                    target - tol,
                    target + tol,
                ));
            }
            (RegularityExpectation::Linear, Some(f)) => {
                report
                    .verdicts
                    .push(Verdict::at_most("log-survival slope", f.slope, 0.0));
                report.verdicts.push(Verdict::at_least(
                    "linear fit R^2",
                    f.r_squared,
                    windows.regularity_r_squared,
                ));
            }
            (RegularityExpectation::Subexponential, _) => report.verdicts.push(Verdict {
                criterion: format!("k^{} model beats linear by AIC", opts.alpha),
                window: "AIC_subexp < AIC_linear".into(),
                value: aic_subexponential - aic_linear,
                pass: aic_subexponential < aic_linear,
            }),
            _ => {}
        }
    }

    let mut moments = Vec::new();
    for &eta in &opts.eta {
        let v: Vec<f64> = log_delta.iter().map(|ld| (-eta * ld).exp()).collect();
        let s = Summary::of(&v);
        moments.push(MomentFunctional {
            kind: "delta^-eta".into(),
            parameter: eta,
            value: s.mean,
            se: s.std_error(),
        });
    }
    for &p in &opts.p {
        let v: Vec<f64> = log_delta.iter().map(|ld| ld.abs().powf(p - 1.0)).collect();
        let s = Summary::of(&v);
        moments.push(MomentFunctional {
            kind: "|log delta|^(p-1)".into(),
            parameter: p,
            value: s.mean,
            se: s.std_error(),
        });
    }
    for mf in &moments {
        report
            .summary
            .insert(format!("{}[{}]", mf.kind, mf.parameter), mf.value);
        report
            .summary
            .insert(format!("{}[{}]_se", mf.kind, mf.parameter), mf.se);
    }
    Ok(RegularityReport {
        report,
        linear,
        subexponential,
        aic_linear,
        aic_subexponential,
        moments,
    })
}

/// Log-domain data of a planar product `G = g_n ⋯ g_1`.
struct PlanarProduct {
    /// `G` divided by `e^{log_scale}`.
    scaled: Matrix,
    log_scale: f64,
    log_det: f64,
}

impl PlanarProduct {
    fn of(mats: &[Matrix]) -> PlanarProduct {
        let mut p = Matrix::identity(2);
        let (mut log_scale, mut log_det) = (0.0, 0.0);
        for g in mats {
            p = g.mul(&p);
            log_det += g.determinant().abs().ln();
            let s = p.max_abs();
            p = p.scaled(1.0 / s);
            log_scale += s.ln();
        }
        PlanarProduct {
            scaled: p,
            log_scale,
            log_det,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesOptions {
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub seed: u64,
    /// Defaults to `(λ₁ − λ₂)/4`.
    pub epsilon: Option<f64>,
    /// Horizon and sample count for the `λ₁ − λ₂` separation estimate.
    pub lyapunov_n: usize,
    pub lyapunov_m: usize,
}

/// Frequencies of the three events
/// `{d(G_n·x, x^M) ≥ e^{−(λ₁−λ₂−ε)n}}`, `{δ(x^M, y) ≤ e^{−εn}}`,
/// `{δ(G_n·x, y) ≤ e^{−εn}}` along the n-grid (planar ensembles).
pub fn rates_check(
    e: &MatrixEnsemble,
    x0: &ProjectivePoint,
    y: &DualPoint,
    opts: &RatesOptions,
    windows: &Windows,
    provenance: Provenance,
) -> Result<ExpansionReport> {
    if e.dim() != 2 || x0.dim() != 2 || y.dim() != 2 {
        return Err(Error::Unsupported(
            "rates_check is implemented for d = 2".into(),
        ));
    }
    if opts.m == 0 || opts.n_grid.is_empty() {
        return Err(Error::input(
            "rates_check needs m ≥ 1 and a non-empty n-grid",
        ));
    }
    let lyap = estimate_lyapunov(
        e,
        x0,
        opts.lyapunov_n,
        opts.lyapunov_m,
        rng::derive_seed(opts.seed, &[u64::MAX]),
    )?;
    let gap = lyap.lambda1 - lyap.lambda2;
    let gap_se = combined_se(lyap.lambda1_se, lyap.lambda2_se);
    if !(gap > 1e-10 && gap >= 3.0 * gap_se) {
        return Err(Error::Degenerate(format!(
            "λ₁ − λ₂ = {gap:.4e} ± {gap_se:.2e} is not separated by 3 se (λ₁ = {:.6}, λ₂ = {:.6}); the rate events are not meaningful",
            lyap.lambda1, lyap.lambda2
        )));
    }
    let eps = opts.epsilon.unwrap_or(gap / 4.0);
    if !(eps > 0.0 && eps < gap) {
        return Err(Error::input(format!(
            "ε = {eps} must lie in (0, λ₁ − λ₂ = {gap})"
        )));
    }
    let mut report = ExpansionReport::new("rates", "n", "frequency", opts.m, provenance);
    report.summary.insert("lambda1".into(), lyap.lambda1);
    report.summary.insert("lambda2".into(), lyap.lambda2);
    report.summary.insert("gap_se".into(), gap_se);
    report.summary.insert("epsilon".into(), eps);
    let v = x0.direction();
    let f = y.functional();
    let mut series: [Vec<(f64, f64)>; 3] = Default::default();
    for &n in &opts.n_grid {
        let nf = n as f64;
        let seed = rng::derive_seed(opts.seed, &[n as u64]);
        let flags: Vec<[bool; 3]> = (0..opts.m as u64)
            .into_par_iter()
            .map(|t| {
                let mats = replay_matrices(e, seed, t, n)?;
                let prod = PlanarProduct::of(&mats);
                let svd = prod.scaled.svd();
                let u1 = &svd.left_vectors[0];
                let w2 = &svd.right_vectors[1];
                let gv = prod.scaled.apply(v);
                let gv_norm = linalg::norm(&gv);
                let log_s1 = svd.singular_values[0].ln() + prod.log_scale;
                let log_s2 = prod.log_det - log_s1;
                let log_gv = gv_norm.ln() + prod.log_scale;
                let log_d = log_s2 + linalg::dot(v, w2).abs().ln() - log_gv;
                let e1 = log_d >= -(gap - eps) * nf;
                let e2 = linalg::dot(f, u1).abs() <= (-eps * nf).exp();
                let e3 = linalg::dot(f, &gv).abs() / gv_norm <= (-eps * nf).exp();
                Ok([e1, e2, e3])
            })
            .collect::<Result<_>>()?;
        report.n_values.push(n);
        for (i, s) in series.iter_mut().enumerate() {
            let hits = flags.iter().filter(|fl| fl[i]).count();
            let p = hits as f64 / opts.m as f64;
            let se = (p * (1.0 - p) / opts.m as f64).sqrt();
            report.rows.push(ReportRow {
                label: format!("event{}", i + 1),
                n,
                x: nf,
                empirical: p,
                se,
                theoretical: 0.0,
                statistic: p,
                statistic_se: se,
                flag: Some(format!("hits={hits}")),
            });
            // A zero count still carries a resolution of about 1/m.
            s.push((p, se.max(1.0 / opts.m as f64)));
        }
    }
    for (i, s) in series.iter().enumerate() {
        let (ok, worst) = non_increasing(s, windows.trend_se);
        let last_not_above_first = s[s.len() - 1].0 <= s[0].0;
        report.verdicts.push(Verdict {
            criterion: format!("event{} frequency trends to 0", i + 1),
            window: format!(
                "non-increasing within {} se, last ≤ first",
                windows.trend_se
            ),
            value: worst,
            pass: ok && last_not_above_first,
        });
    }
    Ok(report)
}

/// The functional annihilating the modal direction of `x^M_{G_n}`: the worst
/// case for the alignment events.
pub fn adversarial_dual(e: &MatrixEnsemble, n: usize, m: usize, seed: u64) -> Result<DualPoint> {
    if e.dim() != 2 {
        return Err(Error::Unsupported("adversarial_dual is planar".into()));
    }
    if m == 0 {
        return Err(Error::input("need m ≥ 1"));
    }
    const BINS: usize = 256;
    let angles: Vec<f64> = (0..m as u64)
        .into_par_iter()
        .map(|t| {
            let mats = replay_matrices(e, seed, t, n)?;
            let svd = PlanarProduct::of(&mats).scaled.svd();
            Ok(projective_angle(&svd.left_vectors[0]))
        })
        .collect::<Result<_>>()?;
    let mut counts = [0usize; BINS];
    for a in &angles {
        counts[((a / PI * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let mode = (0..BINS)
        .max_by_key(|&b| (counts[b], std::cmp::Reverse(b)))
        .unwrap_or(0);
    let theta = (mode as f64 + 0.5) * PI / BINS as f64;
    Ok(DualPoint::from_angle(theta + FRAC_PI_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::builtin;

    #[test]
    fn diag31_first_event_vanishes() {
        let e = builtin("diag31").unwrap();
        let x = ProjectivePoint::new(&[1.0, 1.0]).unwrap();
        let y = DualPoint::new(&[1.0, 2.0]).unwrap();
        let opts = RatesOptions {
            n_grid: vec![10, 20, 40],
            m: 50,
            seed: 1,
            epsilon: None,
            lyapunov_n: 50,
            lyapunov_m: 10,
        };
        let r = rates_check(&e, &x, &y, &opts, &Windows::default(), Provenance::new(1)).unwrap();
        for row in r.rows.iter().filter(|r| r.label == "event1") {
            assert_eq!(row.empirical, 0.0);
        }
        assert!(r.passed(), "{:?}", r.verdicts);
        // σ_n/n from x0 = (1, 1) carries an O(1/n) offset.
        assert!((r.summary["lambda1"] - 3f64.ln()).abs() < 2.0 / 50.0);
    }

    #[test]
    fn rates_refuse_without_gap() {
        let e = builtin("rotation").unwrap();
        let opts = RatesOptions {
            n_grid: vec![10],
            m: 10,
            seed: 1,
            epsilon: None,
            lyapunov_n: 50,
            lyapunov_m: 20,
        };
        let err = rates_check(
            &e,
            &ProjectivePoint::basis(2, 0),
            &DualPoint::basis(2, 0),
            &opts,
            &Windows::default(),
            Provenance::new(1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
    }

    #[test]
    fn rotation_survival_matches_arcsine() {
        let e = builtin("rotation").unwrap();
        let opts = RegularityOptions {
            n_burn: 50,
            n_keep: 50,
            m: 400,
            k_grid: (1..=5).map(f64::from).collect(),
            alpha: 0.5,
            eta: vec![0.5],
            p: vec![2.0],
        };
        let arcsine = |k: f64| 2.0 / PI * (-k).exp().asin();
        let r = regularity_check(
            Driver::Plain(&e),
            &ProjectivePoint::basis(2, 0),
            &DualPoint::basis(2, 0),
            &opts,
            RegularityExpectation::Slope { target: -1.0 },
            Some(&arcsine),
            4,
            &Windows::default(),
            Provenance::new(4),
        )
        .unwrap();
        assert!(r.report.passed(), "{:?}", r.report.verdicts);
        for row in &r.report.rows {
            assert!(
                (row.empirical - row.theoretical).abs() < 4.0 * row.se + 1e-3,
                "{row:?}"
            );
        }
        // ∫ |log δ| dν = log 2 for the uniform measure.
        let m = r.moments.iter().find(|m| m.parameter == 2.0).unwrap();
        assert!((m.value - 2f64.ln()).abs() < 4.0 * m.se + 0.01, "{m:?}");
    }

    #[test]
    fn k_out_of_range_is_rejected() {
        let e = builtin("rotation").unwrap();
        let opts = RegularityOptions {
            n_burn: 5,
            n_keep: 1,
            m: 4,
            k_grid: vec![40.0],
            alpha: 0.5,
            eta: vec![],
            p: vec![],
        };
        let r = regularity_check(
            Driver::Plain(&e),
            &ProjectivePoint::basis(2, 0),
            &DualPoint::basis(2, 0),
            &opts,
            RegularityExpectation::None,
            None,
            0,
            &Windows::default(),
            Provenance::new(0),
        );
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn adversarial_dual_annihilates_oracle_mode() {
        let e = builtin("oracleA").unwrap();
        let y = adversarial_dual(&e, 30, 500, 2).unwrap();
        let theta = y.orthogonal_point().angle();
        assert!((0.55..=1.02).contains(&theta), "{theta}");
    }
}
