use serde::{Deserialize, Serialize};

use super::{
    non_increasing, sup_t_grid, EmpiricalDistribution, ExpansionReport, Provenance, ReportRow,
    Verdict, Windows,
};
use crate::error::{Error, Result};
use crate::spectral::{GridFunction, SpectralModel};
use crate::stats::{normal_cdf, normal_pdf, LinearFit, Summary};
use crate::walk::WalkSample;

/// Walk samples at one horizon.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub n: usize,
    pub samples: Vec<WalkSample>,
}

/// Centering and scale for `(coeff_log_n − nλ₁)/(σ√n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub lambda1: f64,
    pub sigma: f64,
}

impl Normalization {
    pub fn from_model(model: &SpectralModel) -> Normalization {
        Normalization {
            lambda1: model.lambda1(),
            sigma: model.sigma,
        }
    }

    /// Plug-in `λ̂₁ = mean σ_n/n`, `σ̂² = Var(σ_n)/n` for ensembles without a
    /// spectral model.
    pub fn estimate(set: &SampleSet) -> Result<Normalization> {
        let sigma_n: Vec<f64> = set.samples.iter().map(|s| s.sigma_n).collect();
        if sigma_n.len() < 2 || set.n == 0 {
            return Err(Error::input("need at least two samples and n ≥ 1"));
        }
        let s = Summary::of(&sigma_n);
        Ok(Normalization {
            lambda1: s.mean / set.n as f64,
            sigma: (s.variance / set.n as f64).sqrt(),
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Degenerate(format!(
                "σ = {} must be positive",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn standardize(&self, coeff_log_n: f64, n: usize) -> f64 {
        let n = n as f64;
        (coeff_log_n - n * self.lambda1) / (self.sigma * n.sqrt())
    }
}

/// First-order correction data for the Edgeworth comparand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeworthTerms {
    pub nu_phi: f64,
    pub gamma3: f64,
    pub sigma: f64,
    pub b_phi: Option<f64>,
    pub d_phi: Option<f64>,
}

impl EdgeworthTerms {
    /// All corrections zero: the comparand is `ν(φ)Φ(t)`.
    pub fn plain(nu_phi: f64, sigma: f64) -> EdgeworthTerms {
        EdgeworthTerms {
            nu_phi,
            gamma3: 0.0,
            sigma,
            b_phi: Some(0.0),
            d_phi: Some(0.0),
        }
    }
}

/// `ν(φ)[Φ(t) + γ₃/(6σ³√n)(1−t²)ϕ(t)] − (b_φ + d_φ)/(σ√n)·ϕ(t)`.
pub fn edgeworth_comparand(t: f64, n: usize, terms: &EdgeworthTerms) -> Result<f64> {
    let (b, d) = match (terms.b_phi, terms.d_phi) {
        (Some(b), Some(d)) => (b, d),
        _ => {
            return Err(Error::Missing(
                "b_φ(x₀) and d_φ(y) are required; estimate them with spectral::b_phi and spectral::d_phi".into(),
            ))
        }
    };
    let rn = (n as f64).sqrt();
    let s = terms.sigma;
    let pdf = normal_pdf(t);
    let skew = terms.gamma3 / (6.0 * s.powi(3) * rn) * (1.0 - t * t) * pdf;
    Ok(terms.nu_phi * (normal_cdf(t) + skew) - (b + d) / (s * rn) * pdf)
}

/// Sorted standardized values with prefix sums of `φ(X_n)` and `φ(X_n)²`.
struct TargetTable {
    z: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl TargetTable {
    fn build(
        set: &SampleSet,
        norm: &Normalization,
        phi: Option<&GridFunction>,
    ) -> Result<TargetTable> {
        if set.samples.is_empty() {
            return Err(Error::input(format!("no samples at n = {}", set.n)));
        }
        let mut pairs: Vec<(f64, f64)> = set
            .samples
            .iter()
            .map(|w| {
                let p = phi.map_or(1.0, |phi| phi.eval(&w.terminal_direction));
                (norm.standardize(w.coeff_log_n, set.n), p)
            })
            .collect();
        if pairs.iter().any(|p| p.0.is_nan()) {
            return Err(Error::input("standardized sample contains NaN"));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut s1 = Vec::with_capacity(pairs.len() + 1);
        let mut s2 = Vec::with_capacity(pairs.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        s1.push(0.0);
        s2.push(0.0);
        for p in &pairs {
            a += p.1;
            b += p.1 * p.1;
            s1.push(a);
            s2.push(b);
        }
        Ok(TargetTable {
            z: pairs.into_iter().map(|p| p.0).collect(),
            s1,
            s2,
        })
    }

    /// `Ê[φ(X_n) 1{Z ≤ t}]` and its standard error.
    fn at(&self, t: f64) -> (f64, f64) {
        let m = self.z.len() as f64;
        let idx = self.z.partition_point(|z| *z <= t);
        let mean = self.s1[idx] / m;
        let var = (self.s2[idx] / m - mean * mean).max(0.0);
        (mean, (var / m).sqrt())
    }
}

fn scaled(n: usize) -> f64 {
    (n as f64).sqrt()
}

/// Kolmogorov distance `D_n` between the standardized coefficients and Φ
/// over the n-grid.
pub fn clt_check(
    sets: &[SampleSet],
    norm: &Normalization,
    windows: &Windows,
    provenance: Provenance,
) -> Result<ExpansionReport> {
    norm.validate()?;
    if sets.is_empty() {
        return Err(Error::input("clt_check needs at least one sample set"));
    }
    let m = sets.iter().map(|s| s.samples.len()).min().unwrap_or(0);
    let mut report = ExpansionReport::new("clt", "n", "sqrt(n)*D_n", m, provenance);
    report.summary.insert("lambda1".into(), norm.lambda1);
    report.summary.insert("sigma".into(), norm.sigma);
    let mut points = Vec::new();
    for set in sets {
        let z: Vec<f64> = set
            .samples
            .iter()
            .map(|w| norm.standardize(w.coeff_log_n, set.n))
            .collect();
        let dist = EmpiricalDistribution::new(z)?;
        let (d, at) = dist.kolmogorov_distance(normal_cdf);
        let f = dist.cdf(at);
        let se = (f * (1.0 - f) / dist.len() as f64)
            .sqrt()
            .max(0.5 / dist.len() as f64);
        report.rows.push(ReportRow {
            label: "D_n".into(),
            n: set.n,
            x: set.n as f64,
            empirical: d,
            se,
            theoretical: 0.0,
            statistic: scaled(set.n) * d,
            statistic_se: scaled(set.n) * se,
            flag: Some(format!("argmax t = {at:.4}")),
        });
        report.n_values.push(set.n);
        report.summary.insert(format!("D_{}", set.n), d);
        points.push((set.n, d, se));
    }
    for w in points.windows(2) {
        let ((n0, d0, _), (n1, d1, _)) = (w[0], w[1]);
        report.verdicts.push(Verdict {
            criterion: format!("D_{n1} < D_{n0}"),
            window: "decreasing".into(),
            value: d1 - d0,
            pass: d1 < d0,
        });
        if n1 == 4 * n0 {
            let (lo, hi) = windows.clt_decay_ratio;
            report
                .verdicts
                .push(Verdict::within(format!("D_{n1}/D_{n0}"), d1 / d0, lo, hi));
        } else {
            report.warnings.push(format!(
                "n-grid step {n0} → {n1} is not a factor 4; decay-ratio window not applied"
            ));
        }
    }
    let scaled_points: Vec<(f64, f64)> = points
        .iter()
        .map(|(n, d, se)| (scaled(*n) * d, scaled(*n) * se))
        .collect();
    if scaled_points.len() > 1 {
        let (ok, worst) = non_increasing(&scaled_points, windows.trend_se);
        report.verdicts.push(Verdict {
            criterion: "sqrt(n)*D_n has no upward trend".into(),
            window: format!("increase ≤ {} se", windows.trend_se),
            value: worst,
            pass: ok,
        });
    }
    Ok(report)
}

/// `(β, se)` of the envelope `sup_n ≈ C·log^β n/√n`, with `α̂ = 1/β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub beta: f64,
    pub beta_se: f64,
    pub alpha_hat: f64,
    pub log_constant: f64,
    pub r_squared: f64,
}

/// Fits `log(√n·sup_n) = log C + β log log n` over `(n, sup_n)` points.
pub fn envelope_fit(points: &[(usize, f64)]) -> Option<EnvelopeFit> {
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln().ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(n, s)| (scaled(*n) * s).ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return None;
    }
    let fit = LinearFit::fit(&xs, &ys)?;
    Some(EnvelopeFit {
        beta: fit.slope,
        beta_se: fit.slope_se,
        alpha_hat: if fit.slope > 0.0 {
            1.0 / fit.slope
        } else {
            f64::INFINITY
        },
        log_constant: fit.intercept,
        r_squared: fit.r_squared,
    })
}

/// `sup_t |Ê[φ(X_n)1{Z_n ≤ t}] − ν(φ)Φ(t)|` on the 512-point grid over `[−4, 4]`.
///
/// With `fit_envelope` the sup-distances are also fitted against
/// `log^{1/α} n/√n` (subexponential moments).
pub fn berry_esseen_check(
    sets: &[SampleSet],
    norm: &Normalization,
    phi: Option<&GridFunction>,
    nu_phi: f64,
    fit_envelope: bool,
    windows: &Windows,
    provenance: Provenance,
) -> Result<ExpansionReport> {
    norm.validate()?;
    if sets.is_empty() {
        return Err(Error::input(
            "berry_esseen_check needs at least one sample set",
        ));
    }
    if let Some(phi) = phi {
        let h = phi.holder_estimate(1.0);
        if !h.is_finite() {
            return Err(Error::input("φ must have a finite Hölder norm on its grid"));
        }
    }
    let m = sets.iter().map(|s| s.samples.len()).min().unwrap_or(0);
    let mut report = ExpansionReport::new("be", "n", "sqrt(n)*sup_t|diff|", m, provenance);
    let terms = EdgeworthTerms::plain(nu_phi, norm.sigma);
    let grid = sup_t_grid();
    let mut scaled_points = Vec::new();
    let mut sup_points = Vec::new();
    for set in sets {
        let table = TargetTable::build(set, norm, phi)?;
        let mut best = (0.0, 0.0, 0.0);
        for &t in &grid {
            let (e, se) = table.at(t);
            let diff = (e - edgeworth_comparand(t, set.n, &terms)?).abs();
            if diff > best.0 {
                best = (diff, se, t);
            }
        }
        let (sup, se, at) = best;
        report.rows.push(ReportRow {
            label: "sup".into(),
            n: set.n,
            x: set.n as f64,
            empirical: sup,
            se,
            theoretical: 0.0,
            statistic: scaled(set.n) * sup,
            statistic_se: scaled(set.n) * se,
            flag: Some(format!("argmax t = {at:.4}")),
        });
        report.n_values.push(set.n);
        scaled_points.push((scaled(set.n) * sup, scaled(set.n) * se));
        sup_points.push((set.n, sup));
    }
    let c_hat = scaled_points.iter().map(|p| p.0).fold(0.0, f64::max);
    report.summary.insert("c_hat".into(), c_hat);
    report.summary.insert("nu_phi".into(), nu_phi);
    if scaled_points.len() > 1 {
        let (ok, worst) = non_increasing(&scaled_points, windows.trend_se);
        report.verdicts.push(Verdict {
            criterion: "sqrt(n)*sup has no upward trend".into(),
            window: format!("increase ≤ {} se", windows.trend_se),
            value: worst,
            pass: ok,
        });
    }
    if fit_envelope {
        match envelope_fit(&sup_points) {
            Some(fit) => {
                report.summary.insert("envelope_beta".into(), fit.beta);
                report
                    .summary
                    .insert("envelope_beta_se".into(), fit.beta_se);
                report
                    .summary
                    .insert("envelope_alpha_hat".into(), fit.alpha_hat);
                let (lo, hi) = windows.envelope_alpha;
                report.verdicts.push(Verdict::within(
                    "envelope exponent 1/beta",
                    fit.alpha_hat,
                    lo,
                    hi,
                ));
            }
            None => report
                .warnings
                .push("envelope fit needs at least two n values with positive sup-distance".into()),
        }
    }
    Ok(report)
}

/// Residuals `√n·(Ê − comparand)` of the first-order expansion on `|t| ≤ t_max`.
///
/// The improvement verdict compares against plain `ν(φ)Φ(t)` at horizon
/// `improvement_n`; the trend verdict covers the whole n-grid.
pub fn edgeworth_check(
    sets: &[SampleSet],
    norm: &Normalization,
    phi: Option<&GridFunction>,
    terms: &EdgeworthTerms,
    improvement_n: usize,
    windows: &Windows,
    provenance: Provenance,
) -> Result<ExpansionReport> {
    norm.validate()?;
    if terms.b_phi.is_none() || terms.d_phi.is_none() {
        edgeworth_comparand(0.0, 1, terms)?;
    }
    if !sets.iter().any(|s| s.n == improvement_n) {
        return Err(Error::input(format!(
            "improvement horizon n = {improvement_n} is not in the n-grid"
        )));
    }
    let m = sets.iter().map(|s| s.samples.len()).min().unwrap_or(0);
    let mut report = ExpansionReport::new(
        "edgeworth",
        "t",
        "sqrt(n)*(empirical - expansion)",
        m,
        provenance,
    );
    let plain = EdgeworthTerms::plain(terms.nu_phi, terms.sigma);
    let grid: Vec<f64> = sup_t_grid()
        .into_iter()
        .filter(|t| t.abs() <= windows.edgeworth_t_max)
        .collect();
    let mut max_points = Vec::new();
    for set in sets {
        let table = TargetTable::build(set, norm, phi)?;
        let rn = scaled(set.n);
        let (mut improved, mut best) = (0usize, (0.0, 0.0, 0.0));
        let mut max_plain: f64 = 0.0;
        for &t in &grid {
            let (e, se) = table.at(t);
            let theory = edgeworth_comparand(t, set.n, terms)?;
            let residual = rn * (e - theory);
            let plain_residual = rn * (e - edgeworth_comparand(t, set.n, &plain)?);
            if residual.abs() < plain_residual.abs() {
                improved += 1;
            }
            max_plain = max_plain.max(plain_residual.abs());
            if residual.abs() > best.0 {
                best = (residual.abs(), rn * se, t);
            }
            report.rows.push(ReportRow {
                label: format!("n={}", set.n),
                n: set.n,
                x: t,
                empirical: e,
                se,
                theoretical: theory,
                statistic: residual,
                statistic_se: rn * se,
                flag: Some(format!("plain={plain_residual:.6}")),
            });
        }
        let fraction = improved as f64 / grid.len() as f64;
        report.n_values.push(set.n);
        report
            .summary
            .insert(format!("improved_fraction_n{}", set.n), fraction);
        report
            .summary
            .insert(format!("max_scaled_residual_n{}", set.n), best.0);
        report
            .summary
            .insert(format!("max_plain_scaled_residual_n{}", set.n), max_plain);
        if set.n == improvement_n {
            report.verdicts.push(Verdict::at_least(
                format!(
                    "fraction of |t| ≤ {} improved at n = {}",
                    windows.edgeworth_t_max, set.n
                ),
                fraction,
                windows.edgeworth_fraction,
            ));
        }
        max_points.push((best.0, best.1));
    }
    if max_points.len() > 1 {
        let (ok, worst) = non_increasing(&max_points, windows.trend_se);
        report.verdicts.push(Verdict {
            criterion: "max sqrt(n)*residual non-increasing over n".into(),
            window: format!("increase ≤ {} se", windows.trend_se),
            value: worst,
            pass: ok,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ProjectivePoint;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_set(n: usize, m: usize, shift: f64, seed: u64) -> SampleSet {
        let mut r = rng::stream_from_seed(seed);
        let samples = (0..m)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut r);
                WalkSample {
                    sigma_n: z,
                    coeff_log_n: z * (n as f64).sqrt() + shift,
                    log_delta_n: 0.0,
                    terminal_direction: ProjectivePoint::basis(2, 0),
                    importance_log_weight: 0.0,
                    ext2_log_norm: 0.0,
                    trajectory_seed: i as u64,
                }
            })
            .collect();
        SampleSet { n, samples }
    }

    const UNIT: Normalization = Normalization {
        lambda1: 0.0,
        sigma: 1.0,
    };

    #[test]
    fn gaussian_samples_meet_dkw_bound() {
        let m = 20_000;
        let set = gaussian_set(100, m, 0.0, 7);
        let r = clt_check(&[set], &UNIT, &Windows::default(), Provenance::new(7)).unwrap();
        assert!(
            r.rows[0].empirical <= 1.36 / (m as f64).sqrt(),
            "{}",
            r.rows[0].empirical
        );
    }

    #[test]
    fn rejects_zero_sigma() {
        let set = gaussian_set(4, 10, 0.0, 1);
        let bad = Normalization {
            lambda1: 0.0,
            sigma: 0.0,
        };
        assert!(clt_check(&[set], &bad, &Windows::default(), Provenance::new(1)).is_err());
    }

    #[test]
    fn be_with_unit_phi_matches_clt() {
        let set = gaussian_set(100, 5000, 0.0, 3);
        let clt = clt_check(
            std::slice::from_ref(&set),
            &UNIT,
            &Windows::default(),
            Provenance::new(3),
        )
        .unwrap();
        let be = berry_esseen_check(
            &[set],
            &UNIT,
            None,
            1.0,
            false,
            &Windows::default(),
            Provenance::new(3),
        )
        .unwrap();
        // The t-grid sup cannot exceed the exact sup over sample points.
        assert!(be.rows[0].empirical <= clt.rows[0].empirical + 1e-15);
        assert!(be.rows[0].empirical > 0.5 * clt.rows[0].empirical);
    }

    #[test]
    fn zero_corrections_reproduce_be_comparand() {
        let terms = EdgeworthTerms::plain(0.7, 0.3);
        for t in [-2.0, 0.0, 1.3] {
            assert_eq!(
                edgeworth_comparand(t, 400, &terms).unwrap(),
                0.7 * normal_cdf(t)
            );
        }
        let missing = EdgeworthTerms {
            b_phi: None,
            ..terms
        };
        assert!(matches!(
            edgeworth_comparand(0.0, 4, &missing),
            Err(Error::Missing(_))
        ));
    }

    #[test]
    fn shifted_gaussian_is_corrected_by_drift_term() {
        // A mean shift c/√n in the standardized value is the drift term with
        // b + d = c·σ.
        let n = 400;
        let c = 2.0;
        let set = gaussian_set(n, 200_000, c, 11);
        let terms = EdgeworthTerms {
            nu_phi: 1.0,
            gamma3: 0.0,
            sigma: 1.0,
            b_phi: Some(c),
            d_phi: Some(0.0),
        };
        let r = edgeworth_check(
            &[set],
            &UNIT,
            None,
            &terms,
            n,
            &Windows::default(),
            Provenance::new(11),
        )
        .unwrap();
        assert!(r.passed(), "{:?}", r.verdicts);
        assert!(
            r.summary["max_scaled_residual_n400"] < r.summary["max_plain_scaled_residual_n400"]
        );
    }

    #[test]
    fn envelope_recovers_log_power() {
        let pts: Vec<(usize, f64)> = [100usize, 400, 1600, 6400]
            .iter()
            .map(|&n| (n, 0.3 * (n as f64).ln().powf(2.0) / (n as f64).sqrt()))
            .collect();
        let fit = envelope_fit(&pts).unwrap();
        assert!((fit.beta - 2.0).abs() < 1e-10);
        assert!((fit.alpha_hat - 0.5).abs() < 1e-10);
    }
}
