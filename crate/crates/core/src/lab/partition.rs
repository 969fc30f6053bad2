use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExpansionReport, Provenance, ReportRow, Verdict, Windows};
use crate::error::{Error, Result};
use crate::linalg::{self, DualPoint, ProjectivePoint};
use crate::rng;

/// Constant of the Hölder bound `[χ_{n,k}]_γ ≤ c·e^{γka_n}/a_n^γ` obtained by
/// the triangle-inequality argument (two monotone pieces, factor 3 each).
pub const HOLDER_CONSTANT: f64 = 6.0;

/// Bumps `χ_{n,k}(x) = h_{n,k}(−log δ(y, x))` slicing `P(V)` by the size of
/// `−log δ(y, ·)` in steps of `a_n = 1/log n`, with tail `Ū_{n,M_n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    pub n: usize,
    pub a_n: f64,
    /// `M_n = ⌊A·log²n⌋`.
    pub count: usize,
    pub big_a: f64,
    pub y: DualPoint,
}

fn clamp_unit(t: f64) -> f64 {
    t.clamp(0.0, 1.0)
}

impl PartitionOfUnity {
    pub fn new(n: usize, y: DualPoint, big_a: f64) -> Result<PartitionOfUnity> {
        if n < 18 {
            return Err(Error::input(format!(
                "partition needs n ≥ 18 so that a_n e^(a_n) ≤ 1/2, got {n}"
            )));
        }
        if !(big_a > 0.0 && big_a.is_finite()) {
            return Err(Error::input("A must be positive"));
        }
        let log_n = (n as f64).ln();
        Ok(PartitionOfUnity {
            n,
            a_n: 1.0 / log_n,
            count: (big_a * log_n * log_n).floor() as usize,
            big_a,
            y,
        })
    }

    /// `U_{n,k}(t) = U((t − (k−1)a_n)/a_n)`.
    pub fn u(&self, k: usize, t: f64) -> f64 {
        clamp_unit((t - (k as f64 - 1.0) * self.a_n) / self.a_n)
    }

    /// `h_{n,k} = U_{n,k} − U_{n,k+1}`.
    pub fn h(&self, k: usize, t: f64) -> f64 {
        self.u(k, t) - self.u(k + 1, t)
    }

    fn level(&self, x: &ProjectivePoint) -> f64 {
        -linalg::delta(x, &self.y).ln()
    }

    pub fn chi(&self, k: usize, x: &ProjectivePoint) -> f64 {
        self.h(k, self.level(x))
    }

    /// `Ū_{n,M_n+1}(−log δ(y, x))`.
    pub fn tail(&self, x: &ProjectivePoint) -> f64 {
        self.u(self.count + 1, self.level(x))
    }

    /// `Σ_{k ≤ M_n} χ_{n,k}(x) + Ū_{n,M_n+1}(x)`.
    pub fn unity_sum(&self, x: &ProjectivePoint) -> f64 {
        let t = self.level(x);
        (0..=self.count).map(|k| self.h(k, t)).sum::<f64>() + self.u(self.count + 1, t)
    }

    /// `e^{γka_n}/a_n^γ`.
    pub fn holder_shape(&self, k: usize, gamma: f64) -> f64 {
        (gamma * k as f64 * self.a_n).exp() / self.a_n.powf(gamma)
    }

    /// Planar point with `−log δ(y, x) = t`, on the given side of `y^⊥`.
    fn point_at_level(&self, t: f64, side: f64) -> [f64; 2] {
        let f = self.y.functional();
        let c = (-t).exp();
        let s = side * (1.0 - c * c).max(0.0).sqrt();
        [c * f[0] - s * f[1], c * f[1] + s * f[0]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderRow {
    pub k: usize,
    /// Largest sampled `|χ(x') − χ(x'')|/d(x', x'')^γ`.
    pub empirical: f64,
    pub shape: f64,
    /// `empirical / shape`: the constant this row needs.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub gamma: f64,
    pub rows: Vec<HolderRow>,
    /// `max_k ratio`.
    pub fitted_c: f64,
    pub pass: bool,
}

fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Estimates `[χ_{n,k}]_γ` for every `k ≤ M_n` from `pairs` point pairs and
/// fits the constant of `c·e^{γka_n}/a_n^γ`; passes when the fitted constant
/// is at most [`HOLDER_CONSTANT`].
///
/// Most pairs put `x'` inside the support of `χ_{n,k}` and `x''` at a
/// log-uniform angular offset; the rest are uniform.
pub fn holder_bound_check(
    p: &PartitionOfUnity,
    gamma: f64,
    pairs: usize,
    seed: u64,
) -> Result<HolderCheck> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::input("γ must lie in (0, 1]"));
    }
    if p.y.dim() != 2 {
        return Err(Error::Unsupported("Hölder sampling is planar".into()));
    }
    let a = p.a_n;
    let rows: Vec<HolderRow> = (0..=p.count)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream_from_seed(rng::derive_seed(seed, &[k as u64]));
            let width = a * (-(k as f64 + 1.0) * a).exp();
            let mut best: f64 = 0.0;
            for i in 0..pairs {
                let side = if r.random::<bool>() { 1.0 } else { -1.0 };
                let v1 = if i % 10 == 9 {
                    let theta = r.random::<f64>() * PI;
                    [theta.cos(), theta.sin()]
                } else {
                    let lo = (a * (k as f64 - 1.5)).max(0.0);
                    let hi = a * (k as f64 + 1.5);
                    p.point_at_level(lo + (hi - lo) * r.random::<f64>(), side)
                };
                let span = (FRAC_PI_2 / (1e-3 * width)).log10();
                let eta = 1e-3 * width * 10f64.powf(span * r.random::<f64>());
                let v2 = rotate(v1, if r.random::<bool>() { eta } else { -eta });
                let (x1, x2) = match (ProjectivePoint::new(&v1), ProjectivePoint::new(&v2)) {
                    (Ok(x1), Ok(x2)) => (x1, x2),
                    _ => continue,
                };
                let d = linalg::angular_distance(&x1, &x2);
                if d <= 0.0 {
                    continue;
                }
                let diff = (p.chi(k, &x1) - p.chi(k, &x2)).abs();
                best = best.max(diff / d.powf(gamma));
            }
            let shape = p.holder_shape(k, gamma);
            HolderRow {
                k,
                empirical: best,
                shape,
                ratio: best / shape,
            }
        })
        .collect();
    let fitted_c = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(HolderCheck {
        gamma,
        rows,
        fitted_c,
        pass: fitted_c <= HOLDER_CONSTANT,
    })
}

/// Unity-sum, support and Hölder-bound checks of the partition at one `n`.
#[allow(clippy::too_many_arguments)]
pub fn partition_check(
    n: usize,
    y: &DualPoint,
    big_a: f64,
    gamma: f64,
    points: usize,
    pairs: usize,
    seed: u64,
    windows: &Windows,
    provenance: Provenance,
) -> Result<ExpansionReport> {
    let p = PartitionOfUnity::new(n, y.clone(), big_a)?;
    if y.dim() != 2 {
        return Err(Error::Unsupported("partition sampling is planar".into()));
    }
    let mut report = ExpansionReport::new("partition", "k", "holder ratio", points, provenance);
    report.n_values.push(n);
    report.summary.insert("a_n".into(), p.a_n);
    report.summary.insert("M_n".into(), p.count as f64);
    report.summary.insert("A".into(), big_a);

    let mut r = rng::stream_from_seed(rng::derive_seed(seed, &[u64::MAX]));
    let reach = (p.count as f64 + 2.0) * p.a_n;
    let mut worst_sum: f64 = 0.0;
    let mut violations = 0usize;
    for i in 0..points {
        let v = if i % 2 == 0 {
            let theta = r.random::<f64>() * PI;
            [theta.cos(), theta.sin()]
        } else {
            let side = if r.random::<bool>() { 1.0 } else { -1.0 };
            p.point_at_level(reach * r.random::<f64>(), side)
        };
        let x = ProjectivePoint::new(&v)?;
        worst_sum = worst_sum.max((p.unity_sum(&x) - 1.0).abs());
        let level = p.level(&x);
        for k in 0..=p.count {
            if p.chi(k, &x) > 0.0 {
                let lo = p.a_n * (k as f64 - 1.0) - 1e-12;
                let hi = p.a_n * (k as f64 + 1.0) + 1e-12;
                if !(level >= lo && level <= hi) {
                    violations += 1;
                }
            }
        }
    }
    let top = ProjectivePoint::new(y.functional())?;
    let at_one =
        (p.chi(0, &top) - 1.0).abs() + (1..=p.count).map(|k| p.chi(k, &top).abs()).sum::<f64>();
    report
        .summary
        .insert("max_unity_deviation".into(), worst_sum);
    report
        .summary
        .insert("support_violations".into(), violations as f64);
    report.verdicts.push(Verdict::at_most(
        "max |sum chi + tail - 1|",
        worst_sum,
        windows.unity_tolerance,
    ));
    report.verdicts.push(Verdict::at_most(
        "support violations",
        violations as f64,
        0.0,
    ));
    report.verdicts.push(Verdict::at_most(
        "chi_0 = 1 where delta = 1",
        at_one,
        windows.unity_tolerance,
    ));

    let holder = holder_bound_check(&p, gamma, pairs, seed)?;
    for row in &holder.rows {
        report.rows.push(ReportRow {
            label: "holder".into(),
            n,
            x: row.k as f64,
            empirical: row.empirical,
            se: 0.0,
            theoretical: HOLDER_CONSTANT * row.shape,
            statistic: row.ratio,
            statistic_se: 0.0,
            flag: Some("sup over sampled pairs".into()),
        });
    }
    report.summary.insert("holder_gamma".into(), gamma);
    report
        .summary
        .insert("holder_fitted_c".into(), holder.fitted_c);
    report.verdicts.push(Verdict::at_most(
        "fitted Hölder constant",
        holder.fitted_c,
        HOLDER_CONSTANT,
    ));
    Ok(report)
}
