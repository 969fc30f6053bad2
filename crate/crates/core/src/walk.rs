//! Simulation of the left random walk `G_n = g_n ⋯ g_1` acting on a starting
//! direction, with exponentially tilted sampling under `Q_s`.
//!
//! Trajectory `t` draws from its own ChaCha stream keyed by `(seed, t)`, so
//! outputs do not depend on the number of worker threads.

use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleKind, MatrixEnsemble};
use crate::error::{Error, Result};
use crate::linalg::{
    self, apply_raw, dot, norm, projective_angle, DualPoint, Matrix, ProjectivePoint,
};
use crate::rng::{self, StreamRng};
use crate::stats::Summary;

/// Running state of one trajectory. Every step renormalizes the direction and
/// re-orthonormalizes the 2-frame used for `log‖∧²G_n‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkState {
    pub direction: ProjectivePoint,
    pub log_norm: f64,
    pub dual_direction: DualPoint,
    pub step_count: u64,
    pub ext2_log_norm: f64,
    frame: [Vec<f64>; 2],
}

impl WalkState {
    pub fn new(x0: &ProjectivePoint, y: &DualPoint) -> Result<WalkState> {
        if x0.dim() != y.dim() {
            return Err(Error::input("x0 and f have different dimensions"));
        }
        Ok(WalkState {
            direction: x0.clone(),
            log_norm: 0.0,
            dual_direction: y.clone(),
            step_count: 0,
            ext2_log_norm: 0.0,
            frame: initial_frame(x0.direction()),
        })
    }

    pub fn step(&mut self, g: &Matrix) -> Result<()> {
        let step = self.step_count;
        let image = g.apply(self.direction.direction());
        let growth = norm(&image);
        if !(growth.is_finite() && growth > 0.0) {
            return Err(Error::NonFinite {
                trajectory: 0,
                step,
                what: "direction norm",
            });
        }
        self.log_norm += growth.ln();
        self.direction = ProjectivePoint::new(&image)?;
        let [a, b] = &self.frame;
        let (a, b) = (g.apply(a), g.apply(b));
        let volume = orthonormalize(a, b, &mut self.frame).ok_or(Error::NonFinite {
            trajectory: 0,
            step,
            what: "exterior-square frame",
        })?;
        self.ext2_log_norm += volume.ln();
        self.step_count += 1;
        Ok(())
    }

    /// `log|⟨f, G_n v⟩|` (−∞ when the pairing vanishes).
    pub fn coeff_log(&self) -> f64 {
        self.log_norm + self.log_delta()
    }

    pub fn log_delta(&self) -> f64 {
        linalg::delta(&self.direction, &self.dual_direction).ln()
    }
}

fn initial_frame(v: &[f64]) -> [Vec<f64>; 2] {
    let d = v.len();
    let a = v.to_vec();
    // Any fixed vector independent of `a` works; this one is generic.
    let mut b: Vec<f64> = (0..d)
        .map(|i| ((i + 1) as f64 * 0.754_877_666).sin())
        .collect();
    if linalg::wedge_norm(&a, &b) < 1e-3 * norm(&b) {
        b = (0..d)
            .map(|i| {
                if i == 0 {
                    -a[1]
                } else if i == 1 {
                    a[0]
                } else {
                    0.0
                }
            })
            .collect();
    }
    let mut frame = [vec![0.0; d], vec![0.0; d]];
    orthonormalize(a, b, &mut frame).expect("independent initial frame");
    frame
}

/// Gram–Schmidt on `(a, b)`; writes the frame and returns `r₁₁·r₂₂`.
fn orthonormalize(mut a: Vec<f64>, mut b: Vec<f64>, frame: &mut [Vec<f64>; 2]) -> Option<f64> {
    let r11 = norm(&a);
    if !(r11.is_finite() && r11 > 0.0) {
        return None;
    }
    a.iter_mut().for_each(|x| *x /= r11);
    let proj = dot(&a, &b);
    b.iter_mut().zip(&a).for_each(|(x, y)| *x -= proj * y);
    let r22 = norm(&b);
    if !(r22.is_finite() && r22 > 0.0) {
        return None;
    }
    b.iter_mut().for_each(|x| *x /= r22);
    frame[0] = a;
    frame[1] = b;
    Some(r11 * r22)
}

/// Terminal statistics of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSample {
    /// `σ(G_n, x)`.
    pub sigma_n: f64,
    /// `log|⟨f, G_n v⟩|`.
    pub coeff_log_n: f64,
    /// `log δ(y, G_n·x) ≤ 0`.
    pub log_delta_n: f64,
    pub terminal_direction: ProjectivePoint,
    /// `log dP/dQ_s` along the path; zero for untilted runs.
    pub importance_log_weight: f64,
    /// `log‖∧²G_n‖` along the tracked 2-frame.
    pub ext2_log_norm: f64,
    pub trajectory_seed: u64,
}

/// Samples one matrix per step, possibly depending on the current direction.
pub(crate) trait Stepper: Sync {
    fn dim(&self) -> usize;
    /// Writes the drawn matrix (row-major) into `g` and returns
    /// `(log|det g|, log-weight increment)`. `log|det g|` may be NaN when `d > 2`.
    fn draw(&self, v: &[f64], rng: &mut StreamRng, g: &mut [f64]) -> Result<(f64, f64)>;
}

struct FiniteStepper {
    dim: usize,
    entries: Vec<f64>,
    log_dets: Vec<f64>,
    ensemble: MatrixEnsemble,
}

impl FiniteStepper {
    fn new(e: &MatrixEnsemble) -> FiniteStepper {
        let atoms = e.atoms().expect("finite ensemble");
        FiniteStepper {
            dim: e.dim(),
            entries: atoms
                .iter()
                .flat_map(|a| a.matrix.as_slice().iter().copied())
                .collect(),
            log_dets: atoms
                .iter()
                .map(|a| a.matrix.determinant().abs().ln())
                .collect(),
            ensemble: e.clone(),
        }
    }
}

impl Stepper for FiniteStepper {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn draw(&self, _v: &[f64], rng: &mut StreamRng, g: &mut [f64]) -> Result<(f64, f64)> {
        let i = self.ensemble.pick_atom(rng.next_u64());
        let dd = self.dim * self.dim;
        g.copy_from_slice(&self.entries[i * dd..(i + 1) * dd]);
        Ok((self.log_dets[i], 0.0))
    }
}

struct GeneratorStepper<'a> {
    ensemble: &'a MatrixEnsemble,
}

impl Stepper for GeneratorStepper<'_> {
    fn dim(&self) -> usize {
        self.ensemble.dim()
    }

    fn draw(&self, _v: &[f64], rng: &mut StreamRng, g: &mut [f64]) -> Result<(f64, f64)> {
        let m = self.ensemble.sample(rng)?;
        g.copy_from_slice(m.as_slice());
        let log_det = if m.dim() == 2 {
            m.determinant().abs().ln()
        } else {
            f64::NAN
        };
        Ok((log_det, 0.0))
    }
}

fn plain_stepper(e: &MatrixEnsemble) -> Box<dyn Stepper + '_> {
    match e.kind() {
        EnsembleKind::Finite(_) => Box::new(FiniteStepper::new(e)),
        EnsembleKind::Generator(_) => Box::new(GeneratorStepper { ensemble: e }),
    }
}

/// Optional snapshot hook: called with `(step, unit direction)` after each step.
type Observer<'a> = &'a mut dyn FnMut(u64, &[f64]);

/// Core trajectory loop shared by all samplers.
fn run_trajectory<S: Stepper + ?Sized>(
    stepper: &S,
    x0: &[f64],
    f: &[f64],
    n: u64,
    trajectory: u64,
    seed: u64,
    track_ext2: bool,
    mut observer: Option<Observer<'_>>,
) -> Result<WalkSample> {
    let d = stepper.dim();
    let mut rng = rng::stream_from_seed(seed);
    let mut v = x0.to_vec();
    let mut w = vec![0.0; d];
    let mut g = vec![0.0; d * d];
    let mut log_norm = 0.0;
    let mut pending = 1.0;
    let mut ext2 = 0.0;
    let mut log_weight = 0.0;
    let mut frame = if track_ext2 && d > 2 {
        Some(initial_frame(x0))
    } else {
        None
    };
    let non_finite = |step: u64, what: &'static str| Error::NonFinite {
        trajectory,
        step,
        what,
    };
    for step in 0..n {
        let (log_det, dw) = stepper.draw(&v, &mut rng, &mut g)?;
        apply_raw(&g, d, &v, &mut w);
        let growth = norm(&w);
        if !(growth.is_finite() && growth > 0.0) {
            return Err(non_finite(step, "direction norm"));
        }
        let inv = 1.0 / growth;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi * inv;
        }
        if (1e-100..=1e100).contains(&growth) {
            pending *= growth;
            if !(1e-100..=1e100).contains(&pending) {
                log_norm += pending.ln();
                pending = 1.0;
            }
        } else {
            log_norm += growth.ln();
        }
        log_weight += dw;
        if let Some(fr) = frame.as_mut() {
            let (a, b) = (apply_vec(&g, d, &fr[0]), apply_vec(&g, d, &fr[1]));
            let vol = orthonormalize(a, b, fr)
                .ok_or_else(|| non_finite(step, "exterior-square frame"))?;
            ext2 += vol.ln();
        } else {
            ext2 += log_det;
        }
        if let Some(obs) = observer.as_mut() {
            obs(step + 1, &v);
        }
    }
    log_norm += pending.ln();
    if !log_norm.is_finite() || !log_weight.is_finite() {
        return Err(non_finite(n, "accumulated log norm or weight"));
    }
    let pairing = dot(&v, f).abs().min(1.0);
    let log_delta = pairing.ln();
    Ok(WalkSample {
        sigma_n: log_norm,
        coeff_log_n: log_norm + log_delta,
        log_delta_n: log_delta,
        terminal_direction: ProjectivePoint::new(&v)?,
        importance_log_weight: log_weight,
        ext2_log_norm: if track_ext2 { ext2 } else { f64::NAN },
        trajectory_seed: seed,
    })
}

fn apply_vec(g: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d];
    apply_raw(g, d, v, &mut out);
    out
}

fn check_dims(e_dim: usize, x0: &ProjectivePoint, f: &DualPoint) -> Result<()> {
    if x0.dim() != e_dim || f.dim() != e_dim {
        return Err(Error::input(format!(
            "x0/f dimensions ({}, {}) do not match the ensemble dimension {e_dim}",
            x0.dim(),
            f.dim()
        )));
    }
    Ok(())
}

fn run_many<S: Stepper + ?Sized>(
    stepper: &S,
    x0: &ProjectivePoint,
    f: &DualPoint,
    n: usize,
    m: usize,
    seed: u64,
    track_ext2: bool,
) -> Result<Vec<WalkSample>> {
    if n == 0 || m == 0 {
        return Err(Error::input("n and m must be ≥ 1"));
    }
    (0..m as u64)
        .into_par_iter()
        .map(|t| {
            run_trajectory(
                stepper,
                x0.direction(),
                f.functional(),
                n as u64,
                t,
                rng::trajectory_seed(seed, t),
                track_ext2,
                None,
            )
        })
        .collect()
}

/// `m` independent trajectories of length `n` under μ.
pub fn run_walks(
    e: &MatrixEnsemble,
    x0: &ProjectivePoint,
    f: &DualPoint,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<WalkSample>> {
    check_dims(e.dim(), x0, f)?;
    let stepper = plain_stepper(e);
    run_many(stepper.as_ref(), x0, f, n, m, seed, e.dim() == 2)
}

/// Like [`run_walks`] but also tracks `log‖∧²G_n‖` when `d > 2`.
pub fn run_walks_with_ext2(
    e: &MatrixEnsemble,
    x0: &ProjectivePoint,
    f: &DualPoint,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<WalkSample>> {
    check_dims(e.dim(), x0, f)?;
    let stepper = plain_stepper(e);
    run_many(stepper.as_ref(), x0, f, n, m, seed, true)
}

/// The matrices drawn by trajectory `t` of [`run_walks`], in order `g_1, …, g_n`.
pub fn replay_matrices(e: &MatrixEnsemble, seed: u64, t: u64, n: usize) -> Result<Vec<Matrix>> {
    let mut rng = rng::trajectory_stream(seed, t);
    (0..n).map(|_| e.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda1: f64,
    pub lambda1_se: f64,
    pub lambda2: f64,
    pub lambda2_se: f64,
    pub n: usize,
    pub m: usize,
}

/// `λ̂₁ = mean σ_n / n` and `λ̂₂ = mean(log‖∧²G_n‖ − σ_n) / n`.
pub fn estimate_lyapunov(
    e: &MatrixEnsemble,
    x0: &ProjectivePoint,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if n < 50 {
        return Err(Error::input("estimate_lyapunov needs n ≥ 50"));
    }
    let f = DualPoint::basis(e.dim(), 0);
    let samples = run_walks_with_ext2(e, x0, &f, n, m, seed)?;
    let nf = n as f64;
    let l1: Vec<f64> = samples.iter().map(|s| s.sigma_n / nf).collect();
    let l2: Vec<f64> = samples
        .iter()
        .map(|s| (s.ext2_log_norm - s.sigma_n) / nf)
        .collect();
    let (s1, s2) = (Summary::of(&l1), Summary::of(&l2));
    Ok(LyapunovEstimate {
        lambda1: s1.mean,
        lambda1_se: s1.std_error(),
        lambda2: s2.mean,
        lambda2_se: s2.std_error(),
        n,
        m,
    })
}

/// Exponentially tilted transition kernel of `Q_s` for a finite planar ensemble.
///
/// Given the grid eigenfunction `r_s` (angles `jπ/M`), a step from `x` picks
/// atom `i` with probability `∝ p_i e^{sσ(g_i, x)} r_s(g_i·x)`, normalized
/// exactly at `x`. The importance weight accumulates the exact likelihood
/// ratio `Z(x)/(e^{sσ} r_s(g·x))`, which telescopes to
/// `−sσ(G_n,x) + n log κ(s) + log r_s(x) − log r_s(G_n·x)` when `r_s` solves
/// the eigen-equation.
#[derive(Debug, Clone)]
pub struct TiltedKernel {
    pub s: f64,
    pub kappa_s: f64,
    r_grid: Vec<f64>,
    entries: Vec<[f64; 4]>,
    log_probs: Vec<f64>,
    log_dets: Vec<f64>,
    ensemble: MatrixEnsemble,
}

/// Floor applied to interpolated `r_s` values.
pub const R_FLOOR: f64 = 1e-300;

impl TiltedKernel {
    pub fn new(e: &MatrixEnsemble, s: f64, kappa_s: f64, r_grid: Vec<f64>) -> Result<TiltedKernel> {
        let atoms = e.atoms().ok_or_else(|| {
            Error::Unsupported("tilted sampling needs a finite-support ensemble (generators would need biased rejection)".into())
        })?;
        if e.dim() != 2 {
            return Err(Error::Unsupported(
                "tilted sampling is implemented for d = 2".into(),
            ));
        }
        if atoms.len() > MAX_TILTED_ATOMS {
            return Err(Error::Unsupported(format!(
                "tilted sampling supports at most {MAX_TILTED_ATOMS} atoms"
            )));
        }
        if r_grid.len() < 2 || r_grid.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::input("r_s must be a positive grid function"));
        }
        if !(kappa_s.is_finite() && kappa_s > 0.0 && s.is_finite()) {
            return Err(Error::input("kappa(s) must be positive and s finite"));
        }
        Ok(TiltedKernel {
            s,
            kappa_s,
            r_grid,
            entries: atoms
                .iter()
                .map(|a| {
                    let m = a.matrix.as_slice();
                    [m[0], m[1], m[2], m[3]]
                })
                .collect(),
            log_probs: atoms.iter().map(|a| a.probability.ln()).collect(),
            log_dets: atoms
                .iter()
                .map(|a| a.matrix.determinant().abs().ln())
                .collect(),
            ensemble: e.clone(),
        })
    }

    pub fn ensemble(&self) -> &MatrixEnsemble {
        &self.ensemble
    }

    pub fn r_grid(&self) -> &[f64] {
        &self.r_grid
    }

    /// Linear interpolation of `r_s` at projective angle `theta ∈ [0, π)`.
    #[inline]
    pub fn r_at(&self, theta: f64) -> f64 {
        interpolate_periodic(&self.r_grid, theta).max(R_FLOOR)
    }

    /// Tilted transition probabilities at `x`; they sum to 1 up to rounding.
    pub fn probabilities(&self, x: &ProjectivePoint) -> Vec<f64> {
        let (weights, z) = self.weights(x.direction());
        weights.iter().map(|w| w.0 / z).collect()
    }

    /// `|Z(x)/(κ(s) r_s(x)) − 1|`: how far the grid `r_s` is from solving the
    /// eigen-equation at `x`.
    pub fn normalization_deviation(&self, x: &ProjectivePoint) -> f64 {
        let (_, z) = self.weights(x.direction());
        (z / (self.kappa_s * self.r_at(x.angle())) - 1.0).abs()
    }

    /// Per-atom `(p_i e^{sσ_i} r_i, σ_i, r_i)` and their total.
    #[inline]
    fn weights(&self, v: &[f64]) -> ([(f64, f64, f64); 8], f64) {
        let mut out = [(0.0, 0.0, 0.0); 8];
        let mut z = 0.0;
        for (i, m) in self.entries.iter().enumerate() {
            let w = [m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]];
            let sigma = norm(&w).ln();
            let r = self.r_at(projective_angle(&w));
            let weight = (self.log_probs[i] + self.s * sigma).exp() * r;
            out[i] = (weight, sigma, r);
            z += weight;
        }
        (out, z)
    }
}

impl Stepper for TiltedKernel {
    fn dim(&self) -> usize {
        2
    }

    #[inline]
    fn draw(&self, v: &[f64], rng: &mut StreamRng, g: &mut [f64]) -> Result<(f64, f64)> {
        let (weights, z) = self.weights(v);
        let target = rng::unit_f64(rng.next_u64()) * z;
        let k = self.entries.len();
        let mut acc = 0.0;
        let mut pick = k - 1;
        for (i, w) in weights.iter().take(k).enumerate() {
            acc += w.0;
            if target < acc {
                pick = i;
                break;
            }
        }
        let (_, sigma, r) = weights[pick];
        g.copy_from_slice(&self.entries[pick]);
        Ok((self.log_dets[pick], z.ln() - self.s * sigma - r.ln()))
    }
}

/// Tilted kernels store per-atom weights on the stack; this bounds the support size.
pub const MAX_TILTED_ATOMS: usize = 8;

pub(crate) fn interpolate_periodic(values: &[f64], theta: f64) -> f64 {
    let m = values.len();
    let pos = theta / std::f64::consts::PI * m as f64;
    let base = pos.floor();
    let frac = pos - base;
    let j = (base as i64).rem_euclid(m as i64) as usize;
    let k = if j + 1 == m { 0 } else { j + 1 };
    values[j] + frac * (values[k] - values[j])
}

/// `m` trajectories under `Q_s`. At `s = 0` this is exactly [`run_walks`].
pub fn tilted_run_walks(
    k: &TiltedKernel,
    x0: &ProjectivePoint,
    f: &DualPoint,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<WalkSample>> {
    if k.s == 0.0 {
        return run_walks(&k.ensemble, x0, f, n, m, seed);
    }
    check_dims(2, x0, f)?;
    run_many(k, x0, f, n, m, seed, true)
}

/// Walk law for occupation sampling and other generic drivers.
#[derive(Clone, Copy)]
pub enum Driver<'a> {
    Plain(&'a MatrixEnsemble),
    Tilted(&'a TiltedKernel),
}

impl Driver<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Driver::Plain(e) => e.dim(),
            Driver::Tilted(_) => 2,
        }
    }

    /// Runs `m` walks of length `n` under this law.
    pub fn run(
        &self,
        x0: &ProjectivePoint,
        f: &DualPoint,
        n: usize,
        m: usize,
        seed: u64,
    ) -> Result<Vec<WalkSample>> {
        match self {
            Driver::Plain(e) => run_walks(e, x0, f, n, m, seed),
            Driver::Tilted(k) => tilted_run_walks(k, x0, f, n, m, seed),
        }
    }
}

/// Heuristic burn-in `10·d·log(1/h)` for grid spacing `h = π/M`.
pub fn default_burn_in(dim: usize, grid_size: usize) -> usize {
    let h = std::f64::consts::PI / grid_size as f64;
    (10.0 * dim as f64 * (1.0 / h).ln()).ceil().max(1.0) as usize
}

/// Directions `G_k·x0` for `k = n_burn+1, …, n_burn+n_keep` along `m`
/// trajectories, approximating ν (plain) or π_s (tilted).
pub fn occupation_sample(
    driver: Driver<'_>,
    x0: &ProjectivePoint,
    n_burn: usize,
    n_keep: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<ProjectivePoint>> {
    if n_burn == 0 {
        return Err(Error::input("n_burn must be ≥ 1"));
    }
    if x0.dim() != driver.dim() {
        return Err(Error::input("x0 dimension does not match the walk"));
    }
    let f = DualPoint::basis(x0.dim(), 0);
    let total = (n_burn + n_keep) as u64;
    let per_trajectory: Vec<Vec<ProjectivePoint>> = (0..m as u64)
        .into_par_iter()
        .map(|t| {
            let mut kept = Vec::with_capacity(n_keep);
            let mut obs = |step: u64, v: &[f64]| {
                if step > n_burn as u64 {
                    kept.push(ProjectivePoint::new(v).expect("unit"));
                }
            };
            let seed_t = rng::trajectory_seed(seed, t);
            let obs_ref: Observer<'_> = &mut obs;
            match driver {
                Driver::Plain(e) => {
                    let stepper = plain_stepper(e);
                    run_trajectory(
                        stepper.as_ref(),
                        x0.direction(),
                        f.functional(),
                        total,
                        t,
                        seed_t,
                        false,
                        Some(obs_ref),
                    )?;
                }
                Driver::Tilted(k) => {
                    run_trajectory(
                        k,
                        x0.direction(),
                        f.functional(),
                        total,
                        t,
                        seed_t,
                        false,
                        Some(obs_ref),
                    )?;
                }
            }
            Ok(kept)
        })
        .collect::<Result<_>>()?;
    Ok(per_trajectory.into_iter().flatten().collect())
}

/// Writes `seed,sigma_n,coeff_log_n,log_delta_n,weight` rows.
pub fn write_samples_csv<W: Write>(samples: &[WalkSample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "seed,sigma_n,coeff_log_n,log_delta_n,weight")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.trajectory_seed, s.sigma_n, s.coeff_log_n, s.log_delta_n, s.importance_log_weight
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::builtin;
    use approx::assert_relative_eq;

    fn e1() -> ProjectivePoint {
        ProjectivePoint::basis(2, 0)
    }

    #[test]
    fn identity_steps_do_nothing() {
        let x = ProjectivePoint::from_angle(0.3);
        let mut s = WalkState::new(&x, &DualPoint::basis(2, 0)).unwrap();
        for _ in 0..10 {
            s.step(&Matrix::identity(2)).unwrap();
        }
        assert_eq!(s.log_norm, 0.0);
        assert!(linalg::angular_distance(&s.direction, &x) < 1e-15);
        assert_eq!(s.step_count, 10);
    }

    #[test]
    fn diagonal_steps_grow_by_log3() {
        let mut s = WalkState::new(&e1(), &DualPoint::basis(2, 0)).unwrap();
        for _ in 0..25 {
            s.step(&Matrix::diag(&[3.0, 1.0])).unwrap();
        }
        assert_relative_eq!(s.log_norm, 25.0 * 3f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(s.ext2_log_norm, 25.0 * 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn fast_loop_matches_walk_state() {
        let e = builtin("oracleA").unwrap();
        let x = ProjectivePoint::from_angle(0.4);
        let f = DualPoint::from_angle(1.9);
        let samples = run_walks(&e, &x, &f, 40, 4, 11).unwrap();
        for (t, sample) in samples.iter().enumerate() {
            let mut st = WalkState::new(&x, &f).unwrap();
            for g in replay_matrices(&e, 11, t as u64, 40).unwrap() {
                st.step(&g).unwrap();
            }
            assert_relative_eq!(st.log_norm, sample.sigma_n, max_relative = 1e-13);
            assert_relative_eq!(st.coeff_log(), sample.coeff_log_n, max_relative = 1e-12);
            assert_relative_eq!(st.ext2_log_norm, sample.ext2_log_norm, epsilon = 1e-10);
            assert!(linalg::angular_distance(&st.direction, &sample.terminal_direction) < 1e-12);
        }
    }

    #[test]
    fn deterministic_ensemble_gives_identical_samples() {
        let e = builtin("diag31").unwrap();
        let s = run_walks(
            &e,
            &ProjectivePoint::from_angle(0.2),
            &DualPoint::basis(2, 0),
            30,
            3,
            0,
        )
        .unwrap();
        assert_eq!(s[0].sigma_n, s[1].sigma_n);
        assert_eq!(s[1].coeff_log_n, s[2].coeff_log_n);
        assert!(s.iter().all(|x| x.log_delta_n <= 0.0));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let e = builtin("oracleA").unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_walks(&e, &e1(), &DualPoint::basis(2, 1), 64, 500, 99).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn lyapunov_of_diag31_is_exact() {
        let est = estimate_lyapunov(&builtin("diag31").unwrap(), &e1(), 60, 5, 0).unwrap();
        assert_relative_eq!(est.lambda1, 3f64.ln(), epsilon = 1e-14);
        assert!(est.lambda2.abs() < 1e-14);
    }

    #[test]
    fn lyapunov_of_scalar_rotation_is_zero() {
        let est =
            estimate_lyapunov(&builtin("scalar-rotation").unwrap(), &e1(), 200, 2000, 4).unwrap();
        assert!(est.lambda1.abs() < 3.0 * est.lambda1_se, "{est:?}");
        assert!((est.lambda1 - est.lambda2).abs() < 1e-12);
    }

    #[test]
    fn ginibre3_lyapunov_exponents_match_closed_form() {
        // λ_i = (log 2 + ψ((d − i + 1)/2))/2 for Gaussian entries.
        let est = estimate_lyapunov(
            &builtin("ginibre3").unwrap(),
            &ProjectivePoint::basis(3, 0),
            400,
            400,
            2,
        )
        .unwrap();
        assert!(
            (est.lambda1 - 0.364_819).abs() < 4.0 * est.lambda1_se,
            "{est:?}"
        );
        assert!(
            (est.lambda2 - 0.057_966).abs() < 4.0 * est.lambda2_se + 2e-3,
            "{est:?}"
        );
    }

    #[test]
    fn tilted_kernel_rejects_generators() {
        let e = builtin("heavy-alpha").unwrap();
        assert!(matches!(
            TiltedKernel::new(&e, 0.1, 1.0, vec![1.0; 8]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn tilted_probabilities_are_normalized() {
        let e = builtin("oracleA").unwrap();
        let r: Vec<f64> = (0..64)
            .map(|j| 1.0 + 0.1 * (j as f64 * 0.1).sin())
            .collect();
        let k = TiltedKernel::new(&e, 0.3, 1.4, r).unwrap();
        for j in 0..50 {
            let p = k.probabilities(&ProjectivePoint::from_angle(j as f64 * 0.06));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_tilt_equals_plain_walk() {
        let e = builtin("oracleA").unwrap();
        let k = TiltedKernel::new(&e, 0.0, 1.0, vec![1.0; 16]).unwrap();
        let f = DualPoint::basis(2, 0);
        let a = tilted_run_walks(&k, &e1(), &f, 20, 50, 3).unwrap();
        let b = run_walks(&e, &e1(), &f, 20, 50, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.importance_log_weight == 0.0));
    }

    #[test]
    fn occupation_of_diag31_converges_to_e1() {
        let e = builtin("diag31").unwrap();
        let pts = occupation_sample(
            Driver::Plain(&e),
            &ProjectivePoint::from_angle(1.5),
            60,
            10,
            3,
            0,
        )
        .unwrap();
        assert_eq!(pts.len(), 30);
        assert!(pts
            .iter()
            .all(|p| linalg::angular_distance(p, &e1()) < 1e-20));
    }

    #[test]
    fn occupation_of_rotations_is_uniform() {
        let e = builtin("rotation").unwrap();
        let pts = occupation_sample(Driver::Plain(&e), &e1(), 50, 100, 1000, 8).unwrap();
        let mut angles: Vec<f64> = pts
            .iter()
            .map(|p| p.angle() / std::f64::consts::PI)
            .collect();
        angles.sort_by(f64::total_cmp);
        let n = angles.len() as f64;
        let ks = angles
            .iter()
            .enumerate()
            .map(|(i, a)| (a - i as f64 / n).abs().max((a - (i + 1) as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks <= 0.02, "Kolmogorov distance {ks}");
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let e = builtin("oracleA").unwrap();
        let s = run_walks(&e, &e1(), &DualPoint::basis(2, 0), 5, 3, 0).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
