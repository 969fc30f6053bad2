use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::ProjectiveGrid;
use crate::ensemble::MatrixEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{norm, projective_angle};

/// Maximum power-iteration sweeps before giving up.
pub const MAX_ITERATIONS: usize = 100_000;

/// Sparse grid operator: row `j` holds `stride` entries `(column, weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedOperator<T> {
    pub grid: ProjectiveGrid,
    pub s: f64,
    pub u: f64,
    pub ensemble_hash: String,
    stride: usize,
    cols: Vec<u32>,
    weights: Vec<T>,
}

pub type RealOperator = DiscretizedOperator<f64>;
pub type ComplexOperator = DiscretizedOperator<Complex64>;

/// One atom's action on node `j`: target cell, offset, and `σ(g, x_j)`.
struct Image {
    col: usize,
    frac: f64,
    sigma: f64,
}

fn images(e: &MatrixEnsemble, grid: ProjectiveGrid) -> Result<(Vec<f64>, Vec<Vec<Image>>)> {
    let atoms = e.atoms().ok_or_else(|| {
        Error::Unsupported("transfer operators need a finite-support ensemble".into())
    })?;
    if e.dim() != 2 {
        return Err(Error::Unsupported(format!(
            "the spectral engine is planar (d = 2); got d = {}; use Monte Carlo estimates instead",
            e.dim()
        )));
    }
    let probs = atoms.iter().map(|a| a.probability).collect();
    let rows = grid
        .nodes()
        .map(|theta| {
            let v = [theta.cos(), theta.sin()];
            atoms
                .iter()
                .map(|a| {
                    let w = a.matrix.apply(&v);
                    let (col, frac) = grid.locate(projective_angle(&w));
                    Image {
                        col,
                        frac,
                        sigma: norm(&w).ln(),
                    }
                })
                .collect()
        })
        .collect();
    Ok((probs, rows))
}

/// `P_s φ(x_j) = Σ_i p_i e^{sσ(g_i, x_j)} φ(g_i·x_j)` with linear interpolation.
pub fn build_ps(e: &MatrixEnsemble, s: f64, grid: ProjectiveGrid) -> Result<RealOperator> {
    let (probs, rows) = images(e, grid)?;
    let stride = 2 * probs.len();
    let mut cols = Vec::with_capacity(stride * grid.size());
    let mut weights = Vec::with_capacity(stride * grid.size());
    for row in &rows {
        for (p, img) in probs.iter().zip(row) {
            let w = p * (s * img.sigma).exp();
            if !w.is_finite() {
                return Err(Error::OutOfRange {
                    what: "e^{sσ} overflows; s outside the safe range".into(),
                    value: s,
                    lo: f64::NEG_INFINITY,
                    hi: f64::INFINITY,
                });
            }
            cols.push(img.col as u32);
            weights.push(w * (1.0 - img.frac));
            cols.push(grid.next(img.col) as u32);
            weights.push(w * img.frac);
        }
    }
    Ok(DiscretizedOperator {
        grid,
        s,
        u: 0.0,
        ensemble_hash: e.content_hash(),
        stride,
        cols,
        weights,
    })
}

/// `P_{s+iu}` with complex weights `p_i e^{(s+iu)σ}`.
pub fn build_pz(
    e: &MatrixEnsemble,
    s: f64,
    u: f64,
    grid: ProjectiveGrid,
) -> Result<ComplexOperator> {
    let (probs, rows) = images(e, grid)?;
    let stride = 2 * probs.len();
    let z = Complex64::new(s, u);
    let mut cols = Vec::with_capacity(stride * grid.size());
    let mut weights = Vec::with_capacity(stride * grid.size());
    for row in &rows {
        for (p, img) in probs.iter().zip(row) {
            let w = p * (z * img.sigma).exp();
            if !(w.re.is_finite() && w.im.is_finite()) {
                return Err(Error::OutOfRange {
                    what: "e^{zσ} overflows".into(),
                    value: s,
                    lo: f64::NEG_INFINITY,
                    hi: f64::INFINITY,
                });
            }
            cols.push(img.col as u32);
            weights.push(w * (1.0 - img.frac));
            cols.push(grid.next(img.col) as u32);
            weights.push(w * img.frac);
        }
    }
    Ok(DiscretizedOperator {
        grid,
        s,
        u,
        ensemble_hash: e.content_hash(),
        stride,
        cols,
        weights,
    })
}

impl<T> DiscretizedOperator<T>
where
    T: Copy
        + Default
        + std::ops::Mul<Output = T>
        + std::ops::Add<Output = T>
        + std::ops::Mul<f64, Output = T>,
{
    pub fn size(&self) -> usize {
        self.grid.size()
    }

    /// `out = P φ`.
    pub fn apply(&self, phi: &[T], out: &mut [T]) {
        for (j, o) in out.iter_mut().enumerate() {
            let base = j * self.stride;
            let mut acc = T::default();
            for k in base..base + self.stride {
                acc = acc + self.weights[k] * phi[self.cols[k] as usize];
            }
            *o = acc;
        }
    }

    /// `out = ν P` for a row vector `ν`.
    pub fn apply_left(&self, nu: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::default());
        for (j, &mass) in nu.iter().enumerate() {
            let base = j * self.stride;
            for k in base..base + self.stride {
                let c = self.cols[k] as usize;
                out[c] = out[c] + self.weights[k] * mass;
            }
        }
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.weights
            .chunks(self.stride)
            .map(|row| row.iter().fold(T::default(), |a, &w| a + w))
            .collect()
    }

    /// Doob-type similarity `c · D⁻¹ P D` with `D = diag(r)`.
    pub fn conjugated(&self, r: &[f64], scale: T) -> DiscretizedOperator<T> {
        let mut out = self.clone_shape();
        for j in 0..self.size() {
            let base = j * self.stride;
            for k in base..base + self.stride {
                let c = self.cols[k] as usize;
                out.weights[k] = self.weights[k] * scale * (r[c] / r[j]);
            }
        }
        out
    }

    fn clone_shape(&self) -> DiscretizedOperator<T> {
        DiscretizedOperator {
            grid: self.grid,
            s: self.s,
            u: self.u,
            ensemble_hash: self.ensemble_hash.clone(),
            stride: self.stride,
            cols: self.cols.clone(),
            weights: self.weights.clone(),
        }
    }
}

/// Dominant eigen-triple of a real `P_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub s: f64,
    pub kappa: f64,
    /// Right eigenfunction, normalized by `ν(r) = 1` against the reference measure.
    pub r: Vec<f64>,
    /// Left eigenmeasure with total mass 1.
    pub nu_s: Vec<f64>,
    /// `|λ₂|/κ` from deflated power iteration.
    pub gap_ratio: f64,
    /// `‖P r − κ r‖_∞ / (κ ‖r‖_∞)`.
    pub residual: f64,
    pub iterations: usize,
    /// Transient nodes whose `r` could not be propagated from the recurrent class.
    #[serde(default)]
    pub unresolved: usize,
}

impl EigenData {
    /// `π_s = ν_s r_s / ν_s(r_s)` as grid masses.
    pub fn pi_s(&self) -> Vec<f64> {
        let total: f64 = self.nu_s.iter().zip(&self.r).map(|(a, b)| a * b).sum();
        self.nu_s
            .iter()
            .zip(&self.r)
            .map(|(a, b)| a * b / total)
            .collect()
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

impl<T> DiscretizedOperator<T>
where
    T: Copy + Default + PartialEq,
{
    fn successors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        let base = j * self.stride;
        (base..base + self.stride)
            .filter(|&k| self.weights[k] != T::default())
            .map(|k| self.cols[k] as usize)
    }

    /// Nodes of the unique closed communicating class of the transition
    /// pattern, or `None` when there are several (then the whole grid is used).
    ///
    /// Off this class the sup-norm spectrum of `P_s` picks up the weights of
    /// repelling fixed directions, which dominate `κ(s)` for negative `s`.
    pub fn recurrent_class(&self) -> Option<Vec<bool>> {
        let m = self.grid.size();
        // Iterative Tarjan.
        const UNSET: usize = usize::MAX;
        let mut index = vec![UNSET; m];
        let mut low = vec![0usize; m];
        let mut on_stack = vec![false; m];
        let mut comp = vec![UNSET; m];
        let mut stack = Vec::new();
        let mut counter = 0;
        let mut n_comp = 0;
        for root in 0..m {
            if index[root] != UNSET {
                continue;
            }
            let mut call: Vec<(usize, Vec<usize>, usize)> =
                vec![(root, self.successors(root).collect(), 0)];
            index[root] = counter;
            low[root] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some((v, succ, pos)) = call.last_mut() {
                let v = *v;
                if *pos < succ.len() {
                    let w = succ[*pos];
                    *pos += 1;
                    if index[w] == UNSET {
                        index[w] = counter;
                        low[w] = counter;
                        counter += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, self.successors(w).collect(), 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some((parent, _, _)) = call.last() {
                        low[*parent] = low[*parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            comp[w] = n_comp;
                            if w == v {
                                break;
                            }
                        }
                        n_comp += 1;
                    }
                }
            }
        }
        let mut closed = vec![true; n_comp];
        for j in 0..m {
            if self.successors(j).any(|c| comp[c] != comp[j]) {
                closed[comp[j]] = false;
            }
        }
        let mut found = closed
            .iter()
            .enumerate()
            .filter(|(_, c)| **c)
            .map(|(i, _)| i);
        let only = found.next()?;
        if found.next().is_some() {
            return None;
        }
        Some(comp.iter().map(|&c| c == only).collect())
    }
}

fn apply_masked(op: &RealOperator, mask: &[bool], phi: &[f64], out: &mut [f64]) {
    op.apply(phi, out);
    out.iter_mut()
        .zip(mask)
        .filter(|(_, &k)| !k)
        .for_each(|(o, _)| *o = 0.0);
}

/// Right/left power iteration with a deflated sweep for `|λ₂|`.
/// `reference` is the measure used to normalize `r` (ν at `s = 0`); `None`
/// normalizes by the left eigenmeasure itself.
///
/// The iteration runs on the recurrent class of the grid chain; `r` is then
/// extended to transient nodes through `r = κ⁻¹ P_s r`, in the order in which
/// their images become known. Nodes that never feed into the class (orbits
/// of repelling directions) get the nearest resolved value and are counted
/// in `unresolved`.
pub fn dominant_eig(op: &RealOperator, reference: Option<&[f64]>) -> Result<EigenData> {
    let m = op.size();
    let mask = op.recurrent_class().unwrap_or_else(|| vec![true; m]);
    let mut r: Vec<f64> = mask.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
    let mut next = vec![0.0; m];
    let mut kappa = 0.0;
    let mut residual;
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        apply_masked(op, &mask, &r, &mut next);
        let scale = sup_norm(&next);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: f64::NAN,
                gap_ratio: f64::NAN,
            });
        }
        // Rayleigh-type estimate at the sup-norm node of r.
        let k_est = scale / sup_norm(&r);
        residual = r
            .iter()
            .zip(&next)
            .map(|(a, b)| (b - k_est * a).abs())
            .fold(0.0, f64::max)
            / (k_est * sup_norm(&r));
        kappa = k_est;
        iterations = it;
        for (a, b) in r.iter_mut().zip(&next) {
            *a = b / scale;
        }
        if residual <= 1e-14 {
            break;
        }
    }
    // Final residual on the normalized vector.
    apply_masked(op, &mask, &r, &mut next);
    residual = r
        .iter()
        .zip(&next)
        .map(|(a, b)| (b - kappa * a).abs())
        .fold(0.0, f64::max)
        / (kappa * sup_norm(&r));

    let size = mask.iter().filter(|&&k| k).count() as f64;
    let mut nu: Vec<f64> = mask
        .iter()
        .map(|&k| if k { 1.0 / size } else { 0.0 })
        .collect();
    let mut left_residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        op.apply_left(&nu, &mut next);
        let mass: f64 = next.iter().sum();
        let mut change: f64 = 0.0;
        for (a, b) in nu.iter_mut().zip(&next) {
            let v = b / mass;
            change = change.max((v - *a).abs());
            *a = v;
        }
        left_residual = change / sup_norm(&nu);
        if left_residual <= 1e-14 {
            break;
        }
        iterations = iterations.max(it);
    }

    let gap_ratio = deflated_ratio(op, &mask, &r, &nu, kappa);
    if residual > 1e-8 || left_residual > 1e-8 {
        return Err(Error::NoConvergence {
            iterations,
            residual: residual.max(left_residual),
            gap_ratio,
        });
    }
    let unresolved = extend_transient(op, &mask, kappa, &mut r);
    let reference = reference.unwrap_or(&nu);
    let norm_r: f64 = reference.iter().zip(&r).map(|(a, b)| a * b).sum();
    r.iter_mut().for_each(|x| *x /= norm_r);
    Ok(EigenData {
        s: op.s,
        kappa,
        r,
        nu_s: nu,
        gap_ratio,
        residual,
        iterations,
        unresolved,
    })
}

fn extend_transient(op: &RealOperator, mask: &[bool], kappa: f64, r: &mut [f64]) -> usize {
    let m = op.size();
    let mut known = mask.to_vec();
    loop {
        let mut progress = false;
        for j in 0..m {
            if known[j] || !op.successors(j).all(|c| known[c]) {
                continue;
            }
            let base = j * op.stride;
            r[j] = (base..base + op.stride)
                .map(|k| op.weights[k] * r[op.cols[k] as usize])
                .sum::<f64>()
                / kappa;
            known[j] = true;
            progress = true;
        }
        if !progress {
            break;
        }
    }
    let missing: Vec<usize> = (0..m).filter(|&j| !known[j]).collect();
    for &j in &missing {
        let nearest = (1..m)
            .flat_map(|d| [(j + d) % m, (j + m - d) % m])
            .find(|&c| known[c])
            .expect("the recurrent class is non-empty");
        r[j] = r[nearest];
    }
    missing.len()
}

/// Growth rate of `P` on the complement of the dominant pair, relative to κ.
fn deflated_ratio(op: &RealOperator, mask: &[bool], r: &[f64], nu: &[f64], kappa: f64) -> f64 {
    let m = op.size();
    let nu_r: f64 = nu.iter().zip(r).map(|(a, b)| a * b).sum();
    let project = |phi: &mut [f64]| {
        let c: f64 = nu.iter().zip(phi.iter()).map(|(a, b)| a * b).sum::<f64>() / nu_r;
        phi.iter_mut().zip(r).for_each(|(p, ri)| *p -= c * ri);
    };
    let mut phi: Vec<f64> = (0..m)
        .map(|j| {
            if mask[j] {
                ((j as f64 + 0.5) * 1.618_034).sin() + 0.3 * ((j * j) as f64 * 0.01).cos()
            } else {
                0.0
            }
        })
        .collect();
    project(&mut phi);
    let mut next = vec![0.0; m];
    const WARMUP: usize = 100;
    const SPAN: usize = 200;
    let mut log_growth = 0.0;
    for it in 0..WARMUP + SPAN {
        let before = sup_norm(&phi);
        if before == 0.0 || !before.is_finite() {
            return 0.0;
        }
        phi.iter_mut().for_each(|x| *x /= before);
        apply_masked(op, mask, &phi, &mut next);
        project(&mut next);
        let after = sup_norm(&next);
        if after <= 1e-300 {
            return 0.0;
        }
        if it >= WARMUP {
            log_growth += after.ln();
        }
        std::mem::swap(&mut phi, &mut next);
    }
    ((log_growth / SPAN as f64).exp() / kappa).min(1.0)
}

/// Dominant eigenvalue of a complex operator by power iteration.
pub fn dominant_eig_complex(op: &ComplexOperator, tol: f64) -> Result<(Complex64, usize)> {
    let m = op.size();
    let mask = op.recurrent_class().unwrap_or_else(|| vec![true; m]);
    let mut phi: Vec<Complex64> = mask
        .iter()
        .map(|&k| Complex64::new(if k { 1.0 } else { 0.0 }, 0.0))
        .collect();
    let mut next = vec![Complex64::default(); m];
    let mut lambda = Complex64::default();
    for it in 1..=MAX_ITERATIONS {
        op.apply(&phi, &mut next);
        next.iter_mut()
            .zip(&mask)
            .filter(|(_, &k)| !k)
            .for_each(|(x, _)| *x = Complex64::default());
        let num: Complex64 = phi.iter().zip(&next).map(|(a, b)| a.conj() * b).sum();
        let den: f64 = phi.iter().map(|a| a.norm_sqr()).sum();
        let estimate = num / den;
        let scale = next.iter().fold(0.0_f64, |acc, x| acc.max(x.norm()));
        if !(scale.is_finite() && scale > 0.0) {
            break;
        }
        let residual = phi
            .iter()
            .zip(&next)
            .map(|(a, b)| (b - estimate * a).norm())
            .fold(0.0, f64::max)
            / (estimate.norm() * phi.iter().fold(0.0_f64, |acc, x| acc.max(x.norm())));
        lambda = estimate;
        // Rotate by the phase of the estimate so the iterates settle.
        let phase = estimate.conj() / estimate.norm();
        for (a, b) in phi.iter_mut().zip(&next) {
            *a = b * phase / scale;
        }
        if residual <= tol {
            return Ok((lambda, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: f64::NAN,
        gap_ratio: lambda.norm(),
    })
}
