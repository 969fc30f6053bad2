//! Matrices, projective points, and the geometric quantities built from them:
//! operator norm, the size `N(g)`, the norm cocycle, the projective action,
//! angular distance, the alignment `δ(x, y)`, exterior-square norms and
//! Cartan density points.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances used by identity checks. All are overridable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Slack allowed in exact identities (cocycle law, decomposition identity).
    pub identity: f64,
    /// Slack allowed in the sandwich inequalities.
    pub inequality: f64,
    /// Relative gap `(s₁ − s₂)/s₁` below which density points are flagged degenerate.
    pub singular_gap: f64,
    /// Value substituted for `log 0` in downstream statistics.
    pub log_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-9,
            inequality: 1e-10,
            singular_gap: 1e-12,
            log_floor: -745.0,
        }
    }
}

/// Replaces `-inf` (and anything below the floor) by `floor`.
#[inline]
pub fn clamp_log(value: f64, floor: f64) -> f64 {
    if value < floor {
        floor
    } else {
        value
    }
}

/// An invertible real `d × d` matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries. Rejects `d < 2`, wrong lengths,
    /// and non-finite entries. Invertibility is checked separately by
    /// [`Matrix::check_invertible`], since some callers want to inspect
    /// near-singular draws before rejecting them.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Matrix> {
        if dim < 2 {
            return Err(Error::input(format!(
                "matrix dimension must be ≥ 2, got {dim}"
            )));
        }
        if data.len() != dim * dim {
            return Err(Error::input(format!(
                "expected {} entries for a {dim}×{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("matrix has non-finite entries"));
        }
        Ok(Matrix { dim, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Matrix> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::input("rows must form a square matrix"));
        }
        Matrix::new(dim, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn identity(dim: usize) -> Matrix {
        Matrix::diag(&vec![1.0; dim])
    }

    pub fn diag(values: &[f64]) -> Matrix {
        let dim = values.len();
        let mut data = vec![0.0; dim * dim];
        for (i, v) in values.iter().enumerate() {
            data[i * dim + i] = *v;
        }
        Matrix { dim, data }
    }

    /// Planar rotation by `theta`.
    pub fn rotation(theta: f64) -> Matrix {
        let (s, c) = theta.sin_cos();
        Matrix {
            dim: 2,
            data: vec![c, -s, s, c],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[j * d + i] = self.data[i * d + j];
            }
        }
        Matrix { dim: d, data }
    }

    /// Matrix product `self · rhs`.
    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                for j in 0..d {
                    data[i * d + j] += a * rhs.data[k * d + j];
                }
            }
        }
        Matrix { dim: d, data }
    }

    /// Writes `self · v` into `out`.
    #[inline]
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        apply_raw(&self.data, self.dim, v, out);
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(v, &mut out);
        out
    }

    /// `fᵀ · g` as a functional, i.e. the adjoint `g*` applied to `f`.
    pub fn apply_adjoint(&self, f: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|j| (0..d).map(|i| f[i] * self.data[i * d + j]).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn determinant(&self) -> f64 {
        if self.dim == 2 {
            let a = &self.data;
            return a[0] * a[3] - a[1] * a[2];
        }
        self.to_dmatrix().determinant()
    }

    /// Scale-aware invertibility test: `|det g| ≥ threshold · max|g_ij|^d`.
    pub fn check_invertible(&self, threshold: f64) -> Result<()> {
        let det = self.determinant();
        let scale = self.max_abs().powi(self.dim as i32);
        if !(det.abs() > 0.0) || det.abs() < threshold * scale {
            return Err(Error::Singular { det });
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Matrix> {
        let inv = self.to_dmatrix().try_inverse().ok_or(Error::Singular {
            det: self.determinant(),
        })?;
        let mut data = Vec::with_capacity(self.dim * self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                data.push(inv[(i, j)]);
            }
        }
        Matrix::new(self.dim, data)
    }

    /// Singular value decomposition with descending singular values and
    /// sign-canonicalized singular vectors.
    pub fn svd(&self) -> SingularData {
        let d = self.dim;
        let svd = self.to_dmatrix().svd(true, true);
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested Vᵀ");
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

        let mut singular_values = Vec::with_capacity(d);
        let mut left_vectors = Vec::with_capacity(d);
        let mut right_vectors = Vec::with_capacity(d);
        for &k in &order {
            let mut left: Vec<f64> = (0..d).map(|i| u[(i, k)]).collect();
            let mut right: Vec<f64> = (0..d).map(|j| vt[(k, j)]).collect();
            if canonical_sign(&left) < 0.0 {
                left.iter_mut().for_each(|x| *x = -*x);
                right.iter_mut().for_each(|x| *x = -*x);
            }
            singular_values.push(svd.singular_values[k]);
            left_vectors.push(left);
            right_vectors.push(right);
        }
        SingularData {
            singular_values,
            left_vectors,
            right_vectors,
        }
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::input("matrix has non-finite entries"))
        }
    }
}

#[inline]
pub(crate) fn apply_raw(m: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    if d == 2 {
        out[0] = m[0] * v[0] + m[1] * v[1];
        out[1] = m[2] * v[0] + m[3] * v[1];
        return;
    }
    for (i, o) in out.iter_mut().enumerate().take(d) {
        let row = &m[i * d..(i + 1) * d];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    if v.len() == 2 {
        return v[0].hypot(v[1]);
    }
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sign (+1 or −1) of the first coordinate that is not negligible.
fn canonical_sign(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let cutoff = 1e-13 * scale;
    v.iter()
        .find(|x| x.abs() > cutoff)
        .map(|x| x.signum())
        .unwrap_or(1.0)
}

fn canonical_unit(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::input("projective points need dimension ≥ 2"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("vector has non-finite entries"));
    }
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::input("zero vector has no direction"));
    }
    let sign = canonical_sign(v);
    Ok(v.iter().map(|x| sign * x / n).collect())
}

/// Unit vector modulo sign: a point `x = ℝv` of the projective space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectivePoint {
    direction: Vec<f64>,
}

impl ProjectivePoint {
    pub fn new(v: &[f64]) -> Result<ProjectivePoint> {
        Ok(ProjectivePoint {
            direction: canonical_unit(v)?,
        })
    }

    /// `ℝ(cos θ, sin θ)`.
    pub fn from_angle(theta: f64) -> ProjectivePoint {
        let (s, c) = theta.sin_cos();
        ProjectivePoint::new(&[c, s]).expect("unit circle point")
    }

    /// Coordinate axis `ℝe_i`.
    pub fn basis(dim: usize, i: usize) -> ProjectivePoint {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        ProjectivePoint { direction: v }
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// Angle in `[0, π)` of a planar point.
    pub fn angle(&self) -> f64 {
        assert_eq!(self.dim(), 2, "angle is only defined for d = 2");
        projective_angle(&self.direction)
    }
}

/// Angle in `[0, π)` of the line spanned by a planar vector.
#[inline]
pub fn projective_angle(v: &[f64]) -> f64 {
    let a = v[1].atan2(v[0]);
    let a = if a < 0.0 { a + std::f64::consts::PI } else { a };
    if a >= std::f64::consts::PI {
        0.0
    } else {
        a
    }
}

/// Unit functional modulo sign: a point `y = ℝf` of the dual projective space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    functional: Vec<f64>,
}

impl DualPoint {
    pub fn new(f: &[f64]) -> Result<DualPoint> {
        Ok(DualPoint {
            functional: canonical_unit(f)?,
        })
    }

    pub fn from_angle(theta: f64) -> DualPoint {
        let (s, c) = theta.sin_cos();
        DualPoint::new(&[c, s]).expect("unit circle point")
    }

    /// Dual basis functional `ℝe_i*`.
    pub fn basis(dim: usize, i: usize) -> DualPoint {
        let mut f = vec![0.0; dim];
        f[i] = 1.0;
        DualPoint { functional: f }
    }

    pub fn functional(&self) -> &[f64] {
        &self.functional
    }

    pub fn dim(&self) -> usize {
        self.functional.len()
    }

    /// The point `y^⊥ ∈ P(V)` orthogonal to this functional (`d = 2` only).
    pub fn orthogonal_point(&self) -> ProjectivePoint {
        assert_eq!(self.dim(), 2, "orthogonal point is only defined for d = 2");
        ProjectivePoint::new(&[-self.functional[1], self.functional[0]]).expect("unit")
    }
}

/// Singular values (descending) with left/right singular vectors,
/// `g = Σ sᵢ uᵢ wᵢᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularData {
    pub singular_values: Vec<f64>,
    pub left_vectors: Vec<Vec<f64>>,
    pub right_vectors: Vec<Vec<f64>>,
}

impl SingularData {
    pub fn reconstruct(&self) -> Matrix {
        let d = self.singular_values.len();
        let mut data = vec![0.0; d * d];
        for k in 0..d {
            let s = self.singular_values[k];
            for i in 0..d {
                for j in 0..d {
                    data[i * d + j] += s * self.left_vectors[k][i] * self.right_vectors[k][j];
                }
            }
        }
        Matrix { dim: d, data }
    }
}

/// Operator norm `‖g‖ = sup ‖gv‖/‖v‖`, the largest singular value.
pub fn op_norm(g: &Matrix) -> Result<f64> {
    g.ensure_finite()?;
    if g.dim == 2 {
        let (s1, _) = singular_values_2x2(g.as_slice());
        return Ok(s1);
    }
    Ok(g.svd().singular_values[0])
}

/// Closed-form singular values of a 2×2 matrix.
pub(crate) fn singular_values_2x2(a: &[f64]) -> (f64, f64) {
    let (p, q, r, s) = (a[0], a[1], a[2], a[3]);
    // s₁ ± s₂ = ‖(p+s, q−r)‖ ± ‖(p−s, q+r)‖
    let h1 = (p + s).hypot(q - r);
    let h2 = (p - s).hypot(q + r);
    let s1 = 0.5 * (h1 + h2);
    // s₂ = |det|/s₁ avoids the cancellation in (h1 − h2)/2.
    let s2 = if s1 > 0.0 {
        (p * s - q * r).abs() / s1
    } else {
        0.0
    };
    (s1, s2)
}

/// `N(g) = max(‖g‖, ‖g⁻¹‖)`.
pub fn size_n(g: &Matrix) -> Result<f64> {
    g.ensure_finite()?;
    if g.dim == 2 {
        let (s1, s2) = singular_values_2x2(g.as_slice());
        if s2 <= 0.0 {
            return Err(Error::Singular {
                det: g.determinant(),
            });
        }
        return Ok(s1.max(1.0 / s2));
    }
    let sv = g.svd().singular_values;
    let smallest = *sv.last().expect("non-empty");
    if smallest <= 0.0 {
        return Err(Error::Singular {
            det: g.determinant(),
        });
    }
    Ok(sv[0].max(1.0 / smallest))
}

/// Norm cocycle `σ(g, x) = log(‖gv‖/‖v‖)`.
pub fn cocycle(g: &Matrix, x: &ProjectivePoint) -> f64 {
    norm(&g.apply(x.direction())).ln()
}

/// Projective action `g·x = ℝgv`.
pub fn act(g: &Matrix, x: &ProjectivePoint) -> ProjectivePoint {
    ProjectivePoint::new(&g.apply(x.direction()))
        .expect("invertible matrix maps nonzero to nonzero")
}

/// Angular distance `‖v ∧ v'‖ / (‖v‖‖v'‖)`.
pub fn angular_distance(x: &ProjectivePoint, x2: &ProjectivePoint) -> f64 {
    wedge_norm(x.direction(), x2.direction()).min(1.0)
}

pub(crate) fn wedge_norm(a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    if d == 2 {
        return (a[0] * b[1] - a[1] * b[0]).abs();
    }
    let mut acc = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            let w = a[i] * b[j] - a[j] * b[i];
            acc += w * w;
        }
    }
    acc.sqrt()
}

/// Alignment `δ(x, y) = |⟨f, v⟩| / (‖f‖‖v‖)`.
pub fn delta(x: &ProjectivePoint, y: &DualPoint) -> f64 {
    dot(x.direction(), y.functional()).abs().min(1.0)
}

/// `‖∧²g‖ = s₁ s₂`.
pub fn exterior_square_norm(g: &Matrix) -> f64 {
    if g.dim == 2 {
        return g.determinant().abs();
    }
    let sv = g.svd().singular_values;
    sv[0] * sv[1]
}

/// Cartan density points of `g` and `g*`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPoints {
    /// `x_g^M`: top left singular direction.
    pub x_max: ProjectivePoint,
    /// `y_g^m`: top right singular direction, read as a functional.
    pub y_min: DualPoint,
    /// Set when `s₁ − s₂ < singular_gap · s₁`; the choice is then arbitrary.
    pub degenerate: bool,
}

pub fn density_points(g: &Matrix) -> DensityPoints {
    density_points_with(g, Tolerances::default().singular_gap)
}

pub fn density_points_with(g: &Matrix, singular_gap: f64) -> DensityPoints {
    let svd = g.svd();
    let s = &svd.singular_values;
    DensityPoints {
        x_max: ProjectivePoint::new(&svd.left_vectors[0]).expect("unit"),
        y_min: DualPoint::new(&svd.right_vectors[0]).expect("unit"),
        degenerate: s[0] - s[1] < singular_gap * s[0],
    }
}

/// `log|⟨f, g v⟩|` for unit `v` and `f`; `-inf` when the pairing vanishes.
pub fn coefficient_log(g: &Matrix, v: &[f64], f: &[f64]) -> Result<f64> {
    if v.len() != g.dim() || f.len() != g.dim() {
        return Err(Error::input("dimension mismatch"));
    }
    let (nv, nf) = (norm(v), norm(f));
    if nv == 0.0 || nf == 0.0 {
        return Err(Error::input("v and f must be nonzero"));
    }
    let pairing = dot(f, &g.apply(v)) / (nv * nf);
    Ok(if pairing == 0.0 {
        f64::NEG_INFINITY
    } else {
        pairing.abs().ln()
    })
}

/// Worst observed slack of each identity and inequality over random
/// instances. Identities report `|lhs − rhs|`; inequalities report
/// `min(rhs − lhs)`, which must stay above `-Tolerances::inequality`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityAudit {
    pub instances: usize,
    pub dim: usize,
    pub cocycle_error: f64,
    pub decomposition_error: f64,
    /// `δ(x, y_g^m) ≤ ‖gv‖/‖g‖ ≤ δ(x, y_g^m) + ‖∧²g‖/‖g‖²`, both sides.
    pub sandwich_forward: f64,
    /// The same for `g*` against `x_g^M`.
    pub sandwich_adjoint: f64,
    /// `d(g·x, x_g^M)·δ(x, y_g^m) ≤ ‖∧²g‖/‖g‖²`.
    pub sandwich_distance: f64,
    /// `δ(a, y) ≤ d(a, b) + δ(b, y)`.
    pub triangle: f64,
    /// Instances whose decomposition check was skipped because `δ ≤ 1e-12`.
    pub decomposition_skipped: usize,
}

impl IdentityAudit {
    pub fn passes(&self, tol: &Tolerances) -> bool {
        self.cocycle_error <= tol.identity
            && self.decomposition_error <= tol.identity
            && self.sandwich_forward >= -tol.inequality
            && self.sandwich_adjoint >= -tol.inequality
            && self.sandwich_distance >= -tol.inequality
            && self.triangle >= -tol.inequality
    }
}

fn random_unit<R: rand::Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let n = norm(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn random_matrix<R: rand::Rng>(rng: &mut R, d: usize) -> Matrix {
    loop {
        let data: Vec<f64> = (0..d * d)
            .map(|_| rng.random::<f64>() * 6.0 - 3.0)
            .collect();
        let g = Matrix { dim: d, data };
        let sv = g.svd().singular_values;
        if sv[d - 1] > 1e-6 * sv[0] {
            return g;
        }
    }
}

/// Checks the cocycle law, the coefficient decomposition, the three
/// singular-value sandwich inequalities and the δ triangle bound on
/// `instances` random `(g₁, g₂, x, y)` with entries uniform on `[−3, 3]`.
pub fn audit_identities(instances: usize, dim: usize, seed: u64) -> Result<IdentityAudit> {
    if dim < 2 {
        return Err(Error::input("dimension must be at least 2"));
    }
    let mut a = IdentityAudit {
        instances,
        dim,
        cocycle_error: 0.0,
        decomposition_error: 0.0,
        sandwich_forward: f64::INFINITY,
        sandwich_adjoint: f64::INFINITY,
        sandwich_distance: f64::INFINITY,
        triangle: f64::INFINITY,
        decomposition_skipped: 0,
    };
    for i in 0..instances {
        let mut rng = crate::rng::trajectory_stream(seed, i as u64);
        let g1 = random_matrix(&mut rng, dim);
        let g2 = random_matrix(&mut rng, dim);
        let v = random_unit(&mut rng, dim);
        let f = random_unit(&mut rng, dim);
        let x = ProjectivePoint::new(&v)?;
        let y = DualPoint::new(&f)?;

        let lhs = cocycle(&g2.mul(&g1), &x);
        let rhs = cocycle(&g2, &act(&g1, &x)) + cocycle(&g1, &x);
        a.cocycle_error = a.cocycle_error.max((lhs - rhs).abs());

        let gx = act(&g1, &x);
        let d = delta(&gx, &y);
        if d > 1e-12 {
            let err = coefficient_log(&g1, &v, &f)? - cocycle(&g1, &x) - d.ln();
            a.decomposition_error = a.decomposition_error.max(err.abs());
        } else {
            a.decomposition_skipped += 1;
        }

        let svd = g1.svd();
        let s = &svd.singular_values;
        let ratio = s[0] * s[1] / (s[0] * s[0]);
        let x_max = ProjectivePoint::new(&svd.left_vectors[0])?;
        let y_min = DualPoint::new(&svd.right_vectors[0])?;
        let growth = norm(&g1.apply(&v)) / s[0];
        let d_min = delta(&x, &y_min);
        a.sandwich_forward = a
            .sandwich_forward
            .min(growth - d_min)
            .min(d_min + ratio - growth);
        let growth_adj = norm(&g1.apply_adjoint(&f)) / s[0];
        let d_max = delta(&x_max, &y);
        a.sandwich_adjoint = a
            .sandwich_adjoint
            .min(growth_adj - d_max)
            .min(d_max + ratio - growth_adj);
        a.sandwich_distance = a
            .sandwich_distance
            .min(ratio - angular_distance(&gx, &x_max) * d_min);

        let b = ProjectivePoint::new(&random_unit(&mut rng, dim))?;
        a.triangle = a
            .triangle
            .min(angular_distance(&x, &b) + delta(&b, &y) - delta(&x, &y));
    }
    Ok(a)
}
