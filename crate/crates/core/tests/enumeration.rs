//! Walk statistics against exact laws obtained by enumerating all products.

use randprod::ensemble::{builtin, MatrixEnsemble};
use randprod::lab::{edgeworth_comparand, tail_estimate, EdgeworthTerms};
use randprod::linalg::{DualPoint, ProjectivePoint};
use randprod::spectral::{tilted_kernel, ProjectiveGrid};
use randprod::stats::{normal_cdf, Summary};
use randprod::walk;

/// `(probability, σ_n)` for every word of length `n`.
fn exact_law(e: &MatrixEnsemble, x: &ProjectivePoint, n: usize) -> Vec<(f64, f64)> {
    let atoms = e.atoms().unwrap();
    let mut level = vec![(1.0, 0.0, x.direction().to_vec())];
    for _ in 0..n {
        level = level
            .into_iter()
            .flat_map(|(p, s, v)| {
                atoms.iter().map(move |a| {
                    let w = a.matrix.apply(&v);
                    let norm = w.iter().map(|c| c * c).sum::<f64>().sqrt();
                    (
                        p * a.probability,
                        s + norm.ln(),
                        w.iter().map(|c| c / norm).collect(),
                    )
                })
            })
            .collect();
    }
    level.into_iter().map(|(p, s, _)| (p, s)).collect()
}

#[test]
fn plain_walk_moments_match_enumeration() {
    let e = builtin("oracleA").unwrap();
    let x = ProjectivePoint::new(&[1.0, 0.0]).unwrap();
    let f = DualPoint::new(&[1.0, 1.0]).unwrap();
    let law = exact_law(&e, &x, 12);
    let mean: f64 = law.iter().map(|(p, s)| p * s).sum();
    let var: f64 = law.iter().map(|(p, s)| p * (s - mean).powi(2)).sum();
    let samples = walk::run_walks(&e, &x, &f, 12, 100_000, 4).unwrap();
    let values: Vec<f64> = samples.iter().map(|w| w.sigma_n).collect();
    let s = Summary::of(&values);
    assert!(
        (s.mean - mean).abs() < 4.0 * s.std_error(),
        "{} vs {mean}",
        s.mean
    );
    assert!((s.variance - var).abs() < 4.0 * Summary::variance_std_error(&values));
}

#[test]
fn importance_sampling_at_zero_tilt_is_the_plain_walk() {
    let e = builtin("oracleA").unwrap();
    let x = ProjectivePoint::new(&[1.0, 1.0]).unwrap();
    let f = DualPoint::new(&[1.0, 1.0]).unwrap();
    let (kernel, eig) = tilted_kernel(&e, 0.0, ProjectiveGrid::new(256).unwrap()).unwrap();
    assert!((eig.kappa - 1.0).abs() < 1e-12);
    let tilted = walk::tilted_run_walks(&kernel, &x, &f, 30, 500, 8).unwrap();
    let plain = walk::run_walks(&e, &x, &f, 30, 500, 8).unwrap();
    assert_eq!(tilted, plain);
    assert!(tilted.iter().all(|w| w.importance_log_weight == 0.0));
}

#[test]
fn tilted_tail_matches_enumeration() {
    let e = builtin("oracleA").unwrap();
    let x = ProjectivePoint::new(&[1.0, 0.0]).unwrap();
    let f = DualPoint::new(&[1.0, 1.0]).unwrap();
    let n = 12;
    let law = exact_law(&e, &x, n);
    let mean: f64 = law.iter().map(|(p, s)| p * s).sum();
    let q = mean + 0.3;
    let exact: f64 = law.iter().filter(|(_, s)| *s >= q).map(|(p, _)| p).sum();
    let (kernel, _) = tilted_kernel(&e, 1.0, ProjectiveGrid::new(512).unwrap()).unwrap();
    let samples = walk::tilted_run_walks(&kernel, &x, &f, n, 100_000, 5).unwrap();
    let est = tail_estimate(&samples, |w| if w.sigma_n >= q { 1.0 } else { 0.0 });
    assert!(
        (est.value - exact).abs() < 4.0 * est.se,
        "{} ± {} vs {exact}",
        est.value,
        est.se
    );
}

#[test]
fn zero_corrections_reduce_to_the_normal_comparand() {
    let terms = EdgeworthTerms::plain(0.8, 0.04);
    for n in [10, 100, 1000] {
        for t in [-2.0, -0.5, 0.0, 1.3, 3.0] {
            let c = edgeworth_comparand(t, n, &terms).unwrap();
            assert!((c - 0.8 * normal_cdf(t)).abs() < 1e-15);
        }
    }
}
