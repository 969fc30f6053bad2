//! Lyapunov exponents from walks, compared with the spectral first derivative.
use randprod::ensemble::builtin;
use randprod::linalg::ProjectivePoint;
use randprod::spectral::{fit_lambda, FitOptions};
use randprod::walk::estimate_lyapunov;

fn main() -> randprod::Result<()> {
    let e = builtin("oracleA")?;
    let x0 = ProjectivePoint::new(&[1.0, 1.0])?;
    let est = estimate_lyapunov(&e, &x0, 1000, 2000, 7)?;
    let model = fit_lambda(&e, &FitOptions::default())?;
    println!(
        "walks:    λ1 = {:.6} ± {:.1e}, λ2 = {:.6} ± {:.1e}",
        est.lambda1, est.lambda1_se, est.lambda2, est.lambda2_se
    );
    println!(
        "spectral: γ1 = {:.6}, γ2 = {:.3e}",
        model.gammas[0], model.gammas[1]
    );
    Ok(())
}
