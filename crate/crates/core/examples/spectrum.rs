//! Fits Λ(s) = log κ(s) for Oracle A and prints its derivatives and the Cramér series.
use randprod::ensemble::builtin;
use randprod::spectral::{fit_lambda, FitOptions};

fn main() -> randprod::Result<()> {
    let e = builtin("oracleA")?;
    let model = fit_lambda(
        &e,
        &FitOptions {
            s_max: Some(2.0),
            n_s: 17,
            grid_size: 1024,
            ..FitOptions::default()
        },
    )?;
    println!("{:>8} {:>12} {:>10}", "s", "κ(s)", "gap");
    for ((s, k), g) in model
        .s_grid
        .iter()
        .zip(&model.kappa)
        .zip(&model.spectral_gap)
    {
        println!("{s:>8.4} {k:>12.6} {g:>10.4}");
    }
    println!("γ = {:?}", model.gammas);
    println!("σ = {:.6}", model.sigma);
    println!(
        "ζ(τ) ≈ {:.5} + {:.5}τ + {:.5}τ²",
        model.cramer[0], model.cramer[1], model.cramer[2]
    );
    for w in &model.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
