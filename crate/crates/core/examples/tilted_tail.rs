//! Importance-sampled upper tail of the matrix coefficient and the Cramér
//! moderate-deviation ratio.
use randprod::ensemble::builtin;
use randprod::lab::{mdp_expansion_check, tail_estimate, MdpOptions, Provenance, Windows};
use randprod::linalg::{DualPoint, ProjectivePoint};
use randprod::spectral::{fit_lambda, tilted_kernel, FitOptions};
use randprod::walk::{run_walks, tilted_run_walks};

fn main() -> randprod::Result<()> {
    let e = builtin("oracleA")?;
    let model = fit_lambda(
        &e,
        &FitOptions {
            s_max: Some(4.0),
            n_s: 21,
            ..FitOptions::default()
        },
    )?;
    let x = ProjectivePoint::new(&[1.0, 1.0])?;
    let f = DualPoint::new(&[1.0, 1.0])?;
    let n = 256;
    let threshold = n as f64 * model.gammas[0] + 3.0 * model.sigma * (n as f64).sqrt();

    let plain = run_walks(&e, &x, &f, n, 20_000, 1)?;
    let hits = plain.iter().filter(|w| w.coeff_log_n >= threshold).count();
    let (kernel, _) = tilted_kernel(&e, 3.0 / (model.sigma * (n as f64).sqrt()), model.grid())?;
    let tilted = tilted_run_walks(&kernel, &x, &f, n, 20_000, 2)?;
    let est = tail_estimate(
        &tilted,
        |w| if w.coeff_log_n >= threshold { 1.0 } else { 0.0 },
    );
    println!(
        "P(coeff ≥ nλ1 + 3σ√n): plain {:.2e}, tilted {:.3e} ± {:.1e}",
        hits as f64 / 20_000.0,
        est.value,
        est.se
    );

    let report = mdp_expansion_check(
        &e,
        &model,
        &x,
        &f,
        &MdpOptions {
            n,
            t_grid: vec![1.0, 2.0],
            m: 20_000,
            seed: 3,
            lower_tail: true,
            phi: None,
        },
        &Windows::default(),
        Provenance::new(3).with_model(&model),
    )?;
    for row in &report.rows {
        println!(
            "{:<6} t = {:.2}: ratio {:.4} ± {:.4}",
            row.label, row.x, row.statistic, row.statistic_se
        );
    }
    Ok(())
}
