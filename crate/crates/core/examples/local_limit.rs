//! Local limit ratios for a small window, plain at t = 0 and tilted at t = 2.
use randprod::ensemble::builtin;
use randprod::lab::{llt_check, LltOptions, Provenance, Psi, Windows};
use randprod::linalg::{DualPoint, ProjectivePoint};
use randprod::spectral::{fit_lambda, FitOptions};

fn main() -> randprod::Result<()> {
    let e = builtin("oracleA")?;
    let model = fit_lambda(
        &e,
        &FitOptions {
            s_max: Some(3.0),
            n_s: 17,
            ..FitOptions::default()
        },
    )?;
    let report = llt_check(
        &e,
        &model,
        &ProjectivePoint::new(&[1.0, 1.0])?,
        &DualPoint::new(&[1.0, 1.0])?,
        &LltOptions {
            n: 256,
            t_grid: vec![0.0, 2.0],
            psi: Psi::Indicator {
                a1: -0.25,
                a2: 0.25,
            },
            phi: None,
            m: 100_000,
            seed: 9,
            tilt_threshold: 1.0,
        },
        &Windows::default(),
        Provenance::new(9).with_model(&model),
    )?;
    for row in &report.rows {
        println!(
            "t = {:.1}: ratio {:.4} ± {:.4}",
            row.x, row.statistic, row.statistic_se
        );
    }
    Ok(())
}
