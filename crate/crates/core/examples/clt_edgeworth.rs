//! Kolmogorov distance to Φ and the first-order Edgeworth correction on Oracle A.
use randprod::ensemble::builtin;
use randprod::lab::{
    clt_check, edgeworth_check, EdgeworthTerms, Normalization, Provenance, SampleSet, Windows,
};
use randprod::linalg::{DualPoint, ProjectivePoint};
use randprod::spectral::{b_phi, d_phi, fit_lambda, FitOptions, GridFunction};
use randprod::walk::{run_walks, Driver};

fn main() -> randprod::Result<()> {
    let e = builtin("oracleA")?;
    let model = fit_lambda(&e, &FitOptions::default())?;
    let x = ProjectivePoint::new(&[1.0, 0.0])?;
    let f = DualPoint::new(&[1.0, 1.0])?;
    let sets = [100, 400]
        .into_iter()
        .map(|n| {
            Ok(SampleSet {
                n,
                samples: run_walks(&e, &x, &f, n, 50_000, n as u64)?,
            })
        })
        .collect::<randprod::Result<Vec<_>>>()?;
    let norm = Normalization::from_model(&model);
    let windows = Windows::default();

    let clt = clt_check(&sets, &norm, &windows, Provenance::new(1))?;
    for row in &clt.rows {
        println!("D_{} = {:.4}", row.n, row.empirical);
    }

    let one = GridFunction::constant(model.grid(), 1.0);
    let b = b_phi(
        Driver::Plain(&e),
        &model,
        &one,
        &x,
        &[50, 100, 200],
        20_000,
        5,
    )?;
    let d = d_phi(&model.nu, &one, &f)?;
    println!(
        "b(x0) = {:.4} ± {:.4}, d(y) = {:.4}",
        b.value, b.se, d.value
    );
    let terms = EdgeworthTerms {
        nu_phi: 1.0,
        gamma3: model.gammas[2],
        sigma: model.sigma,
        b_phi: Some(b.value),
        d_phi: Some(d.value),
    };
    let ew = edgeworth_check(
        &sets,
        &norm,
        None,
        &terms,
        400,
        &windows,
        Provenance::new(1),
    )?;
    for (k, v) in &ew.summary {
        println!("{k} = {v:.4}");
    }
    Ok(())
}
