//! Log-survival of −log δ(y, X) under the stationary measure for three ensembles.
use randprod::ensemble::builtin;
use randprod::lab::{
    regularity_check, Provenance, RegularityExpectation, RegularityOptions, Windows,
};
use randprod::linalg::{DualPoint, ProjectivePoint};
use randprod::walk::Driver;

fn main() -> randprod::Result<()> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let cases = [
        (
            "rotation",
            DualPoint::new(&[1.0, 0.0])?,
            RegularityExpectation::Slope { target: -1.0 },
        ),
        // y^⊥ at the attracting direction of [[2, 1], [1, 1]].
        (
            "oracleA",
            DualPoint::new(&[1.0, -golden])?,
            RegularityExpectation::Linear,
        ),
        (
            "heavy-alpha",
            DualPoint::new(&[0.0, 1.0])?,
            RegularityExpectation::Subexponential,
        ),
    ];
    for (name, y, expect) in cases {
        let e = builtin(name)?;
        let r = regularity_check(
            Driver::Plain(&e),
            &ProjectivePoint::new(&[1.0, 1.0])?,
            &y,
            &RegularityOptions {
                n_burn: 100,
                n_keep: 100,
                m: 2000,
                k_grid: (1..=12).map(f64::from).collect(),
                alpha: 0.5,
                eta: vec![0.25],
                p: vec![2.0],
            },
            expect,
            None,
            4,
            &Windows::default(),
            Provenance::new(4),
        )?;
        println!(
            "{name}: AIC linear {:.1}, AIC k^α {:.1}",
            r.aic_linear, r.aic_subexponential
        );
        for v in &r.report.verdicts {
            println!(
                "  {}: {:.4} [{}] {}",
                v.criterion,
                v.value,
                v.window,
                if v.pass { "ok" } else { "fail" }
            );
        }
    }
    Ok(())
}
