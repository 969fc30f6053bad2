//! Checks the cocycle, coefficient and sandwich identities on random matrices.
use randprod::linalg::{self, audit_identities, DualPoint, Matrix, ProjectivePoint, Tolerances};

fn main() -> randprod::Result<()> {
    let g = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 1.0]])?;
    let x = ProjectivePoint::new(&[1.0, 0.0])?;
    let y = DualPoint::new(&[1.0, 1.0])?;
    println!("σ(g, x) = {:.6}", linalg::cocycle(&g, &x));
    println!("δ(g·x, y) = {:.6}", linalg::delta(&linalg::act(&g, &x), &y));
    println!(
        "log|⟨f, gv⟩| = {:.6}",
        linalg::coefficient_log(&g, x.direction(), y.functional())?
    );

    for dim in [2, 3] {
        let audit = audit_identities(10_000, dim, 1)?;
        println!(
            "d = {dim}: passes = {}  {audit:?}",
            audit.passes(&Tolerances::default())
        );
    }
    Ok(())
}
