//! Partition of unity in −log δ(y, ·) and its Hölder bound.
use randprod::lab::{holder_bound_check, PartitionOfUnity};
use randprod::linalg::{DualPoint, ProjectivePoint};

fn main() -> randprod::Result<()> {
    let p = PartitionOfUnity::new(400, DualPoint::new(&[1.0, 2.0])?, 4.0)?;
    println!("a_n = {:.4}, M_n = {}", p.a_n, p.count);
    for theta in [0.0, 0.5, 1.0, 2.0] {
        let x = ProjectivePoint::from_angle(theta);
        let active: Vec<usize> = (0..=p.count).filter(|&k| p.chi(k, &x) > 0.0).collect();
        println!(
            "θ = {theta}: active k = {active:?}, sum = {:.15}",
            p.unity_sum(&x)
        );
    }
    let h = holder_bound_check(&p, 0.5, 1000, 1)?;
    println!("fitted constant {:.3}, pass = {}", h.fitted_c, h.pass);
    Ok(())
}
