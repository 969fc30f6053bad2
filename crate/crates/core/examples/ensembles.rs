//! Lists the builtin ensembles with their moment and proximality diagnostics.
use randprod::ensemble::{builtin, moment_check, proximality_probe, BUILTINS};

fn main() -> randprod::Result<()> {
    for name in BUILTINS {
        let e = builtin(name)?;
        let moments = moment_check(&e, 0.5, 20_000, 1)?;
        let probe = proximality_probe(&e, 40, 400, 2)?;
        println!(
            "{name:<18} d = {}  E N^0.5 = {:>10.4}  tail {:?}  median log gap {:>8.3}  stagnating {}",
            e.dim(),
            moments.empirical_mean,
            moments.verdict,
            probe.median_log_gap,
            probe.stagnating
        );
    }
    Ok(())
}
