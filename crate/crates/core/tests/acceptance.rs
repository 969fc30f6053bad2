//! Acceptance criteria, one pass/fail line each.
//!
//! `cargo test --release --test acceptance`; set `ACCEPTANCE_ONLY=6,7` to run a subset.
//! A criterion passes only if its check passes within its runtime budget.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use randprod::cli;
use randprod::ensemble::{builtin, MatrixEnsemble, BUILTINS};
use randprod::lab::{
    self, LltOptions, MdpOptions, Normalization, Provenance, Psi, RegularityExpectation,
    RegularityOptions, SampleSet, Windows,
};
use randprod::linalg::{audit_identities, DualPoint, ProjectivePoint, Tolerances};
use randprod::manifest::{RunManifest, MANIFEST_FILE};
use randprod::rng::derive_seed;
use randprod::spectral::{
    self, eigendata, fit_lambda, tilted_kernel, FitOptions, GridFunction, ProjectiveGrid,
    SpectralModel,
};
use randprod::stats::{LinearFit, Summary};
use randprod::walk::{self, Driver, WalkSample};

const SEED: u64 = 0x5EED_2026;

struct Check {
    pass: bool,
    detail: String,
}

type CheckResult = Result<Check, Box<dyn std::error::Error>>;

fn oracle() -> MatrixEnsemble {
    builtin("oracleA").unwrap()
}

fn planar(v: [f64; 2]) -> ProjectivePoint {
    ProjectivePoint::new(&v).unwrap()
}

fn dual(v: [f64; 2]) -> DualPoint {
    DualPoint::new(&v).unwrap()
}

/// Oracle A on the default s-range, M = 2048.
fn oracle_model() -> &'static SpectralModel {
    static MODEL: OnceLock<SpectralModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        fit_lambda(
            &oracle(),
            &FitOptions {
                grid_size: 2048,
                ..FitOptions::default()
            },
        )
        .expect("Oracle A fit")
    })
}

/// Oracle A on `|s| ≤ 6`, wide enough for saddle points at `t = n^{1/4}`, `n = 1024`.
fn oracle_wide_model() -> &'static SpectralModel {
    static MODEL: OnceLock<SpectralModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        fit_lambda(
            &oracle(),
            &FitOptions {
                s_max: Some(6.0),
                n_s: 25,
                grid_size: 2048,
                ..FitOptions::default()
            },
        )
        .expect("wide Oracle A fit")
    })
}

fn c1_identities() -> CheckResult {
    let tol = Tolerances::default();
    let mut pass = true;
    let mut detail = String::new();
    for d in [2, 3] {
        let a = audit_identities(100_000, d, derive_seed(SEED, &[1, d as u64]))?;
        pass &= a.passes(&tol);
        detail.push_str(&format!(
            "d={d}: cocycle {:.1e}, decomposition {:.1e}, sandwich min slack {:.1e}/{:.1e}/{:.1e}, triangle {:.1e}; ",
            a.cocycle_error,
            a.decomposition_error,
            a.sandwich_forward,
            a.sandwich_adjoint,
            a.sandwich_distance,
            a.triangle
        ));
    }
    Ok(Check { pass, detail })
}

fn c2_spectral_sanity() -> CheckResult {
    let grid = ProjectiveGrid::new(1024)?;
    let mut worst_kappa: f64 = 0.0;
    let mut worst_r: f64 = 0.0;
    let mut skipped = Vec::new();
    for name in BUILTINS {
        let e = builtin(name)?;
        if e.dim() != 2 {
            skipped.push(*name);
            continue;
        }
        let e = e.discretize(64, derive_seed(SEED, &[2]))?;
        let eig = eigendata(&e, 0.0, grid, None)?;
        worst_kappa = worst_kappa.max((eig.kappa - 1.0).abs());
        worst_r = worst_r.max(eig.r.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max));
    }
    let model = oracle_model();
    let fine = ProjectiveGrid::new(4096)?;
    let mut refinement: f64 = 0.0;
    for (i, &s) in model.s_grid.iter().enumerate() {
        let k4096 = eigendata(&oracle(), s, fine, None)?.kappa;
        refinement = refinement.max((model.kappa[i] - k4096).abs());
    }
    Ok(Check {
        pass: worst_kappa <= 1e-8 && worst_r <= 1e-8 && refinement <= 1e-5,
        detail: format!(
            "max|κ(0)−1| = {worst_kappa:.1e}, max|r₀−1| = {worst_r:.1e}, max|κ₂₀₄₈−κ₄₀₉₆| = {refinement:.1e} on |s| ≤ {:.3}; planar engine skips {skipped:?}",
            model.s_max
        ),
    })
}

fn c3_scalar_rotation() -> CheckResult {
    let e = builtin("scalar-rotation")?;
    let model = fit_lambda(
        &e,
        &FitOptions {
            s_max: Some(1.0),
            n_s: 17,
            grid_size: 512,
            ..FitOptions::default()
        },
    )?;
    let ln2 = 2f64.ln();
    let kappa_err = model
        .s_grid
        .iter()
        .zip(&model.kappa)
        .map(|(s, k)| (k - (s * ln2).cosh()).abs())
        .fold(0.0, f64::max);
    let cumulants = [0.0, ln2 * ln2, 0.0];
    let gamma_err = (0..3)
        .map(|k| (model.gammas[k] - cumulants[k]).abs())
        .fold(0.0, f64::max);
    let zeta0 = model.cramer_zeta(0.0)?.abs();
    Ok(Check {
        pass: kappa_err <= 1e-6 && gamma_err <= 1e-4 && zeta0 <= 1e-6,
        detail: format!("max|κ(s) − E c^s| = {kappa_err:.1e}, max|γ_k − κ_k(log c)| = {gamma_err:.1e} (k ≤ 3), |ζ(0)| = {zeta0:.1e}"),
    })
}

/// Exact law of `(σ_n, log|⟨f, G_n v⟩|, G_n·x)` over all `2^n` products.
struct Leaf {
    prob: f64,
    sigma: f64,
    coeff: f64,
    angle: f64,
}

fn enumerate(e: &MatrixEnsemble, x: &ProjectivePoint, f: &DualPoint, n: usize) -> Vec<Leaf> {
    let atoms = e.atoms().unwrap();
    let mut leaves = Vec::with_capacity(atoms.len().pow(n as u32));
    let mut stack = vec![(0usize, 1.0f64, 0.0f64, x.direction().to_vec())];
    while let Some((depth, prob, sigma, v)) = stack.pop() {
        if depth == n {
            let pairing = v[0] * f.functional()[0] + v[1] * f.functional()[1];
            let angle = randprod::linalg::projective_angle(&v);
            leaves.push(Leaf {
                prob,
                sigma,
                coeff: sigma + pairing.abs().ln(),
                angle,
            });
            continue;
        }
        for a in atoms {
            let w = a.matrix.apply(&v);
            let norm = w[0].hypot(w[1]);
            stack.push((
                depth + 1,
                prob * a.probability,
                sigma + norm.ln(),
                vec![w[0] / norm, w[1] / norm],
            ));
        }
    }
    leaves
}

fn exact_mean_var(leaves: &[Leaf], h: impl Fn(&Leaf) -> f64) -> (f64, f64) {
    let mean: f64 = leaves.iter().map(|l| l.prob * h(l)).sum();
    let var: f64 = leaves.iter().map(|l| l.prob * (h(l) - mean).powi(2)).sum();
    (mean, var)
}

fn z_score(mc: f64, se: f64, exact: f64) -> f64 {
    (mc - exact).abs() / se
}

fn c4_enumeration() -> CheckResult {
    let e = oracle();
    let model = oracle_model();
    let x = planar([1.0, 0.0]);
    let f = dual([1.0, 1.0]);
    let n = 20;
    let leaves = enumerate(&e, &x, &f, n);
    let m = 200_000;
    let samples = walk::run_walks(&e, &x, &f, n, m, derive_seed(SEED, &[4, 0]))?;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (label, pick, pick_leaf) in [
        (
            "σ_n",
            (|w: &WalkSample| w.sigma_n) as fn(&WalkSample) -> f64,
            (|l: &Leaf| l.sigma) as fn(&Leaf) -> f64,
        ),
        ("coeff", |w: &WalkSample| w.coeff_log_n, |l: &Leaf| l.coeff),
    ] {
        let values: Vec<f64> = samples.iter().map(pick).collect();
        let s = Summary::of(&values);
        let (mean, var) = exact_mean_var(&leaves, pick_leaf);
        let z_mean = z_score(s.mean, s.std_error(), mean);
        let z_var = z_score(s.variance, Summary::variance_std_error(&values), var);
        worst = worst.max(z_mean).max(z_var);
        parts.push(format!("{label}: mean z {z_mean:.2}, var z {z_var:.2}"));
    }

    // Importance-sampled tails of σ_n one standard deviation out, under Q_{±0.1}.
    let (mean, var) = exact_mean_var(&leaves, |l| l.sigma);
    for s in [0.1f64, -0.1] {
        let q = mean + s.signum() * var.sqrt();
        let event = |sigma: f64| if s > 0.0 { sigma >= q } else { sigma <= q };
        let exact: f64 = leaves
            .iter()
            .filter(|l| event(l.sigma))
            .map(|l| l.prob)
            .sum();
        let (kernel, _) = tilted_kernel(&e, s, model.grid())?;
        let tilted = walk::tilted_run_walks(
            &kernel,
            &x,
            &f,
            n,
            100_000,
            derive_seed(SEED, &[4, 1, s.to_bits()]),
        )?;
        let est = lab::tail_estimate(&tilted, |w| if event(w.sigma_n) { 1.0 } else { 0.0 });
        let z = z_score(est.value, est.se, exact);
        worst = worst.max(z);
        parts.push(format!(
            "IS s={s:+}: P̂ = {:.5} ± {:.5} vs {exact:.5} (z {z:.2})",
            est.value, est.se
        ));
    }

    // b_φ at n = 16 for φ = 1 + cos 2θ / 2.
    let phi = GridFunction::from_fn(model.grid(), |t| 1.0 + 0.5 * (2.0 * t).cos());
    let n_b = 16;
    let lambda1 = model.lambda1();
    let exact_b: f64 = enumerate(&e, &x, &f, n_b)
        .iter()
        .map(|l| l.prob * (l.sigma - n_b as f64 * lambda1) * phi.eval_angle(l.angle))
        .sum();
    let b = spectral::b_phi(
        Driver::Plain(&e),
        model,
        &phi,
        &x,
        &[n_b],
        m,
        derive_seed(SEED, &[4, 2]),
    )?;
    let z = z_score(b.value, b.se, exact_b);
    worst = worst.max(z);
    parts.push(format!(
        "b_φ(16) = {:.5} ± {:.5} vs {exact_b:.5} (z {z:.2})",
        b.value, b.se
    ));
    Ok(Check {
        pass: worst <= 3.0,
        detail: format!("{} products; {}", leaves.len(), parts.join("; ")),
    })
}

fn c5_lyapunov() -> CheckResult {
    let e = oracle();
    let model = oracle_model();
    let x = planar([1.0, 1.0]);
    let f = dual([1.0, 1.0]);
    let est = walk::estimate_lyapunov(&e, &x, 2000, 10_000, derive_seed(SEED, &[5, 0]))?;
    let gap1 = (est.lambda1 - model.gammas[0]).abs();

    // Var(σ_n)/n against 1/n; the intercept estimates γ₂.
    let n_grid = [250usize, 500, 1000, 2000];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ses = Vec::new();
    for &n in &n_grid {
        let samples = walk::run_walks(&e, &x, &f, n, 10_000, derive_seed(SEED, &[5, n as u64]))?;
        let values: Vec<f64> = samples.iter().map(|w| w.sigma_n).collect();
        let s = Summary::of(&values);
        xs.push(1.0 / n as f64);
        ys.push(s.variance / n as f64);
        ses.push(Summary::variance_std_error(&values) / n as f64);
    }
    let fit = LinearFit::fit(&xs, &ys).ok_or("degenerate variance fit")?;
    // Points are independent; propagate their se into the intercept.
    let mean_x = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let intercept_se = xs
        .iter()
        .zip(&ses)
        .map(|(x, se)| {
            let c = 1.0 / xs.len() as f64 - mean_x * (x - mean_x) / sxx;
            (c * se).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let z2 = (fit.intercept - model.gammas[1]).abs() / intercept_se;
    Ok(Check {
        pass: gap1 <= 1e-2 && z2 <= 3.0,
        detail: format!(
            "λ̂₁ = {:.6} ± {:.1e} vs γ₁ = {:.6}; Var(σ_n)/n → {:.4e} ± {:.1e} vs γ₂ = {:.4e} (z {z2:.2}); at n = 2000: {:.4e}",
            est.lambda1,
            est.lambda1_se,
            model.gammas[0],
            fit.intercept,
            intercept_se,
            model.gammas[1],
            ys[ys.len() - 1]
        ),
    })
}

fn sample_sets(
    e: &MatrixEnsemble,
    x: &ProjectivePoint,
    f: &DualPoint,
    n_grid: &[usize],
    m: usize,
    tag: u64,
) -> Vec<SampleSet> {
    n_grid
        .iter()
        .map(|&n| SampleSet {
            n,
            samples: walk::run_walks(e, x, f, n, m, derive_seed(SEED, &[tag, n as u64]))
                .expect("walks"),
        })
        .collect()
}

fn num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.2e}")
    } else {
        format!("{x:.4}")
    }
}

fn verdict_text(r: &lab::ExpansionReport) -> String {
    r.verdicts
        .iter()
        .map(|v| {
            format!(
                "{} = {} [{}] {}",
                v.criterion,
                num(v.value),
                v.window,
                if v.pass { "ok" } else { "FAIL" }
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn c6_clt() -> CheckResult {
    let e = oracle();
    let model = oracle_model();
    let x = planar([1.0, 0.0]);
    let f = dual([1.0, 1.0]);
    let n_grid = [100, 400, 1600];
    let sets = sample_sets(&e, &x, &f, &n_grid, 100_000, 6);
    let r = lab::clt_check(
        &sets,
        &Normalization::from_model(model),
        &Windows::default(),
        Provenance::new(SEED).with_model(model),
    )?;
    let d: Vec<String> = r
        .rows
        .iter()
        .map(|row| {
            format!(
                "√n·D_{} = {:.3}",
                row.n,
                row.empirical * (row.n as f64).sqrt()
            )
        })
        .collect();

    // The drift (b + d)/σ is large for this start, so D_100 sits in the
    // saturated part of a location shift: sup_t |Φ(t + δ) − Φ(t)| = 2Φ(|δ|/2) − 1
    // grows like |δ|ϕ(0) only for small δ, and √n·D_n climbs towards its limit.
    let phi = GridFunction::constant(model.grid(), 1.0);
    let b = spectral::b_phi(
        Driver::Plain(&e),
        model,
        &phi,
        &x,
        &[50, 100, 200],
        20_000,
        derive_seed(SEED, &[6, 0]),
    )?;
    let drift = (b.value + spectral::d_phi(&model.nu, &phi, &f)?.value) / model.sigma;
    let predicted: Vec<String> = n_grid
        .iter()
        .map(|&n| {
            let rn = (n as f64).sqrt();
            format!(
                "{:.3}",
                rn * (2.0 * randprod::stats::normal_cdf(drift.abs() / (2.0 * rn)) - 1.0)
            )
        })
        .collect();
    Ok(Check {
        pass: r.passed(),
        detail: format!(
            "{}; shifted-normal prediction {} for (b + d)/σ = {drift:.2}; {}",
            d.join(", "),
            predicted.join("/"),
            verdict_text(&r)
        ),
    })
}

fn c7_edgeworth() -> CheckResult {
    let e = oracle();
    let model = oracle_model();
    let x = planar([1.0, 0.0]);
    let f = dual([1.0, 1.0]);
    let phi = GridFunction::constant(model.grid(), 1.0);
    let b = spectral::b_phi(
        Driver::Plain(&e),
        model,
        &phi,
        &x,
        &[50, 100, 200, 400],
        100_000,
        derive_seed(SEED, &[7, 0]),
    )?;
    let d = spectral::d_phi(&model.nu, &phi, &f)?;
    let terms = lab::EdgeworthTerms {
        nu_phi: 1.0,
        gamma3: model.gammas[2],
        sigma: model.sigma,
        b_phi: Some(b.value),
        d_phi: Some(d.value),
    };
    let sets = sample_sets(&e, &x, &f, &[100, 400, 1600], 1_000_000, 7);
    let r = lab::edgeworth_check(
        &sets,
        &Normalization::from_model(model),
        None,
        &terms,
        400,
        &Windows::default(),
        Provenance::new(SEED).with_model(model),
    )?;
    Ok(Check {
        pass: r.passed(),
        detail: format!(
            "b = {:.4} ± {:.4}, d = {:.4}; max √n·residual {:.3}/{:.3}/{:.3} (plain {:.3} at n=400); {}",
            b.value,
            b.se,
            d.value,
            r.summary["max_scaled_residual_n100"],
            r.summary["max_scaled_residual_n400"],
            r.summary["max_scaled_residual_n1600"],
            r.summary["max_plain_scaled_residual_n400"],
            verdict_text(&r)
        ),
    })
}

fn c8_mdp() -> CheckResult {
    let e = oracle();
    let model = oracle_wide_model();
    let n = 1024;
    let x = planar([1.0, 1.0]);
    let f = dual([1.0, 1.0]);
    let mut pass = true;
    let mut parts = Vec::new();
    for lower in [false, true] {
        let opts = MdpOptions {
            n,
            t_grid: vec![(n as f64).powf(0.25)],
            m: 100_000,
            seed: derive_seed(SEED, &[8, lower as u64]),
            lower_tail: lower,
            phi: None,
        };
        let r = lab::mdp_expansion_check(
            &e,
            model,
            &x,
            &f,
            &opts,
            &Windows::default(),
            Provenance::new(SEED).with_model(model),
        )?;
        pass &= r.passed();
        let row = &r.rows[0];
        parts.push(format!(
            "{}: ratio {:.4} ± {:.4} (rel se {:.3}); {}",
            if lower { "lower" } else { "upper" },
            row.statistic,
            row.statistic_se,
            row.statistic_se / row.statistic,
            verdict_text(&r)
        ));
    }
    Ok(Check {
        pass,
        detail: parts.join(" | "),
    })
}

fn c9_llt() -> CheckResult {
    let e = oracle();
    let model = oracle_wide_model();
    let x = planar([1.0, 1.0]);
    let f = dual([1.0, 1.0]);
    let mut pass = true;
    let mut parts = Vec::new();
    for (t, m) in [(0.0, 1_000_000), (2.0, 100_000)] {
        let opts = LltOptions {
            n: 1024,
            t_grid: vec![t],
            psi: Psi::Indicator {
                a1: -0.25,
                a2: 0.25,
            },
            phi: None,
            m,
            seed: derive_seed(SEED, &[9, t.to_bits()]),
            tilt_threshold: 1.0,
        };
        let r = lab::llt_check(
            &e,
            model,
            &x,
            &f,
            &opts,
            &Windows::default(),
            Provenance::new(SEED).with_model(model),
        )?;
        pass &= r.passed();
        let row = &r.rows[0];
        parts.push(format!(
            "t={t}: ratio {:.4} ± {:.4}; {}",
            row.statistic,
            row.statistic_se,
            verdict_text(&r)
        ));
    }
    Ok(Check {
        pass,
        detail: parts.join(" | "),
    })
}

fn c10_regularity() -> CheckResult {
    let w = Windows::default();
    let mut pass = true;
    let mut parts = Vec::new();

    let rotation = builtin("rotation")?;
    let arcsine = |k: f64| 2.0 / PI * (-k).exp().asin();
    let r = lab::regularity_check(
        Driver::Plain(&rotation),
        &planar([1.0, 0.0]),
        &dual([1.0, 0.0]),
        &RegularityOptions {
            n_burn: 200,
            n_keep: 200,
            m: 5000,
            k_grid: (1..=8).map(f64::from).collect(),
            alpha: 0.5,
            eta: vec![],
            p: vec![],
        },
        RegularityExpectation::Slope { target: -1.0 },
        Some(&arcsine),
        derive_seed(SEED, &[10, 0]),
        &w,
        Provenance::new(SEED),
    )?;
    pass &= r.report.passed();
    parts.push(format!("rotation: {}", verdict_text(&r.report)));

    let oracle_e = oracle();
    let r = lab::regularity_check(
        Driver::Plain(&oracle_e),
        &planar([1.0, 1.0]),
        // y^⊥ is the attracting direction (φ, 1) of [[2, 1], [1, 1]], an endpoint of supp ν.
        &dual([1.0, -(1.0 + 5f64.sqrt()) / 2.0]),
        &RegularityOptions {
            n_burn: 100,
            n_keep: 200,
            m: 5000,
            k_grid: (1..=12).map(f64::from).collect(),
            alpha: 0.5,
            eta: vec![],
            p: vec![],
        },
        RegularityExpectation::Linear,
        None,
        derive_seed(SEED, &[10, 1]),
        &w,
        Provenance::new(SEED),
    )?;
    pass &= r.report.passed();
    parts.push(format!("oracleA: {}", verdict_text(&r.report)));

    let heavy = builtin("heavy-alpha")?;
    let r = lab::regularity_check(
        Driver::Plain(&heavy),
        &planar([1.0, 1.0]),
        &dual([0.0, 1.0]),
        &RegularityOptions {
            n_burn: 20,
            n_keep: 200,
            m: 5000,
            k_grid: (1..=30).map(f64::from).collect(),
            alpha: 0.5,
            eta: vec![],
            p: vec![],
        },
        RegularityExpectation::Subexponential,
        None,
        derive_seed(SEED, &[10, 2]),
        &w,
        Provenance::new(SEED),
    )?;
    pass &= r.report.passed();
    parts.push(format!(
        "heavy-alpha: AIC linear {:.1} vs k^α {:.1}; {}",
        r.aic_linear,
        r.aic_subexponential,
        verdict_text(&r.report)
    ));
    Ok(Check {
        pass,
        detail: parts.join(" | "),
    })
}

fn c11_perturbed() -> CheckResult {
    let e = oracle();
    let model = oracle_model();
    let rep = spectral::perturbed_eig_check(&e, model, 0.05, 0.1, ProjectiveGrid::new(2048)?)?;
    Ok(Check {
        pass: rep.discrepancy <= 1e-4,
        detail: format!(
            "grid λ = {:.8}{:+.8}i, fit = {:.8}{:+.8}i, discrepancy {:.2e}",
            rep.grid_re, rep.grid_im, rep.fit_re, rep.fit_im, rep.discrepancy
        ),
    })
}

fn c12_partition() -> CheckResult {
    let mut pass = true;
    let mut parts = Vec::new();
    for gamma in [0.5, 1.0] {
        let r = lab::partition_check(
            400,
            &dual([1.0, 2.0]),
            4.0,
            gamma,
            10_000,
            4000,
            derive_seed(SEED, &[12, gamma.to_bits()]),
            &Windows::default(),
            Provenance::new(SEED),
        )?;
        pass &= r.passed();
        parts.push(format!(
            "γ={gamma}: M_n = {}, {}",
            r.summary["M_n"],
            verdict_text(&r)
        ));
    }
    Ok(Check {
        pass,
        detail: parts.join(" | "),
    })
}

fn run_cli(dir: &Path, config: &Path, threads: usize, args: &[&str]) -> i32 {
    let mut v = vec![
        "randprod".to_string(),
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        dir.display().to_string(),
        "--threads".into(),
        threads.to_string(),
    ];
    v.extend(args.iter().map(|s| s.to_string()));
    cli::run(v)
}

fn c13_reproducibility() -> CheckResult {
    let root = tempfile::tempdir()?;
    let config = root.path().join("pipeline.toml");
    std::fs::write(
        &config,
        r#"
ensemble = "oracleA"
x0 = [1.0, 0.0]
f = [1.0, 1.0]
n_grid = [50, 100, 200]
m = 4000
seed = 7

[spectrum]
grid_size = 512

[simulate]
n = 100
m = 500

[edgeworth]
b_horizons = [20, 40]
b_m = 2000

[mdp]
n = 64
t_grid = [0.0, 1.0]
m = 2000

[llt]
n = 64
t_grid = [0.0]
m = 4000

[partition]
points = 2000
pairs = 500
"#,
    )?;
    let steps: [&[&str]; 7] = [
        &["spectrum"],
        &["simulate"],
        &["verify", "clt"],
        &["verify", "edgeworth"],
        &["verify", "mdp"],
        &["verify", "llt"],
        &["verify", "partition"],
    ];
    let mut manifests = Vec::new();
    for (label, threads, cfg) in [("t1", 1, config.clone()), ("t8", 8, config.clone())] {
        let dir = root.path().join(label);
        for step in steps {
            let code = run_cli(&dir, &cfg, threads, step);
            if code == cli::EXIT_CONFIG {
                return Err(format!("{step:?} exited with a configuration error").into());
            }
        }
        manifests.push(RunManifest::load(&dir.join(MANIFEST_FILE))?);
    }
    // Replay from the first run's manifest.
    let replay_dir = root.path().join("replay");
    let replay_cfg = root.path().join("t1").join(MANIFEST_FILE);
    for step in steps {
        run_cli(&replay_dir, &replay_cfg, 8, step);
    }
    manifests.push(RunManifest::load(&replay_dir.join(MANIFEST_FILE))?);

    let reference = &manifests[0];
    let identical = manifests.iter().all(|m| {
        m.artifacts == reference.artifacts && m.content_hash() == reference.content_hash()
    });
    Ok(Check {
        pass: identical && reference.artifacts.len() >= 10,
        detail: format!(
            "{} artifacts, manifest hash {} for threads 1, threads 8 and manifest replay: {}",
            reference.artifacts.len(),
            &reference.content_hash()[..16],
            if identical { "identical" } else { "DIFFERENT" }
        ),
    })
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    type Criterion = (u32, &'static str, Option<f64>, fn() -> CheckResult);
    let criteria: [Criterion; 13] = [
        (1, "algebraic identities", Some(30.0), c1_identities),
        (2, "spectral sanity", Some(120.0), c2_spectral_sanity),
        (3, "scalar-rotation oracle", Some(60.0), c3_scalar_rotation),
        (4, "enumeration oracle", Some(300.0), c4_enumeration),
        (5, "cross-method Lyapunov", Some(120.0), c5_lyapunov),
        (6, "CLT rate", Some(300.0), c6_clt),
        (7, "Edgeworth improvement", Some(600.0), c7_edgeworth),
        (8, "Cramér MDP expansion", Some(300.0), c8_mdp),
        (9, "local limit theorem", Some(600.0), c9_llt),
        (10, "regularity of ν", Some(300.0), c10_regularity),
        (
            11,
            "perturbed eigenvalue identity",
            Some(120.0),
            c11_perturbed,
        ),
        (12, "partition of unity", Some(60.0), c12_partition),
        (13, "reproducibility", None, c13_reproducibility),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, budget, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let result = check();
        let secs = started.elapsed().as_secs_f64();
        let within = budget.is_none_or(|b| secs <= b);
        let (pass, detail) = match result {
            Ok(c) => (c.pass && within, c.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        let budget_text = budget.map_or("-".to_string(), |b| format!("{b:.0}s"));
        println!(
            "criterion {id:>2} {:<4} {name:<30} {secs:>7.1}s (budget {budget_text}){}  {detail}",
            if pass { "PASS" } else { "FAIL" },
            if within { "" } else { " OVER BUDGET" },
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
