//! Command-line front end: `spectrum`, `simulate`, `verify <selector>`, `report`.
//!
//! Exit codes: 0 when every verdict passes, 1 when any fails (or a numerical
//! step errors), 2 for configuration and usage errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::ensemble::MatrixEnsemble;
use crate::error::{Error, Result};
use crate::lab::{self, ExpansionReport, Provenance, ReportSummary, SampleSet};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::rng::derive_seed;
use crate::spectral::{
    self, fit_lambda, tilted_kernel, GridFunction, ProjectiveGrid, SpectralModel,
};
use crate::walk::{self, Driver};

pub const SEED_ENV: &str = "RANDPROD_SEED";
pub const THREADS_ENV: &str = "RANDPROD_THREADS";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "randprod",
    version,
    about = "Random matrix products: spectra, walks and limit-theorem checks"
)]
pub struct Cli {
    /// Experiment config (TOML), or a manifest.json to replay.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64", env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N", env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit κ(s) and Λ, write the spectral model and print its summary.
    Spectrum,
    /// Run the walk engine and write samples.csv.
    Simulate,
    /// Run one limit-theorem check and write its report.
    Verify {
        #[arg(value_enum)]
        selector: Selector,
    },
    /// Pretty-print reports (default: every report in the output directory).
    Report { paths: Vec<PathBuf> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Selector {
    Clt,
    Be,
    Edgeworth,
    Mdp,
    MdpPrinciple,
    Llt,
    Regularity,
    Rates,
    Partition,
}

impl Selector {
    pub fn name(self) -> &'static str {
        match self {
            Selector::Clt => "clt",
            Selector::Be => "be",
            Selector::Edgeworth => "edgeworth",
            Selector::Mdp => "mdp",
            Selector::MdpPrinciple => "mdp-principle",
            Selector::Llt => "llt",
            Selector::Regularity => "regularity",
            Selector::Rates => "rates",
            Selector::Partition => "partition",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// Files written by a command, a human-readable summary, and the aggregate verdict.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub text: String,
    pub passed: bool,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_PASS
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.text);
            if outcome.passed {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_FAIL
            }
        }
    }
}

/// Resolves the config (file, then environment/flags) and validates it.
pub fn resolve_config(cli: &Cli) -> Result<(ExperimentConfig, MatrixEnsemble)> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    let e = cfg.validate()?;
    Ok((cfg, e))
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    if let Command::Report { paths } = &cli.command {
        let out = cli.out.clone().unwrap_or_else(|| match &cli.config {
            Some(p) => ExperimentConfig::load(p)
                .map(|c| c.out)
                .unwrap_or_else(|_| "out".into()),
            None => "out".into(),
        });
        return cmd_report(&out, paths);
    }
    let (cfg, e) = resolve_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|err| Error::Config(format!("cannot start {} threads: {err}", cfg.threads)))?;
    let started = Instant::now();
    let (name, outcome) = pool.install(|| -> Result<(String, Outcome)> {
        Ok(match &cli.command {
            Command::Spectrum => ("spectrum".into(), cmd_spectrum(&cfg, &e)?),
            Command::Simulate => ("simulate".into(), cmd_simulate(&cfg, &e)?),
            Command::Verify { selector } => (
                format!("verify {}", selector.name()),
                cmd_verify(&cfg, &e, *selector)?,
            ),
            Command::Report { .. } => unreachable!("handled above"),
        })
    })?;
    let mut manifest = RunManifest::open(&cfg)?;
    for file in &outcome.files {
        manifest.record(&cfg.out, file, &name)?;
    }
    manifest.runtime.threads = pool.current_num_threads();
    manifest
        .runtime
        .wall_clock_seconds
        .insert(name, started.elapsed().as_secs_f64());
    manifest.save(&cfg.out)?;
    Ok(outcome)
}

fn provenance(
    cfg: &ExperimentConfig,
    e: &MatrixEnsemble,
    model: Option<&SpectralModel>,
) -> Provenance {
    let p = Provenance::new(cfg.seed);
    match model {
        Some(m) => p.with_model(m),
        None => p.with_ensemble(e.content_hash()),
    }
}

/// Loads the spectral model and checks it belongs to this ensemble.
pub fn load_model(cfg: &ExperimentConfig, e: &MatrixEnsemble) -> Result<SpectralModel> {
    let path = cfg.model_path();
    if !path.exists() {
        return Err(Error::Missing(format!(
            "spectral model {} not found; run `randprod spectrum` with the same config first",
            path.display()
        )));
    }
    let model = SpectralModel::load(&path)?;
    if model.ensemble_hash != e.content_hash() {
        return Err(Error::Config(format!(
            "model {} was fitted for ensemble `{}`, not `{}`; rerun `randprod spectrum`",
            path.display(),
            model.ensemble_label,
            e.label()
        )));
    }
    Ok(model)
}

pub fn cmd_spectrum(cfg: &ExperimentConfig, e: &MatrixEnsemble) -> Result<Outcome> {
    let model = fit_lambda(e, &cfg.spectrum.fit_options())?;
    let path = cfg.model_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
    }
    model.save(&path)?;
    let table_path = cfg.out.join("spectrum.csv");
    let mut table = String::from("s,kappa,lambda,gap_ratio,residual\n");
    for (i, s) in model.s_grid.iter().enumerate() {
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            s, model.kappa[i], model.lambda[i], model.spectral_gap[i], model.eigen_residual[i]
        );
    }
    std::fs::create_dir_all(&cfg.out).map_err(|err| Error::io(&cfg.out, err))?;
    std::fs::write(&table_path, &table).map_err(|err| Error::io(&table_path, err))?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "ensemble {} ({}), grid M = {}",
        e.label(),
        &model.ensemble_hash[..12],
        model.grid_size
    );
    let _ = writeln!(
        text,
        "{:>10} {:>16} {:>14} {:>8}",
        "s", "kappa(s)", "Lambda(s)", "gap"
    );
    for (i, s) in model.s_grid.iter().enumerate() {
        let _ = writeln!(
            text,
            "{s:>10.5} {:>16.10} {:>14.10} {:>8.4}",
            model.kappa[i], model.lambda[i], model.spectral_gap[i]
        );
    }
    for (k, g) in model.gammas.iter().enumerate() {
        let _ = writeln!(text, "gamma_{} = {g:.10e}", k + 1);
    }
    let _ = writeln!(text, "sigma = {:.10}", model.sigma);
    let _ = writeln!(
        text,
        "zeta coefficients c0 = {:.6e}, c1 = {:.6e}, c2 = {:.6e}",
        model.cramer[0], model.cramer[1], model.cramer[2]
    );
    let _ = writeln!(text, "zeta(0) = {:.3e}", model.cramer_zeta(0.0)?);
    let _ = writeln!(
        text,
        "validated s-range [-{0:.4}, {0:.4}], worst gap ratio {1:.4}, r_0 deviation {2:.2e}",
        model.s_max,
        model.spectral_gap.iter().cloned().fold(0.0, f64::max),
        model.r0_deviation
    );
    for w in &model.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    let _ = writeln!(text, "wrote {}", path.display());
    Ok(Outcome {
        files: vec![path, table_path],
        text,
        passed: true,
    })
}

pub fn cmd_simulate(cfg: &ExperimentConfig, e: &MatrixEnsemble) -> Result<Outcome> {
    let x0 = cfg.start()?;
    let f = cfg.functional()?;
    let n = cfg.simulate.n;
    let m = cfg.simulate.m.unwrap_or(cfg.m);
    let seed = derive_seed(cfg.seed, &[0]);
    let samples = if cfg.simulate.tilt_s != 0.0 {
        let grid = ProjectiveGrid::new(cfg.spectrum.grid_size)?;
        let (kernel, _) = tilted_kernel(e, cfg.simulate.tilt_s, grid)?;
        walk::tilted_run_walks(&kernel, &x0, &f, n, m, seed)?
    } else if cfg.simulate.ext2 {
        walk::run_walks_with_ext2(e, &x0, &f, n, m, seed)?
    } else {
        walk::run_walks(e, &x0, &f, n, m, seed)?
    };
    std::fs::create_dir_all(&cfg.out).map_err(|err| Error::io(&cfg.out, err))?;
    let path = cfg.out.join("samples.csv");
    let mut buf = Vec::new();
    walk::write_samples_csv(&samples, &mut buf).map_err(|err| Error::io(&path, err))?;
    std::fs::write(&path, buf).map_err(|err| Error::io(&path, err))?;
    Ok(Outcome {
        text: format!(
            "wrote {} trajectories of length {n} to {}\n",
            samples.len(),
            path.display()
        ),
        files: vec![path],
        passed: true,
    })
}

fn sample_sets(cfg: &ExperimentConfig, e: &MatrixEnsemble, tag: u64) -> Result<Vec<SampleSet>> {
    let x0 = cfg.start()?;
    let f = cfg.functional()?;
    cfg.n_grid
        .iter()
        .map(|&n| {
            let samples = walk::run_walks(
                e,
                &x0,
                &f,
                n,
                cfg.m,
                derive_seed(cfg.seed, &[tag, n as u64]),
            )?;
            Ok(SampleSet { n, samples })
        })
        .collect()
}

fn phi_or_one(spec: &Option<crate::config::PhiSpec>, grid: ProjectiveGrid) -> Result<GridFunction> {
    match spec {
        Some(s) => s.to_grid(grid),
        None => Ok(GridFunction::constant(grid, 1.0)),
    }
}

/// Runs one check and writes `<selector>.csv`/`.json` (and `mdp-lower.*`).
pub fn verify_reports(
    cfg: &ExperimentConfig,
    e: &MatrixEnsemble,
    selector: Selector,
) -> Result<Vec<(String, ExpansionReport)>> {
    let seed = derive_seed(cfg.seed, &[selector.tag()]);
    let x0 = cfg.start()?;
    let f = cfg.functional()?;
    let w = &cfg.windows;
    let name = selector.name().to_string();
    Ok(match selector {
        Selector::Clt => {
            let model = load_model(cfg, e)?;
            let sets = sample_sets(cfg, e, selector.tag())?;
            let norm = lab::Normalization::from_model(&model);
            vec![(
                name,
                lab::clt_check(&sets, &norm, w, provenance(cfg, e, Some(&model)))?,
            )]
        }
        Selector::Be => {
            let sets = sample_sets(cfg, e, selector.tag())?;
            let model = if e.is_finite() {
                Some(load_model(cfg, e)?)
            } else {
                None
            };
            let (norm, grid) = match &model {
                Some(m) => (lab::Normalization::from_model(m), m.grid()),
                None => {
                    let largest = sets.last().expect("n_grid is non-empty");
                    (
                        lab::Normalization::estimate(largest)?,
                        ProjectiveGrid::new(cfg.spectrum.grid_size)?,
                    )
                }
            };
            let phi = cfg.be.phi.as_ref().map(|p| p.to_grid(grid)).transpose()?;
            let nu_phi =
                match (&phi, &model) {
                    (Some(p), Some(m)) => lab::nu_of(m, p),
                    (Some(_), None) => return Err(Error::Unsupported(
                        "a weighted Berry–Esseen check needs ν(φ), which needs a finite ensemble"
                            .into(),
                    )),
                    (None, _) => 1.0,
                };
            let mut report = lab::berry_esseen_check(
                &sets,
                &norm,
                phi.as_ref(),
                nu_phi,
                cfg.be.envelope,
                w,
                provenance(cfg, e, model.as_ref()),
            )?;
            if model.is_none() {
                report.warnings.push(format!(
                    "λ₁ and σ estimated by plug-in at n = {}",
                    sets.last().map_or(0, |s| s.n)
                ));
            }
            vec![(name, report)]
        }
        Selector::Edgeworth => {
            let model = load_model(cfg, e)?;
            let sets = sample_sets(cfg, e, selector.tag())?;
            let norm = lab::Normalization::from_model(&model);
            let phi = phi_or_one(&cfg.edgeworth.phi, model.grid())?;
            let b = spectral::b_phi(
                Driver::Plain(e),
                &model,
                &phi,
                &x0,
                &cfg.edgeworth.b_horizons,
                cfg.edgeworth.b_m,
                derive_seed(seed, &[1]),
            )?;
            let d = spectral::d_phi(&model.nu, &phi, &f)?;
            let terms = lab::EdgeworthTerms {
                nu_phi: lab::nu_of(&model, &phi),
                gamma3: model.gammas[2],
                sigma: model.sigma,
                b_phi: Some(b.value),
                d_phi: Some(d.value),
            };
            let improvement_n = cfg
                .edgeworth
                .improvement_n
                .unwrap_or(cfg.n_grid[cfg.n_grid.len() / 2]);
            let phi_arg = if cfg.edgeworth.phi.is_some() {
                Some(&phi)
            } else {
                None
            };
            let mut report = lab::edgeworth_check(
                &sets,
                &norm,
                phi_arg,
                &terms,
                improvement_n,
                w,
                provenance(cfg, e, Some(&model)),
            )?;
            report.summary.insert("b_phi".into(), b.value);
            report.summary.insert("b_phi_se".into(), b.se);
            report.summary.insert("d_phi".into(), d.value);
            report.warnings.extend(b.warning);
            report.warnings.extend(d.warning);
            vec![(name, report)]
        }
        Selector::Mdp => {
            let model = load_model(cfg, e)?;
            let phi = cfg
                .mdp
                .phi
                .as_ref()
                .map(|p| p.to_grid(model.grid()))
                .transpose()?;
            let mut opts = lab::MdpOptions {
                n: cfg.mdp.n,
                t_grid: cfg.mdp.resolved_t_grid(),
                m: cfg.mdp.m.unwrap_or(cfg.m),
                seed,
                lower_tail: false,
                phi,
            };
            let mut out = vec![(
                name,
                lab::mdp_expansion_check(
                    e,
                    &model,
                    &x0,
                    &f,
                    &opts,
                    w,
                    provenance(cfg, e, Some(&model)),
                )?,
            )];
            if cfg.mdp.lower_tail {
                opts.lower_tail = true;
                opts.seed = derive_seed(seed, &[2]);
                out.push((
                    "mdp-lower".into(),
                    lab::mdp_expansion_check(
                        e,
                        &model,
                        &x0,
                        &f,
                        &opts,
                        w,
                        provenance(cfg, e, Some(&model)),
                    )?,
                ));
            }
            out
        }
        Selector::MdpPrinciple => {
            let model = load_model(cfg, e)?;
            let c = &cfg.mdp_principle;
            vec![(
                name,
                lab::mdp_principle_check(
                    e,
                    &model,
                    &x0,
                    &f,
                    &c.n_grid,
                    c.t.unwrap_or(model.sigma),
                    c.b_exponent,
                    c.m.unwrap_or(cfg.m),
                    seed,
                    w,
                    provenance(cfg, e, Some(&model)),
                )?,
            )]
        }
        Selector::Llt => {
            let model = load_model(cfg, e)?;
            let c = &cfg.llt;
            let opts = lab::LltOptions {
                n: c.n,
                t_grid: c.t_grid.clone(),
                psi: c.psi(),
                phi: c
                    .phi
                    .as_ref()
                    .map(|p| p.to_grid(model.grid()))
                    .transpose()?,
                m: c.m.unwrap_or(cfg.m),
                seed,
                tilt_threshold: c.tilt_threshold,
            };
            vec![(
                name,
                lab::llt_check(
                    e,
                    &model,
                    &x0,
                    &f,
                    &opts,
                    w,
                    provenance(cfg, e, Some(&model)),
                )?,
            )]
        }
        Selector::Regularity => {
            let c = &cfg.regularity;
            let opts = lab::RegularityOptions {
                n_burn: c
                    .n_burn
                    .unwrap_or_else(|| walk::default_burn_in(e.dim(), cfg.spectrum.grid_size)),
                n_keep: c.n_keep,
                m: c.m,
                k_grid: c.k_grid.clone(),
                alpha: c.alpha,
                eta: c.eta.clone(),
                p: c.p.clone(),
            };
            let r = lab::regularity_check(
                Driver::Plain(e),
                &x0,
                &cfg.regularity_y()?,
                &opts,
                c.expect,
                None,
                seed,
                w,
                provenance(cfg, e, None),
            )?;
            vec![(name, r.report)]
        }
        Selector::Rates => {
            let c = &cfg.rates;
            let opts = lab::RatesOptions {
                n_grid: c.n_grid.clone(),
                m: c.m,
                seed,
                epsilon: c.epsilon,
                lyapunov_n: c.lyapunov_n,
                lyapunov_m: c.lyapunov_m,
            };
            vec![(
                name,
                lab::rates_check(e, &x0, &cfg.rates_y()?, &opts, w, provenance(cfg, e, None))?,
            )]
        }
        Selector::Partition => {
            let c = &cfg.partition;
            vec![(
                name,
                lab::partition_check(
                    c.n,
                    &cfg.partition_y()?,
                    c.big_a,
                    c.gamma,
                    c.points,
                    c.pairs,
                    seed,
                    w,
                    provenance(cfg, e, None),
                )?,
            )]
        }
    })
}

pub fn cmd_verify(
    cfg: &ExperimentConfig,
    e: &MatrixEnsemble,
    selector: Selector,
) -> Result<Outcome> {
    let reports = verify_reports(cfg, e, selector)?;
    let mut outcome = Outcome {
        passed: true,
        ..Outcome::default()
    };
    for (stem, report) in &reports {
        outcome.files.extend(report.write_files(&cfg.out, stem)?);
        outcome.passed &= report.passed();
        outcome
            .text
            .push_str(&render_summary(&report.summary_record()));
    }
    Ok(outcome)
}

pub fn render_summary(s: &ReportSummary) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "[{}] {} (n = {:?}, m = {}, seed = {})",
        if s.pass { "PASS" } else { "FAIL" },
        s.check,
        s.n_values,
        s.m,
        s.provenance.seed
    );
    for v in &s.verdicts {
        let _ = writeln!(
            text,
            "  {} {:<44} {:>14.6e}  window {}",
            if v.pass { "ok  " } else { "FAIL" },
            v.criterion,
            v.value,
            v.window
        );
    }
    for (k, v) in &s.summary {
        let _ = writeln!(text, "  {k} = {v:.6e}");
    }
    for w in &s.warnings {
        let _ = writeln!(text, "  warning: {w}");
    }
    text
}

fn is_report(path: &Path) -> bool {
    path.extension().is_some_and(|x| x == "json")
        && !path
            .file_name()
            .is_some_and(|n| n == MANIFEST_FILE || n == "model.json")
}

pub fn cmd_report(out: &Path, paths: &[PathBuf]) -> Result<Outcome> {
    let mut files: Vec<PathBuf> = paths.to_vec();
    if files.is_empty() {
        let entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
        files = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_report(p))
            .collect();
        files.sort();
    }
    let mut outcome = Outcome {
        passed: true,
        ..Outcome::default()
    };
    let mut count = 0;
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let summary: ReportSummary = match serde_json::from_str(&text) {
            Ok(s) => s,
            Err(e) if paths.is_empty() => {
                let _ = writeln!(outcome.text, "skipping {}: {e}", path.display());
                continue;
            }
            Err(e) => {
                return Err(Error::Parse {
                    what: path.display().to_string(),
                    message: e.to_string(),
                })
            }
        };
        count += 1;
        outcome.passed &= summary.pass;
        outcome.text.push_str(&render_summary(&summary));
    }
    if count == 0 {
        return Err(Error::Missing(format!(
            "no reports in {}; run `randprod verify <selector>` first",
            out.display()
        )));
    }
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let manifest = RunManifest::load(&manifest_path)?;
        let changed = manifest.verify_artifacts(out);
        let _ = writeln!(
            outcome.text,
            "manifest: config {} code {} artifacts {} ({} changed since recorded)",
            &manifest.config_hash[..12],
            manifest.code_version,
            manifest.artifacts.len(),
            changed.len()
        );
        for c in changed {
            let _ = writeln!(outcome.text, "  changed: {c}");
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(dir: &Path, rest: &[&str]) -> Vec<String> {
        let mut v = vec![
            "randprod".to_string(),
            "--out".into(),
            dir.display().to_string(),
        ];
        v.extend(rest.iter().map(|s| s.to_string()));
        v
    }

    #[test]
    fn unknown_selector_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run(args(dir.path(), &["verify", "bogus"])), EXIT_CONFIG);
    }

    #[test]
    fn missing_model_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run(args(dir.path(), &["verify", "clt"])), EXIT_CONFIG);
    }

    #[test]
    fn dimension_mismatch_exits_with_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "x0 = [1.0, 0.0, 0.0]\n").unwrap();
        let mut a = args(dir.path(), &["spectrum", "--config"]);
        a.push(cfg.display().to_string());
        assert_eq!(run(a), EXIT_CONFIG);
    }

    #[test]
    fn partition_passes_and_report_reads_it() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[partition]\npoints = 2000\npairs = 500\n").unwrap();
        let mut a = args(dir.path(), &["verify", "partition", "--config"]);
        a.push(cfg.display().to_string());
        assert_eq!(run(a), EXIT_PASS);
        assert!(dir.path().join("partition.csv").exists());
        let m = RunManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(m.artifacts.contains_key("partition.json"));
        assert_eq!(run(args(dir.path(), &["report"])), EXIT_PASS);
    }

    #[test]
    fn degenerate_spectrum_fails_with_message() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "ensemble = \"diag31\"\n[spectrum]\ngrid_size = 128\n").unwrap();
        let mut a = args(dir.path(), &["spectrum", "--config"]);
        a.push(cfg.display().to_string());
        assert_eq!(run(a), EXIT_FAIL);
    }
}
