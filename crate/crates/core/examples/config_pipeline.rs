//! Runs the command-line pipeline from a TOML config into a temporary directory.
use randprod::cli;

const CONFIG: &str = r#"
schema_version = 1
ensemble = "oracleA"
# From (1, 1) the distance to Φ is already below Monte Carlo resolution.
x0 = [1.0, 0.0]
n_grid = [100, 400]
m = 20000
seed = 42

[spectrum]
grid_size = 512
"#;

fn main() -> std::io::Result<()> {
    let dir = std::env::temp_dir().join("randprod-config-pipeline");
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("experiment.toml");
    std::fs::write(&config, CONFIG)?;
    let out = dir.join("out");
    for step in [&["spectrum"][..], &["verify", "clt"], &["report"]] {
        let mut args = vec![
            "randprod".to_string(),
            "--config".into(),
            config.display().to_string(),
        ];
        args.extend(["--out".to_string(), out.display().to_string()]);
        args.extend(step.iter().map(|s| s.to_string()));
        println!("$ randprod {}", step.join(" "));
        let code = cli::run(args);
        println!("exit code {code}\n");
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
