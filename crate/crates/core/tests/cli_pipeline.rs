use std::path::Path;

use randprod::cli::{self, EXIT_CONFIG};
use randprod::manifest::{RunManifest, MANIFEST_FILE};

const CONFIG: &str = r#"
schema_version = 1
ensemble = "oracleA"
n_grid = [40, 80]
m = 1000
seed = 3

[spectrum]
grid_size = 256

[simulate]
n = 50
m = 200

[partition]
n = 50
points = 500
pairs = 200
"#;

fn run(dir: &Path, config: &Path, threads: &str, args: &[&str]) -> i32 {
    let mut v: Vec<String> = ["randprod", "--config"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.push(config.display().to_string());
    v.extend([
        "--out".to_string(),
        dir.display().to_string(),
        "--threads".into(),
        threads.into(),
    ]);
    v.extend(args.iter().map(|s| s.to_string()));
    cli::run(v)
}

#[test]
fn runs_are_identical_across_thread_counts_and_replays() {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("c.toml");
    std::fs::write(&config, CONFIG).unwrap();
    let steps: [&[&str]; 4] = [
        &["spectrum"],
        &["simulate"],
        &["verify", "clt"],
        &["verify", "partition"],
    ];
    let mut hashes = Vec::new();
    for (dir, cfg, threads) in [
        (root.path().join("a"), config.clone(), "1"),
        (root.path().join("b"), config.clone(), "4"),
        (
            root.path().join("c"),
            root.path().join("a").join(MANIFEST_FILE),
            "2",
        ),
    ] {
        for step in steps {
            assert_ne!(run(&dir, &cfg, threads, step), EXIT_CONFIG, "{step:?}");
        }
        let m = RunManifest::load(&dir.join(MANIFEST_FILE)).unwrap();
        assert!(m.verify_artifacts(&dir).is_empty());
        hashes.push(m.content_hash());
    }
    assert_eq!(hashes[0], hashes[1]);
    assert_eq!(hashes[0], hashes[2]);
    assert_eq!(run(&root.path().join("a"), &config, "1", &["report"]), 0);
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("c.toml");
    std::fs::write(&config, CONFIG).unwrap();
    let out = root.path().join("o");
    // Verification before the spectrum exists is a missing prerequisite.
    assert_eq!(run(&out, &config, "1", &["verify", "clt"]), EXIT_CONFIG);
    assert_eq!(
        run(&out, &config, "1", &["verify", "nonsense"]),
        EXIT_CONFIG
    );
    std::fs::write(&config, "unknown_key = 1\n").unwrap();
    assert_eq!(run(&out, &config, "1", &["spectrum"]), EXIT_CONFIG);
}
