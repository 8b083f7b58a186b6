use std::path::PathBuf;

use vmint_core::config::parse_config;
use vmint_core::harness::run_all;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!c.experiments.is_empty());
            seen += 1;
        }
    }
    assert!(seen >= 2);
}

#[test]
fn quick_config_passes_every_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = parse_config(&configs_dir().join("quick.toml")).unwrap();
    config.output_dir = dir.path().to_path_buf();
    config.workers = 1;
    let summary = run_all(&config).unwrap();
    assert_eq!(summary.outcomes.len(), config.experiments.len());
    let failures: Vec<String> = summary
        .outcomes
        .iter()
        .filter(|o| !o.verdict.is_pass())
        .map(|o| format!("{}: {}", o.name, o.verdict))
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
    for name in config.experiments.keys() {
        assert!(dir.path().join(format!("{name}.csv")).exists());
    }
}
