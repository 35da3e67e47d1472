//! Every shipped configuration loads, validates and names a known experiment.

use seedbank_lab::config::{load_config, Experiment};

#[test]
fn shipped_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let stem = path.file_stem().unwrap().to_str().unwrap().to_string();
        assert_eq!(cfg.experiment.id(), stem);
        seen.push(cfg.experiment);
    }
    for e in Experiment::ALL {
        assert!(seen.contains(&e), "no sample config for {}", e.id());
    }
}
