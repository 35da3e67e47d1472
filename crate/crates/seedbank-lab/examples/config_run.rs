//! Config-driven run: parse a JSON configuration, execute it and write the
//! CSV, JSON record and manifest into a directory (first argument, default
//! `out/config-run`).

use std::path::{Path, PathBuf};

use seedbank_lab::config::parse_config;
use seedbank_lab::run::run;

const CONFIG: &str = r#"{
  "experiment": "coalescence-prob",
  "masterSeed": 17,
  "geometry": {"d": 1, "L": 32},
  "seedbank": {"single": {"K": 2.0, "e": 0.5}},
  "numeric": {"outputTimes": [10, 100, 1000]},
  "replicas": 4000
}"#;

fn main() -> seedbank_lab::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out/config-run"));
    let cfg = parse_config(CONFIG, Path::new("<inline>"))?;
    let manifest = run(&cfg, &out)?;
    for f in &manifest.outputs {
        println!("{} {} bytes sha256 {}", f.file, f.bytes, f.sha256);
    }
    print!(
        "{}",
        std::fs::read_to_string(out.join("coalescence-prob.csv")).unwrap_or_default()
    );
    Ok(())
}
