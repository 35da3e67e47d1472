//! Thin command-line front end: `seedbank-lab <subcommand> --config <path> [--seed N] [--out DIR]`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seedbank_lab::config::{load_config, Experiment, Geometry, KernelSpec, RunConfig};
use seedbank_lab::dichotomy::SlowlyVarying;
use seedbank_lab::run::{classify_record, error_record, run};
use seedbank_lab::seedbank::SeedBankSpec;
use seedbank_lab::system::Model;
use seedbank_lab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "seedbank-lab",
    version,
    about = "Spatial seed-bank experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `masterSeed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output`, then `out/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<u8>,
    /// `simple_walk[:RATE]`, `drifted_2d:ETA`, `power_law_1d:DELTA`, `none`, or JSON.
    #[arg(long)]
    kernel: Option<String>,
    /// `single:K,e`, `asymptotic:ALPHA,BETA[,TRUNCATION]` or a JSON spec.
    #[arg(long)]
    seedbank: Option<String>,
    /// Displacement kernel for model 3, same syntax as `--kernel`.
    #[arg(long)]
    displacement: Option<String>,
    /// `const:C`, `log:P` or a JSON factor.
    #[arg(long)]
    slowvar: Option<String>,
    /// Integration horizon.
    #[arg(long)]
    tmax: Option<f64>,
    /// Lattice dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Torus side; defaults by dimension.
    #[arg(long)]
    side: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    SimulateForward(Common),
    SimulateDual(Common),
    CheckDuality(Common),
    Classify(ClassifyArgs),
    TauTail(Common),
    CoalescenceProb(Common),
    IbmFw(Common),
    IbmMoran(Common),
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    let (experiment, common) = match &cmd {
        Command::SimulateForward(c) => (Experiment::SimulateForward, c),
        Command::SimulateDual(c) => (Experiment::SimulateDual, c),
        Command::CheckDuality(c) => (Experiment::CheckDuality, c),
        Command::Classify(a) => (Experiment::Classify, &a.common),
        Command::TauTail(c) => (Experiment::TauTail, c),
        Command::CoalescenceProb(c) => (Experiment::CoalescenceProb, c),
        Command::IbmFw(c) => (Experiment::IbmFw, c),
        Command::IbmMoran(c) => (Experiment::IbmMoran, c),
    };
    let mut cfg = match (&common.config, &cmd) {
        (Some(path), _) => load_config(path)?,
        (None, Command::Classify(_)) => RunConfig::minimal(experiment, common.seed.unwrap_or(0)),
        (None, _) => return Err(Error::invalid("--config", "required for this subcommand")),
    };
    if cfg.experiment != experiment {
        return Err(Error::invalid(
            "experiment",
            format!(
                "config is for `{}`, not `{}`",
                cfg.experiment.id(),
                experiment.id()
            ),
        ));
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Command::Classify(a) = &cmd {
        apply_classify_flags(&mut cfg, a)?;
        cfg.resolve()?;
        let record = classify_record(&cfg)?;
        println!(
            "{}",
            serde_json::to_string_pretty(&record).expect("record serializes")
        );
        if common.out.is_none() && cfg.output.is_none() {
            return Ok(());
        }
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(experiment.id()));
    let manifest = run(&cfg, &out)?;
    for o in &manifest.outputs {
        eprintln!(
            "wrote {} ({} bytes, sha256 {})",
            out.join(&o.file).display(),
            o.bytes,
            o.sha256
        );
    }
    Ok(())
}

fn apply_classify_flags(cfg: &mut RunConfig, a: &ClassifyArgs) -> Result<()> {
    if let Some(m) = a.model {
        cfg.model = Model::try_from(m).map_err(|e| Error::invalid("model", e))?;
    }
    if let Some(k) = &a.kernel {
        cfg.kernel = KernelSpec::parse_short(k)?;
    }
    if let Some(k) = &a.displacement {
        cfg.displacement = vec![KernelSpec::parse_short(k)?];
    }
    if let Some(s) = &a.seedbank {
        cfg.seedbank = Some(parse_seedbank(s)?);
    }
    if let Some(s) = &a.slowvar {
        cfg.classify.slow = Some(parse_slowvar(s)?);
    }
    if let Some(t) = a.tmax {
        cfg.numeric.t_max = Some(t);
    }
    if a.dim.is_some() || a.side.is_some() {
        let d = a.dim.or(cfg.geometry.map(|g| g.d)).unwrap_or(1);
        let l = a.side.unwrap_or(Geometry::classify_default(d).l);
        cfg.geometry = Some(Geometry { d, l });
    }
    Ok(())
}

fn numbers(field: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(field, format!("`{p}` is not a number")))
        })
        .collect()
}

fn parse_seedbank(s: &str) -> Result<SeedBankSpec> {
    if s.trim_start().starts_with('{') {
        return serde_json::from_str(s).map_err(|e| Error::invalid("seedbank", e.to_string()));
    }
    let (name, args) = s
        .split_once(':')
        .ok_or_else(|| Error::invalid("seedbank", format!("expected NAME:ARGS, got `{s}`")))?;
    let v = numbers("seedbank", args)?;
    match (name, v.as_slice()) {
        ("single", &[k, e]) => Ok(SeedBankSpec::Single { k, e }),
        ("asymptotic", &[alpha, beta]) | ("asymptotic", &[alpha, beta, _]) => {
            Ok(SeedBankSpec::Asymptotic {
                a: 1.0,
                alpha,
                b: 1.0,
                beta,
                truncation: v.get(2).map_or(1_000_000_000_000, |t| *t as u64),
            })
        }
        _ => Err(Error::invalid("seedbank", format!("cannot read `{s}`"))),
    }
}

fn parse_slowvar(s: &str) -> Result<SlowlyVarying> {
    if s.trim_start().starts_with('{') {
        return serde_json::from_str(s).map_err(|e| Error::invalid("slowvar", e.to_string()));
    }
    match s.split_once(':') {
        Some(("const", c)) => Ok(SlowlyVarying::Constant {
            c: numbers("slowvar", c)?[0],
        }),
        Some(("log", p)) => Ok(SlowlyVarying::LogPower {
            p: numbers("slowvar", p)?[0],
        }),
        _ => Err(Error::invalid("slowvar", format!("cannot read `{s}`"))),
    }
}
