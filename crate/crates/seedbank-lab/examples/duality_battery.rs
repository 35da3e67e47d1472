//! Moment duality battery on an 8-site ring: forward mixed moments against
//! dual expectations, plus the generator identity on random probes.

use seedbank_lab::duality::{battery, generator_identity_battery, standard_specs, BatteryConfig};
use seedbank_lab::forward::ForwardModel;
use seedbank_lab::lattice::{Torus, WalkKernel};
use seedbank_lab::seedbank::SeedBankSpec;
use seedbank_lab::system::{Model, SeedBankSystem};

fn main() -> seedbank_lab::Result<()> {
    let replicas = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5000);
    let torus = Torus::new(1, 8)?;
    let sys = SeedBankSystem::from_spec(
        Model::Two,
        WalkKernel::simple_walk(&torus, 1.0)?,
        &SeedBankSpec::Explicit {
            k: vec![0.5, 2.0],
            e: vec![1.0, 0.3],
        },
        vec![],
    )?;
    let report = battery(
        &sys,
        &standard_specs(&sys)?,
        &BatteryConfig::new(1.0, replicas, 11),
    )?;
    for c in &report.cases {
        println!(
            "{:<28} t={:<4} forward {:.4} dual {:.4} gap {:+.2}",
            c.spec, c.t, c.forward.mean, c.dual.mean, c.gap
        );
    }
    println!("pass fraction {:.3}", report.pass_fraction);
    let id = generator_identity_battery(&ForwardModel::new(&sys)?, 1.0, 100, 3)?;
    println!(
        "generator identity: max residual {:.2e} over {} probes",
        id.max_residual, id.probes
    );
    Ok(())
}
