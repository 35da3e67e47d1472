//! Dual lineage process: Monte Carlo moment against the exact solution
//! obtained by enumerating every lineage configuration.

use seedbank_lab::dual::{dual_moment, DualDynamics, DualOracle, DualState};
use seedbank_lab::lattice::{Torus, WalkKernel};
use seedbank_lab::seedbank::SeedBankSpec;
use seedbank_lab::system::{EffSite, Layer, Model, SeedBankSystem};

fn main() -> seedbank_lab::Result<()> {
    let torus = Torus::new(1, 4)?;
    let sys = SeedBankSystem::from_spec(
        Model::One,
        WalkKernel::simple_walk(&torus, 1.0)?,
        &SeedBankSpec::Single { k: 1.0, e: 0.5 },
        vec![],
    )?;
    let start = vec![
        EffSite::active(0),
        EffSite::active(0),
        EffSite::dormant(2, 0),
    ];
    let z = |u: EffSite| match u.layer {
        Layer::Active => 0.3 + 0.1 * u.site as f64,
        Layer::Dormant(_) => 0.7,
    };
    let times = [0.5, 2.0, 8.0];

    let dynamics = DualDynamics::new(&sys, 1.0)?;
    let mc = dual_moment(
        &dynamics,
        &DualState::new(start.clone()),
        &times,
        &z,
        50_000,
        7,
    );
    let oracle = DualOracle::build(&sys, 1.0, &start, DualOracle::DEFAULT_CAP)?;
    println!("{} lineage configurations reachable", oracle.states().len());
    for (k, &t) in times.iter().enumerate() {
        println!(
            "t = {t:>4}: E[prod z] MC {:.5} ± {:.5}, exact {:.5}, P(coalesced) {:.4}",
            mc[k].mean,
            mc[k].stderr,
            oracle.moment(t, &z),
            oracle.coalescence_probability(t)
        );
    }
    Ok(())
}
