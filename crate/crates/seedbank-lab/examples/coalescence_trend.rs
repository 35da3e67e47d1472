//! Probability that two lineages started half a ring apart have met by a
//! horizon, in one dimension and on a small three-dimensional torus.

use seedbank_lab::dual::{coalescence_probability, DualDynamics};
use seedbank_lab::lattice::{Torus, WalkKernel};
use seedbank_lab::seedbank::SeedBankSpec;
use seedbank_lab::system::{EffSite, Model, SeedBankSystem};

fn main() -> seedbank_lab::Result<()> {
    for (d, l, horizons) in [
        (1, 64, vec![1e2, 1e3, 1e4]),
        (3, 8, vec![25.0, 50.0, 100.0]),
    ] {
        let torus = Torus::new(d, l)?;
        let sys = SeedBankSystem::from_spec(
            Model::One,
            WalkKernel::simple_walk(&torus, 1.0)?,
            &SeedBankSpec::Single { k: 1.0, e: 1.0 },
            vec![],
        )?;
        let far = torus.site(&vec![(l / 2) as i64; d]);
        let dynamics = DualDynamics::new(&sys, 1.0)?;
        let points = coalescence_probability(
            &dynamics,
            EffSite::active(0),
            EffSite::active(far),
            &horizons,
            2000,
            5,
        )?;
        for p in points {
            println!(
                "d={d} L={l} T={:<6} coalesced {:.4} ± {:.4} (censored {:.4})",
                p.horizon, p.probability.mean, p.probability.stderr, p.censored
            );
        }
    }
    Ok(())
}
