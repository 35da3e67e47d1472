//! Forward SDE ensemble on a small ring with two dormant colours.
//!
//! Prints the preserved density, its per-replica drift and the mean
//! heterozygosity at a few times.

use seedbank_lab::forward::{
    simulate, DiffusionFunction, ForwardModel, ForwardRun, InitialCondition, Observable,
};
use seedbank_lab::lattice::{Torus, WalkKernel};
use seedbank_lab::seedbank::SeedBankSpec;
use seedbank_lab::system::{Model, SeedBankSystem};

fn main() -> seedbank_lab::Result<()> {
    let torus = Torus::new(1, 16)?;
    let sys = SeedBankSystem::from_spec(
        Model::Two,
        WalkKernel::simple_walk(&torus, 1.0)?,
        &SeedBankSpec::Explicit {
            k: vec![0.5, 2.0],
            e: vec![1.0, 0.2],
        },
        vec![],
    )?;
    let model = ForwardModel::new(&sys)?;
    let g = DiffusionFunction::fisher_wright(1.0);
    let run = ForwardRun {
        dt: model.default_dt(&g),
        g,
        output_times: vec![1.0, 5.0, 20.0],
        replicas: 2000,
        seed: 2024,
        initial: InitialCondition::Uniform,
    };
    let obs = [
        Observable::Theta,
        Observable::ThetaDrift,
        Observable::MeanHeterozygosity,
    ];
    let s = simulate(&model, &run, &obs)?;
    println!(
        "dt = {:.2e}, clamped updates {:.2e}",
        s.dt, s.clamp_fraction
    );
    for (k, t) in s.series.times.iter().enumerate() {
        let row: Vec<String> = s.series.values[k]
            .iter()
            .zip(&s.series.names)
            .map(|(e, n)| format!("{n} {:.4} ± {:.4}", e.mean, e.stderr))
            .collect();
        println!("t = {t:>5}: {}", row.join(", "));
    }
    Ok(())
}
