//! Forward mixed moments of degree two against the exact dual, whose
//! lineage chain is the closed linear system the second moments satisfy.

use seedbank_lab::duality::{battery_state, dual_moment_exact, MomentSpec};
use seedbank_lab::forward::{
    simulate, DiffusionFunction, ForwardModel, ForwardRun, InitialCondition, Observable,
};
use seedbank_lab::lattice::{Torus, WalkKernel};
use seedbank_lab::seedbank::SeedBankSpec;
use seedbank_lab::system::{EffSite, Model, SeedBankSystem};

#[test]
fn second_moments_follow_the_exact_dual() {
    let t = Torus::new(1, 4).unwrap();
    let sys = SeedBankSystem::from_spec(
        Model::Two,
        WalkKernel::simple_walk(&t, 1.0).unwrap(),
        &SeedBankSpec::Explicit {
            k: vec![1.0, 0.5],
            e: vec![0.7, 2.0],
        },
        vec![],
    )
    .unwrap();
    let model = ForwardModel::new(&sys).unwrap();
    let z = battery_state(&sys);
    let d = 1.5;
    let factors: Vec<Vec<(EffSite, u32)>> = vec![
        vec![(EffSite::active(0), 2)],
        vec![(EffSite::active(0), 1), (EffSite::active(1), 1)],
        vec![(EffSite::active(0), 1), (EffSite::dormant(0, 1), 1)],
        vec![(EffSite::dormant(2, 0), 2)],
    ];
    let specs: Vec<MomentSpec> = factors
        .iter()
        .map(|f| MomentSpec::new(f, 4).unwrap())
        .collect();
    let times = vec![0.3, 1.0, 3.0];
    let g = DiffusionFunction::fisher_wright(d);
    let run = ForwardRun {
        dt: 1e-3,
        g,
        output_times: times.clone(),
        replicas: 20_000,
        seed: 404,
        initial: InitialCondition::Explicit {
            x: z.x.clone(),
            y: z.y.clone(),
        },
    };
    let obs: Vec<Observable> = specs
        .iter()
        .map(|s| Observable::Moment(s.monomial().clone()))
        .collect();
    let fwd = simulate(&model, &run, &obs).unwrap();
    for (j, spec) in specs.iter().enumerate() {
        let exact = dual_moment_exact(&sys, d, spec, &z, &times).unwrap();
        for (k, e) in exact.iter().enumerate() {
            let est = fwd.series.values[k][j];
            let zscore = (est.mean - e) / est.stderr;
            assert!(
                zscore.abs() < 4.0,
                "{} t={}: forward {} ± {} exact {e}",
                spec.name(),
                times[k],
                est.mean,
                est.stderr
            );
        }
    }
}
