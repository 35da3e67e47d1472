//! Clustering versus coexistence across dimensions and wake-up exponents,
//! and the drifted-walk decay diagnostic.

use seedbank_lab::config::Geometry;
use seedbank_lab::dichotomy::{asymmetric_diagnostic, classify, AsymmetricOptions, DichotomyInput};
use seedbank_lab::lattice::{Torus, WalkKernel};
use seedbank_lab::quadrature::QuadratureOptions;
use seedbank_lab::seedbank::SeedBankSpec;
use seedbank_lab::stats::logspace;
use seedbank_lab::system::Model;

fn main() -> seedbank_lab::Result<()> {
    let opts = QuadratureOptions::default();
    let fat_tail = |gamma: f64| SeedBankSpec::Asymptotic {
        a: 1.0,
        alpha: 0.0,
        b: 1.0,
        beta: 1.0 / (1.0 - gamma),
        truncation: 1_000_000_000_000,
    };
    for d in 1..=3 {
        let g = Geometry::classify_default(d);
        let torus = Torus::new(d, g.l)?;
        let kernel = WalkKernel::simple_walk(&torus, 1.0)?;
        let mut line = format!("d = {d}:");
        let cases = [(
            Model::One,
            SeedBankSpec::Single { k: 1.0, e: 1.0 },
            "finite",
        )]
        .into_iter()
        .chain([0.3, 0.6, 0.7, 0.9].map(|gm| (Model::Two, fat_tail(gm), "")));
        for (model, seedbank, label) in cases {
            let gamma = seedbank.gamma();
            let v = classify(
                &DichotomyInput {
                    model,
                    kernel: kernel.clone(),
                    seedbank,
                    displacement: None,
                    slow: None,
                },
                &opts,
            )?;
            let tag = gamma.map_or(label.to_string(), |g| format!("γ={g:.1}"));
            line += &format!("  {tag} {:?}", v.verdict);
        }
        println!("{line}");
    }
    for gamma in [1.25, 1.5, 1.75] {
        let diag =
            asymmetric_diagnostic(&AsymmetricOptions::new(0.5, gamma), &logspace(1e8, 1e12, 9))?;
        println!(
            "drifted walk γ = {gamma}: decay exponent {:.4}, predicted {:.4}",
            diag.exponent, diag.predicted
        );
    }
    Ok(())
}
