//! Wake-up time tails and the activity clock of one lineage.

use seedbank_lab::dual::{activity_asymptotics, sample_taus, tau_tail_fit};
use seedbank_lab::seedbank::{SeedBankSpec, WakeTimeLaw};

fn main() -> seedbank_lab::Result<()> {
    for (alpha, beta) in [(0.0, 2.0), (0.5, 1.0)] {
        let spec = SeedBankSpec::Asymptotic {
            a: 1.0,
            alpha,
            b: 1.0,
            beta,
            truncation: 1_000_000_000_000,
        };
        let law = WakeTimeLaw::new(spec.colours()?);
        let taus = sample_taus(&law, 1_000_000, 1);
        let fit = tau_tail_fit(&taus, spec.tail_constant_candidates())?;
        println!(
            "alpha={alpha} beta={beta}: gamma {:.4} ± {:.4} (expected {:.2}), constant {:.4}",
            fit.gamma,
            fit.gamma_se,
            spec.gamma().unwrap(),
            fit.constant
        );
    }
    for k in [0.5, 1.0, 2.0] {
        let law = WakeTimeLaw::new(SeedBankSpec::Single { k, e: 1.0 }.colours()?);
        let s = activity_asymptotics(&law, None, &[1e3], 20_000, 3)?;
        println!(
            "K = {k}: T(t)/t at t=1e3 is {:.4}, limit {:.4}",
            s.points[0].active_time.mean,
            s.active_fraction_limit.unwrap()
        );
    }
    Ok(())
}
